//! Forward solver against an independent backward-Euler discretization and
//! its conservation properties.

use dsw_core::integrator::{solve_forward, solve_forward_detailed};
use dsw_core::mesh::{assemble_mass, space_time_l2};
use dsw_core::problems::{exact_coefficient, initial_condition, DEFAULT_DT, FINAL_TIME};
use dsw_core::{ExampleId, GenAlphaConfig, Mesh1D, ModelParams, NodalField, SpaceTimeField, TimeGrid};

mod common;
use common::backward_euler::backward_euler;

struct Setup {
    mesh: Mesh1D,
    params: ModelParams,
    d_f: NodalField,
    u0: NodalField,
}

fn setup() -> Setup {
    let mesh = Mesh1D::new(-2.0, 2.0, 0.25).unwrap();
    Setup {
        params: ModelParams::manning(&mesh),
        d_f: mesh.interpolate(|x| exact_coefficient(ExampleId::Cont, x)),
        u0: mesh.interpolate(initial_condition),
        mesh,
    }
}

impl Setup {
    fn gen_alpha(&self, dt: f64) -> SpaceTimeField {
        let grid = TimeGrid::new(0.0, FINAL_TIME, dt).unwrap();
        solve_forward(
            &self.mesh,
            &grid,
            &self.params,
            &self.d_f,
            &self.u0,
            &GenAlphaConfig::default(),
        )
        .unwrap()
    }

    /// Backward Euler with `fine_dt`, sampled every `dt`.
    fn oracle(&self, fine_dt: f64, dt: f64) -> SpaceTimeField {
        let levels = backward_euler(self.mesh.coords(), &self.d_f, &self.u0, FINAL_TIME, fine_dt, dt);
        SpaceTimeField::new(levels.into_iter().map(NodalField::from).collect())
    }

    fn relative(&self, dt: f64, a: &SpaceTimeField, b: &SpaceTimeField) -> f64 {
        space_time_l2(&self.mesh, dt, &a.difference(b)) / space_time_l2(&self.mesh, dt, b)
    }
}

#[test]
fn agrees_with_backward_euler() {
    let s = setup();
    let gap = |dt: f64| s.relative(dt, &s.gen_alpha(dt), &s.oracle(dt / 100.0, dt));
    let (coarse, fine) = (gap(DEFAULT_DT), gap(DEFAULT_DT / 2.0));
    println!("gap {coarse:.3e} at dt, {fine:.3e} at dt/2, ratio {:.2}", coarse / fine);
    assert!(coarse <= 1e-3, "gap {coarse:e}");
    assert!(fine < coarse);
}

/// Against the extrapolation `2 u(dt/400) - u(dt/200)` of the oracle, which
/// removes its first-order error, the observed order approaches two.
#[test]
fn second_order_against_extrapolated_oracle() {
    let s = setup();
    let dt = DEFAULT_DT;
    let a = s.oracle(dt / 400.0, dt);
    let b = s.oracle(dt / 200.0, dt);
    let reference = SpaceTimeField::new(
        a.levels()
            .iter()
            .zip(b.levels())
            .map(|(x, y)| {
                let mut r = x.scaled(2.0);
                r.axpy(-1.0, y);
                r
            })
            .collect(),
    );
    let error = |k: usize| {
        let traj = s.gen_alpha(dt / k as f64);
        let sampled = SpaceTimeField::new(traj.levels().iter().step_by(k).cloned().collect());
        s.relative(dt, &sampled, &reference)
    };
    let e: Vec<f64> = [1, 2, 4].into_iter().map(error).collect();
    println!(
        "errors {:.3e} {:.3e} {:.3e}, ratios {:.2} {:.2}",
        e[0],
        e[1],
        e[2],
        e[0] / e[1],
        e[1] / e[2]
    );
    assert!(e[0] / e[1] > 3.0);
    assert!(e[1] / e[2] >= 3.5);
}

#[test]
fn mass_is_conserved_without_sources() {
    for id in ExampleId::ALL {
        for dt in [DEFAULT_DT, DEFAULT_DT / 2.0, 4.0 * DEFAULT_DT] {
            let mesh = Mesh1D::new(-2.0, 2.0, id.default_h()).unwrap();
            let grid = TimeGrid::new(0.0, FINAL_TIME, dt).unwrap();
            let params = ModelParams::manning(&mesh);
            let d_f = mesh.interpolate(|x| exact_coefficient(id, x));
            let u0 = mesh.interpolate(initial_condition);
            let traj = solve_forward(&mesh, &grid, &params, &d_f, &u0, &GenAlphaConfig::default()).unwrap();
            let mass = assemble_mass(&mesh);
            let ones = NodalField::constant(mesh.node_count(), 1.0);
            let total = |u: &[f64]| mass.form(&ones, u);
            let m0 = total(&u0);
            for (n, u) in traj.levels().iter().enumerate() {
                let drift = (total(u) - m0).abs();
                assert!(drift <= 1e-8 * m0.abs(), "{id} dt={dt} level {n}: drift {drift:e}");
            }
        }
    }
}

#[test]
fn large_step_stays_wet_and_finite() {
    let mesh = Mesh1D::new(-2.0, 2.0, 0.25).unwrap();
    let grid = TimeGrid::new(0.0, FINAL_TIME, 4.0 * DEFAULT_DT).unwrap();
    let params = ModelParams::manning(&mesh);
    let d_f = mesh.interpolate(|x| exact_coefficient(ExampleId::Discont, x));
    let u0 = mesh.interpolate(initial_condition);
    let sol = solve_forward_detailed(&mesh, &grid, &params, &d_f, &u0, &GenAlphaConfig::default()).unwrap();
    assert_eq!(sol.trajectory.level_count(), grid.level_count());
    for u in sol.trajectory.levels() {
        assert!(u.iter().all(|v| v.is_finite() && *v > 0.0));
    }
    assert!(sol.max_newton_iterations() <= GenAlphaConfig::default().max_iter);
}

#[test]
fn constant_state_is_steady() {
    let mesh = Mesh1D::new(-2.0, 2.0, 0.25).unwrap();
    let grid = TimeGrid::new(0.0, FINAL_TIME, DEFAULT_DT).unwrap();
    let params = ModelParams::manning(&mesh);
    let d_f = mesh.interpolate(|x| exact_coefficient(ExampleId::Cont, x));
    let u0 = NodalField::constant(mesh.node_count(), 1.3);
    let traj = solve_forward(&mesh, &grid, &params, &d_f, &u0, &GenAlphaConfig::default()).unwrap();
    for u in traj.levels() {
        assert_eq!(u, &u0);
    }
}
