//! Empirical checks of the gradient and of the forward map.
//!
//! Each check returns a [`PropertyCheck`] with the measured quantities; a
//! solver error inside a check makes that check fail with the error text.

use dsw_core::integrator::{self, TimeGrid};
use dsw_core::inverse::InverseProblem;
use dsw_core::mesh::{l2_norm, space_time_inner, space_time_l2};
use dsw_core::{Error, GenAlphaConfig, Mesh1D, ModelParams, NodalField, SpaceTimeField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::experiments::{generate_data, ExperimentSpec};

/// Newton tolerance used by the checks so that solver error stays far below
/// the finite-difference quotients.
pub const CHECK_NEWTON_TOL: f64 = 1e-10;
pub const FD_EPS: f64 = 1e-4;
pub const FD_TOL: f64 = 5e-2;
pub const DUALITY_TOL: f64 = 1e-2;
pub const FRECHET_STEPS: [f64; 3] = [1e-1, 1e-2, 1e-3];
pub const SPREAD_TOL: f64 = 10.0;
pub const SAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl PropertyCheck {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    fn error(name: impl Into<String>, e: Error) -> Self {
        Self::new(name, false, format!("solver error: {e}"))
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

/// `1 + amp Σ_{k=1}^{3} a_k cos(kπ(x - left)/L) / k` with `a_k ~ U(-1, 1)`.
pub fn smooth_field(mesh: &Mesh1D, rng: &mut impl Rng, base: f64, amp: f64) -> NodalField {
    let a: [f64; 3] = [
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    ];
    let (left, len) = (mesh.left(), mesh.length());
    mesh.interpolate(|x| {
        let s: f64 = a
            .iter()
            .enumerate()
            .map(|(i, ak)| {
                let k = (i + 1) as f64;
                ak * (k * std::f64::consts::PI * (x - left) / len).cos() / k
            })
            .sum();
        base + amp * s
    })
}

/// Discretization and data of one check.
#[derive(Debug, Clone)]
pub struct CheckSetup {
    pub mesh: Mesh1D,
    pub grid: TimeGrid,
    pub params: ModelParams,
    pub u0: NodalField,
    pub data: SpaceTimeField,
    pub integrator: GenAlphaConfig,
}

impl CheckSetup {
    /// Noise-free data of `spec`, solved with the tight check tolerance.
    pub fn new(spec: &ExperimentSpec) -> Result<Self, Error> {
        let mut spec = spec.clone();
        spec.integrator.newton_tol = spec.integrator.newton_tol.min(CHECK_NEWTON_TOL);
        spec.noise = 0.0;
        let mesh = spec.mesh()?;
        let data = generate_data(&spec)?.data;
        Ok(Self {
            grid: spec.grid()?,
            params: spec.model_params(&mesh),
            u0: spec.initial_state(&mesh),
            mesh,
            data,
            integrator: spec.integrator,
        })
    }

    pub fn problem(&self) -> InverseProblem<'_> {
        InverseProblem {
            mesh: &self.mesh,
            grid: &self.grid,
            params: &self.params,
            initial_state: &self.u0,
            data: &self.data,
            integrator: self.integrator,
        }
    }

    pub fn forward(&self, d_f: &[f64]) -> Result<SpaceTimeField, Error> {
        integrator::solve_forward(&self.mesh, &self.grid, &self.params, d_f, &self.u0, &self.integrator)
    }

    pub fn st_norm(&self, f: &SpaceTimeField) -> f64 {
        space_time_l2(&self.mesh, self.grid.dt(), f)
    }
}

/// Adjoint directional derivatives against central differences of `J`,
/// one entry per direction.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientComparison {
    /// `⟨J'(d_f), d⟩` from the adjoint.
    pub adjoint: Vec<f64>,
    /// `(J(d_f + εd) - J(d_f - εd)) / 2ε`.
    pub finite_difference: Vec<f64>,
    /// `⟨u - g, u'(d_f) d⟩` from the sensitivity problem.
    pub sensitivity: Vec<f64>,
}

/// `‖a - b‖ / ‖b‖` over all directions.
fn mismatch(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let norm: f64 = b.iter().map(|y| y * y).sum();
    (diff / norm).sqrt()
}

fn list(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.6e}")).collect::<Vec<_>>().join(", ")
}

impl GradientComparison {
    pub fn fd_error(&self) -> f64 {
        mismatch(&self.adjoint, &self.finite_difference)
    }

    pub fn duality_error(&self) -> f64 {
        mismatch(&self.adjoint, &self.sensitivity)
    }
}

/// Directions per gradient comparison. A single direction can land where
/// the discretization errors of the two derivatives cancel.
pub const GRADIENT_DIRECTIONS: usize = 4;

/// Compares the three forms of the directional derivative of `J` (δ = 0) at
/// `d_f ≡ 1` along [`GRADIENT_DIRECTIONS`] random smooth directions.
pub fn compare_gradient(setup: &CheckSetup, seed: u64) -> Result<GradientComparison, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d_f = NodalField::constant(setup.mesh.node_count(), 1.0);
    let problem = setup.problem();
    let objective = problem.evaluate_objective(&d_f, 0.0)?;
    let gradient = problem.compute_raw_gradient(&d_f, &objective, 0.0)?;
    let tangent = problem.tangent(&d_f, &objective.trajectory)?;
    let shifted = |direction: &NodalField, s: f64| {
        let mut d = d_f.clone();
        d.axpy(s, direction);
        problem.evaluate_objective(&d, 0.0).map(|o| o.value)
    };
    let mut out = GradientComparison {
        adjoint: Vec::new(),
        finite_difference: Vec::new(),
        sensitivity: Vec::new(),
    };
    for _ in 0..GRADIENT_DIRECTIONS {
        let direction = smooth_field(&setup.mesh, &mut rng, 0.0, 1.0);
        out.adjoint.push(gradient.raw.dot(&direction));
        let v = problem.sensitivity(&tangent, &direction)?;
        out.sensitivity
            .push(space_time_inner(&setup.mesh, setup.grid.dt(), &objective.residual, &v));
        out.finite_difference
            .push((shifted(&direction, FD_EPS)? - shifted(&direction, -FD_EPS)?) / (2.0 * FD_EPS));
    }
    Ok(out)
}

/// Finite-difference check on `spec` and on the mesh and step halved, plus
/// the duality identity on `spec`.
pub fn gradient_suite(spec: &ExperimentSpec) -> Vec<PropertyCheck> {
    let mut fine = spec.clone();
    fine.h = spec.h / 2.0;
    fine.dt = spec.dt / 2.0;
    let coarse = CheckSetup::new(spec).and_then(|s| compare_gradient(&s, spec.seed));
    let refined = CheckSetup::new(&fine).and_then(|s| compare_gradient(&s, spec.seed));
    let mut checks = Vec::new();
    match &coarse {
        Ok(c) => {
            checks.push(PropertyCheck::new(
                "fd_gradient",
                c.fd_error() <= FD_TOL,
                format!(
                    "h={} dt={}: adjoint [{}] vs fd [{}], relative error {:.3e} (limit {FD_TOL:e})",
                    spec.h,
                    spec.dt,
                    list(&c.adjoint),
                    list(&c.finite_difference),
                    c.fd_error()
                ),
            ));
            checks.push(PropertyCheck::new(
                "duality",
                c.duality_error() <= DUALITY_TOL,
                format!(
                    "adjoint [{}] vs sensitivity [{}], relative mismatch {:.3e} (limit {DUALITY_TOL:e})",
                    list(&c.adjoint),
                    list(&c.sensitivity),
                    c.duality_error()
                ),
            ));
        }
        Err(e) => {
            checks.push(PropertyCheck::error("fd_gradient", e.clone()));
            checks.push(PropertyCheck::error("duality", e.clone()));
        }
    }
    checks.push(match (&coarse, &refined) {
        (Ok(c), Ok(f)) => PropertyCheck::new(
            "fd_gradient_refinement",
            f.fd_error() < c.fd_error(),
            format!(
                "relative error {:.3e} at h={} dt={} vs {:.3e} at h={} dt={}",
                f.fd_error(),
                fine.h,
                fine.dt,
                c.fd_error(),
                spec.h,
                spec.dt
            ),
        ),
        (_, Err(e)) | (Err(e), _) => PropertyCheck::error("fd_gradient_refinement", e.clone()),
    });
    checks
}

/// `‖u(d_f + t d) - u(d_f) - t u'(d_f) d‖ / t` for each `t` in `steps`.
pub fn frechet_remainders(
    setup: &CheckSetup,
    d_f: &[f64],
    direction: &[f64],
    steps: &[f64],
) -> Result<Vec<f64>, Error> {
    let base = setup.forward(d_f)?;
    let problem = setup.problem();
    let v = problem.sensitivity(&problem.tangent(d_f, &base)?, direction)?;
    steps
        .iter()
        .map(|&t| {
            let mut d = NodalField::from(d_f.to_vec());
            d.axpy(t, direction);
            let mut rem = setup.forward(&d)?.difference(&base);
            for (r, vl) in rem.levels_mut().iter_mut().zip(v.levels()) {
                r.axpy(-t, vl);
            }
            Ok(setup.st_norm(&rem) / t)
        })
        .collect()
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

fn fmt_list(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")
}

/// Fréchet remainder decay, Lipschitz quotients of the forward map, norms of
/// the linearized map and the zero-direction identity.
pub fn map_suite(spec: &ExperimentSpec) -> Vec<PropertyCheck> {
    let setup = match CheckSetup::new(spec) {
        Ok(s) => s,
        Err(e) => return vec![PropertyCheck::error("setup", e)],
    };
    let mesh = &setup.mesh;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut checks = Vec::new();

    let d_f = smooth_field(mesh, &mut rng, 1.5, 0.4);
    for i in 0..3 {
        let name = format!("frechet_decay_{}", i + 1);
        let dir = smooth_field(mesh, &mut rng, 0.0, 0.5);
        checks.push(match frechet_remainders(&setup, &d_f, &dir, &FRECHET_STEPS) {
            Ok(r) => PropertyCheck::new(
                name,
                r.windows(2).all(|w| w[1] < w[0]),
                format!("remainder/t at t = {}: {}", fmt_list(&FRECHET_STEPS), fmt_list(&r)),
            ),
            Err(e) => PropertyCheck::error(name, e),
        });
    }

    let lipschitz: Result<Vec<f64>, Error> = (0..SAMPLES)
        .map(|_| {
            let a = smooth_field(mesh, &mut rng, 1.5, 0.8);
            let b = smooth_field(mesh, &mut rng, 1.5, 0.8);
            let mut diff = a.clone();
            diff.axpy(-1.0, &b);
            let du = setup.forward(&a)?.difference(&setup.forward(&b)?);
            Ok(setup.st_norm(&du) / l2_norm(mesh, &diff))
        })
        .collect();
    checks.push(match lipschitz {
        Ok(q) => PropertyCheck::new(
            "lipschitz",
            spread(&q) <= SPREAD_TOL,
            format!(
                "quotients {}; max/min {:.3} (limit {SPREAD_TOL})",
                fmt_list(&q),
                spread(&q)
            ),
        ),
        Err(e) => PropertyCheck::error("lipschitz", e),
    });

    let bounded: Result<Vec<f64>, Error> = (0..SAMPLES)
        .map(|_| {
            let d = smooth_field(mesh, &mut rng, 1.5, 0.8);
            let dir = smooth_field(mesh, &mut rng, 0.0, 1.0);
            let traj = setup.forward(&d)?;
            let problem = setup.problem();
            let v = problem.sensitivity(&problem.tangent(&d, &traj)?, &dir)?;
            Ok(setup.st_norm(&v) / l2_norm(mesh, &dir))
        })
        .collect();
    checks.push(match bounded {
        Ok(q) => PropertyCheck::new(
            "bounded_linearization",
            spread(&q) <= SPREAD_TOL,
            format!(
                "‖u'd‖/‖d‖ {}; max/min {:.3} (limit {SPREAD_TOL})",
                fmt_list(&q),
                spread(&q)
            ),
        ),
        Err(e) => PropertyCheck::error("bounded_linearization", e),
    });

    let zero = NodalField::zeros(mesh.node_count());
    checks.push(match frechet_remainders(&setup, &d_f, &zero, &[1.0]) {
        Ok(r) => PropertyCheck::new("zero_direction", r[0] == 0.0, format!("remainder {:e}", r[0])),
        Err(e) => PropertyCheck::error("zero_direction", e),
    });
    checks
}
