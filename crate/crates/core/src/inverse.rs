//! Conjugate-gradient recovery of the roughness coefficient `d_f`.
//!
//! Minimizes
//!
//! ```text
//! J(d_f) = ½ ∫₀ᵀ ‖u(d_f) - g‖²_{L²(Ω)} dt + (δ/2) ‖∇d_f‖²_{L²(Ω)}
//! ```
//!
//! Each iteration performs one nonlinear forward solve, one adjoint solve
//! (gradient) and one sensitivity solve (step size). The gradient is mapped to
//! H¹ by a Helmholtz solve before it is used as a search direction, the
//! conjugate coefficient follows Fletcher–Reeves and the step length comes
//! from minimizing the objective with the forward map linearized at the
//! current iterate.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::integrator::{self, GenAlphaConfig, TimeGrid};
use crate::mesh::{
    assemble_laplacian, h1_semi_inner, helmholtz_smooth, l2_inner, l2_norm, space_time_inner, trapezoid_weights,
    Mesh1D, NodalField, SpaceTimeField,
};
use crate::model::{self, LinearizedOperator, ModelParams};

/// Settings of the outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct InversionConfig {
    /// Tikhonov weight `δ ≥ 0` on `‖∇d_f‖²`.
    pub delta: f64,
    /// Iteration stops once the step length falls below this value.
    pub step_stop: f64,
    pub max_cg_iters: usize,
    pub initial_guess: NodalField,
    /// Iterates are clamped from below to keep `d_f` positive.
    pub positivity_floor: f64,
}

impl InversionConfig {
    /// Constant initial guess `d_f ≡ 1`, step threshold `1e-3`.
    pub fn new(mesh: &Mesh1D, delta: f64) -> Self {
        Self {
            delta,
            step_stop: 1e-3,
            max_cg_iters: 200,
            initial_guess: NodalField::constant(mesh.node_count(), 1.0),
            positivity_floor: 1e-3,
        }
    }

    pub fn validate(&self, mesh: &Mesh1D) -> Result<()> {
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidParameter {
                name: "delta",
                value: self.delta,
                reason: "must be non-negative",
            });
        }
        if !(self.step_stop > 0.0) {
            return Err(Error::InvalidParameter {
                name: "step_stop",
                value: self.step_stop,
                reason: "must be positive",
            });
        }
        if !(self.positivity_floor > 0.0) {
            return Err(Error::InvalidParameter {
                name: "positivity_floor",
                value: self.positivity_floor,
                reason: "must be positive",
            });
        }
        mesh.check_field(&self.initial_guess)
    }
}

/// Why [`InverseProblem::run_cg`] stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    /// The step length fell below `step_stop`.
    StepBelowThreshold {
        step: f64,
    },
    MaxIterations,
    /// Neither the conjugate nor the steepest-descent step reduced `J`.
    NoDescent,
    /// The smoothed gradient vanished.
    ZeroGradient,
    /// The sensitivity of the search direction vanished.
    NullDirection,
    /// A forward, adjoint or sensitivity solve failed.
    SolverFailure(Error),
}

/// State of one outer iteration, recorded before the update.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `J(d_f^k)`
    pub objective: f64,
    /// Relative L² error against the reference coefficient, if one was given.
    pub error: Option<f64>,
    /// L² norm of the smoothed gradient.
    pub grad_norm: f64,
    /// Fletcher–Reeves coefficient actually used (0 after a restart).
    pub beta: Option<f64>,
    /// Accepted step length.
    pub step: Option<f64>,
    /// Nodes raised to the positivity floor by the update.
    pub clamped_nodes: usize,
}

/// History and result of an inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct InversionReport {
    pub records: Vec<IterationRecord>,
    pub coefficient: NodalField,
    /// `J` at the returned coefficient.
    pub final_objective: f64,
    /// Relative error of the returned coefficient, if a reference was given.
    pub final_error: Option<f64>,
    pub termination: Termination,
}

impl InversionReport {
    /// Number of accepted updates.
    pub fn accepted_steps(&self) -> usize {
        self.records.iter().filter(|r| r.step.is_some()).count()
    }
}

/// Objective value together with the forward quantities it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub value: f64,
    pub misfit: f64,
    pub penalty: f64,
    pub trajectory: SpaceTimeField,
    /// `u(d_f) - g` on every level.
    pub residual: SpaceTimeField,
}

/// Raw (dual) gradient with the adjoint state and the level-wise
/// linearization it used.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub raw: NodalField,
    pub adjoint: SpaceTimeField,
    pub linearization: LinearizedOperator,
}

/// Derivative of the discrete forward map at one coefficient: the operator
/// taken at the [`integrator::linearization_points`] of the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub points: SpaceTimeField,
    pub operator: LinearizedOperator,
}

/// `e = ‖d_f - d_f†‖ / ‖d_f†‖` in the discrete L²(Ω) norm.
pub fn relative_error(mesh: &Mesh1D, d_f: &[f64], reference: &[f64]) -> Result<f64> {
    mesh.check_field(d_f)?;
    mesh.check_field(reference)?;
    let denom = l2_norm(mesh, reference);
    if !(denom > 0.0) {
        return Err(Error::ZeroNormReference);
    }
    let diff: Vec<f64> = d_f.iter().zip(reference).map(|(a, b)| a - b).collect();
    Ok(l2_norm(mesh, &diff) / denom)
}

/// `‖g_k‖² / ‖g_{k-1}‖²` in L²(Ω); zero without a previous gradient.
pub fn fletcher_reeves_beta(mesh: &Mesh1D, grad: &[f64], previous: Option<&[f64]>) -> f64 {
    match previous {
        None => 0.0,
        Some(prev) => {
            let den = l2_inner(mesh, prev, prev);
            if den > 0.0 {
                l2_inner(mesh, grad, grad) / den
            } else {
                0.0
            }
        }
    }
}

/// H¹-consistent gradient from the raw dual gradient.
pub fn smooth_gradient(mesh: &Mesh1D, raw: &[f64]) -> Result<NodalField> {
    helmholtz_smooth(mesh, raw)
}

/// Step length from the linearized objective along `-direction`:
///
/// ```text
/// θ = (⟨r, v⟩ + δ (∇d_f, ∇d)) / (‖v‖² + δ ‖∇d‖²)
/// ```
///
/// with `v = u'(d_f) d` and space-time pairings integrated by the trapezoid
/// rule in time.
#[allow(clippy::too_many_arguments)]
pub fn step_size(
    mesh: &Mesh1D,
    grid: &TimeGrid,
    residual: &SpaceTimeField,
    sensitivity: &SpaceTimeField,
    d_f: &[f64],
    direction: &[f64],
    delta: f64,
) -> Result<f64> {
    let dt = grid.dt();
    let num = space_time_inner(mesh, dt, residual, sensitivity) + delta * h1_semi_inner(mesh, d_f, direction);
    let den = space_time_inner(mesh, dt, sensitivity, sensitivity) + delta * h1_semi_inner(mesh, direction, direction);
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::NullDirection);
    }
    Ok(num / den)
}

/// Everything fixed during an inversion: discretization, physics, data.
#[derive(Debug, Clone)]
pub struct InverseProblem<'a> {
    pub mesh: &'a Mesh1D,
    pub grid: &'a TimeGrid,
    pub params: &'a ModelParams,
    pub initial_state: &'a NodalField,
    pub data: &'a SpaceTimeField,
    pub integrator: GenAlphaConfig,
}

enum Attempt {
    Accepted {
        step: f64,
        coefficient: NodalField,
        objective: Objective,
        clamped: usize,
    },
    Rejected(Termination),
}

impl<'a> InverseProblem<'a> {
    pub fn forward(&self, d_f: &[f64]) -> Result<SpaceTimeField> {
        integrator::solve_forward(
            self.mesh,
            self.grid,
            self.params,
            d_f,
            self.initial_state,
            &self.integrator,
        )
    }

    /// Runs the forward problem and evaluates `J`.
    pub fn evaluate_objective(&self, d_f: &[f64], delta: f64) -> Result<Objective> {
        let trajectory = self.forward(d_f)?;
        if self.data.level_count() != trajectory.level_count() {
            return Err(Error::LengthMismatch {
                expected: trajectory.level_count(),
                found: self.data.level_count(),
            });
        }
        let residual = trajectory.difference(self.data);
        let misfit = 0.5 * space_time_inner(self.mesh, self.grid.dt(), &residual, &residual);
        let penalty = 0.5 * delta * h1_semi_inner(self.mesh, d_f, d_f);
        Ok(Objective {
            value: misfit + penalty,
            misfit,
            penalty,
            trajectory,
            residual,
        })
    }

    /// Adjoint-based dual gradient
    /// `J'(d_f)_i = -∫₀ᵀ ((u-z)^α/|∇u|^(1-γ) ∇p·∇u, φ_i) dt + δ (∇d_f, ∇φ_i)`.
    pub fn compute_raw_gradient(&self, d_f: &[f64], objective: &Objective, delta: f64) -> Result<Gradient> {
        let linearization = model::linearize_trajectory(self.mesh, self.params, d_f, &objective.trajectory)?;
        let loads = model::adjoint_rhs(self.mesh, &objective.residual);
        let adjoint = integrator::solve_linear_backward(&linearization, &loads, self.grid, &self.integrator)?;
        let weights = trapezoid_weights(self.grid.level_count(), self.grid.dt());
        let mut raw = assemble_laplacian(self.mesh).mul_vec(d_f).scaled(delta);
        for ((w, u), p) in weights.iter().zip(objective.trajectory.levels()).zip(adjoint.levels()) {
            if p.iter().all(|v| *v == 0.0) {
                continue;
            }
            let density = model::coefficient_sensitivity(self.mesh, self.params, u, p)?;
            raw.axpy(*w, &density);
        }
        Ok(Gradient {
            raw,
            adjoint,
            linearization,
        })
    }

    /// `trajectory` is the forward solution at `d_f`.
    pub fn tangent(&self, d_f: &[f64], trajectory: &SpaceTimeField) -> Result<Tangent> {
        let points = integrator::linearization_points(trajectory, &self.integrator);
        let operator = model::linearize_trajectory(self.mesh, self.params, d_f, &points)?;
        Ok(Tangent { points, operator })
    }

    /// Directional derivative `u'(d_f) d` of the forward map.
    pub fn sensitivity(&self, tangent: &Tangent, direction: &[f64]) -> Result<SpaceTimeField> {
        let loads = model::sensitivity_rhs(self.mesh, self.params, &tangent.points, direction)?;
        integrator::solve_linear_forward(&tangent.operator, &loads, self.grid, &self.integrator)
    }

    fn clamp(&self, mut coefficient: NodalField, floor: f64) -> (NodalField, usize) {
        let mut clamped = 0;
        for v in coefficient.iter_mut() {
            if !(*v >= floor) {
                *v = floor;
                clamped += 1;
            }
        }
        (coefficient, clamped)
    }

    #[allow(clippy::too_many_arguments)]
    fn attempt(
        &self,
        config: &InversionConfig,
        d_f: &NodalField,
        current: &Objective,
        tangent: &Tangent,
        direction: &NodalField,
    ) -> Attempt {
        let v = match self.sensitivity(tangent, direction) {
            Ok(v) => v,
            Err(e) => return Attempt::Rejected(Termination::SolverFailure(e)),
        };
        let step = match step_size(
            self.mesh,
            self.grid,
            &current.residual,
            &v,
            d_f,
            direction,
            config.delta,
        ) {
            Ok(s) => s,
            Err(_) => return Attempt::Rejected(Termination::NullDirection),
        };
        if !(step >= config.step_stop) {
            return Attempt::Rejected(Termination::StepBelowThreshold { step });
        }
        let mut trial = d_f.clone();
        trial.axpy(-step, direction);
        let (trial, clamped) = self.clamp(trial, config.positivity_floor);
        match self.evaluate_objective(&trial, config.delta) {
            Ok(obj) if obj.value <= current.value => Attempt::Accepted {
                step,
                coefficient: trial,
                objective: obj,
                clamped,
            },
            Ok(_) => Attempt::Rejected(Termination::NoDescent),
            Err(e) => Attempt::Rejected(Termination::SolverFailure(e)),
        }
    }

    /// Conjugate-gradient iteration with Fletcher–Reeves directions.
    ///
    /// A step that does not reduce `J` (or a conjugate step below threshold)
    /// is retried once along the steepest-descent direction before the
    /// iteration stops. When `reference` is given the relative error of every
    /// iterate is recorded.
    pub fn run_cg(&self, config: &InversionConfig, reference: Option<&[f64]>) -> InversionReport {
        let mesh = self.mesh;
        let error_of = |d: &[f64]| reference.and_then(|r| relative_error(mesh, d, r).ok());
        let (mut d_f, _) = self.clamp(config.initial_guess.clone(), config.positivity_floor);
        let mut records = Vec::new();

        let fail = |d_f: NodalField, records: Vec<IterationRecord>, value: f64, e: Error| InversionReport {
            final_error: error_of(&d_f),
            coefficient: d_f,
            records,
            final_objective: value,
            termination: Termination::SolverFailure(e),
        };
        if let Err(e) = config.validate(mesh) {
            return fail(d_f, records, f64::NAN, e);
        }
        let mut current = match self.evaluate_objective(&d_f, config.delta) {
            Ok(obj) => obj,
            Err(e) => return fail(d_f, records, f64::NAN, e),
        };

        let mut previous: Option<(NodalField, NodalField)> = None; // (gradient, direction)
        let mut termination = Termination::MaxIterations;
        for k in 0..config.max_cg_iters {
            let linear = self.compute_raw_gradient(&d_f, &current, config.delta).and_then(|g| {
                let smoothed = smooth_gradient(mesh, &g.raw)?;
                Ok((smoothed, self.tangent(&d_f, &current.trajectory)?))
            });
            let (smoothed, tangent) = match linear {
                Ok(g) => g,
                Err(e) => {
                    termination = Termination::SolverFailure(e);
                    break;
                }
            };
            let grad_norm = l2_norm(mesh, &smoothed);
            let mut record = IterationRecord {
                iteration: k,
                objective: current.value,
                error: error_of(&d_f),
                grad_norm,
                beta: None,
                step: None,
                clamped_nodes: 0,
            };
            if !(grad_norm > 0.0) {
                records.push(record);
                termination = Termination::ZeroGradient;
                break;
            }

            let beta = fletcher_reeves_beta(mesh, &smoothed, previous.as_ref().map(|(g, _)| &g[..]));
            let conjugate = match &previous {
                Some((_, dir)) if beta > 0.0 => {
                    let mut d = smoothed.clone();
                    d.axpy(beta, dir);
                    Some(d)
                }
                _ => None,
            };
            let mut outcome = None;
            if let Some(dir) = conjugate {
                // a rejected conjugate step falls back to steepest descent
                if let a @ Attempt::Accepted { .. } = self.attempt(config, &d_f, &current, &tangent, &dir) {
                    outcome = Some((a, beta, dir));
                }
            }
            let (attempt, beta_used, direction) = match outcome {
                Some(o) => o,
                None => {
                    let a = self.attempt(config, &d_f, &current, &tangent, &smoothed);
                    (a, 0.0, smoothed.clone())
                }
            };
            record.beta = Some(beta_used);
            match attempt {
                Attempt::Accepted {
                    step,
                    coefficient,
                    objective,
                    clamped,
                } => {
                    record.step = Some(step);
                    record.clamped_nodes = clamped;
                    records.push(record);
                    d_f = coefficient;
                    current = objective;
                    previous = Some((smoothed, direction));
                }
                Attempt::Rejected(reason) => {
                    records.push(record);
                    termination = reason;
                    break;
                }
            }
        }

        InversionReport {
            final_error: error_of(&d_f),
            coefficient: d_f,
            records,
            final_objective: current.value,
            termination,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{exact_coefficient, initial_condition, ExampleId};
    use approx::assert_abs_diff_eq;

    struct Setup {
        mesh: Mesh1D,
        grid: TimeGrid,
        params: ModelParams,
        u0: NodalField,
        truth: NodalField,
        data: SpaceTimeField,
    }

    fn setup() -> Setup {
        let mesh = Mesh1D::new(-2.0, 2.0, 0.25).unwrap();
        let grid = TimeGrid::new(0.0, 0.5, 1.0 / 40.0).unwrap();
        let params = ModelParams::manning(&mesh);
        let u0 = mesh.interpolate(initial_condition);
        let truth = mesh.interpolate(|x| exact_coefficient(ExampleId::Cont, x));
        let data = integrator::solve_forward(&mesh, &grid, &params, &truth, &u0, &GenAlphaConfig::default()).unwrap();
        Setup {
            mesh,
            grid,
            params,
            u0,
            truth,
            data,
        }
    }

    impl Setup {
        fn problem(&self) -> InverseProblem<'_> {
            InverseProblem {
                mesh: &self.mesh,
                grid: &self.grid,
                params: &self.params,
                initial_state: &self.u0,
                data: &self.data,
                integrator: GenAlphaConfig::default(),
            }
        }
    }

    #[test]
    fn objective_vanishes_at_truth() {
        let s = setup();
        let prob = s.problem();
        let obj = prob.evaluate_objective(&s.truth, 0.0).unwrap();
        assert_eq!(obj.value, 0.0);
        let ones = NodalField::constant(s.mesh.node_count(), 1.0);
        let obj1 = prob.evaluate_objective(&ones, 0.3).unwrap();
        assert_eq!(obj1.penalty, 0.0);
        assert!(obj1.value > 0.0);
    }

    #[test]
    fn gradient_identities() {
        let s = setup();
        let prob = s.problem();
        let obj = prob.evaluate_objective(&s.truth, 0.0).unwrap();
        let g = prob.compute_raw_gradient(&s.truth, &obj, 0.0).unwrap();
        assert!(g.raw.iter().all(|v| *v == 0.0));
        // residual is zero at the truth, so only the penalty part remains
        let delta = 0.01;
        let g = prob.compute_raw_gradient(&s.truth, &obj, delta).unwrap();
        let expected = assemble_laplacian(&s.mesh).mul_vec(&s.truth).scaled(delta);
        for (a, b) in g.raw.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        let smooth = smooth_gradient(&s.mesh, &NodalField::zeros(s.mesh.node_count())).unwrap();
        assert!(smooth.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn beta_rule() {
        let mesh = Mesh1D::new(-2.0, 2.0, 0.25).unwrap();
        let g = mesh.interpolate(libm::sin);
        let g2 = g.scaled(2.0);
        assert_eq!(fletcher_reeves_beta(&mesh, &g, None), 0.0);
        assert_abs_diff_eq!(fletcher_reeves_beta(&mesh, &g, Some(&g)), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fletcher_reeves_beta(&mesh, &g2, Some(&g)), 4.0, epsilon = 1e-14);
        let zero = NodalField::zeros(mesh.node_count());
        assert_eq!(fletcher_reeves_beta(&mesh, &g, Some(&zero)), 0.0);
    }

    #[test]
    fn step_size_quotients() {
        let s = setup();
        let r = s.data.clone();
        let df = s.truth.clone();
        assert_abs_diff_eq!(
            step_size(&s.mesh, &s.grid, &r, &r, &df, &df, 0.0).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        let zero = SpaceTimeField::zeros(s.grid.level_count(), s.mesh.node_count());
        assert_abs_diff_eq!(
            step_size(&s.mesh, &s.grid, &zero, &zero, &df, &df, 0.5).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        let ones = NodalField::constant(s.mesh.node_count(), 1.0);
        assert_eq!(
            step_size(&s.mesh, &s.grid, &zero, &zero, &df, &ones, 0.5),
            Err(Error::NullDirection)
        );
    }

    #[test]
    fn relative_error_values() {
        let s = setup();
        assert_eq!(relative_error(&s.mesh, &s.truth, &s.truth).unwrap(), 0.0);
        assert_abs_diff_eq!(
            relative_error(&s.mesh, &s.truth.scaled(1.01), &s.truth).unwrap(),
            0.01,
            epsilon = 1e-13
        );
        let zero = NodalField::zeros(s.mesh.node_count());
        assert_eq!(relative_error(&s.mesh, &s.truth, &zero), Err(Error::ZeroNormReference));
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let s = setup();
        let mut config = InversionConfig::new(&s.mesh, 0.0);
        config.initial_guess = s.truth.clone();
        let report = s.problem().run_cg(&config, Some(&s.truth));
        assert_eq!(report.termination, Termination::ZeroGradient);
        assert_eq!(report.final_error, Some(0.0));
        assert_eq!(report.records.len(), 1);
    }

    #[test]
    fn first_step_descends() {
        let s = setup();
        let mut config = InversionConfig::new(&s.mesh, 1e-5);
        config.max_cg_iters = 1;
        let report = s.problem().run_cg(&config, Some(&s.truth));
        let rec = &report.records[0];
        assert!(rec.step.unwrap() > 0.0);
        assert!(report.final_objective < rec.objective);
        assert!(report.final_error.unwrap() < rec.error.unwrap());
        assert_eq!(report.termination, Termination::MaxIterations);
    }

    #[test]
    fn invalid_config_is_reported() {
        let s = setup();
        let config = InversionConfig::new(&s.mesh, -1.0);
        let report = s.problem().run_cg(&config, None);
        assert!(matches!(
            report.termination,
            Termination::SolverFailure(Error::InvalidParameter { .. })
        ));
    }
}
