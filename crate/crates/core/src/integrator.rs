//! Generalized-α time integration.
//!
//! The nonlinear forward problem `M u̇ + K(u) u = F(t)` is advanced with the
//! predictor / multi-corrector form of the scheme. The unknown of each Newton
//! iteration is the intermediate state `u_{n+α_f}`; the intermediate rate is
//! slaved to it through
//!
//! ```text
//! u̇_{n+α_m} = (1 - α_m/γ) u̇_n + α_m / (α_f γ Δt) (u_{n+α_f} - u_n)
//! ```
//!
//! so the Newton matrix is `∂R/∂u + α_m/(α_f γ Δt) M`.
//!
//! The linear sensitivity (forward in time) and adjoint (backward in time)
//! problems use the same scheme; their operators, which live on the time
//! levels, are interpolated linearly to `t_{n+α_f}`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mesh::{assemble_mass, trapezoid_weights, Mesh1D, NodalField, SpaceTimeField, TriDiagMatrix};
use crate::model::{self, LinearizedOperator, ModelParams};

/// Uniform partition of `[t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    dt: f64,
    step_count: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        let bad = Error::InvalidTimeGrid {
            start: t_start,
            end: t_end,
            dt,
        };
        if !(t_end > t_start) || !(dt > 0.0) || !dt.is_finite() || !t_end.is_finite() {
            return Err(bad);
        }
        let ratio = (t_end - t_start) / dt;
        let steps = libm::round(ratio);
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(bad);
        }
        Ok(Self {
            t_start,
            t_end,
            dt: (t_end - t_start) / steps,
            step_count: steps as usize,
        })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn level_count(&self) -> usize {
        self.step_count + 1
    }

    pub fn time(&self, level: usize) -> f64 {
        if level == self.step_count {
            self.t_end
        } else {
            self.t_start + level as f64 * self.dt
        }
    }

    /// Same interval with the step divided by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            dt: self.dt / factor as f64,
            step_count: self.step_count * factor,
            ..*self
        }
    }
}

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenAlphaConfig {
    /// High-frequency spectral radius, in `[0, 1]`.
    pub rho_inf: f64,
    /// Relative Newton tolerance on the residual norm.
    pub newton_tol: f64,
    /// Maximum Newton iterations per step.
    pub max_iter: usize,
    /// Absolute residual norm below which a step counts as converged.
    pub abs_tol: f64,
}

impl Default for GenAlphaConfig {
    fn default() -> Self {
        Self {
            rho_inf: 0.1,
            newton_tol: 1e-6,
            max_iter: 20,
            abs_tol: 1e-13,
        }
    }
}

impl GenAlphaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho_inf) {
            return Err(Error::InvalidParameter {
                name: "rho_inf",
                value: self.rho_inf,
                reason: "must lie in [0, 1]",
            });
        }
        if !(self.newton_tol > 0.0 && self.newton_tol < 1.0) {
            return Err(Error::InvalidParameter {
                name: "newton_tol",
                value: self.newton_tol,
                reason: "must lie in (0, 1)",
            });
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iter",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if !(self.abs_tol >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "abs_tol",
                value: self.abs_tol,
                reason: "must be non-negative",
            });
        }
        Ok(())
    }

    pub fn params(&self) -> GenAlphaParams {
        genalpha_params(self.rho_inf)
    }
}

/// Method parameters derived from the spectral radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenAlphaParams {
    pub alpha_f: f64,
    pub alpha_m: f64,
    pub gamma_t: f64,
}

impl GenAlphaParams {
    /// `α_m / (α_f γ Δt)`: derivative of `u̇_{n+α_m}` with respect to `u_{n+α_f}`.
    pub fn shift(&self, dt: f64) -> f64 {
        self.alpha_m / (self.alpha_f * self.gamma_t * dt)
    }

    /// Coefficient of `u̇_n` in `u̇_{n+α_m}`.
    fn rate_carry(&self) -> f64 {
        1.0 - self.alpha_m / self.gamma_t
    }
}

/// `α_f = 1/(1+ρ)`, `α_m = (3-ρ)/(2(1+ρ))`, `γ = 1/(1+ρ)`.
pub fn genalpha_params(rho_inf: f64) -> GenAlphaParams {
    let alpha_f = 1.0 / (1.0 + rho_inf);
    GenAlphaParams {
        alpha_f,
        alpha_m: (3.0 - rho_inf) / (2.0 * (1.0 + rho_inf)),
        gamma_t: alpha_f,
    }
}

/// Consistent initial rate: solves `M u̇₀ = F(t₀) - K(u₀) u₀`.
pub fn initial_rate(mesh: &Mesh1D, params: &ModelParams, d_f: &[f64], u0: &[f64], t0: f64) -> Result<NodalField> {
    let mut rhs = model::diffusion_term(mesh, params, d_f, u0)?.scaled(-1.0);
    if !params.is_unforced() {
        rhs.axpy(1.0, &model::load_vector(mesh, params, t0));
    }
    assemble_mass(mesh).solve(&rhs)
}

/// Forward trajectory together with per-step Newton diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSolution {
    pub trajectory: SpaceTimeField,
    pub rates: SpaceTimeField,
    /// Newton residual norms of every step, in iteration order.
    pub newton_residuals: Vec<Vec<f64>>,
}

impl ForwardSolution {
    pub fn max_newton_iterations(&self) -> usize {
        self.newton_residuals.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Solves the nonlinear forward problem and returns the height at every level.
pub fn solve_forward(
    mesh: &Mesh1D,
    grid: &TimeGrid,
    params: &ModelParams,
    d_f: &[f64],
    u0: &[f64],
    config: &GenAlphaConfig,
) -> Result<SpaceTimeField> {
    solve_forward_detailed(mesh, grid, params, d_f, u0, config).map(|s| s.trajectory)
}

pub fn solve_forward_detailed(
    mesh: &Mesh1D,
    grid: &TimeGrid,
    params: &ModelParams,
    d_f: &[f64],
    u0: &[f64],
    config: &GenAlphaConfig,
) -> Result<ForwardSolution> {
    config.validate()?;
    params.validate(mesh)?;
    mesh.check_field(u0)?;
    mesh.check_field(d_f)?;
    if let Some(bad) = d_f.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "d_f",
            value: *bad,
            reason: "coefficient must be positive",
        });
    }
    let ga = config.params();
    let dt = grid.dt();
    let shift = ga.shift(dt);
    let mass = assemble_mass(mesh);
    let forced = !params.is_unforced();

    let mut u_n = NodalField::from(u0.to_vec());
    let mut udot_n = initial_rate(mesh, params, d_f, u0, grid.t_start())?;
    let mut levels = Vec::with_capacity(grid.level_count());
    let mut rates = Vec::with_capacity(grid.level_count());
    let mut newton_residuals = Vec::with_capacity(grid.step_count());
    levels.push(u_n.clone());
    rates.push(udot_n.clone());

    for step in 0..grid.step_count() {
        let t_af = grid.time(step) + ga.alpha_f * dt;
        // predictor u_{n+1} = u_n gives u_{n+α_f} = u_n
        let mut u_af = u_n.clone();
        let mut udot_am = udot_n.scaled(ga.rate_carry());
        let residual_at = |u_af: &NodalField, udot_am: &NodalField| -> Result<NodalField> {
            let mut r = model::diffusion_term(mesh, params, d_f, u_af)?;
            r.axpy(1.0, &mass.mul_vec(udot_am));
            if forced {
                r.axpy(-1.0, &model::load_vector(mesh, params, t_af));
            }
            Ok(r)
        };
        let mut residual = residual_at(&u_af, &udot_am)?;
        let mut norm = residual.euclidean_norm();
        let first_norm = norm;
        let mut history = Vec::new();
        let mut converged = false;
        for _ in 0..config.max_iter {
            if !norm.is_finite() {
                return Err(Error::NonFinite { step: step + 1 });
            }
            history.push(norm);
            let jac = model::forward_jacobian(mesh, params, d_f, &u_af, shift)?;
            let delta = jac.solve(&residual).map_err(|e| singular(e, step + 1))?;
            // Backtracking on ‖R‖. The flux behaves like |∇u|^γ near a
            // vanishing gradient, where undamped Newton oscillates.
            let mut lambda = gradient_step_limit(mesh, &u_af, &delta, params.grad_floor);
            let mut accepted = None;
            let mut fallback = None;
            for _ in 0..MAX_BACKTRACKS {
                let mut trial_u = u_af.clone();
                trial_u.axpy(-lambda, &delta);
                let mut trial_rate = udot_am.clone();
                trial_rate.axpy(-lambda * shift, &delta);
                match residual_at(&trial_u, &trial_rate) {
                    Ok(r) => {
                        let trial_norm = r.euclidean_norm();
                        if trial_norm <= (1.0 - ARMIJO * lambda) * norm {
                            accepted = Some((trial_u, trial_rate, r, trial_norm));
                            break;
                        }
                        // keep the best trial in case none passes the test
                        if fallback.as_ref().is_none_or(|f: &(_, _, _, f64)| trial_norm < f.3) {
                            fallback = Some((trial_u, trial_rate, r, trial_norm));
                        }
                    }
                    Err(Error::DryState { .. }) => {}
                    Err(e) => return Err(e),
                }
                lambda *= 0.5;
            }
            let Some((next_u, next_rate, next_r, next_norm)) = accepted.or(fallback) else {
                return Err(Error::NewtonNotConverged {
                    step: step + 1,
                    residuals: history,
                });
            };
            u_af = next_u;
            udot_am = next_rate;
            residual = next_r;
            let entry_norm = norm;
            norm = next_norm;
            let floor = rounding_floor(mesh, params, d_f, &u_af, &udot_am, &mass)?;
            if entry_norm <= config.newton_tol * first_norm || entry_norm <= config.abs_tol.max(floor) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NewtonNotConverged {
                step: step + 1,
                residuals: history,
            });
        }
        let mut u_next = u_n.clone();
        for ((un, uaf), out) in u_n.iter().zip(u_af.iter()).zip(u_next.iter_mut()) {
            *out = un + (uaf - un) / ga.alpha_f;
        }
        let mut udot_next = udot_n.clone();
        for ((vn, vam), out) in udot_n.iter().zip(udot_am.iter()).zip(udot_next.iter_mut()) {
            *out = vn + (vam - vn) / ga.alpha_m;
        }
        if u_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: step + 1 });
        }
        newton_residuals.push(history);
        levels.push(u_next.clone());
        rates.push(udot_next.clone());
        u_n = u_next;
        udot_n = udot_next;
    }

    Ok(ForwardSolution {
        trajectory: SpaceTimeField::new(levels),
        rates: SpaceTimeField::new(rates),
        newton_residuals,
    })
}

const ARMIJO: f64 = 1e-4;
/// An element gradient may shrink to this fraction of its size in one
/// Newton update when the full update would flip its sign.
const GRADIENT_SHRINK: f64 = 0.1;

/// Largest step length along `-delta` for which no element gradient flips sign
/// by overshooting, i.e. lands on the opposite side with a smaller magnitude.
fn gradient_step_limit(mesh: &Mesh1D, u: &[f64], delta: &[f64], floor: f64) -> f64 {
    let inv_h = 1.0 / mesh.h();
    let mut limit = 1.0_f64;
    for e in 0..mesh.element_count() {
        let g = (u[e + 1] - u[e]) * inv_h;
        let dg = (delta[e + 1] - delta[e]) * inv_h;
        let target = g - dg;
        if g.abs() > floor && target * g < 0.0 && target.abs() < g.abs() {
            limit = limit.min((1.0 - GRADIENT_SHRINK) * g / dg);
        }
    }
    limit
}
const MAX_BACKTRACKS: usize = 30;
/// Residual norms within this multiple of the rounding estimate count as zero.
const ROUNDING_MARGIN: f64 = 64.0;

/// Size of the residual that rounding alone produces at `u`.
///
/// Near a vanishing gradient the flux slope grows like `|∇u|^(γ-1)`, so the
/// rounding error of the difference quotient is amplified and the residual
/// cannot reach a fixed absolute tolerance.
fn rounding_floor(
    mesh: &Mesh1D,
    params: &ModelParams,
    d_f: &[f64],
    u: &[f64],
    udot: &[f64],
    mass: &TriDiagMatrix,
) -> Result<f64> {
    let states = model::element_states(mesh, params, d_f, u)?;
    let atten = model::attenuation_factor(params);
    let abs_rate: Vec<f64> = udot.iter().map(|v| v.abs()).collect();
    let mut noise = mass.mul_vec(&abs_rate);
    for (e, s) in states.iter().enumerate() {
        let slope = if s.grad.abs() < params.grad_floor { 1.0 } else { atten } * s.k();
        let dq = slope * (u[e].abs() + u[e + 1].abs()) / mesh.h() + s.flux().abs();
        noise[e] += dq;
        noise[e + 1] += dq;
    }
    Ok(ROUNDING_MARGIN * f64::EPSILON * noise.euclidean_norm())
}

fn singular(err: Error, level: usize) -> Error {
    match err {
        Error::ZeroPivot { row } => Error::SingularStep { level, row },
        other => other,
    }
}

/// Generalized-α for `M ẏ + A y = L`, `y(0) = 0`, with `ẏ(0) = M⁻¹ L_0`.
///
/// Operators and loads are given at the linearization points: step `n` uses
/// `A_{n+1}` and `L_{n+1}`, the values at `t_{n+α_f}`.
fn integrate_linear(
    mass: &TriDiagMatrix,
    operators: &[TriDiagMatrix],
    loads: &[NodalField],
    dt: f64,
    ga: GenAlphaParams,
) -> Result<Vec<NodalField>> {
    let n = mass.dim();
    let shift = ga.shift(dt);
    let mut y = NodalField::zeros(n);
    let mut ydot = mass.solve(&loads[0]).map_err(|e| singular(e, 0))?;
    let mut out = Vec::with_capacity(loads.len());
    out.push(y.clone());
    for step in 0..loads.len() - 1 {
        let lhs = operators[step + 1].add_scaled(shift, mass);
        let mut rhs = loads[step + 1].clone();
        let mut history = ydot.scaled(ga.rate_carry());
        history.axpy(-shift, &y);
        rhs.axpy(-1.0, &mass.mul_vec(&history));
        let y_af = lhs.solve(&rhs).map_err(|e| singular(e, step + 1))?;

        let mut ydot_am = ydot.scaled(ga.rate_carry());
        for ((acc, yaf), yn) in ydot_am.iter_mut().zip(y_af.iter()).zip(y.iter()) {
            *acc += shift * (yaf - yn);
        }
        for (yn, yaf) in y.iter_mut().zip(y_af.iter()) {
            *yn += (yaf - *yn) / ga.alpha_f;
        }
        for (vn, vam) in ydot.iter_mut().zip(ydot_am.iter()) {
            *vn += (vam - *vn) / ga.alpha_m;
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn check_linear_inputs(operator: &LinearizedOperator, loads: &SpaceTimeField, grid: &TimeGrid) -> Result<()> {
    for count in [operator.level_count(), loads.level_count()] {
        if count != grid.level_count() {
            return Err(Error::LengthMismatch {
                expected: grid.level_count(),
                found: count,
            });
        }
    }
    Ok(())
}

/// States at which the step equations are solved: `u_0`, then
/// `u_{n+α_f} = (1-α_f) u_n + α_f u_{n+1}` for every step.
///
/// Operators and loads of the linear problems are evaluated here, which makes
/// [`solve_linear_forward`] the exact derivative of [`solve_forward`].
pub fn linearization_points(trajectory: &SpaceTimeField, config: &GenAlphaConfig) -> SpaceTimeField {
    let a = config.params().alpha_f;
    let levels = trajectory.levels();
    let mut points = Vec::with_capacity(levels.len());
    if let Some(first) = levels.first() {
        points.push(first.clone());
    }
    for pair in levels.windows(2) {
        let mut p = pair[0].scaled(1.0 - a);
        p.axpy(a, &pair[1]);
        points.push(p);
    }
    SpaceTimeField::new(points)
}

/// Sensitivity problem `M v̇ + (D + C) v = load`, `v(t₀) = 0`, with the
/// operator and the loads given at the [`linearization_points`].
pub fn solve_linear_forward(
    operator: &LinearizedOperator,
    loads: &SpaceTimeField,
    grid: &TimeGrid,
    config: &GenAlphaConfig,
) -> Result<SpaceTimeField> {
    check_linear_inputs(operator, loads, grid)?;
    let ops: Vec<TriDiagMatrix> = (0..operator.level_count())
        .map(|l| operator.sensitivity_matrix(l))
        .collect();
    let levels = integrate_linear(&operator.mass, &ops, loads.levels(), grid.dt(), config.params())?;
    Ok(SpaceTimeField::new(levels))
}

/// Operators and loads at the time levels, interpolated to the stage points:
/// entry 0 is level 0, entry `n+1` is `(1-α_f) X_n + α_f X_{n+1}`.
fn level_to_stage<T>(levels: &[T], a: f64, lerp: impl Fn(f64, &T, f64, &T) -> T) -> Vec<T> {
    let mut out = Vec::with_capacity(levels.len());
    out.push(lerp(1.0, &levels[0], 0.0, &levels[0]));
    for pair in levels.windows(2) {
        out.push(lerp(1.0 - a, &pair[0], a, &pair[1]));
    }
    out
}

fn lerp_field(a: f64, x: &NodalField, b: f64, y: &NodalField) -> NodalField {
    let mut out = x.scaled(a);
    out.axpy(b, y);
    out
}

/// Sensitivity problem with the operator and the loads given at the time
/// levels and interpolated linearly to `t_{n+α_f}`.
///
/// Consistent with [`solve_linear_forward`] but not the exact derivative of
/// the discrete forward map; [`solve_linear_backward`] is its adjoint.
pub fn solve_linear_interpolated(
    operator: &LinearizedOperator,
    loads: &SpaceTimeField,
    grid: &TimeGrid,
    config: &GenAlphaConfig,
) -> Result<SpaceTimeField> {
    check_linear_inputs(operator, loads, grid)?;
    let a = config.params().alpha_f;
    let ops: Vec<TriDiagMatrix> = (0..operator.level_count())
        .map(|l| operator.sensitivity_matrix(l))
        .collect();
    let ops = level_to_stage(&ops, a, TriDiagMatrix::lincomb);
    let stage_loads = level_to_stage(loads.levels(), a, lerp_field);
    let levels = integrate_linear(&operator.mass, &ops, &stage_loads, grid.dt(), config.params())?;
    Ok(SpaceTimeField::new(levels))
}

/// Adjoint problem `-M ṗ + (D + Cᵀ) p = q`, `p(T) = 0`, with the operator
/// and `q` given at the time levels.
///
/// Discretized as the exact adjoint of [`solve_linear_interpolated`]: the
/// result satisfies `Σ_n w_n ⟨p_n, L_n⟩ = Σ_n w_n ⟨q_n, y_n⟩` for every load
/// sequence `L` with response `y`, `w` the trapezoidal weights. The final
/// level is not forced to zero.
pub fn solve_linear_backward(
    operator: &LinearizedOperator,
    loads: &SpaceTimeField,
    grid: &TimeGrid,
    config: &GenAlphaConfig,
) -> Result<SpaceTimeField> {
    check_linear_inputs(operator, loads, grid)?;
    let a = config.params().alpha_f;
    let weights = trapezoid_weights(grid.level_count(), grid.dt());
    let ops: Vec<TriDiagMatrix> = (0..operator.level_count())
        .map(|l| operator.adjoint_matrix(l))
        .collect();
    let ops = level_to_stage(&ops, a, TriDiagMatrix::lincomb);
    let sources: Vec<NodalField> = loads.levels().iter().zip(&weights).map(|(q, w)| q.scaled(*w)).collect();
    let stage = transpose_linear(&operator.mass, &ops, &sources, grid.dt(), config.params())?;
    // transpose of the level-to-stage interpolation
    let last = stage.len() - 1;
    let mut levels = Vec::with_capacity(stage.len());
    for (n, w) in weights.iter().enumerate() {
        let mut p = NodalField::zeros(operator.dim());
        if n == 0 {
            p.axpy(1.0, &stage[0]);
        } else {
            p.axpy(a, &stage[n]);
        }
        if n < last {
            p.axpy(1.0 - a, &stage[n + 1]);
        }
        levels.push(p.scaled(1.0 / w));
    }
    Ok(SpaceTimeField::new(levels))
}

/// Transpose of the map `L ↦ y` of [`integrate_linear`]: given sources `s_n`
/// returns `g` with `Σ ⟨g_n, L_n⟩ = Σ ⟨s_n, y_n⟩`. `adjoint_ops` are the
/// transposed operators.
fn transpose_linear(
    mass: &TriDiagMatrix,
    adjoint_ops: &[TriDiagMatrix],
    sources: &[NodalField],
    dt: f64,
    ga: GenAlphaParams,
) -> Result<Vec<NodalField>> {
    let n = mass.dim();
    let last = sources.len() - 1;
    let shift = ga.shift(dt);
    let (a, am, carry) = (ga.alpha_f, ga.alpha_m, ga.rate_carry());
    let mut out = vec![NodalField::zeros(n); sources.len()];
    // sensitivities of the output to y_{n+1} and ẏ_{n+1}
    let mut y_bar = sources[last].clone();
    let mut ydot_bar = NodalField::zeros(n);
    for step in (0..last).rev() {
        let ydot_am_bar = ydot_bar.scaled(1.0 / am);
        let mut ydot_n_bar = ydot_bar.scaled(1.0 - 1.0 / am);
        ydot_n_bar.axpy(carry, &ydot_am_bar);
        let mut y_af_bar = y_bar.scaled(1.0 / a);
        y_af_bar.axpy(shift, &ydot_am_bar);
        let mut y_n_bar = y_bar.scaled(1.0 - 1.0 / a);
        y_n_bar.axpy(-shift, &ydot_am_bar);

        let lhs = adjoint_ops[step + 1].add_scaled(shift, mass);
        let rhs_bar = lhs.solve(&y_af_bar).map_err(|e| singular(e, step + 1))?;
        out[step + 1].axpy(1.0, &rhs_bar);
        let m_rhs_bar = mass.mul_vec(&rhs_bar);
        ydot_n_bar.axpy(-carry, &m_rhs_bar);
        y_n_bar.axpy(shift, &m_rhs_bar);
        y_n_bar.axpy(1.0, &sources[step]);
        y_bar = y_n_bar;
        ydot_bar = ydot_n_bar;
    }
    // ẏ_0 = M⁻¹ L_0 and M is symmetric
    let start = mass.solve(&ydot_bar).map_err(|e| singular(e, 0))?;
    out[0].axpy(1.0, &start);
    Ok(out)
}
