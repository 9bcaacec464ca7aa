//! Diffusive wave physics on a P1 mesh.
//!
//! The water height `u` obeys `u_t - ∇·(k(u, ∇u) ∇u) = f` with the
//! Manning-type coefficient
//!
//! ```text
//! k(u, ∇u) = d_f (u - z)^α / |∇u|^(1-γ)
//! ```
//!
//! All element quantities are evaluated by one-point (midpoint) quadrature:
//! `u`, `z` and `d_f` are averaged over the element and `∇u` is the element
//! difference quotient. `|∇u|` is clamped from below by `grad_floor`.
//!
//! The flux through element `e` is `q_e = k_e g_e`. In 1D its derivative with
//! respect to the gradient is `γ k_e` (the attenuated diffusion; plain `k_e`
//! once `|g_e|` is below the floor) and with
//! respect to the midpoint height it is `α k_e g_e / (u - z)` (the convection
//! coupling). Those two pieces form [`LinearizedOperator`].

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mesh::{
    assemble_mass, element_gradient, element_midvalues, Mesh1D, NodalField, SpaceTimeField, TriDiagMatrix,
};

/// Manning exponent on the water depth.
pub const MANNING_ALPHA: f64 = 5.0 / 3.0;
/// Manning exponent on the gradient, `k ∝ |∇u|^(γ-1)`.
pub const MANNING_GAMMA: f64 = 0.5;
pub const DEFAULT_GRAD_FLOOR: f64 = 1e-8;

/// Scalar function of `(x, t)`.
#[derive(Debug, Clone, Copy, Default)]
pub enum SpaceTimeFn {
    #[default]
    Zero,
    Constant(f64),
    Function(fn(f64, f64) -> f64),
}

impl SpaceTimeFn {
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match *self {
            SpaceTimeFn::Zero => 0.0,
            SpaceTimeFn::Constant(c) => c,
            SpaceTimeFn::Function(f) => f(x, t),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, SpaceTimeFn::Zero) || matches!(self, SpaceTimeFn::Constant(c) if *c == 0.0)
    }
}

impl PartialEq for SpaceTimeFn {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (SpaceTimeFn::Zero, SpaceTimeFn::Zero) => true,
            (SpaceTimeFn::Constant(a), SpaceTimeFn::Constant(b)) => a == b,
            // same function item, compared by address
            (SpaceTimeFn::Function(f), SpaceTimeFn::Function(g)) => core::ptr::fn_addr_eq(*f, *g),
            _ => false,
        }
    }
}

/// Physical parameters of the forward model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Exponent on the water depth, `1 < alpha < 2`.
    pub alpha: f64,
    /// Exponent in `|∇u|^(1-gamma)`, `0 < gamma <= 1`.
    pub gamma_exp: f64,
    /// Lower clamp for `|∇u|` inside `k`.
    pub grad_floor: f64,
    /// Source term `f(x, t)`.
    pub forcing: SpaceTimeFn,
    /// Outward flux `(k ∇u)·n = h(x, t)`, evaluated at both end points.
    pub neumann_data: SpaceTimeFn,
    /// Bed elevation `z`, one value per node.
    pub bathymetry: NodalField,
}

impl ModelParams {
    /// Manning parameters (`α = 5/3`, `γ = 1/2`), flat bed, no source, no inflow.
    pub fn manning(mesh: &Mesh1D) -> Self {
        Self {
            alpha: MANNING_ALPHA,
            gamma_exp: MANNING_GAMMA,
            grad_floor: DEFAULT_GRAD_FLOOR,
            forcing: SpaceTimeFn::Zero,
            neumann_data: SpaceTimeFn::Zero,
            bathymetry: NodalField::zeros(mesh.node_count()),
        }
    }

    pub fn validate(&self, mesh: &Mesh1D) -> Result<()> {
        if !(self.gamma_exp > 0.0 && self.gamma_exp <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "gamma_exp",
                value: self.gamma_exp,
                reason: "must lie in (0, 1]",
            });
        }
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                value: self.alpha,
                reason: "must lie in (1, 2)",
            });
        }
        if !(self.grad_floor > 0.0 && self.grad_floor.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "grad_floor",
                value: self.grad_floor,
                reason: "must be positive",
            });
        }
        mesh.check_field(&self.bathymetry)
    }

    /// True when the source and boundary flux vanish identically.
    pub fn is_unforced(&self) -> bool {
        self.forcing.is_zero() && self.neumann_data.is_zero()
    }
}

/// `d_f (u - z)^α / max(|∇u|, floor)^(1-γ)` at a single point.
pub fn diffusion_k(u: f64, du: f64, z: f64, df: f64, params: &ModelParams) -> Result<f64> {
    let depth = u - z;
    if !(depth > 0.0) {
        return Err(Error::DryState { node: 0, depth });
    }
    Ok(df * libm::pow(depth, params.alpha) / gradient_factor(du, params))
}

#[inline]
fn gradient_factor(du: f64, params: &ModelParams) -> f64 {
    libm::pow(du.abs().max(params.grad_floor), 1.0 - params.gamma_exp)
}

/// Scalar factor of the attenuated tensor `I - (1-γ) η⊗η`; in 1D `η⊗η = 1`.
pub fn attenuation_factor(params: &ModelParams) -> f64 {
    1.0 - (1.0 - params.gamma_exp)
}

/// Midpoint quantities of one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementState {
    /// Water depth `u - z` at the midpoint.
    pub depth: f64,
    /// Difference quotient of `u`.
    pub grad: f64,
    /// `(u - z)^α / max(|∇u|, floor)^(1-γ)`, i.e. `k` without `d_f`.
    pub mobility: f64,
    /// `d_f` at the midpoint.
    pub coefficient: f64,
}

impl ElementState {
    pub fn k(&self) -> f64 {
        self.coefficient * self.mobility
    }

    pub fn flux(&self) -> f64 {
        self.k() * self.grad
    }
}

fn check_wet(params: &ModelParams, u: &[f64]) -> Result<()> {
    for (node, (ui, zi)) in u.iter().zip(params.bathymetry.iter()).enumerate() {
        let depth = ui - zi;
        if !(depth > 0.0) {
            return Err(Error::DryState { node, depth });
        }
    }
    Ok(())
}

/// Evaluates [`ElementState`] on every element.
pub fn element_states(mesh: &Mesh1D, params: &ModelParams, d_f: &[f64], u: &[f64]) -> Result<Vec<ElementState>> {
    mesh.check_field(u)?;
    mesh.check_field(d_f)?;
    check_wet(params, u)?;
    let grads = element_gradient(mesh, u);
    let u_mid = element_midvalues(u);
    let z_mid = element_midvalues(&params.bathymetry);
    let d_mid = element_midvalues(d_f);
    Ok(grads
        .iter()
        .zip(u_mid.iter().zip(&z_mid))
        .zip(&d_mid)
        .map(|((&grad, (&um, &zm)), &coefficient)| {
            let depth = um - zm;
            ElementState {
                depth,
                grad,
                mobility: libm::pow(depth, params.alpha) / gradient_factor(grad, params),
                coefficient,
            }
        })
        .collect())
}

/// Scatters element fluxes into the dual vector `(q, ∇φ_i)`.
fn scatter_fluxes(fluxes: impl Iterator<Item = f64>, n: usize) -> NodalField {
    let mut out = NodalField::zeros(n);
    for (e, q) in fluxes.enumerate() {
        out[e] -= q;
        out[e + 1] += q;
    }
    out
}

/// The nonlinear diffusion term `K(u) u`, i.e. `(k ∇u, ∇φ_i)`.
pub fn diffusion_term(mesh: &Mesh1D, params: &ModelParams, d_f: &[f64], u: &[f64]) -> Result<NodalField> {
    let states = element_states(mesh, params, d_f, u)?;
    Ok(scatter_fluxes(states.iter().map(ElementState::flux), mesh.node_count()))
}

/// `(f(t), φ_i) + (h(t), φ_i)_{∂Ω}`.
pub fn load_vector(mesh: &Mesh1D, params: &ModelParams, t: f64) -> NodalField {
    let n = mesh.node_count();
    let mut load = if params.forcing.is_zero() {
        NodalField::zeros(n)
    } else {
        let f = mesh.interpolate(|x| params.forcing.eval(x, t));
        assemble_mass(mesh).mul_vec(&f)
    };
    if !params.neumann_data.is_zero() {
        load[0] += params.neumann_data.eval(mesh.left(), t);
        load[n - 1] += params.neumann_data.eval(mesh.right(), t);
    }
    load
}

/// Discrete residual `M u̇ + K(u) u - F(t)`.
pub fn forward_residual(
    mesh: &Mesh1D,
    params: &ModelParams,
    d_f: &[f64],
    u: &[f64],
    udot: &[f64],
    t: f64,
) -> Result<NodalField> {
    mesh.check_field(udot)?;
    let mut r = diffusion_term(mesh, params, d_f, u)?;
    let mu = assemble_mass(mesh).mul_vec(udot);
    r.axpy(1.0, &mu);
    if !params.is_unforced() {
        r.axpy(-1.0, &load_vector(mesh, params, t));
    }
    Ok(r)
}

/// Attenuated diffusion `D` and convection `C` parts of `∂(K(u)u)/∂u`.
///
/// On elements whose gradient sits below `grad_floor` the diffusion part is
/// the plain (unattenuated) stiffness, the exact derivative of the clamped flux.
pub fn spatial_linearization(
    mesh: &Mesh1D,
    params: &ModelParams,
    d_f: &[f64],
    u: &[f64],
) -> Result<(TriDiagMatrix, TriDiagMatrix)> {
    let states = element_states(mesh, params, d_f, u)?;
    Ok(linearization_from_states(mesh, params, &states))
}

fn linearization_from_states(
    mesh: &Mesh1D,
    params: &ModelParams,
    states: &[ElementState],
) -> (TriDiagMatrix, TriDiagMatrix) {
    let n = mesh.node_count();
    let inv_h = 1.0 / mesh.h();
    let atten = attenuation_factor(params);
    let mut diffusion = TriDiagMatrix::zeros(n);
    let mut convection = TriDiagMatrix::zeros(n);
    for (e, s) in states.iter().enumerate() {
        // below the floor k no longer depends on ∇u and the flux is linear
        let factor = if s.grad.abs() < params.grad_floor { 1.0 } else { atten };
        let a = factor * s.k() * inv_h;
        diffusion.add_element_block(e, [[a, -a], [-a, a]]);
        // (α k / (u - z)) v̄ ∇u tested against ∇φ, with v̄ = (v_e + v_{e+1}) / 2
        let c = 0.5 * params.alpha * s.k() * s.grad / s.depth;
        convection.add_element_block(e, [[-c, -c], [c, c]]);
    }
    (diffusion, convection)
}

/// Newton matrix `shift·M + D(u) + C(u)`.
///
/// The residual is affine in `u̇`, so the rate does not enter the matrix.
pub fn forward_jacobian(
    mesh: &Mesh1D,
    params: &ModelParams,
    d_f: &[f64],
    u: &[f64],
    shift: f64,
) -> Result<TriDiagMatrix> {
    let (d, c) = spatial_linearization(mesh, params, d_f, u)?;
    let a = d.add_scaled(1.0, &c);
    if shift == 0.0 {
        return Ok(a);
    }
    Ok(a.add_scaled(shift, &assemble_mass(mesh)))
}

/// Spatial operators of the sensitivity and adjoint problems, frozen along a
/// forward trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedOperator {
    pub mass: TriDiagMatrix,
    /// Symmetric attenuated diffusion `D_n`, one per level.
    pub diffusion: Vec<TriDiagMatrix>,
    /// Nonsymmetric convection `C_n`, one per level.
    pub convection: Vec<TriDiagMatrix>,
}

impl LinearizedOperator {
    pub fn level_count(&self) -> usize {
        self.diffusion.len()
    }

    pub fn dim(&self) -> usize {
        self.mass.dim()
    }

    /// `D_n + C_n`
    pub fn sensitivity_matrix(&self, level: usize) -> TriDiagMatrix {
        self.diffusion[level].add_scaled(1.0, &self.convection[level])
    }

    /// `D_n + C_nᵀ`
    pub fn adjoint_matrix(&self, level: usize) -> TriDiagMatrix {
        self.diffusion[level].add_scaled(1.0, &self.convection[level].transpose())
    }
}

pub fn linearize_trajectory(
    mesh: &Mesh1D,
    params: &ModelParams,
    d_f: &[f64],
    u_traj: &SpaceTimeField,
) -> Result<LinearizedOperator> {
    let mut diffusion = Vec::with_capacity(u_traj.level_count());
    let mut convection = Vec::with_capacity(u_traj.level_count());
    for u in u_traj.levels() {
        let (d, c) = spatial_linearization(mesh, params, d_f, u)?;
        diffusion.push(d);
        convection.push(c);
    }
    Ok(LinearizedOperator {
        mass: assemble_mass(mesh),
        diffusion,
        convection,
    })
}

/// Loads `-(d (u-z)^α/|∇u|^(1-γ) ∇u, ∇φ_i)` of the sensitivity problem for
/// direction `d`, one per level.
pub fn sensitivity_rhs(
    mesh: &Mesh1D,
    params: &ModelParams,
    u_traj: &SpaceTimeField,
    d: &[f64],
) -> Result<SpaceTimeField> {
    mesh.check_field(d)?;
    let levels = u_traj
        .levels()
        .iter()
        .map(|u| diffusion_term(mesh, params, d, u).map(|r| r.scaled(-1.0)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpaceTimeField::new(levels))
}

/// Adjoint loads `M r_n`.
pub fn adjoint_rhs(mesh: &Mesh1D, residual_traj: &SpaceTimeField) -> SpaceTimeField {
    let mass = assemble_mass(mesh);
    SpaceTimeField::new(residual_traj.levels().iter().map(|r| mass.mul_vec(r)).collect())
}

/// Nodal derivative of `d ↦ ⟨sensitivity load(d), p⟩` at one level, i.e. the
/// dual vector of `-((u-z)^α/|∇u|^(1-γ) ∇u·∇p, φ_i)`.
pub fn coefficient_sensitivity(mesh: &Mesh1D, params: &ModelParams, u: &[f64], p: &[f64]) -> Result<NodalField> {
    mesh.check_field(p)?;
    let ones = NodalField::constant(mesh.node_count(), 1.0);
    let states = element_states(mesh, params, &ones, u)?;
    let mut out = NodalField::zeros(mesh.node_count());
    for (e, s) in states.iter().enumerate() {
        // ⟨load, p⟩_e = s·g·(p_e - p_{e+1}) with d̄ = (d_e + d_{e+1}) / 2
        let w = 0.5 * s.mobility * s.grad * (p[e] - p[e + 1]);
        out[e] += w;
        out[e + 1] += w;
    }
    Ok(out)
}
