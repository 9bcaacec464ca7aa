//! Piecewise-linear finite elements on a uniform 1D mesh.
//!
//! All matrices arising from P1 elements in one dimension are tridiagonal, so
//! the only matrix type is [`TriDiagMatrix`]. Mass and stiffness entries are
//! integrated exactly for element-wise constant weights.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut, Index, IndexMut};

use crate::error::{Error, Result};

/// Relative tolerance when checking that `h` divides the interval.
const DIVISIBILITY_TOL: f64 = 1e-9;

/// Uniform mesh of `[left, right]` with `element_count` elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    left: f64,
    right: f64,
    coords: Vec<f64>,
}

impl Mesh1D {
    /// Builds the uniform mesh of `[left, right]` with spacing `h`.
    ///
    /// `(right - left) / h` has to be an integer up to rounding.
    pub fn new(left: f64, right: f64, h: f64) -> Result<Self> {
        if !(left < right) || !left.is_finite() || !right.is_finite() {
            return Err(Error::InvalidInterval { left, right });
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidParameter {
                name: "h",
                value: h,
                reason: "mesh size must be positive and finite",
            });
        }
        let ratio = (right - left) / h;
        let count = libm::round(ratio);
        if count < 1.0 || (ratio - count).abs() > DIVISIBILITY_TOL * ratio.max(1.0) {
            return Err(Error::NonDivisibleInterval { left, right, h });
        }
        Self::with_elements(left, right, count as usize)
    }

    /// Builds the uniform mesh of `[left, right]` with `elements` elements.
    pub fn with_elements(left: f64, right: f64, elements: usize) -> Result<Self> {
        if !(left < right) || !left.is_finite() || !right.is_finite() {
            return Err(Error::InvalidInterval { left, right });
        }
        if elements == 0 {
            return Err(Error::InvalidParameter {
                name: "elements",
                value: 0.0,
                reason: "a mesh needs at least one element",
            });
        }
        let h = (right - left) / elements as f64;
        let mut coords: Vec<f64> = (0..=elements).map(|i| left + i as f64 * h).collect();
        coords[elements] = right;
        Ok(Self { left, right, coords })
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn length(&self) -> f64 {
        self.right - self.left
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn element_count(&self) -> usize {
        self.coords.len() - 1
    }

    /// Uniform element length.
    pub fn h(&self) -> f64 {
        self.length() / self.element_count() as f64
    }

    /// Element midpoints, one per element.
    pub fn midpoints(&self) -> Vec<f64> {
        self.coords.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(f64) -> f64) -> NodalField {
        NodalField::from(self.coords.iter().map(|&x| f(x)).collect::<Vec<_>>())
    }

    pub fn check_field(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.node_count() {
            return Err(Error::LengthMismatch {
                expected: self.node_count(),
                found: f.len(),
            });
        }
        Ok(())
    }
}

/// One real value per mesh node. Also used for assembled dual vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodalField(Vec<f64>);

impl NodalField {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self(vec![value; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &[f64]) {
        for (s, o) in self.0.iter_mut().zip(other) {
            *s += a * o;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self(self.0.iter().map(|v| a * v).collect())
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn euclidean_norm(&self) -> f64 {
        libm::sqrt(self.dot(&self.0))
    }
}

impl From<Vec<f64>> for NodalField {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl Deref for NodalField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for NodalField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// A trajectory: one [`NodalField`] per time level, `t = t_start` included.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpaceTimeField {
    levels: Vec<NodalField>,
}

impl SpaceTimeField {
    pub fn new(levels: Vec<NodalField>) -> Self {
        Self { levels }
    }

    pub fn zeros(level_count: usize, nodes: usize) -> Self {
        Self {
            levels: vec![NodalField::zeros(nodes); level_count],
        }
    }

    pub fn levels(&self) -> &[NodalField] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [NodalField] {
        &mut self.levels
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn last(&self) -> Option<&NodalField> {
        self.levels.last()
    }

    pub fn into_levels(self) -> Vec<NodalField> {
        self.levels
    }

    /// Level-wise `self - other`.
    pub fn difference(&self, other: &Self) -> Self {
        let levels = self
            .levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| NodalField::from(a.iter().zip(b.iter()).map(|(x, y)| x - y).collect::<Vec<_>>()))
            .collect();
        Self { levels }
    }

    /// Largest absolute value over all levels and nodes.
    pub fn max_abs(&self) -> f64 {
        self.levels.iter().fold(0.0_f64, |m, l| m.max(l.max_abs()))
    }
}

impl Index<usize> for SpaceTimeField {
    type Output = NodalField;
    fn index(&self, i: usize) -> &NodalField {
        &self.levels[i]
    }
}

impl IndexMut<usize> for SpaceTimeField {
    fn index_mut(&mut self, i: usize) -> &mut NodalField {
        &mut self.levels[i]
    }
}

/// Square tridiagonal matrix stored by diagonals.
///
/// `lower[i]` is entry `(i + 1, i)`, `upper[i]` is entry `(i, i + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriDiagMatrix {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl TriDiagMatrix {
    pub fn zeros(n: usize) -> Self {
        let off = n.saturating_sub(1);
        Self {
            lower: vec![0.0; off],
            diag: vec![0.0; n],
            upper: vec![0.0; off],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        m.diag.iter_mut().for_each(|d| *d = 1.0);
        m
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if j == i + 1 {
            self.upper[i]
        } else if i == j + 1 {
            self.lower[j]
        } else {
            0.0
        }
    }

    /// Adds a 2×2 element block acting on nodes `e` and `e + 1`.
    #[inline]
    pub fn add_element_block(&mut self, e: usize, block: [[f64; 2]; 2]) {
        self.diag[e] += block[0][0];
        self.upper[e] += block[0][1];
        self.lower[e] += block[1][0];
        self.diag[e + 1] += block[1][1];
    }

    pub fn mul_vec(&self, x: &[f64]) -> NodalField {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            y[i] = acc;
        }
        NodalField::from(y)
    }

    pub fn transpose(&self) -> Self {
        Self {
            lower: self.upper.clone(),
            diag: self.diag.clone(),
            upper: self.lower.clone(),
        }
    }

    /// `self + a * other`
    pub fn add_scaled(&self, a: f64, other: &Self) -> Self {
        let comb = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p + a * q).collect();
        Self {
            lower: comb(&self.lower, &other.lower),
            diag: comb(&self.diag, &other.diag),
            upper: comb(&self.upper, &other.upper),
        }
    }

    /// `a * self + b * other`
    pub fn lincomb(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        let comb = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(s, t)| a * s + b * t).collect();
        Self {
            lower: comb(&x.lower, &y.lower),
            diag: comb(&x.diag, &y.diag),
            upper: comb(&x.upper, &y.upper),
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.lower
            .iter_mut()
            .chain(self.diag.iter_mut())
            .chain(self.upper.iter_mut())
            .for_each(|v| *v *= a);
    }

    /// Bilinear form `xᵀ A y`.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }

    /// Imposes `x[node] = value` by row and column elimination.
    ///
    /// The column is moved to `rhs` so symmetric matrices stay symmetric.
    pub fn apply_dirichlet(&mut self, rhs: &mut [f64], node: usize, value: f64) {
        let n = self.dim();
        if node > 0 {
            rhs[node - 1] -= self.upper[node - 1] * value;
            self.upper[node - 1] = 0.0;
            self.lower[node - 1] = 0.0;
        }
        if node + 1 < n {
            rhs[node + 1] -= self.lower[node] * value;
            self.lower[node] = 0.0;
            self.upper[node] = 0.0;
        }
        self.diag[node] = 1.0;
        rhs[node] = value;
    }

    /// Thomas algorithm without pivoting.
    ///
    /// A vanishing (or non-finite) pivot is reported as [`Error::ZeroPivot`].
    pub fn solve(&self, rhs: &[f64]) -> Result<NodalField> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: rhs.len(),
            });
        }
        if n == 0 {
            return Ok(NodalField::zeros(0));
        }
        let scale = self
            .diag
            .iter()
            .chain(&self.lower)
            .chain(&self.upper)
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        let tiny = scale * f64::EPSILON * 1e-6;
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut pivot = self.diag[0];
        if !(pivot.abs() > tiny) || !pivot.is_finite() {
            return Err(Error::ZeroPivot { row: 0 });
        }
        if n > 1 {
            c[0] = self.upper[0] / pivot;
        }
        d[0] = rhs[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.lower[i - 1] * c[i - 1];
            if !(pivot.abs() > tiny) || !pivot.is_finite() {
                return Err(Error::ZeroPivot { row: i });
            }
            if i + 1 < n {
                c[i] = self.upper[i] / pivot;
            }
            d[i] = (rhs[i] - self.lower[i - 1] * d[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Ok(NodalField::from(d))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Consistent P1 mass matrix.
pub fn assemble_mass(mesh: &Mesh1D) -> TriDiagMatrix {
    let h = mesh.h();
    let mut m = TriDiagMatrix::zeros(mesh.node_count());
    let block = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
    for e in 0..mesh.element_count() {
        m.add_element_block(e, block);
    }
    m
}

/// P1 stiffness matrix with one constant weight per element.
pub fn assemble_weighted_stiffness(mesh: &Mesh1D, weights: &[f64]) -> TriDiagMatrix {
    debug_assert_eq!(weights.len(), mesh.element_count());
    let inv_h = 1.0 / mesh.h();
    let mut k = TriDiagMatrix::zeros(mesh.node_count());
    for (e, &w) in weights.iter().enumerate() {
        let a = w * inv_h;
        k.add_element_block(e, [[a, -a], [-a, a]]);
    }
    k
}

/// Unit-weight stiffness matrix (discrete `-Δ` with natural boundary conditions).
pub fn assemble_laplacian(mesh: &Mesh1D) -> TriDiagMatrix {
    assemble_weighted_stiffness(mesh, &vec![1.0; mesh.element_count()])
}

/// Per-element difference quotient `(f[i+1] - f[i]) / h`.
pub fn element_gradient(mesh: &Mesh1D, f: &[f64]) -> Vec<f64> {
    let inv_h = 1.0 / mesh.h();
    f.windows(2).map(|w| (w[1] - w[0]) * inv_h).collect()
}

/// Per-element midpoint value `(f[i] + f[i+1]) / 2`.
pub fn element_midvalues(f: &[f64]) -> Vec<f64> {
    f.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

pub fn solve_tridiagonal(a: &TriDiagMatrix, rhs: &[f64]) -> Result<NodalField> {
    a.solve(rhs)
}

/// H¹ Riesz representative: solves `(K + M) s = raw` (homogeneous Neumann).
pub fn helmholtz_smooth(mesh: &Mesh1D, raw: &[f64]) -> Result<NodalField> {
    mesh.check_field(raw)?;
    h1_gram(mesh).solve(raw)
}

/// Gram matrix of the full H¹ inner product, `K + M`.
pub fn h1_gram(mesh: &Mesh1D) -> TriDiagMatrix {
    assemble_laplacian(mesh).add_scaled(1.0, &assemble_mass(mesh))
}

pub fn l2_inner(mesh: &Mesh1D, f: &[f64], g: &[f64]) -> f64 {
    assemble_mass(mesh).form(f, g)
}

pub fn h1_semi_inner(mesh: &Mesh1D, f: &[f64], g: &[f64]) -> f64 {
    // (∇f, ∇g) = Σ_e h ∇f_e ∇g_e
    let h = mesh.h();
    element_gradient(mesh, f)
        .iter()
        .zip(element_gradient(mesh, g))
        .map(|(a, b)| h * a * b)
        .sum()
}

pub fn l2_norm(mesh: &Mesh1D, f: &[f64]) -> f64 {
    libm::sqrt(l2_inner(mesh, f, f).max(0.0))
}

pub fn h1_seminorm(mesh: &Mesh1D, f: &[f64]) -> f64 {
    libm::sqrt(h1_semi_inner(mesh, f, f).max(0.0))
}

/// Trapezoidal weights for `level_count` equidistant levels with spacing `dt`.
pub fn trapezoid_weights(level_count: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![dt; level_count];
    if let Some(first) = w.first_mut() {
        *first *= 0.5;
    }
    if level_count > 1 {
        w[level_count - 1] *= 0.5;
    }
    if level_count == 1 {
        w[0] = 0.0;
    }
    w
}

/// `∫₀ᵀ (F, G)_{L²(Ω)} dt`, trapezoidal in time.
pub fn space_time_inner(mesh: &Mesh1D, dt: f64, f: &SpaceTimeField, g: &SpaceTimeField) -> f64 {
    let mass = assemble_mass(mesh);
    trapezoid_weights(f.level_count(), dt)
        .iter()
        .zip(f.levels().iter().zip(g.levels()))
        .map(|(w, (a, b))| w * mass.form(a, b))
        .sum()
}

/// `‖F‖_{L²(0,T;L²(Ω))}`, trapezoidal in time.
pub fn space_time_l2(mesh: &Mesh1D, dt: f64, f: &SpaceTimeField) -> f64 {
    libm::sqrt(space_time_inner(mesh, dt, f, f).max(0.0))
}

/// `‖F‖_{L²(0,T;H¹(Ω))}`, trapezoidal in time.
pub fn space_time_h1(mesh: &Mesh1D, dt: f64, f: &SpaceTimeField) -> f64 {
    let gram = h1_gram(mesh);
    let sq: f64 = trapezoid_weights(f.level_count(), dt)
        .iter()
        .zip(f.levels())
        .map(|(w, a)| w * gram.form(a, a))
        .sum();
    libm::sqrt(sq.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn benchmark_mesh() -> Mesh1D {
        Mesh1D::new(-2.0, 2.0, 0.25).unwrap()
    }

    #[test]
    fn mesh_sizes() {
        let m = benchmark_mesh();
        assert_eq!(m.node_count(), 17);
        assert_eq!(m.element_count(), 16);
        assert_eq!(Mesh1D::new(-2.0, 2.0, 0.125).unwrap().node_count(), 33);
        let unit = Mesh1D::new(0.0, 1.0, 1.0).unwrap();
        assert_eq!(unit.coords(), &[0.0, 1.0]);
        assert!(m.coords().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(m.coords()[0], -2.0);
        assert_eq!(*m.coords().last().unwrap(), 2.0);
    }

    #[test]
    fn mesh_rejects_bad_input() {
        assert!(matches!(
            Mesh1D::new(-2.0, 2.0, 0.3),
            Err(Error::NonDivisibleInterval { .. })
        ));
        assert!(matches!(Mesh1D::new(1.0, 1.0, 0.1), Err(Error::InvalidInterval { .. })));
        assert!(Mesh1D::new(0.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn mass_rows() {
        let m = benchmark_mesh();
        let h = m.h();
        let mass = assemble_mass(&m);
        assert_abs_diff_eq!(mass.get(5, 4), h / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mass.get(5, 5), 2.0 * h / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mass.get(5, 6), h / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mass.get(0, 0), h / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mass.get(0, 1), h / 6.0, epsilon = 1e-15);
        let ones = vec![1.0; m.node_count()];
        assert_abs_diff_eq!(mass.form(&ones, &ones), 4.0, epsilon = 1e-13);
        let row_sums = mass.mul_vec(&ones);
        for i in 1..m.node_count() - 1 {
            assert_abs_diff_eq!(row_sums[i], h, epsilon = 1e-15);
        }
        assert_eq!(mass.transpose(), mass);
    }

    #[test]
    fn stiffness_patterns() {
        let m = Mesh1D::with_elements(0.0, 3.0, 3).unwrap();
        let k = assemble_weighted_stiffness(&m, &[1.0, 1.0, 1.0]);
        assert_eq!((k.get(1, 0), k.get(1, 1), k.get(1, 2)), (-1.0, 2.0, -1.0));
        let zero = assemble_weighted_stiffness(&m, &[0.0; 3]);
        assert_eq!(zero, TriDiagMatrix::zeros(4));

        let two = Mesh1D::with_elements(0.0, 2.0, 2).unwrap();
        let k = assemble_weighted_stiffness(&two, &[2.0, 3.0]);
        assert_eq!((k.get(1, 0), k.get(1, 1), k.get(1, 2)), (-2.0, 5.0, -3.0));
        let sums = k.mul_vec(&[1.0, 1.0, 1.0]);
        assert!(sums.iter().all(|s| s.abs() <= 1e-14));
    }

    #[test]
    fn gradients() {
        let m = benchmark_mesh();
        let u0 = m.interpolate(|x| -0.25 * x + 1.5);
        for g in element_gradient(&m, &u0) {
            assert_abs_diff_eq!(g, -0.25, epsilon = 1e-14);
        }
        let c = NodalField::constant(m.node_count(), 3.0);
        assert!(element_gradient(&m, &c).iter().all(|g| *g == 0.0));
        let sq = m.interpolate(|x| x * x);
        // element [0, h] is element 8
        assert_abs_diff_eq!(element_gradient(&m, &sq)[8], m.h(), epsilon = 1e-14);
    }

    #[test]
    fn tridiagonal_basics() {
        let rhs = [1.0, -2.0, 3.5, 0.25];
        assert_eq!(TriDiagMatrix::identity(4).solve(&rhs).unwrap().to_vec(), rhs.to_vec());
        let m = benchmark_mesh();
        let mass = assemble_mass(&m);
        let ones = vec![1.0; m.node_count()];
        let x = mass.solve(&mass.mul_vec(&ones)).unwrap();
        for v in x.iter() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-13);
        }
        let singular = TriDiagMatrix::zeros(3);
        assert_eq!(singular.solve(&[1.0, 1.0, 1.0]), Err(Error::ZeroPivot { row: 0 }));
        let m2 = TriDiagMatrix {
            lower: vec![1.0],
            diag: vec![1.0, 1.0],
            upper: vec![1.0],
        };
        assert_eq!(m2.solve(&[1.0, 2.0]), Err(Error::ZeroPivot { row: 1 }));
    }

    #[test]
    fn dirichlet_elimination() {
        let m = Mesh1D::with_elements(0.0, 1.0, 4).unwrap();
        let mut k = assemble_laplacian(&m);
        let mut rhs = vec![0.0; 5];
        k.apply_dirichlet(&mut rhs, 0, 1.0);
        k.apply_dirichlet(&mut rhs, 4, 3.0);
        let x = k.solve(&rhs).unwrap();
        // harmonic function between the two boundary values is linear
        for (i, v) in x.iter().enumerate() {
            assert_abs_diff_eq!(*v, 1.0 + 0.5 * i as f64, epsilon = 1e-13);
        }
        assert_eq!(k.transpose(), k);
    }

    #[test]
    fn helmholtz_smoothing() {
        let m = benchmark_mesh();
        let mass = assemble_mass(&m);
        let c = NodalField::constant(m.node_count(), 2.5);
        let s = helmholtz_smooth(&m, &mass.mul_vec(&c)).unwrap();
        for v in s.iter() {
            assert_abs_diff_eq!(*v, 2.5, epsilon = 1e-13);
        }
        let zero = helmholtz_smooth(&m, &vec![0.0; m.node_count()]).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn norms() {
        let m = benchmark_mesh();
        let one = NodalField::constant(m.node_count(), 1.0);
        assert_abs_diff_eq!(l2_norm(&m, &one), 2.0, epsilon = 1e-13);
        assert_eq!(h1_seminorm(&m, &one), 0.0);
        let x = m.interpolate(|x| x);
        assert_abs_diff_eq!(h1_seminorm(&m, &x), 2.0, epsilon = 1e-13);
        let k = assemble_laplacian(&m);
        assert_abs_diff_eq!(k.form(&x, &x), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn trapezoid() {
        let w = trapezoid_weights(21, 0.025);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 0.5, epsilon = 1e-14);
        assert_eq!(w[0], 0.0125);
        assert_eq!(w[1], 0.025);
    }
}
