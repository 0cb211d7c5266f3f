//! Fields, dense kernel operators, Neumann Laplacians, block averaging and
//! scaling maps.
//!
//! A kernel operator `A: L²(Ω_s) → L²(Ω_t)` stores `K(x, x')` and acts by
//! `(Af)(x) = η_s^d Σ_{x'} K(x, x') f(x')`. The identity has kernel
//! `δ_{x,x'} / η^d` and composition carries the measure of the middle lattice.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::lattice::{lpow, LatticeGeometry, Site};
use crate::{Error, Result};

pub type C64 = nalgebra::Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Relative Frobenius tolerance above which an operator counts as not self-adjoint.
pub const SELF_ADJOINT_TOL: f64 = 1e-10;

/// Reciprocal condition number below which an inversion is refused.
pub const MIN_RCOND: f64 = 1e-14;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `‖a − b‖_F / ‖b‖_F`, falling back to the absolute norm when `b = 0`.
pub fn rel_frobenius(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// A complex function on the sites of a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    geometry: LatticeGeometry,
    values: DVector<C64>,
}

impl Field {
    pub fn zeros(geometry: LatticeGeometry) -> Self {
        Field { geometry, values: DVector::zeros(geometry.num_sites()) }
    }

    pub fn constant(geometry: LatticeGeometry, v: C64) -> Self {
        Field { geometry, values: DVector::from_element(geometry.num_sites(), v) }
    }

    pub fn from_fn(geometry: LatticeGeometry, mut f: impl FnMut(&Site) -> C64) -> Self {
        let values = DVector::from_iterator(geometry.num_sites(), geometry.sites().map(|x| f(&x)));
        Field { geometry, values }
    }

    pub fn from_values(geometry: LatticeGeometry, values: Vec<C64>) -> Result<Self> {
        if values.len() != geometry.num_sites() {
            return Err(Error::Mismatch(format!(
                "{} values for {} sites",
                values.len(),
                geometry.num_sites()
            )));
        }
        Ok(Field { geometry, values: DVector::from_vec(values) })
    }

    pub(crate) fn from_vector(geometry: LatticeGeometry, values: DVector<C64>) -> Self {
        debug_assert_eq!(values.len(), geometry.num_sites());
        Field { geometry, values }
    }

    /// Entries uniform in the unit square of the complex plane, centred at 0.
    pub fn random<R: Rng>(geometry: LatticeGeometry, rng: &mut R) -> Self {
        Self::from_fn(geometry, |_| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &DVector<C64> {
        &self.values
    }

    pub fn get(&self, x: &Site) -> Option<C64> {
        self.geometry.index_of(x).map(|i| self.values[i])
    }

    /// `⟨f, g⟩ = η^d Σ conj(f) g`.
    pub fn inner(&self, other: &Field) -> Result<C64> {
        if self.geometry != other.geometry {
            return Err(Error::Mismatch("inner product of fields on different lattices".into()));
        }
        Ok(self.values.dotc(&other.values) * self.geometry.cell_volume())
    }

    pub fn norm(&self) -> f64 {
        (self.values.norm_squared() * self.geometry.cell_volume()).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: C64) -> Field {
        Field { geometry: self.geometry, values: &self.values * s }
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        if self.geometry != other.geometry {
            return Err(Error::Mismatch("difference of fields on different lattices".into()));
        }
        Ok(Field { geometry: self.geometry, values: &self.values - &other.values })
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Field) -> Result<Field> {
        if self.geometry != other.geometry {
            return Err(Error::Mismatch("product of fields on different lattices".into()));
        }
        Ok(Field { geometry: self.geometry, values: self.values.component_mul(&other.values) })
    }
}

/// The lattice delta `δ_x`, equal to `η^{-d}` at `x`.
pub fn delta_field(geometry: LatticeGeometry, x: &Site) -> Result<Field> {
    let i = geometry.index_of(x).ok_or_else(|| Error::OutOfRange(x.to_string()))?;
    let mut f = Field::zeros(geometry);
    f.values[i] = c(1.0 / geometry.cell_volume());
    Ok(f)
}

/// Dense linear map between two lattices, stored through its kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelOperator {
    source: LatticeGeometry,
    target: LatticeGeometry,
    kernel: CMatrix,
}

impl KernelOperator {
    pub fn from_kernel(source: LatticeGeometry, target: LatticeGeometry, kernel: CMatrix) -> Result<Self> {
        if kernel.nrows() != target.num_sites() || kernel.ncols() != source.num_sites() {
            return Err(Error::Mismatch(format!(
                "kernel is {}x{}, lattices need {}x{}",
                kernel.nrows(),
                kernel.ncols(),
                target.num_sites(),
                source.num_sites()
            )));
        }
        Ok(KernelOperator { source, target, kernel })
    }

    /// Build from the matrix of the linear map on site values.
    pub fn from_matrix(source: LatticeGeometry, target: LatticeGeometry, matrix: CMatrix) -> Result<Self> {
        let w = 1.0 / source.cell_volume();
        Self::from_kernel(source, target, matrix * c(w))
    }

    pub fn identity(geometry: LatticeGeometry) -> Self {
        let n = geometry.num_sites();
        let kernel = CMatrix::identity(n, n) * c(1.0 / geometry.cell_volume());
        KernelOperator { source: geometry, target: geometry, kernel }
    }

    pub fn source(&self) -> &LatticeGeometry {
        &self.source
    }

    pub fn target(&self) -> &LatticeGeometry {
        &self.target
    }

    pub fn kernel(&self) -> &CMatrix {
        &self.kernel
    }

    /// Kernel entry `K(x, x')`.
    pub fn entry(&self, x: &Site, xp: &Site) -> Option<C64> {
        let i = self.target.index_of(x)?;
        let j = self.source.index_of(xp)?;
        Some(self.kernel[(i, j)])
    }

    /// Matrix of the map acting on site values: `η_s^d K`.
    pub fn matrix(&self) -> CMatrix {
        &self.kernel * c(self.source.cell_volume())
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        if f.geometry != self.source {
            return Err(Error::Mismatch("field does not live on the operator source".into()));
        }
        let v = &self.kernel * &f.values * c(self.source.cell_volume());
        Ok(Field::from_vector(self.target, v))
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &KernelOperator) -> Result<KernelOperator> {
        if inner.target != self.source {
            return Err(Error::Mismatch("composition through different lattices".into()));
        }
        let kernel = &self.kernel * &inner.kernel * c(self.source.cell_volume());
        Ok(KernelOperator { source: inner.source, target: self.target, kernel })
    }

    pub fn adjoint(&self) -> KernelOperator {
        KernelOperator { source: self.target, target: self.source, kernel: self.kernel.adjoint() }
    }

    fn same_shape(&self, other: &KernelOperator) -> Result<()> {
        if self.source != other.source || self.target != other.target {
            return Err(Error::Mismatch("operators act between different lattices".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &KernelOperator) -> Result<KernelOperator> {
        self.same_shape(other)?;
        Ok(KernelOperator { kernel: &self.kernel + &other.kernel, ..self.clone() })
    }

    pub fn sub(&self, other: &KernelOperator) -> Result<KernelOperator> {
        self.same_shape(other)?;
        Ok(KernelOperator { kernel: &self.kernel - &other.kernel, ..self.clone() })
    }

    pub fn scale(&self, s: f64) -> KernelOperator {
        KernelOperator { kernel: &self.kernel * c(s), ..self.clone() }
    }

    /// `self + s·1` for a square operator.
    pub fn shift(&self, s: f64) -> Result<KernelOperator> {
        if self.source != self.target {
            return Err(Error::Mismatch("shift of a non-square operator".into()));
        }
        self.add(&KernelOperator::identity(self.source).scale(s))
    }

    /// Inverse by pivoted LU together with the reciprocal 1-norm condition number.
    pub fn invert_with_rcond(&self) -> Result<(KernelOperator, f64)> {
        if self.source != self.target {
            return Err(Error::Mismatch("inverse of a non-square operator".into()));
        }
        let m = self.matrix();
        let inv = m.clone().lu().try_inverse().ok_or(Error::Singular { rcond: 0.0 })?;
        let rcond = 1.0 / (norm1(&m) * norm1(&inv));
        if !rcond.is_finite() || rcond < MIN_RCOND {
            return Err(Error::Singular { rcond });
        }
        Ok((KernelOperator::from_matrix(self.source, self.source, inv)?, rcond))
    }

    pub fn invert(&self) -> Result<KernelOperator> {
        self.invert_with_rcond().map(|(a, _)| a)
    }

    /// `‖A − A*‖_F / ‖A‖_F` for a square operator.
    pub fn self_adjoint_residual(&self) -> f64 {
        rel_frobenius(&self.kernel, &self.kernel.adjoint())
    }

    pub fn check_self_adjoint(&self) -> Result<()> {
        if self.source != self.target {
            return Err(Error::Mismatch("self-adjointness of a non-square operator".into()));
        }
        let residual = self.self_adjoint_residual();
        if residual > SELF_ADJOINT_TOL {
            return Err(Error::NotSelfAdjoint { residual });
        }
        Ok(())
    }

    /// Relative Frobenius distance of the kernels, `‖A − B‖ / ‖B‖`.
    pub fn rel_diff(&self, reference: &KernelOperator) -> Result<f64> {
        self.same_shape(reference)?;
        Ok(rel_frobenius(&self.kernel, &reference.kernel))
    }

    /// Operator norm on `L²`, the largest singular value of the site matrix.
    ///
    /// Source and target measures are both uniform, so the weights only
    /// contribute the factor `(η_t/η_s)^{d/2}`.
    pub fn operator_norm(&self) -> f64 {
        let w = (self.target.cell_volume() / self.source.cell_volume()).sqrt();
        let sv = self.matrix().singular_values();
        sv.iter().cloned().fold(0.0, f64::max) * w
    }

    /// Smallest singular value of a square operator.
    pub fn min_singular_value(&self) -> f64 {
        let sv = self.matrix().singular_values();
        sv.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn norm1(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Boundary treatment of the first-order differences.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Ghost values are clamped: `f_{-1} = f_0`, `f_N = f_{N-1}`.
    Neumann,
    /// Rows whose stencil leaves the box are dropped (set to zero); intended
    /// for enlarged lattices where only interior rows are compared.
    FreeInterior,
}

fn step(x: &Site, axis: usize, delta: i64) -> Site {
    let mut y = x.clone();
    y.0[axis] += delta;
    y
}

fn check_axis(geom: &LatticeGeometry, axis: usize) -> Result<()> {
    if axis >= geom.d() {
        return Err(Error::Invalid(format!("axis {axis} in dimension {}", geom.d())));
    }
    Ok(())
}

/// `(∂f)(x) = (f(x + e_μ) − f(x)) / η`.
pub fn forward_diff(geom: LatticeGeometry, axis: usize, _bc: Boundary) -> Result<KernelOperator> {
    check_axis(&geom, axis)?;
    let h = geom.spacing();
    let n = geom.num_sites();
    let mut m = CMatrix::zeros(n, n);
    for (i, x) in geom.sites().enumerate() {
        if let Some(j) = geom.index_of(&step(&x, axis, 1)) {
            m[(i, j)] += c(1.0 / h);
            m[(i, i)] -= c(1.0 / h);
        }
    }
    KernelOperator::from_matrix(geom, geom, m)
}

/// `(∂†f)(x) = −(f(x) − f(x − e_μ)) / η`.
pub fn backward_diff(geom: LatticeGeometry, axis: usize, _bc: Boundary) -> Result<KernelOperator> {
    check_axis(&geom, axis)?;
    let h = geom.spacing();
    let n = geom.num_sites();
    let mut m = CMatrix::zeros(n, n);
    for (i, x) in geom.sites().enumerate() {
        if let Some(j) = geom.index_of(&step(&x, axis, -1)) {
            m[(i, j)] += c(1.0 / h);
            m[(i, i)] -= c(1.0 / h);
        }
    }
    KernelOperator::from_matrix(geom, geom, m)
}

/// Neumann Laplacian, the Kronecker sum of the clamped second differences.
pub fn neumann_laplacian(geom: LatticeGeometry) -> KernelOperator {
    let h2 = geom.spacing() * geom.spacing();
    let n = geom.num_sites();
    let mut m = CMatrix::zeros(n, n);
    for (i, x) in geom.sites().enumerate() {
        for axis in 0..geom.d() {
            for delta in [-1, 1] {
                if let Some(j) = geom.index_of(&step(&x, axis, delta)) {
                    m[(i, j)] += c(1.0 / h2);
                    m[(i, i)] -= c(1.0 / h2);
                }
            }
        }
    }
    KernelOperator::from_matrix(geom, geom, m).expect("square by construction")
}

/// Free second-difference stencil; rows of sites on the outer layer are zero.
pub fn free_laplacian_interior(geom: LatticeGeometry) -> KernelOperator {
    let h2 = geom.spacing() * geom.spacing();
    let n = geom.num_sites();
    let d = geom.d();
    let mut m = CMatrix::zeros(n, n);
    for (i, x) in geom.sites().enumerate() {
        let nbrs: Vec<Option<usize>> = (0..d)
            .flat_map(|axis| [-1, 1].map(|delta| geom.index_of(&step(&x, axis, delta))))
            .collect();
        if nbrs.iter().all(Option::is_some) {
            for j in nbrs.into_iter().flatten() {
                m[(i, j)] += c(1.0 / h2);
            }
            m[(i, i)] -= c(2.0 * d as f64 / h2);
        }
    }
    KernelOperator::from_matrix(geom, geom, m).expect("square by construction")
}

/// Block averaging `Q_j : L²(Ω) → L²(Ω_j)`.
pub fn averaging(geom: LatticeGeometry, j: u32) -> Result<KernelOperator> {
    let coarse = geom.coarse(j)?;
    let w = lpow(geom.l(), -((j as i32) * geom.d() as i32));
    let mut m = CMatrix::zeros(coarse.num_sites(), geom.num_sites());
    for (i, x) in geom.sites().enumerate() {
        let y = geom.block_label(j, &x);
        let r = coarse.index_of(&y).expect("label lies in the coarse lattice");
        m[(r, i)] = c(w);
    }
    KernelOperator::from_matrix(geom, coarse, m)
}

/// `Q_j^* Q_j`, the projection onto functions constant on the blocks `B_j`.
pub fn block_projector(geom: LatticeGeometry, j: u32) -> Result<KernelOperator> {
    let q = averaging(geom, j)?;
    q.adjoint().compose(&q)
}

/// `S_λ f = λ^{-d/2} f(λ^{-1} ·)` with `λ = L^ell`, mapping `Ω` onto `λΩ`.
pub fn scaling_unitary(geom: LatticeGeometry, ell: i32) -> KernelOperator {
    let target = geom.scaled(ell);
    let lambda = lpow(geom.l(), ell);
    let n = geom.num_sites();
    let m = CMatrix::identity(n, n) * c(lambda.powf(-(geom.d() as f64) / 2.0));
    KernelOperator::from_matrix(geom, target, m).expect("square by construction")
}

/// Eigenvalues of a self-adjoint operator together with optional closed forms.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    pub closed_form: Option<Vec<f64>>,
}

impl SpectrumReport {
    /// `max_j |λ_j − λ_j^closed| / max_j |λ_j^closed|`.
    pub fn max_relative_error(&self) -> Option<f64> {
        let cf = self.closed_form.as_ref()?;
        if cf.len() != self.eigenvalues.len() {
            return Some(f64::INFINITY);
        }
        let scale = cf.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        Some(
            self.eigenvalues
                .iter()
                .zip(cf)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                / scale,
        )
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Dense Hermitian eigensolve of a self-adjoint operator.
pub fn spectrum(a: &KernelOperator) -> Result<SpectrumReport> {
    a.check_self_adjoint()?;
    let m = a.matrix();
    let h = (&m + m.adjoint()) * c(0.5);
    let eigenvalues = sorted(h.symmetric_eigenvalues().iter().cloned().collect());
    let min_eigenvalue = eigenvalues[0];
    Ok(SpectrumReport { eigenvalues, min_eigenvalue, closed_form: None })
}

pub fn min_eigenvalue(a: &KernelOperator) -> Result<f64> {
    spectrum(a).map(|s| s.min_eigenvalue)
}

/// Closed-form spectrum `−(4/η²) sin²(πj/(2n))` of the 1d Neumann Laplacian.
pub fn laplacian_spectrum_1d(n: usize, eta: f64) -> SpectrumReport {
    let closed = sorted(
        (0..n)
            .map(|j| {
                let s = (std::f64::consts::PI * j as f64 / (2.0 * n as f64)).sin();
                -4.0 / (eta * eta) * s * s
            })
            .collect(),
    );
    SpectrumReport { min_eigenvalue: closed[0], eigenvalues: closed.clone(), closed_form: Some(closed) }
}

/// `U_n(α)` by the three-term recurrence.
pub fn chebyshev_u(n: usize, alpha: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 2.0 * alpha);
    if n == 0 {
        return prev;
    }
    for _ in 1..n {
        let next = 2.0 * alpha * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Roots `cos(jπ/(n+1))`, `j = 1..n`, of `U_n`, in ascending order.
pub fn chebyshev_roots(n: usize) -> Vec<f64> {
    sorted(
        (1..=n)
            .map(|j| (std::f64::consts::PI * j as f64 / (n as f64 + 1.0)).cos())
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, k: i32) -> LatticeGeometry {
        LatticeGeometry::patch(1, 3, k, n, 0).unwrap()
    }

    #[test]
    fn delta_values() {
        let g = LatticeGeometry::new(1, 3, 1, 2).unwrap();
        let d = delta_field(g, &Site(vec![4])).unwrap();
        assert!((d.get(&Site(vec![4])).unwrap().re - 3.0).abs() < 1e-15);
        assert!((d.norm().powi(2) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn two_site_inverse() {
        let g = line(2, 0);
        let a = neumann_laplacian(g).scale(-1.0).shift(1.0).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[c(2.0), c(-1.0), c(-1.0), c(2.0)]);
        assert_eq!(a.matrix(), expected);
        let f = Field::from_values(g, vec![c(0.3), C64::new(-1.0, 2.0)]).unwrap();
        let back = a.invert().unwrap().apply(&a.apply(&f).unwrap()).unwrap();
        assert!((back.values() - f.values()).norm() < 1e-14);
    }

    #[test]
    fn forward_difference_example() {
        let g = line(3, 0);
        let f = Field::from_values(g, vec![c(0.0), c(1.0), c(2.0)]).unwrap();
        let df = forward_diff(g, 0, Boundary::Neumann).unwrap().apply(&f).unwrap();
        let v: Vec<f64> = df.values().iter().map(|z| z.re).collect();
        assert_eq!(v, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn laplacian_two_sites() {
        let lap = neumann_laplacian(line(2, 0));
        let expected = CMatrix::from_row_slice(2, 2, &[c(-1.0), c(1.0), c(1.0), c(-1.0)]);
        assert_eq!(lap.matrix(), expected);
        let s = spectrum(&lap).unwrap();
        assert!((s.eigenvalues[0] + 2.0).abs() < 1e-14 && s.eigenvalues[1].abs() < 1e-14);
    }

    #[test]
    fn block_means() {
        let g = LatticeGeometry::new(1, 3, 1, 2).unwrap();
        let f = Field::from_values(
            g,
            [1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0].iter().map(|&v| c(v)).collect(),
        )
        .unwrap();
        let q = averaging(g, 1).unwrap().apply(&f).unwrap();
        let v: Vec<f64> = q.values().iter().map(|z| z.re).collect();
        assert_eq!(v, vec![2.0, 0.0, 0.0]);
    }

    #[test]
    fn chebyshev_small() {
        assert_eq!(chebyshev_u(0, 0.3), 1.0);
        assert_eq!(chebyshev_u(1, 0.3), 0.6);
        let r = chebyshev_roots(2);
        assert!((r[0] + 0.5).abs() < 1e-15 && (r[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn scaling_identity_at_zero() {
        let g = LatticeGeometry::new(2, 3, 1, 1).unwrap();
        let s = scaling_unitary(g, 0);
        assert_eq!(s, KernelOperator::identity(g));
    }
}
