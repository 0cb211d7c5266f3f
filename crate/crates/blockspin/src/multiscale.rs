//! Multiscale Green functions and the one-step renormalization identities.
//!
//! For a lattice `Ω` of spacing `η = L^{-k}` the Green function at scale `j`
//! is `G^η_j = [−Δ + μ̄_k + a_j (L^j η)^{-2} Q_j^* Q_j]^{-1}`; `G_k(Ω)` is the
//! case `j = k`. The fluctuation covariance `C^{(j)}` lives on the coarse
//! lattice `Ω_j` and links `G^η_j` to `G^η_{j+1}`.

use std::collections::BTreeSet;

use crate::lattice::{lpow, LatticeGeometry, Site};
use crate::operators::{
    averaging, block_projector, delta_field, min_eigenvalue, neumann_laplacian, scaling_unitary, Field,
    KernelOperator, C64,
};
use crate::{Error, Result};

/// Mass and penalty parameters `(a, μ̄_0)` with block ratio `L`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiscaleParams {
    pub a: f64,
    pub mu0: f64,
    pub l: u64,
}

impl MultiscaleParams {
    pub fn new(a: f64, mu0: f64, l: u64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Invalid(format!("a must be positive, got {a}")));
        }
        if !(mu0 >= 0.0 && mu0.is_finite()) {
            return Err(Error::Invalid(format!("mu0 must be non-negative, got {mu0}")));
        }
        if l < 3 || l.is_multiple_of(2) {
            return Err(Error::Invalid(format!("L must be odd and at least 3, got {l}")));
        }
        Ok(MultiscaleParams { a, mu0, l })
    }

    /// `a_j = a (1 − L^{-2}) / (1 − L^{-2j})` for `j ≥ 1`.
    pub fn a_j(&self, j: u32) -> f64 {
        a_closed(self.a, self.l, j)
    }

    /// `μ̄_k = L^{2k} μ̄_0`.
    pub fn mu_bar(&self, k: i32) -> f64 {
        lpow(self.l, 2 * k) * self.mu0
    }

    /// `ã_{j,ℓ} = a_j (L^ℓ η)^{-2}` on a lattice of spacing `η = L^{-k}`.
    pub fn a_tilde(&self, j: u32, ell: i32, k: i32) -> f64 {
        self.a_j(j) * lpow(self.l, -2 * (ell - k))
    }

    /// `λ_j = L^{k−j}`.
    pub fn lambda(&self, k: i32, j: u32) -> f64 {
        lpow(self.l, k - j as i32)
    }
}

/// Closed form of the penalty sequence.
pub fn a_closed(a: f64, l: u64, j: u32) -> f64 {
    let r = lpow(l, -2);
    a * (1.0 - r) / (1.0 - r.powi(j as i32))
}

/// `a_1 = a`, `a_{j+1} = a a_j / (a L^{-2} + a_j)`; returns `a_1..a_{j_max}`.
pub fn a_sequence(a: f64, l: u64, j_max: u32) -> Vec<f64> {
    let r = lpow(l, -2);
    let mut out = Vec::with_capacity(j_max as usize);
    let mut cur = a;
    for _ in 0..j_max {
        out.push(cur);
        cur = a * cur / (a * r + cur);
    }
    out
}

fn scale_index(geom: &LatticeGeometry) -> Result<u32> {
    u32::try_from(geom.k()).map_err(|_| Error::Geometry("negative scale index".into()))
}

/// `−Δ + μ̄_k` on `Ω`.
pub fn mass_laplacian(geom: LatticeGeometry, params: &MultiscaleParams) -> KernelOperator {
    neumann_laplacian(geom)
        .scale(-1.0)
        .shift(params.mu_bar(geom.k()))
        .expect("square")
}

/// `−Δ + μ̄_k + ã_{j,j} Q_j^* Q_j`, the operator inverted by [`green_j`].
pub fn defining_operator_j(geom: LatticeGeometry, params: &MultiscaleParams, j: u32) -> Result<KernelOperator> {
    if j == 0 {
        return Err(Error::Invalid("scale j must be at least 1".into()));
    }
    let p = block_projector(geom, j)?;
    mass_laplacian(geom, params).add(&p.scale(params.a_tilde(j, j as i32, geom.k())))
}

/// `−Δ + μ̄_k + a_k Q_k^* Q_k`.
pub fn defining_operator(geom: LatticeGeometry, params: &MultiscaleParams) -> Result<KernelOperator> {
    let k = scale_index(&geom)?;
    if k == 0 {
        return Err(Error::Invalid("G_k needs k ≥ 1".into()));
    }
    defining_operator_j(geom, params, k)
}

/// `G_k(Ω)`.
pub fn green_neumann(geom: LatticeGeometry, params: &MultiscaleParams) -> Result<KernelOperator> {
    defining_operator(geom, params)?.invert()
}

/// `G^η_j(Ω)`.
pub fn green_j(geom: LatticeGeometry, params: &MultiscaleParams, j: u32) -> Result<KernelOperator> {
    defining_operator_j(geom, params, j)?.invert()
}

/// `λ_j^{-2} S^* G_j(λ_j Ω) S`, built on the rescaled lattice of spacing `L^{-j}`.
pub fn green_j_via_scaling(geom: LatticeGeometry, params: &MultiscaleParams, j: u32) -> Result<KernelOperator> {
    let k = scale_index(&geom)?;
    if j == 0 || j > k {
        return Err(Error::Invalid(format!("scale j = {j} outside 1..={k}")));
    }
    let ell = k as i32 - j as i32;
    if ell == 0 {
        return green_neumann(geom, params);
    }
    let s = scaling_unitary(geom, ell);
    let g = green_neumann(geom.scaled(ell), params)?;
    let lam = params.lambda(k as i32, j);
    Ok(s.adjoint().compose(&g)?.compose(&s)?.scale(lam.powi(-2)))
}

/// Matrix-free form of `−Δ + μ̄_k + ã_{j,j} Q_j^* Q_j`.
#[derive(Clone, Debug)]
pub struct SparseDefining {
    geom: LatticeGeometry,
    neighbours: Vec<Vec<usize>>,
    block: Vec<usize>,
    block_count: usize,
    mass: f64,
    penalty: f64,
}

impl SparseDefining {
    pub fn new(geom: LatticeGeometry, params: &MultiscaleParams, j: u32) -> Result<Self> {
        if j == 0 {
            return Err(Error::Invalid("scale j must be at least 1".into()));
        }
        let coarse = geom.coarse(j)?;
        let mut neighbours = Vec::with_capacity(geom.num_sites());
        let mut block = Vec::with_capacity(geom.num_sites());
        for x in geom.sites() {
            let mut nb = Vec::new();
            for axis in 0..geom.d() {
                for delta in [-1i64, 1] {
                    let mut y = x.clone();
                    y.0[axis] += delta;
                    if let Some(i) = geom.index_of(&y) {
                        nb.push(i);
                    }
                }
            }
            neighbours.push(nb);
            block.push(coarse.index_of(&geom.block_label(j, &x)).expect("label in coarse lattice"));
        }
        Ok(SparseDefining {
            geom,
            neighbours,
            block,
            block_count: coarse.num_sites(),
            mass: params.mu_bar(geom.k()),
            penalty: params.a_tilde(j, j as i32, geom.k()),
        })
    }

    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        let h2 = self.geom.spacing().powi(2);
        let mut sums = vec![C64::new(0.0, 0.0); self.block_count];
        let mut counts = vec![0usize; self.block_count];
        for (i, &b) in self.block.iter().enumerate() {
            sums[b] += f[i];
            counts[b] += 1;
        }
        (0..f.len())
            .map(|i| {
                let lap: C64 = self.neighbours[i].iter().map(|&n| f[i] - f[n]).sum::<C64>() / h2;
                let b = self.block[i];
                lap + f[i] * self.mass + sums[b] / counts[b] as f64 * self.penalty
            })
            .collect()
    }

    /// Conjugate gradients until `‖r‖ ≤ tol ‖b‖`.
    pub fn solve(&self, rhs: &Field, tol: f64) -> Result<Field> {
        let b: Vec<C64> = rhs.values().iter().cloned().collect();
        let dot = |u: &[C64], v: &[C64]| -> C64 { u.iter().zip(v).map(|(a, b)| a.conj() * b).sum() };
        let bnorm = dot(&b, &b).re.sqrt();
        let mut x = vec![C64::new(0.0, 0.0); b.len()];
        if bnorm == 0.0 {
            return Field::from_values(self.geom, x);
        }
        let mut r = b.clone();
        let mut p = r.clone();
        let mut rr = dot(&r, &r).re;
        for _ in 0..20 * b.len().max(100) {
            if rr.sqrt() <= tol * bnorm {
                return Field::from_values(self.geom, x);
            }
            let ap = self.apply(&p);
            let alpha = rr / dot(&p, &ap).re;
            for i in 0..x.len() {
                x[i] += p[i] * alpha;
                r[i] -= ap[i] * alpha;
            }
            let rr_new = dot(&r, &r).re;
            let beta = rr_new / rr;
            for i in 0..p.len() {
                p[i] = r[i] + p[i] * beta;
            }
            rr = rr_new;
        }
        Err(Error::Invalid(format!("conjugate gradients stalled at residual {:.3e}", rr.sqrt() / bnorm)))
    }
}

/// Operators attached to one renormalization step.
#[derive(Clone, Debug)]
pub struct RgOperators {
    pub j: u32,
    /// `G^η_j(Ω)`.
    pub g: KernelOperator,
    /// `Δ^{(j)} = ã_{j,j} − ã_{j,j}^2 Q_j G^η_j Q_j^*` on `Ω_j`.
    pub delta: KernelOperator,
    /// `C^{(j)} = [Δ^{(j)} + a (L^{j+1}η)^{-2} Q^* Q]^{-1}` on `Ω_j`.
    pub c: KernelOperator,
    /// `A_j = [ã_{j,j} + ã_{1,j} L^{-2} Q^* Q]^{-1}` on `Ω_j`.
    pub a_op: KernelOperator,
    /// `H_j = ã_{j,j} G^η_j Q_j^*`, from `Ω_j` to `Ω`.
    pub h: KernelOperator,
    /// `C'_j = H_j C^{(j)} H_j^*` on `Ω`.
    pub c_prime: KernelOperator,
}

/// Build the step-`j` operators; needs `1 ≤ j ≤ k` and `j < m`.
pub fn rg_operators(geom: LatticeGeometry, params: &MultiscaleParams, j: u32) -> Result<RgOperators> {
    let k = scale_index(&geom)?;
    if j == 0 || j > k {
        return Err(Error::Invalid(format!("step j = {j} outside 1..={k}")));
    }
    let g = green_j(geom, params, j)?;
    let q = averaging(geom, j)?;
    let coarse = *q.target();
    let p1 = block_projector(coarse, 1)?;
    let b = params.a_tilde(j, j as i32, geom.k());
    let e = params.a_tilde(1, j as i32, geom.k()) * lpow(params.l, -2);

    let qgq = q.compose(&g)?.compose(&q.adjoint())?;
    let delta = KernelOperator::identity(coarse).scale(b).sub(&qgq.scale(b * b))?;
    let c = delta.add(&p1.scale(e))?.invert()?;
    let a_op = p1.scale(e).shift(b)?.invert()?;
    let h = g.compose(&q.adjoint())?.scale(b);
    let c_prime = h.compose(&c)?.compose(&h.adjoint())?;
    Ok(RgOperators { j, g, delta, c, a_op, h, c_prime })
}

/// `1/ã_{j,j} − ã_{j+1,j} L^{-2} / ã_{j,j}^2 · Q^* Q` on `Ω_j`.
pub fn a_closed_form(geom: LatticeGeometry, params: &MultiscaleParams, j: u32) -> Result<KernelOperator> {
    let coarse = geom.coarse(j)?;
    let p1 = block_projector(coarse, 1)?;
    let b = params.a_tilde(j, j as i32, geom.k());
    let w = params.a_tilde(j + 1, j as i32, geom.k()) * lpow(params.l, -2) / (b * b);
    p1.scale(-w).shift(1.0 / b)
}

/// Relative residual of `G^η_{j+1} = ã_{j,j}^2 G^η_j Q_j^* C^{(j)} Q_j G^η_j + G^η_j`.
pub fn rg_step_residual(geom: LatticeGeometry, params: &MultiscaleParams, j: u32) -> Result<f64> {
    let ops = rg_operators(geom, params, j)?;
    let next = green_j(geom, params, j + 1)?;
    ops.c_prime.add(&ops.g)?.rel_diff(&next)
}

/// Relative residual of `C^{(j)} = A_j + ã_{j,j}^2 A_j Q_j G^η_{j+1} Q_j^* A_j`.
pub fn c_expansion_residual(geom: LatticeGeometry, params: &MultiscaleParams, j: u32) -> Result<f64> {
    let ops = rg_operators(geom, params, j)?;
    let q = averaging(geom, j)?;
    let next = green_j(geom, params, j + 1)?;
    let b = params.a_tilde(j, j as i32, geom.k());
    let inner = q.compose(&next)?.compose(&q.adjoint())?;
    let rhs = ops.a_op.add(&ops.a_op.compose(&inner)?.compose(&ops.a_op)?.scale(b * b))?;
    ops.c.rel_diff(&rhs)
}

/// Deterministic sample of sites: corners, centre, one interior point per orthant.
pub fn sample_sites(geom: &LatticeGeometry) -> Vec<Site> {
    let d = geom.d();
    let n = geom.n() as i64;
    let o = geom.origin();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut push = |s: Site, out: &mut Vec<Site>| {
        if seen.insert(s.clone()) {
            out.push(s);
        }
    };
    for mask in 0..(1usize << d) {
        let s = (0..d).map(|mu| if mask >> mu & 1 == 1 { o + n - 1 } else { o }).collect();
        push(Site(s), &mut out);
    }
    push(Site(vec![o + (n - 1) / 2; d]), &mut out);
    for mask in 0..(1usize << d) {
        let s = (0..d).map(|mu| if mask >> mu & 1 == 1 { o + (3 * n) / 4 } else { o + n / 4 }).collect();
        push(Site(s), &mut out);
    }
    out
}

/// Scale-`j` term of the rescaled telescope, `λ_j^{-2} S^* C'_j(λ_jΩ) S`.
///
/// Everything is assembled on the rescaled lattice `λ_jΩ` of spacing `L^{-j}`,
/// where `C_j(λ_jΩ) = [a_j − a_j^2 Q G_j Q^* + (a/L^2) Q^*Q]^{-1}` and
/// `H_j = a_j G_j(λ_jΩ) Q_j^*`.
pub fn rescaled_fluctuation_term(geom: LatticeGeometry, params: &MultiscaleParams, j: u32) -> Result<KernelOperator> {
    let k = scale_index(&geom)?;
    if j == 0 || j >= k {
        return Err(Error::Invalid(format!("term j = {j} outside 1..{k}")));
    }
    let ell = k as i32 - j as i32;
    let scaled = geom.scaled(ell);
    let (c_j, g) = rescaled_c(scaled, params, j)?;
    let q = averaging(scaled, j)?;
    let h = g.compose(&q.adjoint())?.scale(params.a_j(j));
    let c_prime = h.compose(&c_j)?.compose(&h.adjoint())?;
    let s = scaling_unitary(geom, ell);
    let lam = params.lambda(k as i32, j);
    Ok(s.adjoint().compose(&c_prime)?.compose(&s)?.scale(lam.powi(-2)))
}

/// `Δ_j(λ_jΩ)` built on a lattice of spacing `L^{-j}`.
pub fn rescaled_delta(scaled: LatticeGeometry, params: &MultiscaleParams, j: u32) -> Result<(KernelOperator, KernelOperator)> {
    let g = green_neumann(scaled, params)?;
    let q = averaging(scaled, j)?;
    let aj = params.a_j(j);
    let qgq = q.compose(&g)?.compose(&q.adjoint())?;
    let delta = KernelOperator::identity(*q.target()).scale(aj).sub(&qgq.scale(aj * aj))?;
    Ok((delta, g))
}

/// `C_j(λ_jΩ)` together with `G_j(λ_jΩ)`.
pub fn rescaled_c(scaled: LatticeGeometry, params: &MultiscaleParams, j: u32) -> Result<(KernelOperator, KernelOperator)> {
    let (delta, g) = rescaled_delta(scaled, params, j)?;
    let p1 = block_projector(*delta.source(), 1)?;
    let c = delta.add(&p1.scale(params.a * lpow(params.l, -2)))?.invert()?;
    Ok((c, g))
}

/// Residuals of `Δ_j(λ_jΩ) = λ_j^{-2} S Δ^{(j)} S^*` and `C_j(λ_jΩ) = λ_j^2 S C^{(j)} S^*`.
pub fn dgc_residuals(geom: LatticeGeometry, params: &MultiscaleParams, j: u32) -> Result<(f64, f64)> {
    let k = scale_index(&geom)?;
    let ops = rg_operators(geom, params, j)?;
    let ell = k as i32 - j as i32;
    let scaled = geom.scaled(ell);
    let (delta_direct, _) = rescaled_delta(scaled, params, j)?;
    let (c_direct, _) = rescaled_c(scaled, params, j)?;
    let s = scaling_unitary(*ops.delta.source(), ell);
    let lam = params.lambda(k as i32, j);
    let delta_conj = s.compose(&ops.delta)?.compose(&s.adjoint())?.scale(lam.powi(-2));
    let c_conj = s.compose(&ops.c)?.compose(&s.adjoint())?.scale(lam.powi(2));
    Ok((delta_direct.rel_diff(&delta_conj)?, c_direct.rel_diff(&c_conj)?))
}

/// Residuals of the scaling relations between `Ω` and `λ_jΩ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingResiduals {
    /// `Δ(λΩ) S = λ^{-2} S Δ(Ω)`.
    pub laplacian: f64,
    /// `Q_j(λΩ) S = S_c Q_j(Ω)`.
    pub averaging: f64,
    /// `G^η_j(Ω) = λ^{-2} S^* G_j(λΩ) S`.
    pub green: f64,
    pub delta: f64,
    pub c: f64,
}

impl ScalingResiduals {
    pub fn max(&self) -> f64 {
        [self.laplacian, self.averaging, self.green, self.delta, self.c]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// All scaling residuals at step `j`.
pub fn scaling_residuals(geom: LatticeGeometry, params: &MultiscaleParams, j: u32) -> Result<ScalingResiduals> {
    let k = scale_index(&geom)?;
    if j == 0 || j > k {
        return Err(Error::Invalid(format!("scale j = {j} outside 1..={k}")));
    }
    let ell = k as i32 - j as i32;
    let lam = params.lambda(k as i32, j);
    let s = scaling_unitary(geom, ell);
    let scaled = geom.scaled(ell);
    let lap = neumann_laplacian(scaled)
        .compose(&s)?
        .rel_diff(&s.compose(&neumann_laplacian(geom))?.scale(lam.powi(-2)))?;
    let q = averaging(geom, j)?;
    let sc = scaling_unitary(*q.target(), ell);
    let avg = averaging(scaled, j)?.compose(&s)?.rel_diff(&sc.compose(&q)?)?;
    let green = green_j_via_scaling(geom, params, j)?.rel_diff(&green_j(geom, params, j)?)?;
    let (delta, c) = dgc_residuals(geom, params, j)?;
    Ok(ScalingResiduals { laplacian: lap, averaging: avg, green, delta, c })
}

/// Maximum relative discrepancy of the rescaled telescope on sampled deltas.
///
/// Left side: `G_k(Ω) δ_x`. Right side: the rescaled fluctuation terms for
/// `j = 1..k−1` plus `λ_1^{-2} S^* G_1(λ_1Ω) S`.
pub fn rg_telescope_residual(geom: LatticeGeometry, params: &MultiscaleParams) -> Result<f64> {
    let k = scale_index(&geom)?;
    if k == 0 {
        return Err(Error::Invalid("telescope needs k ≥ 1".into()));
    }
    let lhs = green_neumann(geom, params)?;
    let mut rhs = green_j_via_scaling(geom, params, 1)?;
    for j in 1..k {
        rhs = rhs.add(&rescaled_fluctuation_term(geom, params, j)?)?;
    }
    let mut worst: f64 = 0.0;
    for x in sample_sites(&geom) {
        let f = delta_field(geom, &x)?;
        let a = lhs.apply(&f)?;
        let b = rhs.apply(&f)?;
        worst = worst.max(a.sub(&b)?.norm() / a.norm());
    }
    Ok(worst)
}

/// Ratio `λ_min(−Δ + μ̄_k + a_k Q^*Q) / λ_min(−Δ + 1)` for each geometry.
pub fn positivity_report(geoms: &[LatticeGeometry], params: &MultiscaleParams) -> Result<Vec<(i32, f64)>> {
    geoms
        .iter()
        .map(|&g| {
            let num = min_eigenvalue(&defining_operator(g, params)?)?;
            let den = min_eigenvalue(&neumann_laplacian(g).scale(-1.0).shift(1.0)?)?;
            Ok((g.k(), num / den))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_sequence_values() {
        let s = a_sequence(1.0, 3, 3);
        assert_eq!(s[0], 1.0);
        assert!((s[1] - 0.9).abs() < 1e-15);
        assert!((a_closed(1.0, 3, 2) - 0.9).abs() < 1e-15);
        assert!((a_closed(1.0, 3, 200) - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn sparse_solve_matches_dense() {
        let g = LatticeGeometry::new(2, 3, 1, 2).unwrap();
        let p = MultiscaleParams::new(1.0, 0.1, 3).unwrap();
        let f = Field::from_fn(g, |x| C64::new((x.0[0] + 2 * x.0[1]) as f64, 0.0));
        let dense = green_neumann(g, &p).unwrap().apply(&f).unwrap();
        let sparse = SparseDefining::new(g, &p, 1).unwrap().solve(&f, 1e-13).unwrap();
        assert!(dense.sub(&sparse).unwrap().norm() <= 1e-11 * dense.norm());
    }

    #[test]
    fn sample_sites_in_range() {
        let g = LatticeGeometry::new(2, 3, 1, 2).unwrap();
        let s = sample_sites(&g);
        assert!(s.iter().all(|x| g.contains(x)));
        assert!(s.contains(&Site(vec![4, 4])));
        assert!(s.contains(&Site(vec![8, 0])));
        assert_eq!(s.len(), 9);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(MultiscaleParams::new(0.0, 0.0, 3).is_err());
        assert!(MultiscaleParams::new(1.0, -0.1, 3).is_err());
        assert!(MultiscaleParams::new(1.0, 0.0, 4).is_err());
    }
}
