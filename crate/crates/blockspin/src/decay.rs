//! Exponential conjugation of the defining operator and decay-rate fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lattice::{dist, LatticeGeometry, Site};
use crate::multiscale::{defining_operator, green_neumann, MultiscaleParams, SparseDefining};
use crate::operators::{Field, KernelOperator, C64};
use crate::{Error, Result};

/// Minimum number of profile points inside a fit window.
pub const MIN_FIT_POINTS: usize = 5;

/// Largest lattice whose profile is taken from a dense inverse.
pub const DENSE_LIMIT: usize = 1000;

/// Relative residual for matrix-free profile solves.
pub const CG_TOL: f64 = 1e-13;

/// Default `q` scan.
pub const Q_GRID: [f64; 11] = [0.0, 0.01, -0.01, 0.02, -0.02, 0.05, -0.05, 0.1, -0.1, 0.2, -0.2];

/// Least-squares fit `log m ≈ log_prefactor − rate · dist`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayFit {
    pub log_prefactor: f64,
    pub rate: f64,
    pub window: (f64, f64),
    pub rms_residual: f64,
    pub point_count: usize,
}

/// Default window `[1, 0.8 · max distance]`.
pub fn default_window(profile: &[(f64, f64)]) -> (f64, f64) {
    let dmax = profile.iter().map(|p| p.0).fold(0.0, f64::max);
    (1.0, 0.8 * dmax)
}

/// Ordinary least squares of `log magnitude` against distance inside `window`.
pub fn fit_decay(profile: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<DecayFit> {
    let window = window.unwrap_or_else(|| default_window(profile));
    let pts: Vec<(f64, f64)> = profile
        .iter()
        .filter(|(d, m)| *d >= window.0 && *d <= window.1 && *m > 0.0 && m.is_finite())
        .map(|&(d, m)| (d, m.ln()))
        .collect();
    let n = pts.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::DegenerateWindow { points: n, needed: MIN_FIT_POINTS });
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateWindow { points: 1, needed: 2 });
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(DecayFit {
        log_prefactor: intercept,
        rate: -slope,
        window,
        rms_residual: (rss / nf).sqrt(),
        point_count: n,
    })
}

/// `e_{-q} A e_q`, i.e. the kernel `K(x, y) e^{q·(y−x)}`.
pub fn conjugate(op: &KernelOperator, q: &[f64]) -> Result<KernelOperator> {
    let g = *op.source();
    if g != *op.target() || q.len() != g.d() {
        return Err(Error::Mismatch("conjugation needs a square operator and q of length d".into()));
    }
    let phase: Vec<f64> = g
        .sites()
        .map(|x| g.position(&x).iter().zip(q).map(|(a, b)| a * b).sum())
        .collect();
    let mut kernel = op.kernel().clone();
    for (i, pi) in phase.iter().enumerate() {
        for (j, pj) in phase.iter().enumerate() {
            kernel[(i, j)] *= (pj - pi).exp();
        }
    }
    KernelOperator::from_kernel(g, g, kernel)
}

/// `D_q = e_{-q} [−Δ + μ̄_k + a_k Q_k^*Q_k] e_q`.
pub fn conjugated_operator(geom: LatticeGeometry, params: &MultiscaleParams, q: &[f64]) -> Result<KernelOperator> {
    conjugate(&defining_operator(geom, params)?, q)
}

/// Multiplication by `e^{q·x}`.
pub fn weight(f: &Field, q: &[f64]) -> Field {
    let g = *f.geometry();
    Field::from_fn(g, |x| {
        let s: f64 = g.position(x).iter().zip(q).map(|(a, b)| a * b).sum();
        f.get(x).unwrap() * s.exp()
    })
}

/// Per-`q` conjugation data for `G_k(Ω)`.
#[derive(Clone, Debug)]
pub struct CtReport {
    pub q_values: Vec<f64>,
    /// Smallest singular value of `D_q`.
    pub min_singular_value: Vec<f64>,
    /// `‖e_{-q} G_k e_q‖`.
    pub bound_constant: Vec<f64>,
    /// `‖e_{-q} G e_q − D_q^{-1}‖ / ‖D_q^{-1}‖`.
    pub covariance_residual: Vec<f64>,
    /// Largest `|⟨f, G f'⟩| / (C_q ‖e_q f‖ ‖e_{-q} f'‖)` over box pairs and `q`.
    pub max_violation: f64,
    /// Fit of `|⟨f, G f'⟩| / (‖f‖‖f'‖)` against the box-label distance,
    /// absent when too few box pairs fall in the window.
    pub box_fit: Option<DecayFit>,
    pub seed: u64,
}

fn box_fields(geom: LatticeGeometry, seed: u64) -> Result<Vec<(Vec<f64>, Field)>> {
    let k = u32::try_from(geom.k()).map_err(|_| Error::Geometry("negative scale".into()))?;
    let coarse = geom.coarse(k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for y in coarse.sites() {
        let mut vals = vec![C64::new(0.0, 0.0); geom.num_sites()];
        for x in geom.block_sites(k, &y)? {
            vals[geom.index_of(&x).unwrap()] = C64::new(0.5 + rng.random::<f64>(), 0.0);
        }
        out.push((coarse.position(&y), Field::from_values(geom, vals)?));
    }
    Ok(out)
}

/// Combes–Thomas data over a list of scalar `q`, applied equally on every axis.
pub fn ct_bound_report(geom: LatticeGeometry, params: &MultiscaleParams, q_list: &[f64], seed: u64) -> Result<CtReport> {
    let g = green_neumann(geom, params)?;
    let boxes = box_fields(geom, seed)?;
    let gf: Vec<Field> = boxes.iter().map(|(_, f)| g.apply(f)).collect::<Result<_>>()?;

    let mut profile = Vec::new();
    for (a, (ya, fa)) in boxes.iter().enumerate() {
        for (b, (yb, fb)) in boxes.iter().enumerate() {
            if a < b {
                let v = fa.inner(&gf[b])?.norm() / (fa.norm() * fb.norm());
                profile.push((dist(ya, yb), v));
            }
        }
    }
    let box_fit = match fit_decay(&profile, None) {
        Ok(f) => Some(f),
        Err(Error::DegenerateWindow { .. }) => None,
        Err(e) => return Err(e),
    };

    let mut report = CtReport {
        q_values: q_list.to_vec(),
        min_singular_value: Vec::new(),
        bound_constant: Vec::new(),
        covariance_residual: Vec::new(),
        max_violation: 0.0,
        box_fit,
        seed,
    };
    for &qs in q_list {
        let q = vec![qs; geom.d()];
        let dq = conjugated_operator(geom, params, &q)?;
        let conj_g = conjugate(&g, &q)?;
        let cq = conj_g.operator_norm();
        report.min_singular_value.push(dq.min_singular_value());
        report.bound_constant.push(cq);
        report.covariance_residual.push(conj_g.rel_diff(&dq.invert()?)?);
        let minus: Vec<f64> = q.iter().map(|v| -v).collect();
        for (_, fa) in &boxes {
            let wa = weight(fa, &q).norm();
            for (b, (_, fb)) in boxes.iter().enumerate() {
                let v = fa.inner(&gf[b])?.norm();
                let bound = cq * wa * weight(fb, &minus).norm();
                report.max_violation = report.max_violation.max(v / bound);
            }
        }
    }
    Ok(report)
}

/// Support of a decay-profile source.
#[derive(Clone, Debug, PartialEq)]
pub enum SourceSpec {
    Site(Site),
    /// Block `B_j(y)`.
    Block { j: u32, label: Site },
}

fn source_field(geom: LatticeGeometry, src: &SourceSpec) -> Result<(Field, Vec<Vec<f64>>)> {
    let support = match src {
        SourceSpec::Site(x) => {
            if !geom.contains(x) {
                return Err(Error::OutOfRange(x.to_string()));
            }
            vec![x.clone()]
        }
        SourceSpec::Block { j, label } => geom.block_sites(*j, label)?,
    };
    let f = Field::from_fn(geom, |x| if support.contains(x) { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    Ok((f, support.iter().map(|s| geom.position(s)).collect()))
}

/// `(dist(x, supp f), |(G_k f)(x)|)` for every site outside the support.
///
/// Lattices above [`DENSE_LIMIT`] sites are solved matrix-free.
pub fn decay_profile(geom: LatticeGeometry, params: &MultiscaleParams, src: &SourceSpec) -> Result<Vec<(f64, f64)>> {
    if geom.num_sites() <= DENSE_LIMIT {
        let g = green_neumann(geom, params)?;
        return profile_of(&g, geom, src);
    }
    let k = u32::try_from(geom.k()).map_err(|_| Error::Geometry("negative scale".into()))?;
    let (f, supp) = source_field(geom, src)?;
    let gf = SparseDefining::new(geom, params, k)?.solve(&f, CG_TOL)?;
    profile_from_field(&gf, &supp)
}

fn profile_from_field(gf: &Field, supp: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    let geom = *gf.geometry();
    let mut out = Vec::new();
    for x in geom.sites() {
        let dx = crate::lattice::dist_to_set(&geom.position(&x), supp)?;
        if dx > 0.0 {
            out.push((dx, gf.get(&x).unwrap().norm()));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Profile of an arbitrary operator on `Ω` against an indicator source.
pub fn profile_of(op: &KernelOperator, geom: LatticeGeometry, src: &SourceSpec) -> Result<Vec<(f64, f64)>> {
    let (f, supp) = source_field(geom, src)?;
    profile_from_field(&op.apply(&f)?, &supp)
}

/// One line of the sup-norm decay table.
#[derive(Clone, Debug)]
pub struct LinfRow {
    pub d: usize,
    pub k: i32,
    pub m: u32,
    pub fit: DecayFit,
    /// `max |(G f)(x)| / (e^{-rate·dist} ‖f‖_∞)` over the profile.
    pub max_ratio: f64,
}

/// Fits for a family of geometries, each with the unit block at the origin as source.
pub fn linf_report(geoms: &[LatticeGeometry], params: &MultiscaleParams) -> Result<Vec<LinfRow>> {
    geoms
        .iter()
        .map(|&g| {
            let k = u32::try_from(g.k()).map_err(|_| Error::Geometry("negative scale".into()))?;
            let src = SourceSpec::Block { j: k, label: Site(vec![0; g.d()]) };
            let profile = decay_profile(g, params, &src)?;
            let fit = fit_decay(&profile, None)?;
            let max_ratio = profile
                .iter()
                .map(|(d, m)| m / (-fit.rate * d).exp())
                .fold(0.0, f64::max);
            Ok(LinfRow { d: g.d(), k: g.k(), m: g.m().unwrap_or(0), fit, max_ratio })
        })
        .collect()
}

/// `|a − b| / min(|a|, |b|)`.
pub fn relative_drift(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().min(b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_profile() {
        let p: Vec<(f64, f64)> = (0..20).map(|i| {
            let d = i as f64 * 0.5;
            (d, 3.0 * (-0.7 * d).exp())
        }).collect();
        let fit = fit_decay(&p, None).unwrap();
        assert!((fit.rate - 0.7).abs() < 1e-10);
        assert!((fit.log_prefactor - 3f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn degenerate_window() {
        let p = vec![(1.0, 1.0), (2.0, 0.5), (3.0, 0.2)];
        assert!(matches!(fit_decay(&p, None), Err(Error::DegenerateWindow { .. })));
    }
}
