//! Free-lattice Green functions through their Fourier symbols.
//!
//! Conventions: `f̂(p) = (2π)^{-d/2} η^d Σ_x e^{-ip·x} f(x)` on the torus
//! `[−π/η, π/η)^d`. Block averaging `Q_k` onto `Z^d` has the symbol
//! `u(p) = η^d Π (1 − e^{-ip_μ}) / (1 − e^{-ip_μ η})`, and for each `p` the
//! points `p + 2πℓ`, `ℓ ∈ [−(L^k−1)/2, (L^k−1)/2]^d`, form the orbit mixed
//! by `Q_k^* Q_k`. Kernels are evaluated by midpoint quadrature on a grid of
//! `M` points per axis with `M` an even multiple of `L^k`, so no node lies on
//! `2πZ^d`.

use std::f64::consts::PI;

use crate::lattice::{lpow, LatticeGeometry};
use crate::multiscale::MultiscaleParams;
use crate::operators::{block_projector, Field, C64};
use crate::{Error, Result};

/// Floor for the normalized denominator inside the strip.
pub const DENOMINATOR_FLOOR: f64 = 0.1;

/// Largest strip half-width accepted by the strip-bound report.
pub const MAX_STRIP: f64 = 0.2;

fn cx(re: f64) -> C64 {
    C64::new(re, 0.0)
}

const I: C64 = C64::new(0.0, 1.0);

/// `sin z / z` with a series near the origin.
pub fn sinc(z: C64) -> C64 {
    if z.norm() < 1e-3 {
        let z2 = z * z;
        cx(1.0) - z2 / 6.0 + z2 * z2 / 120.0 - z2 * z2 * z2 / 5040.0
    } else {
        z.sin() / z
    }
}

/// Derivative of [`sinc`].
pub fn sinc_prime(z: C64) -> C64 {
    if z.norm() < 1e-3 {
        let z2 = z * z;
        -z / 3.0 + z * z2 / 30.0 - z * z2 * z2 / 840.0
    } else {
        (z.cos() - z.sin() / z) / z
    }
}

/// Pairwise summation for a deterministic, well-conditioned reduction order.
pub fn pairwise_sum(v: &[C64]) -> C64 {
    if v.len() <= 16 {
        return v.iter().fold(cx(0.0), |a, b| a + b);
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Data of the free problem `(−Δ + μ̄_k + a_k Q_k^*Q_k) g = f` on `ηZ^d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeSetup {
    pub d: usize,
    pub l: u64,
    pub k: u32,
    /// Penalty `a_k`.
    pub a: f64,
    /// `μ̄_0`.
    pub mu0: f64,
}

impl FreeSetup {
    pub fn new(d: usize, k: u32, params: &MultiscaleParams) -> Result<Self> {
        if d == 0 || d > 3 {
            return Err(Error::Invalid(format!("dimension {d} outside 1..=3")));
        }
        if k == 0 {
            return Err(Error::Invalid("free Green functions need k ≥ 1".into()));
        }
        Ok(FreeSetup { d, l: params.l, k, a: params.a_j(k), mu0: params.mu0 })
    }

    pub fn eta(&self) -> f64 {
        lpow(self.l, -(self.k as i32))
    }

    /// `L^k`.
    pub fn nk(&self) -> usize {
        (self.l as usize).pow(self.k)
    }

    pub fn half_range(&self) -> i64 {
        (self.nk() as i64 - 1) / 2
    }

    /// All shifts `ℓ` of the admissible box, `ℓ = 0` first.
    pub fn shifts(&self) -> Vec<Vec<i64>> {
        let h = self.half_range();
        let w = self.nk();
        let mut out = vec![vec![0; self.d]];
        for idx in 0..w.pow(self.d as u32) {
            let mut rem = idx;
            let mut l = vec![0i64; self.d];
            for mu in (0..self.d).rev() {
                l[mu] = (rem % w) as i64 - h;
                rem /= w;
            }
            if l.iter().any(|&v| v != 0) {
                out.push(l);
            }
        }
        out
    }
}

/// Reduce the real part into `[−π/η, π/η)`.
fn reduce(z: C64, eta: f64) -> C64 {
    let period = 2.0 * PI / eta;
    let shift = ((z.re + PI / eta) / period).floor();
    C64::new(z.re - shift * period, z.im)
}

/// One-axis factor of `u`, `η (1 − e^{-iz}) / (1 − e^{-izη})`.
pub fn u_axis(z: C64, eta: f64) -> C64 {
    let z = reduce(z, eta);
    (-I * z * (1.0 - eta) / 2.0).exp() * sinc(z / 2.0) / sinc(z * eta / 2.0)
}

/// Analytic continuation of `conj u(p)` from real `p`.
pub fn ubar_axis(z: C64, eta: f64) -> C64 {
    let z = reduce(z, eta);
    (I * z * (1.0 - eta) / 2.0).exp() * sinc(z / 2.0) / sinc(z * eta / 2.0)
}

/// `u(z)`, the symbol of `Q_k^*`.
pub fn u_kernel(z: &[C64], eta: f64) -> C64 {
    z.iter().map(|&zm| u_axis(zm, eta)).product()
}

/// `(4/η²)[Σ sin²(z_μ η/2) + μ̄_0/4]`, the symbol of `−Δ + μ̄_k`.
pub fn laplacian_symbol(z: &[C64], eta: f64, mu0: f64) -> C64 {
    let s: C64 = z.iter().map(|&zm| (zm * eta / 2.0).sin().powi(2)).sum();
    (s + mu0 / 4.0) * (4.0 / (eta * eta))
}

/// `u(z + 2πℓ) / Δ(z + 2πℓ)`.
pub fn u_delta(z: &[C64], ell: &[i64], setup: &FreeSetup) -> C64 {
    let eta = setup.eta();
    let zs: Vec<C64> = z.iter().zip(ell).map(|(&a, &l)| a + 2.0 * PI * l as f64).collect();
    u_kernel(&zs, eta) / laplacian_symbol(&zs, eta, setup.mu0)
}

/// `⟨⟨u, u_Δ⟩⟩(z) = Σ_ℓ ū(z+2πℓ) u(z+2πℓ) / Δ(z+2πℓ)`.
pub fn bracket(z: &[C64], setup: &FreeSetup) -> C64 {
    let eta = setup.eta();
    setup
        .shifts()
        .iter()
        .map(|ell| {
            let zs: Vec<C64> = z.iter().zip(ell).map(|(&a, &l)| a + 2.0 * PI * l as f64).collect();
            let uu: C64 = zs.iter().map(|&w| u_axis(w, eta) * ubar_axis(w, eta)).product();
            uu / laplacian_symbol(&zs, eta, setup.mu0)
        })
        .sum()
}

/// Values along one orbit `z + 2πℓ`.
struct Orbit {
    d: Vec<C64>,
    u: Vec<C64>,
    ubar: Vec<C64>,
}

fn orbit(z: &[C64], setup: &FreeSetup, shifts: &[Vec<i64>]) -> Orbit {
    let eta = setup.eta();
    let h = setup.half_range();
    let w = setup.nk();
    // per-axis tables indexed by ℓ_μ + h
    let mut ua = vec![vec![cx(0.0); w]; setup.d];
    let mut ub = vec![vec![cx(0.0); w]; setup.d];
    let mut s2 = vec![vec![cx(0.0); w]; setup.d];
    for mu in 0..setup.d {
        for (i, l) in (-h..=h).enumerate() {
            let zz = z[mu] + 2.0 * PI * l as f64;
            ua[mu][i] = u_axis(zz, eta);
            ub[mu][i] = ubar_axis(zz, eta);
            s2[mu][i] = (zz * eta / 2.0).sin().powi(2);
        }
    }
    let scale = 4.0 / (eta * eta);
    let mut o = Orbit { d: Vec::with_capacity(shifts.len()), u: Vec::new(), ubar: Vec::new() };
    for ell in shifts {
        let mut uu = cx(1.0);
        let mut vv = cx(1.0);
        let mut ss = cx(setup.mu0 / 4.0);
        for mu in 0..setup.d {
            let i = (ell[mu] + h) as usize;
            uu *= ua[mu][i];
            vv *= ub[mu][i];
            ss += s2[mu][i];
        }
        o.d.push(ss * scale);
        o.u.push(uu);
        o.ubar.push(vv);
    }
    o
}

/// `ĝ(z)` for source data `F_ℓ = f̂(z + 2πℓ)`, regularized around the orbit
/// member where the symbol is smallest.
fn solve_orbit(o: &Orbit, f: &[C64], a: f64) -> C64 {
    let s = (0..o.d.len())
        .min_by(|&i, &j| o.d[i].norm().total_cmp(&o.d[j].norm()))
        .unwrap_or(0);
    if s == 0 {
        let mut num = f[0];
        let mut tail = cx(0.0);
        for l in 1..o.d.len() {
            num += a * (f[0] * o.u[l] * o.ubar[l] - o.u[0] * o.ubar[l] * f[l]) / o.d[l];
            tail += o.u[l] * o.ubar[l] / o.d[l];
        }
        let den = o.d[0] + a * o.u[0] * o.ubar[0] + a * o.d[0] * tail;
        num / den
    } else {
        let ds = o.d[s];
        let mut n = cx(0.0);
        let mut b = ds;
        for l in 0..o.d.len() {
            let r = if l == s { cx(1.0) } else { ds / o.d[l] };
            n += o.ubar[l] * f[l] * r;
            b += a * o.u[l] * o.ubar[l] * r;
        }
        f[0] / o.d[0] - a * o.u[0] * n / (o.d[0] * b)
    }
}

/// `Ĝ_k f̂` at `z` given `f̂` on the orbit of `z`.
pub fn free_apply_ghat(z: &[C64], setup: &FreeSetup, fhat: impl Fn(&[C64]) -> C64) -> C64 {
    let shifts = setup.shifts();
    let o = orbit(z, setup, &shifts);
    let f: Vec<C64> = shifts
        .iter()
        .map(|ell| {
            let zs: Vec<C64> = z.iter().zip(ell).map(|(&a, &l)| a + 2.0 * PI * l as f64).collect();
            fhat(&zs)
        })
        .collect();
    solve_orbit(&o, &f, setup.a)
}

/// Symbol of `−Δ + μ̄_k + a_k Q^*Q` applied to `ĝ` sampled along the orbit.
pub fn apply_symbol(z: &[C64], setup: &FreeSetup, ghat: impl Fn(&[C64]) -> C64) -> C64 {
    let shifts = setup.shifts();
    let o = orbit(z, setup, &shifts);
    let g: Vec<C64> = shifts
        .iter()
        .map(|ell| {
            let zs: Vec<C64> = z.iter().zip(ell).map(|(&a, &l)| a + 2.0 * PI * l as f64).collect();
            ghat(&zs)
        })
        .collect();
    let br: C64 = (0..g.len()).map(|l| o.ubar[l] * g[l]).sum();
    o.d[0] * g[0] + setup.a * o.u[0] * br
}

/// Source of a free kernel column.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FreeSource {
    /// Lattice delta at a site of `ηZ^d` (fine indices).
    Point(Vec<i64>),
    /// `Q_k^* δ_y` for a unit block label `y ∈ Z^d`.
    Block(Vec<i64>),
}

/// Midpoint torus grid with `M` points per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusGrid {
    pub d: usize,
    pub m: usize,
    pub eta: f64,
}

impl TorusGrid {
    pub fn new(setup: &FreeSetup, m: usize) -> Result<Self> {
        let nk = setup.nk();
        if !m.is_multiple_of(2 * nk) || m < 4 * nk {
            return Err(Error::Invalid(format!("M = {m} must be an even multiple of L^k = {nk}, at least 4 L^k")));
        }
        Ok(TorusGrid { d: setup.d, m, eta: setup.eta() })
    }

    pub fn step(&self) -> f64 {
        2.0 * PI / (self.eta * self.m as f64)
    }

    pub fn axis_points(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.m).map(|i| -PI / self.eta + (i as f64 + 0.5) * h).collect()
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    fn point(&self, axis: &[f64], mut idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.d];
        for mu in (0..self.d).rev() {
            p[mu] = axis[idx % self.m];
            idx /= self.m;
        }
        p
    }
}

/// Quadrature controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    /// Starting `M` as a multiple of `L^k`.
    pub m_init_factor: usize,
    /// Relative change under `M → 2M` accepted as converged.
    pub tol: f64,
    pub max_doublings: u32,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature { m_init_factor: 8, tol: 1e-8, max_doublings: 6 }
    }
}

/// Converged kernel values with the grid that produced them.
#[derive(Clone, Debug)]
pub struct KernelBatch {
    pub values: Vec<C64>,
    pub m: usize,
    pub last_change: f64,
}

/// Values of `G_k(x, y)` (point sources) or `(G_k Q_k^*)(x, y)` (block
/// sources) on one grid, with the contour shifted to `Im z = q`.
///
/// `x` is given in fine indices. The shifted integrand carries the factor
/// `e^{-q·(x−y)}` through the analytic continuation of the source phase.
pub fn kernel_values_on_grid(
    setup: &FreeSetup,
    grid: &TorusGrid,
    pairs: &[(Vec<i64>, FreeSource)],
    q: &[f64],
) -> Vec<C64> {
    let d = setup.d;
    let eta = setup.eta();
    let nk = setup.nk() as i64;
    let shifts = setup.shifts();
    let axis = grid.axis_points();
    let npts = grid.len();
    let zs: Vec<Vec<C64>> = (0..npts)
        .map(|i| grid.point(&axis, i).iter().zip(q).map(|(&p, &qq)| C64::new(p, qq)).collect())
        .collect();
    let orbits: Vec<Orbit> = zs.iter().map(|z| orbit(z, setup, &shifts)).collect();

    // Reduced symbols depend on the source only through its class mod L^k.
    let mut classes: Vec<FreeSource> = pairs
        .iter()
        .map(|(_, s)| match s {
            FreeSource::Point(y) => FreeSource::Point(y.iter().map(|&c| c.rem_euclid(nk)).collect()),
            FreeSource::Block(_) => FreeSource::Block(vec![0; d]),
        })
        .collect();
    classes.sort();
    classes.dedup();
    let reduced: Vec<Vec<C64>> = classes
        .iter()
        .map(|cls| {
            (0..npts)
                .map(|i| {
                    let o = &orbits[i];
                    let f: Vec<C64> = shifts
                        .iter()
                        .enumerate()
                        .map(|(li, ell)| match cls {
                            FreeSource::Point(r) => {
                                let ph: f64 = ell.iter().zip(r).map(|(&l, &rr)| l as f64 * rr as f64).sum();
                                (-I * 2.0 * PI * ph * eta).exp()
                            }
                            FreeSource::Block(_) => o.u[li],
                        })
                        .collect();
                    solve_orbit(o, &f, setup.a)
                })
                .collect()
        })
        .collect();

    let w = grid.step().powi(d as i32) / (2.0 * PI).powi(d as i32);
    let mut terms = vec![cx(0.0); npts];
    pairs
        .iter()
        .map(|(x, src)| {
            let (cls, y_fine): (FreeSource, Vec<f64>) = match src {
                FreeSource::Point(y) => (
                    FreeSource::Point(y.iter().map(|&c| c.rem_euclid(nk)).collect()),
                    y.iter().map(|&c| c as f64 * eta).collect(),
                ),
                FreeSource::Block(y) => (FreeSource::Block(vec![0; d]), y.iter().map(|&c| c as f64).collect()),
            };
            let ci = classes.binary_search(&cls).expect("class present");
            let r: Vec<f64> = x.iter().zip(&y_fine).map(|(&xi, &yi)| xi as f64 * eta - yi).collect();
            // per-axis phase tables e^{i z_μ r_μ}
            let tables: Vec<Vec<C64>> = (0..d)
                .map(|mu| axis.iter().map(|&p| (I * C64::new(p, q[mu]) * r[mu]).exp()).collect())
                .collect();
            for (i, t) in terms.iter_mut().enumerate() {
                let mut idx = i;
                let mut ph = cx(1.0);
                for mu in (0..d).rev() {
                    ph *= tables[mu][idx % grid.m];
                    idx /= grid.m;
                }
                *t = reduced[ci][i] * ph;
            }
            pairwise_sum(&terms) * w
        })
        .collect()
}

/// Kernel values with `M` doubled until the largest change is below
/// `tol · max |value|`.
pub fn kernel_values(
    setup: &FreeSetup,
    pairs: &[(Vec<i64>, FreeSource)],
    q: &[f64],
    quad: &Quadrature,
) -> Result<KernelBatch> {
    let mut m = quad.m_init_factor.max(4) * setup.nk();
    if !m.is_multiple_of(2 * setup.nk()) {
        m += setup.nk();
    }
    let mut prev = kernel_values_on_grid(setup, &TorusGrid::new(setup, m)?, pairs, q);
    let mut change = f64::INFINITY;
    for _ in 0..quad.max_doublings {
        m *= 2;
        let next = kernel_values_on_grid(setup, &TorusGrid::new(setup, m)?, pairs, q);
        let scale = next.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        change = prev.iter().zip(&next).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale;
        prev = next;
        if change <= quad.tol {
            return Ok(KernelBatch { values: prev, m, last_change: change });
        }
    }
    Err(Error::Quadrature { change, m })
}

/// `G_k(x, y)` for fine indices `x, y`.
pub fn free_kernel_g(setup: &FreeSetup, x: &[i64], y: &[i64], q: Option<&[f64]>, quad: &Quadrature) -> Result<C64> {
    let zero = vec![0.0; setup.d];
    let b = kernel_values(setup, &[(x.to_vec(), FreeSource::Point(y.to_vec()))], q.unwrap_or(&zero), quad)?;
    Ok(b.values[0])
}

/// `(G_k Q_k^*)(x, y)` for a fine index `x` and a unit-block label `y`.
pub fn free_kernel_gq(setup: &FreeSetup, x: &[i64], y: &[i64], q: Option<&[f64]>, quad: &Quadrature) -> Result<C64> {
    let zero = vec![0.0; setup.d];
    let b = kernel_values(setup, &[(x.to_vec(), FreeSource::Block(y.to_vec()))], q.unwrap_or(&zero), quad)?;
    Ok(b.values[0])
}

/// Largest relative change of kernel values when the contour moves to `Im z = q`.
pub fn contour_shift_change(
    setup: &FreeSetup,
    pairs: &[(Vec<i64>, FreeSource)],
    q: &[f64],
    quad: &Quadrature,
) -> Result<f64> {
    let base = kernel_values(setup, pairs, &vec![0.0; setup.d], quad)?;
    let shifted = kernel_values(setup, pairs, q, quad)?;
    let scale = base.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(base
        .values
        .iter()
        .zip(&shifted.values)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
        / scale)
}

/// Maximum pointwise difference between `Q_k^*Q_k f` computed by block means
/// on the patch and through the Fourier representation.
pub fn qkqk_fourier_residual(f: &Field, k: u32, quad: &Quadrature) -> Result<f64> {
    let patch = *f.geometry();
    if patch.k() != k as i32 {
        return Err(Error::Mismatch("patch spacing must be L^{-k}".into()));
    }
    let spatial = block_projector(patch, k)?.apply(f)?;
    let setup = FreeSetup { d: patch.d(), l: patch.l(), k, a: 0.0, mu0: 0.0 };
    let support: Vec<(Vec<f64>, C64)> = patch
        .sites()
        .filter_map(|x| {
            let v = f.get(&x).unwrap();
            (v.norm() > 0.0).then(|| (patch.position(&x), v))
        })
        .collect();
    if support.is_empty() {
        return Err(Error::Invalid("test function vanishes".into()));
    }
    let mut m = quad.m_init_factor.max(4) * setup.nk();
    if !m.is_multiple_of(2 * setup.nk()) {
        m += setup.nk();
    }
    let mut prev: Option<Vec<C64>> = None;
    let mut change = f64::INFINITY;
    for _ in 0..=quad.max_doublings {
        let vals = qq_fourier_on_grid(&setup, &TorusGrid::new(&setup, m)?, &support, &patch);
        if let Some(p) = &prev {
            let scale = vals.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1.0);
            change = p.iter().zip(&vals).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale;
            if change <= quad.tol {
                return Ok(spatial
                    .values()
                    .iter()
                    .zip(&vals)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max));
            }
        }
        prev = Some(vals);
        m *= 2;
    }
    Err(Error::Quadrature { change, m })
}

fn qq_fourier_on_grid(
    setup: &FreeSetup,
    grid: &TorusGrid,
    support: &[(Vec<f64>, C64)],
    patch: &LatticeGeometry,
) -> Vec<C64> {
    let d = setup.d;
    let eta = setup.eta();
    let axis = grid.axis_points();
    let npts = grid.len();
    let shifts = setup.shifts();
    let vol = eta.powi(d as i32);
    let norm = (2.0 * PI).powf(-(d as f64) / 2.0);
    // Orbit points p + 2πℓ are grid nodes, offset by ℓ·M/L^k along each axis.
    let stride = grid.m / setup.nk();
    let fhat: Vec<C64> = (0..npts)
        .map(|i| {
            let p = grid.point(&axis, i);
            support
                .iter()
                .map(|(x, v)| {
                    let ph: f64 = p.iter().zip(x).map(|(a, b)| a * b).sum();
                    v * (-I * ph).exp()
                })
                .sum::<C64>()
                * (norm * vol)
        })
        .collect();
    let ubar: Vec<C64> = (0..npts)
        .map(|i| grid.point(&axis, i).iter().map(|&w| ubar_axis(cx(w), eta)).product())
        .collect();
    let shifted = |i: usize, ell: &[i64]| -> usize {
        let mut rem = i;
        let mut out = 0;
        let mut mult = 1;
        for mu in (0..d).rev() {
            let c = (rem % grid.m) as i64 + ell[mu] * stride as i64;
            rem /= grid.m;
            out += c.rem_euclid(grid.m as i64) as usize * mult;
            mult *= grid.m;
        }
        out
    };
    let sym: Vec<C64> = (0..npts)
        .map(|i| {
            let zc: Vec<C64> = grid.point(&axis, i).iter().map(|&v| cx(v)).collect();
            let br: C64 = shifts
                .iter()
                .map(|ell| {
                    let j = shifted(i, ell);
                    ubar[j] * fhat[j]
                })
                .sum();
            u_kernel(&zc, eta) * br
        })
        .collect();
    let w = grid.step().powi(d as i32) * norm;
    patch
        .sites()
        .map(|x| {
            let pos = patch.position(&x);
            let terms: Vec<C64> = (0..npts)
                .map(|i| {
                    let p = grid.point(&axis, i);
                    let ph: f64 = p.iter().zip(&pos).map(|(a, b)| a * b).sum();
                    sym[i] * (I * ph).exp()
                })
                .collect();
            pairwise_sum(&terms) * w
        })
        .collect()
}

fn sum_star(z: &[C64], ell: &[i64], eta: f64, mu0: f64) -> C64 {
    z.iter()
        .zip(ell)
        .map(|(&zm, &l)| (zm * eta / 2.0 + PI * l as f64 * eta).sin().powi(2))
        .sum::<C64>()
        + mu0 / 4.0
}

/// `sin(z/2) / sin(zη/2 + πℓη)` with the `ℓ = 0` ratio taken through sinc.
fn sin_ratio(z: C64, l: i64, eta: f64) -> C64 {
    if l == 0 {
        sinc(z / 2.0) / sinc(z * eta / 2.0) / eta
    } else {
        (z / 2.0).sin() / (z * eta / 2.0 + PI * l as f64 * eta).sin()
    }
}

/// Which factorization of `H` is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MassBranch {
    Large,
    Small,
}

/// Branch selected by comparing `μ̄_0/4` with `c_* η²`.
pub fn mass_branch(setup: &FreeSetup, c_star: f64) -> MassBranch {
    let eta = setup.eta();
    if setup.mu0 / 4.0 >= c_star * eta * eta {
        MassBranch::Large
    } else {
        MassBranch::Small
    }
}

/// Normalized denominator: `F̃(z)` (large mass) or `F(z) / (a η²/4)` (small mass).
pub fn denominator(z: &[C64], setup: &FreeSetup, branch: MassBranch) -> C64 {
    let eta = setup.eta();
    let d = setup.d as i32;
    let pref = setup.a * eta.powi(2 * d + 2) / 4.0;
    let s0 = sum_star(z, &vec![0; setup.d], eta, setup.mu0);
    let mut acc = cx(0.0);
    for ell in setup.shifts() {
        let r2: C64 = z.iter().zip(&ell).map(|(&zm, &l)| sin_ratio(zm, l, eta).powi(2)).product();
        let w = match branch {
            MassBranch::Large => r2 / sum_star(z, &ell, eta, setup.mu0),
            MassBranch::Small => {
                if ell.iter().all(|&l| l == 0) {
                    r2
                } else {
                    r2 * s0 / sum_star(z, &ell, eta, setup.mu0)
                }
            }
        };
        acc += w;
    }
    match branch {
        MassBranch::Large => acc * pref + 1.0,
        MassBranch::Small => (s0 + acc * pref) / (setup.a * eta * eta / 4.0),
    }
}

/// `H(z) = u_Δ(z + 2πℓ') / (1 + a⟨⟨u, u_Δ⟩⟩(z))` through the factored forms.
pub fn h_function(z: &[C64], ell: &[i64], setup: &FreeSetup, c_star: f64) -> Result<C64> {
    let branch = mass_branch(setup, c_star);
    let den = denominator(z, setup, branch);
    h_with_denominator(z, ell, setup, branch, den)
}

fn h_with_denominator(z: &[C64], ell: &[i64], setup: &FreeSetup, branch: MassBranch, den: C64) -> Result<C64> {
    if den.norm() < DENOMINATOR_FLOOR {
        return Err(Error::StripViolation {
            value: den.norm(),
            floor: DENOMINATOR_FLOOR,
            at: format!("{z:?}"),
        });
    }
    let eta = setup.eta();
    let d = setup.d as i32;
    let h1: C64 = z
        .iter()
        .zip(ell)
        .map(|(&zm, &l)| (-I * zm / 2.0).exp() / (-I * (zm + 2.0 * PI * l as f64) * eta / 2.0).exp())
        .product::<C64>()
        * (eta.powi(d + 2) / 4.0);
    let r1: C64 = z.iter().zip(ell).map(|(&zm, &l)| sin_ratio(zm, l, eta)).product();
    let h = match branch {
        MassBranch::Large => h1 * r1 / (den * sum_star(z, ell, eta, setup.mu0)),
        MassBranch::Small => {
            let s0 = sum_star(z, &vec![0; setup.d], eta, setup.mu0);
            let h3 = if ell.iter().all(|&l| l == 0) { r1 } else { r1 * s0 / sum_star(z, ell, eta, setup.mu0) };
            let f = den * (setup.a * eta * eta / 4.0);
            h1 * h3 / f
        }
    };
    Ok(h)
}

/// Strip-bound table for one `(d, k)`.
#[derive(Clone, Debug)]
pub struct StripBoundReport {
    pub k: u32,
    pub d: usize,
    pub q_max: f64,
    pub grid_points: usize,
    pub branch: MassBranch,
    /// `(ℓ', sup_z |H(z)| Π(1+|ℓ'_μ|)^{1+2/d})`.
    pub per_shift: Vec<(Vec<i64>, f64)>,
    pub sup: f64,
    pub argmax_shift: Vec<i64>,
    pub argmax_z: Vec<C64>,
    pub min_denominator: f64,
}

/// Sample `|H|` on a midpoint grid of `n_p` points per axis in `(−π, π)`,
/// with `q ∈ {0, ±q_max e_μ}`.
pub fn strip_bound_report(setup: &FreeSetup, c_star: f64, q_max: f64, n_p: usize) -> Result<StripBoundReport> {
    if !(0.0..=MAX_STRIP).contains(&q_max) {
        return Err(Error::Invalid(format!("q_max = {q_max} outside [0, {MAX_STRIP}]")));
    }
    let d = setup.d;
    let branch = mass_branch(setup, c_star);
    let axis: Vec<f64> = (0..n_p).map(|i| -PI + (i as f64 + 0.5) * 2.0 * PI / n_p as f64).collect();
    let mut qs = vec![vec![0.0; d]];
    for mu in 0..d {
        for s in [1.0, -1.0] {
            let mut q = vec![0.0; d];
            q[mu] = s * q_max;
            qs.push(q);
        }
    }
    let shifts = setup.shifts();
    let expo = 1.0 + 2.0 / d as f64;
    let weights: Vec<f64> = shifts
        .iter()
        .map(|ell| ell.iter().map(|&l| (1.0 + l.abs() as f64).powf(expo)).product())
        .collect();
    let mut per = vec![0.0f64; shifts.len()];
    let mut arg_z = vec![vec![cx(0.0); d]; shifts.len()];
    let mut min_den = f64::INFINITY;
    let npts = n_p.pow(d as u32);
    for q in &qs {
        for idx in 0..npts {
            let mut rem = idx;
            let mut z = vec![cx(0.0); d];
            for mu in (0..d).rev() {
                z[mu] = C64::new(axis[rem % n_p], q[mu]);
                rem /= n_p;
            }
            let den = denominator(&z, setup, branch);
            min_den = min_den.min(den.norm());
            for (si, ell) in shifts.iter().enumerate() {
                let v = h_with_denominator(&z, ell, setup, branch, den)?.norm() * weights[si];
                if !v.is_finite() {
                    return Err(Error::Invalid(format!("non-finite H at {z:?}")));
                }
                if v > per[si] {
                    per[si] = v;
                    arg_z[si] = z.clone();
                }
            }
        }
    }
    let (best, sup) = per
        .iter()
        .enumerate()
        .fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    Ok(StripBoundReport {
        k: setup.k,
        d,
        q_max,
        grid_points: npts * qs.len(),
        branch,
        per_shift: shifts.iter().cloned().zip(per.iter().cloned()).collect(),
        sup,
        argmax_shift: shifts[best].clone(),
        argmax_z: arg_z[best].clone(),
        min_denominator: min_den,
    })
}

/// One quantity of the technical-bounds table at two grid resolutions.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundRow {
    pub group: &'static str,
    pub quantity: &'static str,
    pub coarse: f64,
    pub fine: f64,
}

impl BoundRow {
    /// `max(a/b, b/a)` of the two resolutions.
    pub fn drift(&self) -> f64 {
        let (a, b) = (self.coarse.abs(), self.fine.abs());
        (a / b).max(b / a)
    }

    pub fn finite(&self) -> bool {
        self.coarse.is_finite() && self.fine.is_finite()
    }
}

fn rect(n: usize, re: (f64, f64), im: (f64, f64)) -> Vec<C64> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let x = re.0 + (i as f64 + 0.5) * (re.1 - re.0) / n as f64;
            let y = im.0 + (j as f64 + 0.5) * (im.1 - im.0) / n as f64;
            out.push(C64::new(x, y));
        }
    }
    out
}

fn fold_min(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(f64::INFINITY, f64::min)
}

fn fold_max(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, f64::max)
}

struct BoundValues {
    sinc_min: f64,
    sinc_max: f64,
    sinc_der_max: f64,
    ell_ratio_min: f64,
    analytic_ratio_min: f64,
    length_vs_sin_max: f64,
    delta_ratio_max: f64,
    der_alpha0_max: f64,
    der_alpha1_max: f64,
}

fn bound_values(n: usize, setup: &FreeSetup) -> BoundValues {
    let eta = setup.eta();
    let d = setup.d;
    let half = PI / 2.0;
    let sz = rect(n, (-half, half), (-1.0, 1.0));
    let sinc_min = fold_min(sz.iter().map(|&z| sinc(z).norm()));
    let sinc_max = fold_max(sz.iter().map(|&z| sinc(z).norm()));
    let sinc_der_max = fold_max(sz.iter().map(|&z| sinc_prime(z).norm()));

    let big = rect(n, (-PI, PI), (-1.0, 1.0));
    let ells: Vec<i64> = (-20..=20).filter(|&l| l != 0).collect();
    let ell_ratio_min = fold_min(big.iter().flat_map(|&z| {
        ells.iter().map(move |&l| (z - 2.0 * PI * l as f64).norm() / (half * (1.0 + l.abs() as f64)))
    }));
    let analytic_ratio_min = fold_min(big.iter().flat_map(|&z| {
        (-20i64..=20).map(move |l| (cx(1.0) + 2.0 * PI * l as f64 / z).norm() / ((1.0 + l.abs() as f64) / 6.0))
    }));

    // Sum-of-squares bound on the admissible shift box, |q_μ| ≤ 1/d.
    let qd = 1.0 / d as f64;
    let axis_z = rect(n, (-PI, PI), (-qd, qd));
    let nz = axis_z.len();
    let shifts: Vec<Vec<i64>> = setup.shifts().into_iter().filter(|l| l.iter().any(|&v| v != 0)).collect();
    let mut length_vs_sin_max: f64 = 0.0;
    let mut delta_ratio_max: f64 = 0.0;
    for idx in 0..nz.pow(d as u32) {
        let mut rem = idx;
        let z: Vec<C64> = (0..d)
            .map(|_| {
                let v = axis_z[rem % nz];
                rem /= nz;
                v
            })
            .collect();
        for ell in &shifts {
            let w: Vec<C64> = z.iter().zip(ell).map(|(&zm, &l)| zm * eta / 2.0 + PI * l as f64 * eta).collect();
            let len2: f64 = w.iter().map(|v| v.norm_sqr()).sum();
            let s2: C64 = w.iter().map(|v| v.sin().powi(2)).sum();
            for delta in [0.0, 0.1, 1.0] {
                let den = (s2 + delta).norm();
                length_vs_sin_max = length_vs_sin_max.max(len2 / den);
                delta_ratio_max = delta_ratio_max.max(delta / den);
            }
        }
    }

    // Derivative bound: the product factorizes over axes, so the supremum of
    // the weighted product is the product of one-axis suprema.
    let h = setup.half_range();
    let mut s0: f64 = 0.0;
    let mut s1: f64 = 0.0;
    for &z in &big {
        for l in -h..=h {
            let w = (1.0 + l.abs() as f64).powi(2) * eta * eta;
            let r = sin_ratio(z, l, eta);
            let dr = if l == 0 {
                (sinc_prime(z / 2.0) * 0.5 * sinc(z * eta / 2.0) - sinc(z / 2.0) * sinc_prime(z * eta / 2.0) * (eta / 2.0))
                    / (sinc(z * eta / 2.0).powi(2) * eta)
            } else {
                let wv = z * eta / 2.0 + PI * l as f64 * eta;
                ((z / 2.0).cos() * wv.sin() * 0.5 - wv.cos() * (z / 2.0).sin() * (eta / 2.0)) / wv.sin().powi(2)
            };
            s0 = s0.max((r * r).norm() * w);
            s1 = s1.max((r * dr * 2.0).norm() * w);
        }
    }
    BoundValues {
        sinc_min,
        sinc_max,
        sinc_der_max,
        ell_ratio_min,
        analytic_ratio_min,
        length_vs_sin_max,
        delta_ratio_max,
        der_alpha0_max: s0.powi(d as i32),
        der_alpha1_max: s1 * s0.powi(d as i32 - 1),
    }
}

/// Worst-case ratios of the technical bounds on grids of `n` and `2n` points per axis.
pub fn technical_bounds_report(setup: &FreeSetup, n: usize) -> Vec<BoundRow> {
    let a = bound_values(n, setup);
    let b = bound_values(2 * n, setup);
    let row = |group, quantity, f: fn(&BoundValues) -> f64| BoundRow { group, quantity, coarse: f(&a), fine: f(&b) };
    vec![
        row("sinc", "min |sinc|", |v| v.sinc_min),
        row("sinc", "max |sinc|", |v| v.sinc_max),
        row("sinc", "max |sinc'|", |v| v.sinc_der_max),
        row("shift-distance", "min |z-2pi l|/((pi/2)(1+|l|))", |v| v.ell_ratio_min),
        row("shift-ratio", "min |1+2pi l/z|/((1+|l|)/6)", |v| v.analytic_ratio_min),
        row("sine-sum", "max length^2/|sin^2 sum+delta|", |v| v.length_vs_sin_max),
        row("sine-sum", "max delta/|sin^2 sum+delta|", |v| v.delta_ratio_max),
        row("orbit-product", "max |P| eta^2d prod(1+|l|)^2", |v| v.der_alpha0_max),
        row("orbit-product", "max |dP| eta^2d prod(1+|l|)^2", |v| v.der_alpha1_max),
    ]
}
