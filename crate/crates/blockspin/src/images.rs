//! Neumann kernels on a cube as reflected sums of free-lattice kernels.

use crate::fourier::{kernel_values, FreeSetup, FreeSource, Quadrature};
use crate::lattice::{LatticeGeometry, Site};
use crate::multiscale::{green_neumann, MultiscaleParams};
use crate::operators::{averaging, C64};
use crate::{Error, Result};

/// Shell ratio beyond which an image sum is treated as non-convergent.
pub const MAX_SHELL_RATIO: f64 = 0.9;

/// Image sum truncated at a number of shells.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSumResult {
    pub value: C64,
    pub shells_used: usize,
    /// `|Σ_{images in the last shell}|`.
    pub last_shell_contribution: f64,
    /// Geometric tail bound from the last two shell contributions.
    pub truncation_estimate: f64,
}

/// Number of image points in shell `s` of a `d`-dimensional reflection lattice.
pub fn shell_size(d: usize, s: usize) -> usize {
    if s == 0 {
        1
    } else {
        (2 * s + 1).pow(d as u32) - (2 * s - 1).pow(d as u32)
    }
}

fn sum_from_shells(per_shell: &[C64], shells: usize, d: usize) -> Result<ImageSumResult> {
    let value: C64 = per_shell[..=shells].iter().sum();
    let last = per_shell[shells].norm();
    let prev = per_shell[shells - 1].norm();
    // per-image ratio, so that growing shell multiplicity does not mask decay
    let ratio = if prev > 0.0 {
        (last / shell_size(d, shells) as f64) / (prev / shell_size(d, shells - 1) as f64)
    } else {
        0.0
    };
    if ratio > MAX_SHELL_RATIO {
        return Err(Error::ImageDivergence { ratio, shell: shells });
    }
    Ok(ImageSumResult {
        value,
        shells_used: shells,
        last_shell_contribution: last,
        truncation_estimate: (shells + 1..)
            .take(64)
            .map(|t| last * ratio.powi((t - shells) as i32) * shell_size(d, t) as f64 / shell_size(d, shells) as f64)
            .sum(),
    })
}

fn check_shells(shells: usize) -> Result<()> {
    if shells == 0 {
        return Err(Error::Invalid("image sums need at least one shell".into()));
    }
    Ok(())
}

fn setup_for(geom: &LatticeGeometry, params: &MultiscaleParams) -> Result<(FreeSetup, u32)> {
    let k = u32::try_from(geom.k()).map_err(|_| Error::Geometry("negative scale".into()))?;
    Ok((FreeSetup::new(geom.d(), k, params)?, k))
}

/// Per-shell contributions for many `(x, y)` pairs at once.
///
/// Returns `table[pair][shell]`.
fn shell_table(
    setup: &FreeSetup,
    images: &LatticeGeometry,
    pairs: &[(Site, Site)],
    shells: usize,
    block: bool,
    quad: &Quadrature,
) -> Result<(Vec<Vec<C64>>, usize)> {
    let mut jobs = Vec::new();
    let mut owner = Vec::new();
    for (pi, (x, y)) in pairs.iter().enumerate() {
        for img in images.image_points(y, shells) {
            let shell = images.shell_of(&img);
            let src = if block { FreeSource::Block(img.0) } else { FreeSource::Point(img.0) };
            jobs.push((x.0.clone(), src));
            owner.push((pi, shell));
        }
    }
    let batch = kernel_values(setup, &jobs, &vec![0.0; setup.d], quad)?;
    let mut table = vec![vec![C64::new(0.0, 0.0); shells + 1]; pairs.len()];
    for ((pi, shell), v) in owner.into_iter().zip(batch.values) {
        table[pi][shell] += v;
    }
    Ok((table, batch.m))
}

/// `Σ_j G_k(x, y_j)` over the images of `y` in `shells` shells.
pub fn neumann_kernel_via_images(
    geom: LatticeGeometry,
    params: &MultiscaleParams,
    x: &Site,
    y: &Site,
    shells: usize,
    quad: &Quadrature,
) -> Result<ImageSumResult> {
    check_shells(shells)?;
    if !geom.contains(x) || !geom.contains(y) {
        return Err(Error::OutOfRange(format!("{x} or {y}")));
    }
    let (setup, _) = setup_for(&geom, params)?;
    let t = shell_table(&setup, &geom, &[(x.clone(), y.clone())], shells, false, quad)?;
    sum_from_shells(&t.0[0], shells, geom.d())
}

/// `Σ_j (G_k Q_k^*)(x, y_j)` over images of the unit block `y` of `Ω_k`.
pub fn gq_kernel_via_images(
    geom: LatticeGeometry,
    params: &MultiscaleParams,
    x: &Site,
    y: &Site,
    shells: usize,
    quad: &Quadrature,
) -> Result<ImageSumResult> {
    check_shells(shells)?;
    let (setup, k) = setup_for(&geom, params)?;
    let coarse = geom.coarse(k)?;
    if !geom.contains(x) || !coarse.contains(y) {
        return Err(Error::OutOfRange(format!("{x} or {y}")));
    }
    let t = shell_table(&setup, &coarse, &[(x.clone(), y.clone())], shells, true, quad)?;
    sum_from_shells(&t.0[0], shells, geom.d())
}

/// Residual statistics for one truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagesRow {
    pub shells: usize,
    pub g_max: f64,
    pub g_median: f64,
    pub gq_max: f64,
    pub gq_median: f64,
}

/// Image sums against the directly inverted kernels for every pair of sites.
#[derive(Clone, Debug)]
pub struct ImagesReport {
    pub rows: Vec<ImagesRow>,
    pub quadrature_m: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Absolute residuals `|images − direct|` for `1..=max_shells` shells.
pub fn images_residual_report(
    geom: LatticeGeometry,
    params: &MultiscaleParams,
    max_shells: usize,
    quad: &Quadrature,
) -> Result<ImagesReport> {
    check_shells(max_shells)?;
    let (setup, k) = setup_for(&geom, params)?;
    let coarse = geom.coarse(k)?;
    let g = green_neumann(geom, params)?;
    let gq = g.compose(&averaging(geom, k)?.adjoint())?;

    let g_pairs: Vec<(Site, Site)> = geom.sites().flat_map(|x| geom.sites().map(move |y| (x.clone(), y))).collect();
    let gq_pairs: Vec<(Site, Site)> =
        geom.sites().flat_map(|x| coarse.sites().map(move |y| (x.clone(), y))).collect();
    let (tg, mg) = shell_table(&setup, &geom, &g_pairs, max_shells, false, quad)?;
    let (tq, mq) = shell_table(&setup, &coarse, &gq_pairs, max_shells, true, quad)?;

    let residuals = |table: &[Vec<C64>], pairs: &[(Site, Site)], s: usize, direct: &dyn Fn(&Site, &Site) -> C64| {
        table
            .iter()
            .zip(pairs)
            .map(|(row, (x, y))| (row[..=s].iter().sum::<C64>() - direct(x, y)).norm())
            .collect::<Vec<f64>>()
    };
    let dg = |x: &Site, y: &Site| g.entry(x, y).unwrap();
    let dq = |x: &Site, y: &Site| gq.entry(x, y).unwrap();
    let rows = (1..=max_shells)
        .map(|s| {
            let rg = residuals(&tg, &g_pairs, s, &dg);
            let rq = residuals(&tq, &gq_pairs, s, &dq);
            ImagesRow {
                shells: s,
                g_max: rg.iter().cloned().fold(0.0, f64::max),
                g_median: median(rg),
                gq_max: rq.iter().cloned().fold(0.0, f64::max),
                gq_median: median(rq),
            }
        })
        .collect();
    Ok(ImagesReport { rows, quadrature_m: mg.max(mq) })
}
