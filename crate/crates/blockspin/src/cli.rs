//! Command-line experiments: TOML config in, CSV rows and a JSON summary out.
//!
//! Exit codes: 0 success, 1 a metric missed its tolerance, 2 bad
//! configuration, 3 numerical or internal error.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decay::{ct_bound_report, decay_profile, fit_decay, SourceSpec, Q_GRID};
use crate::fourier::{
    contour_shift_change, qkqk_fourier_residual, strip_bound_report, technical_bounds_report, FreeSetup, FreeSource,
    Quadrature,
};
use crate::images::images_residual_report;
use crate::lattice::{LatticeGeometry, Site};
use crate::multiscale::{
    c_expansion_residual, defining_operator, positivity_report, rg_step_residual, rg_telescope_residual, scaling_residuals,
    MultiscaleParams,
};
use crate::operators::{laplacian_spectrum_1d, min_eigenvalue, neumann_laplacian, spectrum, Field};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Numeric(#[from] crate::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: u64,
    pub k: u32,
    pub m: u32,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig { d: 1, l: 3, k: 2, m: 4 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsConfig {
    pub a: f64,
    pub mu0: f64,
    pub c_star: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig { a: 1.0, mu0: 0.0, c_star: 1.0 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FourierConfig {
    /// Starting quadrature size as a multiple of `L^k`.
    #[serde(rename = "M_init")]
    pub m_init: usize,
    pub q_max: f64,
}

impl Default for FourierConfig {
    fn default() -> Self {
        FourierConfig { m_init: 8, q_max: 0.05 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ImagesConfig {
    pub shells: usize,
}

impl Default for ImagesConfig {
    fn default() -> Self {
        ImagesConfig { shells: 4 }
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    pub window: Option<(f64, f64)>,
    pub q_grid: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_experiment")]
    pub experiment: String,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub fourier: FourierConfig,
    #[serde(default)]
    pub images: ImagesConfig,
    #[serde(default)]
    pub decay: DecayConfig,
}

fn default_experiment() -> String {
    "default".into()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl Default for Config {
    fn default() -> Self {
        Config {
            experiment: default_experiment(),
            output: default_output(),
            geometry: GeometryConfig::default(),
            params: ParamsConfig::default(),
            fourier: FourierConfig::default(),
            images: ImagesConfig::default(),
            decay: DecayConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.geometry_lattice()?;
        self.multiscale_params()?;
        if self.params.c_star.is_nan() || self.params.c_star <= 0.0 {
            return Err(CliError::Config("c_star must be positive".into()));
        }
        if self.fourier.m_init < 4 {
            return Err(CliError::Config("M_init must be at least 4".into()));
        }
        if !(0.0..=crate::fourier::MAX_STRIP).contains(&self.fourier.q_max) {
            return Err(CliError::Config(format!("q_max must lie in [0, {}]", crate::fourier::MAX_STRIP)));
        }
        if self.images.shells == 0 {
            return Err(CliError::Config("shells must be at least 1".into()));
        }
        if let Some((lo, hi)) = self.decay.window {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(CliError::Config("decay window must satisfy lo < hi".into()));
            }
        }
        Ok(())
    }

    pub fn geometry_lattice(&self) -> Result<LatticeGeometry, CliError> {
        let g = &self.geometry;
        if g.k == 0 {
            return Err(CliError::Config("k must be at least 1".into()));
        }
        LatticeGeometry::new(g.d, g.l, g.k, g.m).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn multiscale_params(&self) -> Result<MultiscaleParams, CliError> {
        MultiscaleParams::new(self.params.a, self.params.mu0, self.geometry.l).map_err(|e| CliError::Config(e.to_string()))
    }

    fn quadrature(&self) -> Quadrature {
        Quadrature { m_init_factor: self.fourier.m_init, ..Quadrature::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Experiment {
    /// Neumann-Laplacian spectrum against its closed form.
    Spectrum,
    /// Renormalization-step, telescope, and scaling identities.
    RgVerify,
    /// Image sums against dense Neumann kernels.
    ImagesVerify,
    /// Fourier block averaging, contour shifts, and technical bounds.
    FourierVerify,
    /// Sampled strip bound across scales.
    StripBound,
    /// Decay-rate fit of `G_k(Ω)` from a corner block.
    DecayProfile,
    /// Exponentially conjugated covariance bounds.
    CtReport,
    /// Lower bound of the defining operator across scales.
    Positivity,
    /// Every experiment above.
    All,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::RgVerify => "rg-verify",
            Experiment::ImagesVerify => "images-verify",
            Experiment::FourierVerify => "fourier-verify",
            Experiment::StripBound => "strip-bound",
            Experiment::DecayProfile => "decay-profile",
            Experiment::CtReport => "ct-report",
            Experiment::Positivity => "positivity",
            Experiment::All => "all",
        }
    }

    fn each() -> [Experiment; 8] {
        use Experiment::*;
        [Spectrum, RgVerify, ImagesVerify, FourierVerify, StripBound, DecayProfile, CtReport, Positivity]
    }
}

#[derive(Debug, Parser)]
#[command(name = "blockspin", version, about = "Block-averaged Neumann Green functions on finite lattices")]
pub struct Args {
    #[command(subcommand)]
    pub command: Experiment,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Experiment name, overriding the config.
    #[arg(long, global = true)]
    pub experiment: Option<String>,
    /// Seed for random test fields.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true)]
    pub verbose: bool,
}

/// One measured quantity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
}

impl Metric {
    fn info(name: impl Into<String>, value: f64) -> Self {
        Metric { name: name.into(), value, tolerance: None, pass: None }
    }

    fn at_most(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Metric { name: name.into(), value, tolerance: Some(tol), pass: Some(value.is_finite() && value <= tol) }
    }

    /// Judged as `value > tolerance`; the name carries a `:floor` suffix.
    fn above(name: impl Into<String>, value: f64, floor: f64) -> Self {
        Metric { name: format!("{}:floor", name.into()), value, tolerance: Some(floor), pass: Some(value > floor) }
    }
}

#[derive(Debug, Serialize)]
pub struct ExperimentSummary {
    pub experiment: String,
    pub command: String,
    pub status: String,
    pub metrics: serde_json::Map<String, serde_json::Value>,
    pub wall_time: f64,
}

fn max_ratio(v: &[f64]) -> f64 {
    let hi = v.iter().cloned().fold(0.0, f64::max);
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    hi / lo
}

/// Run one experiment and return its metrics.
pub fn run_experiment(exp: Experiment, cfg: &Config, seed: u64) -> Result<Vec<Metric>, CliError> {
    let geom = cfg.geometry_lattice()?;
    let params = cfg.multiscale_params()?;
    let k = cfg.geometry.k;
    let d = cfg.geometry.d;
    let quad = cfg.quadrature();
    let mut out = Vec::new();
    match exp {
        Experiment::Spectrum => {
            let mut s = spectrum(&neumann_laplacian(geom))?;
            let one = laplacian_spectrum_1d(geom.n(), geom.spacing()).eigenvalues;
            let mut closed = vec![0.0];
            for _ in 0..d {
                closed = closed.iter().flat_map(|c| one.iter().map(move |e| c + e)).collect();
            }
            closed.sort_by(f64::total_cmp);
            s.closed_form = Some(closed);
            out.push(Metric::at_most("laplacian_max_rel_error", s.max_relative_error().unwrap_or(f64::INFINITY), 1e-10));
            out.push(Metric::info("defining_min_eigenvalue", min_eigenvalue(&defining_operator(geom, &params)?)?));
        }
        Experiment::RgVerify => {
            for j in 1..k {
                out.push(Metric::at_most(format!("rg_step_j{j}"), rg_step_residual(geom, &params, j)?, 1e-9));
                out.push(Metric::at_most(format!("c_expansion_j{j}"), c_expansion_residual(geom, &params, j)?, 1e-10));
                out.push(Metric::at_most(format!("scaling_j{j}"), scaling_residuals(geom, &params, j)?.max(), 1e-11));
            }
            out.push(Metric::at_most("telescope", rg_telescope_residual(geom, &params)?, 1e-9));
        }
        Experiment::ImagesVerify => {
            let rep = images_residual_report(geom, &params, cfg.images.shells, &quad)?;
            for row in &rep.rows {
                out.push(Metric::info(format!("g_max_shells{}", row.shells), row.g_max));
                out.push(Metric::info(format!("g_median_shells{}", row.shells), row.g_median));
                out.push(Metric::info(format!("gq_max_shells{}", row.shells), row.gq_max));
            }
            let monotone = rep.rows.windows(2).all(|w| w[1].g_max < w[0].g_max && w[1].gq_max < w[0].gq_max);
            out.push(Metric { name: "monotone".into(), value: monotone as u8 as f64, tolerance: None, pass: Some(monotone) });
            out.push(Metric::info("quadrature_m", rep.quadrature_m as f64));
        }
        Experiment::FourierVerify => {
            let lk = (cfg.geometry.l as i64).pow(k);
            let blocks = if d == 1 { 3 } else { 1 };
            let patch = LatticeGeometry::patch(d, cfg.geometry.l, k as i32, blocks * lk as usize, -lk)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = Field::random(patch, &mut rng);
            out.push(Metric::at_most("qq_fourier_residual", qkqk_fourier_residual(&f, k, &quad)?, 1e-8));
            let setup = FreeSetup::new(d, k, &params)?;
            let pairs: Vec<(Vec<i64>, FreeSource)> =
                (0..4).map(|i| (vec![i; d], FreeSource::Point(vec![0; d]))).collect();
            let mut q = vec![0.0; d];
            q[0] = cfg.fourier.q_max;
            out.push(Metric::at_most("contour_shift_change", contour_shift_change(&setup, &pairs, &q, &quad)?, 1e-8));
            for row in technical_bounds_report(&setup, 16) {
                let name = format!("{}:{}", row.group, row.quantity);
                out.push(Metric::info(format!("{name}:value"), row.fine));
                out.push(Metric::at_most(format!("{name}:drift"), row.drift(), 2.0));
            }
        }
        Experiment::StripBound => {
            let mut sups = Vec::new();
            for kk in 1..=k {
                let setup = FreeSetup::new(d, kk, &params)?;
                let r = strip_bound_report(&setup, cfg.params.c_star, cfg.fourier.q_max, if d == 1 { 64 } else { 16 })?;
                out.push(Metric::info(format!("sup_k{kk}"), r.sup));
                out.push(Metric::info(format!("min_denominator_k{kk}"), r.min_denominator));
                sups.push(r.sup);
            }
            out.push(Metric::at_most("sup_ratio_across_k", max_ratio(&sups), 10.0));
        }
        Experiment::DecayProfile => {
            let src = SourceSpec::Block { j: k, label: Site(vec![geom.origin(); d]) };
            let profile = decay_profile(geom, &params, &src)?;
            for (i, (dist, mag)) in profile.iter().enumerate() {
                out.push(Metric::info(format!("profile:{i}:{dist:.6}"), *mag));
            }
            let fit = fit_decay(&profile, cfg.decay.window)?;
            out.push(Metric::above("rate", fit.rate, 0.0));
            out.push(Metric::info("log_prefactor", fit.log_prefactor));
            out.push(Metric::info("rms_residual", fit.rms_residual));
            out.push(Metric::info("points", fit.point_count as f64));
        }
        Experiment::CtReport => {
            let grid: Vec<f64> = cfg.decay.q_grid.clone().unwrap_or_else(|| {
                Q_GRID.iter().cloned().filter(|q| q.abs() <= cfg.fourier.q_max + 1e-15).collect()
            });
            let r = ct_bound_report(geom, &params, &grid, seed)?;
            for (i, q) in r.q_values.iter().enumerate() {
                out.push(Metric::info(format!("bound_constant_q{q}"), r.bound_constant[i]));
                out.push(Metric::info(format!("min_singular_value_q{q}"), r.min_singular_value[i]));
                out.push(Metric::at_most(format!("covariance_residual_q{q}"), r.covariance_residual[i], 1e-8));
            }
            out.push(Metric::at_most("max_violation", r.max_violation, 1.0));
            if let Some(fit) = r.box_fit {
                out.push(Metric::above("box_rate", fit.rate, 0.0));
            }
        }
        Experiment::Positivity => {
            let s = cfg.geometry.m.saturating_sub(k);
            let geoms: Vec<LatticeGeometry> =
                (1..=k).map(|kk| LatticeGeometry::new(d, cfg.geometry.l, kk, kk + s)).collect::<crate::Result<_>>()?;
            let cs = positivity_report(&geoms, &params)?;
            for (kk, c) in &cs {
                out.push(Metric::above(format!("c_k{kk}"), *c, 0.0));
            }
            let vals: Vec<f64> = cs.iter().map(|(_, c)| *c).collect();
            out.push(Metric::at_most("c_ratio_across_k", max_ratio(&vals), 4.0));
        }
        Experiment::All => unreachable!("expanded by the caller"),
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|t| format!("{t:e}")).unwrap_or_default()
}

/// Write CSV rows for a set of experiments.
pub fn write_csv(path: &Path, cfg: &Config, name: &str, results: &[(Experiment, Vec<Metric>)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Output(e.to_string()))?;
    let g = &cfg.geometry;
    w.write_record(["experiment", "d", "L", "k", "m", "a", "mu0", "metric", "value", "tolerance", "pass"])
        .map_err(|e| CliError::Output(e.to_string()))?;
    for (exp, metrics) in results {
        for m in metrics {
            w.write_record([
                name.to_string(),
                g.d.to_string(),
                g.l.to_string(),
                g.k.to_string(),
                g.m.to_string(),
                cfg.params.a.to_string(),
                cfg.params.mu0.to_string(),
                format!("{}:{}", exp.name(), m.name),
                format!("{:e}", m.value),
                fmt_opt(m.tolerance),
                m.pass.map(|p| p.to_string()).unwrap_or_default(),
            ])
            .map_err(|e| CliError::Output(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parse arguments, run, write outputs; returns the process exit code.
pub fn run(args: Args) -> i32 {
    match run_inner(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("blockspin: {e}");
            e.exit_code()
        }
    }
}

fn run_inner(args: &Args) -> Result<i32, CliError> {
    let mut cfg = match &args.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(o) = &args.out {
        cfg.output = o.clone();
    }
    if let Some(e) = &args.experiment {
        cfg.experiment = e.clone();
    }
    let list: Vec<Experiment> = match args.command {
        Experiment::All => Experiment::each().to_vec(),
        e => vec![e],
    };
    fs::create_dir_all(&cfg.output)?;
    let mut results = Vec::new();
    let mut summaries = Vec::new();
    let mut failed = false;
    for exp in list {
        let t = Instant::now();
        let metrics = run_experiment(exp, &cfg, args.seed)?;
        let ok = metrics.iter().all(|m| m.pass != Some(false));
        failed |= !ok;
        if args.verbose {
            for m in &metrics {
                eprintln!("{} {} = {:e}", exp.name(), m.name, m.value);
            }
        }
        let map = metrics
            .iter()
            .map(|m| (m.name.clone(), serde_json::to_value(m).expect("plain data")))
            .collect();
        summaries.push(ExperimentSummary {
            experiment: cfg.experiment.clone(),
            command: exp.name().into(),
            status: if ok { "pass" } else { "fail" }.into(),
            metrics: map,
            wall_time: t.elapsed().as_secs_f64(),
        });
        results.push((exp, metrics));
    }
    let stem = format!("{}_{}", cfg.experiment, args.command.name());
    write_csv(&cfg.output.join(format!("{stem}.csv")), &cfg, &cfg.experiment, &results)?;
    let json = serde_json::to_string_pretty(&summaries).map_err(|e| CliError::Output(e.to_string()))?;
    fs::write(cfg.output.join(format!("{stem}.json")), json)?;
    for s in &summaries {
        println!("{:<16} {}", s.command, s.status);
    }
    Ok(if failed { 1 } else { 0 })
}
