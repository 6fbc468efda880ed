//! Experiment configuration, orchestration, and persistence.
//!
//! One run directory holds `config.json`, `depth.json`, `schedule.json`,
//! `tail.csv`, `fit.json`, and `result.json`, plus a `status.json` marker
//! that starts as `incomplete` and flips on exit; everything needed to
//! regenerate a figure is colocated.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    self, estimate_tail, eyring_kramers_fit, fit_decay_with, gibbs_tail_quadrature,
    spectral_gap_1d, theoretical_bound_check, BoundCheck, FitResult, SpectralReport, TailCurve,
};
use crate::depth::{critical_depth, discretize, DepthReport};
use crate::dynamics::{init_chain, sa_step_table, Checkpoint, InitialDistribution, Trajectory};
use crate::error::{Error, Result};
use crate::landscape::Landscape;
use crate::persist;
use crate::schedule::{
    rate_exponent, validate, CoolingSchedule, ScheduleCheckReport, ScheduleTable, StepSchedule,
    Verdict,
};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Fixed sampling parameters for the automatic `eta0 = 1/L` resolution, so
/// the resolved step size depends only on the landscape.
const LIPSCHITZ_SAMPLES: usize = 256;
const LIPSCHITZ_SEED: u64 = 17;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub landscape: LandscapeSpec,
    pub cooling: CoolingSpec,
    pub steps: StepSpec,
    pub delta: f64,
    pub n_chains: u64,
    #[serde(default)]
    pub checkpoints: CheckpointSpec,
    pub seed: u64,
    pub mu0: InitialDistribution,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Slack in the theoretical bound check.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
    /// Exceedance floor below which rows are excluded from fits.
    #[serde(default = "default_min_exceed")]
    pub min_exceed: u64,
    #[serde(default)]
    pub burn_in: BurnInSpec,
    /// Depth-grid cells per axis; defaults to 2^14 (1-D) or 512 (per axis).
    #[serde(default)]
    pub grid_cells: Option<Vec<usize>>,
    /// Dense-scan resolution for normalization; defaults to 10^6 (1-D) or
    /// 2048 (per axis).
    #[serde(default)]
    pub normalize_resolution: Option<usize>,
    #[serde(default)]
    pub record_trajectories: bool,
    #[serde(default)]
    pub record_x: bool,
}

fn default_epsilon() -> f64 {
    0.05
}

fn default_ci_level() -> f64 {
    0.95
}

fn default_min_exceed() -> u64 {
    analysis::DEFAULT_MIN_EXCEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeSpec {
    pub id: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl LandscapeSpec {
    pub fn new(id: &str) -> Self {
        LandscapeSpec {
            id: id.to_string(),
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn build(&self) -> Result<Landscape> {
        Landscape::from_catalog(&self.id, &self.params)
    }
}

/// Either an explicit energy parameter or a multiplier over the computed
/// critical depth (the theorems are stated relative to E*, so experiments
/// can be too).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoolingSpec {
    #[serde(
        rename = "E",
        alias = "e",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub e: Option<f64>,
    #[serde(
        rename = "E_multiplier",
        alias = "e_multiplier",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub e_multiplier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_offset: Option<f64>,
}

impl CoolingSpec {
    pub fn explicit(e: f64) -> Self {
        CoolingSpec {
            e: Some(e),
            e_multiplier: None,
            t_offset: None,
        }
    }

    pub fn multiplier(m: f64) -> Self {
        CoolingSpec {
            e: None,
            e_multiplier: Some(m),
            t_offset: None,
        }
    }

    /// Resolves the energy parameter against a computed critical depth.
    pub fn resolve(&self, e_star: f64, force: bool) -> Result<CoolingSchedule> {
        let e = match (self.e, self.e_multiplier) {
            (Some(e), None) => e,
            (None, Some(m)) => {
                if m <= 1.0 && !force {
                    return Err(Error::invalid(format!(
                        "E_multiplier {m} <= 1 puts E at or below the critical depth; \
                         pass --force to probe the trapped phase"
                    )));
                }
                m * e_star
            }
            _ => {
                return Err(Error::invalid(
                    "cooling needs exactly one of E or E_multiplier",
                ))
            }
        };
        if e <= e_star && !force {
            return Err(Error::invalid(format!(
                "E = {e} does not exceed the critical depth E* = {e_star}; \
                 pass --force to probe the trapped phase"
            )));
        }
        CoolingSchedule::new(e, self.t_offset.unwrap_or(std::f64::consts::E))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSpec {
    pub eta0: Eta0Spec,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Eta0Spec {
    /// `"auto"`: eta0 = 1 / (sampled Lipschitz bound), the explicit-Euler
    /// stability heuristic.
    Auto(String),
    Value(f64),
}

impl Eta0Spec {
    pub fn auto() -> Self {
        Eta0Spec::Auto("auto".to_string())
    }

    fn resolve(&self, land: &Landscape) -> Result<f64> {
        match self {
            Eta0Spec::Value(v) => Ok(*v),
            Eta0Spec::Auto(s) if s == "auto" => {
                let lip = land.estimate_lipschitz(LIPSCHITZ_SAMPLES, LIPSCHITZ_SEED)?;
                if lip <= 0.0 {
                    return Err(Error::invalid(
                        "landscape gradient looks constant; set eta0 explicitly",
                    ));
                }
                Ok(1.0 / lip)
            }
            Eta0Spec::Auto(s) => Err(Error::invalid(format!(
                "eta0 must be a number or \"auto\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CheckpointSpec {
    Explicit(Vec<u64>),
    Geometric { geometric: GeometricSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricSpec {
    pub base: f64,
    pub count: usize,
}

impl Default for CheckpointSpec {
    /// Base-2 geometric spacing gives roughly equispaced `ln Theta` points
    /// for the log-log regression.
    fn default() -> Self {
        CheckpointSpec::Geometric {
            geometric: GeometricSpec {
                base: 2.0,
                count: 20,
            },
        }
    }
}

impl CheckpointSpec {
    pub fn resolve(&self) -> Result<Vec<u64>> {
        let ks = match self {
            CheckpointSpec::Explicit(ks) => ks.clone(),
            CheckpointSpec::Geometric { geometric } => {
                if !geometric.base.is_finite() || geometric.base <= 1.0 || geometric.count == 0 {
                    return Err(Error::invalid("geometric checkpoints need base > 1, count >= 1"));
                }
                let mut ks: Vec<u64> = (1..=geometric.count)
                    .map(|j| geometric.base.powi(j as i32).round() as u64)
                    .collect();
                ks.dedup();
                ks
            }
        };
        if ks.is_empty() || ks[0] == 0 {
            return Err(Error::invalid("checkpoints must start at k >= 1"));
        }
        if !ks.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("checkpoints must be strictly increasing"));
        }
        Ok(ks)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BurnInSpec {
    /// First checkpoint where `tau(Theta_k) <= E / ln(100)`; the theorems
    /// hold "for t large enough".
    Auto(String),
    Theta { theta: f64 },
}

impl Default for BurnInSpec {
    fn default() -> Self {
        BurnInSpec::Auto("auto".to_string())
    }
}

impl BurnInSpec {
    fn resolve(&self, curve: &TailCurve, cs: &CoolingSchedule) -> Result<f64> {
        match self {
            BurnInSpec::Theta { theta } => Ok(*theta),
            BurnInSpec::Auto(s) if s == "auto" => {
                let cutoff = cs.energy() / 100f64.ln();
                Ok(curve
                    .rows
                    .iter()
                    .find(|r| r.tau <= cutoff)
                    .map(|r| r.theta_cum)
                    .unwrap_or(f64::INFINITY))
            }
            BurnInSpec::Auto(s) => Err(Error::invalid(format!(
                "burn_in must be {{\"theta\": x}} or \"auto\", got \"{s}\""
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Incomplete,
    Complete,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StatusMarker {
    status: RunStatus,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedParams {
    pub e_star: f64,
    pub e: f64,
    pub t_offset: f64,
    pub eta0: f64,
    pub theta: f64,
    pub rate: Option<f64>,
    pub burn_in_theta: f64,
    pub max_k: u64,
    pub n_checkpoints: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DivergenceSummary {
    pub n_diverged: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub resolved: ResolvedParams,
    pub critical_depth: f64,
    pub schedule_check: Option<ScheduleCheckReport>,
    pub fit: Option<FitResult>,
    pub fit_error: Option<String>,
    pub bound_check: Option<BoundCheck>,
    pub divergence: DivergenceSummary,
    pub status: RunStatus,
    /// Hash over the scientific content (config echo + tail curve + fit +
    /// bound verdict); identical across reruns and worker counts.
    pub content_hash: String,
    pub wall_clock_seconds: f64,
    pub artifact_version: String,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub workers: usize,
    pub force: bool,
    pub resume: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            workers: std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
            force: false,
            resume: false,
        }
    }
}

// ---------------------------------------------------------------------------
// Depth / schedule / analysis entry points (shared by CLI subcommands)
// ---------------------------------------------------------------------------

/// Normalizes a catalog landscape and computes its depth report.
pub fn depth_from_spec(
    spec: &LandscapeSpec,
    grid_cells: Option<&[usize]>,
    normalize_resolution: Option<usize>,
) -> Result<(Landscape, DepthReport)> {
    let raw = spec.build()?;
    let res = normalize_resolution.unwrap_or(default_normalize_resolution(raw.dim()));
    let land = raw.normalize(res)?;
    let shape = match grid_cells {
        Some(s) => s.to_vec(),
        None => default_grid(land.dim()),
    };
    let grid = discretize(&land, &shape)?;
    let report = critical_depth(&grid)?;
    Ok((land, report))
}

/// Odd cell counts keep a cell center on symmetry axes, so symmetric
/// landscapes (the quadratic, the untilted double well) do not land their
/// minimum on a two-cell plateau.
pub fn default_grid(dim: usize) -> Vec<usize> {
    if dim == 1 {
        vec![(1 << 14) + 1]
    } else {
        vec![513; dim]
    }
}

pub fn default_normalize_resolution(dim: usize) -> usize {
    if dim == 1 {
        1_000_000
    } else {
        2_048
    }
}

/// Schedule validation from explicit parameters.
pub fn validate_schedule(
    eta0: f64,
    theta: f64,
    depth_ratio: f64,
    horizon: u64,
) -> Result<ScheduleCheckReport> {
    let ss = StepSchedule::new(eta0, theta)?;
    validate(&ss, depth_ratio, horizon)
}

#[derive(Debug, Clone, Serialize)]
pub struct GibbsTailReport {
    pub landscape: LandscapeSpec,
    pub tau: f64,
    pub delta: f64,
    pub cells: Vec<usize>,
    pub probability: f64,
}

pub fn run_gibbs_tail(
    spec: &LandscapeSpec,
    tau: f64,
    delta: f64,
    grid_cells: Option<&[usize]>,
) -> Result<GibbsTailReport> {
    let raw = spec.build()?;
    let land = raw.normalize(default_normalize_resolution(raw.dim()))?;
    let shape = match grid_cells {
        Some(s) => s.to_vec(),
        None => default_grid(land.dim()),
    };
    let grid = discretize(&land, &shape)?;
    let probability = gibbs_tail_quadrature(&grid, tau, delta)?;
    Ok(GibbsTailReport {
        landscape: spec.clone(),
        tau,
        delta,
        cells: shape,
        probability,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralGapReport {
    pub landscape: LandscapeSpec,
    pub tau: f64,
    pub n_cells: usize,
    pub gap: f64,
}

pub fn run_spectral_gap(spec: &LandscapeSpec, tau: f64, n_cells: usize) -> Result<SpectralGapReport> {
    let raw = spec.build()?;
    let land = raw.normalize(default_normalize_resolution(raw.dim()))?;
    let gap = spectral_gap_1d(&land, tau, n_cells)?;
    Ok(SpectralGapReport {
        landscape: spec.clone(),
        tau,
        n_cells,
        gap,
    })
}

pub fn run_spectral_sweep(spec: &LandscapeSpec, taus: &[f64], n_cells: usize) -> Result<SpectralReport> {
    let raw = spec.build()?;
    let land = raw.normalize(default_normalize_resolution(raw.dim()))?;
    eyring_kramers_fit(&land, taus, n_cells)
}

// ---------------------------------------------------------------------------
// The annealing experiment
// ---------------------------------------------------------------------------

struct ChainRun {
    chain_id: u64,
    diverged_at: Option<u64>,
    f_values: Vec<f64>,
    x_values: Option<Vec<Vec<f64>>>,
}

/// Runs one chain to the last checkpoint, recording f at every checkpoint.
/// After a divergence the remaining checkpoints record +inf (the iterate
/// escaped every sublevel set); the experiment keeps going and reports the
/// divergence fraction.
fn run_chain(
    chain_id: u64,
    land: &Landscape,
    table: &ScheduleTable,
    checkpoints: &[u64],
    mu0: &InitialDistribution,
    seed: u64,
    record_x: bool,
) -> ChainRun {
    let dim = land.dim();
    let mut state = init_chain(mu0, seed, chain_id);
    let mut z = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    let mut f_values = Vec::with_capacity(checkpoints.len());
    let mut x_values = record_x.then(Vec::new);
    let mut diverged_at = None;
    let max_k = *checkpoints.last().expect("non-empty checkpoints");
    let mut next_cp = 0usize;
    for k in 1..=max_k {
        if diverged_at.is_none() {
            if let Err(Error::Divergence { k, .. }) =
                sa_step_table(&mut state, land, table, &mut z, &mut scratch)
            {
                diverged_at = Some(k);
            }
        }
        if k == checkpoints[next_cp] {
            if diverged_at.is_some() {
                f_values.push(f64::INFINITY);
                if let Some(xs) = x_values.as_mut() {
                    xs.push(vec![f64::NAN; dim]);
                }
            } else {
                f_values.push(land.eval_unchecked(&state.x));
                if let Some(xs) = x_values.as_mut() {
                    xs.push(state.x.clone());
                }
            }
            next_cp += 1;
            if next_cp == checkpoints.len() {
                break;
            }
        }
    }
    ChainRun {
        chain_id,
        diverged_at,
        f_values,
        x_values,
    }
}

/// Full annealing experiment: depth, schedule check, parallel chains, tail
/// estimation, decay fit, bound check, and persistence into `out_dir`.
pub fn run_anneal(
    config: &ExperimentConfig,
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<ExperimentResult> {
    let started = Instant::now();

    // Resolve and validate everything fallible before touching the output
    // directory: a rejected config must not leave an incomplete marker.
    let (land, depth_report) = depth_from_spec(
        &config.landscape,
        config.grid_cells.as_deref(),
        config.normalize_resolution,
    )?;
    let e_star = depth_report.critical_depth;
    let cs = config.cooling.resolve(e_star, opts.force)?;
    let eta0 = config.steps.eta0.resolve(&land)?;
    let ss = StepSchedule::new(eta0, config.steps.theta)?;
    let depth_ratio = e_star / cs.energy();
    let schedule_check = if depth_ratio > 0.0 && depth_ratio < 1.0 {
        let report = validate(&ss, depth_ratio, 1_000_000)?;
        if report.verdict != Verdict::Valid && !opts.force {
            return Err(Error::invalid(format!(
                "schedule verdict is {:?}; pass --force to run anyway",
                report.verdict
            )));
        }
        Some(report)
    } else {
        // E <= E* (forced run) or a single-well landscape: the theorem's
        // hypothesis does not apply, so there is nothing to validate.
        None
    };
    let checkpoints = config.checkpoints.resolve()?;
    let max_k = *checkpoints.last().expect("non-empty");
    if config.n_chains == 0 {
        return Err(Error::invalid("n_chains must be >= 1"));
    }
    if config.mu0.dim() != land.dim() {
        return Err(Error::invalid(format!(
            "mu0 has dim {}, landscape has dim {}",
            config.mu0.dim(),
            land.dim()
        )));
    }
    let table = ScheduleTable::build(&ss, &cs, max_k)?;

    prepare_run_dir(out_dir, opts)?;
    write_status(out_dir, RunStatus::Incomplete)?;
    persist::write_json(&out_dir.join("config.json"), config)?;
    persist::write_json(&out_dir.join("depth.json"), &depth_report)?;
    persist::write_json(&out_dir.join("schedule.json"), &schedule_check)?;

    // Chains, partitioned across a bounded pool. Results are collected in
    // chain order, so the partition is invisible to everything downstream.
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    let seed = config.seed;
    let record_x = config.record_trajectories && config.record_x;
    let runs: Vec<ChainRun> = pool.install(|| {
        (0..config.n_chains)
            .into_par_iter()
            .map(|chain_id| {
                run_chain(chain_id, &land, &table, &checkpoints, &config.mu0, seed, record_x)
            })
            .collect()
    });

    let n_diverged = runs.iter().filter(|r| r.diverged_at.is_some()).count() as u64;
    let divergence = DivergenceSummary {
        n_diverged,
        fraction: n_diverged as f64 / config.n_chains as f64,
    };

    // Assemble trajectories on the shared checkpoint grid.
    let trajectories: Vec<Trajectory> = runs
        .iter()
        .map(|r| Trajectory {
            chain_id: r.chain_id,
            checkpoints: checkpoints
                .iter()
                .enumerate()
                .map(|(i, &k)| Checkpoint {
                    k,
                    theta_cum: table.theta[k as usize],
                    tau: table.tau_pre[k as usize],
                    x: r.x_values.as_ref().map(|xs| xs[i].clone()).unwrap_or_default(),
                    f_value: r.f_values[i],
                })
                .collect(),
        })
        .collect();

    let curve = estimate_tail(&trajectories, config.delta, config.ci_level)?;
    persist::write_tail_csv(&out_dir.join("tail.csv"), &curve)?;
    if config.record_trajectories {
        persist::write_trajectories_csv(
            &out_dir.join("trajectories.csv"),
            &trajectories,
            config.record_x,
        )?;
    }

    let burn_in_theta = config.burn_in.resolve(&curve, &cs)?;
    let (fit, fit_error) = match fit_decay_with(&curve, burn_in_theta, config.min_exceed) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    persist::write_json(&out_dir.join("fit.json"), &fit)?;

    let (rate, bound_check) = if cs.energy() > e_star {
        let rate = rate_exponent(cs.energy(), e_star, config.delta)?;
        let chk = theoretical_bound_check(&curve, rate, config.epsilon)?;
        (Some(rate), Some(chk))
    } else {
        (None, None)
    };

    let status = if divergence.fraction > 0.10 {
        RunStatus::Failed
    } else {
        RunStatus::Complete
    };

    let mut files: Vec<String> = vec![
        "config.json".into(),
        "depth.json".into(),
        "schedule.json".into(),
        "tail.csv".into(),
        "fit.json".into(),
        "result.json".into(),
        "status.json".into(),
    ];
    if config.record_trajectories {
        files.push("trajectories.csv".into());
    }

    let content_hash = {
        let mut hasher = Sha256::new();
        hasher.update(persist::to_json_string(config)?.as_bytes());
        hasher.update(persist::tail_csv_string(&curve).as_bytes());
        hasher.update(persist::to_json_string(&fit)?.as_bytes());
        hasher.update(persist::to_json_string(&bound_check)?.as_bytes());
        hasher.update(persist::to_json_string(&depth_report.critical_depth)?.as_bytes());
        format!("{:x}", hasher.finalize())
    };

    let result = ExperimentResult {
        config: config.clone(),
        resolved: ResolvedParams {
            e_star,
            e: cs.energy(),
            t_offset: cs.t_offset(),
            eta0,
            theta: config.steps.theta,
            rate,
            burn_in_theta,
            max_k,
            n_checkpoints: checkpoints.len(),
        },
        critical_depth: e_star,
        schedule_check,
        fit,
        fit_error,
        bound_check,
        divergence,
        status,
        content_hash,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        artifact_version: ARTIFACT_VERSION.to_string(),
        files,
    };
    persist::write_json(&out_dir.join("result.json"), &result)?;
    write_status(out_dir, status)?;
    Ok(result)
}

fn prepare_run_dir(out_dir: &Path, opts: &RunOptions) -> Result<()> {
    if out_dir.exists() {
        match read_status(out_dir) {
            Some(RunStatus::Incomplete) if !opts.resume => {
                return Err(Error::invalid(format!(
                    "{} holds an incomplete run; pass --resume to restart it",
                    out_dir.display()
                )));
            }
            Some(RunStatus::Complete | RunStatus::Failed) if !opts.resume => {
                return Err(Error::invalid(format!(
                    "{} already holds a finished run; pass --resume to overwrite",
                    out_dir.display()
                )));
            }
            _ => {}
        }
    }
    std::fs::create_dir_all(out_dir)?;
    Ok(())
}

fn write_status(out_dir: &Path, status: RunStatus) -> Result<()> {
    persist::write_json(&out_dir.join("status.json"), &StatusMarker { status })
}

pub fn read_status(out_dir: &Path) -> Option<RunStatus> {
    let text = std::fs::read_to_string(out_dir.join("status.json")).ok()?;
    serde_json::from_str::<StatusMarker>(&text).ok().map(|m| m.status)
}

/// Re-fit an existing tail curve (the `fit` subcommand).
pub fn refit_tail(path: &Path, burn_in_theta: f64, min_exceed: u64) -> Result<FitResult> {
    let curve = persist::read_tail_csv(path)?;
    fit_decay_with(&curve, burn_in_theta, min_exceed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            landscape: LandscapeSpec::new("double_well").with_param("a", 0.2),
            cooling: CoolingSpec::multiplier(1.5),
            steps: StepSpec {
                eta0: Eta0Spec::auto(),
                theta: 0.75,
            },
            delta: 0.3,
            n_chains: 64,
            checkpoints: CheckpointSpec::Geometric {
                geometric: GeometricSpec {
                    base: 2.0,
                    count: 10,
                },
            },
            seed: 42,
            mu0: InitialDistribution::point_mass(vec![0.974]),
            output_dir: Some(dir.to_path_buf()),
            epsilon: 0.05,
            ci_level: 0.95,
            min_exceed: 5,
            burn_in: BurnInSpec::Theta { theta: 0.05 },
            grid_cells: Some(vec![4096]),
            normalize_resolution: Some(100_000),
            record_trajectories: false,
            record_x: false,
        }
    }

    #[test]
    fn config_round_trips_through_echo() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let json = persist::to_json_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_parses_documented_json() {
        let text = r#"{
            "landscape": {"id": "double_well", "params": {"a": 0.2}},
            "cooling": {"E_multiplier": 1.5},
            "steps": {"eta0": "auto", "theta": 0.75},
            "delta": 0.3,
            "n_chains": 100,
            "checkpoints": {"geometric": {"base": 2.0, "count": 20}},
            "seed": 7,
            "mu0": {"kind": "point_mass", "x": [0.974]}
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.epsilon, 0.05);
        assert_eq!(cfg.checkpoints.resolve().unwrap().len(), 20);
        // Omitting checkpoints falls back to geometric base-2, 20 points.
        let text = text.replace(
            "\"checkpoints\": {\"geometric\": {\"base\": 2.0, \"count\": 20}},",
            "",
        );
        let cfg: ExperimentConfig = serde_json::from_str(&text).unwrap();
        let ks = cfg.checkpoints.resolve().unwrap();
        assert_eq!(ks.last(), Some(&(1u64 << 20)));
        // Explicit-E form with the documented key.
        let text = r#"{"E": 1.2, "t_offset": 2.72}"#;
        let cs: CoolingSpec = serde_json::from_str(text).unwrap();
        assert_eq!(cs.e, Some(1.2));
        // Lowercase aliases are accepted on input.
        let cs: CoolingSpec = serde_json::from_str(r#"{"e_multiplier": 1.5}"#).unwrap();
        assert_eq!(cs.e_multiplier, Some(1.5));
    }

    #[test]
    fn geometric_checkpoints() {
        let spec = CheckpointSpec::Geometric {
            geometric: GeometricSpec {
                base: 2.0,
                count: 20,
            },
        };
        let ks = spec.resolve().unwrap();
        assert_eq!(ks.len(), 20);
        assert_eq!(ks[0], 2);
        assert_eq!(ks[19], 1 << 20);
    }

    #[test]
    fn checkpoints_must_increase() {
        let spec = CheckpointSpec::Explicit(vec![4, 2]);
        assert!(spec.resolve().is_err());
        let spec = CheckpointSpec::Explicit(vec![0, 2]);
        assert!(spec.resolve().is_err());
    }

    #[test]
    fn cooling_resolution_rules() {
        let e_star = 0.8;
        assert!(CoolingSpec::multiplier(1.5)
            .resolve(e_star, false)
            .is_ok_and(|cs| (cs.energy() - 1.2).abs() < 1e-12));
        assert!(CoolingSpec::multiplier(0.5).resolve(e_star, false).is_err());
        assert!(CoolingSpec::multiplier(0.5).resolve(e_star, true).is_ok());
        assert!(CoolingSpec::explicit(0.5).resolve(e_star, false).is_err());
        assert!(CoolingSpec {
            e: Some(1.0),
            e_multiplier: Some(1.5),
            t_offset: None
        }
        .resolve(e_star, false)
        .is_err());
    }

    #[test]
    fn depth_from_spec_double_well() {
        let (_, report) = depth_from_spec(
            &LandscapeSpec::new("double_well").with_param("a", 0.2),
            Some(&[1 << 14]),
            Some(1_000_000),
        )
        .unwrap();
        assert!((report.critical_depth - 0.807_572_128_628_269_4).abs() < 1e-3);
    }

    #[test]
    fn anneal_small_run_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let cfg = small_config(&out);
        let opts = RunOptions {
            workers: 2,
            force: false,
            resume: false,
        };
        let result = run_anneal(&cfg, &out, &opts).unwrap();
        assert_eq!(result.status, RunStatus::Complete);
        assert_eq!(result.divergence.n_diverged, 0);
        // Every referenced file exists.
        for f in &result.files {
            assert!(out.join(f).exists(), "{f} missing");
        }
        assert_eq!(read_status(&out), Some(RunStatus::Complete));
        // Config echo parses back to an equal value.
        let echoed: ExperimentConfig =
            serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap())
                .unwrap();
        assert_eq!(echoed, cfg);
    }

    #[test]
    fn anneal_deterministic_across_worker_counts() {
        let dir = tempfile::tempdir().unwrap();
        let (out1, out4) = (dir.path().join("w1"), dir.path().join("w4"));
        let mut cfg = small_config(&out1);
        cfg.n_chains = 32;
        cfg.checkpoints = CheckpointSpec::Explicit(vec![4, 16, 64, 256, 1024]);
        let r1 = run_anneal(
            &cfg,
            &out1,
            &RunOptions {
                workers: 1,
                force: false,
                resume: false,
            },
        )
        .unwrap();
        let r4 = run_anneal(
            &cfg,
            &out4,
            &RunOptions {
                workers: 4,
                force: false,
                resume: false,
            },
        )
        .unwrap();
        let t1 = std::fs::read(out1.join("tail.csv")).unwrap();
        let t4 = std::fs::read(out4.join("tail.csv")).unwrap();
        assert_eq!(t1, t4, "tail.csv differs across worker counts");
        assert_eq!(r1.content_hash, r4.content_hash);
    }

    #[test]
    fn rerun_requires_resume_flag() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut cfg = small_config(&out);
        cfg.n_chains = 8;
        cfg.checkpoints = CheckpointSpec::Explicit(vec![2, 8]);
        let opts = RunOptions {
            workers: 1,
            force: false,
            resume: false,
        };
        run_anneal(&cfg, &out, &opts).unwrap();
        assert!(run_anneal(&cfg, &out, &opts).is_err());
        let resume = RunOptions {
            resume: true,
            ..opts
        };
        run_anneal(&cfg, &out, &resume).unwrap();
    }

    #[test]
    fn incomplete_marker_blocks_and_resume_restarts() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        std::fs::create_dir_all(&out).unwrap();
        write_status(&out, RunStatus::Incomplete).unwrap();
        let mut cfg = small_config(&out);
        cfg.n_chains = 8;
        cfg.checkpoints = CheckpointSpec::Explicit(vec![2, 8]);
        let opts = RunOptions {
            workers: 1,
            force: false,
            resume: false,
        };
        assert!(run_anneal(&cfg, &out, &opts).is_err());
        let resume = RunOptions {
            resume: true,
            ..opts
        };
        let r = run_anneal(&cfg, &out, &resume).unwrap();
        assert_eq!(r.status, RunStatus::Complete);
    }

    #[test]
    fn forced_subcritical_skips_bound_check() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut cfg = small_config(&out);
        cfg.cooling = CoolingSpec::multiplier(0.5);
        cfg.n_chains = 16;
        cfg.checkpoints = CheckpointSpec::Explicit(vec![4, 16, 64]);
        let opts = RunOptions {
            workers: 2,
            force: true,
            resume: false,
        };
        let r = run_anneal(&cfg, &out, &opts).unwrap();
        assert!(r.bound_check.is_none());
        assert!(r.schedule_check.is_none());
        assert!(r.resolved.rate.is_none());
    }

    #[test]
    fn oversized_step_reports_divergence_failure() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut cfg = small_config(&out);
        // 100x the stability bound: most chains blow up.
        cfg.steps.eta0 = Eta0Spec::Value(2.5);
        cfg.n_chains = 32;
        cfg.checkpoints = CheckpointSpec::Explicit(vec![4, 16, 64]);
        cfg.mu0 = InitialDistribution::gaussian(vec![0.0], 1.0).unwrap();
        let opts = RunOptions {
            workers: 2,
            force: true,
            resume: false,
        };
        let r = run_anneal(&cfg, &out, &opts).unwrap();
        assert!(r.divergence.fraction > 0.10, "{}", r.divergence.fraction);
        assert_eq!(r.status, RunStatus::Failed);
        assert_eq!(read_status(&out), Some(RunStatus::Failed));
    }

    #[test]
    fn refit_matches_original_fit() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut cfg = small_config(&out);
        cfg.n_chains = 256;
        cfg.checkpoints = CheckpointSpec::Explicit(vec![2, 8, 32, 128, 512, 2048]);
        let r = run_anneal(&cfg, &out, &RunOptions::default()).unwrap();
        let refit = refit_tail(&out.join("tail.csv"), r.resolved.burn_in_theta, 5).unwrap();
        let orig = r.fit.expect("fit present");
        assert!((refit.slope - orig.slope).abs() < 1e-12);
        assert_eq!(refit.n_points, orig.n_points);
    }

    #[test]
    fn trajectories_csv_written_with_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut cfg = small_config(&out);
        cfg.n_chains = 4;
        cfg.checkpoints = CheckpointSpec::Explicit(vec![2, 8]);
        cfg.record_trajectories = true;
        cfg.record_x = true;
        run_anneal(&cfg, &out, &RunOptions::default()).unwrap();
        let text = std::fs::read_to_string(out.join("trajectories.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "chain_id,k,theta,tau,f_value,x0");
        assert_eq!(lines.count(), 8);
    }
}
