//! Declarative experiment sweeps, CSV results and summary reports.
//!
//! An [`ExperimentSpec`] is a TOML file describing a grid over dimension,
//! channel correlation `γ`, probe noise `κ` and channel uses `N`. Every grid
//! point and estimator runs `trials` independent simulations; the mitigation
//! variants are computed from the same raw samples so they differ only by
//! post-processing.
//!
//! Random streams are keyed by `(seed, grid point, estimator, trial)` and
//! per-trial results are aggregated in trial order, so the CSV is identical
//! for any thread count. The optional `wall_time` column is the only
//! non-deterministic field; the run timestamp goes to a sidecar file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{make_exp_corr_channel, ChannelParams};
use crate::config::{find_config, ConfigCache, MeasurementConfig};
use crate::error::{Error, Result};
use crate::estimate::{dpepc_estimate, mitigate_depolarizing, ope_estimate, Estimate, EstimatorKind};
use crate::metrics::{bias_norm, loglog_slope, mean_diamond, summed_mse, summed_variance, TrialBatch};
use crate::sim::{simulate_dpepc, simulate_ope, RngStream};

pub const SPEC_VERSION: u32 = 1;
pub const DEFAULT_TRIALS: usize = 200;

/// Post-processing applied to raw estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mitigation {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "mitigate")]
    Mitigate,
    #[serde(rename = "mitigate+correct")]
    MitigateCorrect,
}

impl Mitigation {
    fn flags(self) -> (bool, bool) {
        match self {
            Mitigation::None => (false, false),
            Mitigation::Mitigate => (true, false),
            Mitigation::MitigateCorrect => (true, true),
        }
    }
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Dpepc, EstimatorKind::Ope]
}

fn default_mitigation() -> Vec<Mitigation> {
    vec![Mitigation::None]
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub version: u32,
    pub dims: Vec<usize>,
    pub gammas: Vec<f64>,
    pub kappas: Vec<f64>,
    /// Channel uses `N` per trial.
    pub channel_uses: Vec<u64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_mitigation")]
    pub mitigation: Vec<Mitigation>,
    pub seed: u64,
    pub output: PathBuf,
    /// When false the `wall_time` column is written as zero.
    #[serde(default = "default_true")]
    pub record_wall_time: bool,
    /// Directory of cached configurations; searched fresh when absent.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Toml(t) => Error::InvalidSpec(format!("{}: {t}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    /// Checks everything that does not need a configuration search.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.version != SPEC_VERSION {
            return Err(Error::FormatVersion {
                what: "experiment spec",
                found: self.version,
                expected: SPEC_VERSION,
            });
        }
        for (name, empty) in [
            ("dims", self.dims.is_empty()),
            ("gammas", self.gammas.is_empty()),
            ("kappas", self.kappas.is_empty()),
            ("channel_uses", self.channel_uses.is_empty()),
            ("estimators", self.estimators.is_empty()),
            ("mitigation", self.mitigation.is_empty()),
        ] {
            if empty {
                return bad(format!("`{name}` must not be empty"));
            }
        }
        if let Some(d) = self.dims.iter().find(|&&d| d < 2) {
            return bad(format!("dims: dimension {d} is below 2"));
        }
        if let Some(g) = self.gammas.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return bad(format!("gammas: {g} is outside [0, 1]"));
        }
        if let Some(k) = self.kappas.iter().find(|k| !(0.0..=1.0).contains(*k)) {
            return bad(format!("kappas: {k} is outside [0, 1]"));
        }
        let mitigates = self.mitigation.iter().any(|m| *m != Mitigation::None);
        if mitigates && self.kappas.iter().any(|&k| k >= 1.0) {
            return bad("kappas: a fully depolarized probe cannot be mitigated".into());
        }
        if self.channel_uses.contains(&0) {
            return bad("channel_uses: N must be positive".into());
        }
        if self.trials < 2 {
            return bad(format!("trials: need at least 2 for a sample variance, got {}", self.trials));
        }
        if has_duplicates(&self.estimators) {
            return bad("estimators: duplicate entry".into());
        }
        if has_duplicates(&self.mitigation) {
            return bad("mitigation: duplicate entry".into());
        }
        Ok(())
    }

    fn grid(&self) -> Vec<GridPoint> {
        let mut points = Vec::new();
        for &d in &self.dims {
            for &gamma in &self.gammas {
                for &kappa in &self.kappas {
                    for &n in &self.channel_uses {
                        points.push(GridPoint { d, gamma, kappa, n });
                    }
                }
            }
        }
        points
    }
}

fn has_duplicates<T: PartialEq>(items: &[T]) -> bool {
    items.iter().enumerate().any(|(i, a)| items[..i].contains(a))
}

#[derive(Debug, Clone, Copy)]
struct GridPoint {
    d: usize,
    gamma: f64,
    kappa: f64,
    n: u64,
}

/// One CSV record: accuracy of one estimator and mitigation variant at one
/// grid point, aggregated over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub d: usize,
    /// Measurement configurations; 1 for the entanglement-assisted protocol.
    #[serde(rename = "K")]
    pub k: usize,
    pub gamma: f64,
    pub kappa: f64,
    #[serde(rename = "N")]
    pub n: u64,
    pub estimator: EstimatorKind,
    pub mitigated: bool,
    pub corrected: bool,
    pub trials: usize,
    pub seed: u64,
    pub summed_variance: f64,
    pub summed_mse: f64,
    pub mean_diamond: f64,
    pub bias_norm: f64,
    /// Seconds spent simulating and estimating this grid point.
    pub wall_time: f64,
}

/// Configurations for every dimension of the spec, from the cache when one is
/// configured.
pub fn load_configs(spec: &ExperimentSpec) -> Result<BTreeMap<usize, MeasurementConfig>> {
    let cache = spec.cache_dir.as_ref().map(ConfigCache::new);
    let mut dims = spec.dims.clone();
    dims.sort_unstable();
    dims.dedup();
    dims.into_par_iter()
        .map(|d| {
            let cfg = match &cache {
                Some(c) => c.load_or_build(d)?,
                None => find_config(d)?,
            };
            Ok((d, cfg))
        })
        .collect()
}

/// Runs the sweep on a dedicated pool of `threads` workers (all cores when
/// `None`).
pub fn run_experiment(spec: &ExperimentSpec, threads: Option<usize>) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(spec))
}

fn run_in_pool(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    let configs = load_configs(spec)?;
    if spec.estimators.contains(&EstimatorKind::Dpepc) {
        for (&d, cfg) in &configs {
            if let Some(&n) = spec.channel_uses.iter().find(|&&n| n < cfg.k() as u64) {
                return Err(Error::InvalidSpec(format!(
                    "channel_uses: N = {n} is below K = {} for d = {d}",
                    cfg.k()
                )));
            }
        }
    }
    let mut channels = BTreeMap::new();
    for &d in &spec.dims {
        for &gamma in &spec.gammas {
            channels.insert((d, gamma.to_bits()), make_exp_corr_channel(d, gamma)?);
        }
    }

    let tasks: Vec<(usize, GridPoint, usize, EstimatorKind)> = spec
        .grid()
        .into_iter()
        .enumerate()
        .flat_map(|(g, point)| {
            spec.estimators
                .iter()
                .enumerate()
                .map(move |(e, &est)| (g, point, e, est))
        })
        .collect();

    let per_task: Vec<Vec<ResultRow>> = tasks
        .par_iter()
        .map(|&(g, point, e, est)| {
            let truth = &channels[&(point.d, point.gamma.to_bits())];
            let cfg = &configs[&point.d];
            let stream = RngStream::new(spec.seed, g as u64).child(e as u64);
            run_task(spec, point, est, truth, cfg, stream)
        })
        .collect::<Result<_>>()?;
    Ok(per_task.into_iter().flatten().collect())
}

fn run_task(
    spec: &ExperimentSpec,
    point: GridPoint,
    estimator: EstimatorKind,
    truth: &ChannelParams,
    cfg: &MeasurementConfig,
    stream: RngStream,
) -> Result<Vec<ResultRow>> {
    let start = Instant::now();
    let raw: Vec<Estimate> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let trial = stream.child(t as u64);
            match estimator {
                EstimatorKind::Dpepc => {
                    let counts = simulate_dpepc(truth, cfg, point.n, point.kappa, trial)?;
                    dpepc_estimate(&counts, cfg)
                }
                EstimatorKind::Ope => ope_estimate(&simulate_ope(truth, point.n, point.kappa, trial)?),
            }
        })
        .collect::<Result<_>>()?;

    let mut variants = Vec::with_capacity(spec.mitigation.len());
    for &m in &spec.mitigation {
        let estimates = match m {
            Mitigation::None => raw.clone(),
            Mitigation::Mitigate | Mitigation::MitigateCorrect => {
                let mut out = raw
                    .iter()
                    .map(|e| mitigate_depolarizing(e, point.kappa, point.d))
                    .collect::<Result<Vec<_>>>()?;
                if m == Mitigation::MitigateCorrect {
                    out = out.iter().map(Estimate::corrected).collect();
                }
                out
            }
        };
        variants.push((m, TrialBatch::new(truth.clone(), estimates)?));
    }
    let wall_time = if spec.record_wall_time {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    };

    variants
        .into_iter()
        .map(|(m, batch)| {
            let (mitigated, corrected) = m.flags();
            Ok(ResultRow {
                d: point.d,
                k: match estimator {
                    EstimatorKind::Dpepc => cfg.k(),
                    EstimatorKind::Ope => 1,
                },
                gamma: point.gamma,
                kappa: point.kappa,
                n: point.n,
                estimator,
                mitigated,
                corrected,
                trials: spec.trials,
                seed: spec.seed,
                summed_variance: summed_variance(&batch)?,
                summed_mse: summed_mse(&batch),
                mean_diamond: mean_diamond(&batch),
                bias_norm: bias_norm(&batch),
                wall_time,
            })
        })
        .collect()
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(rows, file)
}

pub fn write_csv_to<W: std::io::Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader.deserialize().collect::<Result<Vec<ResultRow>, _>>()?;
    Ok(rows)
}

/// Descriptive metadata written next to the CSV as `<output>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub spec_version: u32,
    /// Seconds since the Unix epoch at the end of the run.
    pub timestamp: u64,
    pub seed: u64,
    /// Where the probe noise acts in the entanglement-assisted simulation.
    pub ope_noise_placement: String,
    /// Channel uses left over by `⌊N/K⌋` shots per configuration, per `(d, N)`.
    pub discarded_shots: Vec<DiscardedShots>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscardedShots {
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: u64,
    pub discarded: u64,
}

pub fn meta_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn run_meta(spec: &ExperimentSpec, configs: &BTreeMap<usize, MeasurementConfig>) -> RunMeta {
    let mut discarded_shots = Vec::new();
    for (&d, cfg) in configs {
        for &n in &spec.channel_uses {
            let k = cfg.k();
            discarded_shots.push(DiscardedShots {
                d,
                k,
                n,
                discarded: n % k as u64,
            });
        }
    }
    RunMeta {
        spec_version: SPEC_VERSION,
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|t| t.as_secs())
            .unwrap_or(0),
        seed: spec.seed,
        ope_noise_placement: "single qudit, channel input".into(),
        discarded_shots,
    }
}

/// Runs the sweep and writes the CSV plus its metadata sidecar to `output`.
pub fn run_and_write(spec: &ExperimentSpec, output: &Path, threads: Option<usize>) -> Result<Vec<ResultRow>> {
    let rows = run_experiment(spec, threads)?;
    write_csv(&rows, output)?;
    let meta = run_meta(spec, &load_configs(spec)?);
    let path = meta_path(output);
    fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

/// One curve of a sweep: fixed `(d, γ, κ, estimator, variant)`, varying `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSummary {
    pub d: usize,
    pub k: usize,
    pub gamma: f64,
    pub kappa: f64,
    pub estimator: EstimatorKind,
    pub mitigated: bool,
    pub corrected: bool,
    /// `(N, summed_variance, summed_mse)` in increasing `N`.
    pub points: Vec<(u64, f64, f64)>,
    /// Log-log slope of the summed variance; `None` below three points.
    pub variance_slope: Option<f64>,
    pub mse_slope: Option<f64>,
    /// Summed MSE at the largest `N`.
    pub plateau: f64,
}

pub fn summarize(rows: &[ResultRow]) -> Vec<CurveSummary> {
    let mut groups: Vec<CurveSummary> = Vec::new();
    for row in rows {
        let found = groups.iter_mut().find(|g| {
            g.d == row.d
                && g.gamma == row.gamma
                && g.kappa == row.kappa
                && g.estimator == row.estimator
                && g.mitigated == row.mitigated
                && g.corrected == row.corrected
        });
        let point = (row.n, row.summed_variance, row.summed_mse);
        match found {
            Some(g) => g.points.push(point),
            None => groups.push(CurveSummary {
                d: row.d,
                k: row.k,
                gamma: row.gamma,
                kappa: row.kappa,
                estimator: row.estimator,
                mitigated: row.mitigated,
                corrected: row.corrected,
                points: vec![point],
                variance_slope: None,
                mse_slope: None,
                plateau: f64::NAN,
            }),
        }
    }
    for g in &mut groups {
        g.points.sort_by_key(|p| p.0);
        let series = |pick: fn(&(u64, f64, f64)) -> f64| -> Vec<(f64, f64)> {
            g.points.iter().map(|p| (p.0 as f64, pick(p))).collect()
        };
        g.variance_slope = loglog_slope(&series(|p| p.1)).ok();
        g.mse_slope = loglog_slope(&series(|p| p.2)).ok();
        g.plateau = g.points.last().map_or(f64::NAN, |p| p.2);
    }
    groups.sort_by(|a, b| {
        a.d.cmp(&b.d)
            .then(a.kappa.total_cmp(&b.kappa))
            .then(a.gamma.total_cmp(&b.gamma))
            .then(a.estimator.cmp(&b.estimator))
            .then(a.mitigated.cmp(&b.mitigated))
            .then(a.corrected.cmp(&b.corrected))
    });
    groups
}

fn fmt_slope(s: Option<f64>) -> String {
    s.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

/// Plain-text table of slopes and plateaus per curve.
pub fn report(rows: &[ResultRow]) -> String {
    let mut out = format!(
        "{:>3} {:>3} {:>6} {:>6} {:>6} {:>10} {:>5} {:>10} {:>10} {:>12}\n",
        "d", "K", "gamma", "kappa", "est", "variant", "pts", "var_slope", "mse_slope", "plateau"
    );
    for g in summarize(rows) {
        let variant = match (g.mitigated, g.corrected) {
            (false, false) => "raw",
            (true, false) => "mitigated",
            (true, true) => "corrected",
            (false, true) => "clipped",
        };
        out.push_str(&format!(
            "{:>3} {:>3} {:>6} {:>6} {:>6} {:>10} {:>5} {:>10} {:>10} {:>12.4e}\n",
            g.d,
            g.k,
            g.gamma,
            g.kappa,
            g.estimator.as_str(),
            variant,
            g.points.len(),
            fmt_slope(g.variance_slope),
            fmt_slope(g.mse_slope),
            g.plateau
        ));
    }
    out
}
