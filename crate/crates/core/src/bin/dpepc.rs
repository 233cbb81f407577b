//! Command-line front end: configuration search, channel generation,
//! simulation, estimation, experiment sweeps and reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use dpepc::channel::{make_depolarizing, make_exp_corr_channel, make_random_channel};
use dpepc::estimate::{dpepc_estimate, mitigate_depolarizing, ope_estimate};
use dpepc::harness::{read_csv, report, run_and_write};
use dpepc::sim::{simulate_dpepc, simulate_dpepc_oracle, simulate_ope};
use dpepc::{ChannelParams, ConfigCache, CountVector, Error, EstimatorKind, ExperimentSpec, Result, RngStream};

#[derive(Parser)]
#[command(name = "dpepc", version, about = "Parameter estimation of discrete Weyl channels")]
struct Cli {
    /// Master seed for every random draw (default 0; experiment: overrides the spec's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when omitted (experiment: overrides the spec's path).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search (or load) a sufficient measurement configuration for dimension d.
    FindConfig {
        d: usize,
        #[command(flatten)]
        cache: CacheArg,
    },
    /// Generate a channel parameter vector as JSON.
    GenChannel(GenChannel),
    /// Simulate probe measurements of a channel.
    Simulate(Simulate),
    /// Estimate channel parameters from simulated counts.
    Estimate(EstimateCmd),
    /// Run an experiment sweep described by a TOML spec and write CSV.
    Experiment {
        spec: PathBuf,
        /// Worker threads; all cores when omitted.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Summarize a results CSV: slopes and plateaus per curve.
    Report { csv: PathBuf },
}

#[derive(Args)]
struct CacheArg {
    /// Directory of cached configurations.
    #[arg(long, default_value = "configs")]
    cache_dir: PathBuf,
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "family")]
struct Family {
    /// Exponentially correlated channel with correlation γ.
    #[arg(long)]
    gamma: Option<f64>,
    /// Depolarizing channel of strength κ.
    #[arg(long)]
    kappa: Option<f64>,
    /// Channel drawn uniformly from the simplex.
    #[arg(long)]
    random: bool,
}

#[derive(Args)]
struct GenChannel {
    #[arg(long)]
    d: usize,
    #[command(flatten)]
    family: Family,
}

#[derive(Clone, Copy, ValueEnum)]
enum Protocol {
    Dpepc,
    Ope,
}

impl From<Protocol> for EstimatorKind {
    fn from(p: Protocol) -> Self {
        match p {
            Protocol::Dpepc => EstimatorKind::Dpepc,
            Protocol::Ope => EstimatorKind::Ope,
        }
    }
}

#[derive(Args)]
struct Simulate {
    /// Channel JSON written by gen-channel.
    #[arg(long)]
    channel: PathBuf,
    /// Total channel uses.
    #[arg(long)]
    n: u64,
    /// Depolarizing noise on the probe states.
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
    #[arg(long, value_enum, default_value = "dpepc")]
    estimator: Protocol,
    /// Evolve density matrices instead of using transition probabilities.
    #[arg(long)]
    oracle: bool,
    #[command(flatten)]
    cache: CacheArg,
}

#[derive(Args)]
struct EstimateCmd {
    /// Counts JSON written by simulate.
    #[arg(long)]
    counts: PathBuf,
    /// Invert the recorded probe noise.
    #[arg(long)]
    mitigate: bool,
    /// Project the estimate onto the probability simplex.
    #[arg(long)]
    correct: bool,
    #[command(flatten)]
    cache: CacheArg,
}

/// Counts file exchanged between `simulate` and `estimate`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Samples {
    d: usize,
    estimator: EstimatorKind,
    kappa: f64,
    n: u64,
    seed: u64,
    counts: Vec<CountVector>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_error(path, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out.as_deref();
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::FindConfig { d, cache } => {
            let cache = ConfigCache::new(cache.cache_dir);
            let cfg = cache.load_or_build(d)?;
            println!("d = {d}, K = {}, rank = {}", cfg.k(), cfg.rank());
            println!("cache: {}", cache.path_for(d).display());
            if let Some(path) = out {
                fs::write(path, cfg.to_json()?).map_err(|e| io_error(path, e))?;
            }
        }
        Command::GenChannel(args) => {
            let d = args.d;
            let ch = match (args.family.gamma, args.family.kappa) {
                (Some(gamma), _) => make_exp_corr_channel(d, gamma)?,
                (None, Some(kappa)) => make_depolarizing(d, kappa)?,
                (None, None) => {
                    let mut rng = RngStream::new(seed, 0).rng();
                    make_random_channel(d, &mut rng)?
                        .with_generator(dpepc::GeneratorMeta::RandomSimplex { seed })
                }
            };
            emit(out, &serde_json::to_string_pretty(&ch)?)?;
        }
        Command::Simulate(args) => {
            let ch: ChannelParams = read_json(&args.channel)?;
            let stream = RngStream::new(seed, 0);
            let estimator = EstimatorKind::from(args.estimator);
            let counts = match estimator {
                EstimatorKind::Dpepc => {
                    let cfg = ConfigCache::new(args.cache.cache_dir).load_or_build(ch.d())?;
                    if args.oracle {
                        simulate_dpepc_oracle(&ch, &cfg, args.n, args.kappa, stream)?
                    } else {
                        simulate_dpepc(&ch, &cfg, args.n, args.kappa, stream)?
                    }
                }
                EstimatorKind::Ope => vec![simulate_ope(&ch, args.n, args.kappa, stream)?],
            };
            let samples = Samples {
                d: ch.d(),
                estimator,
                kappa: args.kappa,
                n: args.n,
                seed,
                counts,
            };
            emit(out, &serde_json::to_string(&samples)?)?;
        }
        Command::Estimate(args) => {
            let samples: Samples = read_json(&args.counts)?;
            let mut est = match samples.estimator {
                EstimatorKind::Dpepc => {
                    let cfg = ConfigCache::new(args.cache.cache_dir).load_or_build(samples.d)?;
                    dpepc_estimate(&samples.counts, &cfg)?
                }
                EstimatorKind::Ope => match samples.counts.as_slice() {
                    [single] => ope_estimate(single)?,
                    other => {
                        return Err(Error::MisalignedCounts(format!(
                            "expected one Bell-measurement count vector, got {}",
                            other.len()
                        )))
                    }
                },
            };
            if args.mitigate {
                est = mitigate_depolarizing(&est, samples.kappa, samples.d)?;
            }
            if args.correct {
                est = est.corrected();
            }
            emit(out, &serde_json::to_string_pretty(&est.with_seed(samples.seed))?)?;
        }
        Command::Experiment { spec, threads } => {
            let mut spec = ExperimentSpec::load(&spec)?;
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let output = out.map(Path::to_path_buf).unwrap_or_else(|| spec.output.clone());
            let rows = run_and_write(&spec, &output, threads)?;
            println!("wrote {} rows to {}", rows.len(), output.display());
        }
        Command::Report { csv } => {
            let rows = read_csv(&csv)?;
            emit(out, report(&rows).trim_end())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
