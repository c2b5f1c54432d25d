//! Command-line front end: single trials, Monte Carlo batches, the
//! chance-constraint calibration suite, and record replay.

use clap::{Args, Parser, Subcommand};
use pecbf::batch::{run_batch, run_calibration, summary_csv};
use pecbf::config::{load_overrides, resolve_spec, SpecOverrides};
use pecbf::scenario::{ScenarioKind, Variant};
use pecbf::sim::{replay_matches, run_trial};
use pecbf::{Error, Result};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pecbf", version, about = "Probabilistic eCBF safety-filter simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Scenario selection shared by `run` and `batch`. Flags override the
/// config file, which overrides the scenario family defaults.
#[derive(Args)]
struct SpecArgs {
    /// Config file (TOML) with scenario settings.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Scenario family: lane_change, intersection_left_turn, or
    /// intersection_straight.
    #[arg(long)]
    scenario: Option<ScenarioKind>,
    /// Controller variant: proposed, det_nokopt, det_kopt, or prob_nokopt.
    #[arg(long)]
    variant: Option<Variant>,
    /// Master seed for scenario and noise streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Velocity noise standard deviation (m/s).
    #[arg(long)]
    sigma: Option<f64>,
    /// Chance-constraint confidence level.
    #[arg(long)]
    eta: Option<f64>,
    /// Simulation step (s).
    #[arg(long)]
    dt: Option<f64>,
    /// Simulation horizon (s).
    #[arg(long)]
    tmax: Option<f64>,
    /// Weight on the control deviation in the filter objective.
    #[arg(long)]
    c1: Option<f64>,
    /// Weight on the pole deviation in the filter objective.
    #[arg(long)]
    c2: Option<f64>,
}

impl SpecArgs {
    fn resolve(&self) -> Result<pecbf::scenario::ScenarioSpec> {
        let file = match &self.config {
            Some(path) => Some(load_overrides(path)?),
            None => None,
        };
        let cli = SpecOverrides {
            kind: self.scenario,
            variant: self.variant,
            seed: self.seed,
            sigma: self.sigma,
            eta: self.eta,
            dt: self.dt,
            t_max: self.tmax,
            c1: self.c1,
            c2: self.c2,
            ..SpecOverrides::default()
        };
        resolve_spec(file.as_ref(), &cli)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one trial and emit its replayable record.
    Run {
        #[command(flatten)]
        spec: SpecArgs,
        /// Trial index within the seed's batch.
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Write the record here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Run seeded trial batches per variant and emit the summary table.
    Batch {
        #[command(flatten)]
        spec: SpecArgs,
        /// Trials per variant.
        #[arg(long, default_value_t = 250)]
        trials: u64,
        /// Comma-separated variant list; defaults to all four.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<Variant>>,
        /// Worker threads; defaults to the core count.
        #[arg(long)]
        jobs: Option<usize>,
        /// Write the summary here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Also write every trial record into this directory.
        #[arg(long, value_name = "DIR")]
        records_dir: Option<PathBuf>,
    },
    /// Check tightened chance constraints against Monte Carlo estimates on
    /// boundary instances; nonzero exit if any family misses its level.
    Calibrate {
        /// Boundary instances per family and confidence level.
        #[arg(long, default_value_t = 500)]
        instances: usize,
        /// Monte Carlo samples per instance.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Worker threads; defaults to the core count.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Re-simulate a saved record and verify it reproduces byte-for-byte.
    Replay {
        /// Record file produced by `run` or `batch --records-dir`.
        file: PathBuf,
    },
}

fn init_pool(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
    }
    Ok(())
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Run { spec, trial, out } => {
            let spec = spec.resolve()?;
            let rec = run_trial(&spec, trial)?;
            emit(&rec.serialize(), out.as_ref())?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Batch {
            spec,
            trials,
            variants,
            jobs,
            out,
            records_dir,
        } => {
            init_pool(jobs)?;
            let spec = spec.resolve()?;
            if trials == 0 {
                return Err(Error::Config("--trials must be at least 1".into()));
            }
            let variants = variants.unwrap_or_else(|| Variant::ALL.to_vec());
            let results = run_batch(&spec, trials, &variants)?;
            if let Some(dir) = &records_dir {
                std::fs::create_dir_all(dir)?;
                for (stats, records) in &results {
                    for rec in records {
                        let name = format!("{}_{:04}.txt", stats.variant.label(), rec.trial);
                        std::fs::write(dir.join(name), rec.serialize())?;
                    }
                }
            }
            let stats: Vec<_> = results.iter().map(|(s, _)| *s).collect();
            emit(&summary_csv(&stats), out.as_ref())?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Calibrate {
            instances,
            samples,
            seed,
            jobs,
        } => {
            init_pool(jobs)?;
            if instances == 0 || samples == 0 {
                return Err(Error::Config(
                    "--instances and --samples must be at least 1".into(),
                ));
            }
            let report = run_calibration(instances, samples, seed);
            let mut table = String::from("family,eta,instances,samples,min_prob,mean_prob,status\n");
            for fam in &report.families {
                writeln!(
                    table,
                    "{},{},{},{},{:.8e},{:.8e},{}",
                    fam.name,
                    fam.eta,
                    fam.instances,
                    report.samples,
                    fam.min_prob,
                    fam.mean_prob,
                    if fam.passed() { "pass" } else { "fail" }
                )
                .unwrap();
            }
            print!("{table}");
            if report.passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("calibration failed: a family fell below its confidence level");
                Ok(ExitCode::from(1))
            }
        }
        Cmd::Replay { file } => {
            let text = std::fs::read_to_string(&file)?;
            if replay_matches(&text)? {
                println!("replay ok: {}", file.display());
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("replay mismatch: {}", file.display());
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::Solver(_) => 3,
                Error::Io(_) => 1,
            })
        }
    }
}
