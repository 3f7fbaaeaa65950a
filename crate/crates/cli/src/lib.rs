//! Command-line driver: `optimize`, `sweep`, `verify` and `bench`.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration
//! error, 3 numerical or runtime error.

pub mod bench;
pub mod config;
pub mod report;
pub mod sweep;
pub mod verify;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simcascade::optimizer::{random_start, TrainingSet};
use simcascade::{synthetic, SimTopology};
use thiserror::Error;

use crate::config::Scenario;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("verification failed")]
    VerificationFailed,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::VerificationFailed => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "simcascade", version, about = "Stacked active metasurface simulator and phase optimizer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize the phases of one scenario and print a JSON report.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the seed of the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sweep bandwidth, gain or layer spacing and print CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: sweep::Axis,
        /// Comma-separated points: Hz, dB or wavelengths. Defaults to the
        /// `[sweep]` table of the configuration.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Concurrent optimizations; all cores when omitted.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check the solvers against each other on one instance.
    Verify {
        #[arg(long, conflicts_with = "random", required_unless_present = "random")]
        config: Option<PathBuf>,
        /// Random instance with Q layers, K cells, L and M antennas.
        #[arg(long, num_args = 4, value_names = ["Q", "K", "L", "M"])]
        random: Option<Vec<usize>>,
        #[arg(long)]
        seed: Option<u64>,
        /// Cell amplitude of the random instance.
        #[arg(long, default_value_t = 1.0)]
        gain: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Count the cost of structured iterations and global solves, as CSV.
    Bench {
        #[arg(long, default_value_t = 8)]
        max_q: usize,
        #[arg(long, default_value_t = 64)]
        max_k: usize,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Transmit and receive antennas, also the number of excitations.
        #[arg(long, default_value_t = 4)]
        ports: usize,
        #[arg(long, default_value_t = 512)]
        max_oracle_ports: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Numerical(format!("writing output: {e}"));
    match out {
        Some(path) => {
            let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
            write(&mut file)?;
            file.flush().map_err(io)
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush().map_err(io)
        }
    }
}

fn load(config: &Path, seed: Option<u64>) -> Result<Scenario, CliError> {
    let s = Scenario::load(config)?;
    Ok(match seed {
        Some(seed) => s.with_seed(seed),
        None => s,
    })
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Optimize { config, out, seed } => {
            let scenario = load(&config, seed)?;
            let outcome = report::run_optimization(&scenario)?;
            let text = serde_json::to_string_pretty(&outcome.report)
                .map_err(|e| CliError::Numerical(format!("encoding report: {e}")))?;
            emit(out.as_deref(), |w| writeln!(w, "{text}").map_err(|e| CliError::Numerical(e.to_string())))
        }
        Command::Sweep { config, axis, values, out, seed, jobs } => {
            let scenario = load(&config, seed)?;
            let values = if values.is_empty() { axis.default_values(&scenario) } else { values };
            let rows = sweep::run_sweep(&scenario, axis, &values, jobs)?;
            emit(out.as_deref(), |w| sweep::write_csv(&rows, w))
        }
        Command::Verify { config, random, seed, gain, out } => {
            let (blocks, ctrl, training, seed) = match (config, random) {
                (Some(path), _) => {
                    let s = load(&path, seed)?;
                    let ctrl = random_start(&s.topology(), s.file.gain_amplitude(), s.file.seed);
                    (s.blocks, ctrl, s.training, s.file.seed)
                }
                (None, Some(dims)) => {
                    let seed = seed.unwrap_or(0);
                    if !(gain.is_finite() && gain >= 0.0) {
                        return Err(CliError::Config(format!("--gain: must be finite and >= 0, got {gain}")));
                    }
                    let topo = SimTopology::new(dims[0], dims[1], dims[2], dims[3])
                        .map_err(|e| CliError::Config(format!("--random: {e}")))?;
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let blocks = synthetic::random_blocks(&topo, true, &mut rng);
                    let ctrl = synthetic::random_control(&topo, gain, &mut rng);
                    (blocks, ctrl, TrainingSet::diagonalization(&topo), seed)
                }
                (None, None) => return Err(CliError::Config("verify needs --config or --random".into())),
            };
            let checks = verify::verify_instance(&blocks, &ctrl, &training, seed);
            let text = verify::render(&checks);
            emit(out.as_deref(), |w| w.write_all(text.as_bytes()).map_err(|e| CliError::Numerical(e.to_string())))?;
            if verify::all_passed(&checks) {
                Ok(())
            } else {
                Err(CliError::VerificationFailed)
            }
        }
        Command::Bench { max_q, max_k, reps, ports, max_oracle_ports, out } => {
            let cfg = bench::BenchConfig { max_q, max_k, reps, ports, max_oracle_ports };
            let rows = bench::run_bench(&cfg)?;
            emit(out.as_deref(), |w| bench::write_csv(&rows, w))
        }
    }
}
