//! Cost of one structured gradient iteration against one global solve.
//!
//! `flops` counts complex multiply-accumulates recorded by the kernels.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simcascade::model::assemble_gamma;
use simcascade::optimizer::{evaluate_with_gradient, TrainingSet};
use simcascade::{linalg, network, synthetic, GlobalScattering, SimTopology};

use crate::CliError;

pub const HEADER: [&str; 6] = ["q", "k", "path", "flops", "wall_us", "rep"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Path {
    Structured,
    Oracle,
}

impl Path {
    pub fn name(self) -> &'static str {
        match self {
            Path::Structured => "structured",
            Path::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub q: usize,
    pub k: usize,
    pub path: Path,
    pub flops: u64,
    pub wall_us: f64,
    pub rep: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub max_q: usize,
    pub max_k: usize,
    pub reps: usize,
    /// `L = M = I`.
    pub ports: usize,
    /// Oracle runs are skipped above this many SIM ports.
    pub max_oracle_ports: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            max_q: 8,
            max_k: 64,
            reps: 3,
            ports: 4,
            max_oracle_ports: 512,
        }
    }
}

/// Powers of two from `start` up to `max`, plus `max` itself.
fn grid(start: usize, max: usize) -> Vec<usize> {
    let mut v: Vec<usize> = std::iter::successors(Some(start), |x| Some(x * 2)).take_while(|x| *x <= max).collect();
    if v.last() != Some(&max) && max >= start {
        v.push(max);
    }
    v
}

pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>, CliError> {
    if cfg.max_q == 0 || cfg.max_k == 0 || cfg.reps == 0 || cfg.ports == 0 {
        return Err(CliError::Config("bench sizes and repetitions must be at least 1".into()));
    }
    let mut rows = Vec::new();
    for q in grid(1, cfg.max_q) {
        for k in grid(cfg.max_k.min(4), cfg.max_k) {
            let topo = SimTopology::new(q, k, cfg.ports, cfg.ports).map_err(|e| CliError::Config(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64((q as u64) << 32 | k as u64);
            let blocks = synthetic::random_blocks(&topo, false, &mut rng);
            let ctrl = synthetic::random_control(&topo, 1.0, &mut rng);
            let training = TrainingSet::diagonalization(&topo);
            let oracle = topo.sim_ports() <= cfg.max_oracle_ports;
            let global = if oracle {
                Some(GlobalScattering::assemble(&blocks).and_then(|g| Ok((g, assemble_gamma(&ctrl, &topo)?))))
            } else {
                None
            };
            for rep in 0..cfg.reps {
                let clock = Instant::now();
                let (res, flops) = linalg::counting(|| evaluate_with_gradient(&blocks, &ctrl, &training));
                let wall_us = clock.elapsed().as_secs_f64() * 1e6;
                res.map_err(|e| CliError::Numerical(format!("structured Q={q} K={k}: {e}")))?;
                rows.push(BenchRow { q, k, path: Path::Structured, flops, wall_us, rep });

                if let Some(prepared) = &global {
                    let (g, gamma) = prepared.as_ref().map_err(|e| CliError::Numerical(e.to_string()))?;
                    let clock = Instant::now();
                    let (res, flops) = linalg::counting(|| network::e2e_global(g, gamma));
                    let wall_us = clock.elapsed().as_secs_f64() * 1e6;
                    res.map_err(|e| CliError::Numerical(format!("oracle Q={q} K={k}: {e}")))?;
                    rows.push(BenchRow { q, k, path: Path::Oracle, flops, wall_us, rep });
                }
            }
        }
    }
    Ok(rows)
}

/// Flop count of the first repetition at `(q, k)` on `path`.
pub fn flops_at(rows: &[BenchRow], q: usize, k: usize, path: Path) -> Option<u64> {
    rows.iter().find(|r| r.q == q && r.k == k && r.path == path).map(|r| r.flops)
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::Numerical(format!("writing CSV: {e}"));
    w.write_record(HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.q.to_string(),
            r.k.to_string(),
            r.path.name().to_string(),
            r.flops.to_string(),
            format!("{:.1}", r.wall_us),
            r.rep.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Numerical(format!("writing CSV: {e}")))
}
