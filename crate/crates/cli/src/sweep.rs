//! Parameter sweeps written as CSV.

use std::io::Write;

use clap::ValueEnum;
use rayon::prelude::*;

use crate::config::Scenario;
use crate::report::{run_optimization, RunOutcome};
use crate::CliError;

pub const HEADER: [&str; 13] = [
    "axis",
    "value",
    "K",
    "Q",
    "gain_db",
    "spacing_lambda",
    "bandwidth_hz",
    "sum_se_bits_per_hz",
    "diagonality_db",
    "iterations",
    "wall_ms",
    "seed",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Bandwidth,
    Gain,
    Spacing,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Bandwidth => "bandwidth",
            Axis::Gain => "gain",
            Axis::Spacing => "spacing",
        }
    }

    pub fn default_values(self, scenario: &Scenario) -> Vec<f64> {
        let s = &scenario.file.sweep;
        match self {
            Axis::Bandwidth => s.bandwidth_hz.clone(),
            Axis::Gain => s.gain_db.clone(),
            Axis::Spacing => s.spacing_lambda.clone(),
        }
    }
}

/// One CSV row. Metric fields are `None` for failed points.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: Axis,
    pub value: f64,
    pub cells: usize,
    pub layers: usize,
    pub gain_db: f64,
    pub spacing_lambda: Option<f64>,
    pub bandwidth_hz: f64,
    pub sum_se: Option<f64>,
    pub diagonality_db: Option<f64>,
    pub iterations: Option<usize>,
    pub wall_ms: f64,
    pub seed: u64,
    pub status: String,
}

impl SweepRow {
    fn new(axis: Axis, value: f64, scenario: &Scenario) -> Self {
        let topo = scenario.topology();
        Self {
            axis,
            value,
            cells: topo.cells,
            layers: topo.layers,
            gain_db: scenario.file.gain_db_power,
            spacing_lambda: scenario.file.spacing_lambda(),
            bandwidth_hz: scenario.budget.bandwidth,
            sum_se: None,
            diagonality_db: None,
            iterations: None,
            wall_ms: 0.0,
            seed: scenario.file.seed,
            status: String::new(),
        }
    }

    fn fill(mut self, outcome: &RunOutcome, sum_se: Option<f64>) -> Self {
        self.sum_se = sum_se;
        self.diagonality_db = Some(outcome.report.final_diagonality_db);
        self.iterations = Some(outcome.report.iterations);
        self.wall_ms = outcome.report.wall_time_ms;
        self.status = "ok".into();
        self
    }

    fn failed(mut self, err: &CliError) -> Self {
        self.status = format!("error: {err}");
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.axis.name().into(),
            self.value.to_string(),
            self.cells.to_string(),
            self.layers.to_string(),
            self.gain_db.to_string(),
            opt(self.spacing_lambda),
            self.bandwidth_hz.to_string(),
            opt(self.sum_se),
            opt(self.diagonality_db),
            self.iterations.map(|i| i.to_string()).unwrap_or_default(),
            self.wall_ms.to_string(),
            self.seed.to_string(),
            self.status.clone(),
        ]
    }
}

fn point(base: &Scenario, axis: Axis, value: f64) -> SweepRow {
    let variant = match axis {
        Axis::Gain => base.with_gain_db(value),
        Axis::Spacing => base.with_spacing_lambda(value),
        Axis::Bandwidth => unreachable!("bandwidth points share one optimization"),
    };
    match variant {
        Err(e) => {
            let mut row = SweepRow::new(axis, value, base).failed(&e);
            if axis == Axis::Spacing {
                row.spacing_lambda = Some(value);
            } else {
                row.gain_db = value;
            }
            row
        }
        Ok(s) => {
            let row = SweepRow::new(axis, value, &s);
            match run_optimization(&s) {
                Ok(out) => {
                    let se = out.report.sum_se_bits_per_hz;
                    row.fill(&out, se)
                }
                Err(e) => row.failed(&e),
            }
        }
    }
}

/// Runs every point of the sweep; rows follow the order of `values`.
///
/// Bandwidth only changes the noise power, so its points share a single
/// optimization. Gain and spacing points are optimized independently on up
/// to `jobs` threads (all cores when `None`).
pub fn run_sweep(scenario: &Scenario, axis: Axis, values: &[f64], jobs: Option<usize>) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("--values: empty sweep".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(CliError::Config(format!("--values: {v} is not finite")));
    }
    if axis == Axis::Spacing && scenario.file.geometry.is_none() {
        return Err(CliError::Config("geometry: spacing sweeps need a [geometry] table".into()));
    }
    if axis == Axis::Bandwidth {
        let shared = run_optimization(scenario);
        return Ok(values
            .iter()
            .map(|&bw| {
                let mut row = SweepRow::new(axis, bw, scenario);
                row.bandwidth_hz = bw;
                if !(bw > 0.0) {
                    return row.failed(&CliError::Config(format!("bandwidth {bw} must be positive")));
                }
                match &shared {
                    Ok(out) => {
                        let se = out.sum_se(&scenario.budget.with_bandwidth(bw));
                        row.fill(out, se)
                    }
                    Err(e) => row.failed(e),
                }
            })
            .collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Numerical(format!("thread pool: {e}")))?;
    Ok(pool.install(|| values.par_iter().map(|&v| point(scenario, axis, v)).collect()))
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::Numerical(format!("writing CSV: {e}"));
    w.write_record(HEADER).map_err(io)?;
    for r in rows {
        w.write_record(r.record()).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Numerical(format!("writing CSV: {e}")))
}
