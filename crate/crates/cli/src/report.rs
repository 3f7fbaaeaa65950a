//! Single optimization runs and their JSON report.

use std::f64::consts::TAU;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use simcascade::evaluation::{self, LinkBudget};
use simcascade::optimizer::{optimize, output_matrix, random_start, Termination};
use simcascade::{CMat, SimError};

use crate::config::Scenario;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyReport {
    #[serde(rename = "Q")]
    pub layers: usize,
    #[serde(rename = "K")]
    pub cells: usize,
    #[serde(rename = "L")]
    pub tx_ports: usize,
    #[serde(rename = "M")]
    pub rx_ports: usize,
}

/// Outcome of one optimization. Non-finite numbers (an exactly diagonal
/// channel has `+∞` dB) are written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub topology: TopologyReport,
    pub seed: u64,
    pub gain_db_power: f64,
    pub gain_amplitude: f64,
    pub spacing_lambda: Option<f64>,
    pub bandwidth_hz: f64,
    pub termination: Termination,
    pub iterations: usize,
    pub wall_time_ms: f64,
    pub final_loss: f64,
    pub final_gradient_norm: f64,
    pub beta: [f64; 2],
    pub final_diagonality_db: f64,
    pub best_diagonality_db: f64,
    /// Per-stream SINR sum rate; `null` unless `M = L`.
    pub sum_se_bits_per_hz: Option<f64>,
    /// Joint-decoding log-det rate of the same channel, for comparison.
    pub log_det_capacity_bits_per_hz: Option<f64>,
    pub loss_trace: Vec<f64>,
    pub diagonality_trace: Vec<f64>,
    /// Final phases wrapped to `[0, 2π)`, layer by layer.
    pub final_phases: Vec<f64>,
}

/// An optimization run together with the physical channel it produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    /// `H_SR H2 I_L`, the unscaled end-to-end channel.
    pub channel: CMat,
}

impl RunOutcome {
    /// Sum spectral efficiency of the same channel under another budget.
    pub fn sum_se(&self, budget: &LinkBudget) -> Option<f64> {
        evaluation::sum_spectral_efficiency(&self.channel, budget).ok()
    }
}

fn classify(e: SimError) -> CliError {
    match e {
        SimError::Numerical(_) | SimError::DegenerateOutput | SimError::UndefinedMetric(_) => {
            CliError::Numerical(e.to_string())
        }
        other => CliError::Config(other.to_string()),
    }
}

/// Runs the optimizer from the seeded random start of `scenario`.
pub fn run_optimization(scenario: &Scenario) -> Result<RunOutcome, CliError> {
    let topo = scenario.topology();
    let file = &scenario.file;
    let gain = file.gain_amplitude();
    let start = random_start(&topo, gain, file.seed);
    let clock = Instant::now();
    let run = optimize(&scenario.blocks, &scenario.training, &file.optimizer, &start).map_err(|e| {
        let steps = e.partial.loss_trace.len();
        match classify(e.error) {
            CliError::Numerical(m) => CliError::Numerical(format!("{m} (aborted after {steps} recorded losses)")),
            other => other,
        }
    })?;
    let wall_time_ms = clock.elapsed().as_secs_f64() * 1e3;

    let channel = output_matrix(&scenario.blocks, &run.final_phases, &CMat::identity(topo.tx_ports, topo.tx_ports))
        .map_err(classify)?;
    let report = RunReport {
        topology: TopologyReport {
            layers: topo.layers,
            cells: topo.cells,
            tx_ports: topo.tx_ports,
            rx_ports: topo.rx_ports,
        },
        seed: file.seed,
        gain_db_power: file.gain_db_power,
        gain_amplitude: gain,
        spacing_lambda: file.spacing_lambda(),
        bandwidth_hz: scenario.budget.bandwidth,
        termination: run.termination,
        iterations: run.iterations_used,
        wall_time_ms,
        final_loss: run.final_loss(),
        final_gradient_norm: run.final_gradient_norm,
        beta: [run.beta.re, run.beta.im],
        final_diagonality_db: run.final_diagonality_db(),
        best_diagonality_db: run.best_diagonality_db(),
        sum_se_bits_per_hz: evaluation::sum_spectral_efficiency(&channel, &scenario.budget).ok(),
        log_det_capacity_bits_per_hz: evaluation::log_det_capacity(&channel, &scenario.budget).ok(),
        loss_trace: run.loss_trace.clone(),
        diagonality_trace: run.diagonality_trace.clone(),
        final_phases: run.final_phases.phases.iter().map(|p| p.rem_euclid(TAU)).collect(),
    };
    Ok(RunOutcome { report, channel })
}
