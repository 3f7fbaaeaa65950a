//! Phase optimization by gradient descent with Armijo backtracking.
//!
//! The loss is `‖β X̂(η) − X_d‖²_F` with `X̂ = H_SR H2(η) A_T`. At every
//! iterate the complex scale `β` is re-solved in closed form and then held
//! fixed while the phase gradient is taken. The gradient is factorized over
//! the layers: one forward sweep carries the excitations to every layer, one
//! backward sweep carries the residual back, and each phase derivative is a
//! single inner product between the two at its cell.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cascade;
use crate::error::{Result, SimError};
use crate::evaluation;
use crate::linalg::{self, count_macs, CMat, ZERO};
use crate::model::{ControlVector, ScatteringBlocks, SimTopology};
use crate::synthetic;

/// Excitations `A_T` (`L×I`, one column per training input) and the desired
/// outputs `X_d` (`M×I`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub excitations: CMat,
    pub target: CMat,
}

impl TrainingSet {
    pub fn new(excitations: CMat, target: CMat) -> Result<Self> {
        if excitations.ncols() == 0 {
            return Err(SimError::arg("training set needs at least one excitation"));
        }
        if excitations.ncols() != target.ncols() {
            return Err(SimError::arg(format!(
                "{} excitations but {} target columns",
                excitations.ncols(),
                target.ncols()
            )));
        }
        if !linalg::is_finite(&excitations) || !linalg::is_finite(&target) {
            return Err(SimError::arg("training set has non-finite entries"));
        }
        Ok(Self { excitations, target })
    }

    /// Each transmit antenna excited alone, target the identity scaled to
    /// unit Frobenius norm.
    pub fn diagonalization(topo: &SimTopology) -> Self {
        let (l, m) = (topo.tx_ports, topo.rx_ports);
        let eye = CMat::identity(m, l);
        let norm = eye.norm();
        Self {
            excitations: CMat::identity(l, l),
            target: eye / Complex64::new(norm, 0.0),
        }
    }

    pub fn check(&self, topo: &SimTopology) -> Result<()> {
        if self.excitations.nrows() != topo.tx_ports || self.target.nrows() != topo.rx_ports {
            return Err(SimError::arg(format!(
                "training set is {}→{}, topology is {}→{}",
                self.excitations.nrows(),
                self.target.nrows(),
                topo.tx_ports,
                topo.rx_ports
            )));
        }
        Ok(())
    }

    /// Square target with at least two streams and nothing off the diagonal.
    /// Only then is the diagonality stop meaningful.
    pub fn has_diagonal_target(&self) -> bool {
        let t = &self.target;
        t.is_square()
            && t.nrows() >= 2
            && (0..t.nrows()).all(|i| (0..t.ncols()).all(|j| i == j || t[(i, j)] == ZERO))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BetaMode {
    /// Closed-form optimum for the current phases.
    #[default]
    Optimal,
    /// A constant scale, never updated.
    Fixed(Complex64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    pub initial_step: f64,
    pub backtrack_factor: f64,
    pub min_step: f64,
    /// Stop once `‖∇L‖ ≤ gradient_tolerance · (1 + L)`.
    pub gradient_tolerance: f64,
    /// Stop once the output diagonality reaches this many dB (diagonal
    /// targets only).
    pub diagonality_stop_db: f64,
    pub max_backtracks: usize,
    #[serde(skip)]
    pub beta: BetaMode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            initial_step: 1.0,
            backtrack_factor: 0.5,
            min_step: 1e-12,
            gradient_tolerance: 1e-9,
            diagonality_stop_db: 35.0,
            max_backtracks: 60,
            beta: BetaMode::Optimal,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(SimError::arg("max_iterations must be positive"));
        }
        if !(self.initial_step.is_finite() && self.initial_step > 0.0) {
            return Err(SimError::arg("initial_step must be positive"));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(SimError::arg("backtrack_factor must lie in (0, 1)"));
        }
        if !(self.min_step.is_finite() && self.min_step > 0.0) {
            return Err(SimError::arg("min_step must be positive"));
        }
        if !(self.gradient_tolerance >= 0.0) {
            return Err(SimError::arg("gradient_tolerance must be non-negative"));
        }
        if self.diagonality_stop_db.is_nan() {
            return Err(SimError::arg("diagonality_stop_db is NaN"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTol,
    DiagonalityReached,
    MaxIter,
    StepUnderflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationRun {
    pub final_phases: ControlVector,
    pub beta: Complex64,
    /// Loss at the initial point and after every accepted step.
    pub loss_trace: Vec<f64>,
    /// Output diagonality in dB alongside `loss_trace`; NaN when undefined.
    pub diagonality_trace: Vec<f64>,
    pub iterations_used: usize,
    pub termination: Termination,
    pub final_gradient_norm: f64,
}

impl OptimizationRun {
    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("trace starts with the initial loss")
    }

    pub fn final_diagonality_db(&self) -> f64 {
        *self.diagonality_trace.last().expect("trace starts with the initial point")
    }

    pub fn best_diagonality_db(&self) -> f64 {
        self.diagonality_trace
            .iter()
            .copied()
            .filter(|d| !d.is_nan())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A run that hit a non-finite loss or gradient, with everything recorded
/// up to that point.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("optimization aborted after {} iterations: {error}", partial.iterations_used)]
pub struct OptimizeError {
    pub error: SimError,
    pub partial: Box<OptimizationRun>,
}

/// Forward sweep of one control vector with the excitations attached.
struct Sweep {
    gains: Vec<Vec<Complex64>>,
    /// `T_c(q) A_T` for every layer.
    incoming: Vec<CMat>,
    output: CMat,
}

fn sweep(blocks: &ScatteringBlocks, ctrl: &ControlVector, a_t: &CMat) -> Result<Sweep> {
    blocks.validate()?;
    ctrl.check(&blocks.topology)?;
    if !blocks.is_feed_forward() {
        return Err(SimError::arg("coupling beyond adjacent arrays: structured optimizer does not apply"));
    }
    if a_t.nrows() != blocks.topology.tx_ports {
        return Err(SimError::arg("excitation rows must equal transmitter ports"));
    }
    let gains = ctrl.layer_gains(blocks.topology.cells);
    let incoming = cascade::propagate_forward(blocks, &gains, linalg::matmul(&blocks.h_ts, a_t));
    let radiated = linalg::scale_rows(&gains[gains.len() - 1], &incoming[incoming.len() - 1]);
    let output = linalg::matmul(&blocks.h_sr, &radiated);
    Ok(Sweep {
        gains,
        incoming,
        output,
    })
}

/// `X̂ = H_SR H2(η) A_T`.
pub fn output_matrix(blocks: &ScatteringBlocks, ctrl: &ControlVector, a_t: &CMat) -> Result<CMat> {
    Ok(sweep(blocks, ctrl, a_t)?.output)
}

/// Complex scale minimizing `‖β X̂ − X_d‖²_F`:
/// `β* = trace(X_d X̂ᴴ) / trace(X̂ X̂ᴴ)`.
pub fn beta_star(xhat: &CMat, target: &CMat) -> Result<Complex64> {
    if xhat.shape() != target.shape() {
        return Err(SimError::arg("output and target shapes differ"));
    }
    let energy = linalg::fro_sq(xhat);
    if energy == 0.0 {
        return Err(SimError::DegenerateOutput);
    }
    Ok(linalg::trace_a_bh(target, xhat) / energy)
}

fn residual(xhat: &CMat, target: &CMat, beta: Complex64) -> CMat {
    count_macs(xhat.len());
    xhat * beta - target
}

fn loss_of(xhat: &CMat, target: &CMat, beta: Complex64) -> f64 {
    linalg::fro_sq(&residual(xhat, target, beta))
}

/// `‖β X̂ − X_d‖²_F` for the given phases and scale.
pub fn loss(blocks: &ScatteringBlocks, ctrl: &ControlVector, training: &TrainingSet, beta: Complex64) -> Result<f64> {
    training.check(&blocks.topology)?;
    let s = sweep(blocks, ctrl, &training.excitations)?;
    Ok(loss_of(&s.output, &training.target, beta))
}

fn gradient_of(blocks: &ScatteringBlocks, s: &Sweep, target: &CMat, beta: Complex64) -> Vec<f64> {
    let k = blocks.topology.cells;
    let r = residual(&s.output, target, beta);
    // β Rᴴ H_SR: the residual seen from the transmit array of the last layer
    let mut seed = linalg::adjoint_mul(&r, &blocks.h_sr);
    seed *= beta;
    count_macs(seed.len());
    let back = cascade::propagate_backward(blocks, &s.gains, seed);
    let excitations = s.output.ncols();
    let mut grad = Vec::with_capacity(blocks.topology.num_phases());
    for (q, (down, up)) in back.iter().zip(&s.incoming).enumerate() {
        for cell in 0..k {
            let inner: Complex64 = (0..excitations).map(|i| down[(i, cell)] * up[(cell, i)]).sum();
            // ∂g/∂η = j g, and 2 Re{j z} = −2 Im{z}
            grad.push(-2.0 * (s.gains[q][cell] * inner).im);
        }
        count_macs(k * (excitations + 1));
    }
    grad
}

/// `∂L/∂η` at fixed `β`, component `(q−1)K + k − 1` for cell `k` of layer `q`.
pub fn gradient(
    blocks: &ScatteringBlocks,
    ctrl: &ControlVector,
    training: &TrainingSet,
    beta: Complex64,
) -> Result<Vec<f64>> {
    training.check(&blocks.topology)?;
    let s = sweep(blocks, ctrl, &training.excitations)?;
    Ok(gradient_of(blocks, &s, &training.target, beta))
}

/// One full structured iteration: forward sweep, `β*`, residual, backward
/// sweep and gradient. Returns `(β, loss, gradient)`.
pub fn evaluate_with_gradient(
    blocks: &ScatteringBlocks,
    ctrl: &ControlVector,
    training: &TrainingSet,
) -> Result<(Complex64, f64, Vec<f64>)> {
    training.check(&blocks.topology)?;
    let s = sweep(blocks, ctrl, &training.excitations)?;
    let beta = beta_star(&s.output, &training.target)?;
    let loss = loss_of(&s.output, &training.target, beta);
    let grad = gradient_of(blocks, &s, &training.target, beta);
    Ok((beta, loss, grad))
}

/// Phases drawn uniformly from `[0, 2π)` with a fixed seed.
pub fn random_start(topo: &SimTopology, gain: f64, seed: u64) -> ControlVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synthetic::random_control(topo, gain, &mut rng)
}

/// Wraps every phase into `[0, 2π)`.
pub fn wrap_phases(ctrl: &ControlVector) -> ControlVector {
    ControlVector {
        phases: ctrl.phases.iter().map(|p| p.rem_euclid(TAU)).collect(),
        gain: ctrl.gain,
    }
}

struct Point {
    ctrl: ControlVector,
    sweep: Sweep,
    beta: Complex64,
    loss: f64,
    diagonality: f64,
}

fn point(
    blocks: &ScatteringBlocks,
    ctrl: ControlVector,
    training: &TrainingSet,
    mode: BetaMode,
) -> Result<Point> {
    let sweep = sweep(blocks, &ctrl, &training.excitations)?;
    let beta = match mode {
        BetaMode::Optimal => beta_star(&sweep.output, &training.target)?,
        BetaMode::Fixed(b) => b,
    };
    let loss = loss_of(&sweep.output, &training.target, beta);
    let diagonality = evaluation::diagonality_db(&sweep.output).unwrap_or(f64::NAN);
    Ok(Point {
        ctrl,
        sweep,
        beta,
        loss,
        diagonality,
    })
}

/// Gradient descent on the phases with Armijo backtracking.
///
/// Each iteration re-solves `β`, takes the gradient at that fixed `β`, then
/// shrinks the step from `initial_step` by `backtrack_factor` until
/// `L(η − α∇L) ≤ L(η) − (α/2)‖∇L‖²`, with `β` re-solved at every candidate.
pub fn optimize(
    blocks: &ScatteringBlocks,
    training: &TrainingSet,
    config: &OptimizerConfig,
    initial: &ControlVector,
) -> std::result::Result<OptimizationRun, OptimizeError> {
    let fail = |error: SimError, partial: OptimizationRun| OptimizeError {
        error,
        partial: Box::new(partial),
    };
    let empty = |term| OptimizationRun {
        final_phases: initial.clone(),
        beta: ZERO,
        loss_trace: Vec::new(),
        diagonality_trace: Vec::new(),
        iterations_used: 0,
        termination: term,
        final_gradient_norm: f64::NAN,
    };
    let setup = config
        .validate()
        .and_then(|_| training.check(&blocks.topology))
        .and_then(|_| point(blocks, initial.clone(), training, config.beta));
    let mut current = match setup {
        Ok(p) => p,
        Err(e) => return Err(fail(e, empty(Termination::MaxIter))),
    };

    let diagonal_target = training.has_diagonal_target();
    let mut run = OptimizationRun {
        final_phases: current.ctrl.clone(),
        beta: current.beta,
        loss_trace: vec![current.loss],
        diagonality_trace: vec![current.diagonality],
        iterations_used: 0,
        termination: Termination::MaxIter,
        final_gradient_norm: f64::NAN,
    };
    if !current.loss.is_finite() {
        return Err(fail(SimError::Numerical("non-finite initial loss".into()), run));
    }

    loop {
        let grad = gradient_of(blocks, &current.sweep, &training.target, current.beta);
        let grad_sq: f64 = grad.iter().map(|g| g * g).sum();
        run.final_gradient_norm = grad_sq.sqrt();
        if !grad_sq.is_finite() {
            return Err(fail(SimError::Numerical("non-finite gradient".into()), run));
        }

        let stop = if run.final_gradient_norm <= config.gradient_tolerance * (1.0 + current.loss) {
            Some(Termination::GradientTol)
        } else if diagonal_target && current.diagonality >= config.diagonality_stop_db {
            Some(Termination::DiagonalityReached)
        } else if run.iterations_used >= config.max_iterations {
            Some(Termination::MaxIter)
        } else {
            None
        };
        if let Some(term) = stop {
            run.termination = term;
            return Ok(run);
        }

        let mut step = config.initial_step;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            if step < config.min_step {
                break;
            }
            let phases = current.ctrl.phases.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
            let candidate = ControlVector {
                phases,
                gain: current.ctrl.gain,
            };
            // a zero output at the candidate simply fails the test
            if let Ok(p) = point(blocks, candidate, training, config.beta) {
                if p.loss <= current.loss - 0.5 * step * grad_sq {
                    accepted = Some(p);
                    break;
                }
            }
            step *= config.backtrack_factor;
        }

        match accepted {
            Some(next) => {
                current = next;
                run.iterations_used += 1;
                run.final_phases = current.ctrl.clone();
                run.beta = current.beta;
                run.loss_trace.push(current.loss);
                run.diagonality_trace.push(current.diagonality);
            }
            None => {
                run.termination = Termination::StepUnderflow;
                return Ok(run);
            }
        }
    }
}
