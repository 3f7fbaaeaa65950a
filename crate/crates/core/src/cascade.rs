//! Feed-forward cascade through the SIM layers.
//!
//! With unilateral cells, the wave reaching the receive array of layer `q+1`
//! only depends on what layer `q` transmits, so the end-to-end transfer is a
//! product of diagonal gain matrices and nearest-neighbour coupling blocks:
//!
//! ```text
//! T_c(1) = H_TS,          T_c(q) = S21(q−1) G(q−1) T_c(q−1)
//! T_r(Q) = I,             T_r(q) = T_r(q+1) G(q+1) S21(q)
//! H2 = G(Q) T_c(Q),       H_e2e = H_SR H2
//! ```
//!
//! No matrix is ever inverted. Products are associated right to left so
//! each forward step costs `K²` per column of the propagated matrix.

use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::linalg::{self, CMat};
use crate::model::{ControlVector, ScatteringBlocks};

fn checked_gains(blocks: &ScatteringBlocks, ctrl: &ControlVector) -> Result<Vec<Vec<Complex64>>> {
    blocks.validate()?;
    ctrl.check(&blocks.topology)?;
    if !blocks.is_feed_forward() {
        return Err(SimError::arg(
            "coupling beyond adjacent arrays: the cascade does not apply, use the global solver",
        ));
    }
    Ok(ctrl.layer_gains(blocks.topology.cells))
}

/// Pushes `input` (any `K×n` matrix at the receive array of layer 1) through
/// the layers. Entry `q` is the field at the receive array of layer `q+1`.
pub fn propagate_forward(blocks: &ScatteringBlocks, gains: &[Vec<Complex64>], input: CMat) -> Vec<CMat> {
    let mut out = Vec::with_capacity(gains.len());
    out.push(input);
    for (q, s21) in blocks.inter_layer.iter().enumerate() {
        let radiated = linalg::scale_rows(&gains[q], &out[q]);
        out.push(linalg::matmul(s21, &radiated));
    }
    out
}

/// Pulls a row-space `seed` (any `n×K` matrix acting on the transmit array
/// of the last layer) back through the layers. Entry `q` equals
/// `seed · T_r(q+1)`.
pub fn propagate_backward(blocks: &ScatteringBlocks, gains: &[Vec<Complex64>], seed: CMat) -> Vec<CMat> {
    let layers = gains.len();
    let mut out = vec![CMat::zeros(0, 0); layers];
    out[layers - 1] = seed;
    for q in (0..layers - 1).rev() {
        let through = linalg::scale_cols(&out[q + 1], &gains[q + 1]);
        out[q] = linalg::matmul(&through, &blocks.inter_layer[q]);
    }
    out
}

/// `T_c(1..=Q)`, each `K×L`.
pub fn forward_transfers(blocks: &ScatteringBlocks, ctrl: &ControlVector) -> Result<Vec<CMat>> {
    let gains = checked_gains(blocks, ctrl)?;
    Ok(propagate_forward(blocks, &gains, blocks.h_ts.clone()))
}

/// `T_r(1..=Q)`, each `K×K`.
pub fn backward_transfers(blocks: &ScatteringBlocks, ctrl: &ControlVector) -> Result<Vec<CMat>> {
    let gains = checked_gains(blocks, ctrl)?;
    let k = blocks.topology.cells;
    Ok(propagate_backward(blocks, &gains, CMat::identity(k, k)))
}

/// `H2 = G(Q) T_c(Q)`: transmitter to the transmit array of the last layer.
pub fn h2(blocks: &ScatteringBlocks, ctrl: &ControlVector) -> Result<CMat> {
    let gains = checked_gains(blocks, ctrl)?;
    let fwd = propagate_forward(blocks, &gains, blocks.h_ts.clone());
    Ok(linalg::scale_rows(&gains[gains.len() - 1], &fwd[fwd.len() - 1]))
}

/// `H_SR H2`. Direct transmitter–receiver coupling is ignored.
pub fn e2e_structured(blocks: &ScatteringBlocks, ctrl: &ControlVector) -> Result<CMat> {
    Ok(linalg::matmul(&blocks.h_sr, &h2(blocks, ctrl)?))
}

/// Forward and backward transfers of one control vector, computed together.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferSet {
    pub forward: Vec<CMat>,
    pub backward: Vec<CMat>,
    pub h2: CMat,
    pub e2e: CMat,
}

impl TransferSet {
    pub fn compute(blocks: &ScatteringBlocks, ctrl: &ControlVector) -> Result<Self> {
        let gains = checked_gains(blocks, ctrl)?;
        let k = blocks.topology.cells;
        let forward = propagate_forward(blocks, &gains, blocks.h_ts.clone());
        let backward = propagate_backward(blocks, &gains, CMat::identity(k, k));
        let h2 = linalg::scale_rows(&gains[gains.len() - 1], &forward[forward.len() - 1]);
        let e2e = linalg::matmul(&blocks.h_sr, &h2);
        Ok(Self {
            forward,
            backward,
            h2,
            e2e,
        })
    }
}
