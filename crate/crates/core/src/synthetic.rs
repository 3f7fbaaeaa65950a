//! Seeded random instances for verification runs and tests.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::linalg::CMat;
use crate::model::{ControlVector, RegionReflection, ScatteringBlocks, SimTopology};

/// Matrix with i.i.d. circular complex Gaussian entries of variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, var: f64, rng: &mut R) -> CMat {
    let s = (var / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(s * re, s * im)
    })
}

/// Phases drawn independently and uniformly from `[0, 2π)`.
pub fn random_phases<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let u = Uniform::new(0.0, TAU).expect("valid range");
    (0..n).map(|_| u.sample(rng)).collect()
}

pub fn random_control<R: Rng + ?Sized>(topo: &SimTopology, gain: f64, rng: &mut R) -> ControlVector {
    ControlVector::new(random_phases(topo.num_phases(), rng), gain).expect("finite phases")
}

/// Random nearest-neighbour coupling blocks. Inter-layer entries have
/// variance `1/K` so a hop keeps the signal level roughly constant; the
/// external blocks use variance `1/L` and `1/K`. With `reflections`, every
/// reflection block allowed by the banded structure is filled too.
pub fn random_blocks<R: Rng + ?Sized>(topo: &SimTopology, reflections: bool, rng: &mut R) -> ScatteringBlocks {
    let (q, k, l, m) = (topo.layers, topo.cells, topo.tx_ports, topo.rx_ports);
    let kv = 1.0 / k as f64;
    let inter = (1..q).map(|_| complex_gaussian(k, k, kv, rng)).collect();
    let h_ts = complex_gaussian(k, l, 1.0 / l as f64, rng);
    let h_sr = complex_gaussian(m, k, kv, rng);
    let mut blocks = ScatteringBlocks::new(*topo, inter, h_ts, h_sr).expect("consistent shapes");
    if reflections {
        let refl = (0..=q)
            .map(|u| RegionReflection {
                region: u,
                s11: (u > 0).then(|| complex_gaussian(k, k, 0.1 * kv, rng)),
                s22: (u < q).then(|| complex_gaussian(k, k, 0.1 * kv, rng)),
                s12: (u > 0 && u < q).then(|| complex_gaussian(k, k, kv, rng)),
            })
            .collect();
        blocks = blocks.with_reflections(refl).expect("consistent shapes");
    }
    blocks
}

/// Adds dense all-to-all coupling on top of the banded `S_SS`, breaking the
/// feed-forward structure.
pub fn densify<R: Rng + ?Sized>(blocks: ScatteringBlocks, var: f64, rng: &mut R) -> ScatteringBlocks {
    let n = blocks.topology.sim_ports();
    let extra = complex_gaussian(n, n, var, rng);
    blocks.with_extra_coupling(extra).expect("N x N extra block")
}
