//! Core domain types: topology and port bookkeeping, the phase control
//! vector, the inter-array coupling blocks, and assembly of the global
//! interconnection matrix `Γ(η)` and internal scattering matrix `S_SS`.
//!
//! Ports are stored layer-wise: layer `q` (1-based) owns the global ports
//! `2K(q−1)+1 ..= 2Kq`; the first `K` of them are the receive array and the
//! next `K` the transmit array. Public index functions use the 1-based
//! convention, internal offsets are 0-based.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::linalg::{self, CMat, ZERO};

/// Layer, cell and port counts of a SIM between an `L`-port transmitter and
/// an `M`-port receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTopology {
    #[serde(rename = "Q")]
    pub layers: usize,
    #[serde(rename = "K")]
    pub cells: usize,
    #[serde(rename = "L")]
    pub tx_ports: usize,
    #[serde(rename = "M")]
    pub rx_ports: usize,
}

impl SimTopology {
    pub fn new(layers: usize, cells: usize, tx_ports: usize, rx_ports: usize) -> Result<Self> {
        let topo = Self {
            layers,
            cells,
            tx_ports,
            rx_ports,
        };
        topo.validate()?;
        Ok(topo)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.cells == 0 || self.tx_ports == 0 || self.rx_ports == 0 {
            return Err(SimError::arg(format!(
                "topology counts must be positive, got Q={} K={} L={} M={}",
                self.layers, self.cells, self.tx_ports, self.rx_ports
            )));
        }
        Ok(())
    }

    /// Total number of SIM ports, `N = 2QK`.
    pub fn sim_ports(&self) -> usize {
        2 * self.layers * self.cells
    }

    /// Number of tunable phases, `QK`.
    pub fn num_phases(&self) -> usize {
        self.layers * self.cells
    }

    /// 0-based offset of the receive array of 0-based layer `layer`.
    pub fn rx_offset(&self, layer: usize) -> usize {
        2 * self.cells * layer
    }

    /// 0-based offset of the transmit array of 0-based layer `layer`.
    pub fn tx_offset(&self, layer: usize) -> usize {
        2 * self.cells * layer + self.cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Receive,
    Transmit,
}

/// Global 1-based port index of cell `k` of layer `q` (both 1-based).
pub fn port_index(q: usize, k: usize, side: Side, topo: &SimTopology) -> Result<usize> {
    if q == 0 || q > topo.layers {
        return Err(SimError::Index(format!("layer {q} outside 1..={}", topo.layers)));
    }
    if k == 0 || k > topo.cells {
        return Err(SimError::Index(format!("cell {k} outside 1..={}", topo.cells)));
    }
    let base = 2 * topo.cells * (q - 1);
    Ok(match side {
        Side::Receive => base + k,
        Side::Transmit => base + topo.cells + k,
    })
}

/// The `QK` tunable phases plus the gain shared by every unit cell.
///
/// Phase of cell `k` in layer `q` (1-based) lives at flat index `(q−1)K + k − 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlVector {
    pub phases: Vec<f64>,
    /// Linear amplitude gain applied by every unit cell.
    pub gain: f64,
}

impl ControlVector {
    pub fn new(phases: Vec<f64>, gain: f64) -> Result<Self> {
        if let Some(p) = phases.iter().position(|x| !x.is_finite()) {
            return Err(SimError::arg(format!("phase {p} is not finite")));
        }
        if !(gain.is_finite() && gain >= 0.0) {
            return Err(SimError::arg(format!("gain must be finite and >= 0, got {gain}")));
        }
        Ok(Self { phases, gain })
    }

    pub fn zeros(topo: &SimTopology, gain: f64) -> Result<Self> {
        Self::new(vec![0.0; topo.num_phases()], gain)
    }

    pub fn check(&self, topo: &SimTopology) -> Result<()> {
        if self.phases.len() != topo.num_phases() {
            return Err(SimError::arg(format!(
                "control vector has {} phases, topology needs {}",
                self.phases.len(),
                topo.num_phases()
            )));
        }
        Ok(())
    }

    /// Phases of 0-based layer `layer`, given `cells` per layer.
    pub fn layer_phases(&self, layer: usize, cells: usize) -> &[f64] {
        &self.phases[layer * cells..(layer + 1) * cells]
    }

    /// Diagonal entries `G e^{jη_{q,k}}` of every layer gain matrix.
    pub fn layer_gains(&self, cells: usize) -> Vec<Vec<Complex64>> {
        self.phases
            .chunks(cells)
            .map(|eta| cell_gains(eta, self.gain))
            .collect()
    }
}

fn cell_gains(eta: &[f64], gain: f64) -> Vec<Complex64> {
    eta.iter().map(|&e| Complex64::from_polar(gain, e)).collect()
}

/// `G · diag(e^{jη_q})` as a dense `K×K` matrix.
pub fn assemble_layer_gain(eta: &[f64], gain: f64) -> Result<CMat> {
    if eta.iter().any(|x| !x.is_finite()) {
        return Err(SimError::arg("non-finite phase"));
    }
    if !(gain.is_finite() && gain >= 0.0) {
        return Err(SimError::arg(format!("gain must be finite and >= 0, got {gain}")));
    }
    let d = cell_gains(eta, gain);
    Ok(CMat::from_diagonal(&nalgebra::DVector::from_vec(d)))
}

/// The `N×N` interconnection matrix `Γ(η)` with `a_S = Γ b_S`.
///
/// Only the block taking the reflected waves of the receive array of layer
/// `q` to the incident waves of its transmit array is nonzero.
pub fn assemble_gamma(ctrl: &ControlVector, topo: &SimTopology) -> Result<CMat> {
    ctrl.check(topo)?;
    let n = topo.sim_ports();
    let k = topo.cells;
    let mut gamma = CMat::zeros(n, n);
    for q in 0..topo.layers {
        let g = assemble_layer_gain(ctrl.layer_phases(q, k), ctrl.gain)?;
        linalg::place(&mut gamma, topo.tx_offset(q), topo.rx_offset(q), &g);
    }
    Ok(gamma)
}

/// Reflection-type coupling blocks of coupling region `u` (0 ≤ u ≤ Q).
///
/// Region 0 sits between the transmitter and layer 1 and only has `s22`
/// (receive array of layer 1). Region `Q` sits between layer `Q` and the
/// receiver and only has `s11` (transmit array of layer `Q`).
#[derive(Debug, Clone, PartialEq)]
pub struct RegionReflection {
    pub region: usize,
    pub s11: Option<CMat>,
    pub s22: Option<CMat>,
    pub s12: Option<CMat>,
}

/// Coupling sub-matrices of the block-banded `S_SS` plus the external blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringBlocks {
    pub topology: SimTopology,
    /// `S̃⁽q⁾₂,₁` for `q = 1..Q−1`: transmit array of layer `q` to the receive
    /// array of layer `q+1`.
    pub inter_layer: Vec<CMat>,
    pub reflections: Vec<RegionReflection>,
    /// `K×L`, transmitter to the receive array of layer 1.
    pub h_ts: CMat,
    /// `M×K`, transmit array of layer `Q` to the receiver.
    pub h_sr: CMat,
    /// `M×L` direct transmitter to receiver coupling.
    pub s_rt: CMat,
    /// Additive `N×N` coupling outside the nearest-neighbour pattern. Only the
    /// global oracle can handle it.
    pub s_ss_extra: Option<CMat>,
}

fn expect_shape(name: &str, m: &CMat, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(SimError::arg(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !linalg::is_finite(m) {
        return Err(SimError::arg(format!("{name} has non-finite entries")));
    }
    Ok(())
}

impl ScatteringBlocks {
    pub fn new(topology: SimTopology, inter_layer: Vec<CMat>, h_ts: CMat, h_sr: CMat) -> Result<Self> {
        let s_rt = CMat::zeros(topology.rx_ports, topology.tx_ports);
        let blocks = Self {
            topology,
            inter_layer,
            reflections: Vec::new(),
            h_ts,
            h_sr,
            s_rt,
            s_ss_extra: None,
        };
        blocks.validate()?;
        Ok(blocks)
    }

    pub fn with_s_rt(mut self, s_rt: CMat) -> Result<Self> {
        self.s_rt = s_rt;
        self.validate()?;
        Ok(self)
    }

    pub fn with_reflections(mut self, reflections: Vec<RegionReflection>) -> Result<Self> {
        self.reflections = reflections;
        self.validate()?;
        Ok(self)
    }

    pub fn with_extra_coupling(mut self, extra: CMat) -> Result<Self> {
        self.s_ss_extra = Some(extra);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.topology;
        t.validate()?;
        let k = t.cells;
        if self.inter_layer.len() != t.layers - 1 {
            return Err(SimError::arg(format!(
                "expected {} inter-layer blocks, got {}",
                t.layers - 1,
                self.inter_layer.len()
            )));
        }
        for (i, s) in self.inter_layer.iter().enumerate() {
            expect_shape(&format!("inter_layer[{i}]"), s, k, k)?;
        }
        expect_shape("h_ts", &self.h_ts, k, t.tx_ports)?;
        expect_shape("h_sr", &self.h_sr, t.rx_ports, k)?;
        expect_shape("s_rt", &self.s_rt, t.rx_ports, t.tx_ports)?;
        for r in &self.reflections {
            let u = r.region;
            if u > t.layers {
                return Err(SimError::arg(format!("reflection region {u} outside 0..={}", t.layers)));
            }
            let tag = |s: &str| format!("reflections[{u}].{s}");
            if let Some(m) = &r.s11 {
                if u == 0 {
                    return Err(SimError::arg("region 0 has no s11 block on the SIM side"));
                }
                expect_shape(&tag("s11"), m, k, k)?;
            }
            if let Some(m) = &r.s22 {
                if u == t.layers {
                    return Err(SimError::arg("region Q has no s22 block on the SIM side"));
                }
                expect_shape(&tag("s22"), m, k, k)?;
            }
            if let Some(m) = &r.s12 {
                if u == 0 || u == t.layers {
                    return Err(SimError::arg("s12 only exists between two SIM layers"));
                }
                expect_shape(&tag("s12"), m, k, k)?;
            }
        }
        if let Some(m) = &self.s_ss_extra {
            let n = t.sim_ports();
            expect_shape("s_ss_extra", m, n, n)?;
        }
        Ok(())
    }

    /// True when `S_SS` only couples adjacent arrays, the premise of the
    /// feed-forward cascade.
    pub fn is_feed_forward(&self) -> bool {
        self.s_ss_extra
            .as_ref()
            .is_none_or(|m| m.iter().all(|z| *z == ZERO))
    }
}

/// Builds the block-banded `S_SS` from its coupling sub-matrices.
pub fn assemble_sss(blocks: &ScatteringBlocks, topo: &SimTopology) -> Result<CMat> {
    if blocks.topology != *topo {
        return Err(SimError::arg("blocks were built for a different topology"));
    }
    blocks.validate()?;
    let n = topo.sim_ports();
    let mut sss = CMat::zeros(n, n);
    for (i, s21) in blocks.inter_layer.iter().enumerate() {
        // region u = i + 1: tx array of layer i (0-based) to rx array of layer i + 1
        linalg::place(&mut sss, topo.rx_offset(i + 1), topo.tx_offset(i), s21);
    }
    for r in &blocks.reflections {
        let u = r.region;
        if let Some(m) = &r.s11 {
            let tx = topo.tx_offset(u - 1);
            linalg::place(&mut sss, tx, tx, m);
        }
        if let Some(m) = &r.s22 {
            let rx = topo.rx_offset(u);
            linalg::place(&mut sss, rx, rx, m);
        }
        if let Some(m) = &r.s12 {
            linalg::place(&mut sss, topo.tx_offset(u - 1), topo.rx_offset(u), m);
        }
    }
    if let Some(extra) = &blocks.s_ss_extra {
        sss += extra;
    }
    Ok(sss)
}

/// The nine blocks of the global scattering matrix over transmitter (T),
/// SIM (S) and receiver (R) ports.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalScattering {
    pub s_tt: CMat,
    pub s_ts: CMat,
    pub s_tr: CMat,
    pub s_st: CMat,
    pub s_ss: CMat,
    pub s_sr: CMat,
    pub s_rt: CMat,
    pub s_rs: CMat,
    pub s_rr: CMat,
}

impl GlobalScattering {
    /// Assembles the global matrix under the layer-isolation assumptions: the
    /// transmitter only reaches the receive array of layer 1 and the receiver
    /// only sees the transmit array of layer `Q`. Couplings back towards the
    /// transmitter and receiver are filled reciprocally; port self-reflections
    /// of the matched terminals are zero.
    pub fn assemble(blocks: &ScatteringBlocks) -> Result<Self> {
        let topo = &blocks.topology;
        let s_ss = assemble_sss(blocks, topo)?;
        let (n, l, m) = (topo.sim_ports(), topo.tx_ports, topo.rx_ports);
        let mut s_st = CMat::zeros(n, l);
        linalg::place(&mut s_st, topo.rx_offset(0), 0, &blocks.h_ts);
        let mut s_rs = CMat::zeros(m, n);
        linalg::place(&mut s_rs, 0, topo.tx_offset(topo.layers - 1), &blocks.h_sr);
        Ok(Self {
            s_tt: CMat::zeros(l, l),
            s_ts: s_st.transpose(),
            s_tr: blocks.s_rt.transpose(),
            s_sr: s_rs.transpose(),
            s_st,
            s_ss,
            s_rt: blocks.s_rt.clone(),
            s_rs,
            s_rr: CMat::zeros(m, m),
        })
    }

    pub fn sim_ports(&self) -> usize {
        self.s_ss.nrows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn topo(q: usize, k: usize) -> SimTopology {
        SimTopology::new(q, k, 1, 1).unwrap()
    }

    #[test]
    fn port_index_examples() {
        let t = topo(2, 4);
        assert_eq!(port_index(1, 1, Side::Receive, &t).unwrap(), 1);
        assert_eq!(port_index(1, 1, Side::Transmit, &t).unwrap(), 5);
        assert_eq!(port_index(2, 3, Side::Receive, &t).unwrap(), 11);
    }

    #[test]
    fn port_index_rejects_out_of_range() {
        let t = topo(2, 4);
        assert!(matches!(port_index(0, 1, Side::Receive, &t), Err(SimError::Index(_))));
        assert!(matches!(port_index(3, 1, Side::Receive, &t), Err(SimError::Index(_))));
        assert!(matches!(port_index(1, 5, Side::Transmit, &t), Err(SimError::Index(_))));
    }

    #[test]
    fn port_index_is_bijective() {
        let t = topo(3, 5);
        let mut seen = HashSet::new();
        for q in 1..=3 {
            for k in 1..=5 {
                for side in [Side::Receive, Side::Transmit] {
                    let p = port_index(q, k, side, &t).unwrap();
                    assert!((1..=t.sim_ports()).contains(&p));
                    assert!(seen.insert(p));
                }
            }
        }
        assert_eq!(seen.len(), t.sim_ports());
    }

    #[test]
    fn layer_gain_examples() {
        let g = assemble_layer_gain(&[0.0], 1.0).unwrap();
        assert_eq!(g[(0, 0)], c(1.0, 0.0));
        let g = assemble_layer_gain(&[PI / 2.0], 2.0).unwrap();
        assert!((g[(0, 0)] - c(0.0, 2.0)).norm() < 1e-15);
        let g = assemble_layer_gain(&[0.0, PI], 1.0).unwrap();
        assert!((g[(1, 1)] - c(-1.0, 0.0)).norm() < 1e-15);
        assert_eq!(g[(0, 1)], ZERO);
        assert!(assemble_layer_gain(&[f64::NAN], 1.0).is_err());
    }

    #[test]
    fn gamma_examples() {
        let g = assemble_gamma(&ControlVector::new(vec![0.0], 1.0).unwrap(), &topo(1, 1)).unwrap();
        assert_eq!(g, CMat::from_row_slice(2, 2, &[ZERO, ZERO, c(1.0, 0.0), ZERO]));

        let g = assemble_gamma(&ControlVector::new(vec![PI], 0.5).unwrap(), &topo(1, 1)).unwrap();
        assert!((g[(1, 0)] - c(-0.5, 0.0)).norm() < 1e-15);
        assert_eq!(g[(0, 0)], ZERO);

        let g = assemble_gamma(&ControlVector::new(vec![0.0, 0.0], 1.0).unwrap(), &topo(2, 1)).unwrap();
        // 1-based (2,1) and (4,3)
        for i in 0..4 {
            for j in 0..4 {
                let want = if (i, j) == (1, 0) || (i, j) == (3, 2) { 1.0 } else { 0.0 };
                assert_eq!(g[(i, j)], c(want, 0.0), "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn gamma_rejects_wrong_length() {
        let ctrl = ControlVector::new(vec![0.0; 3], 1.0).unwrap();
        assert!(assemble_gamma(&ctrl, &topo(2, 1)).is_err());
    }

    #[test]
    fn gamma_sparsity_and_modulus() {
        let t = topo(3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ctrl = synthetic::random_control(&t, 1.7, &mut rng);
        let g = assemble_gamma(&ctrl, &t).unwrap();
        let nz: Vec<_> = g.iter().filter(|z| **z != ZERO).collect();
        assert_eq!(nz.len(), t.num_phases());
        assert!(nz.iter().all(|z| (z.norm() - 1.7).abs() < 1e-14));
    }

    #[test]
    fn sss_examples() {
        let t = topo(1, 2);
        let b = ScatteringBlocks::new(t, vec![], CMat::zeros(2, 1), CMat::zeros(1, 2)).unwrap();
        assert_eq!(assemble_sss(&b, &t).unwrap(), CMat::zeros(4, 4));

        let t = topo(2, 1);
        let half = CMat::from_element(1, 1, c(0.5, 0.0));
        let b = ScatteringBlocks::new(t, vec![half.clone()], CMat::zeros(1, 1), CMat::zeros(1, 1)).unwrap();
        let s = assemble_sss(&b, &t).unwrap();
        let mut want = CMat::zeros(4, 4);
        want[(2, 1)] = c(0.5, 0.0);
        assert_eq!(s, want);

        let b = b
            .with_reflections(vec![RegionReflection {
                region: 1,
                s11: None,
                s22: None,
                s12: Some(half),
            }])
            .unwrap();
        want[(1, 2)] = c(0.5, 0.0);
        assert_eq!(assemble_sss(&b, &t).unwrap(), want);
    }

    #[test]
    fn sss_round_trips_blocks() {
        let t = SimTopology::new(3, 3, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = synthetic::random_blocks(&t, true, &mut rng);
        let s = assemble_sss(&b, &t).unwrap();
        let k = t.cells;
        for (i, s21) in b.inter_layer.iter().enumerate() {
            assert_eq!(&s.view((t.rx_offset(i + 1), t.tx_offset(i)), (k, k)).clone_owned(), s21);
        }
        for r in &b.reflections {
            if let Some(m) = &r.s11 {
                let tx = t.tx_offset(r.region - 1);
                assert_eq!(&s.view((tx, tx), (k, k)).clone_owned(), m);
            }
            if let Some(m) = &r.s22 {
                let rx = t.rx_offset(r.region);
                assert_eq!(&s.view((rx, rx), (k, k)).clone_owned(), m);
            }
            if let Some(m) = &r.s12 {
                let v = s.view((t.tx_offset(r.region - 1), t.rx_offset(r.region)), (k, k));
                assert_eq!(&v.clone_owned(), m);
            }
        }
        // receive array of layer 1 gets nothing from other layers
        assert!(s.view((0, k), (k, 2 * k * 3 - k)).iter().all(|z| *z == ZERO));
    }

    #[test]
    fn blocks_reject_bad_dimensions() {
        let t = topo(2, 2);
        assert!(ScatteringBlocks::new(t, vec![], CMat::zeros(2, 1), CMat::zeros(1, 2)).is_err());
        assert!(ScatteringBlocks::new(t, vec![CMat::zeros(2, 3)], CMat::zeros(2, 1), CMat::zeros(1, 2)).is_err());
        assert!(ScatteringBlocks::new(t, vec![CMat::zeros(2, 2)], CMat::zeros(3, 1), CMat::zeros(1, 2)).is_err());
    }

    #[test]
    fn global_sparsity_pattern() {
        let t = SimTopology::new(3, 2, 2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = synthetic::random_blocks(&t, false, &mut rng);
        let g = GlobalScattering::assemble(&b).unwrap();
        for i in 0..t.sim_ports() {
            let in_rx1 = i < t.cells;
            assert_eq!(g.s_st.row(i).iter().any(|z| *z != ZERO), in_rx1, "row {i}");
            let in_txq = i >= t.tx_offset(t.layers - 1);
            assert_eq!(g.s_rs.column(i).iter().any(|z| *z != ZERO), in_txq, "col {i}");
        }
    }
}
