//! Sources of coupling blocks: an analytical free-space surrogate of the
//! stacked-array geometry, and readers for externally computed matrices.

mod blockfile;
mod touchstone;

pub use blockfile::{blocks_from_global, decode_matrix, encode_matrix, load_block_file, load_blocks_json, save_blocks_json, BlockFormat, IngestedBlockSet};
pub use touchstone::{parse_touchstone, write_touchstone, FrequencyUnit, TouchstoneData};

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::linalg::CMat;
use crate::model::{ScatteringBlocks, SimTopology};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Scalar coupling between two isotropic points a distance `d` apart:
/// `λ / (4π d) · e^{−j2πd/λ}`.
pub fn free_space_coefficient(d: f64, wavelength: f64) -> Result<Complex64> {
    if !(d.is_finite() && d > 0.0) {
        return Err(SimError::arg(format!("distance must be positive, got {d}")));
    }
    if !(wavelength.is_finite() && wavelength > 0.0) {
        return Err(SimError::arg(format!("wavelength must be positive, got {wavelength}")));
    }
    Ok(Complex64::from_polar(wavelength / (4.0 * PI * d), -2.0 * PI * d / wavelength))
}

/// Layout of the stacked arrays, transmitter and receiver. Lengths in metres.
///
/// Layer `q` sits in the plane `x = q·d_x`; its receive and transmit arrays
/// share that plane. Each layer is an `N_y × N_z` grid centred on the `x`
/// axis, cell `(i_y, i_z)` stored at index `i_z·N_y + i_y`. Transmitter and
/// receiver are linear arrays along `y`, `tx_distance` before layer 1 and
/// `rx_distance` past layer `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGeometry {
    pub wavelength: f64,
    pub layer_spacing: f64,
    pub elements_y: usize,
    pub elements_z: usize,
    pub element_spacing_y: f64,
    pub element_spacing_z: f64,
    pub tx_distance: f64,
    pub rx_distance: f64,
    pub tx_count: usize,
    pub rx_count: usize,
    pub tx_spacing: f64,
    pub rx_spacing: f64,
    /// Multiply every coefficient by `cos θ`, θ measured from the `x` axis.
    pub broadside_pattern: bool,
}

type Point = [f64; 3];

fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn centred(i: usize, n: usize, spacing: f64) -> f64 {
    (i as f64 - (n as f64 - 1.0) / 2.0) * spacing
}

impl ScenarioGeometry {
    /// 28 GHz layout with `λ/2 × 3λ/4` cell spacing, transmitter and receiver
    /// at `10λ` and `5λ`, four `λ/2`-spaced antennas on each side.
    pub fn mmwave(elements_y: usize, elements_z: usize, layer_spacing_lambda: f64) -> Self {
        let wl = SPEED_OF_LIGHT / 28e9;
        Self {
            wavelength: wl,
            layer_spacing: layer_spacing_lambda * wl,
            elements_y,
            elements_z,
            element_spacing_y: 0.5 * wl,
            element_spacing_z: 0.75 * wl,
            tx_distance: 10.0 * wl,
            rx_distance: 5.0 * wl,
            tx_count: 4,
            rx_count: 4,
            tx_spacing: 0.5 * wl,
            rx_spacing: 0.5 * wl,
            broadside_pattern: false,
        }
    }

    pub fn cells(&self) -> usize {
        self.elements_y * self.elements_z
    }

    pub fn validate(&self) -> Result<()> {
        if self.elements_y == 0 || self.elements_z == 0 {
            return Err(SimError::arg("layers need at least one element along y and z"));
        }
        if self.tx_count == 0 || self.rx_count == 0 {
            return Err(SimError::arg("transmitter and receiver need at least one antenna"));
        }
        let lengths = [
            ("wavelength", self.wavelength),
            ("layer_spacing", self.layer_spacing),
            ("element_spacing_y", self.element_spacing_y),
            ("element_spacing_z", self.element_spacing_z),
            ("tx_distance", self.tx_distance),
            ("rx_distance", self.rx_distance),
            ("tx_spacing", self.tx_spacing),
            ("rx_spacing", self.rx_spacing),
        ];
        for (name, v) in lengths {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::arg(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Topology implied by the layout for `layers` layers.
    pub fn topology(&self, layers: usize) -> Result<SimTopology> {
        self.validate()?;
        SimTopology::new(layers, self.cells(), self.tx_count, self.rx_count)
    }

    fn layer_points(&self, x: f64) -> Vec<Point> {
        let (ny, nz) = (self.elements_y, self.elements_z);
        (0..nz)
            .flat_map(|iz| {
                (0..ny).map(move |iy| {
                    [
                        x,
                        centred(iy, ny, self.element_spacing_y),
                        centred(iz, nz, self.element_spacing_z),
                    ]
                })
            })
            .collect()
    }

    fn line_points(x: f64, n: usize, spacing: f64) -> Vec<Point> {
        (0..n).map(|i| [x, centred(i, n, spacing), 0.0]).collect()
    }

    fn coefficient(&self, to: &Point, from: &Point) -> Result<Complex64> {
        let d = distance(to, from);
        let c = free_space_coefficient(d, self.wavelength)?;
        Ok(if self.broadside_pattern {
            c * ((to[0] - from[0]).abs() / d)
        } else {
            c
        })
    }

    /// Coupling matrix with one row per receiving point and one column per
    /// radiating point.
    fn array_coupling(&self, to: &[Point], from: &[Point]) -> Result<CMat> {
        let mut m = CMat::zeros(to.len(), from.len());
        for (i, a) in to.iter().enumerate() {
            for (j, b) in from.iter().enumerate() {
                m[(i, j)] = self.coefficient(a, b)?;
            }
        }
        Ok(m)
    }
}

/// Coupling blocks of the surrogate geometry. Reflection blocks and direct
/// transmitter–receiver coupling are zero.
pub fn build_scenario(geom: &ScenarioGeometry, topo: &SimTopology) -> Result<ScatteringBlocks> {
    geom.validate()?;
    topo.validate()?;
    if geom.cells() != topo.cells {
        return Err(SimError::arg(format!(
            "geometry has {}x{} = {} cells per layer, topology has {}",
            geom.elements_y,
            geom.elements_z,
            geom.cells(),
            topo.cells
        )));
    }
    if geom.tx_count != topo.tx_ports || geom.rx_count != topo.rx_ports {
        return Err(SimError::arg("transmitter/receiver antenna counts disagree with the topology"));
    }
    let q = topo.layers;
    let dx = geom.layer_spacing;
    let planes: Vec<Vec<Point>> = (1..=q).map(|i| geom.layer_points(i as f64 * dx)).collect();
    let tx = ScenarioGeometry::line_points(dx - geom.tx_distance, geom.tx_count, geom.tx_spacing);
    let rx = ScenarioGeometry::line_points(q as f64 * dx + geom.rx_distance, geom.rx_count, geom.rx_spacing);

    let inter_layer = planes
        .windows(2)
        .map(|w| geom.array_coupling(&w[1], &w[0]))
        .collect::<Result<Vec<_>>>()?;
    let h_ts = geom.array_coupling(&planes[0], &tx)?;
    let h_sr = geom.array_coupling(&rx, &planes[q - 1])?;
    ScatteringBlocks::new(*topo, inter_layer, h_ts, h_sr)
}
