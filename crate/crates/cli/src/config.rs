//! Scenario configuration files (TOML).
//!
//! Physical quantities carry their unit in the field name. Lengths in the
//! `[geometry]` table are multiples of the wavelength at `frequency_hz`.
//! Relative paths resolve against the directory of the configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use simcascade::coupling::{self, build_scenario, decode_matrix, ScenarioGeometry, SPEED_OF_LIGHT};
use simcascade::evaluation::{db_to_linear, LinkBudget};
use simcascade::optimizer::{OptimizerConfig, TrainingSet};
use simcascade::{ScatteringBlocks, SimTopology};

use crate::CliError;

/// Default bandwidth grid: 8 log-spaced points from 10 MHz to 2 GHz.
pub fn default_bandwidth_grid() -> Vec<f64> {
    let (lo, hi) = (10e6f64.ln(), 2e9f64.ln());
    (0..8).map(|i| (lo + (hi - lo) * i as f64 / 7.0).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub layers: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    /// Cells per layer; required for Touchstone block files, checked
    /// against the other sources otherwise.
    pub cells: Option<usize>,
}

fn half() -> f64 {
    0.5
}
fn three_quarters() -> f64 {
    0.75
}
fn ten() -> f64 {
    10.0
}
fn five() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub frequency_hz: f64,
    pub layer_spacing_lambda: f64,
    pub elements_y: usize,
    pub elements_z: usize,
    #[serde(default = "half")]
    pub element_spacing_y_lambda: f64,
    #[serde(default = "three_quarters")]
    pub element_spacing_z_lambda: f64,
    #[serde(default = "ten")]
    pub tx_distance_lambda: f64,
    #[serde(default = "five")]
    pub rx_distance_lambda: f64,
    #[serde(default = "half")]
    pub tx_spacing_lambda: f64,
    #[serde(default = "half")]
    pub rx_spacing_lambda: f64,
    #[serde(default)]
    pub broadside_pattern: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockFileSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSection {
    /// Identity excitations, identity target scaled to unit norm.
    #[default]
    Diagonal,
    /// JSON file with `excitations` (L×I) and `target` (M×I) matrices.
    Custom { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    pub tx_power_w: f64,
    pub noise_figure_db: f64,
    pub temperature_k: f64,
    pub bandwidth_hz: f64,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            tx_power_w: 0.05,
            noise_figure_db: 10.0,
            temperature_k: 290.0,
            bandwidth_hz: 100e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub bandwidth_hz: Vec<f64>,
    pub gain_db: Vec<f64>,
    pub spacing_lambda: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            bandwidth_hz: default_bandwidth_grid(),
            gain_db: vec![0.0, 3.0, 6.0],
            spacing_lambda: vec![1.5, 2.5, 4.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub seed: u64,
    pub gain_db_power: f64,
    /// Apply `10^(dB/10)` as the cell amplitude instead of `10^(dB/20)`.
    #[serde(default)]
    pub gain_db_is_amplitude: bool,
    pub topology: TopologySection,
    pub geometry: Option<GeometrySection>,
    pub block_file: Option<BlockFileSection>,
    #[serde(default)]
    pub target: TargetSection,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub budget: BudgetSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

/// A configuration resolved into model objects.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ConfigFile,
    pub base_dir: PathBuf,
    pub blocks: ScatteringBlocks,
    pub training: TrainingSet,
    pub budget: LinkBudget,
}

fn config_err(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn positive(path: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(config_err(path, format!("must be positive, got {v}")))
    }
}

impl GeometrySection {
    pub fn to_geometry(&self, tx: usize, rx: usize) -> Result<ScenarioGeometry, CliError> {
        positive("geometry.frequency_hz", self.frequency_hz)?;
        let lengths = [
            ("geometry.layer_spacing_lambda", self.layer_spacing_lambda),
            ("geometry.element_spacing_y_lambda", self.element_spacing_y_lambda),
            ("geometry.element_spacing_z_lambda", self.element_spacing_z_lambda),
            ("geometry.tx_distance_lambda", self.tx_distance_lambda),
            ("geometry.rx_distance_lambda", self.rx_distance_lambda),
            ("geometry.tx_spacing_lambda", self.tx_spacing_lambda),
            ("geometry.rx_spacing_lambda", self.rx_spacing_lambda),
        ];
        for (path, v) in lengths {
            positive(path, v)?;
        }
        if self.elements_y == 0 || self.elements_z == 0 {
            return Err(config_err("geometry.elements_y/elements_z", "must be at least 1"));
        }
        let wl = SPEED_OF_LIGHT / self.frequency_hz;
        Ok(ScenarioGeometry {
            wavelength: wl,
            layer_spacing: self.layer_spacing_lambda * wl,
            elements_y: self.elements_y,
            elements_z: self.elements_z,
            element_spacing_y: self.element_spacing_y_lambda * wl,
            element_spacing_z: self.element_spacing_z_lambda * wl,
            tx_distance: self.tx_distance_lambda * wl,
            rx_distance: self.rx_distance_lambda * wl,
            tx_count: tx,
            rx_count: rx,
            tx_spacing: self.tx_spacing_lambda * wl,
            rx_spacing: self.rx_spacing_lambda * wl,
            broadside_pattern: self.broadside_pattern,
        })
    }
}

impl BudgetSection {
    pub fn to_budget(&self) -> Result<LinkBudget, CliError> {
        positive("budget.tx_power_w", self.tx_power_w)?;
        positive("budget.temperature_k", self.temperature_k)?;
        positive("budget.bandwidth_hz", self.bandwidth_hz)?;
        if !(self.noise_figure_db.is_finite() && self.noise_figure_db >= 0.0) {
            return Err(config_err("budget.noise_figure_db", "must be >= 0 dB"));
        }
        Ok(LinkBudget {
            per_antenna_tx_power: self.tx_power_w,
            noise_figure: db_to_linear(self.noise_figure_db),
            temperature: self.temperature_k,
            bandwidth: self.bandwidth_hz,
        })
    }
}

fn read_text(path: &Path, field: &str) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| config_err(field, format!("cannot read {}: {e}", path.display())))
}

fn load_training(path: &Path, topo: &SimTopology) -> Result<TrainingSet, CliError> {
    let text = read_text(path, "target.path")?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| config_err("target.path", e))?;
    let get = |key: &str| {
        doc.get(key)
            .ok_or_else(|| config_err("target.path", format!("missing `{key}`")))
            .and_then(|v| decode_matrix(key, v).map_err(|e| config_err("target.path", e)))
    };
    let training = TrainingSet::new(get("excitations")?, get("target")?).map_err(|e| config_err("target.path", e))?;
    training.check(topo).map_err(|e| config_err("target.path", e))?;
    Ok(training)
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("configuration: {e}")))
    }

    /// Cell amplitude `G` applied in every unit cell.
    pub fn gain_amplitude(&self) -> f64 {
        if self.gain_db_is_amplitude {
            10f64.powf(self.gain_db_power / 10.0)
        } else {
            10f64.powf(self.gain_db_power / 20.0)
        }
    }

    pub fn spacing_lambda(&self) -> Option<f64> {
        self.geometry.as_ref().map(|g| g.layer_spacing_lambda)
    }

    fn build_blocks(&self, base_dir: &Path) -> Result<ScatteringBlocks, CliError> {
        let t = &self.topology;
        match (&self.geometry, &self.block_file) {
            (Some(_), Some(_)) => Err(config_err("geometry/block_file", "give exactly one of the two")),
            (None, None) => Err(config_err("geometry/block_file", "one of the two is required")),
            (Some(g), None) => {
                let geom = g.to_geometry(t.tx_antennas, t.rx_antennas)?;
                if let Some(k) = t.cells {
                    if k != geom.cells() {
                        return Err(config_err(
                            "topology.cells",
                            format!("{k} disagrees with elements_y·elements_z = {}", geom.cells()),
                        ));
                    }
                }
                let topo = geom.topology(t.layers).map_err(|e| config_err("topology", e))?;
                build_scenario(&geom, &topo).map_err(|e| config_err("geometry", e))
            }
            (None, Some(bf)) => {
                let path = base_dir.join(&bf.path);
                let topo = match t.cells {
                    Some(k) => Some(
                        SimTopology::new(t.layers, k, t.tx_antennas, t.rx_antennas)
                            .map_err(|e| config_err("topology", e))?,
                    ),
                    None => None,
                };
                let set = coupling::load_block_file(&path, topo.as_ref()).map_err(|e| config_err("block_file.path", e))?;
                let found = set.blocks.topology;
                if (found.layers, found.tx_ports, found.rx_ports) != (t.layers, t.tx_antennas, t.rx_antennas) {
                    return Err(config_err(
                        "topology",
                        format!("block file has Q={}, L={}, M={}", found.layers, found.tx_ports, found.rx_ports),
                    ));
                }
                Ok(set.blocks)
            }
        }
    }

    /// Resolves the configuration; `base_dir` anchors relative paths.
    pub fn resolve(self, base_dir: &Path) -> Result<Scenario, CliError> {
        if self.topology.layers == 0 || self.topology.tx_antennas == 0 || self.topology.rx_antennas == 0 {
            return Err(config_err("topology", "layers, tx_antennas and rx_antennas must be at least 1"));
        }
        if !self.gain_db_power.is_finite() {
            return Err(config_err("gain_db_power", "must be finite"));
        }
        self.optimizer.validate().map_err(|e| config_err("optimizer", e))?;
        let budget = self.budget.to_budget()?;
        let blocks = self.build_blocks(base_dir)?;
        let training = match &self.target {
            TargetSection::Diagonal => TrainingSet::diagonalization(&blocks.topology),
            TargetSection::Custom { path } => load_training(&base_dir.join(path), &blocks.topology)?,
        };
        Ok(Scenario {
            file: self,
            base_dir: base_dir.to_path_buf(),
            blocks,
            training,
            budget,
        })
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read_text(path, "--config")?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        ConfigFile::parse(&text)?.resolve(&base)
    }

    pub fn topology(&self) -> SimTopology {
        self.blocks.topology
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.file.seed = seed;
        self
    }

    /// Same scenario with another cell gain; the coupling is unchanged.
    pub fn with_gain_db(&self, gain_db: f64) -> Result<Self, CliError> {
        if !gain_db.is_finite() {
            return Err(config_err("--values", format!("gain {gain_db} dB is not finite")));
        }
        let mut s = self.clone();
        s.file.gain_db_power = gain_db;
        Ok(s)
    }

    /// Same scenario with another layer spacing; rebuilds the coupling.
    pub fn with_spacing_lambda(&self, spacing: f64) -> Result<Self, CliError> {
        let mut file = self.file.clone();
        match file.geometry.as_mut() {
            Some(g) => g.layer_spacing_lambda = spacing,
            None => return Err(config_err("geometry", "spacing sweeps need a [geometry] table")),
        }
        file.resolve(&self.base_dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
gain_db_power = 0.0
[topology]
layers = 1
tx_antennas = 1
rx_antennas = 1
[geometry]
frequency_hz = 28e9
layer_spacing_lambda = 1.5
elements_y = 1
elements_z = 1
"#;

    #[test]
    fn minimal_config_resolves() {
        let s = ConfigFile::parse(MINIMAL).unwrap().resolve(Path::new(".")).unwrap();
        assert_eq!(s.topology(), SimTopology::new(1, 1, 1, 1).unwrap());
        assert_eq!(s.file.gain_amplitude(), 1.0);
        assert_eq!(s.file.optimizer, OptimizerConfig::default());
        assert_eq!(s.training.target.shape(), (1, 1));
    }

    #[test]
    fn gain_conventions() {
        let mut f = ConfigFile::parse(MINIMAL).unwrap();
        f.gain_db_power = 6.0;
        assert!((f.gain_amplitude() - 1.9952623149688795).abs() < 1e-15);
        f.gain_db_is_amplitude = true;
        assert!((f.gain_amplitude() - 3.9810717055349722).abs() < 1e-15);
    }

    #[test]
    fn bandwidth_grid_is_log_spaced() {
        let g = default_bandwidth_grid();
        assert_eq!(g.len(), 8);
        assert!((g[0] - 10e6).abs() < 1e-3 && (g[7] - 2e9).abs() < 1e-2);
        let r = g[1] / g[0];
        assert!(g.windows(2).all(|w| (w[1] / w[0] - r).abs() < 1e-12));
    }

    fn err(text: &str) -> String {
        match ConfigFile::parse(text).and_then(|f| f.resolve(Path::new("/nonexistent"))) {
            Err(CliError::Config(m)) => m,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_field_paths() {
        assert!(err(&MINIMAL.replace("layer_spacing_lambda = 1.5", "layer_spacing_lambda = -1")).starts_with("geometry.layer_spacing_lambda"));
        assert!(err(&format!("{MINIMAL}[budget]\nbandwidth_hz = 0\n")).starts_with("budget.bandwidth_hz"));
        assert!(err(&format!("{MINIMAL}[optimizer]\nbacktrack_factor = 1.5\n")).starts_with("optimizer"));
        assert!(err(&MINIMAL.replace("elements_z = 1", "elements_z = 1\nbogus = 2")).contains("bogus"));
        assert!(err(&format!("{MINIMAL}[block_file]\npath = \"x.json\"\n")).starts_with("geometry/block_file"));
        let missing = MINIMAL.replace("[geometry]", "[block_file]\npath = \"missing.json\"\n[unused]");
        assert!(err(&missing).contains("unused"));
        let missing = MINIMAL
            .split("[geometry]")
            .next()
            .unwrap()
            .to_string()
            + "[block_file]\npath = \"missing.json\"\n";
        assert!(err(&missing).starts_with("block_file.path"));
        assert!(err(&format!("{MINIMAL}[target]\nkind = \"custom\"\npath = \"t.json\"\n")).starts_with("target.path"));
        assert!(err(&MINIMAL.replace("[topology]", "[topology]\ncells = 4")).starts_with("topology.cells"));
    }

    #[test]
    fn spacing_variant_rebuilds_coupling() {
        let s = ConfigFile::parse(&MINIMAL.replace("layers = 1", "layers = 2")).unwrap().resolve(Path::new(".")).unwrap();
        let t = s.with_spacing_lambda(3.0).unwrap();
        assert_eq!(t.file.spacing_lambda(), Some(3.0));
        assert!(t.blocks.inter_layer[0][(0, 0)].norm() < s.blocks.inter_layer[0][(0, 0)].norm());
    }
}
