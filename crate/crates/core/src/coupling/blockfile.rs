//! JSON block files and extraction of blocks from a full port matrix.
//!
//! JSON layout: `topology {Q,K,L,M}`, `wavelength_m`, `h_ts`, `h_sr`,
//! `inter_layer` (Q−1 matrices), and optionally `s_rt`, `reflections`
//! (`[{region, s11, s22, s12}]`) and `s_ss_extra`. A matrix is an array of
//! rows, each row an array of `[re, im]` pairs.

use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use super::touchstone::{parse_touchstone, TouchstoneData};
use super::SPEED_OF_LIGHT;
use crate::error::{Result, SimError};
use crate::linalg::{self, CMat, ZERO};
use crate::model::{assemble_sss, RegionReflection, ScatteringBlocks, SimTopology};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockFormat {
    Json,
    Touchstone,
}

/// Blocks read from disk together with where they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestedBlockSet {
    pub blocks: ScatteringBlocks,
    pub source: PathBuf,
    pub format: BlockFormat,
    /// Ohms; present for Touchstone sources.
    pub reference_impedance: Option<f64>,
    /// Hertz; from the option line, or `c/λ` for JSON files carrying `wavelength_m`.
    pub frequency: Option<f64>,
}

const TOP_LEVEL: [&str; 8] = [
    "topology",
    "wavelength_m",
    "h_ts",
    "h_sr",
    "s_rt",
    "inter_layer",
    "reflections",
    "s_ss_extra",
];

/// Encodes a matrix as rows of `[re, im]` pairs.
pub fn encode_matrix(m: &CMat) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!([m[(i, j)].re, m[(i, j)].im])).collect()))
            .collect(),
    )
}

/// Decodes rows of `[re, im]` pairs; errors name `block`.
pub fn decode_matrix(block: &str, v: &Value) -> Result<CMat> {
    let bad = |msg: String| SimError::schema(block, msg);
    let row_vals = v.as_array().ok_or_else(|| bad("expected an array of rows".into()))?;
    let cols = row_vals.first().and_then(Value::as_array).map_or(0, Vec::len);
    if row_vals.is_empty() || cols == 0 {
        return Err(bad("matrix must have at least one row and one column".into()));
    }
    let mut m = CMat::zeros(row_vals.len(), cols);
    for (i, row) in row_vals.iter().enumerate() {
        let row = row.as_array().ok_or_else(|| bad(format!("row {i} is not an array")))?;
        if row.len() != cols {
            return Err(bad(format!("row {i} has {} entries, expected {cols}", row.len())));
        }
        for (j, pair) in row.iter().enumerate() {
            let parts = pair.as_array().filter(|p| p.len() == 2);
            let z = parts.and_then(|p| Some(Complex64::new(p[0].as_f64()?, p[1].as_f64()?)));
            m[(i, j)] = z.ok_or_else(|| bad(format!("entry ({i},{j}) is not a [re, im] pair")))?;
        }
    }
    Ok(m)
}

fn matrix_from_json(block: &str, v: &Value, rows: usize, cols: usize) -> Result<CMat> {
    let m = decode_matrix(block, v)?;
    if m.shape() != (rows, cols) {
        return Err(SimError::schema(
            block,
            format!("expected {rows}x{cols}, got {}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(m)
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value> {
    obj.get(name)
        .filter(|v| !v.is_null())
        .ok_or_else(|| SimError::schema(name, "missing mandatory block"))
}

fn topology_from_json(v: &Value) -> Result<SimTopology> {
    let obj = v.as_object().ok_or_else(|| SimError::schema("topology", "expected an object"))?;
    let get = |key: &str| -> Result<usize> {
        obj.get(key)
            .and_then(Value::as_u64)
            .map(|x| x as usize)
            .ok_or_else(|| SimError::schema("topology", format!("`{key}` must be a non-negative integer")))
    };
    SimTopology::new(get("Q")?, get("K")?, get("L")?, get("M")?)
        .map_err(|e| SimError::schema("topology", e.to_string()))
}

fn reflection_from_json(idx: usize, v: &Value, topo: &SimTopology) -> Result<RegionReflection> {
    let name = format!("reflections[{idx}]");
    let obj = v.as_object().ok_or_else(|| SimError::schema(&name, "expected an object"))?;
    let region = obj
        .get("region")
        .and_then(Value::as_u64)
        .map(|r| r as usize)
        .filter(|r| *r <= topo.layers)
        .ok_or_else(|| SimError::schema(&name, format!("`region` must be an integer in 0..={}", topo.layers)))?;
    let k = topo.cells;
    let sub = |key: &str, allowed: bool| -> Result<Option<CMat>> {
        match obj.get(key).filter(|v| !v.is_null()) {
            None => Ok(None),
            Some(_) if !allowed => Err(SimError::schema(
                format!("{name}.{key}"),
                format!("region {region} has no such block"),
            )),
            Some(m) => matrix_from_json(&format!("{name}.{key}"), m, k, k).map(Some),
        }
    };
    let interior = region > 0 && region < topo.layers;
    Ok(RegionReflection {
        region,
        s11: sub("s11", region > 0)?,
        s22: sub("s22", region < topo.layers)?,
        s12: sub("s12", interior)?,
    })
}

fn parse_document(text: &str) -> Result<(ScatteringBlocks, Option<f64>)> {
    let doc: Value = serde_json::from_str(text).map_err(|e| SimError::schema("document", e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| SimError::schema("document", "top level must be an object"))?;
    if let Some(unknown) = obj.keys().find(|k| !TOP_LEVEL.contains(&k.as_str())) {
        return Err(SimError::schema(unknown, "unknown block"));
    }
    let topo = topology_from_json(field(obj, "topology")?)?;
    let (k, l, m) = (topo.cells, topo.tx_ports, topo.rx_ports);

    let wavelength = match obj.get("wavelength_m").filter(|v| !v.is_null()) {
        None => None,
        Some(v) => Some(
            v.as_f64()
                .filter(|w| w.is_finite() && *w > 0.0)
                .ok_or_else(|| SimError::schema("wavelength_m", "must be a positive number"))?,
        ),
    };
    let h_ts = matrix_from_json("h_ts", field(obj, "h_ts")?, k, l)?;
    let h_sr = matrix_from_json("h_sr", field(obj, "h_sr")?, m, k)?;
    let s_rt = match obj.get("s_rt").filter(|v| !v.is_null()) {
        Some(v) => matrix_from_json("s_rt", v, m, l)?,
        None => CMat::zeros(m, l),
    };
    let inter_vals = match obj.get("inter_layer").filter(|v| !v.is_null()) {
        Some(v) => v
            .as_array()
            .ok_or_else(|| SimError::schema("inter_layer", "expected an array of matrices"))?
            .as_slice(),
        None if topo.layers == 1 => &[],
        None => return Err(SimError::schema("inter_layer", "missing mandatory block")),
    };
    if inter_vals.len() != topo.layers - 1 {
        return Err(SimError::schema(
            "inter_layer",
            format!("expected Q−1 = {} matrices, got {}", topo.layers - 1, inter_vals.len()),
        ));
    }
    let inter_layer = inter_vals
        .iter()
        .enumerate()
        .map(|(i, v)| matrix_from_json(&format!("inter_layer[{i}]"), v, k, k))
        .collect::<Result<Vec<_>>>()?;
    let reflections = match obj.get("reflections").filter(|v| !v.is_null()) {
        Some(v) => v
            .as_array()
            .ok_or_else(|| SimError::schema("reflections", "expected an array"))?
            .iter()
            .enumerate()
            .map(|(i, r)| reflection_from_json(i, r, &topo))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let s_ss_extra = match obj.get("s_ss_extra").filter(|v| !v.is_null()) {
        Some(v) => Some(matrix_from_json("s_ss_extra", v, topo.sim_ports(), topo.sim_ports())?),
        None => None,
    };

    let blocks = ScatteringBlocks {
        topology: topo,
        inter_layer,
        reflections,
        h_ts,
        h_sr,
        s_rt,
        s_ss_extra,
    };
    blocks.validate().map_err(|e| SimError::schema("document", e.to_string()))?;
    Ok((blocks, wavelength))
}

/// Parses a JSON block file. Absent optional blocks are zero.
pub fn load_blocks_json(text: &str) -> Result<ScatteringBlocks> {
    parse_document(text).map(|(b, _)| b)
}

/// Serializes `blocks`; loading the result gives back bit-identical blocks.
pub fn save_blocks_json(blocks: &ScatteringBlocks, wavelength_m: Option<f64>) -> Result<String> {
    blocks.validate()?;
    let t = &blocks.topology;
    let mut doc = Map::new();
    doc.insert(
        "topology".into(),
        json!({"Q": t.layers, "K": t.cells, "L": t.tx_ports, "M": t.rx_ports}),
    );
    if let Some(w) = wavelength_m {
        doc.insert("wavelength_m".into(), json!(w));
    }
    doc.insert("h_ts".into(), encode_matrix(&blocks.h_ts));
    doc.insert("h_sr".into(), encode_matrix(&blocks.h_sr));
    doc.insert("s_rt".into(), encode_matrix(&blocks.s_rt));
    doc.insert(
        "inter_layer".into(),
        Value::Array(blocks.inter_layer.iter().map(encode_matrix).collect()),
    );
    if !blocks.reflections.is_empty() {
        let refl = blocks
            .reflections
            .iter()
            .map(|r| {
                let mut o = Map::new();
                o.insert("region".into(), json!(r.region));
                for (key, m) in [("s11", &r.s11), ("s22", &r.s22), ("s12", &r.s12)] {
                    if let Some(m) = m {
                        o.insert(key.into(), encode_matrix(m));
                    }
                }
                Value::Object(o)
            })
            .collect();
        doc.insert("reflections".into(), Value::Array(refl));
    }
    if let Some(extra) = &blocks.s_ss_extra {
        doc.insert("s_ss_extra".into(), encode_matrix(extra));
    }
    serde_json::to_string_pretty(&Value::Object(doc)).map_err(|e| SimError::Numerical(e.to_string()))
}

fn nonzero(m: &CMat) -> Option<CMat> {
    m.iter().any(|z| *z != ZERO).then(|| m.clone())
}

/// Splits a full `(L + N + M)`-port matrix, ports ordered transmitter, SIM
/// (layer-wise, receive array first), receiver, into coupling blocks.
///
/// Nearest-neighbour couplings become `inter_layer` and `reflections`; any
/// remaining `S_SS` entries are kept in `s_ss_extra`. Transmitter or receiver
/// coupling to SIM arrays other than the first receive and last transmit
/// array cannot be represented and is rejected.
pub fn blocks_from_global(data: &TouchstoneData, topo: &SimTopology) -> Result<ScatteringBlocks> {
    topo.validate()?;
    let (l, n, m, k, q) = (topo.tx_ports, topo.sim_ports(), topo.rx_ports, topo.cells, topo.layers);
    let s = &data.matrix;
    if s.nrows() != l + n + m {
        return Err(SimError::schema(
            "touchstone",
            format!("{} ports, topology needs L + 2QK + M = {}", s.nrows(), l + n + m),
        ));
    }
    let sub = |r: usize, c: usize, rows: usize, cols: usize| s.view((r, c), (rows, cols)).into_owned();
    let (so, ro) = (l, l + n);

    let s_st = sub(so, 0, n, l);
    let h_ts = sub(so + topo.rx_offset(0), 0, k, l);
    let mut s_st_rest = s_st;
    linalg::place(&mut s_st_rest, topo.rx_offset(0), 0, &CMat::zeros(k, l));
    if nonzero(&s_st_rest).is_some() {
        return Err(SimError::schema("S_ST", "transmitter couples beyond the receive array of layer 1"));
    }
    let s_rs = sub(ro, so, m, n);
    let h_sr = sub(ro, so + topo.tx_offset(q - 1), m, k);
    let mut s_rs_rest = s_rs;
    linalg::place(&mut s_rs_rest, 0, topo.tx_offset(q - 1), &CMat::zeros(m, k));
    if nonzero(&s_rs_rest).is_some() {
        return Err(SimError::schema("S_RS", "receiver couples beyond the transmit array of layer Q"));
    }
    let s_rt = sub(ro, 0, m, l);

    let s_ss = sub(so, so, n, n);
    let blk = |r: usize, c: usize| s_ss.view((r, c), (k, k)).into_owned();
    let inter_layer = (0..q - 1).map(|i| blk(topo.rx_offset(i + 1), topo.tx_offset(i))).collect();
    let mut reflections = Vec::new();
    for u in 0..=q {
        let s11 = (u > 0).then(|| blk(topo.tx_offset(u - 1), topo.tx_offset(u - 1)));
        let s22 = (u < q).then(|| blk(topo.rx_offset(u), topo.rx_offset(u)));
        let s12 = (u > 0 && u < q).then(|| blk(topo.tx_offset(u - 1), topo.rx_offset(u)));
        let r = RegionReflection {
            region: u,
            s11: s11.as_ref().and_then(nonzero),
            s22: s22.as_ref().and_then(nonzero),
            s12: s12.as_ref().and_then(nonzero),
        };
        if r.s11.is_some() || r.s22.is_some() || r.s12.is_some() {
            reflections.push(r);
        }
    }
    let mut blocks = ScatteringBlocks {
        topology: *topo,
        inter_layer,
        reflections,
        h_ts,
        h_sr,
        s_rt,
        s_ss_extra: None,
    };
    let residual = &s_ss - assemble_sss(&blocks, topo)?;
    blocks.s_ss_extra = nonzero(&residual);
    blocks.validate()?;
    Ok(blocks)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| SimError::arg(format!("cannot read {}: {e}", path.display())))
}

/// Loads blocks from a `.json` block file or a Touchstone `.sNp` / `.ts` file.
/// Touchstone files need `topo` to split the ports; for JSON files a given
/// `topo` must match the one stored in the file.
pub fn load_block_file(path: &Path, topo: Option<&SimTopology>) -> Result<IngestedBlockSet> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let text = read(path)?;
    if ext == "json" {
        let (blocks, wavelength) = parse_document(&text)?;
        if let Some(t) = topo {
            if *t != blocks.topology {
                return Err(SimError::schema(
                    "topology",
                    format!("file has {:?}, configuration expects {:?}", blocks.topology, t),
                ));
            }
        }
        return Ok(IngestedBlockSet {
            blocks,
            source: path.to_path_buf(),
            format: BlockFormat::Json,
            reference_impedance: None,
            frequency: wavelength.map(|w| SPEED_OF_LIGHT / w),
        });
    }
    let touchstone_ext = ext == "ts" || (ext.len() >= 3 && ext.starts_with('s') && ext.ends_with('p') && ext[1..ext.len() - 1].chars().all(|c| c.is_ascii_digit()));
    if !touchstone_ext {
        return Err(SimError::arg(format!("unrecognised block file extension `.{ext}`")));
    }
    let topo = topo.ok_or_else(|| SimError::arg("a Touchstone block file needs an explicit topology"))?;
    let data = parse_touchstone(&text)?;
    Ok(IngestedBlockSet {
        blocks: blocks_from_global(&data, topo)?,
        source: path.to_path_buf(),
        format: BlockFormat::Touchstone,
        reference_impedance: Some(data.reference_impedance),
        frequency: Some(data.frequency_hz),
    })
}
