//! Single-frequency Touchstone v1 reader and writer, real/imaginary format.
//!
//! Accepted input: `!` comments anywhere, exactly one option line
//! `# <unit> S RI R <z0>` (tokens in any order, case-insensitive), and one
//! data record of `1 + 2n²` numbers that may wrap over several lines as long
//! as no real/imaginary pair is split. Two-port records use the v1 order
//! `S11 S21 S12 S22`; every other size is row-major.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::linalg::CMat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrequencyUnit {
    Hz,
    KHz,
    MHz,
    GHz,
}

impl FrequencyUnit {
    fn parse(token: &str) -> Option<Self> {
        match token {
            "HZ" => Some(Self::Hz),
            "KHZ" => Some(Self::KHz),
            "MHZ" => Some(Self::MHz),
            "GHZ" => Some(Self::GHz),
            _ => None,
        }
    }

    pub fn multiplier(self) -> f64 {
        match self {
            Self::Hz => 1.0,
            Self::KHz => 1e3,
            Self::MHz => 1e6,
            Self::GHz => 1e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TouchstoneData {
    pub matrix: CMat,
    pub frequency_hz: f64,
    pub reference_impedance: f64,
}

struct Options {
    unit: FrequencyUnit,
    z0: f64,
}

fn parse_options(line: usize, body: &str) -> Result<Options> {
    let tokens: Vec<String> = body.split_whitespace().map(str::to_ascii_uppercase).collect();
    let mut unit = FrequencyUnit::GHz;
    let mut format = "MA".to_string();
    let mut z0 = 50.0;
    let mut i = 0;
    while i < tokens.len() {
        let t = tokens[i].as_str();
        if let Some(u) = FrequencyUnit::parse(t) {
            unit = u;
        } else {
            match t {
                "S" => {}
                "Y" | "Z" | "H" | "G" => {
                    return Err(SimError::parse(line, format!("unsupported parameter type `{t}`, only S")))
                }
                "RI" | "MA" | "DB" => format = t.to_string(),
                "R" => {
                    let v = tokens
                        .get(i + 1)
                        .and_then(|s| s.parse::<f64>().ok())
                        .ok_or_else(|| SimError::parse(line, "`R` must be followed by a number"))?;
                    if !(v.is_finite() && v > 0.0) {
                        return Err(SimError::parse(line, format!("reference impedance must be positive, got {v}")));
                    }
                    z0 = v;
                    i += 1;
                }
                other => return Err(SimError::parse(line, format!("unknown option `{other}`"))),
            }
        }
        i += 1;
    }
    if format != "RI" {
        return Err(SimError::parse(line, format!("unsupported data format `{format}`, only RI")));
    }
    Ok(Options { unit, z0 })
}

/// Reads a single-frequency S-parameter matrix.
pub fn parse_touchstone(text: &str) -> Result<TouchstoneData> {
    let mut options: Option<Options> = None;
    let mut fields: Vec<f64> = Vec::new();
    let mut record_start: Option<usize> = None;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let body = raw.split('!').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('#') {
            if options.is_some() {
                return Err(SimError::parse(line, "more than one option line"));
            }
            if record_start.is_some() {
                return Err(SimError::parse(line, "option line after the data record"));
            }
            options = Some(parse_options(line, rest)?);
            continue;
        }
        if body.starts_with('[') {
            return Err(SimError::parse(line, "Touchstone v2 keywords are not supported"));
        }
        if options.is_none() {
            return Err(SimError::parse(line, "data before the option line"));
        }
        let values = body
            .split_whitespace()
            .map(|tok| match tok.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(SimError::parse(line, format!("non-numeric token `{tok}`"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        // a line with an odd number of values opens a new frequency record
        if values.len() % 2 == 1 {
            if record_start.is_some() {
                return Err(SimError::parse(line, "multiple frequency points"));
            }
            record_start = Some(line);
        } else if record_start.is_none() {
            return Err(SimError::parse(line, "data record must start with a frequency"));
        }
        fields.extend(values);
    }

    let options = options.ok_or_else(|| SimError::parse(last_line, "missing option line"))?;
    let start = record_start.ok_or_else(|| SimError::parse(last_line, "no data record"))?;
    let pairs = (fields.len() - 1) / 2;
    let n = (pairs as f64).sqrt().round() as usize;
    if n == 0 || n * n != pairs {
        return Err(SimError::parse(
            start,
            format!("inconsistent entry count: {} values is not 1 + 2n²", fields.len()),
        ));
    }
    let frequency_hz = fields[0] * options.unit.multiplier();
    if frequency_hz < 0.0 {
        return Err(SimError::parse(start, "negative frequency"));
    }
    let entry = |p: usize| Complex64::new(fields[1 + 2 * p], fields[2 + 2 * p]);
    let matrix = if n == 2 {
        CMat::from_fn(2, 2, |i, j| entry(j * 2 + i))
    } else {
        CMat::from_fn(n, n, |i, j| entry(i * n + j))
    };
    Ok(TouchstoneData {
        matrix,
        frequency_hz,
        reference_impedance: options.z0,
    })
}

fn push_pair(out: &mut String, z: Complex64) {
    let _ = write!(out, " {:e} {:e}", z.re, z.im);
}

/// Writes `data` in the subset [`parse_touchstone`] reads, frequency in Hz.
/// Numbers use the shortest representation that parses back to the same bits.
pub fn write_touchstone(data: &TouchstoneData) -> Result<String> {
    let m = &data.matrix;
    let n = m.nrows();
    if n == 0 || !m.is_square() {
        return Err(SimError::arg("Touchstone needs a non-empty square matrix"));
    }
    if !crate::linalg::is_finite(m) || !data.frequency_hz.is_finite() || !data.reference_impedance.is_finite() {
        return Err(SimError::arg("Touchstone output must be finite"));
    }
    let mut out = String::new();
    let _ = writeln!(out, "! {n}-port S-parameters, single frequency");
    let _ = writeln!(out, "# HZ S RI R {:e}", data.reference_impedance);
    let _ = write!(out, "{:e}", data.frequency_hz);
    if n == 2 {
        for (i, j) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            push_pair(&mut out, m[(i, j)]);
        }
        out.push('\n');
        return Ok(out);
    }
    for i in 0..n {
        for (chunk_idx, chunk) in (0..n).collect::<Vec<_>>().chunks(4).enumerate() {
            if i > 0 || chunk_idx > 0 {
                out.push('\n');
            }
            for &j in chunk {
                push_pair(&mut out, m[(i, j)]);
            }
        }
    }
    out.push('\n');
    Ok(out)
}
