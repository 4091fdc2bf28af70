//! Measure files.
//!
//! Text layout (`.txt`):
//!
//! ```text
//! # fraclab-measure v1
//! # {"ambient_dim":2,"gen_scale":...,"total_mass":...,"count":...,"provenance":"...","weight_scale":1.0}
//! x_1 ... x_n w
//! ```
//!
//! One row per point with `n + 1` whitespace-separated columns, every value in
//! scientific notation with 17 significant digits, which round-trips f64 exactly.
//!
//! Binary layout (`.bin`): the 8-byte magic `FLMEAS01`, a little-endian u64 header
//! length, the same JSON header, then `count * (n + 1)` little-endian f64 values in
//! row order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DiscreteMeasure, MeasureMeta};
use crate::error::{LabError, Result};

const TEXT_MAGIC: &str = "# fraclab-measure v1";
const BIN_MAGIC: &[u8; 8] = b"FLMEAS01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureHeader {
    pub ambient_dim: usize,
    pub gen_scale: f64,
    pub total_mass: f64,
    pub count: usize,
    pub provenance: String,
    pub weight_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureFormat {
    Text,
    Binary,
}

impl MeasureFormat {
    pub fn from_path(path: &Path) -> MeasureFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => MeasureFormat::Binary,
            _ => MeasureFormat::Text,
        }
    }
}

fn header_of(mu: &DiscreteMeasure) -> MeasureHeader {
    MeasureHeader {
        ambient_dim: mu.dim(),
        gen_scale: mu.gen_scale(),
        total_mass: mu.total_mass(),
        count: mu.len(),
        provenance: mu.meta().provenance.clone(),
        weight_scale: mu.meta().weight_scale,
    }
}

pub fn write_text<W: Write>(mu: &DiscreteMeasure, mut out: W) -> Result<()> {
    let header = serde_json::to_string(&header_of(mu)).map_err(|e| LabError::Format(e.to_string()))?;
    writeln!(out, "{TEXT_MAGIC}")?;
    writeln!(out, "# {header}")?;
    let mut line = String::new();
    for (p, w) in mu.points().chunks_exact(mu.dim()).zip(mu.weights()) {
        line.clear();
        for x in p {
            line.push_str(&format!("{x:.16e} "));
        }
        line.push_str(&format!("{w:.16e}\n"));
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_text<R: BufRead>(input: R) -> Result<DiscreteMeasure> {
    let mut lines = input.lines();
    let magic = lines.next().transpose()?.unwrap_or_default();
    if magic.trim() != TEXT_MAGIC {
        return Err(LabError::Format("missing measure file magic line".into()));
    }
    let header_line = lines.next().transpose()?.unwrap_or_default();
    let json = header_line
        .strip_prefix('#')
        .ok_or_else(|| LabError::Format("missing JSON header line".into()))?;
    let header: MeasureHeader =
        serde_json::from_str(json.trim()).map_err(|e| LabError::Format(format!("bad header: {e}")))?;
    let cols = header.ambient_dim + 1;
    let mut pts = Vec::with_capacity(header.count * header.ambient_dim);
    let mut w = Vec::with_capacity(header.count);
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| LabError::Format(format!("row {}: {e}", lineno + 3)))?;
        if vals.len() != cols {
            return Err(LabError::Format(format!(
                "row {}: expected {cols} columns, found {}",
                lineno + 3,
                vals.len()
            )));
        }
        pts.extend_from_slice(&vals[..cols - 1]);
        w.push(vals[cols - 1]);
    }
    finish(header, pts, w)
}

pub fn write_binary<W: Write>(mu: &DiscreteMeasure, mut out: W) -> Result<()> {
    let header = serde_json::to_vec(&header_of(mu)).map_err(|e| LabError::Format(e.to_string()))?;
    out.write_all(BIN_MAGIC)?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for (p, w) in mu.points().chunks_exact(mu.dim()).zip(mu.weights()) {
        for x in p {
            out.write_all(&x.to_le_bytes())?;
        }
        out.write_all(&w.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<DiscreteMeasure> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != BIN_MAGIC {
        return Err(LabError::Format("missing binary measure magic".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 20 {
        return Err(LabError::Format("header too large".into()));
    }
    let mut hbuf = vec![0u8; len];
    input.read_exact(&mut hbuf)?;
    let header: MeasureHeader =
        serde_json::from_slice(&hbuf).map_err(|e| LabError::Format(format!("bad header: {e}")))?;
    let cols = header.ambient_dim + 1;
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() != header.count * cols * 8 {
        return Err(LabError::Format(format!(
            "expected {} data bytes, found {}",
            header.count * cols * 8,
            body.len()
        )));
    }
    let vals: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut pts = Vec::with_capacity(header.count * header.ambient_dim);
    let mut w = Vec::with_capacity(header.count);
    for row in vals.chunks_exact(cols) {
        pts.extend_from_slice(&row[..cols - 1]);
        w.push(row[cols - 1]);
    }
    finish(header, pts, w)
}

fn finish(header: MeasureHeader, pts: Vec<f64>, w: Vec<f64>) -> Result<DiscreteMeasure> {
    if w.len() != header.count {
        return Err(LabError::Format(format!(
            "header announces {} points, found {}",
            header.count,
            w.len()
        )));
    }
    let mu = DiscreteMeasure::new(header.ambient_dim, pts, w, header.gen_scale)?;
    let rel = (mu.total_mass() - header.total_mass).abs() / header.total_mass.abs().max(f64::MIN_POSITIVE);
    if rel > 1e-12 {
        return Err(LabError::Format(format!(
            "header total_mass {} disagrees with the weights ({})",
            header.total_mass,
            mu.total_mass()
        )));
    }
    Ok(mu.with_meta(MeasureMeta {
        provenance: header.provenance,
        weight_scale: header.weight_scale,
    }))
}

pub fn save(mu: &DiscreteMeasure, path: &Path, format: MeasureFormat) -> Result<()> {
    let out = BufWriter::new(File::create(path)?);
    match format {
        MeasureFormat::Text => write_text(mu, out),
        MeasureFormat::Binary => write_binary(mu, out),
    }
}

/// Loads either format, sniffing the magic bytes.
pub fn load(path: &Path) -> Result<DiscreteMeasure> {
    let mut f = BufReader::new(File::open(path)?);
    let head = f.fill_buf()?;
    if head.starts_with(BIN_MAGIC) {
        read_binary(f)
    } else {
        read_text(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::builtin;

    #[test]
    fn text_round_trip_is_bit_exact() {
        let mu = builtin::gaussian_cloud(2, 300, 0.3, 2).unwrap().scale_weights(1.0 / 3.0).unwrap();
        let mut buf = Vec::new();
        write_text(&mu, &mut buf).unwrap();
        let back = read_text(buf.as_slice()).unwrap();
        assert_eq!(back, mu);
        assert_eq!(back.meta(), mu.meta());
        assert_eq!(back.total_mass().to_bits(), mu.total_mass().to_bits());
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let mu = builtin::uniform_random(3, 100, 8).unwrap();
        let mut buf = Vec::new();
        write_binary(&mu, &mut buf).unwrap();
        assert_eq!(read_binary(buf.as_slice()).unwrap(), mu);
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let mu = builtin::uniform_random(2, 10, 8).unwrap();
        let mut buf = Vec::new();
        write_text(&mu, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_text(truncated.as_bytes()), Err(LabError::Format(_))));
        let bad_cols = text.replacen(" 1.0000000000000001e-1", "", 1);
        assert!(read_text(bad_cols.as_bytes()).is_err());
        assert!(read_text("hello\n".as_bytes()).is_err());
    }
}
