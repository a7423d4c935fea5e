//! Plain-text CSV formats.
//!
//! Every file starts with `# key=value` comment lines carrying the
//! parameters that produced it, followed by a header and row-major data.
//! Numbers use Rust's shortest round-trip formatting, so parsing recovers
//! the exact values.

use std::fmt::Write as _;

use crate::attractor::{DensityMap, TrajectoryEnsemble};
use crate::dynamics::{GridGeometry, Lattice};
use crate::error::{Error, Result};
use crate::ftle::{FtleField, PerturbationScheme};
use crate::state::Cell;

pub const GRID_HEADER: &str = "row,col,value,valid";

/// A scalar grid with a validity mask and `key=value` metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct GridCsv {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub meta: Vec<(String, String)>,
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    match s.trim() {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        t => t.parse().map_err(|e| Error::Parse(format!("number `{t}`: {e}"))),
    }
}

fn write_meta(out: &mut String, meta: &[(String, String)]) {
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}={v}");
    }
}

/// Splits leading `# key=value` comments from the rest of the lines.
fn split_meta(text: &str) -> (Vec<(String, String)>, Vec<&str>) {
    let mut meta = Vec::new();
    let mut body = Vec::new();
    for line in text.lines() {
        if let Some(c) = line.strip_prefix('#') {
            if let Some((k, v)) = c.trim_start().split_once('=') {
                meta.push((k.trim().to_string(), v.to_string()));
            }
        } else if !line.trim().is_empty() {
            body.push(line);
        }
    }
    (meta, body)
}

impl GridCsv {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        write_meta(&mut out, &self.meta);
        let _ = writeln!(out, "# rows={}", self.rows);
        let _ = writeln!(out, "# cols={}", self.cols);
        out.push_str(GRID_HEADER);
        out.push('\n');
        for r in 0..self.rows {
            for c in 0..self.cols {
                let i = r * self.cols + c;
                let _ = writeln!(out, "{r},{c},{},{}", fmt_f64(self.values[i]), u8::from(self.valid[i]));
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (mut meta, body) = split_meta(text);
        let take = |meta: &mut Vec<(String, String)>, key: &str| -> Result<usize> {
            let pos = meta
                .iter()
                .rposition(|(k, _)| k == key)
                .ok_or_else(|| Error::Parse(format!("missing `# {key}=` line")))?;
            let (_, v) = meta.remove(pos);
            v.trim().parse().map_err(|e| Error::Parse(format!("{key}: {e}")))
        };
        let rows = take(&mut meta, "rows")?;
        let cols = take(&mut meta, "cols")?;
        let mut lines = body.into_iter();
        match lines.next().map(str::trim) {
            Some(GRID_HEADER) => {}
            other => return Err(Error::Parse(format!("expected header `{GRID_HEADER}`, found {other:?}"))),
        }
        let mut values = Vec::with_capacity(rows * cols);
        let mut valid = Vec::with_capacity(rows * cols);
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let [r, c, v, ok] = f[..] else {
                return Err(Error::Parse(format!("malformed line `{line}`")));
            };
            let expect = Cell::new(i / cols.max(1), i % cols.max(1));
            let at = Cell::new(
                r.parse().map_err(|e| Error::Parse(format!("`{line}`: {e}")))?,
                c.parse().map_err(|e| Error::Parse(format!("`{line}`: {e}")))?,
            );
            if at != expect || i >= rows * cols {
                return Err(Error::Parse(format!("line `{line}` out of row-major order (expected {expect})")));
            }
            values.push(parse_f64(v)?);
            valid.push(match ok {
                "1" => true,
                "0" => false,
                other => return Err(Error::Parse(format!("valid flag `{other}` is not 0 or 1"))),
            });
        }
        if values.len() != rows * cols {
            return Err(Error::Parse(format!("{} data lines for a {rows}×{cols} grid", values.len())));
        }
        Ok(GridCsv { rows, cols, values, valid, meta })
    }

    pub fn from_field(field: &FtleField, mut meta: Vec<(String, String)>) -> Self {
        meta.push(("horizon".into(), field.horizon.to_string()));
        meta.push(("scheme".into(), serde_json::to_string(&field.scheme).expect("scheme serializes")));
        meta.push(("geometry".into(), serde_json::to_string(&field.geometry).expect("geometry serializes")));
        GridCsv { rows: field.rows, cols: field.cols, values: field.sigma.clone(), valid: field.valid.clone(), meta }
    }

    pub fn to_field(&self) -> Result<FtleField> {
        let get = |k: &str| self.meta(k).ok_or_else(|| Error::Parse(format!("missing `# {k}=` line")));
        let horizon: usize = get("horizon")?.trim().parse().map_err(|e| Error::Parse(format!("horizon: {e}")))?;
        let scheme: PerturbationScheme = serde_json::from_str(get("scheme")?)?;
        let geometry: GridGeometry = serde_json::from_str(get("geometry")?)?;
        Ok(FtleField {
            rows: self.rows,
            cols: self.cols,
            sigma: self.values.clone(),
            valid: self.valid.clone(),
            horizon,
            scheme,
            geometry,
        })
    }

    /// Histogram counts with the lattice's validity as the mask.
    pub fn from_density(h: &DensityMap, lattice: &Lattice, meta: Vec<(String, String)>) -> Self {
        let valid = lattice.all_cells().map(|c| lattice.is_valid(c)).collect();
        GridCsv { rows: h.rows, cols: h.cols, values: h.values.clone(), valid, meta }
    }

    pub fn to_density(&self) -> DensityMap {
        DensityMap { rows: self.rows, cols: self.cols, values: self.values.clone() }
    }
}

/// Polyline CSV of recorded trajectories in free coordinates:
/// `trajectory,step,x,y`.
pub fn trajectories_csv(ens: &TrajectoryEnsemble, lattice: &Lattice, meta: &[(String, String)]) -> String {
    let mut out = String::new();
    write_meta(&mut out, meta);
    out.push_str("trajectory,step,x,y\n");
    for (i, t) in ens.trajectories.iter().enumerate() {
        if let Some(path) = &t.path {
            for (k, s) in path.iter().enumerate() {
                let p = lattice.project(s);
                let _ = writeln!(out, "{i},{k},{},{}", fmt_f64(p[0]), fmt_f64(p[1]));
            }
        }
    }
    out
}

/// One row of a metrics table.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub mbr: f64,
    pub asas: f64,
    pub tasas: f64,
}

pub const TABLE_HEADER: &str = "episode,mbr,asas,tasas";

pub fn table_csv(rows: &[TableRow], meta: &[(String, String)]) -> String {
    let mut out = String::new();
    write_meta(&mut out, meta);
    out.push_str(TABLE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.label, fmt_f64(r.mbr), fmt_f64(r.asas), fmt_f64(r.tasas));
    }
    out
}

pub fn parse_table_csv(text: &str) -> Result<Vec<TableRow>> {
    let (_, body) = split_meta(text);
    let mut lines = body.into_iter();
    match lines.next().map(str::trim) {
        Some(TABLE_HEADER) => {}
        other => return Err(Error::Parse(format!("expected header `{TABLE_HEADER}`, found {other:?}"))),
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let [label, m, a, t] = f[..] else {
                return Err(Error::Parse(format!("malformed table line `{line}`")));
            };
            Ok(TableRow { label: label.trim().to_string(), mbr: parse_f64(m)?, asas: parse_f64(a)?, tasas: parse_f64(t)? })
        })
        .collect()
}
