//! Text companion format for spectral fields.
//!
//! ```text
//! # ptraj spectral-field format=1 N=<n> t=<time>
//! k1,k2,re_u1,im_u1,re_u2,im_u2
//! <one row per wavevector, storage order>
//! ```
//!
//! Numbers are written in shortest round-trip decimal, so reading a file back
//! reproduces the coefficients bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use super::{SpectralField, WavenumberGrid};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "# ptraj spectral-field";
const COLUMNS: &str = "k1,k2,re_u1,im_u1,re_u2,im_u2";

/// Renders `field` (optionally stamped with a time) in the text format.
pub fn to_csv_string(field: &SpectralField, t: Option<f64>) -> String {
    let grid = field.grid();
    let mut out = String::with_capacity(grid.len() * 64);
    write!(out, "{MAGIC} format={FORMAT_VERSION} N={}", grid.n()).unwrap();
    if let Some(t) = t {
        write!(out, " t={t}").unwrap();
    }
    out.push('\n');
    out.push_str(COLUMNS);
    out.push('\n');
    let (a, b) = (field.component(0), field.component(1));
    for i in 0..grid.len() {
        let [k1, k2] = grid.wavevector(i);
        writeln!(
            out,
            "{k1},{k2},{},{},{},{}",
            a[i].re, a[i].im, b[i].re, b[i].im
        )
        .unwrap();
    }
    out
}

pub fn write_field(path: &Path, field: &SpectralField, t: Option<f64>) -> Result<()> {
    fs::write(path, to_csv_string(field, t))?;
    Ok(())
}

/// Parses the text format; returns the field and its time stamp if present.
pub fn parse_csv(text: &str, path: &Path) -> Result<(SpectralField, Option<f64>)> {
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let rest = header
        .strip_prefix(MAGIC)
        .ok_or_else(|| bad("missing spectral-field header".into()))?;
    let (mut version, mut n, mut t) = (None, None, None);
    for tok in rest.split_whitespace() {
        match tok.split_once('=') {
            Some(("format", v)) => version = v.parse::<u32>().ok(),
            Some(("N", v)) => n = v.parse::<usize>().ok(),
            Some(("t", v)) => t = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            _ => return Err(bad(format!("unexpected header token `{tok}`"))),
        }
    }
    match version {
        Some(FORMAT_VERSION) => {}
        other => return Err(bad(format!("unsupported format version {other:?}"))),
    }
    let grid = WavenumberGrid::new(n.ok_or_else(|| bad("header lacks N".into()))?)?;
    if lines.next() != Some(COLUMNS) {
        return Err(bad("missing column header".into()));
    }
    let mut field = SpectralField::zeros(grid);
    let mut seen = 0usize;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(bad(format!("row {}: expected 6 columns", lineno + 3)));
        }
        let k1: i64 = cols[0].parse().map_err(|_| bad(format!("row {}: bad k1", lineno + 3)))?;
        let k2: i64 = cols[1].parse().map_err(|_| bad(format!("row {}: bad k2", lineno + 3)))?;
        let mut v = [0.0; 4];
        for (slot, s) in v.iter_mut().zip(&cols[2..]) {
            *slot = s
                .parse()
                .map_err(|_| bad(format!("row {}: bad number `{s}`", lineno + 3)))?;
        }
        field
            .set(
                [k1, k2],
                [Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3])],
            )
            .map_err(|e| bad(e.to_string()))?;
        seen += 1;
    }
    if seen != grid.len() {
        return Err(bad(format!("expected {} rows, found {seen}", grid.len())));
    }
    Ok((field, t))
}

pub fn read_field(path: &Path) -> Result<(SpectralField, Option<f64>)> {
    parse_csv(&fs::read_to_string(path)?, path)
}
