//! Plain-text field files.
//!
//! ```text
//! # homog-field v1
//! dim 2
//! grid 32
//! 1 0 3.5e-1 1e-1
//! -1 0 3.5e-1 -1e-1
//! ```
//!
//! After the header each line holds a wave vector followed by the real and
//! imaginary part of its coefficient. Absent modes are zero.

use std::io::{BufRead, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;

use crate::error::{HomogError, Result};
use crate::field::TorusField;
use crate::grid::Grid;

pub const FIELD_MAGIC: &str = "# homog-field v1";

pub fn write_field<W: Write>(field: &TorusField, mut out: W) -> Result<()> {
    let grid = field.grid();
    writeln!(out, "{FIELD_MAGIC}")?;
    writeln!(out, "dim {}", grid.dim())?;
    writeln!(out, "grid {}", grid.n())?;
    for (flat, c) in field.coeffs().iter().enumerate() {
        if *c == Complex64::new(0.0, 0.0) {
            continue;
        }
        let Some(k) = grid.wavevector(flat) else { continue };
        let ks: Vec<String> = k[..grid.dim()].iter().map(|v| v.to_string()).collect();
        writeln!(out, "{} {:e} {:e}", ks.join(" "), c.re, c.im)?;
    }
    Ok(())
}

pub fn save_field(field: &TorusField, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_field(field, &mut w)?;
    w.flush()?;
    Ok(())
}

fn header_value(line: Option<std::io::Result<String>>, key: &str) -> Result<usize> {
    let line = line.ok_or_else(|| HomogError::Parse(format!("missing `{key}` line")))??;
    let mut parts = line.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(k), Some(v), None) if k == key => v
            .parse()
            .map_err(|_| HomogError::Parse(format!("bad `{key}` value `{v}`"))),
        _ => Err(HomogError::Parse(format!("expected `{key} <n>`, got `{line}`"))),
    }
}

pub fn read_field<R: BufRead>(input: R) -> Result<TorusField> {
    let mut lines = input.lines();
    let magic = lines
        .next()
        .ok_or_else(|| HomogError::Parse("empty field file".into()))??;
    if magic.trim() != FIELD_MAGIC {
        return Err(HomogError::Parse(format!("not a field file: `{magic}`")));
    }
    let dim = header_value(lines.next(), "dim")?;
    let n = header_value(lines.next(), "grid")?;
    let grid = Grid::new(dim, n)?;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != dim + 2 {
            return Err(HomogError::Parse(format!(
                "line {}: expected {} columns, got {}",
                lineno + 4,
                dim + 2,
                parts.len()
            )));
        }
        let bad = |s: &str| HomogError::Parse(format!("line {}: bad number `{s}`", lineno + 4));
        let k = parts[..dim]
            .iter()
            .map(|s| s.parse::<i64>().map_err(|_| bad(s)))
            .collect::<Result<Vec<_>>>()?;
        let re: f64 = parts[dim].parse().map_err(|_| bad(parts[dim]))?;
        let im: f64 = parts[dim + 1].parse().map_err(|_| bad(parts[dim + 1]))?;
        let idx = grid.index_of(&k).ok_or_else(|| {
            HomogError::Parse(format!("mode {k:?} does not fit a grid of {n} points"))
        })?;
        coeffs[idx] = Complex64::new(re, im);
    }
    TorusField::from_coeffs(grid, coeffs)
}

pub fn load_field(path: &Path) -> Result<TorusField> {
    let file = std::fs::File::open(path)?;
    read_field(std::io::BufReader::new(file))
}
