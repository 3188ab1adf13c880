//! CSV and JSON writers. Floats are written in full double precision
//! scientific notation so files round-trip bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::analysis::{JointSpectralAmplitude, JointTemporalAmplitude};
use crate::error::Result;
use crate::lingrid::SpectralField;

/// Column order of every CSV this module writes.
pub const FIELD_COLUMNS: [&str; 4] = ["k", "mode", "re", "im"];
pub const JSA_COLUMNS: [&str; 4] = ["k_signal", "k_idler", "re", "im"];
pub const JTA_COLUMNS: [&str; 4] = ["t_signal", "t_idler", "re", "im"];

pub fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

/// One table cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_field(path: &Path, field: &SpectralField) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(FIELD_COLUMNS)?;
    for (m, label) in field.labels.iter().enumerate() {
        for a in 0..field.grid.n_points {
            let z = field.amplitudes[(m, a)];
            w.write_record([fmt(field.grid.value(a)), label.clone(), fmt(z.re), fmt(z.im)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsa(path: &Path, jsa: &JointSpectralAmplitude) -> Result<()> {
    let ks = jsa.grid.values();
    write_grid(path, JSA_COLUMNS, &ks, &ks, |a, b| jsa.values[(a, b)])
}

pub fn write_jta(path: &Path, jta: &JointTemporalAmplitude) -> Result<()> {
    write_grid(path, JTA_COLUMNS, &jta.t_signal, &jta.t_idler, |a, b| jta.values[(a, b)])
}

fn write_grid(
    path: &Path,
    header: [&str; 4],
    rows: &[f64],
    cols: &[f64],
    value: impl Fn(usize, usize) -> crate::linalg::C64,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for (a, &x) in rows.iter().enumerate() {
        for (b, &y) in cols.iter().enumerate() {
            let z = value(a, b);
            w.write_record([fmt(x), fmt(y), fmt(z.re), fmt(z.im)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for x in [0.1, -1.0 / 3.0, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(fmt(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn empty_cell_for_missing_value() {
        assert_eq!(Cell::from(None::<f64>).render(), "");
        assert_eq!(Cell::from(3usize).render(), "3");
    }
}
