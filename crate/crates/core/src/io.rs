//! Plain CSV: one row per line, comma-separated decimals, no header.
//!
//! Values are written with Rust's shortest round-trip `f64` formatting, so a
//! write/read cycle reproduces every entry exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::dynamics::Trajectory;

pub fn format_rows<'a, I>(rows: I) -> String
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut out = String::new();
    for row in rows {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_rows(text: &str, path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|field| {
                field.trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("`{}`: {e}", field.trim()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn matrix_to_csv(m: &DenseMatrix) -> String {
    let rows = m.to_rows();
    format_rows(rows.iter().map(Vec::as_slice))
}

pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    write_text(path, &matrix_to_csv(m))
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let rows = parse_rows(&read_text(path)?, path)?;
    DenseMatrix::from_rows(&rows)
}

/// Single-column CSV.
pub fn write_column(path: &Path, values: &[f64]) -> Result<()> {
    write_text(path, &format_rows(values.iter().map(std::slice::from_ref)))
}

pub fn read_column(path: &Path) -> Result<Vec<f64>> {
    let rows = parse_rows(&read_text(path)?, path)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| match r.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected one value, found {}", r.len()),
            }),
        })
        .collect()
}

/// Single-line CSV of integer indices.
pub fn write_indices(path: &Path, indices: &[usize]) -> Result<()> {
    let line: Vec<String> = indices.iter().map(usize::to_string).collect();
    write_text(path, &format!("{}\n", line.join(",")))
}

pub fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    line.split(',')
        .filter(|f| !f.trim().is_empty())
        .map(|f| {
            f.trim().parse::<usize>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("`{}`: {e}", f.trim()),
            })
        })
        .collect()
}

/// Time in the first column, then one column per vector component.
pub fn series_to_csv(times: &[f64], values: &[DVector<f64>]) -> String {
    let rows: Vec<Vec<f64>> = times
        .iter()
        .zip(values)
        .map(|(&t, v)| std::iter::once(t).chain(v.iter().copied()).collect())
        .collect();
    format_rows(rows.iter().map(Vec::as_slice))
}

pub fn write_series(path: &Path, times: &[f64], values: &[DVector<f64>]) -> Result<()> {
    write_text(path, &series_to_csv(times, values))
}

pub fn read_series(path: &Path) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let rows = parse_rows(&read_text(path)?, path)?;
    let width = rows.first().map_or(0, Vec::len);
    if width < 2 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "expected a time column and at least one value column".into(),
        });
    }
    let mut times = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("{} columns, expected {width}", row.len()),
            });
        }
        times.push(row[0]);
        values.push(DVector::from_column_slice(&row[1..]));
    }
    Ok((times, values))
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    write_series(path, &traj.times, &traj.states)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let (times, states) = read_series(path)?;
    Trajectory::new(times, states)
}

/// `(time, value)` rows; `None` samples are written as `nan`.
pub fn write_scalar_series(path: &Path, times: &[f64], values: &[Option<f64>]) -> Result<()> {
    let mut out = String::new();
    for (t, v) in times.iter().zip(values) {
        match v {
            Some(v) => {
                let _ = writeln!(out, "{t},{v}");
            }
            None => {
                let _ = writeln!(out, "{t},nan");
            }
        }
    }
    write_text(path, &out)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Contract(format!("serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}
