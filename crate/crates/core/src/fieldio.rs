//! CSV dumps of grid fields.
//!
//! Scalar fields: `i,j,z1,z2,value`; vector fields: `i,j,z1,z2,v1,v2`; one row
//! per node in storage order (axis 1 fastest), 17 significant digits.
//! Marginals: `axis,index,z,value`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{RcGrid, ScalarField, VectorField};

pub const SCALAR_HEADER: &str = "i,j,z1,z2,value";
pub const VECTOR_HEADER: &str = "i,j,z1,z2,v1,v2";
pub const MARGINAL_HEADER: &str = "axis,index,z,value";

/// Fixed 17-significant-digit formatting used by every numeric CSV column.
#[inline]
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub fn scalar_to_csv(f: &ScalarField) -> String {
    let g = f.grid();
    let mut s = String::with_capacity(g.len() * 96);
    s.push_str(SCALAR_HEADER);
    s.push('\n');
    for k in 0..g.len() {
        let (i, j) = g.unravel(k);
        let (z1, z2) = g.node(i, j);
        let _ = writeln!(
            s,
            "{i},{j},{},{},{}",
            fmt17(z1),
            fmt17(z2),
            fmt17(f.values()[k])
        );
    }
    s
}

pub fn vector_to_csv(v: &VectorField) -> String {
    let g = v.grid();
    let mut s = String::with_capacity(g.len() * 120);
    s.push_str(VECTOR_HEADER);
    s.push('\n');
    for k in 0..g.len() {
        let (i, j) = g.unravel(k);
        let (z1, z2) = g.node(i, j);
        let _ = writeln!(
            s,
            "{i},{j},{},{},{},{}",
            fmt17(z1),
            fmt17(z2),
            fmt17(v.comp1()[k]),
            fmt17(v.comp2()[k])
        );
    }
    s
}

pub fn marginals_to_csv(grid: &RcGrid, m1: &[f64], m2: &[f64]) -> String {
    let mut s = String::new();
    s.push_str(MARGINAL_HEADER);
    s.push('\n');
    for (i, v) in m1.iter().enumerate() {
        let _ = writeln!(s, "1,{i},{},{}", fmt17(grid.node(i, 0).0), fmt17(*v));
    }
    for (j, v) in m2.iter().enumerate() {
        let _ = writeln!(s, "2,{j},{},{}", fmt17(grid.node(0, j).1), fmt17(*v));
    }
    s
}

struct Rows {
    grid: RcGrid,
    cols: Vec<Vec<f64>>,
}

/// Parse a node table with `extra` value columns after `i,j,z1,z2`. The grid
/// shape comes from the largest indices and the spacing from the node
/// coordinates.
fn parse_rows(text: &str, header: &str, extra: usize, origin: &Path) -> Result<Rows> {
    let err = |line: usize, message: String| Error::Csv {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => return Err(err(1, format!("expected header `{header}`"))),
    }
    let mut rows: Vec<(usize, usize, f64, f64, Vec<f64>)> = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 + extra {
            return Err(err(
                ln + 1,
                format!("expected {} columns, got {}", 4 + extra, cols.len()),
            ));
        }
        let pi = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| err(ln + 1, format!("`{s}`: {e}")))
        };
        let pf = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| err(ln + 1, format!("`{s}`: {e}")))
        };
        let vals = cols[4..]
            .iter()
            .map(|c| pf(c))
            .collect::<Result<Vec<_>>>()?;
        rows.push((pi(cols[0])?, pi(cols[1])?, pf(cols[2])?, pf(cols[3])?, vals));
    }
    let n1 = rows.iter().map(|r| r.0).max().map_or(0, |m| m + 1);
    let n2 = rows.iter().map(|r| r.1).max().map_or(0, |m| m + 1);
    if rows.len() != n1 * n2 {
        return Err(err(
            0,
            format!("{} rows do not fill a {n1}x{n2} grid", rows.len()),
        ));
    }
    let h1 = rows
        .iter()
        .find(|r| r.0 == 1)
        .map(|r| r.2)
        .unwrap_or(f64::NAN);
    let h2 = rows
        .iter()
        .find(|r| r.1 == 1)
        .map(|r| r.3)
        .unwrap_or(f64::NAN);
    let grid =
        RcGrid::new(n1, n2, h1 * n1 as f64, h2 * n2 as f64).map_err(|e| err(0, e.to_string()))?;
    let mut cols = vec![vec![f64::NAN; grid.len()]; extra];
    let mut seen = vec![false; grid.len()];
    for (i, j, _, _, vals) in rows {
        let k = grid.index(i, j);
        if seen[k] {
            return Err(err(0, format!("node ({i},{j}) appears twice")));
        }
        seen[k] = true;
        for (c, v) in cols.iter_mut().zip(vals) {
            c[k] = v;
        }
    }
    Ok(Rows { grid, cols })
}

pub fn scalar_from_csv(text: &str, origin: &Path) -> Result<ScalarField> {
    let mut rows = parse_rows(text, SCALAR_HEADER, 1, origin)?;
    ScalarField::new(rows.grid, rows.cols.remove(0))
}

pub fn vector_from_csv(text: &str, origin: &Path) -> Result<VectorField> {
    let mut rows = parse_rows(text, VECTOR_HEADER, 2, origin)?;
    let c2 = rows.cols.remove(1);
    let c1 = rows.cols.remove(0);
    VectorField::new(rows.grid, c1, c2)
}

pub fn read_scalar(path: &Path) -> Result<ScalarField> {
    scalar_from_csv(&std::fs::read_to_string(path)?, path)
}

pub fn read_vector(path: &Path) -> Result<VectorField> {
    vector_from_csv(&std::fs::read_to_string(path)?, path)
}
