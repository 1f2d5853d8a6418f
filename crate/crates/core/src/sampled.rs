//! Sampled-surface text format.
//!
//! ```text
//! m 3
//! nx 65
//! ny 65
//! hx 0.03125
//! hy 0.03125
//! periodic_u 0
//! periodic_v 0
//! 0 0 -1 -1 0
//! 0 1 -1 -0.96875 0
//! ...
//! ```
//!
//! Header keys may come in any order, each exactly once. Data lines are
//! `i j phi_1 .. phi_m` with 0-based indices; every node must appear once.
//! Blank lines and lines starting with `#` are ignored. The chart origin is
//! (0, 0).

use std::io::BufRead;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::patch::ImmersionPatch;

const KEYS: [&str; 7] = ["m", "nx", "ny", "hx", "hy", "periodic_u", "periodic_v"];

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Reads a sampled surface and builds a finite-difference patch.
pub fn load_sampled_patch(reader: impl BufRead, name: &str) -> Result<ImmersionPatch> {
    let positions = read_positions(reader)?;
    ImmersionPatch::from_positions(name, positions)
}

/// Parses the format into a position field.
pub fn read_positions(reader: impl BufRead) -> Result<Field> {
    let mut header: [Option<f64>; 7] = [None; 7];
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| perr(lineno, e.to_string()))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut toks = t.split_whitespace();
        let first = toks.next().unwrap();
        if let Some(slot) = KEYS.iter().position(|k| *k == first) {
            if !rows.is_empty() {
                return Err(perr(lineno, format!("header key `{first}` after data")));
            }
            if header[slot].is_some() {
                return Err(perr(lineno, format!("duplicate header key `{first}`")));
            }
            let val = toks.next().ok_or_else(|| perr(lineno, format!("missing value for `{first}`")))?;
            if toks.next().is_some() {
                return Err(perr(lineno, format!("trailing tokens after `{first}`")));
            }
            let x: f64 = val.parse().map_err(|_| perr(lineno, format!("bad value `{val}` for `{first}`")))?;
            header[slot] = Some(x);
            continue;
        }
        if header.iter().any(Option::is_none) {
            let missing: Vec<&str> = KEYS.iter().zip(&header).filter(|(_, v)| v.is_none()).map(|(k, _)| *k).collect();
            return Err(perr(lineno, format!("malformed header: missing {}", missing.join(", "))));
        }
        let vals = t
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| perr(lineno, format!("bad number `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push((lineno, vals));
    }
    if header.iter().any(Option::is_none) {
        return Err(perr(0, "malformed header: incomplete"));
    }
    let h: Vec<f64> = header.iter().map(|x| x.unwrap()).collect();
    let as_count = |x: f64, key: &str| -> Result<usize> {
        if x.fract() != 0.0 || x < 0.0 {
            Err(perr(0, format!("`{key}` must be a non-negative integer")))
        } else {
            Ok(x as usize)
        }
    };
    let m = as_count(h[0], "m")?;
    let nx = as_count(h[1], "nx")?;
    let ny = as_count(h[2], "ny")?;
    let flag = |x: f64, key: &str| -> Result<bool> {
        match x {
            0.0 => Ok(false),
            1.0 => Ok(true),
            _ => Err(perr(0, format!("`{key}` must be 0 or 1"))),
        }
    };
    let periodic = [flag(h[5], "periodic_u")?, flag(h[6], "periodic_v")?];
    if !(3..=8).contains(&m) {
        return Err(Error::UnsupportedDimension(m));
    }
    if rows.len() != nx * ny {
        return Err(Error::RowCountMismatch { expected: nx * ny, found: rows.len() });
    }
    let grid = Grid::with_spacing(nx, ny, 0.0, 0.0, h[3], h[4], periodic)?;
    let mut field = Field::zeros(grid, m);
    let mut seen = vec![false; grid.len()];
    for (lineno, vals) in rows {
        if vals.len() != m + 2 {
            return Err(perr(lineno, format!("expected {} columns, found {}", m + 2, vals.len())));
        }
        let idx = |x: f64, n: usize| (x.fract() == 0.0 && x >= 0.0 && (x as usize) < n).then_some(x as usize);
        let (i, j) = match (idx(vals[0], nx), idx(vals[1], ny)) {
            (Some(i), Some(j)) => (i, j),
            _ => return Err(perr(lineno, "node index out of range")),
        };
        let k = grid.node(i, j);
        if seen[k] {
            return Err(perr(lineno, format!("duplicate node ({i}, {j})")));
        }
        seen[k] = true;
        if vals[2..].iter().any(|x| !x.is_finite()) {
            return Err(perr(lineno, "non-finite coordinate"));
        }
        field.at_mut(k).copy_from_slice(&vals[2..]);
    }
    Ok(field)
}

/// Serialises node positions in the sampled format (17 significant digits).
pub fn write_positions(positions: &Field) -> String {
    let g = positions.grid();
    let mut s = String::new();
    s.push_str(&format!("m {}\nnx {}\nny {}\n", positions.ncomp(), g.nx, g.ny));
    s.push_str(&format!("hx {:.16e}\nhy {:.16e}\n", g.hx, g.hy));
    s.push_str(&format!("periodic_u {}\nperiodic_v {}\n", g.periodic[0] as u8, g.periodic[1] as u8));
    for k in 0..g.len() {
        let (i, j) = g.ij(k);
        s.push_str(&format!("{i} {j}"));
        for x in positions.at(k) {
            s.push_str(&format!(" {x:.16e}"));
        }
        s.push('\n');
    }
    s
}
