//! Structured grids and per-node fields with validity masks.
//!
//! Node `(i, j)` (i along u, j along v) is stored at index `i * ny + j`.
//! Every [`Field`] carries a mask of nodes where its values are meaningful;
//! applying a stencil invalidates nodes whose stencil leaves the grid or
//! touches an invalid node, which is how margins grow through a derivative
//! chain.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub u0: f64,
    pub v0: f64,
    pub hx: f64,
    pub hy: f64,
    pub periodic: [bool; 2],
}

impl Grid {
    /// Grid over `[u0,u1] × [v0,v1]`. A periodic axis of n nodes covers the
    /// half-open interval with spacing L/n, a non-periodic one includes both
    /// end points.
    pub fn new(nx: usize, ny: usize, domain: [f64; 4], periodic: [bool; 2]) -> Result<Self> {
        let [u0, u1, v0, v1] = domain;
        if nx < 5 || ny < 5 {
            return Err(Error::InvalidParameter(format!("grid {nx}×{ny} too small (need ≥ 5 per axis)")));
        }
        if !(u1 > u0 && v1 > v0) || domain.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("invalid domain {domain:?}")));
        }
        let span = |n: usize, p: bool| if p { n as f64 } else { (n - 1) as f64 };
        Ok(Grid {
            nx,
            ny,
            u0,
            v0,
            hx: (u1 - u0) / span(nx, periodic[0]),
            hy: (v1 - v0) / span(ny, periodic[1]),
            periodic,
        })
    }

    pub fn with_spacing(nx: usize, ny: usize, u0: f64, v0: f64, hx: f64, hy: f64, periodic: [bool; 2]) -> Result<Self> {
        if nx < 5 || ny < 5 {
            return Err(Error::InvalidParameter(format!("grid {nx}×{ny} too small (need ≥ 5 per axis)")));
        }
        if !(hx > 0.0 && hy > 0.0 && hx.is_finite() && hy.is_finite()) {
            return Err(Error::InvalidParameter(format!("invalid spacing {hx}, {hy}")));
        }
        Ok(Grid { nx, ny, u0, v0, hx, hy, periodic })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k / self.ny, k % self.ny)
    }

    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.ij(k);
        (self.u0 + i as f64 * self.hx, self.v0 + j as f64 * self.hy)
    }

    pub fn size(&self, axis: usize) -> usize {
        if axis == 0 {
            self.nx
        } else {
            self.ny
        }
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.hx
        } else {
            self.hy
        }
    }

    /// Upper domain bound along an axis (exclusive for periodic axes).
    pub fn upper(&self, axis: usize) -> f64 {
        let n = self.size(axis) as f64;
        let n = if self.periodic[axis] { n } else { n - 1.0 };
        if axis == 0 {
            self.u0 + n * self.hx
        } else {
            self.v0 + n * self.hy
        }
    }

    /// Neighbour of node `k` shifted by `d` along `axis`, wrapping if periodic.
    pub fn offset(&self, k: usize, axis: usize, d: isize) -> Option<usize> {
        let (i, j) = self.ij(k);
        let (idx, n) = if axis == 0 { (i, self.nx) } else { (j, self.ny) };
        let t = idx as isize + d;
        let t = if self.periodic[axis] {
            t.rem_euclid(n as isize) as usize
        } else if t < 0 || t >= n as isize {
            return None;
        } else {
            t as usize
        };
        Some(if axis == 0 { self.node(t, j) } else { self.node(i, t) })
    }

    /// Index of node `k` along `axis`.
    pub fn index(&self, k: usize, axis: usize) -> usize {
        let (i, j) = self.ij(k);
        if axis == 0 {
            i
        } else {
            j
        }
    }

    /// Distance (in nodes) from `k` to the nearest non-periodic edge.
    pub fn edge_distance(&self, k: usize) -> usize {
        let (i, j) = self.ij(k);
        let mut d = usize::MAX;
        if !self.periodic[0] {
            d = d.min(i).min(self.nx - 1 - i);
        }
        if !self.periodic[1] {
            d = d.min(j).min(self.ny - 1 - j);
        }
        d
    }

    pub fn center_node(&self) -> usize {
        self.node(self.nx / 2, self.ny / 2)
    }

    /// Mask of nodes at distance ≥ `margin` from every non-periodic edge.
    pub fn interior_mask(&self, margin: usize) -> Vec<bool> {
        (0..self.len()).map(|k| self.edge_distance(k) >= margin).collect()
    }

    pub fn fully_periodic(&self) -> bool {
        self.periodic[0] && self.periodic[1]
    }
}

const D1_OFF: [isize; 4] = [-2, -1, 1, 2];
const D1_W: [f64; 4] = [1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0];
const D2_OFF: [isize; 5] = [-2, -1, 0, 1, 2];
const D2_W: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];

/// Stencil (offsets, weights) for a derivative of the given order at index `i`
/// of an axis with `n` nodes. Interior nodes get 4th-order centred weights;
/// with `edges` the two outer layers of a non-periodic axis get 2nd-order
/// (one-sided at the end nodes), otherwise `None`.
fn stencil(order: usize, i: usize, n: usize, periodic: bool, edges: bool) -> Option<(&'static [isize], &'static [f64])> {
    let interior = periodic || (i >= 2 && i + 2 < n);
    if interior {
        return Some(if order == 1 { (&D1_OFF, &D1_W) } else { (&D2_OFF, &D2_W) });
    }
    if !edges {
        return None;
    }
    Some(match (order, i) {
        (1, 0) => (&[0, 1, 2], &[-1.5, 2.0, -0.5]),
        (1, _) if i + 1 == n => (&[0, -1, -2], &[1.5, -2.0, 0.5]),
        (1, _) => (&[-1, 1], &[-0.5, 0.5]),
        (_, 0) => (&[0, 1, 2, 3], &[2.0, -5.0, 4.0, -1.0]),
        (_, _) if i + 1 == n => (&[0, -1, -2, -3], &[2.0, -5.0, 4.0, -1.0]),
        _ => (&[-1, 0, 1], &[1.0, -2.0, 1.0]),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    ncomp: usize,
    data: Vec<f64>,
    valid: Vec<bool>,
}

impl Field {
    pub fn zeros(grid: Grid, ncomp: usize) -> Self {
        Field { grid, ncomp, data: vec![0.0; grid.len() * ncomp], valid: vec![true; grid.len()] }
    }

    pub fn from_fn(grid: Grid, ncomp: usize, mut f: impl FnMut(f64, f64, &mut [f64])) -> Self {
        let mut out = Self::zeros(grid, ncomp);
        for k in 0..grid.len() {
            let (u, v) = grid.coords(k);
            f(u, v, out.at_mut(k));
        }
        out
    }

    pub fn from_data(grid: Grid, ncomp: usize, data: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if data.len() != grid.len() * ncomp || valid.len() != grid.len() {
            return Err(Error::Validation("field data does not match grid".into()));
        }
        Ok(Field { grid, ncomp, data, valid })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.data[k * self.ncomp..(k + 1) * self.ncomp]
    }

    pub fn at_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.ncomp..(k + 1) * self.ncomp]
    }

    pub fn is_valid(&self, k: usize) -> bool {
        self.valid[k]
    }

    pub fn set_valid(&mut self, k: usize, v: bool) {
        self.valid[k] = v;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn valid_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.grid.len()).filter(move |&k| self.valid[k])
    }

    /// Same values with the mask intersected with `mask`; dropped nodes are zeroed.
    pub fn restrict(&self, mask: &[bool]) -> Field {
        let mut out = self.clone();
        for k in 0..self.grid.len() {
            if !mask[k] {
                out.valid[k] = false;
            }
            if !out.valid[k] {
                out.at_mut(k).iter_mut().for_each(|x| *x = 0.0);
            }
        }
        out
    }

    /// Node-wise combination of several fields; the output mask is the
    /// intersection of the input masks and `f` only runs on valid nodes.
    pub fn combine(inputs: &[&Field], ncomp: usize, mut f: impl FnMut(usize, &[&[f64]], &mut [f64])) -> Field {
        let grid = *inputs[0].grid();
        let mut out = Field::zeros(grid, ncomp);
        let mut args: Vec<&[f64]> = Vec::with_capacity(inputs.len());
        for k in 0..grid.len() {
            if !inputs.iter().all(|x| x.valid[k]) {
                out.valid[k] = false;
                continue;
            }
            args.clear();
            args.extend(inputs.iter().map(|x| x.at(k)));
            f(k, &args, &mut out.data[k * ncomp..(k + 1) * ncomp]);
        }
        out
    }

    pub fn map(&self, ncomp: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Field {
        Field::combine(&[self], ncomp, |_, a, o| f(a[0], o))
    }

    pub fn component(&self, c: usize) -> Field {
        self.map(1, |a, o| o[0] = a[c])
    }

    /// Stacks single-component fields (or any fields) into one field.
    pub fn stack(parts: &[&Field]) -> Field {
        let n: usize = parts.iter().map(|p| p.ncomp).sum();
        Field::combine(parts, n, |_, a, o| {
            let mut c = 0;
            for p in a {
                o[c..c + p.len()].copy_from_slice(p);
                c += p.len();
            }
        })
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(self.ncomp, |a, o| o.iter_mut().zip(a).for_each(|(o, a)| *o = s * a))
    }

    pub fn add(&self, other: &Field) -> Field {
        assert_eq!(self.ncomp, other.ncomp, "component count mismatch");
        Field::combine(&[self, other], self.ncomp, |_, a, o| {
            for c in 0..o.len() {
                o[c] = a[0][c] + a[1][c];
            }
        })
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.add(&other.scale(-1.0))
    }

    /// Largest Euclidean norm of the per-node vector over valid nodes.
    pub fn sup_norm(&self) -> f64 {
        self.valid_nodes()
            .map(|k| self.at(k).iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn has_non_finite(&self) -> bool {
        self.valid_nodes().any(|k| self.at(k).iter().any(|x| !x.is_finite()))
    }

    fn apply_stencil(&self, axis: usize, order: usize, edges: bool) -> Field {
        let g = self.grid;
        let n = g.size(axis);
        let h = g.spacing(axis).powi(order as i32);
        let mut out = Field::zeros(g, self.ncomp);
        for k in 0..g.len() {
            let i = g.index(k, axis);
            let st = stencil(order, i, n, g.periodic[axis], edges);
            let mut ok = self.valid[k];
            let mut acc = vec![0.0; self.ncomp];
            if let Some((off, w)) = st {
                for (&d, &wt) in off.iter().zip(w) {
                    match g.offset(k, axis, d) {
                        Some(q) if self.valid[q] => {
                            for (a, x) in acc.iter_mut().zip(self.at(q)) {
                                *a += wt * x;
                            }
                        }
                        _ => ok = false,
                    }
                }
            } else {
                ok = false;
            }
            if ok {
                for (o, a) in out.at_mut(k).iter_mut().zip(&acc) {
                    *o = a / h;
                }
            } else {
                out.valid[k] = false;
            }
        }
        out
    }

    /// 4th-order centred first derivative along `axis`; nodes whose stencil
    /// is incomplete become invalid.
    pub fn diff(&self, axis: usize) -> Field {
        self.apply_stencil(axis, 1, false)
    }

    /// First derivative keeping the outer layers with reduced-order stencils.
    pub fn diff_with_edges(&self, axis: usize) -> Field {
        self.apply_stencil(axis, 1, true)
    }

    /// Second derivative keeping the outer layers with reduced-order stencils.
    pub fn diff2_with_edges(&self, axis: usize) -> Field {
        self.apply_stencil(axis, 2, true)
    }

    /// Bilinear interpolation at (u, v); `None` if the enclosing cell leaves
    /// the grid or has an invalid corner.
    pub fn interpolate(&self, u: f64, v: f64) -> Option<Vec<f64>> {
        let g = &self.grid;
        let locate = |x: f64, x0: f64, h: f64, n: usize, p: bool| -> Option<(usize, usize, f64)> {
            let s = (x - x0) / h;
            let f = s.floor();
            let t = s - f;
            let i = f as isize;
            if p {
                let n = n as isize;
                Some((i.rem_euclid(n) as usize, (i + 1).rem_euclid(n) as usize, t))
            } else if i < 0 || i as usize >= n {
                None
            } else if i as usize == n - 1 {
                // exactly on the last node line
                (t < 1e-12).then_some((n - 1, n - 1, 0.0))
            } else {
                Some((i as usize, i as usize + 1, t))
            }
        };
        let (i0, i1, tx) = locate(u, g.u0, g.hx, g.nx, g.periodic[0])?;
        let (j0, j1, ty) = locate(v, g.v0, g.hy, g.ny, g.periodic[1])?;
        let corners = [
            (g.node(i0, j0), (1.0 - tx) * (1.0 - ty)),
            (g.node(i1, j0), tx * (1.0 - ty)),
            (g.node(i0, j1), (1.0 - tx) * ty),
            (g.node(i1, j1), tx * ty),
        ];
        let mut out = vec![0.0; self.ncomp];
        for (k, w) in corners {
            if !self.valid[k] {
                return None;
            }
            for (o, x) in out.iter_mut().zip(self.at(k)) {
                *o += w * x;
            }
        }
        Some(out)
    }
}

/// Intersection of masks.
pub fn mask_and(a: &[bool], b: &[bool]) -> Vec<bool> {
    a.iter().zip(b).map(|(x, y)| *x && *y).collect()
}
