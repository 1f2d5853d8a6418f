//! Metric-weighted Poisson problems and flat potential recovery.
//!
//! The operator −∂_j(a^{jk}∂_k u), a = |g|^{1/2}g^{jk}, is discretised on a
//! compact 9-point stencil: half-node averages for the a¹¹/a²² fluxes and
//! centred differences for the mixed terms ∂₁(a¹²∂₂u) + ∂₂(a¹²∂₁u). The
//! resulting matrix is symmetric by construction and solved by Jacobi-
//! preconditioned conjugate gradients.

use crate::error::{Error, Result};
use crate::geometry::GeometryCache;
use crate::grid::{Field, Grid};

pub const TOLERANCE: f64 = 1e-10;
/// Relative compatibility defect above which a recovered potential is flagged.
pub const COMPAT_WARN: f64 = 1e-2;

/// Sparse symmetric matrix in compressed-row form over the unknown nodes.
#[derive(Clone, Debug)]
pub struct WeightedLaplacian {
    /// node → unknown index
    index: Vec<Option<usize>>,
    /// unknown index → node
    nodes: Vec<usize>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
    pinned: Option<usize>,
}

impl WeightedLaplacian {
    /// Assembles −∂_j(a^{jk}∂_k ·) on `domain`. Unknowns are the domain nodes
    /// whose full 3×3 neighbourhood lies in the domain; the remaining domain
    /// nodes carry homogeneous Dirichlet data. Without any such boundary
    /// (fully periodic charts) the node nearest the centre is pinned.
    pub fn assemble(coeff: &Field, domain: &[bool]) -> Result<Self> {
        let grid = *coeff.grid();
        if coeff.ncomp() != 3 {
            return Err(Error::DimensionMismatch(3, coeff.ncomp()));
        }
        let nb = |k: usize, di: isize, dj: isize| -> Option<usize> {
            let a = grid.offset(k, 0, di)?;
            grid.offset(a, 1, dj)
        };
        let interior = |k: usize| -> bool {
            domain[k]
                && (-1..=1).all(|di| (-1..=1).all(|dj| nb(k, di, dj).is_some_and(|q| domain[q] && coeff.is_valid(q))))
        };
        let mut index = vec![None; grid.len()];
        let mut nodes = Vec::new();
        for k in 0..grid.len() {
            if interior(k) {
                index[k] = Some(nodes.len());
                nodes.push(k);
            }
        }
        let boundary = (0..grid.len()).any(|k| domain[k] && index[k].is_none());
        let mut pinned = None;
        if !boundary && !nodes.is_empty() {
            let c = grid.center_node();
            let p = *nodes.iter().min_by_key(|&&k| node_distance(&grid, k, c)).unwrap();
            pinned = Some(p);
            index[p] = None;
            nodes.retain(|&k| k != p);
            for (i, &k) in nodes.iter().enumerate() {
                index[k] = Some(i);
            }
        }
        let (h1, h2) = (grid.hx, grid.hy);
        let a = |k: usize, c: usize| coeff.at(k)[c];
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag = Vec::with_capacity(nodes.len());
        for &k in &nodes {
            let mut entries: Vec<(usize, f64)> = Vec::with_capacity(9);
            let e = nb(k, 1, 0).unwrap();
            let w = nb(k, -1, 0).unwrap();
            let n = nb(k, 0, 1).unwrap();
            let s = nb(k, 0, -1).unwrap();
            let ae = 0.5 * (a(k, 0) + a(e, 0)) / (h1 * h1);
            let aw = 0.5 * (a(k, 0) + a(w, 0)) / (h1 * h1);
            let an = 0.5 * (a(k, 2) + a(n, 2)) / (h2 * h2);
            let as_ = 0.5 * (a(k, 2) + a(s, 2)) / (h2 * h2);
            entries.push((k, ae + aw + an + as_));
            entries.push((e, -ae));
            entries.push((w, -aw));
            entries.push((n, -an));
            entries.push((s, -as_));
            for (di, dj) in [(1isize, 1isize), (1, -1), (-1, 1), (-1, -1)] {
                let q = nb(k, di, dj).unwrap();
                let c = (a(nb(k, di, 0).unwrap(), 1) + a(nb(k, 0, dj).unwrap(), 1)) / (4.0 * h1 * h2);
                entries.push((q, -(di * dj) as f64 * c));
            }
            let mut d = 0.0;
            for (q, v) in entries {
                if q == k {
                    d += v;
                    continue;
                }
                if let Some(c) = index[q] {
                    cols.push(c);
                    vals.push(v);
                }
            }
            diag.push(d);
            row_ptr.push(cols.len());
        }
        Ok(WeightedLaplacian { index, nodes, row_ptr, cols, vals, diag, pinned })
    }

    pub fn unknowns(&self) -> usize {
        self.nodes.len()
    }

    pub fn pinned(&self) -> Option<usize> {
        self.pinned
    }

    pub fn unknown_of(&self, node: usize) -> Option<usize> {
        self.index[node]
    }

    /// Matrix entry (row, col) in unknown numbering.
    pub fn entry(&self, r: usize, c: usize) -> f64 {
        let mut v = if r == c { self.diag[r] } else { 0.0 };
        for p in self.row_ptr[r]..self.row_ptr[r + 1] {
            if self.cols[p] == c {
                v += self.vals[p];
            }
        }
        v
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.nodes.len() {
            let mut acc = self.diag[r] * x[r];
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[p] * x[self.cols[p]];
            }
            y[r] = acc;
        }
    }

    /// Solves A x = b by Jacobi-PCG; returns (x, relative residual, iterations).
    pub fn solve(&self, b: &[f64], stage: &str) -> Result<(Vec<f64>, f64, usize)> {
        pcg(|x, y| self.apply(x, y), &self.diag, b, stage)
    }
}

fn node_distance(g: &Grid, a: usize, b: usize) -> usize {
    let (i, j) = g.ij(a);
    let (p, q) = g.ij(b);
    i.abs_diff(p).pow(2) + j.abs_diff(q).pow(2)
}

/// Preconditioned conjugate gradients with a diagonal preconditioner.
pub fn pcg(apply: impl Fn(&[f64], &mut [f64]), diag: &[f64], b: &[f64], stage: &str) -> Result<(Vec<f64>, f64, usize)> {
    let n = b.len();
    let bnorm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !bnorm.is_finite() {
        return Err(Error::NonFinite(format!("right-hand side of {stage}")));
    }
    let mut x = vec![0.0; n];
    if bnorm == 0.0 || n == 0 {
        return Ok((x, 0.0, 0));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let cap = 20 * n.max(1);
    let mut res = 1.0;
    for it in 1..=cap {
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::SolverFailure { stage: stage.into(), residual: res, iterations: it });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = r.iter().map(|x| x * x).sum::<f64>().sqrt() / bnorm;
        if res <= TOLERANCE {
            // confirm with the true residual
            apply(&x, &mut ap);
            let tr = b.iter().zip(&ap).map(|(b, a)| (b - a).powi(2)).sum::<f64>().sqrt() / bnorm;
            if tr <= 10.0 * TOLERANCE {
                return Ok((x, tr, it));
            }
            r = b.iter().zip(&ap).map(|(b, a)| b - a).collect();
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverFailure { stage: stage.into(), residual: res, iterations: cap })
}

/// Result of a weighted Poisson solve.
#[derive(Clone, Debug)]
pub struct PoissonSolution {
    pub u: Field,
    /// Largest relative algebraic residual over components.
    pub residual: f64,
    pub iterations: usize,
    /// Relative size of the mean removed from the right-hand side when the
    /// problem has no Dirichlet boundary (0 otherwise).
    pub compatibility: f64,
}

/// Solves ∂_j(a^{jk}∂_k u) = |g|^{1/2}·rhs with u = 0 on the boundary of the
/// valid region of `rhs`, componentwise.
pub fn solve_weighted_poisson(cache: &GeometryCache, rhs: &Field, stage: &str) -> Result<PoissonSolution> {
    let domain: Vec<bool> = (0..rhs.grid().len()).map(|k| rhs.is_valid(k) && cache.mask()[k]).collect();
    solve_with_coeff(cache.weight(), cache.sqrt_det(), rhs, &domain, stage)
}

/// Poisson solve with an explicit coefficient field `a` and density `w`
/// (the right-hand side is w·rhs).
pub fn solve_with_coeff(coeff: &Field, density: &Field, rhs: &Field, domain: &[bool], stage: &str) -> Result<PoissonSolution> {
    if rhs.has_non_finite() {
        return Err(Error::NonFinite(format!("right-hand side of {stage}")));
    }
    let op = WeightedLaplacian::assemble(coeff, domain)?;
    let grid = *rhs.grid();
    let nc = rhs.ncomp();
    let mut u = Field::zeros(grid, nc).restrict(domain);
    let (mut worst, mut iters, mut compat) = (0.0f64, 0usize, 0.0f64);
    for c in 0..nc {
        // A = −L, so A u = −w·f
        let mut b: Vec<f64> = op.nodes.iter().map(|&k| -density.at(k)[0] * rhs.at(k)[c]).collect();
        if let Some(p) = op.pinned {
            // singular (periodic) problem: project out the constant mode
            let full = b.len() as f64 + 1.0;
            let pin_val = -density.at(p)[0] * rhs.at(p)[c];
            let mean = (b.iter().sum::<f64>() + pin_val) / full;
            let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            compat = compat.max(mean.abs() * full.sqrt() / norm);
            b.iter_mut().for_each(|x| *x -= mean);
        }
        let (x, res, it) = op.solve(&b, stage)?;
        worst = worst.max(res);
        iters = iters.max(it);
        for (i, &k) in op.nodes.iter().enumerate() {
            u.at_mut(k)[c] = x[i];
        }
    }
    Ok(PoissonSolution { u, residual: worst, iterations: iters, compatibility: compat })
}

/// |g|^{1/2}Δ_g f = ∂_j(a^{jk}∂_k f), 4th-order stencils.
pub fn weighted_laplacian(cache: &GeometryCache, f: &Field) -> Field {
    let d = [f.diff(0), f.diff(1)];
    let n = f.ncomp();
    let flux = |j: usize| {
        Field::combine(&[cache.weight(), &d[0], &d[1]], n, |_, x, o| {
            let a = x[0];
            let (c0, c1) = if j == 0 { (a[0], a[1]) } else { (a[1], a[2]) };
            for c in 0..n {
                o[c] = c0 * x[1][c] + c1 * x[2][c];
            }
        })
    };
    flux(0).diff(0).add(&flux(1).diff(1))
}

/// Compact solve followed by defect-correction sweeps against the
/// 4th-order operator [`weighted_laplacian`] wherever that operator is
/// defined (nodes near the boundary keep the compact equation).
pub fn solve_refined(cache: &GeometryCache, rhs: &Field, stage: &str) -> Result<PoissonSolution> {
    let domain: Vec<bool> = (0..rhs.grid().len()).map(|k| rhs.is_valid(k) && cache.mask()[k]).collect();
    let mut sol = solve_with_coeff(cache.weight(), cache.sqrt_det(), rhs, &domain, stage)?;
    if sol.compatibility > 0.0 || REFINE_SWEEPS == 0 {
        return Ok(sol);
    }
    let op = WeightedLaplacian::assemble(cache.weight(), &domain)?;
    let target = crate::fieldops::scale_by(cache.sqrt_det(), rhs);
    for _ in 0..REFINE_SWEEPS {
        let defect = weighted_laplacian(cache, &sol.u).sub(&target);
        for c in 0..rhs.ncomp() {
            let b: Vec<f64> = op.nodes.iter().map(|&k| if defect.is_valid(k) { defect.at(k)[c] } else { 0.0 }).collect();
            let (x, res, it) = op.solve(&b, stage)?;
            sol.residual = sol.residual.max(res);
            sol.iterations = sol.iterations.max(it);
            for (i, &k) in op.nodes.iter().enumerate() {
                sol.u.at_mut(k)[c] += x[i];
            }
        }
    }
    Ok(sol)
}

pub const REFINE_SWEEPS: usize = 3;

/// Result of recovering u from ∂_k u ≈ P_k.
#[derive(Clone, Debug)]
pub struct RecoveredPotential {
    pub u: Field,
    /// ‖D⁺u − P‖/‖P‖ on edges, per component.
    pub defect: Vec<f64>,
    /// Largest discrete cell circulation of P divided by the cell area.
    pub max_curl: f64,
    pub warning: Option<String>,
}

/// Least-squares potential of a flat covector field P = (P₁, P₂) (each with
/// any number of components) on the edges between valid nodes, normalised
/// to vanish at `gauge` (or the valid node nearest to it).
pub fn recover_scalar_potential(p: [&Field; 2], gauge: usize) -> Result<RecoveredPotential> {
    let grid = *p[0].grid();
    let nc = p[0].ncomp();
    if p[1].ncomp() != nc {
        return Err(Error::DimensionMismatch(nc, p[1].ncomp()));
    }
    if p[0].has_non_finite() || p[1].has_non_finite() {
        return Err(Error::NonFinite("gradient field".into()));
    }
    let valid: Vec<bool> = (0..grid.len()).map(|k| p[0].is_valid(k) && p[1].is_valid(k)).collect();
    let hs = [grid.hx, grid.hy];
    let ce = grid.hx * grid.hy;
    // edges (a, b, axis)
    let mut edges = Vec::new();
    for k in 0..grid.len() {
        if !valid[k] {
            continue;
        }
        for ax in 0..2 {
            if let Some(q) = grid.offset(k, ax, 1) {
                if valid[q] && q != k {
                    edges.push((k, q, ax));
                }
            }
        }
    }
    // one anchor per connected component; the gauge component uses the gauge
    let mut comp = vec![usize::MAX; grid.len()];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); grid.len()];
    for &(a, b, _) in &edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let gauge = if valid[gauge] {
        gauge
    } else {
        (0..grid.len())
            .filter(|&k| valid[k])
            .min_by_key(|&k| node_distance(&grid, k, gauge))
            .ok_or_else(|| Error::InsufficientMargin("gradient field has no valid node".into()))?
    };
    let mut anchors = Vec::new();
    let order = std::iter::once(gauge).chain(0..grid.len());
    for s in order {
        if !valid[s] || comp[s] != usize::MAX {
            continue;
        }
        let id = anchors.len();
        anchors.push(s);
        let mut stack = vec![s];
        comp[s] = id;
        while let Some(k) = stack.pop() {
            for &q in &adj[k] {
                if comp[q] == usize::MAX {
                    comp[q] = id;
                    stack.push(q);
                }
            }
        }
    }
    let mut index = vec![None; grid.len()];
    let mut nodes = Vec::new();
    for k in 0..grid.len() {
        if valid[k] && !anchors.contains(&k) {
            index[k] = Some(nodes.len());
            nodes.push(k);
        }
    }
    let n = nodes.len();
    let mut diag = vec![0.0; n];
    for &(a, b, ax) in &edges {
        let w = ce / (hs[ax] * hs[ax]);
        if let Some(i) = index[a] {
            diag[i] += w;
        }
        if let Some(i) = index[b] {
            diag[i] += w;
        }
    }
    let apply = |x: &[f64], y: &mut [f64]| {
        y.iter_mut().for_each(|v| *v = 0.0);
        for &(a, b, ax) in &edges {
            let w = ce / (hs[ax] * hs[ax]);
            let xa = index[a].map_or(0.0, |i| x[i]);
            let xb = index[b].map_or(0.0, |i| x[i]);
            if let Some(i) = index[a] {
                y[i] += w * (xa - xb);
            }
            if let Some(i) = index[b] {
                y[i] += w * (xb - xa);
            }
        }
    };
    // edge means of P by 4-point quadrature along the edge's grid line
    // (centred when possible, one-sided near the mask edge, trapezoid last)
    let at = |k: usize, ax: usize, d: isize| grid.offset(k, ax, d).filter(|&q| valid[q]);
    let edge_mean = |a: usize, q: usize, ax: usize, c: usize| {
        let f = |k: usize| p[ax].at(k)[c];
        if let (Some(l), Some(r)) = (at(a, ax, -1), at(q, ax, 1)) {
            return (-f(l) + 13.0 * f(a) + 13.0 * f(q) - f(r)) / 24.0;
        }
        if let (Some(r), Some(rr)) = (at(q, ax, 1), at(q, ax, 2)) {
            return (9.0 * f(a) + 19.0 * f(q) - 5.0 * f(r) + f(rr)) / 24.0;
        }
        if let (Some(l), Some(ll)) = (at(a, ax, -1), at(a, ax, -2)) {
            return (f(ll) - 5.0 * f(l) + 19.0 * f(a) + 9.0 * f(q)) / 24.0;
        }
        0.5 * (f(a) + f(q))
    };
    let mut u = Field::zeros(grid, nc).restrict(&valid);
    let mut defect = Vec::with_capacity(nc);
    for c in 0..nc {
        let mut b = vec![0.0; n];
        for &(a, q, ax) in &edges {
            let pe = edge_mean(a, q, ax, c);
            let w = ce / hs[ax] * pe;
            if let Some(i) = index[a] {
                b[i] -= w;
            }
            if let Some(i) = index[q] {
                b[i] += w;
            }
        }
        let (x, _, _) = pcg(apply, &diag, &b, "potential recovery")?;
        for (i, &k) in nodes.iter().enumerate() {
            u.at_mut(k)[c] = x[i];
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &(a, q, ax) in &edges {
            let pe = edge_mean(a, q, ax, c);
            let du = (u.at(q)[c] - u.at(a)[c]) / hs[ax];
            num += ce * (du - pe).powi(2);
            den += ce * pe * pe;
        }
        defect.push(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() });
    }
    // cell circulations
    let mut max_curl = 0.0f64;
    for k in 0..grid.len() {
        let (Some(e), Some(n)) = (grid.offset(k, 0, 1), grid.offset(k, 1, 1)) else { continue };
        let Some(ne) = grid.offset(e, 1, 1) else { continue };
        if ![k, e, n, ne].iter().all(|&q| valid[q]) {
            continue;
        }
        for c in 0..nc {
            let bottom = 0.5 * (p[0].at(k)[c] + p[0].at(e)[c]) * grid.hx;
            let right = 0.5 * (p[1].at(e)[c] + p[1].at(ne)[c]) * grid.hy;
            let top = 0.5 * (p[0].at(n)[c] + p[0].at(ne)[c]) * grid.hx;
            let left = 0.5 * (p[1].at(k)[c] + p[1].at(n)[c]) * grid.hy;
            max_curl = max_curl.max(((bottom + right - top - left) / ce).abs());
        }
    }
    let worst = defect.iter().cloned().fold(0.0, f64::max);
    let warning = (worst > COMPAT_WARN)
        .then(|| format!("gradient field is not exact: relative compatibility defect {worst:.3e} > {COMPAT_WARN:e}"));
    Ok(RecoveredPotential { u, defect, max_curl, warning })
}
