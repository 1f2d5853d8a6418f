//! First- and second-order geometry of an immersion patch and the
//! differential operators built on it.
//!
//! Tensor slots: symmetric 2×2 quantities are stored as `[11, 12, 22]`,
//! Christoffel symbols as `[Γ¹₁₁, Γ¹₁₂, Γ¹₂₂, Γ²₁₁, Γ²₁₂, Γ²₂₂]` and the second
//! fundamental form as three consecutive R^m blocks `h₁₁ | h₁₂ | h₂₂`.
//!
//! Two unit multivectors describe the Gauss map: the tangent 2-vector
//! `|g|^{-1/2} ∂₁Φ∧∂₂Φ` (the `⋆n⃗` that enters the conservative system) and
//! its Hodge dual, the normal (m-2)-vector `n⃗`. For m = 3 the latter is the
//! unit normal ν = ∂₁Φ×∂₂Φ/|∂₁Φ×∂₂Φ|; scalar curvatures use H = H⃗·ν.

use crate::error::{Error, Result};
use crate::exterior::{binomial, dot, star_into, wedge_into};
use crate::grid::{Field, Grid};
use crate::patch::{ImmersionPatch, DET_MIN};

#[derive(Clone, Debug)]
pub struct GeometryCache {
    patch: ImmersionPatch,
    metric: Field,
    inv_metric: Field,
    det: Field,
    sqrt_det: Field,
    christoffel: Field,
    second: Field,
    mean: Field,
    tangent: Field,
    normal: Field,
    /// |g|^{1/2} g^{jk}
    weight: Field,
}

/// Quadrature rule along non-periodic axes; periodic axes always use the
/// rectangle rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quadrature {
    Trapezoid,
    /// Gregory end corrections (weights 3/8, 7/6, 23/24, 1, ...), exact for
    /// cubics and 4th-order accurate on smooth integrands.
    Gregory,
}

pub fn sym_index(i: usize, j: usize) -> usize {
    i + j
}

/// Computes all geometric fields of a patch.
pub fn compute_geometry(patch: &ImmersionPatch) -> Result<GeometryCache> {
    let m = patch.dim();
    let grid = *patch.grid();
    let (d1, d2) = (patch.d(0), patch.d(1));
    let dd = [patch.dd(0, 0), patch.dd(0, 1), patch.dd(1, 1)];
    let n2 = binomial(m, 2);
    let mut metric = Field::zeros(grid, 3);
    let mut inv = Field::zeros(grid, 3);
    let mut det = Field::zeros(grid, 1);
    let mut sqrt_det = Field::zeros(grid, 1);
    let mut chr = Field::zeros(grid, 6);
    let mut second = Field::zeros(grid, 3 * m);
    let mut mean = Field::zeros(grid, m);
    let mut tangent = Field::zeros(grid, n2);
    let mut normal = Field::zeros(grid, binomial(m, m - 2));
    let mut weight = Field::zeros(grid, 3);
    for k in 0..grid.len() {
        if !patch.is_valid(k) {
            for f in [
                &mut metric, &mut inv, &mut det, &mut sqrt_det, &mut chr, &mut second, &mut mean, &mut tangent,
                &mut normal, &mut weight,
            ] {
                f.set_valid(k, false);
            }
            continue;
        }
        let (a, b) = (d1.at(k), d2.at(k));
        let g = [dot(a, a), dot(a, b), dot(b, b)];
        let dg = g[0] * g[2] - g[1] * g[1];
        if !(dg >= DET_MIN) {
            let (i, j) = grid.ij(k);
            return Err(Error::ImmersionDegenerate { i, j, det: dg });
        }
        let gi = [g[2] / dg, -g[1] / dg, g[0] / dg];
        let sd = dg.sqrt();
        metric.at_mut(k).copy_from_slice(&g);
        inv.at_mut(k).copy_from_slice(&gi);
        det.at_mut(k)[0] = dg;
        sqrt_det.at_mut(k)[0] = sd;
        weight.at_mut(k).copy_from_slice(&[sd * gi[0], sd * gi[1], sd * gi[2]]);

        // Γ^c_s = g^{cl} (∂_sΦ · ∂_lΦ), h_s = ∂_sΦ - Γ^c_s ∂_cΦ
        let mut hm = vec![0.0; m];
        for s in 0..3 {
            let x = dd[s].at(k);
            let p = [dot(x, a), dot(x, b)];
            let c1 = gi[0] * p[0] + gi[1] * p[1];
            let c2 = gi[1] * p[0] + gi[2] * p[1];
            chr.at_mut(k)[s] = c1;
            chr.at_mut(k)[3 + s] = c2;
            let hs = &mut second.at_mut(k)[s * m..(s + 1) * m];
            for c in 0..m {
                hs[c] = x[c] - c1 * a[c] - c2 * b[c];
            }
            // H = ½ g^{ij} h_ij; the off-diagonal slot counts twice
            let wt = [0.5 * gi[0], gi[1], 0.5 * gi[2]][s];
            for c in 0..m {
                hm[c] += wt * hs[c];
            }
        }
        mean.at_mut(k).copy_from_slice(&hm);
        let t = tangent.at_mut(k);
        wedge_into(m, 1, a, 1, b, 1.0 / sd, t);
        let t = t.to_vec();
        star_into(m, 2, &t, normal.at_mut(k));
    }
    Ok(GeometryCache {
        patch: patch.clone(),
        metric,
        inv_metric: inv,
        det,
        sqrt_det,
        christoffel: chr,
        second,
        mean,
        tangent,
        normal,
        weight,
    })
}

impl GeometryCache {
    pub fn patch(&self) -> &ImmersionPatch {
        &self.patch
    }

    pub fn grid(&self) -> &Grid {
        self.patch.grid()
    }

    pub fn dim(&self) -> usize {
        self.patch.dim()
    }

    pub fn mask(&self) -> &[bool] {
        self.metric.mask()
    }

    pub fn metric(&self) -> &Field {
        &self.metric
    }

    pub fn inv_metric(&self) -> &Field {
        &self.inv_metric
    }

    pub fn det(&self) -> &Field {
        &self.det
    }

    pub fn sqrt_det(&self) -> &Field {
        &self.sqrt_det
    }

    pub fn christoffel(&self) -> &Field {
        &self.christoffel
    }

    /// h_ij as three R^m blocks.
    pub fn second_fundamental(&self) -> &Field {
        &self.second
    }

    pub fn mean_curvature(&self) -> &Field {
        &self.mean
    }

    /// Unit tangent 2-vector |g|^{-1/2} ∂₁Φ∧∂₂Φ.
    pub fn tangent_bivector(&self) -> &Field {
        &self.tangent
    }

    /// Unit normal (m-2)-vector n⃗ = ⋆(tangent 2-vector).
    pub fn gauss_map(&self) -> &Field {
        &self.normal
    }

    /// |g|^{1/2} g^{jk} as `[11, 12, 22]`.
    pub fn weight(&self) -> &Field {
        &self.weight
    }

    pub fn position(&self) -> &Field {
        self.patch.position()
    }

    /// ∂_kΦ restricted to the cache mask.
    pub fn frame(&self, k: usize) -> &Field {
        self.patch.d(k)
    }

    /// Scalar mean curvature H = H⃗·ν (m = 3 only).
    pub fn scalar_mean(&self) -> Result<Field> {
        self.require_codim1()?;
        Ok(Field::combine(&[&self.mean, &self.normal], 1, |_, a, o| o[0] = dot(a[0], a[1])))
    }

    pub fn require_codim1(&self) -> Result<()> {
        if self.dim() != 3 {
            return Err(Error::Validation(format!("operation requires m = 3, patch has m = {}", self.dim())));
        }
        Ok(())
    }

    /// ∇^jΦ = g^{jk} ∂_kΦ.
    pub fn grad_phi_up(&self) -> [Field; 2] {
        self.raise([self.frame(0), self.frame(1)])
    }

    /// Raises a covariant pair: X^j = g^{jk} X_k.
    pub fn raise(&self, x: [&Field; 2]) -> [Field; 2] {
        let n = x[0].ncomp();
        let f = |j: usize| {
            Field::combine(&[&self.inv_metric, x[0], x[1]], n, |_, a, o| {
                let gi = a[0];
                let (c0, c1) = if j == 0 { (gi[0], gi[1]) } else { (gi[1], gi[2]) };
                for c in 0..n {
                    o[c] = c0 * a[1][c] + c1 * a[2][c];
                }
            })
        };
        [f(0), f(1)]
    }

    /// Contravariant gradient ∇^j f = g^{jk} ∂_k f (componentwise, flat ∂_k).
    pub fn grad_up(&self, f: &Field) -> [Field; 2] {
        let d = [f.diff(0), f.diff(1)];
        self.raise([&d[0], &d[1]])
    }

    /// π_n(w) = w - g^{ij}(w·∂_iΦ)∂_jΦ for an R^m field.
    pub fn project_normal(&self, w: &Field) -> Field {
        let m = self.dim();
        Field::combine(&[w, &self.inv_metric, self.frame(0), self.frame(1)], m, |_, x, o| {
            let (w, gi, a, b) = (x[0], x[1], x[2], x[3]);
            let p = [dot(w, a), dot(w, b)];
            let c1 = gi[0] * p[0] + gi[1] * p[1];
            let c2 = gi[1] * p[0] + gi[2] * p[1];
            for c in 0..m {
                o[c] = w[c] - c1 * a[c] - c2 * b[c];
            }
        })
    }

    /// Tangential part π_T(w) = w - π_n(w).
    pub fn project_tangent(&self, w: &Field) -> Field {
        w.sub(&self.project_normal(w))
    }

    fn nonempty(&self, f: Field, what: &str) -> Result<Field> {
        if f.valid_count() == 0 {
            return Err(Error::InsufficientMargin(format!("{what}: no node has full stencil support")));
        }
        Ok(f)
    }

    /// |g|^{-1/2} ∂_j(|g|^{1/2} T^j) for a contravariant pair of fields.
    pub fn covariant_divergence(&self, t: [&Field; 2]) -> Result<Field> {
        let n = t[0].ncomp();
        let flux = |j: usize| {
            Field::combine(&[&self.sqrt_det, t[j]], n, |_, a, o| {
                for c in 0..n {
                    o[c] = a[0][0] * a[1][c];
                }
            })
        };
        let div = flux(0).diff(0).add(&flux(1).diff(1));
        let out = Field::combine(&[&div, &self.sqrt_det], n, |_, a, o| {
            for c in 0..n {
                o[c] = a[0][c] / a[1][0];
            }
        });
        self.nonempty(out, "covariant_divergence")
    }

    /// Δ_g f = |g|^{-1/2} ∂_j(|g|^{1/2} g^{jk} ∂_k f), componentwise.
    pub fn laplace_beltrami(&self, f: &Field) -> Result<Field> {
        let up = self.grad_up(f);
        self.covariant_divergence([&up[0], &up[1]])
    }

    /// Normal Laplacian Δ_⊥F = π_n[|g|^{-1/2} ∂_j(|g|^{1/2} g^{jk} π_n ∂_k F)].
    pub fn normal_laplacian(&self, f: &Field) -> Result<Field> {
        self.check_normal(f, 1e-6)?;
        let n = [self.project_normal(&f.diff(0)), self.project_normal(&f.diff(1))];
        let up = self.raise([&n[0], &n[1]]);
        let div = self.covariant_divergence([&up[0], &up[1]])?;
        Ok(self.project_normal(&div))
    }

    /// Rejects fields with a tangential part above `tol·(1 + |F|)`.
    pub fn check_normal(&self, f: &Field, tol: f64) -> Result<()> {
        if f.ncomp() != self.dim() {
            return Err(Error::DimensionMismatch(self.dim(), f.ncomp()));
        }
        let t = self.project_tangent(f);
        for k in t.valid_nodes() {
            let norm = |x: &[f64]| dot(x, x).sqrt();
            let defect = norm(t.at(k));
            if defect > tol * (1.0 + norm(f.at(k))) {
                return Err(Error::NotNormal { node: k, defect });
            }
        }
        Ok(())
    }

    /// Quadrature weights for the valid region of `f` (bounding box of its
    /// valid nodes; invalid nodes inside the box contribute nothing).
    fn weights(&self, mask: &[bool], rule: Quadrature) -> Vec<f64> {
        let g = self.grid();
        let mut lo = [usize::MAX; 2];
        let mut hi = [0usize; 2];
        for k in (0..g.len()).filter(|&k| mask[k]) {
            for ax in 0..2 {
                let i = g.index(k, ax);
                lo[ax] = lo[ax].min(i);
                hi[ax] = hi[ax].max(i);
            }
        }
        let axis_w = |ax: usize, i: usize| -> f64 {
            let h = g.spacing(ax);
            if g.periodic[ax] {
                return h;
            }
            if i < lo[ax] || i > hi[ax] {
                return 0.0;
            }
            let n = hi[ax] - lo[ax] + 1;
            let e = (i - lo[ax]).min(hi[ax] - i);
            match rule {
                Quadrature::Gregory if n >= 7 => h * [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0, 1.0][e.min(3)],
                _ if n == 1 => 0.0,
                _ => h * if e == 0 { 0.5 } else { 1.0 },
            }
        };
        (0..g.len())
            .map(|k| if mask[k] { axis_w(0, g.index(k, 0)) * axis_w(1, g.index(k, 1)) } else { 0.0 })
            .collect()
    }

    /// ∫ f dvol_g with the trapezoid/rectangle product rule.
    pub fn surface_integral(&self, f: &Field) -> f64 {
        self.surface_integral_with(f, Quadrature::Trapezoid)
    }

    pub fn surface_integral_with(&self, f: &Field, rule: Quadrature) -> f64 {
        assert_eq!(f.ncomp(), 1, "surface_integral expects a scalar field");
        let integrand = Field::combine(&[f, &self.sqrt_det], 1, |_, a, o| o[0] = a[0][0] * a[1][0]);
        let w = self.weights(integrand.mask(), rule);
        // fixed summation order for reproducibility
        integrand.valid_nodes().map(|k| w[k] * integrand.at(k)[0]).sum()
    }

    /// Area of the valid region.
    pub fn area(&self) -> f64 {
        self.surface_integral(&Field::zeros(*self.grid(), 1).restrict(self.mask()).map(1, |_, o| o[0] = 1.0))
    }

    /// sqrt(∫|f|² dvol_g).
    pub fn l2_norm(&self, f: &Field) -> f64 {
        self.surface_integral(&f.map(1, |a, o| o[0] = dot(a, a))).max(0.0).sqrt()
    }

    /// ∫|H⃗|² dvol_g.
    pub fn willmore_energy(&self) -> f64 {
        self.surface_integral(&self.mean.map(1, |a, o| o[0] = dot(a, a)))
    }

    /// Smallest det g over valid nodes.
    pub fn det_min(&self) -> f64 {
        self.det.valid_nodes().map(|k| self.det.at(k)[0]).fold(f64::INFINITY, f64::min)
    }
}
