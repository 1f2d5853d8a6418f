//! Point singularities at the chart origin: the Green function of
//! ∂_j(|g|^{1/2}∇^j ·) and the residue β⃗ measured as a contour flux.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::GeometryCache;
use crate::grid::Field;
use crate::poisson::solve_weighted_poisson;

/// Fluxes below this (absolute, per component) count as zero in the spread.
pub const FLUX_ZERO: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GreenFunction {
    /// L_g = G₀ + u
    pub lg: Field,
    /// The smooth remainder u (Dirichlet zero on the edge of the region).
    pub remainder: Field,
    /// |g|^{1/2}∇^jL_g, j = 1, 2
    pub flux_density: [Field; 2],
    /// Relative algebraic residual of the remainder solve.
    pub solver_residual: f64,
}

#[derive(Clone, Debug)]
pub struct ResidueReport {
    /// Mean contour flux over the radii.
    pub beta_res: Vec<f64>,
    /// (radius, flux), radii increasing.
    pub flux_by_radius: Vec<(f64, Vec<f64>)>,
    pub spread: f64,
    /// Flux of |g|^{1/2}∇L_g through each contour (≈ 1).
    pub green_flux: Vec<f64>,
    pub green_defect: f64,
}

fn require_origin(cache: &GeometryCache) -> Result<()> {
    let g = cache.grid();
    let inside = |lo: f64, hi: f64| lo < 0.0 && 0.0 < hi;
    if g.periodic[0] || g.periodic[1] || !inside(g.u0, g.upper(0)) || !inside(g.v0, g.upper(1)) {
        return Err(Error::Validation("chart does not contain the origin in its interior".into()));
    }
    Ok(())
}

/// a^{jk} = |g|^{1/2}g^{jk} at the origin, or at the nearest valid node when
/// the origin is punctured.
fn frozen_coefficient(cache: &GeometryCache) -> [f64; 3] {
    let a = cache.weight();
    if let Some(x) = a.interpolate(0.0, 0.0) {
        return [x[0], x[1], x[2]];
    }
    let g = cache.grid();
    let k = a
        .valid_nodes()
        .min_by(|&p, &q| {
            let r = |k| {
                let (u, v) = g.coords(k);
                u * u + v * v
            };
            r(p).total_cmp(&r(q))
        })
        .expect("geometry cache has valid nodes");
    let x = a.at(k);
    [x[0], x[1], x[2]]
}

/// Green function of ∂_j(|g|^{1/2}g^{jk}∂_k ·) with unit source at the chart
/// origin. The singular part G₀ = (4π)⁻¹log(x·A₀⁻¹x), A₀ = a(0) (det A₀ = 1),
/// is handled analytically; the remainder solves
/// ∂_j(a^{jk}∂_k u) = −∂_j(a^{jk}∂_k G₀) with Dirichlet-zero data.
pub fn green_function(cache: &GeometryCache) -> Result<GreenFunction> {
    require_origin(cache)?;
    let a0 = frozen_coefficient(cache);
    let det = a0[0] * a0[2] - a0[1] * a0[1];
    let b = [a0[2] / det, -a0[1] / det, a0[0] / det];
    let grid = *cache.grid();
    let near = 1e-12 * grid.spacing(0).min(grid.spacing(1));
    // (∂G₀, ∂∂G₀) at (u, v)
    let g0 = |u: f64, v: f64| {
        let bx = [b[0] * u + b[1] * v, b[1] * u + b[2] * v];
        let q = u * bx[0] + v * bx[1];
        let d = [bx[0] / (2.0 * PI * q), bx[1] / (2.0 * PI * q)];
        let dd = [
            (b[0] / q - 2.0 * bx[0] * bx[0] / (q * q)) / (2.0 * PI),
            (b[1] / q - 2.0 * bx[0] * bx[1] / (q * q)) / (2.0 * PI),
            (b[2] / q - 2.0 * bx[1] * bx[1] / (q * q)) / (2.0 * PI),
        ];
        (q.ln() / (4.0 * PI), d, dd)
    };
    let a = cache.weight();
    let da = [a.diff_with_edges(0), a.diff_with_edges(1)];
    // −∂_j(a^{jk}∂_kG₀)/|g|^{1/2}; A₀^{jk}∂_jk G₀ = 0 away from the origin,
    // and the integrable singularity at the origin node is dropped.
    let rhs = Field::combine(&[a, &da[0], &da[1], cache.sqrt_det()], 1, |k, x, o| {
        let (u, v) = grid.coords(k);
        if u.hypot(v) < near {
            o[0] = 0.0;
            return;
        }
        let (_, d, dd) = g0(u, v);
        let div_a = [x[1][0] + x[2][1], x[1][1] + x[2][2]];
        let s = div_a[0] * d[0]
            + div_a[1] * d[1]
            + (x[0][0] - a0[0]) * dd[0]
            + 2.0 * (x[0][1] - a0[1]) * dd[1]
            + (x[0][2] - a0[2]) * dd[2];
        o[0] = -s / x[3][0];
    });
    let sol = solve_weighted_poisson(cache, &rhs, "green_remainder")?;
    let u = sol.u;
    let du = [u.diff_with_edges(0), u.diff_with_edges(1)];
    let lg = Field::combine(&[&u], 1, |k, x, o| {
        let (p, q) = grid.coords(k);
        o[0] = if p.hypot(q) < near { f64::NEG_INFINITY } else { g0(p, q).0 + x[0][0] };
    });
    let flux = |j: usize| {
        Field::combine(&[a, &du[0], &du[1]], 1, |k, x, o| {
            let (p, q) = grid.coords(k);
            if p.hypot(q) < near {
                o[0] = 0.0;
                return;
            }
            let (_, d, _) = g0(p, q);
            let (c0, c1) = if j == 0 { (x[0][0], x[0][1]) } else { (x[0][1], x[0][2]) };
            o[0] = c0 * (d[0] + x[1][0]) + c1 * (d[1] + x[2][0]);
        })
    };
    Ok(GreenFunction { lg, remainder: u, flux_density: [flux(0), flux(1)], solver_residual: sol.residual })
}

/// ∮ ν_j P^j dℓ over the chart circle of radius `r` about `center`, by
/// bilinear interpolation and the periodic trapezoid rule in angle.
pub fn contour_flux(p: &[Field; 2], center: (f64, f64), r: f64) -> Result<Vec<f64>> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
    }
    let g = p[0].grid();
    let h = g.spacing(0).min(g.spacing(1));
    let n = ((16.0 * 2.0 * PI * r / h).ceil() as usize).max(256);
    let nc = p[0].ncomp();
    let mut acc = vec![0.0; nc];
    for i in 0..n {
        let th = 2.0 * PI * i as f64 / n as f64;
        let (c, s) = (th.cos(), th.sin());
        let (u, v) = (center.0 + r * c, center.1 + r * s);
        let exits = || Error::Validation(format!("circle of radius {r} exits the valid region"));
        let a = p[0].interpolate(u, v).ok_or_else(exits)?;
        let b = p[1].interpolate(u, v).ok_or_else(exits)?;
        for k in 0..nc {
            acc[k] += c * a[k] + s * b[k];
        }
    }
    let w = 2.0 * PI * r / n as f64;
    Ok(acc.into_iter().map(|x| x * w).collect())
}

/// |g|^{1/2}(T⃗^j − ∇^jV⃗)
fn weighted_current(cache: &GeometryCache, t: &[Field; 2], grad_v: &[Field; 2]) -> Result<[Field; 2]> {
    let m = cache.dim();
    for f in t.iter().chain(grad_v) {
        if f.ncomp() != m {
            return Err(Error::DimensionMismatch(m, f.ncomp()));
        }
        if f.grid() != cache.grid() {
            return Err(Error::Validation("current lives on a different grid".into()));
        }
    }
    let w = |j: usize| {
        Field::combine(&[cache.sqrt_det(), &t[j], &grad_v[j]], m, |_, x, o| {
            for c in 0..m {
                o[c] = x[0][0] * (x[1][c] - x[2][c]);
            }
        })
    };
    Ok([w(0), w(1)])
}

/// Residue β⃗ as the flux of |g|^{1/2}(T⃗^j − ∇^jV⃗) through the circle of
/// radius `r` about the origin (the Green function carries unit flux).
pub fn residue_flux(cache: &GeometryCache, t: &[Field; 2], grad_v: &[Field; 2], r: f64) -> Result<Vec<f64>> {
    require_origin(cache)?;
    contour_flux(&weighted_current(cache, t, grad_v)?, (0.0, 0.0), r)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Residue at several radii; `spread` is max_r |flux(r) − mean| / |mean|,
/// or 0 when every flux component is below [`FLUX_ZERO`].
pub fn radius_independence_scan(cache: &GeometryCache, t: &[Field; 2], grad_v: &[Field; 2], radii: &[f64]) -> Result<ResidueReport> {
    if radii.len() < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 radii, got {}", radii.len())));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("radii must be strictly increasing".into()));
    }
    require_origin(cache)?;
    let current = weighted_current(cache, t, grad_v)?;
    let green = green_function(cache)?;
    let mut rows = Vec::new();
    let mut green_flux = Vec::new();
    for &r in radii {
        rows.push((r, contour_flux(&current, (0.0, 0.0), r)?));
        green_flux.push(contour_flux(&green.flux_density, (0.0, 0.0), r)?[0]);
    }
    let m = cache.dim();
    let mut mean = vec![0.0; m];
    for (_, f) in &rows {
        for c in 0..m {
            mean[c] += f[c] / rows.len() as f64;
        }
    }
    let zero = rows.iter().all(|(_, f)| f.iter().all(|x| x.abs() <= FLUX_ZERO));
    let spread = if zero {
        0.0
    } else {
        let dev = rows
            .iter()
            .map(|(_, f)| norm(&f.iter().zip(&mean).map(|(a, b)| a - b).collect::<Vec<_>>()))
            .fold(0.0, f64::max);
        dev / norm(&mean)
    };
    Ok(ResidueReport { beta_res: mean, flux_by_radius: rows, spread, green_flux, green_defect: green.solver_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{build_catalog_patch, GridSpec};
    use crate::currents::{stress_tensor, willmore_operator};
    use crate::geometry::compute_geometry;
    use crate::potentials::{build_potential_set, Overrides};

    fn cache(name: &str, n: usize, domain: Option<[f64; 4]>) -> GeometryCache {
        let spec = GridSpec { nx: n, ny: n, domain };
        compute_geometry(&build_catalog_patch(name, &[], &spec).unwrap()).unwrap()
    }

    fn currents(c: &GeometryCache) -> ([Field; 2], [Field; 2]) {
        let w = willmore_operator(c).unwrap();
        let t = stress_tensor(c).unwrap();
        let p = build_potential_set(c, &w, &t, &Overrides::default()).unwrap();
        (t, p.grad_v)
    }

    #[test]
    fn flat_green_flux() {
        let c = cache("flat", 129, None);
        let g = green_function(&c).unwrap();
        assert!(g.remainder.sup_norm() < 1e-12);
        for r in [0.3, 0.6] {
            let f = contour_flux(&g.flux_density, (0.0, 0.0), r).unwrap()[0];
            assert!((f - 1.0).abs() < 1e-3, "{r}: {f}");
        }
        // contour not enclosing the origin
        let f = contour_flux(&g.flux_density, (0.5, 0.5), 0.2).unwrap()[0];
        assert!(f.abs() < 1e-3, "{f}");
    }

    #[test]
    fn curved_green_flux() {
        let c = cache("sphere_stereo", 129, None);
        let g = green_function(&c).unwrap();
        let f: Vec<f64> = [0.3, 0.6].iter().map(|&r| contour_flux(&g.flux_density, (0.0, 0.0), r).unwrap()[0]).collect();
        assert!((f[0] - 1.0).abs() < 1e-3 && (f[1] - f[0]).abs() < 1e-3, "{f:?}");
        let c = cache("graph_z2", 129, None);
        let g = green_function(&c).unwrap();
        let f = contour_flux(&g.flux_density, (0.1, -0.05), 0.5).unwrap()[0];
        assert!((f - 1.0).abs() < 1e-2, "{f}");
    }

    #[test]
    fn origin_required() {
        let c = cache("sphere_stereo", 33, Some([0.1, 1.0, -1.0, 1.0]));
        assert!(green_function(&c).is_err());
        let (t, gv) = currents(&cache("sphere_stereo", 33, None));
        let c = cache("sphere_stereo", 33, None);
        let e = residue_flux(&c, &t, &gv, 1.5).unwrap_err().to_string();
        assert!(e.contains("exits the valid region"), "{e}");
    }

    #[test]
    fn smooth_patch_has_no_residue() {
        let c = cache("sphere_stereo", 129, None);
        let (t, gv) = currents(&c);
        let rep = radius_independence_scan(&c, &t, &gv, &[0.3, 0.5, 0.7]).unwrap();
        for (_, f) in &rep.flux_by_radius {
            assert!(norm(f) <= 1e-5, "{f:?}");
        }
        assert_eq!(rep.spread, 0.0);
    }

    #[test]
    fn inverted_catenoid_residue() {
        let c = cache("inverted_catenoid_end", 129, None);
        let (t, gv) = currents(&c);
        let rep = radius_independence_scan(&c, &t, &gv, &[0.3, 0.5, 0.7]).unwrap();
        let b = &rep.beta_res;
        assert!(norm(b) > 0.1, "{b:?}");
        assert!(b[0].hypot(b[1]) <= 1e-6 * norm(b), "{b:?}");
        assert!(rep.spread <= 1e-2, "{}", rep.spread);
        for f in &rep.green_flux {
            assert!((f - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn translation_invariant() {
        let spec = GridSpec::square(65);
        let p = build_catalog_patch("inverted_catenoid_end", &[], &spec).unwrap();
        let id = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let q = p.transformed(&id, 1.0, &[0.3, -1.2, 2.5]).unwrap();
        let (c1, c2) = (compute_geometry(&p).unwrap(), compute_geometry(&q).unwrap());
        let ((t1, g1), (t2, g2)) = (currents(&c1), currents(&c2));
        let (a, b) = (residue_flux(&c1, &t1, &g1, 0.5).unwrap(), residue_flux(&c2, &t2, &g2, 0.5).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-10, "{a:?} {b:?}");
        }
    }

    #[test]
    fn non_conservative_current_is_flagged() {
        let c = cache("cylinder", 65, Some([-1.0, 1.0, -1.0, 1.0]));
        let t = stress_tensor(&c).unwrap();
        let zero = Overrides::zero(&c).grad_v.unwrap();
        let rep = radius_independence_scan(&c, &t, &zero, &[0.3, 0.5, 0.7]).unwrap();
        assert!(rep.spread > 0.1, "{}", rep.spread);
    }

    #[test]
    fn flux_is_linear() {
        let c = cache("inverted_catenoid_end", 65, None);
        let (t, gv) = currents(&c);
        let a = residue_flux(&c, &t, &gv, 0.5).unwrap();
        let t2 = [t[0].scale(2.0), t[1].scale(2.0)];
        let g2 = [gv[0].scale(2.0), gv[1].scale(2.0)];
        let b = residue_flux(&c, &t2, &g2, 0.5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() <= 1e-14 * y.abs().max(1.0));
        }
    }

    #[test]
    fn radii_validation() {
        let c = cache("flat", 33, None);
        let (t, gv) = currents(&c);
        assert!(radius_independence_scan(&c, &t, &gv, &[0.3, 0.5]).is_err());
        assert!(radius_independence_scan(&c, &t, &gv, &[0.3, 0.5, 0.4]).is_err());
    }
}
