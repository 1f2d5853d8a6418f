//! Willmore operator, stress tensor and the three Noether conservation laws
//! (translations, rotations, dilations).

use crate::error::{Error, Result};
use crate::exterior::{binomial, dot};
use crate::fieldops::{dot_f, lin, wedge};
use crate::geometry::{compute_geometry, GeometryCache};
use crate::grid::Field;
use crate::patch::{fd_partials, ImmersionPatch};

/// g^{ik} g^{jl} a_kl for a symmetric `[11, 12, 22]` triple.
pub fn raise_sym(gi: &[f64], a: [f64; 3]) -> [f64; 3] {
    let m = [[gi[0], gi[1]], [gi[1], gi[2]]];
    let a = [[a[0], a[1]], [a[1], a[2]]];
    let mut r = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    r[i][j] += m[i][k] * m[j][l] * a[k][l];
                }
            }
        }
    }
    [r[0][0], r[0][1], r[1][1]]
}

/// Full contraction Σ_ij a^{ij} b_ij of symmetric triples.
pub fn contract_sym(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + 2.0 * a[1] * b[1] + a[2] * b[2]
}

/// Per-node (w·h_11, w·h_12, w·h_22) for an R^m vector w.
pub fn h_dot(h: &[f64], w: &[f64], m: usize) -> [f64; 3] {
    [dot(&h[..m], w), dot(&h[m..2 * m], w), dot(&h[2 * m..], w)]
}

/// W⃗ = Δ_⊥H⃗ + (H⃗·h⃗^i_j)h⃗^j_i − 2|H⃗|²H⃗.
pub fn willmore_operator(cache: &GeometryCache) -> Result<Field> {
    let m = cache.dim();
    let lap = cache.normal_laplacian(cache.mean_curvature())?;
    let w = Field::combine(&[&lap, cache.mean_curvature(), cache.second_fundamental(), cache.inv_metric()], m, |_, x, o| {
        let (lap, hv, h, gi) = (x[0], x[1], x[2], x[3]);
        let hh = raise_sym(gi, h_dot(h, hv, m));
        let h2 = dot(hv, hv);
        for c in 0..m {
            o[c] = lap[c] + hh[0] * h[c] + 2.0 * hh[1] * h[m + c] + hh[2] * h[2 * m + c] - 2.0 * h2 * hv[c];
        }
    });
    if w.valid_count() == 0 {
        return Err(Error::InsufficientMargin("willmore_operator needs margin ≥ 4".into()));
    }
    Ok(w)
}

/// T⃗^j = ∇^jH⃗ − 2π_n∇^jH⃗ + |H⃗|²∇^jΦ⃗.
pub fn stress_tensor(cache: &GeometryCache) -> Result<[Field; 2]> {
    let hv = cache.mean_curvature();
    let up = cache.grad_up(hv);
    let gphi = cache.grad_phi_up();
    let h2 = dot_f(hv, hv);
    let make = |j: usize| -> Field {
        let n = cache.project_normal(&up[j]);
        let m = hv.ncomp();
        Field::combine(&[&up[j], &n, &h2, &gphi[j]], m, |_, x, o| {
            for c in 0..m {
                o[c] = x[0][c] - 2.0 * x[1][c] + x[2][0] * x[3][c];
            }
        })
    };
    let t = [make(0), make(1)];
    if t[0].valid_count() == 0 {
        return Err(Error::InsufficientMargin("stress_tensor needs margin ≥ 2".into()));
    }
    Ok(t)
}

/// Sup and L² norm of a residual field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub sup: f64,
    pub l2: f64,
}

impl Norms {
    pub fn of(cache: &GeometryCache, f: &Field) -> Self {
        Norms { sup: f.sup_norm(), l2: cache.l2_norm(f) }
    }
}

#[derive(Clone, Debug)]
pub struct CurrentSet {
    pub w: Field,
    pub t: [Field; 2],
    /// T⃗^j∧Φ⃗ + H⃗∧∇^jΦ⃗
    pub rotation: [Field; 2],
    /// T⃗^j·Φ⃗
    pub dilation: [Field; 2],
    /// ∇_jT⃗^j + W⃗
    pub res_trans: Field,
    /// ∇_j(T⃗^j∧Φ⃗ + H⃗∧∇^jΦ⃗) + W⃗∧Φ⃗
    pub res_rot: Field,
    /// ∇_j(T⃗^j·Φ⃗) + W⃗·Φ⃗
    pub res_dil: Field,
    pub trans: Norms,
    pub rot: Norms,
    pub dil: Norms,
    /// sup |res_rot − res_trans∧Φ⃗|
    pub rot_consistency: f64,
}

/// Evaluates the three conservation laws for given W⃗ and T⃗^j.
pub fn conservation_residuals(cache: &GeometryCache, w: &Field, t: &[Field; 2]) -> Result<CurrentSet> {
    let m = cache.dim();
    if w.ncomp() != m || t[0].ncomp() != m || t[1].ncomp() != m {
        return Err(Error::DimensionMismatch(m, w.ncomp()));
    }
    let phi = cache.position();
    let hv = cache.mean_curvature();
    let gphi = cache.grad_phi_up();
    let rot = |j: usize| lin(&[(1.0, &wedge(m, 1, &t[j], 1, phi)), (1.0, &wedge(m, 1, hv, 1, &gphi[j]))]);
    let rotation = [rot(0), rot(1)];
    let dilation = [dot_f(&t[0], phi), dot_f(&t[1], phi)];

    let div_t = cache.covariant_divergence([&t[0], &t[1]])?;
    let res_trans = div_t.add(w);
    let res_rot = cache.covariant_divergence([&rotation[0], &rotation[1]])?.add(&wedge(m, 1, w, 1, phi));
    let res_dil = cache.covariant_divergence([&dilation[0], &dilation[1]])?.add(&dot_f(w, phi));
    if res_trans.valid_count() == 0 || res_rot.valid_count() == 0 || res_dil.valid_count() == 0 {
        return Err(Error::InsufficientMargin("W and T share no valid node".into()));
    }
    let rot_consistency = res_rot.sub(&wedge(m, 1, &res_trans, 1, phi)).sup_norm();
    Ok(CurrentSet {
        trans: Norms::of(cache, &res_trans),
        rot: Norms::of(cache, &res_rot),
        dil: Norms::of(cache, &res_dil),
        w: w.clone(),
        t: t.clone(),
        rotation,
        dilation,
        res_trans,
        res_rot,
        res_dil,
        rot_consistency,
    })
}

/// W⃗, T⃗^j and all residuals of a patch.
pub fn compute_currents(cache: &GeometryCache) -> Result<CurrentSet> {
    let w = willmore_operator(cache)?;
    let t = stress_tensor(cache)?;
    conservation_residuals(cache, &w, &t)
}

/// Rotation-current dimension helper: number of Λ² components.
pub fn bivector_len(m: usize) -> usize {
    binomial(m, 2)
}

/// Outcome of a finite-difference energy-variation test.
#[derive(Clone, Debug)]
pub struct EnergyVariation {
    /// (t, symmetric 5-point derivative of E(Φ + tB⃗) at 0)
    pub steps: Vec<(f64, f64)>,
    /// Richardson extrapolation of the two smallest steps (t⁴ error model).
    pub richardson: f64,
    /// ∫ B⃗·W⃗ dvol_g
    pub pairing: f64,
}

impl EnergyVariation {
    pub fn fd_at(&self, t: f64) -> Option<f64> {
        self.steps.iter().find(|s| s.0 == t).map(|s| s.1)
    }

    /// |fd(t) − pairing| / |pairing|
    pub fn relative_gap(&self, t: f64) -> Option<f64> {
        self.fd_at(t).map(|d| (d - self.pairing).abs() / self.pairing.abs())
    }
}

/// Number of node layers between the patch margin and the bump support.
pub const BUMP_COLLAR: usize = 4;

/// Compares d/dt E(Φ + tB⃗) with ∫B⃗·W⃗. `bump` is an R^m field that must
/// vanish on the outer `margin + 4` node layers (the support of W⃗ plus a
/// collar), so that the divergence term of the first variation drops out.
pub fn energy_variation_check(patch: &ImmersionPatch, bump: &Field, t_steps: &[f64]) -> Result<EnergyVariation> {
    let m = patch.dim();
    if bump.ncomp() != m {
        return Err(Error::DimensionMismatch(m, bump.ncomp()));
    }
    if t_steps.is_empty() || t_steps.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidParameter("t_steps must be positive".into()));
    }
    let grid = patch.grid();
    let collar = patch.margin() + BUMP_COLLAR;
    for k in 0..grid.len() {
        let b = bump.at(k);
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("bump".into()));
        }
        if grid.edge_distance(k) < collar && b.iter().any(|x| *x != 0.0) {
            return Err(Error::Validation(format!(
                "bump support touches the {collar}-layer collar at node {:?}",
                grid.ij(k)
            )));
        }
        if !patch.is_valid(k) && b.iter().any(|x| *x != 0.0) {
            return Err(Error::Validation(format!("bump nonzero at invalid node {:?}", grid.ij(k))));
        }
    }
    let bump = bump.restrict(&vec![true; grid.len()]);
    let (bd, bdd) = fd_partials(&bump);
    let energy = |t: f64| -> Result<f64> {
        let p = patch.perturbed(&bump, &bd, &bdd, t)?;
        Ok(compute_geometry(&p)?.willmore_energy())
    };
    let mut steps = Vec::new();
    for &t in t_steps {
        let e = [energy(-2.0 * t)?, energy(-t)?, energy(t)?, energy(2.0 * t)?];
        steps.push((t, (e[0] - 8.0 * e[1] + 8.0 * e[2] - e[3]) / (12.0 * t)));
    }
    let cache = compute_geometry(patch)?;
    let w = willmore_operator(&cache)?;
    let pairing = cache.surface_integral(&dot_f(&bump, &w));
    let mut sorted = steps.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let richardson = if sorted.len() >= 2 {
        let (t1, d1) = sorted[0];
        let (t2, d2) = sorted[1];
        let r = (t2 / t1).powi(4);
        (r * d1 - d2) / (r - 1.0)
    } else {
        sorted[0].1
    };
    Ok(EnergyVariation { steps, richardson, pairing })
}

/// Rigid motions and dilations of the ambient space.
#[derive(Clone, Debug)]
pub enum Motion {
    Translation(Vec<f64>),
    /// Orthogonal matrix, row-major.
    Rotation(Vec<Vec<f64>>),
    Dilation(f64),
}

impl Motion {
    /// Rotation by `angle` in the (e_a, e_b) plane of R^m (0-based axes).
    pub fn plane_rotation(m: usize, a: usize, b: usize, angle: f64) -> Self {
        let mut q: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let (s, c) = angle.sin_cos();
        q[a][a] = c;
        q[a][b] = -s;
        q[b][a] = s;
        q[b][b] = c;
        Motion::Rotation(q)
    }
}

/// Willmore energy before and after applying `motion`.
pub fn invariance_check(patch: &ImmersionPatch, motion: &Motion) -> Result<(f64, f64)> {
    let m = patch.dim();
    let id: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let zero = vec![0.0; m];
    let moved = match motion {
        Motion::Translation(a) => {
            if a.len() != m || a.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter("translation must be a finite R^m vector".into()));
            }
            patch.transformed(&id, 1.0, a)?
        }
        Motion::Rotation(q) => {
            if q.len() != m || q.iter().any(|r| r.len() != m || r.iter().any(|x| !x.is_finite())) {
                return Err(Error::InvalidParameter("rotation must be a finite m×m matrix".into()));
            }
            for i in 0..m {
                for j in 0..m {
                    let qq: f64 = (0..m).map(|k| q[k][i] * q[k][j]).sum();
                    if (qq - id[i][j]).abs() > 1e-12 {
                        return Err(Error::InvalidParameter("rotation matrix is not orthogonal".into()));
                    }
                }
            }
            patch.transformed(q, 1.0, &zero)?
        }
        Motion::Dilation(l) => {
            if !(l.is_finite() && *l > 0.0) {
                return Err(Error::InvalidParameter("dilation factor must be positive".into()));
            }
            patch.transformed(&id, *l, &zero)?
        }
    };
    Ok((compute_geometry(patch)?.willmore_energy(), compute_geometry(&moved)?.willmore_energy()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{build_catalog_patch, GridSpec};

    fn cache(name: &str, n: usize) -> GeometryCache {
        compute_geometry(&build_catalog_patch(name, &[], &GridSpec::square(n)).unwrap()).unwrap()
    }

    /// Codimension-one oracle ΔH + 2H(H² − K) along ν.
    fn scalar_willmore(c: &GeometryCache) -> Field {
        let hs = c.scalar_mean().unwrap();
        let lap = c.laplace_beltrami(&hs).unwrap();
        let k = Field::combine(&[c.second_fundamental(), c.gauss_map(), c.det()], 1, |_, x, o| {
            let h = h_dot(x[0], x[1], 3);
            o[0] = (h[0] * h[2] - h[1] * h[1]) / x[2][0];
        });
        Field::combine(&[&lap, &hs, &k], 1, |_, x, o| o[0] = x[0][0] + 2.0 * x[1][0] * (x[1][0].powi(2) - x[2][0]))
    }

    #[test]
    fn flat_is_trivial() {
        let c = cache("flat", 33);
        let cs = compute_currents(&c).unwrap();
        assert_eq!(cs.w.sup_norm(), 0.0);
        assert_eq!(cs.t[0].sup_norm() + cs.t[1].sup_norm(), 0.0);
        assert!(cs.trans.sup <= 1e-14 && cs.rot.sup <= 1e-14 && cs.dil.sup <= 1e-14);
    }

    #[test]
    fn cylinder_matches_scalar_oracle() {
        let c = cache("cylinder", 65);
        let w = willmore_operator(&c).unwrap();
        let oracle = scalar_willmore(&c);
        for k in w.valid_nodes() {
            let nu = c.gauss_map().at(k);
            let wn = dot(w.at(k), nu);
            assert!((dot(w.at(k), w.at(k)).sqrt() - 0.25).abs() < 1e-3);
            assert!((wn - oracle.at(k)[0]).abs() < 1e-4, "{wn} {}", oracle.at(k)[0]);
        }
        let t = stress_tensor(&c).unwrap();
        let gphi = c.grad_phi_up();
        // ∂_uH⃗ = −½∂_uΦ⃗ is tangential, so T⃗¹ = −¼∇¹Φ⃗ while T⃗² = ¼∇²Φ⃗
        for (j, s) in [(0, -0.25), (1, 0.25)] {
            let d = t[j].sub(&gphi[j].scale(s)).sup_norm();
            assert!(d < 1e-4, "{d}");
        }
    }

    #[test]
    fn sphere_is_critical() {
        let c = cache("sphere_stereo", 129);
        let cs = compute_currents(&c).unwrap();
        assert!(cs.w.sup_norm() < 1e-3);
        assert!(cs.t[0].sup_norm() < 1e-6);
        assert!(cs.trans.sup < 1e-3 && cs.rot.sup < 1e-3 && cs.dil.sup < 1e-3);
    }

    #[test]
    fn invariance() {
        let p = build_catalog_patch("cylinder", &[], &GridSpec::square(33)).unwrap();
        let (a, b) = invariance_check(&p, &Motion::Translation(vec![5.0, -3.0, 2.0])).unwrap();
        assert!((a - b).abs() <= 1e-12 * a);
        let (a, b) = invariance_check(&p, &Motion::Dilation(2.5)).unwrap();
        assert!((a - b).abs() <= 1e-10 * a);
        let s = build_catalog_patch("sphere_stereo", &[], &GridSpec::square(33)).unwrap();
        let (a, b) = invariance_check(&s, &Motion::plane_rotation(3, 1, 2, std::f64::consts::FRAC_PI_2)).unwrap();
        assert!((a - b).abs() <= 1e-12 * a);
        let bad = Motion::Rotation(vec![vec![1.0, 0.1, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert!(invariance_check(&s, &bad).is_err());
        assert!(invariance_check(&s, &Motion::Dilation(0.0)).is_err());
    }

    #[test]
    fn bump_collar_enforced() {
        let p = build_catalog_patch("flat", &[], &GridSpec::square(17)).unwrap();
        let b = Field::from_fn(*p.grid(), 3, |_, _, o| o[2] = 1.0);
        assert!(matches!(energy_variation_check(&p, &b, &[1e-3]), Err(Error::Validation(_))));
    }
}
