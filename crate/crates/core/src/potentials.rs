//! Potential set (V⃗, L⃗, X⃗, Y, S, R⃗) of the conservative Willmore system and
//! residuals of its equations.
//!
//! Every Hodge decomposition is made deterministic the same way: the Δ_g
//! part is solved with homogeneous Dirichlet data on the boundary of the
//! valid region, and the curl part is integrated from its flat gradient by
//! least squares, normalised to vanish at the gauge node (domain centre).
//!
//! `ε` is the Levi-Civita symbol with ε¹² = 1 = −ε²¹ and ε_ab = ε^ab. For a
//! covector A_k, ε^{jk}A_k = (A₂, −A₁) and ε^{kj}A_k = (−A₂, A₁).

use crate::error::{Error, Result};
use crate::exterior::{binomial, bullet_into};
use crate::fieldops::{bullet, dot_f, lin, scale_by, wedge};
use crate::geometry::GeometryCache;
use crate::grid::Field;
use crate::poisson::{recover_scalar_potential, solve_refined, weighted_laplacian};

/// Closed-form replacements for parts of the potential chain.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    /// ∇^jV⃗ (contravariant pair of R^m fields)
    pub grad_v: Option<[Field; 2]>,
    /// ∇^jX⃗ (contravariant pair of Λ² fields)
    pub grad_x: Option<[Field; 2]>,
    /// Y itself
    pub y: Option<Field>,
}

impl Overrides {
    /// V⃗ ≡ 0, X⃗ ≡ 0, Y ≡ 0 (admissible whenever W⃗ = 0).
    pub fn zero(cache: &GeometryCache) -> Self {
        let g = *cache.grid();
        let m = cache.dim();
        let z = |n: usize| Field::zeros(g, n).restrict(cache.mask());
        Overrides {
            grad_v: Some([z(m), z(m)]),
            grad_x: Some([z(binomial(m, 2)), z(binomial(m, 2))]),
            y: Some(z(1)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PotentialSet {
    /// V⃗ when solved (None when ∇V⃗ was supplied).
    pub v: Option<Field>,
    pub grad_v: [Field; 2],
    pub l: Field,
    pub x: Option<Field>,
    pub grad_x: [Field; 2],
    pub y: Field,
    pub grad_y: [Field; 2],
    pub s: Field,
    pub r: Field,
    pub gauge: usize,
    pub boundary_condition: &'static str,
    /// Stage diagnostics (solver residuals, compatibility defects), sorted.
    pub diagnostics: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

impl PotentialSet {
    pub fn diagnostic(&self, key: &str) -> Option<f64> {
        self.diagnostics.iter().find(|d| d.0 == key).map(|d| d.1)
    }
}

fn gauge_node(cache: &GeometryCache) -> usize {
    let g = cache.grid();
    let c = g.center_node();
    if cache.mask()[c] {
        return c;
    }
    let (ci, cj) = g.ij(c);
    (0..g.len())
        .filter(|&k| cache.mask()[k])
        .min_by_key(|&k| {
            let (i, j) = g.ij(k);
            i.abs_diff(ci).pow(2) + j.abs_diff(cj).pow(2)
        })
        .unwrap_or(c)
}

fn shift_to_gauge(f: &Field, gauge: usize) -> Field {
    if !f.is_valid(gauge) {
        return f.clone();
    }
    let g0 = f.at(gauge).to_vec();
    // adding +0.0 turns −0.0 into +0.0 so zero fields stay bit-identical
    f.map(f.ncomp(), |x, o| {
        for c in 0..x.len() {
            o[c] = (x[c] - g0[c]) + 0.0;
        }
    })
}

/// Lowers a contravariant pair: A_k = g_{kj}A^j.
pub fn lower(cache: &GeometryCache, a: &[Field; 2]) -> [Field; 2] {
    let n = a[0].ncomp();
    let f = |k: usize| {
        Field::combine(&[cache.metric(), &a[0], &a[1]], n, |_, x, o| {
            let g = x[0];
            let (c0, c1) = if k == 0 { (g[0], g[1]) } else { (g[1], g[2]) };
            for c in 0..n {
                o[c] = c0 * x[1][c] + c1 * x[2][c];
            }
        })
    };
    [f(0), f(1)]
}

/// Builds the potential set from W⃗ and T⃗^j.
pub fn build_potential_set(cache: &GeometryCache, w: &Field, t: &[Field; 2], ov: &Overrides) -> Result<PotentialSet> {
    let m = cache.dim();
    let nb = binomial(m, 2);
    let gauge = gauge_node(cache);
    let mut diag: Vec<(String, f64)> = Vec::new();
    let mut warnings = Vec::new();
    let check = |f: &Field, n: usize, what: &str| -> Result<()> {
        if f.ncomp() != n {
            return Err(Error::Validation(format!("override {what} has {} components, expected {n}", f.ncomp())));
        }
        if f.has_non_finite() {
            return Err(Error::NonFinite(format!("override {what}")));
        }
        Ok(())
    };
    let frame = [cache.frame(0), cache.frame(1)];

    // V⃗
    let (v, grad_v) = match &ov.grad_v {
        Some(gv) => {
            check(&gv[0], m, "grad_v")?;
            check(&gv[1], m, "grad_v")?;
            (None, gv.clone())
        }
        None => {
            let sol = solve_refined(cache, &w.scale(-1.0), "V")?;
            diag.push(("v_solver_residual".into(), sol.residual));
            let gv = cache.grad_up(&sol.u);
            (Some(sol.u), gv)
        }
    };

    // L⃗: √g(T^j − ∇^jV) = ε^{kj}∂_kL, i.e. ∂₁L = P², ∂₂L = −P¹
    let p: Vec<Field> = (0..2)
        .map(|j| scale_by(cache.sqrt_det(), &t[j].sub(&grad_v[j])))
        .collect();
    let rec = recover_scalar_potential([&p[1], &p[0].scale(-1.0)], gauge)?;
    diag.push(("l_compat_defect".into(), max(&rec.defect)));
    diag.push(("l_max_curl".into(), rec.max_curl));
    if let Some(wn) = rec.warning {
        warnings.push(format!("L: {wn}"));
    }
    let l = shift_to_gauge(&rec.u, gauge);

    // X⃗
    let (x, grad_x) = match &ov.grad_x {
        Some(gx) => {
            check(&gx[0], nb, "grad_x")?;
            check(&gx[1], nb, "grad_x")?;
            (None, gx.clone())
        }
        None => {
            let rhs = lin(&[(1.0, &wedge(m, 1, &grad_v[0], 1, frame[0])), (1.0, &wedge(m, 1, &grad_v[1], 1, frame[1]))]);
            let sol = solve_refined(cache, &rhs, "X")?;
            diag.push(("x_solver_residual".into(), sol.residual));
            let gx = cache.grad_up(&sol.u);
            (Some(sol.u), gx)
        }
    };

    // Y
    let y = match &ov.y {
        Some(y) => {
            check(y, 1, "y")?;
            y.clone()
        }
        None => {
            let rhs = lin(&[(1.0, &dot_f(&grad_v[0], frame[0])), (1.0, &dot_f(&grad_v[1], frame[1]))]);
            let sol = solve_refined(cache, &rhs, "Y")?;
            diag.push(("y_solver_residual".into(), sol.residual));
            sol.u
        }
    };
    let y = shift_to_gauge(&y, gauge);
    let grad_y = cache.grad_up(&y);

    // R⃗: ∂_kR = L∧∂_kΦ − √g ε_{kj}(H∧∇^jΦ + ∇^jX)
    let gphi = cache.grad_phi_up();
    let hv = cache.mean_curvature();
    let b: Vec<Field> = (0..2)
        .map(|j| scale_by(cache.sqrt_det(), &wedge(m, 1, hv, 1, &gphi[j]).add(&grad_x[j])))
        .collect();
    let gr1 = wedge(m, 1, &l, 1, frame[0]).sub(&b[1]);
    let gr2 = wedge(m, 1, &l, 1, frame[1]).add(&b[0]);
    let rec = recover_scalar_potential([&gr1, &gr2], gauge)?;
    diag.push(("r_compat_defect".into(), max(&rec.defect)));
    diag.push(("r_max_curl".into(), rec.max_curl));
    if let Some(wn) = rec.warning {
        warnings.push(format!("R: {wn}"));
    }
    let r = shift_to_gauge(&rec.u, gauge);

    // S: ∂_kS = L·∂_kΦ − √g ε_{kj}∇^jY
    let sy: Vec<Field> = (0..2).map(|j| scale_by(cache.sqrt_det(), &grad_y[j])).collect();
    let gs1 = dot_f(&l, frame[0]).sub(&sy[1]);
    let gs2 = dot_f(&l, frame[1]).add(&sy[0]);
    let rec = recover_scalar_potential([&gs1, &gs2], gauge)?;
    diag.push(("s_compat_defect".into(), max(&rec.defect)));
    diag.push(("s_max_curl".into(), rec.max_curl));
    if let Some(wn) = rec.warning {
        warnings.push(format!("S: {wn}"));
    }
    let s = shift_to_gauge(&rec.u, gauge);

    // first-order consistency of the L decomposition
    let dl = [l.diff(0), l.diff(1)];
    let isd = cache.sqrt_det().map(1, |x, o| o[0] = 1.0 / x[0]);
    let c1 = t[0].sub(&grad_v[0]).add(&scale_by(&isd, &dl[1]));
    let c2 = t[1].sub(&grad_v[1]).sub(&scale_by(&isd, &dl[0]));
    diag.push(("l_decomposition_sup".into(), c1.sup_norm().max(c2.sup_norm())));
    diag.sort_by(|a, b| a.0.cmp(&b.0));

    Ok(PotentialSet {
        v,
        grad_v,
        l,
        x,
        grad_x,
        y,
        grad_y,
        s,
        r,
        gauge,
        boundary_condition: "dirichlet_zero",
        diagnostics: diag,
        warnings,
    })
}

fn max(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max)
}

/// One named residual with its norms and the size of the left-hand side.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualEntry {
    pub name: String,
    pub sup: f64,
    pub l2: f64,
    pub scale: f64,
    pub field: Field,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResidualReport {
    pub entries: Vec<ResidualEntry>,
}

impl ResidualReport {
    pub fn get(&self, name: &str) -> Option<&ResidualEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    fn push(&mut self, cache: &GeometryCache, name: &str, residual: Field, lhs: &Field) {
        self.entries.push(ResidualEntry {
            name: name.into(),
            sup: residual.sup_norm(),
            l2: cache.l2_norm(&residual),
            scale: lhs.sup_norm(),
            field: residual,
        });
    }
}

/// Sign placement in the first-order identities and the conservative system.
///
/// `Derived` is what follows from the R⃗/S gradient formulas used to build
/// the potentials (with ε^{ak}ε_{kj} = −δ^a_j and (a∧b)•c = (a·c)b − (b·c)a);
/// `Alternate` flips the X⃗ terms of both identities and the Jacobian signs of
/// the R⃗- and Φ⃗-equations; it does not close and is kept for comparison on
/// the same potentials.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignConvention {
    Derived,
    Alternate,
}

impl SignConvention {
    /// [Jacobian, non-Jacobian] signs of the S-, R⃗- and Φ⃗-equations.
    fn system(self) -> [[f64; 2]; 3] {
        match self {
            SignConvention::Derived => [[1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]],
            SignConvention::Alternate => [[1.0, 1.0], [1.0, 1.0], [-1.0, 1.0]],
        }
    }

    /// Sign of τ·∇^jX in the ∇S identity; ∂_kX in the ∇R⃗ identity carries the opposite one.
    fn identity_x_sign(self) -> f64 {
        match self {
            SignConvention::Derived => -1.0,
            SignConvention::Alternate => 1.0,
        }
    }
}

/// ∂_j(|g|^{1/2}Z^j) for a contravariant pair.
fn weighted_div(cache: &GeometryCache, z: [&Field; 2]) -> Field {
    scale_by(cache.sqrt_det(), z[0]).diff(0).add(&scale_by(cache.sqrt_det(), z[1]).diff(1))
}

/// Residuals of the three equations of the conservative system (S-, R⃗- and
/// Φ⃗-equation) written as `|g|^{1/2}Δ_g(·) − right-hand side`.
pub fn system_residuals(cache: &GeometryCache, pot: &PotentialSet) -> ResidualReport {
    system_residuals_with(cache, pot, SignConvention::Derived)
}

pub fn system_residuals_with(cache: &GeometryCache, pot: &PotentialSet, signs: SignConvention) -> ResidualReport {
    let m = cache.dim();
    let tau = cache.tangent_bivector();
    let dt = [tau.diff(0), tau.diff(1)];
    let ds = [pot.s.diff(0), pot.s.diff(1)];
    let dr = [pot.r.diff(0), pot.r.diff(1)];
    let frame = [cache.frame(0), cache.frame(1)];
    let sg = signs.system();
    let mut rep = ResidualReport::default();

    // S
    let lhs = weighted_laplacian(cache, &pot.s);
    let jac = dot_f(&dt[0], &dr[1]).sub(&dot_f(&dt[1], &dr[0]));
    let zx: Vec<Field> = (0..2).map(|j| dot_f(tau, &pot.grad_x[j])).collect();
    let nonjac = weighted_div(cache, [&zx[0], &zx[1]]);
    let res = lhs.sub(&lin(&[(sg[0][0], &jac), (sg[0][1], &nonjac)]));
    rep.push(cache, "s_equation", res, &lhs);

    // R⃗
    let lhs = weighted_laplacian(cache, &pot.r);
    let jac = lin(&[
        (1.0, &scale_by(&ds[1], &dt[0])),
        (-1.0, &scale_by(&ds[0], &dt[1])),
        (1.0, &bullet(m, 2, &dt[0], 2, &dr[1])),
        (-1.0, &bullet(m, 2, &dt[1], 2, &dr[0])),
    ]);
    let zr: Vec<Field> = (0..2)
        .map(|j| scale_by(&pot.grad_y[j], tau).add(&bullet(m, 2, tau, 2, &pot.grad_x[j])))
        .collect();
    let nonjac = weighted_div(cache, [&zr[0], &zr[1]]);
    let res = lhs.sub(&lin(&[(sg[1][0], &jac), (sg[1][1], &nonjac)]));
    rep.push(cache, "r_equation", res, &lhs);

    // Φ⃗
    let lhs = weighted_laplacian(cache, cache.position());
    let jac = lin(&[
        (1.0, &scale_by(&ds[0], frame[1])),
        (-1.0, &scale_by(&ds[1], frame[0])),
        (1.0, &bullet(m, 2, &dr[0], 1, frame[1])),
        (-1.0, &bullet(m, 2, &dr[1], 1, frame[0])),
    ]);
    let nonjac = Field::combine(
        &[cache.sqrt_det(), &pot.grad_y[0], &pot.grad_y[1], &pot.grad_x[0], &pot.grad_x[1], frame[0], frame[1]],
        m,
        |_, x, o| {
            for j in 0..2 {
                for c in 0..m {
                    o[c] += x[0][0] * x[1 + j][0] * x[5 + j][c];
                }
                let mut b = vec![0.0; m];
                bullet_into(m, 2, x[3 + j], 1, x[5 + j], 1.0, &mut b);
                for c in 0..m {
                    o[c] += x[0][0] * b[c];
                }
            }
        },
    );
    let res = lhs.sub(&lin(&[(sg[2][0], &jac), (sg[2][1], &nonjac)]));
    rep.push(cache, "phi_equation", res, &lhs);
    rep
}

/// Pointwise residuals of the first-order identities for ∇^jS and ∇^jR⃗.
pub fn gradient_identity_residuals(cache: &GeometryCache, pot: &PotentialSet) -> ResidualReport {
    gradient_identity_residuals_with(cache, pot, SignConvention::Derived)
}

pub fn gradient_identity_residuals_with(cache: &GeometryCache, pot: &PotentialSet, signs: SignConvention) -> ResidualReport {
    let m = cache.dim();
    let nb = binomial(m, 2);
    let tau = cache.tangent_bivector();
    let ds = [pot.s.diff(0), pot.s.diff(1)];
    let dr = [pot.r.diff(0), pot.r.diff(1)];
    let dy = [pot.y.diff(0), pot.y.diff(1)];
    let dx = lower(cache, &pot.grad_x);
    let gs = cache.raise([&ds[0], &ds[1]]);
    let gr = cache.raise([&dr[0], &dr[1]]);
    let sgn = signs.identity_x_sign();
    let mut rep = ResidualReport::default();

    // ∇^jS = |g|^{-1/2}ε^{jk}(τ·∂_kR − ∂_kY) − τ·∇^jX
    let a: Vec<Field> = (0..2).map(|k| dot_f(tau, &dr[k]).sub(&dy[k])).collect();
    let isd = cache.sqrt_det().map(1, |x, o| o[0] = 1.0 / x[0]);
    let eps_a = [a[1].clone(), a[0].scale(-1.0)];
    let res_s: Vec<Field> = (0..2)
        .map(|j| {
            let rhs = scale_by(&isd, &eps_a[j]).sub(&dot_f(tau, &pot.grad_x[j]).scale(-sgn));
            gs[j].sub(&rhs)
        })
        .collect();
    let both = Field::stack(&[&res_s[0], &res_s[1]]);
    let lhs = Field::stack(&[&gs[0], &gs[1]]);
    rep.push(cache, "grad_s_identity", both, &lhs);

    // ∇^jR = |g|^{-1/2}ε^{kj}(τ∂_kS + τ•∂_kR + ∂_kX) + τ∇^jY + τ•∇^jX
    let b: Vec<Field> = (0..2)
        .map(|k| {
            Field::combine(&[tau, &ds[k], &dr[k], &dx[k]], nb, |_, x, o| {
                for c in 0..nb {
                    o[c] = x[0][c] * x[1][0] - sgn * x[3][c];
                }
                bullet_into(m, 2, x[0], 2, x[2], 1.0, o);
            })
        })
        .collect();
    let eps_b = [b[1].scale(-1.0), b[0].clone()];
    let res_r: Vec<Field> = (0..2)
        .map(|j| {
            let rhs = scale_by(&isd, &eps_b[j])
                .add(&scale_by(&pot.grad_y[j], tau))
                .add(&bullet(m, 2, tau, 2, &pot.grad_x[j]));
            gr[j].sub(&rhs)
        })
        .collect();
    let both = Field::stack(&[&res_r[0], &res_r[1]]);
    let lhs = Field::stack(&[&gr[0], &gr[1]]);
    rep.push(cache, "grad_r_identity", both, &lhs);
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{build_catalog_patch, GridSpec};
    use crate::currents::{stress_tensor, willmore_operator};
    use crate::geometry::compute_geometry;
    use crate::grid::Grid;
    use crate::patch::ImmersionPatch;

    fn full(cache: &GeometryCache, zero: bool) -> (PotentialSet, ResidualReport, ResidualReport) {
        let w = willmore_operator(cache).unwrap();
        let t = stress_tensor(cache).unwrap();
        let ov = if zero { Overrides::zero(cache) } else { Overrides::default() };
        let p = build_potential_set(cache, &w, &t, &ov).unwrap();
        let s = system_residuals(cache, &p);
        let g = gradient_identity_residuals(cache, &p);
        (p, s, g)
    }

    fn orders(name: &str, spec: impl Fn(usize) -> GridSpec, zero: bool, sup_too: bool) {
        let run = |n| full(&compute_geometry(&build_catalog_patch(name, &[], &spec(n)).unwrap()).unwrap(), zero);
        let (_, s1, g1) = run(65);
        let (_, s2, g2) = run(129);
        for (a, b) in s1.entries.iter().chain(&g1.entries).zip(s2.entries.iter().chain(&g2.entries)) {
            let l2 = (a.l2 / b.l2).log2();
            assert!(l2 >= 1.0, "{name} {}: {} -> {} (order {l2})", a.name, a.l2, b.l2);
            if sup_too {
                let sup = (a.sup / b.sup).log2();
                assert!(sup >= 1.0, "{name} {}: {} -> {} (order {sup})", a.name, a.sup, b.sup);
            }
            assert!(b.sup <= 1e-2, "{name} {}: {}", b.name, b.sup);
        }
    }

    #[test]
    fn flat_set_vanishes() {
        let c = compute_geometry(&build_catalog_patch("flat", &[], &GridSpec::square(33)).unwrap()).unwrap();
        let (p, s, g) = full(&c, false);
        for f in [&p.l, &p.r, &p.s, &p.y, p.v.as_ref().unwrap(), p.x.as_ref().unwrap()] {
            assert_eq!(f.sup_norm(), 0.0);
        }
        for e in s.entries.iter().chain(&g.entries) {
            assert!(e.sup <= 1e-12, "{} {}", e.name, e.sup);
        }
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn sphere_zero_overrides_converge() {
        orders("sphere_stereo", GridSpec::square, true, true);
    }

    #[test]
    fn cylinder_full_path_converges() {
        // sup norms are limited by the corners of the Dirichlet rectangle
        orders("cylinder", |n| GridSpec::square(n).with_domain([-1.0, 1.0, -1.0, 1.0]), false, false);
        let c = compute_geometry(&build_catalog_patch("cylinder", &[], &GridSpec::square(65).with_domain([-1.0, 1.0, -1.0, 1.0])).unwrap()).unwrap();
        let (p, _, _) = full(&c, false);
        assert!(p.v.as_ref().unwrap().sup_norm() > 1e-2);
        assert!(p.diagnostic("l_decomposition_sup").unwrap() < 1e-4);
        assert!(p.warnings.is_empty(), "{:?}", p.warnings);
    }

    #[test]
    fn alternate_signs_do_not_close_on_cylinder() {
        let c = compute_geometry(&build_catalog_patch("cylinder", &[], &GridSpec::square(65).with_domain([-1.0, 1.0, -1.0, 1.0])).unwrap()).unwrap();
        let (p, _, _) = full(&c, false);
        let d = system_residuals_with(&c, &p, SignConvention::Derived);
        let a = system_residuals_with(&c, &p, SignConvention::Alternate);
        for name in ["r_equation", "phi_equation"] {
            assert!(a.get(name).unwrap().sup > 1e3 * d.get(name).unwrap().sup);
        }
    }

    #[test]
    fn wavy_graph_identities_converge() {
        let patch = |n: usize| {
            let g = Grid::new(n, n, [-1.0, 1.0, -1.0, 1.0], [false, false]).unwrap();
            let f = Field::from_fn(g, 3, |u, v, o| {
                o[0] = u;
                o[1] = v;
                o[2] = 0.1 * u.sin() * v.cos();
            });
            ImmersionPatch::from_positions("wavy", f).unwrap()
        };
        let sup = |n| {
            let c = compute_geometry(&patch(n)).unwrap();
            let (_, _, g) = full(&c, false);
            [g.entries[0].sup, g.entries[1].sup]
        };
        let (a, b) = (sup(65), sup(129));
        for k in 0..2 {
            assert!((a[k] / b[k]).log2() >= 1.0, "{a:?} {b:?}");
        }
    }
}
