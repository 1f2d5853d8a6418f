//! The example problems: Willmore, conformally-constrained Willmore,
//! Helfrich (bilayer) and Chen's biharmonic problem, closed-surface
//! integrals for the balancing condition, and an explicit Willmore flow.

use std::f64::consts::PI;

use crate::currents::{contract_sym, h_dot, raise_sym, stress_tensor, willmore_operator};
use crate::error::{Error, Result};
use crate::exterior::{binomial, cross3, dot, star_into, wedge_into};
use crate::fieldops::{dot_f, lin};
use crate::geometry::{compute_geometry, sym_index, GeometryCache, Quadrature};
use crate::grid::Field;
use crate::patch::ImmersionPatch;
use crate::potentials::{build_potential_set, gradient_identity_residuals, system_residuals, Overrides, PotentialSet, ResidualReport};

/// Tolerance on g_ij q^{ij} for the constrained problem.
pub const TRACE_TOL: f64 = 1e-8;
/// Transversality defect above which a warning is issued.
pub const TRANSVERSE_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct ProblemOutput {
    /// W⃗ evaluated on the patch.
    pub operator: Field,
    /// Right-hand side of the Euler–Lagrange equation.
    pub forcing: Field,
    /// operator − forcing
    pub residual: Field,
    pub potentials: PotentialSet,
    /// System residuals followed by the gradient-identity residuals.
    pub report: ResidualReport,
    /// Scalar checks specific to the problem (sorted by name).
    pub checks: Vec<(String, f64)>,
    /// Additional per-node fields (name, field).
    pub fields: Vec<(String, Field)>,
    pub warnings: Vec<String>,
}

impl ProblemOutput {
    pub fn check(&self, key: &str) -> Option<f64> {
        self.checks.iter().find(|c| c.0 == key).map(|c| c.1)
    }
}

fn normalise_zero(f: Field) -> Field {
    f.map(f.ncomp(), |x, o| {
        for c in 0..x.len() {
            o[c] = x[c] + 0.0;
        }
    })
}

fn finish(
    cache: &GeometryCache,
    operator: Field,
    forcing: Field,
    overrides: &Overrides,
    mut checks: Vec<(String, f64)>,
    fields: Vec<(String, Field)>,
    mut warnings: Vec<String>,
) -> Result<ProblemOutput> {
    let t = stress_tensor(cache)?;
    let residual = operator.sub(&forcing);
    let potentials = build_potential_set(cache, &operator, &t, overrides)?;
    let mut report = system_residuals(cache, &potentials);
    report.entries.extend(gradient_identity_residuals(cache, &potentials).entries);
    warnings.extend(potentials.warnings.iter().cloned());
    checks.push(("el_residual_sup".into(), residual.sup_norm()));
    checks.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(ProblemOutput { operator, forcing, residual, potentials, report, checks, fields, warnings })
}

/// Willmore problem: W⃗ with V⃗ = X⃗ = Y = 0.
pub fn willmore_problem(cache: &GeometryCache) -> Result<ProblemOutput> {
    let w = willmore_operator(cache)?;
    let forcing = Field::zeros(*cache.grid(), cache.dim()).restrict(w.mask());
    finish(cache, w, forcing, &Overrides::zero(cache), Vec::new(), Vec::new(), Vec::new())
}

/// Validates a contravariant 2-tensor `q` (components q¹¹, q¹², q²¹, q²²):
/// symmetry and tracelessness are hard errors; returns the transversality
/// defect sup|∇_j q^{ij}|.
pub fn validate_q(cache: &GeometryCache, q: &Field) -> Result<f64> {
    if q.ncomp() != 4 {
        return Err(Error::DimensionMismatch(4, q.ncomp()));
    }
    if q.grid() != cache.grid() {
        return Err(Error::Validation("q lives on a different grid".into()));
    }
    if q.has_non_finite() {
        return Err(Error::NonFinite("q".into()));
    }
    for k in q.valid_nodes().filter(|&k| cache.mask()[k]) {
        let x = q.at(k);
        let scale = x.iter().map(|v| v.abs()).fold(1.0, f64::max);
        if (x[1] - x[2]).abs() > 1e-12 * scale {
            let (i, j) = q.grid().ij(k);
            return Err(Error::Validation(format!("q not symmetric at node ({i}, {j})")));
        }
        let g = cache.metric().at(k);
        let tr = g[0] * x[0] + g[1] * (x[1] + x[2]) + g[2] * x[3];
        if tr.abs() > TRACE_TOL {
            let (i, j) = q.grid().ij(k);
            return Err(Error::Validation(format!("q not traceless: g_ij q^ij = {tr:e} at node ({i}, {j})")));
        }
    }
    // ∇_j q^{ij} = ∂_j q^{ij} + Γ^i_{jk} q^{kj} + Γ^j_{jk} q^{ik}
    let dq = [q.diff(0), q.diff(1)];
    let div = Field::combine(&[q, &dq[0], &dq[1], cache.christoffel()], 2, |_, x, o| {
        let qq = |i: usize, j: usize| x[0][2 * i + j];
        let chr = |c: usize, i: usize, j: usize| x[3][3 * c + sym_index(i, j)];
        for i in 0..2 {
            let mut s = x[1][2 * i] + x[2][2 * i + 1];
            for j in 0..2 {
                for k in 0..2 {
                    s += chr(i, j, k) * qq(k, j) + chr(j, j, k) * qq(i, k);
                }
            }
            o[i] = s;
        }
    });
    Ok(div.sup_norm())
}

/// Conformally-constrained Willmore: W⃗ = (h⃗₀)_{ij} q^{ij} with the choice
/// ∇^jV⃗ = −q^{ij}∂_iΦ⃗, X⃗ = 0, Y = 0.
pub fn constrained_problem(cache: &GeometryCache, q: &Field) -> Result<ProblemOutput> {
    let transverse = validate_q(cache, q)?;
    let m = cache.dim();
    let mut warnings = Vec::new();
    if transverse > TRANSVERSE_TOL {
        warnings.push(format!("q not transverse: sup |div q| = {transverse:.3e} > {TRANSVERSE_TOL:e}"));
    }
    let w = willmore_operator(cache)?;
    let q = q.restrict(cache.mask());
    // (h⃗ − H⃗ g)_{ij} q^{ij}
    let forcing = Field::combine(&[&q, cache.second_fundamental(), cache.mean_curvature(), cache.metric()], m, |_, x, o| {
        let (qq, h, hv, g) = (x[0], x[1], x[2], x[3]);
        let qs = [qq[0], 0.5 * (qq[1] + qq[2]), qq[3]];
        for c in 0..m {
            let h0 = [h[c] - hv[c] * g[0], h[m + c] - hv[c] * g[1], h[2 * m + c] - hv[c] * g[2]];
            o[c] = contract_sym(qs, h0);
        }
    })
    .restrict(w.mask());
    let forcing = normalise_zero(forcing);
    let grad_v: Vec<Field> = (0..2)
        .map(|j| {
            let f = Field::combine(&[&q, cache.frame(0), cache.frame(1)], m, |_, x, o| {
                for c in 0..m {
                    o[c] = -(x[0][j] * x[1][c] + x[0][2 + j] * x[2][c]);
                }
            });
            normalise_zero(f)
        })
        .collect();
    let zero = Overrides::zero(cache);
    let ov = Overrides { grad_v: Some([grad_v[0].clone(), grad_v[1].clone()]), grad_x: zero.grad_x, y: zero.y };
    let dotc = lin(&[(1.0, &dot_f(&grad_v[0], cache.frame(0))), (1.0, &dot_f(&grad_v[1], cache.frame(1)))]);
    let nb = binomial(m, 2);
    let wedgec = Field::combine(&[&grad_v[0], &grad_v[1], cache.frame(0), cache.frame(1)], nb, |_, x, o| {
        wedge_into(m, 1, x[0], 1, x[2], 1.0, o);
        wedge_into(m, 1, x[1], 1, x[3], 1.0, o);
    });
    let checks = vec![
        ("gradv_dot_dphi_sup".to_string(), dotc.sup_norm()),
        ("gradv_wedge_dphi_sup".to_string(), wedgec.sup_norm()),
        ("q_transversality_sup".to_string(), transverse),
    ];
    finish(cache, w, forcing, &ov, checks, Vec::new(), warnings)
}

/// Per-node scalar second fundamental form h_ij = h⃗_ij·ν, raised h^{ij},
/// scalar H and h^i_j h^j_i (m = 3).
fn scalar_curvatures(h: &[f64], nu: &[f64], gi: &[f64]) -> ([f64; 3], [f64; 3], f64, f64) {
    let hs = h_dot(h, nu, 3);
    let up = raise_sym(gi, hs);
    let hh = contract_sym(up, hs);
    let hm = 0.5 * contract_sym([gi[0], gi[1], gi[2]], hs);
    (hs, up, hm, hh)
}

/// Helfrich (Canham–Helfrich) problem in R³ with multipliers α (area),
/// β (volume) and γ (total curvature).
pub fn helfrich_problem(cache: &GeometryCache, alpha: f64, beta: f64, gamma: f64) -> Result<ProblemOutput> {
    cache.require_codim1()?;
    for (n, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
        if !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{n} = {v}")));
        }
    }
    let w = willmore_operator(cache)?;
    let nu = cache.gauss_map();
    let forcing = Field::combine(&[cache.mean_curvature(), nu, cache.second_fundamental(), cache.inv_metric()], 3, |_, x, o| {
        let (_, _, hm, hh) = scalar_curvatures(x[2], x[1], x[3]);
        for c in 0..3 {
            o[c] = 2.0 * alpha * x[0][c] + beta * x[1][c] - gamma * (0.5 * hh - 2.0 * hm * hm) * x[1][c];
        }
    })
    .restrict(w.mask());
    // ∇^jV⃗ = −α∇^jΦ⃗ + (β/2)|g|^{-1/2}ε^{ij}Φ⃗×∂_iΦ⃗ + (γ/2)(h^{ij} − 2Hg^{ij})∂_iΦ⃗
    // ∇^jX⃗ = (β/4)|g|^{-1/2}ε^{ij}|Φ⃗|²∂_iΦ⃗  (vector form; stored as ⋆ of it)
    let inputs = [cache.position(), cache.frame(0), cache.frame(1), cache.sqrt_det(), cache.inv_metric(), cache.second_fundamental(), nu];
    let mut gv = Vec::new();
    let mut gx = Vec::new();
    let mut gx_vec = Vec::new();
    for j in 0..2 {
        gv.push(Field::combine(&inputs, 3, |_, x, o| {
            let (p, d, sd, gi) = (x[0], [x[1], x[2]], x[3][0], x[4]);
            let (_, up, hm, _) = scalar_curvatures(x[5], x[6], gi);
            let g2 = [[gi[0], gi[1]], [gi[1], gi[2]]];
            let u2 = [[up[0], up[1]], [up[1], up[2]]];
            // ε^{ij}∂_iΦ: j = 1 → −∂₂Φ, j = 2 → ∂₁Φ
            let (eps_i, eps_s) = if j == 0 { (1, -1.0) } else { (0, 1.0) };
            let pc = cross3(p, d[eps_i]);
            for c in 0..3 {
                let mut s = 0.0;
                for i in 0..2 {
                    s += (-alpha * g2[i][j] + 0.5 * gamma * (u2[i][j] - 2.0 * hm * g2[i][j])) * d[i][c];
                }
                o[c] = s + 0.5 * beta / sd * eps_s * pc[c];
            }
        }));
        let xv = Field::combine(&inputs[..4], 3, |_, x, o| {
            let (p, d, sd) = (x[0], [x[1], x[2]], x[3][0]);
            let (eps_i, eps_s) = if j == 0 { (1, -1.0) } else { (0, 1.0) };
            let r2 = dot(p, p);
            for c in 0..3 {
                o[c] = 0.25 * beta / sd * eps_s * r2 * d[eps_i][c];
            }
        });
        gx.push(xv.map(3, |a, o| star_into(3, 1, a, o)));
        gx_vec.push(xv);
    }
    let gv = [normalise_zero(gv[0].clone()), normalise_zero(gv[1].clone())];
    let gx = [normalise_zero(gx[0].clone()), normalise_zero(gx[1].clone())];
    // Δ_gY = ∇^jV⃗·∂_jΦ⃗ should equal −2α − γH + βΦ⃗·ν
    let yrhs = lin(&[(1.0, &dot_f(&gv[0], cache.frame(0))), (1.0, &dot_f(&gv[1], cache.frame(1)))]);
    let closed = Field::combine(&[cache.position(), nu, cache.second_fundamental(), cache.inv_metric()], 1, |_, x, o| {
        let (_, _, hm, _) = scalar_curvatures(x[2], x[1], x[3]);
        o[0] = -2.0 * alpha - gamma * hm + beta * dot(x[0], x[1]);
    });
    // algebraic identities n×∇^jX = (β/4)|Φ|²∇^jΦ and ∇^jX×∂_jΦ = (β/2)|Φ|²n
    let gphi = cache.grad_phi_up();
    let mut xprop1 = 0.0f64;
    for j in 0..2 {
        let f = Field::combine(&[nu, &gx_vec[j], &gphi[j], cache.position()], 3, |_, x, o| {
            let c = cross3(x[0], x[1]);
            let r2 = dot(x[3], x[3]);
            for i in 0..3 {
                o[i] = c[i] - 0.25 * beta * r2 * x[2][i];
            }
        });
        xprop1 = xprop1.max(f.sup_norm());
    }
    let xprop2 = Field::combine(&[&gx_vec[0], &gx_vec[1], cache.frame(0), cache.frame(1), nu, cache.position()], 3, |_, x, o| {
        let a = cross3(x[0], x[2]);
        let b = cross3(x[1], x[3]);
        let r2 = dot(x[5], x[5]);
        for i in 0..3 {
            o[i] = a[i] + b[i] - 0.5 * beta * r2 * x[4][i];
        }
    })
    .sup_norm();
    let checks = vec![
        ("xprop_cross_sup".to_string(), xprop1),
        ("xprop_wedge_sup".to_string(), xprop2),
        ("y_rhs_defect_sup".to_string(), yrhs.sub(&closed).sup_norm()),
    ];
    let ov = Overrides { grad_v: Some(gv), grad_x: Some(gx), y: None };
    finish(cache, w, forcing, &ov, checks, vec![("y_rhs".into(), yrhs)], Vec::new())
}

/// Chen's problem: biharmonic defect Δ_gH⃗, the product-rule identity for
/// Δ_g(Φ⃗·H⃗), and the system with Y = Φ⃗·H⃗.
pub fn chen_problem(cache: &GeometryCache) -> Result<ProblemOutput> {
    let m = cache.dim();
    let hv = cache.mean_curvature();
    let w = willmore_operator(cache)?;
    let bih = cache.laplace_beltrami(hv)?;
    let phih = dot_f(cache.position(), hv);
    let lap_phih = cache.laplace_beltrami(&phih)?;
    let dh = [hv.diff(0), hv.diff(1)];
    let gphi = cache.grad_phi_up();
    // Δ_g(Φ·H) − [2|H|² + 2∇^jΦ·∂_jH + Φ·Δ_gH]
    let identity = Field::combine(&[&lap_phih, hv, &gphi[0], &gphi[1], &dh[0], &dh[1], cache.position(), &bih], 1, |_, x, o| {
        let rhs = 2.0 * dot(x[1], x[1]) + 2.0 * (dot(x[2], x[4]) + dot(x[3], x[5])) + dot(x[6], x[7]);
        o[0] = x[0][0] - rhs;
    });
    let forcing = Field::combine(&[hv, cache.second_fundamental(), cache.inv_metric()], m, |_, x, o| {
        let (hv, h, gi) = (x[0], x[1], x[2]);
        let up = raise_sym(gi, h_dot(h, hv, m));
        let h2 = dot(hv, hv);
        for c in 0..m {
            o[c] = 2.0 * (up[0] * h[c] + 2.0 * up[1] * h[m + c] + up[2] * h[2 * m + c]) - 2.0 * h2 * hv[c];
        }
    })
    .restrict(w.mask());
    // ∇^jV⃗ = |H⃗|²∇^jΦ⃗ − 2(H⃗·h⃗^{jk})∂_kΦ⃗
    let gv: Vec<Field> = (0..2)
        .map(|j| {
            Field::combine(&[hv, cache.second_fundamental(), cache.inv_metric(), &gphi[j], cache.frame(0), cache.frame(1)], m, |_, x, o| {
                let up = raise_sym(x[2], h_dot(x[1], x[0], m));
                let u2 = [[up[0], up[1]], [up[1], up[2]]];
                let h2 = dot(x[0], x[0]);
                for c in 0..m {
                    o[c] = h2 * x[3][c] - 2.0 * (u2[j][0] * x[4][c] + u2[j][1] * x[5][c]) + 0.0;
                }
            })
        })
        .collect();
    let zero = Overrides::zero(cache);
    let ov = Overrides { grad_v: Some([gv[0].clone(), gv[1].clone()]), grad_x: zero.grad_x, y: Some(phih.clone()) };
    let checks = vec![
        ("biharmonic_sup".to_string(), bih.sup_norm()),
        ("identity_l2".to_string(), cache.l2_norm(&identity)),
        ("identity_sup".to_string(), identity.sup_norm()),
    ];
    let fields = vec![("biharmonic".to_string(), bih), ("identity".to_string(), identity)];
    finish(cache, w, forcing, &ov, checks, fields, Vec::new())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosedSurfaceIntegrals {
    pub area: f64,
    /// M = ∫H dvol
    pub total_curvature: f64,
    /// ∫Φ⃗·ν dvol
    pub volume: f64,
    /// 2αA + γM − βV
    pub balancing_residual: f64,
    /// Area attributed to the part of the surface outside the chart (0 for
    /// periodic charts).
    pub tail_area: f64,
}

/// Area of the stereographic chart rectangle [0,a]×[0,b] (odd in a and b).
fn stereo_quadrant_area(a: f64, b: f64) -> f64 {
    let (sa, sb) = ((1.0 + a * a).sqrt(), (1.0 + b * b).sqrt());
    2.0 * (a / sa * (b / sa).atan() + b / sb * (a / sb).atan())
}

/// Quadrature rule over a closed surface: either a fully periodic chart
/// (rectangle rule) or the unit-sphere stereographic chart, where the cap
/// outside the chart rectangle is added with its exact area times the
/// integrand's mean over the outermost ring of nodes.
#[derive(Clone, Debug)]
pub struct ClosedQuadrature {
    tail: f64,
    ring: Vec<usize>,
}

impl ClosedQuadrature {
    pub fn new(cache: &GeometryCache) -> Result<Self> {
        let g = *cache.grid();
        let closed = g.fully_periodic() || (cache.patch().name() == "sphere_stereo" && g.periodic == [false, false]);
        if !closed {
            return Err(Error::Validation("balancing requires closed surface".into()));
        }
        if cache.mask().iter().any(|&v| !v) {
            return Err(Error::Validation("balancing requires closed surface: chart has invalid nodes".into()));
        }
        if g.fully_periodic() {
            return Ok(Self { tail: 0.0, ring: Vec::new() });
        }
        let (u1, v1) = (g.upper(0), g.upper(1));
        let rect = stereo_quadrant_area(u1, v1) - stereo_quadrant_area(g.u0, v1) - stereo_quadrant_area(u1, g.v0)
            + stereo_quadrant_area(g.u0, g.v0);
        let ring = (0..g.len()).filter(|&k| g.edge_distance(k) == 0).collect();
        Ok(Self { tail: 4.0 * PI - rect, ring })
    }

    /// Area attributed to the part of the surface outside the chart.
    pub fn tail_area(&self) -> f64 {
        self.tail
    }

    pub fn integrate(&self, cache: &GeometryCache, f: &Field) -> f64 {
        if self.ring.is_empty() {
            return cache.surface_integral(f);
        }
        let mean = self.ring.iter().map(|&k| f.at(k)[0]).sum::<f64>() / self.ring.len() as f64;
        cache.surface_integral_with(f, Quadrature::Gregory) + self.tail * mean
    }
}

/// A, M, V and the balancing residual for a closed surface.
pub fn closed_surface_integrals(cache: &GeometryCache, alpha: f64, beta: f64, gamma: f64) -> Result<ClosedSurfaceIntegrals> {
    cache.require_codim1()?;
    let quad = ClosedQuadrature::new(cache)?;
    let hs = cache.scalar_mean()?;
    let pn = dot_f(cache.position(), cache.gauss_map());
    let one = cache.sqrt_det().map(1, |_, o| o[0] = 1.0);
    let (area, m, vol) = (quad.integrate(cache, &one), quad.integrate(cache, &hs), quad.integrate(cache, &pn));
    Ok(ClosedSurfaceIntegrals {
        area,
        total_curvature: m,
        volume: vol,
        balancing_residual: 2.0 * alpha * area + gamma * m - beta * vol,
        tail_area: quad.tail_area(),
    })
}

/// One row of the flow's energy trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowRow {
    pub step: usize,
    pub energy: f64,
    pub sup_w: f64,
    pub det_g_min: f64,
}

#[derive(Clone, Debug)]
pub struct FlowTrace {
    pub rows: Vec<FlowRow>,
    /// Explicit sub-steps taken per requested step.
    pub substeps: usize,
    pub patch: ImmersionPatch,
}

/// Largest stable explicit step for Φ ← Φ − τW⃗ (W ~ Δ², with the 4th-order
/// first-derivative stencil's largest symbol ≈ 1.37/h), halved for safety.
fn stable_step(cache: &GeometryCache) -> f64 {
    let g = cache.grid();
    let (mut a1, mut a2) = (0.0f64, 0.0f64);
    for k in cache.inv_metric().valid_nodes() {
        let gi = cache.inv_metric().at(k);
        a1 = a1.max(gi[0] + gi[1].abs());
        a2 = a2.max(gi[2] + gi[1].abs());
    }
    let s = 1.37f64.powi(2);
    let lam = (s * (a1 / g.spacing(0).powi(2) + a2 / g.spacing(1).powi(2))).powi(2);
    1.0 / lam
}

/// Explicit Euler Willmore flow: Φ⃗ ← Φ⃗ − τW⃗ on nodes where W⃗ is defined,
/// the collar outside is clamped; partials are refreshed by finite
/// differences after every sub-step.
pub fn willmore_flow(patch: &ImmersionPatch, tau: f64, steps: usize) -> Result<FlowTrace> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    let mut cur = ImmersionPatch::from_positions(patch.name(), patch.position().clone())?;
    let geometry = |p: &ImmersionPatch, step: usize| -> Result<(GeometryCache, Field)> {
        let c = compute_geometry(p).map_err(|e| match e {
            Error::ImmersionDegenerate { det, .. } => Error::FlowDegenerate { step, det },
            e => e,
        })?;
        let det = c.det_min();
        if det < crate::patch::DET_MIN {
            return Err(Error::FlowDegenerate { step, det });
        }
        let w = willmore_operator(&c)?;
        Ok((c, w))
    };
    let (c0, w0) = geometry(&cur, 0)?;
    let sub = (tau / stable_step(&c0)).ceil().max(1.0) as usize;
    let dt = tau / sub as f64;
    let mut rows = vec![FlowRow { step: 0, energy: c0.willmore_energy(), sup_w: w0.sup_norm(), det_g_min: c0.det_min() }];
    let mut state = (c0, w0);
    for step in 1..=steps {
        for _ in 0..sub {
            let (_, w) = &state;
            let mut pos = cur.position().clone();
            for k in w.valid_nodes() {
                let wk = w.at(k).to_vec();
                for (x, wc) in pos.at_mut(k).iter_mut().zip(&wk) {
                    *x -= dt * wc;
                }
            }
            if pos.has_non_finite() {
                return Err(Error::FlowDegenerate { step, det: f64::NAN });
            }
            cur = ImmersionPatch::from_positions(patch.name(), pos)?;
            state = geometry(&cur, step)?;
        }
        let (c, w) = &state;
        rows.push(FlowRow { step, energy: c.willmore_energy(), sup_w: w.sup_norm(), det_g_min: c.det_min() });
    }
    Ok(FlowTrace { rows, substeps: sub, patch: cur })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{build_catalog_patch, GridSpec};

    fn cache(name: &str, params: &[f64], spec: GridSpec) -> GeometryCache {
        compute_geometry(&build_catalog_patch(name, params, &spec).unwrap()).unwrap()
    }

    fn q_field(c: &GeometryCache, f: impl Fn(&[f64]) -> [f64; 4]) -> Field {
        c.metric().map(4, |g, o| o.copy_from_slice(&f(g)))
    }

    #[test]
    fn willmore_problem_on_minimal_surfaces() {
        for (name, spec) in [("catenoid", GridSpec::square(33)), ("graph_z2", GridSpec::square(33))] {
            let c = cache(name, &[], spec);
            let out = willmore_problem(&c).unwrap();
            assert!(out.operator.sup_norm() < 1e-9, "{name}");
            assert!(c.willmore_energy() < 1e-12, "{name}");
        }
    }

    #[test]
    fn zero_q_is_willmore() {
        let c = cache("sphere_stereo", &[], GridSpec::square(33));
        let a = willmore_problem(&c).unwrap();
        let q = Field::zeros(*c.grid(), 4);
        let b = constrained_problem(&c, &q).unwrap();
        assert_eq!(a.residual.data(), b.residual.data());
        assert_eq!(a.forcing.data(), b.forcing.data());
        for (x, y) in a.report.entries.iter().zip(&b.report.entries) {
            assert_eq!(x.field.data(), y.field.data(), "{}", x.name);
        }
        assert_eq!(a.potentials.s.data(), b.potentials.s.data());
    }

    #[test]
    fn sphere_trace_free_part_vanishes() {
        let c = cache("sphere_stereo", &[], GridSpec::square(33));
        // traceless: q = [[a, b], [b, c]] with g11 a + 2 g12 b + g22 c = 0
        let q = q_field(&c, |g| {
            let (a, b) = (0.3, -0.2);
            let cc = -(g[0] * a + 2.0 * g[1] * b) / g[2];
            [a, b, b, cc]
        });
        let out = constrained_problem(&c, &q).unwrap();
        assert!(out.forcing.sup_norm() < 1e-12);
        assert!(out.check("gradv_dot_dphi_sup").unwrap() < 1e-12);
    }

    #[test]
    fn q_validation() {
        let c = cache("sphere_stereo", &[], GridSpec::square(17));
        let q = q_field(&c, |g| [0.1 / (g[0] + g[2]), 0.0, 0.0, 0.1 / (g[0] + g[2])]);
        let e = constrained_problem(&c, &q).unwrap_err().to_string();
        assert!(e.contains("q not traceless"), "{e}");
        let q = q_field(&c, |_| [0.0, 1.0, 0.0, 0.0]);
        assert!(constrained_problem(&c, &q).unwrap_err().to_string().contains("symmetric"));
    }

    #[test]
    fn helfrich_zero_multipliers_is_willmore() {
        let c = cache("sphere_stereo", &[], GridSpec::square(33));
        let out = helfrich_problem(&c, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(out.forcing.sup_norm(), 0.0);
        assert_eq!(out.residual.data(), out.operator.data());
    }

    #[test]
    fn sphere_is_helfrich_critical() {
        let c = cache("sphere_stereo", &[], GridSpec::square(129));
        for (a, g) in [(1.0, 0.0), (1.0, 1.0), (0.5, -2.0)] {
            let b = 2.0 * a - g;
            let out = helfrich_problem(&c, a, b, g).unwrap();
            assert!(out.residual.sup_norm() <= 1e-6, "{a} {g}: {}", out.residual.sup_norm());
            assert!(out.check("xprop_cross_sup").unwrap() <= 1e-10);
            assert!(out.check("xprop_wedge_sup").unwrap() <= 1e-10);
            assert!(out.check("y_rhs_defect_sup").unwrap() <= 1e-10);
            let off = helfrich_problem(&c, a, b + 1.0, g).unwrap();
            assert!((off.residual.sup_norm() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn helfrich_needs_r3() {
        let c = cache("graph_z2", &[], GridSpec::square(17));
        assert!(helfrich_problem(&c, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn chen_examples() {
        let c = cache("catenoid", &[], GridSpec::square(33));
        let out = chen_problem(&c).unwrap();
        assert!(out.check("biharmonic_sup").unwrap() < 1e-9);
        assert!(out.forcing.sup_norm() < 1e-9);

        let c = cache("sphere_stereo", &[], GridSpec::square(65));
        let out = chen_problem(&c).unwrap();
        let b = &out.fields[0].1;
        for k in b.valid_nodes() {
            assert!((dot(b.at(k), b.at(k)).sqrt() - 2.0).abs() < 1e-4);
        }

        let id = |n| {
            let c = cache("cylinder", &[], GridSpec::square(n).with_domain([-1.0, 1.0, -1.0, 1.0]));
            chen_problem(&c).unwrap().check("identity_sup").unwrap()
        };
        let (a, b) = (id(33), id(65));
        assert!(b < 1e-4 && (a <= 1e-12 || (a / b).log2() >= 1.7), "{a} {b}");
    }

    #[test]
    fn sphere_closed_integrals() {
        let c = cache("sphere_stereo", &[], GridSpec::square(257).with_domain([-14.0, 14.0, -14.0, 14.0]));
        let s = closed_surface_integrals(&c, 1.0, 1.0, 1.0).unwrap();
        let fp = 4.0 * PI;
        assert!((s.area - fp).abs() < 1e-6, "{}", s.area - fp);
        assert!((s.total_curvature + fp).abs() < 1e-6, "{}", s.total_curvature + fp);
        assert!((s.volume - fp).abs() < 1e-6, "{}", s.volume - fp);
        let scale = s.area + s.total_curvature.abs() + s.volume;
        assert!(s.balancing_residual.abs() <= 1e-6 * scale);
        // the balancing residual is the integral of the right-hand side of the Y equation
        let out = helfrich_problem(&c, 1.0, 2.0, 0.5).unwrap();
        let q = ClosedQuadrature::new(&c).unwrap();
        let bal = closed_surface_integrals(&c, 1.0, 2.0, 0.5).unwrap().balancing_residual;
        assert!(q.integrate(&c, &out.fields[0].1).is_finite());
        let hs = c.scalar_mean().unwrap();
        let pn = dot_f(c.position(), c.gauss_map());
        let y = Field::combine(&[&hs, &pn], 1, |_, x, o| o[0] = -2.0 - 0.5 * x[0][0] + 2.0 * x[1][0]);
        assert!((q.integrate(&c, &y) + bal).abs() <= 1e-12 * scale);
    }

    #[test]
    fn torus_balancing_and_open_charts() {
        let c = cache("clifford_torus", &[], GridSpec::square(64));
        let s = closed_surface_integrals(&c, 1.0, 0.0, 0.0).unwrap();
        let area = 4.0 * PI * PI * 2f64.sqrt();
        assert!((s.area - area).abs() < 1e-8);
        assert!((s.balancing_residual - 2.0 * s.area).abs() < 1e-12);
        let c = cache("cylinder", &[], GridSpec::square(33));
        let e = closed_surface_integrals(&c, 1.0, 0.0, 0.0).unwrap_err().to_string();
        assert!(e.contains("balancing requires closed surface"));
    }

    #[test]
    fn flat_flow_is_fixed() {
        let p = build_catalog_patch("flat", &[], &GridSpec::square(17)).unwrap();
        let t = willmore_flow(&p, 1e-4, 5).unwrap();
        // FD partials of a linear map leave only roundoff
        assert!(t.rows.iter().all(|r| r.energy == t.rows[0].energy && r.energy < 1e-24));
    }

    #[test]
    fn sphere_flow_drift() {
        let p = build_catalog_patch("sphere_stereo", &[], &GridSpec::square(21)).unwrap();
        let t = willmore_flow(&p, 1e-4, 50).unwrap();
        let e0 = t.rows[0].energy;
        for r in &t.rows {
            assert!((r.energy - e0).abs() <= 1e-6, "step {}: {}", r.step, r.energy - e0);
        }
    }

    #[test]
    fn cylinder_flow_descends() {
        let p = build_catalog_patch("cylinder", &[], &GridSpec { nx: 24, ny: 25, domain: Some([0.0, TAU_, 0.0, 4.0]) }).unwrap();
        let t = willmore_flow(&p, 1e-4, 50).unwrap();
        assert_eq!(t.rows.len(), 51);
        for w in t.rows.windows(2) {
            assert!(w[1].energy < w[0].energy, "step {}: {} -> {}", w[1].step, w[0].energy, w[1].energy);
        }
    }

    const TAU_: f64 = std::f64::consts::TAU;

    #[test]
    fn bad_tau() {
        let p = build_catalog_patch("flat", &[], &GridSpec::square(17)).unwrap();
        assert!(willmore_flow(&p, 0.0, 1).is_err());
    }
}
