//! Analytic surface catalog.
//!
//! | name | Φ(u, v) | default chart |
//! |------|---------|---------------|
//! | `flat[:m]` | (u, v, 0, ..) ∈ R^m | [-1,1]² |
//! | `sphere_stereo` | (2u, -2v, u²+v²-1)/(1+u²+v²) | [-1,1]² |
//! | `cylinder[:r]` | (r cos u, r sin u, v) | u ∈ [0,2π) periodic, v ∈ [0,1] |
//! | `catenoid[:a]` | (a cosh(v/a) cos u, a cosh(v/a) sin u, v) | u periodic, v ∈ [-1,1] |
//! | `clifford_torus` | `torus_Rr:√2,1` | [0,2π)² periodic |
//! | `torus_Rr:R,r` | ((R + r cos v) cos u, (R + r cos v) sin u, r sin v) | [0,2π)² periodic |
//! | `graph_z2` | (u, v, u²-v², 2uv) ∈ R⁴ | [-1,1]² |
//! | `inverted_catenoid_end[:v_min]` | p/|p|², p the catenoid end v ≥ v_min | punctured [-1,1]² |
//!
//! The sphere chart is stereographic projection with the second coordinate
//! flipped so that ∂₁Φ × ∂₂Φ points outward (H = -1 under the scalar
//! convention H = H⃗·ν).
//!
//! The inverted catenoid end is charted on Cartesian coordinates (x, y) with
//! catenoid parameters θ = arg(x, y), v = v_min - ln|(x, y)|; the origin is the
//! image of the end at infinity and is excluded as a masked node.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::jet::Jet2;
use crate::patch::{ImmersionPatch, JetSource};

#[derive(Clone, Debug, PartialEq)]
pub enum Surface {
    Flat { dim: usize },
    SphereStereo,
    Cylinder { radius: f64 },
    Catenoid { a: f64 },
    Torus { big: f64, small: f64, clifford: bool },
    GraphZ2,
    InvertedCatenoidEnd { v_min: f64 },
}

/// Names accepted by [`Surface::parse`] with a one-line description each.
pub const CATALOG: &[(&str, &str)] = &[
    ("flat", "plane (u, v, 0) in R^m; param m (default 3)"),
    ("sphere_stereo", "unit sphere, stereographic chart, outward normal"),
    ("cylinder", "circular cylinder; param radius (default 1)"),
    ("catenoid", "catenoid; param neck radius a (default 1)"),
    ("clifford_torus", "torus with R = sqrt(2), r = 1"),
    ("torus_Rr", "torus of revolution; params R, r with 0 < r < R"),
    ("graph_z2", "graph of z^2 in R^4 (minimal)"),
    ("inverted_catenoid_end", "catenoid end inverted in the unit sphere; param v_min (default 1)"),
];

/// Grid resolution and optional chart rectangle `[u0, u1, v0, v1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub domain: Option<[f64; 4]>,
}

impl GridSpec {
    pub fn square(n: usize) -> Self {
        GridSpec { nx: n, ny: n, domain: None }
    }

    pub fn with_domain(mut self, domain: [f64; 4]) -> Self {
        self.domain = Some(domain);
        self
    }
}

impl Surface {
    pub fn new(name: &str, params: &[f64]) -> Result<Self> {
        let want = |n: usize| -> Result<()> {
            if params.len() > n {
                Err(Error::InvalidParameter(format!("{name} takes at most {n} parameter(s), got {}", params.len())))
            } else {
                Ok(())
            }
        };
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite parameter for {name}")));
        }
        let s = match name {
            "flat" => {
                want(1)?;
                let m = params.first().copied().unwrap_or(3.0);
                if m.fract() != 0.0 || !(3.0..=8.0).contains(&m) {
                    return Err(Error::InvalidParameter(format!("flat dimension {m} not in 3..=8")));
                }
                Surface::Flat { dim: m as usize }
            }
            "sphere_stereo" => {
                want(0)?;
                Surface::SphereStereo
            }
            "cylinder" => {
                want(1)?;
                let radius = params.first().copied().unwrap_or(1.0);
                if radius <= 0.0 {
                    return Err(Error::InvalidParameter(format!("cylinder radius {radius} must be positive")));
                }
                Surface::Cylinder { radius }
            }
            "catenoid" => {
                want(1)?;
                let a = params.first().copied().unwrap_or(1.0);
                if a <= 0.0 {
                    return Err(Error::InvalidParameter(format!("catenoid neck {a} must be positive")));
                }
                Surface::Catenoid { a }
            }
            "clifford_torus" => {
                want(0)?;
                Surface::Torus { big: 2f64.sqrt(), small: 1.0, clifford: true }
            }
            "torus_Rr" => {
                if params.len() != 2 {
                    return Err(Error::InvalidParameter("torus_Rr needs parameters R,r".into()));
                }
                let (big, small) = (params[0], params[1]);
                if small <= 0.0 || small >= big {
                    return Err(Error::InvalidParameter(format!(
                        "torus_Rr needs 0 < r < R (got R = {big}, r = {small}); the metric degenerates otherwise"
                    )));
                }
                Surface::Torus { big, small, clifford: false }
            }
            "graph_z2" => {
                want(0)?;
                Surface::GraphZ2
            }
            "inverted_catenoid_end" => {
                want(1)?;
                Surface::InvertedCatenoidEnd { v_min: params.first().copied().unwrap_or(1.0) }
            }
            _ => return Err(Error::UnknownSurface(name.to_string())),
        };
        Ok(s)
    }

    /// Parses `NAME[:p1,p2,...]`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, rest) = match spec.split_once(':') {
            Some((n, r)) => (n, Some(r)),
            None => (spec, None),
        };
        let params = match rest {
            Some(r) if !r.is_empty() => r
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidParameter(format!("bad surface parameter `{p}`")))
                })
                .collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        Self::new(name, &params)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Surface::Flat { .. } => "flat",
            Surface::SphereStereo => "sphere_stereo",
            Surface::Cylinder { .. } => "cylinder",
            Surface::Catenoid { .. } => "catenoid",
            Surface::Torus { clifford: true, .. } => "clifford_torus",
            Surface::Torus { .. } => "torus_Rr",
            Surface::GraphZ2 => "graph_z2",
            Surface::InvertedCatenoidEnd { .. } => "inverted_catenoid_end",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Surface::Flat { dim } => *dim,
            Surface::GraphZ2 => 4,
            _ => 3,
        }
    }

    /// Default chart and which axes are angular (periodic over 2π).
    pub fn default_domain(&self) -> [f64; 4] {
        match self {
            Surface::Cylinder { .. } => [0.0, TAU, 0.0, 1.0],
            Surface::Catenoid { .. } => [0.0, TAU, -1.0, 1.0],
            Surface::Torus { .. } => [0.0, TAU, 0.0, TAU],
            _ => [-1.0, 1.0, -1.0, 1.0],
        }
    }

    fn angular(&self) -> [bool; 2] {
        match self {
            Surface::Cylinder { .. } | Surface::Catenoid { .. } => [true, false],
            Surface::Torus { .. } => [true, true],
            _ => [false, false],
        }
    }

    /// Closed-form 2-jet at (u, v); `None` at a singular point of the chart.
    pub fn eval(&self, u: f64, v: f64) -> Option<Vec<Jet2>> {
        let (ju, jv) = (Jet2::var_u(u), Jet2::var_v(v));
        let c = Jet2::constant;
        let out = match *self {
            Surface::Flat { dim } => {
                let mut x = vec![c(0.0); dim];
                x[0] = ju;
                x[1] = jv;
                x
            }
            Surface::SphereStereo => {
                let q = (ju * ju + jv * jv + 1.0).recip();
                vec![ju * q * 2.0, jv * q * -2.0, c(1.0) - q * 2.0]
            }
            Surface::Cylinder { radius } => vec![ju.cos() * radius, ju.sin() * radius, jv],
            Surface::Catenoid { a } => {
                let r = (jv * (1.0 / a)).cosh() * a;
                vec![r * ju.cos(), r * ju.sin(), jv]
            }
            Surface::Torus { big, small, .. } => {
                let r = jv.cos() * small + big;
                vec![r * ju.cos(), r * ju.sin(), jv.sin() * small]
            }
            Surface::GraphZ2 => vec![ju, jv, ju * ju - jv * jv, ju * jv * 2.0],
            Surface::InvertedCatenoidEnd { v_min } => {
                if u * u + v * v < 1e-24 {
                    return None;
                }
                let rho = (ju * ju + jv * jv).sqrt();
                let (ct, st) = (ju / rho, jv / rho);
                let s = c(v_min) - rho.ln();
                let ch = s.cosh();
                let p = [ch * ct, ch * st, s];
                let r2 = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).recip();
                p.iter().map(|&x| x * r2).collect()
            }
        };
        Some(out)
    }

    /// Analytic-jet patch on the requested grid.
    pub fn patch(&self, spec: &GridSpec) -> Result<ImmersionPatch> {
        let domain = spec.domain.unwrap_or_else(|| self.default_domain());
        let ang = self.angular();
        let periodic = [
            ang[0] && ((domain[1] - domain[0]) - TAU).abs() < 1e-12,
            ang[1] && ((domain[3] - domain[2]) - TAU).abs() < 1e-12,
        ];
        let grid = Grid::new(spec.nx, spec.ny, domain, periodic)?;
        let m = self.dim();
        let mut jets: Vec<Field> = (0..6).map(|_| Field::zeros(grid, m)).collect();
        for k in 0..grid.len() {
            let (u, v) = grid.coords(k);
            match self.eval(u, v) {
                Some(x) if x.iter().all(Jet2::all_finite) => {
                    for (c, j) in x.iter().enumerate() {
                        jets[0].at_mut(k)[c] = j.v;
                        jets[1].at_mut(k)[c] = j.du;
                        jets[2].at_mut(k)[c] = j.dv;
                        jets[3].at_mut(k)[c] = j.duu;
                        jets[4].at_mut(k)[c] = j.duv;
                        jets[5].at_mut(k)[c] = j.dvv;
                    }
                }
                _ => jets.iter_mut().for_each(|f| f.set_valid(k, false)),
            }
        }
        let mut it = jets.into_iter();
        let mut next = || it.next().unwrap();
        let position = next();
        let d = [next(), next()];
        let dd = [next(), next(), next()];
        ImmersionPatch::from_jets(self.name(), position, d, dd, JetSource::Analytic, 0)
    }
}

/// `build_catalog_patch(name, params, grid)`.
pub fn build_catalog_patch(name: &str, params: &[f64], spec: &GridSpec) -> Result<ImmersionPatch> {
    Surface::new(name, params)?.patch(spec)
}

/// Closed-form Willmore energy of the Clifford torus, 2π².
pub const CLIFFORD_ENERGY: f64 = 2.0 * PI * PI;
