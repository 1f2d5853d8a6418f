//! Gridded 2-jets of an immersion Φ: D → R^m.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

pub const DET_MIN: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JetSource {
    Analytic,
    FiniteDifference,
}

/// Position and first/second partials of Φ at every node.
///
/// `position` may be valid on more nodes than the derivative jets (e.g. the
/// outer layers of a finite-difference patch); the patch mask is the mask of
/// the derivative jets.
#[derive(Clone, Debug)]
pub struct ImmersionPatch {
    name: String,
    dim: usize,
    position: Field,
    d: [Field; 2],
    dd: [Field; 3],
    source: JetSource,
    margin: usize,
}

impl ImmersionPatch {
    /// Assembles a patch from jets; `dd` holds ∂₁₁Φ, ∂₁₂Φ, ∂₂₂Φ.
    pub fn from_jets(
        name: &str,
        position: Field,
        d: [Field; 2],
        dd: [Field; 3],
        source: JetSource,
        margin: usize,
    ) -> Result<Self> {
        let dim = position.ncomp();
        if !(3..=8).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        let grid = *position.grid();
        for f in d.iter().chain(dd.iter()) {
            if f.ncomp() != dim || *f.grid() != grid {
                return Err(Error::Validation("jet fields disagree in shape".into()));
            }
        }
        let mut mask = d[0].mask().to_vec();
        for f in d.iter().chain(dd.iter()) {
            for (m, v) in mask.iter_mut().zip(f.mask()) {
                *m &= *v;
            }
        }
        for (m, v) in mask.iter_mut().zip(position.mask()) {
            *m &= *v;
        }
        let d = d.map(|f| f.restrict(&mask));
        let dd = dd.map(|f| f.restrict(&mask));
        let patch = ImmersionPatch { name: name.to_string(), dim, position, d, dd, source, margin };
        patch.validate()?;
        Ok(patch)
    }

    /// Builds a finite-difference patch from node positions: 4th-order centred
    /// stencils inside, periodic wrap where flagged, 2nd-order stencils on the
    /// two outer layers of non-periodic axes, which are excluded by the margin.
    pub fn from_positions(name: &str, position: Field) -> Result<Self> {
        let grid = *position.grid();
        if position.has_non_finite() {
            return Err(Error::NonFinite("positions".into()));
        }
        let d1 = position.diff_with_edges(0);
        let d2 = position.diff_with_edges(1);
        let d11 = position.diff2_with_edges(0);
        let d22 = position.diff2_with_edges(1);
        let d12 = d2.diff_with_edges(0);
        let margin = 2;
        let interior = grid.interior_mask(margin);
        let jets = [d1, d2].map(|f| f.restrict(&interior));
        let second = [d11, d12, d22].map(|f| f.restrict(&interior));
        Self::from_jets(name, position, jets, second, JetSource::FiniteDifference, margin)
    }

    fn validate(&self) -> Result<()> {
        let grid = self.grid();
        for k in 0..grid.len() {
            if !self.is_valid(k) {
                continue;
            }
            let finite = self.position.at(k).iter().all(|x| x.is_finite())
                && self.d.iter().chain(self.dd.iter()).all(|f| f.at(k).iter().all(|x| x.is_finite()));
            if !finite {
                return Err(Error::NonFinite(format!("jet at node {:?}", grid.ij(k))));
            }
            let det = self.metric_det(k);
            if !(det >= DET_MIN) {
                let (i, j) = grid.ij(k);
                return Err(Error::ImmersionDegenerate { i, j, det });
            }
        }
        if self.d[0].valid_count() == 0 {
            return Err(Error::InsufficientMargin("patch has no valid nodes".into()));
        }
        Ok(())
    }

    fn metric_det(&self, k: usize) -> f64 {
        let (a, b) = (self.d[0].at(k), self.d[1].at(k));
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
        dot(a, a) * dot(b, b) - dot(a, b).powi(2)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> &Grid {
        self.position.grid()
    }

    pub fn source(&self) -> JetSource {
        self.source
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    pub fn position(&self) -> &Field {
        &self.position
    }

    /// ∂_kΦ for k ∈ {0, 1}.
    pub fn d(&self, k: usize) -> &Field {
        &self.d[k]
    }

    /// ∂_{ij}Φ for i, j ∈ {0, 1}.
    pub fn dd(&self, i: usize, j: usize) -> &Field {
        &self.dd[i + j]
    }

    pub fn mask(&self) -> &[bool] {
        self.d[0].mask()
    }

    pub fn is_valid(&self, k: usize) -> bool {
        self.d[0].is_valid(k)
    }

    /// Applies x ↦ s·Q·x + a to every node (derivatives transform linearly).
    pub fn transformed(&self, q: &[Vec<f64>], s: f64, a: &[f64]) -> Result<Self> {
        let m = self.dim;
        if q.len() != m || q.iter().any(|r| r.len() != m) || a.len() != m {
            return Err(Error::DimensionMismatch(m, a.len()));
        }
        let lin = |f: &Field, shift: bool| {
            f.map(m, |x, o| {
                for (r, row) in q.iter().enumerate() {
                    o[r] = s * row.iter().zip(x).map(|(p, y)| p * y).sum::<f64>() + if shift { a[r] } else { 0.0 };
                }
            })
        };
        Self::from_jets(
            &self.name,
            lin(&self.position, true),
            [lin(&self.d[0], false), lin(&self.d[1], false)],
            [lin(&self.dd[0], false), lin(&self.dd[1], false), lin(&self.dd[2], false)],
            self.source,
            self.margin,
        )
    }

    /// Patch of Φ + t·B where `b_jets` holds B and its five partials.
    pub fn perturbed(&self, b: &Field, b_d: &[Field; 2], b_dd: &[Field; 3], t: f64) -> Result<Self> {
        let add = |f: &Field, g: &Field| f.add(&g.scale(t));
        Self::from_jets(
            &self.name,
            add(&self.position, b),
            [add(&self.d[0], &b_d[0]), add(&self.d[1], &b_d[1])],
            [add(&self.dd[0], &b_dd[0]), add(&self.dd[1], &b_dd[1]), add(&self.dd[2], &b_dd[2])],
            self.source,
            self.margin,
        )
    }
}

/// Finite-difference partials of an arbitrary field with the same stencils
/// used for sampled patches: (∂₁, ∂₂) and (∂₁₁, ∂₁₂, ∂₂₂).
pub fn fd_partials(f: &Field) -> ([Field; 2], [Field; 3]) {
    let d2 = f.diff_with_edges(1);
    (
        [f.diff_with_edges(0), d2.clone()],
        [f.diff2_with_edges(0), d2.diff_with_edges(0), f.diff2_with_edges(1)],
    )
}
