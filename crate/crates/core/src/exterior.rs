//! Graded exterior algebra over R^m for 2 ≤ m ≤ 8.
//!
//! A k-vector stores one coefficient per k-subset of {0, .., m-1}. Subsets are
//! bit patterns (`u8`) and are ordered lexicographically by their increasing
//! index tuples, so for m = 3, k = 2 the order is e12, e13, e23.
//!
//! Besides the owned [`MultiVec`] type the module exposes slice kernels
//! (`wedge_into`, `interior_into`, ...) used by the per-node field code, which
//! would otherwise allocate for every node.

use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 8;

struct Tables {
    /// `blades[m][k]` lists the k-subsets of {0..m} in canonical order.
    blades: Vec<Vec<Vec<u8>>>,
    /// `rank[m][mask]` is the position of `mask` inside its grade.
    rank: Vec<[u16; 256]>,
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let mut blades = vec![Vec::new(); MAX_DIM + 1];
        let mut rank = vec![[u16::MAX; 256]; MAX_DIM + 1];
        for m in 0..=MAX_DIM {
            let mut per_grade: Vec<Vec<u8>> = vec![Vec::new(); m + 1];
            let mut all: Vec<u8> = (0..(1u16 << m)).map(|x| x as u8).collect();
            // lexicographic order of the sorted index tuple
            all.sort_by_key(|&mask| {
                let idx: Vec<u32> = (0..8).filter(|b| mask >> b & 1 == 1).collect();
                idx
            });
            for mask in all {
                per_grade[mask.count_ones() as usize].push(mask);
            }
            for grade in &per_grade {
                for (r, &mask) in grade.iter().enumerate() {
                    rank[m][mask as usize] = r as u16;
                }
            }
            blades[m] = per_grade;
        }
        Tables { blades, rank }
    })
}

/// Basis subsets of grade `k` in R^m, in storage order.
pub fn blades(m: usize, k: usize) -> &'static [u8] {
    &tables().blades[m][k]
}

/// Storage index of the basis subset `mask` in R^m.
pub fn blade_index(m: usize, mask: u8) -> usize {
    tables().rank[m][mask as usize] as usize
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Sign of e_A ∧ e_B for disjoint subsets (number of transpositions needed to
/// sort the concatenated index tuple).
pub fn wedge_sign(a: u8, b: u8) -> f64 {
    let mut swaps = 0;
    for i in 0..8 {
        if a >> i & 1 == 1 {
            // indices of b smaller than i must travel past i
            swaps += (b & ((1u16 << i) - 1) as u8).count_ones();
        }
    }
    if swaps % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn check_dim(m: usize) -> Result<()> {
    if (2..=MAX_DIM).contains(&m) {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(m))
    }
}

/// out += s · (a ∧ b). Grade overflow contributes nothing.
pub fn wedge_into(m: usize, p: usize, a: &[f64], q: usize, b: &[f64], s: f64, out: &mut [f64]) {
    if p + q > m {
        return;
    }
    let ba = blades(m, p);
    let bb = blades(m, q);
    for (ia, &ma) in ba.iter().enumerate() {
        let ca = a[ia];
        if ca == 0.0 {
            continue;
        }
        for (ib, &mb) in bb.iter().enumerate() {
            if ma & mb != 0 || b[ib] == 0.0 {
                continue;
            }
            out[blade_index(m, ma | mb)] += s * wedge_sign(ma, mb) * ca * b[ib];
        }
    }
}

/// out += s · (γ ⌐ β) for γ of grade q and β of grade p ≤ q.
pub fn interior_into(m: usize, q: usize, gamma: &[f64], p: usize, beta: &[f64], s: f64, out: &mut [f64]) {
    debug_assert!(p <= q);
    let rest = q - p;
    let bb = blades(m, p);
    let br = blades(m, rest);
    for (ib, &mb) in bb.iter().enumerate() {
        let cb = beta[ib];
        if cb == 0.0 {
            continue;
        }
        for (ir, &mr) in br.iter().enumerate() {
            if mb & mr != 0 {
                continue;
            }
            let g = gamma[blade_index(m, mb | mr)];
            if g != 0.0 {
                out[ir] += s * wedge_sign(mb, mr) * cb * g;
            }
        }
    }
}

/// Hodge star of a grade-k slice into a grade-(m-k) slice (overwrites `out`).
pub fn star_into(m: usize, k: usize, a: &[f64], out: &mut [f64]) {
    let full: u8 = ((1u16 << m) - 1) as u8;
    for (i, &mask) in blades(m, k).iter().enumerate() {
        let comp = full & !mask;
        out[blade_index(m, comp)] = wedge_sign(mask, comp) * a[i];
    }
}

/// out += s · (α • e_{indices[0]} ∧ ... ∧ e_{indices[last]}).
fn bullet_blade(m: usize, ka: usize, alpha: &[f64], indices: &[u8], s: f64, out: &mut [f64]) {
    let p = indices.len();
    if p == 1 {
        let mut e = vec![0.0; m];
        e[indices[0].trailing_zeros() as usize] = 1.0;
        interior_into(m, ka, alpha, 1, &e, s, out);
        return;
    }
    // α•(β∧γ) = (α•β)∧γ + (-1)^{pq}(α•γ)∧β with β = e_{i0}, γ = the rest
    let head = indices[0];
    let tail = &indices[1..];
    let q = p - 1;
    let tail_mask = tail.iter().fold(0u8, |acc, &b| acc | b);

    let mut ab = vec![0.0; binomial(m, ka - 1)];
    bullet_blade(m, ka, alpha, &[head], 1.0, &mut ab);
    let mut gamma = vec![0.0; binomial(m, q)];
    gamma[blade_index(m, tail_mask)] = 1.0;
    wedge_into(m, ka - 1, &ab, q, &gamma, s, out);

    let g_out = ka + q - 2;
    let mut ag = vec![0.0; binomial(m, g_out)];
    bullet_blade(m, ka, alpha, tail, 1.0, &mut ag);
    let mut beta = vec![0.0; m];
    beta[head.trailing_zeros() as usize] = 1.0;
    let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
    wedge_into(m, g_out, &ag, 1, &beta, s * sign, out);
}

/// Grade of α • β, or an error when the recursion is not well formed.
pub fn bullet_grade(ka: usize, kb: usize) -> Result<usize> {
    if kb == 0 {
        return Err(Error::InvalidGrade("bullet with a scalar second argument".into()));
    }
    if ka == 0 {
        return Err(Error::InvalidGrade("bullet with a scalar first argument".into()));
    }
    Ok(ka + kb - 2)
}

/// out += s · (α • β). Grades must satisfy [`bullet_grade`].
pub fn bullet_into(m: usize, ka: usize, alpha: &[f64], kb: usize, beta: &[f64], s: f64, out: &mut [f64]) {
    if ka + kb - 2 > m {
        return;
    }
    for (ib, &mb) in blades(m, kb).iter().enumerate() {
        let cb = beta[ib];
        if cb == 0.0 {
            continue;
        }
        let idx: Vec<u8> = (0..m).filter(|b| mb >> b & 1 == 1).map(|b| 1u8 << b).collect();
        bullet_blade(m, ka, alpha, &idx, s * cb, out);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cross3(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// An element of Λ^k(R^m).
#[derive(Clone, Debug, PartialEq)]
pub struct MultiVec {
    dim: usize,
    grade: usize,
    c: Vec<f64>,
}

impl MultiVec {
    pub fn zero(dim: usize, grade: usize) -> Result<Self> {
        check_dim(dim)?;
        if grade > dim {
            return Err(Error::InvalidGrade(format!("grade {grade} exceeds dimension {dim}")));
        }
        Ok(MultiVec { dim, grade, c: vec![0.0; binomial(dim, grade)] })
    }

    pub fn from_components(dim: usize, grade: usize, c: Vec<f64>) -> Result<Self> {
        let mut z = Self::zero(dim, grade)?;
        if c.len() != z.c.len() {
            return Err(Error::InvalidGrade(format!(
                "{} components given, Λ^{grade}(R^{dim}) needs {}",
                c.len(),
                z.c.len()
            )));
        }
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("multivector components".into()));
        }
        z.c = c;
        Ok(z)
    }

    pub fn scalar(dim: usize, s: f64) -> Result<Self> {
        Self::from_components(dim, 0, vec![s])
    }

    pub fn vector(c: &[f64]) -> Result<Self> {
        Self::from_components(c.len(), 1, c.to_vec())
    }

    /// e_{i1} ∧ ... ∧ e_{ik} with 0-based indices in the given order.
    pub fn basis(dim: usize, indices: &[usize]) -> Result<Self> {
        let mut out = Self::scalar(dim, 1.0)?;
        for &i in indices {
            if i >= dim {
                return Err(Error::InvalidParameter(format!("basis index {i} ≥ {dim}")));
            }
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            out = out.wedge(&Self::vector(&e)?)?;
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grade(&self) -> usize {
        self.grade
    }

    pub fn components(&self) -> &[f64] {
        &self.c
    }

    /// Coefficient of the basis element with the given subset bit pattern.
    pub fn component(&self, mask: u8) -> f64 {
        if mask.count_ones() as usize != self.grade || (mask as usize) >> self.dim != 0 {
            return 0.0;
        }
        self.c[blade_index(self.dim, mask)]
    }

    pub fn norm(&self) -> f64 {
        dot(&self.c, &self.c).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        MultiVec { dim: self.dim, grade: self.grade, c: self.c.iter().map(|x| s * x).collect() }
    }

    fn same_shape(&self, o: &Self) -> Result<()> {
        if self.dim != o.dim {
            return Err(Error::DimensionMismatch(self.dim, o.dim));
        }
        if self.grade != o.grade {
            return Err(Error::GradeMismatch(self.grade, o.grade));
        }
        Ok(())
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        self.same_shape(o)?;
        let c = self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect();
        Ok(MultiVec { c, ..self.clone() })
    }

    pub fn sub(&self, o: &Self) -> Result<Self> {
        self.add(&o.scale(-1.0))
    }

    /// a ∧ b; the zero (p+q)-vector is returned when p + q > m.
    pub fn wedge(&self, o: &Self) -> Result<Self> {
        if self.dim != o.dim {
            return Err(Error::DimensionMismatch(self.dim, o.dim));
        }
        let g = self.grade + o.grade;
        let mut c = vec![0.0; binomial(self.dim, g)];
        wedge_into(self.dim, self.grade, &self.c, o.grade, &o.c, 1.0, &mut c);
        Ok(MultiVec { dim: self.dim, grade: g, c })
    }

    /// Extended scalar product (Gram determinant on simple vectors).
    pub fn inner(&self, o: &Self) -> Result<f64> {
        self.same_shape(o)?;
        Ok(dot(&self.c, &o.c))
    }

    pub fn hodge_star(&self) -> Self {
        let g = self.dim - self.grade;
        let mut c = vec![0.0; binomial(self.dim, g)];
        star_into(self.dim, self.grade, &self.c, &mut c);
        MultiVec { dim: self.dim, grade: g, c }
    }

    /// γ ⌐ β, characterised by ⟨γ⌐β, α⟩ = ⟨γ, β∧α⟩.
    pub fn interior(&self, beta: &Self) -> Result<Self> {
        if self.dim != beta.dim {
            return Err(Error::DimensionMismatch(self.dim, beta.dim));
        }
        if beta.grade > self.grade {
            return Err(Error::InvalidGrade(format!(
                "interior of a {}-vector by a {}-vector",
                self.grade, beta.grade
            )));
        }
        let g = self.grade - beta.grade;
        let mut c = vec![0.0; binomial(self.dim, g)];
        interior_into(self.dim, self.grade, &self.c, beta.grade, &beta.c, 1.0, &mut c);
        Ok(MultiVec { dim: self.dim, grade: g, c })
    }

    /// First-order contraction α • β.
    pub fn bullet(&self, beta: &Self) -> Result<Self> {
        if self.dim != beta.dim {
            return Err(Error::DimensionMismatch(self.dim, beta.dim));
        }
        let g = bullet_grade(self.grade, beta.grade)?;
        let mut c = vec![0.0; binomial(self.dim, g)];
        bullet_into(self.dim, self.grade, &self.c, beta.grade, &beta.c, 1.0, &mut c);
        Ok(MultiVec { dim: self.dim, grade: g, c })
    }

    /// Cross product of two 1-vectors of R³.
    pub fn cross(&self, o: &Self) -> Result<Self> {
        if self.dim != 3 || o.dim != 3 || self.grade != 1 || o.grade != 1 {
            return Err(Error::InvalidGrade("cross product needs two 1-vectors of R³".into()));
        }
        Self::vector(&cross3(&self.c, &o.c))
    }

    pub fn max_abs_diff(&self, o: &Self) -> Result<f64> {
        self.same_shape(o)?;
        Ok(self.c.iter().zip(&o.c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(m: usize, idx: &[usize]) -> MultiVec {
        MultiVec::basis(m, idx).unwrap()
    }

    #[test]
    fn canonical_order() {
        assert_eq!(blades(3, 2), &[0b011, 0b101, 0b110]);
        assert_eq!(blades(4, 2), &[0b0011, 0b0101, 0b1001, 0b0110, 0b1010, 0b1100]);
        for m in 2..=8 {
            for k in 0..=m {
                assert_eq!(blades(m, k).len(), binomial(m, k));
            }
        }
    }

    #[test]
    fn wedge_basics() {
        assert_eq!(e(3, &[0]).wedge(&e(3, &[0])).unwrap().norm(), 0.0);
        let e12 = e(3, &[0, 1]);
        assert_eq!(e12.components(), &[1.0, 0.0, 0.0]);
        assert_eq!(e(3, &[1, 0]).components(), &[-1.0, 0.0, 0.0]);
        let s = e(3, &[0]).add(&e(3, &[1])).unwrap();
        assert_eq!(s.wedge(&e(3, &[1])).unwrap(), e12);
        // overflow gives the zero element of the would-be grade
        let w = e12.wedge(&e(3, &[0, 2])).unwrap();
        assert_eq!(w.grade(), 4);
        assert!(w.components().is_empty());
        assert!(matches!(
            e12.wedge(&e(4, &[2])),
            Err(Error::DimensionMismatch(3, 4))
        ));
    }

    #[test]
    fn inner_basics() {
        assert_eq!(e(3, &[0, 1]).inner(&e(3, &[0, 1])).unwrap(), 1.0);
        assert_eq!(e(3, &[0, 1]).inner(&e(3, &[0, 2])).unwrap(), 0.0);
        assert!(matches!(
            e(3, &[0, 1]).inner(&e(3, &[0])),
            Err(Error::GradeMismatch(2, 1))
        ));
    }

    #[test]
    fn gram_determinant() {
        let v = |x: [f64; 4]| MultiVec::vector(&x).unwrap();
        let (a, b, c, d) = (
            v([0.3, -1.2, 0.7, 2.0]),
            v([1.1, 0.4, -0.5, 0.2]),
            v([-0.8, 0.9, 1.3, -0.1]),
            v([0.05, 0.6, -1.7, 0.4]),
        );
        let lhs = a.wedge(&b).unwrap().inner(&c.wedge(&d).unwrap()).unwrap();
        let ip = |x: &MultiVec, y: &MultiVec| x.inner(y).unwrap();
        let rhs = ip(&a, &c) * ip(&b, &d) - ip(&a, &d) * ip(&b, &c);
        assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn star_examples() {
        assert_eq!(e(3, &[0, 1]).hodge_star(), e(3, &[2]));
        assert_eq!(e(4, &[0, 1]).hodge_star(), e(4, &[2, 3]));
        assert_eq!(e(3, &[0, 2]).hodge_star().hodge_star(), e(3, &[0, 2]));
        // e_I ∧ ⋆e_I = vol on every basis element
        for m in 2..=6 {
            let vol = MultiVec::basis(m, &(0..m).collect::<Vec<_>>()).unwrap();
            for k in 0..=m {
                for i in 0..binomial(m, k) {
                    let mut c = vec![0.0; binomial(m, k)];
                    c[i] = 1.0;
                    let a = MultiVec::from_components(m, k, c).unwrap();
                    assert_eq!(a.wedge(&a.hodge_star()).unwrap(), vol);
                }
            }
        }
    }

    #[test]
    fn interior_examples() {
        assert_eq!(e(3, &[0, 1]).interior(&e(3, &[0])).unwrap(), e(3, &[1]));
        assert_eq!(e(3, &[0, 1, 2]).interior(&e(3, &[0, 1])).unwrap(), e(3, &[2]));
        assert_eq!(e(3, &[0, 1]).interior(&e(3, &[2])).unwrap().norm(), 0.0);
        assert!(e(3, &[0]).interior(&e(3, &[0, 1])).is_err());
    }

    #[test]
    fn bullet_examples() {
        assert_eq!(e(3, &[0, 1]).bullet(&e(3, &[0])).unwrap(), e(3, &[1]));
        assert_eq!(e(3, &[0, 1]).bullet(&e(3, &[0, 2])).unwrap(), e(3, &[1, 2]));
        let lhs = e(3, &[0, 1]).bullet(&e(3, &[0])).unwrap();
        let rhs = e(3, &[0, 1]).hodge_star().cross(&e(3, &[0])).unwrap();
        assert_eq!(lhs, rhs);
        assert!(MultiVec::scalar(3, 1.0).unwrap().bullet(&e(3, &[0])).is_err());
        assert!(e(3, &[0, 1]).bullet(&MultiVec::scalar(3, 2.0).unwrap()).is_err());
    }

    #[test]
    fn construction_validation() {
        assert!(MultiVec::zero(9, 1).is_err());
        assert!(MultiVec::zero(1, 1).is_err());
        assert!(MultiVec::from_components(3, 2, vec![1.0, 2.0]).is_err());
        assert!(MultiVec::from_components(3, 1, vec![1.0, f64::NAN, 0.0]).is_err());
    }
}
