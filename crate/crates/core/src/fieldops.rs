//! Node-wise algebra on multivector-valued fields.

use crate::exterior::{binomial, bullet_into, dot, wedge_into};
use crate::grid::Field;

/// a ∧ b for fields of grades p and q.
pub fn wedge(m: usize, p: usize, a: &Field, q: usize, b: &Field) -> Field {
    let n = if p + q <= m { binomial(m, p + q) } else { 0 };
    Field::combine(&[a, b], n, |_, x, o| wedge_into(m, p, x[0], q, x[1], 1.0, o))
}

/// a • b for fields of grades p and q (result grade p + q - 2).
pub fn bullet(m: usize, p: usize, a: &Field, q: usize, b: &Field) -> Field {
    let g = p + q - 2;
    Field::combine(&[a, b], binomial(m, g), |_, x, o| bullet_into(m, p, x[0], q, x[1], 1.0, o))
}

/// Componentwise scalar product.
pub fn dot_f(a: &Field, b: &Field) -> Field {
    Field::combine(&[a, b], 1, |_, x, o| o[0] = dot(x[0], x[1]))
}

/// s·a for a scalar field s.
pub fn scale_by(s: &Field, a: &Field) -> Field {
    let n = a.ncomp();
    Field::combine(&[s, a], n, |_, x, o| {
        for c in 0..n {
            o[c] = x[0][0] * x[1][c];
        }
    })
}

/// Σ_i c_i·f_i with constant coefficients; mask is the intersection.
pub fn lin(terms: &[(f64, &Field)]) -> Field {
    let n = terms[0].1.ncomp();
    let fields: Vec<&Field> = terms.iter().map(|t| t.1).collect();
    Field::combine(&fields, n, |_, x, o| {
        for (t, xi) in terms.iter().zip(x) {
            for c in 0..n {
                o[c] += t.0 * xi[c];
            }
        }
    })
}

/// Flat partials (∂₁f, ∂₂f), 4th-order.
pub fn grad(f: &Field) -> [Field; 2] {
    [f.diff(0), f.diff(1)]
}

/// Same-grid field of zeros valid on `mask`.
pub fn zeros_on(like: &Field, ncomp: usize, mask: &[bool]) -> Field {
    Field::zeros(*like.grid(), ncomp).restrict(mask)
}
