//! Small dense-vector helpers shared by the pipeline stages.

use crate::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Returns `a / |a|`, or `None` when the norm is below `1e-12`.
pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    if n < 1e-12 || !n.is_finite() {
        return None;
    }
    Some(a.iter().map(|x| x / n).collect())
}

/// Orthonormal basis for `span(vectors)` by modified Gram-Schmidt with one
/// re-orthogonalization pass. Vectors that are numerically dependent on the
/// ones before them are dropped.
pub fn orthonormal_basis(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let scale = norm(v);
        if scale < 1e-300 {
            continue;
        }
        let mut u = v.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&u, q);
                u.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
            }
        }
        let n = norm(&u);
        if n > 1e-10 * scale {
            u.iter_mut().for_each(|x| *x /= n);
            basis.push(u);
        }
    }
    basis
}
