//! Dosing the projection with spherical interpolation, and similarity
//! compensation toward a target concept.

use serde::{Deserialize, Serialize};

use crate::embedset::{ConceptVector, EmbeddingSet};
use crate::linalg::{check_dims, dot, norm};
use crate::metrics::cosine_sim;
use crate::{Error, Result};

/// Below this `sin(theta)` the two endpoints are treated as parallel.
pub const PARALLEL_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlerpParams {
    /// Debias strength: 0 keeps the original, 1 is the full projection.
    pub alpha: f64,
    pub parallel_epsilon: f64,
}

impl SlerpParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidConfig(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        Ok(Self {
            alpha,
            parallel_epsilon: PARALLEL_EPSILON,
        })
    }
}

impl Default for SlerpParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            parallel_epsilon: PARALLEL_EPSILON,
        }
    }
}

/// Interpolates on the unit sphere from `v_orig_unnorm` toward `v_proj` by
/// `alpha` and rescales the result to the norm of `v_orig_unnorm`.
pub fn slerp_blend(v_orig_unnorm: &[f64], v_proj: &[f64], p: SlerpParams) -> Result<Vec<f64>> {
    check_dims(v_orig_unnorm.len(), v_proj.len())?;
    let scale = norm(v_orig_unnorm);
    if scale < 1e-12 {
        return Err(Error::ZeroVector { row: 0 });
    }
    let qn = norm(v_proj);
    if qn < 1e-12 {
        return Err(Error::ZeroVector { row: 1 });
    }
    let cos = (dot(v_orig_unnorm, v_proj) / (scale * qn)).clamp(-1.0, 1.0);
    if cos < -1.0 + 1e-9 {
        return Err(Error::AntipodalVectors);
    }
    let theta = cos.acos();
    let sin = theta.sin();
    if sin < p.parallel_epsilon {
        return Ok(v_orig_unnorm.to_vec());
    }
    let a = ((1.0 - p.alpha) * theta).sin() / sin;
    let b = (p.alpha * theta).sin() / sin;
    Ok(v_orig_unnorm
        .iter()
        .zip(v_proj)
        .map(|(u, q)| (a * u / scale + b * q / qn) * scale)
        .collect())
}

/// Row-wise [`slerp_blend`] between two aligned sets.
pub fn slerp_set(original: &EmbeddingSet, projected: &EmbeddingSet, p: SlerpParams) -> Result<EmbeddingSet> {
    check_dims(original.dim(), projected.dim())?;
    if original.len() != projected.len() {
        return Err(Error::CountMismatch {
            what: "projected rows",
            expected: original.len(),
            found: projected.len(),
        });
    }
    original.map_rows(|i, r| {
        slerp_blend(r, projected.row(i), p).map_err(|e| match e {
            Error::ZeroVector { .. } => Error::ZeroVector { row: i },
            other => other,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationResult {
    pub v_comp: Vec<f64>,
    pub delta_s: f64,
    pub beta: f64,
    pub c: Vec<f64>,
}

/// Whether the similarity loss is measured per row or averaged over a set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompensationMode {
    PerRow,
    /// One shared shift from the mean loss. Keeps the between-group spread
    /// of similarities that the projection removed.
    #[default]
    Aggregate,
    None,
}

impl std::str::FromStr for CompensationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-row" => Ok(Self::PerRow),
            "aggregate" => Ok(Self::Aggregate),
            "none" => Ok(Self::None),
            other => Err(Error::InvalidConfig(format!("unknown compensation mode {other:?}"))),
        }
    }
}

fn shift(v: &[f64], t: &[f64], delta_s: f64) -> CompensationResult {
    let beta = 2.0 * delta_s;
    let c: Vec<f64> = t.iter().map(|x| beta * x).collect();
    let v_comp = v.iter().zip(&c).map(|(a, b)| a + b).collect();
    CompensationResult {
        v_comp,
        delta_s,
        beta,
        c,
    }
}

/// Adds `2 * dS * t` to `v_debiased`, where `dS` is the drop in cosine
/// similarity to `t` caused by debiasing. `t` is used as given.
pub fn compensate(v_debiased: &[f64], v_orig: &[f64], t: &ConceptVector) -> Result<CompensationResult> {
    check_dims(t.dim(), v_debiased.len())?;
    check_dims(t.dim(), v_orig.len())?;
    let delta_s = cosine_sim(v_orig, &t.vector)? - cosine_sim(v_debiased, &t.vector)?;
    Ok(shift(v_debiased, &t.vector, delta_s))
}

/// Compensates every row of `debiased` against the aligned `original` rows.
/// Returns the adjusted set and the similarity drop(s) used: one per row, or
/// a single mean for [`CompensationMode::Aggregate`].
pub fn compensate_set(
    debiased: &EmbeddingSet,
    original: &EmbeddingSet,
    t: &ConceptVector,
    mode: CompensationMode,
) -> Result<(EmbeddingSet, Vec<f64>)> {
    check_dims(original.dim(), debiased.dim())?;
    check_dims(t.dim(), debiased.dim())?;
    if original.len() != debiased.len() {
        return Err(Error::CountMismatch {
            what: "debiased rows",
            expected: original.len(),
            found: debiased.len(),
        });
    }
    match mode {
        CompensationMode::None => Ok((debiased.clone(), Vec::new())),
        CompensationMode::PerRow => {
            let out = debiased.map_rows(|i, r| Ok(compensate(r, original.row(i), t)?.v_comp))?;
            let drops = (0..debiased.len())
                .map(|i| Ok(cosine_sim(original.row(i), &t.vector)? - cosine_sim(debiased.row(i), &t.vector)?))
                .collect::<Result<_>>()?;
            Ok((out, drops))
        }
        CompensationMode::Aggregate => {
            if debiased.is_empty() {
                return Ok((debiased.clone(), vec![0.0]));
            }
            let mut total = 0.0;
            for i in 0..debiased.len() {
                total += cosine_sim(original.row(i), &t.vector)? - cosine_sim(debiased.row(i), &t.vector)?;
            }
            let mean = total / debiased.len() as f64;
            let out = debiased.map_rows(|_, r| Ok(shift(r, &t.vector, mean).v_comp))?;
            Ok((out, vec![mean]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Gaussian;
    use proptest::prelude::*;

    fn angle(a: &[f64], b: &[f64]) -> f64 {
        (dot(a, b) / (norm(a) * norm(b))).clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn endpoints() {
        let v = [3.0, 1.0, -2.0];
        let q = [0.5, 2.0, 1.0];
        let out0 = slerp_blend(&v, &q, SlerpParams::new(0.0).unwrap()).unwrap();
        assert!(cosine_sim(&out0, &v).unwrap() >= 1.0 - 1e-9);
        assert!((norm(&out0) - norm(&v)).abs() < 1e-9);
        let out1 = slerp_blend(&v, &q, SlerpParams::new(1.0).unwrap()).unwrap();
        assert!(cosine_sim(&out1, &q).unwrap() >= 1.0 - 1e-9);
        assert!((norm(&out1) - norm(&v)).abs() < 1e-9);
    }

    #[test]
    fn quarter_circle_midpoint() {
        // sin(pi/4) / sin(pi/2) = sqrt(2)/2 on each axis.
        let out = slerp_blend(&[1.0, 0.0], &[0.0, 1.0], SlerpParams::new(0.5).unwrap()).unwrap();
        assert!((out[0] - 0.70710678).abs() < 1e-8);
        assert!((out[1] - 0.70710678).abs() < 1e-8);
    }

    #[test]
    fn parallel_and_antipodal() {
        let v = [2.0, 0.0];
        let out = slerp_blend(&v, &[5.0, 0.0], SlerpParams::new(0.3).unwrap()).unwrap();
        assert_eq!(out, v.to_vec());
        assert!(matches!(
            slerp_blend(&v, &[-1.0, 0.0], SlerpParams::default()),
            Err(Error::AntipodalVectors)
        ));
        assert!(matches!(
            slerp_blend(&[0.0, 0.0], &v, SlerpParams::default()),
            Err(Error::ZeroVector { .. })
        ));
        assert!(matches!(
            slerp_blend(&v, &[1.0, 0.0, 0.0], SlerpParams::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(SlerpParams::new(1.5).is_err());
    }

    #[test]
    fn compensation_null_case() {
        let t = ConceptVector::new("t", vec![0.0, 1.0, 0.0]).unwrap();
        let v = [1.0, 2.0, 3.0];
        let r = compensate(&v, &v, &t).unwrap();
        assert_eq!(r.delta_s, 0.0);
        assert_eq!(r.beta, 0.0);
        assert!(r.c.iter().all(|&x| x == 0.0));
        assert_eq!(r.v_comp, v.to_vec());
    }

    #[test]
    fn compensation_beta_is_twice_the_drop() {
        // Vectors with sim 0.30 and 0.25 to t = e2.
        let t = ConceptVector::new("t", vec![0.0, 1.0]).unwrap();
        let mk = |s: f64| vec![(1.0 - s * s).sqrt(), s];
        let r = compensate(&mk(0.25), &mk(0.30), &t).unwrap();
        assert!((r.delta_s - 0.05).abs() < 1e-12);
        assert_eq!(r.beta, 2.0 * r.delta_s);
        assert!((r.beta - 0.10).abs() < 1e-12);
        assert_eq!(r.c, vec![0.0, r.beta]);
    }

    #[test]
    fn positive_drop_raises_similarity() {
        let mut g = Gaussian::new(4);
        let mut checked = 0;
        for _ in 0..500 {
            let v: Vec<f64> = (0..8).map(|_| g.sample()).collect();
            let d: Vec<f64> = (0..8).map(|_| g.sample()).collect();
            let t: Vec<f64> = (0..8).map(|_| g.sample()).collect();
            let tn = norm(&t);
            let t = ConceptVector::new("t", t.iter().map(|x| x / tn).collect()).unwrap();
            let r = compensate(&d, &v, &t).unwrap();
            if r.delta_s > 0.0 {
                assert!(dot(&r.v_comp, &t.vector) > dot(&d, &t.vector));
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    proptest! {
        #[test]
        fn norm_preserved_and_angle_monotone(
            v in prop::collection::vec(-5.0f64..5.0, 6),
            q in prop::collection::vec(-5.0f64..5.0, 6),
        ) {
            prop_assume!(norm(&v) > 1e-3 && norm(&q) > 1e-3);
            prop_assume!(dot(&v, &q) / (norm(&v) * norm(&q)) > -1.0 + 1e-6);
            let mut last = -1.0;
            for k in 0..=10 {
                let out = slerp_blend(&v, &q, SlerpParams::new(k as f64 / 10.0).unwrap()).unwrap();
                prop_assert!((norm(&out) - norm(&v)).abs() <= 1e-9 * norm(&v).max(1.0));
                let a = angle(&out, &v);
                prop_assert!(a >= last - 1e-9);
                last = a;
            }
        }

        #[test]
        fn compensation_is_collinear_with_t(
            v in prop::collection::vec(-5.0f64..5.0, 5),
            d in prop::collection::vec(-5.0f64..5.0, 5),
            t in prop::collection::vec(-5.0f64..5.0, 5),
        ) {
            prop_assume!(norm(&v) > 1e-3 && norm(&d) > 1e-3 && norm(&t) > 1e-3);
            let t = ConceptVector::new("t", t).unwrap();
            let r = compensate(&d, &v, &t).unwrap();
            prop_assert_eq!(r.beta, 2.0 * r.delta_s);
            let diff: Vec<f64> = r.v_comp.iter().zip(&d).map(|(a, b)| a - b).collect();
            let tt = dot(&t.vector, &t.vector);
            let along = dot(&diff, &t.vector) / tt;
            for (x, ti) in diff.iter().zip(&t.vector) {
                prop_assert!((x - along * ti).abs() <= 1e-12 * (1.0 + along.abs() * ti.abs()));
            }
        }
    }
}
