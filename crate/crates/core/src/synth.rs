//! Synthetic embedding sets with planted bias structure.
//!
//! Each row is built as
//!
//! ```text
//! sum_k offset_k[group] * bias_axis_k
//!   + (semantic_shared + semantic_boost * relevant) * semantic_axis
//!   + noise_sigma * N(0, I)
//! ```
//!
//! and then scaled to unit length. Groups are assigned round-robin; within a
//! group, ordinals alternate male/female and every `relevant_period`-th pair
//! of ordinals is marked relevant to the semantic concept. Noise is drawn
//! row-major from [`Gaussian`] seeded with `seed`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::embedset::{ConceptVector, EmbeddingSet, Gender, RowLabel};
use crate::inlp::DebiasTransform;
use crate::linalg::{check_dims, dot, norm, normalized, orthonormal_basis};
use crate::prompts::{NEUTRAL, STATES_AND_UTS, ZERO_SHOT_NEGATIVE, ZERO_SHOT_POSITIVE};
use crate::rng::Gaussian;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasAxis {
    pub direction: Vec<f64>,
    /// One offset per group.
    pub offsets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_groups: usize,
    pub per_group: usize,
    pub dim: usize,
    pub bias_axes: Vec<BiasAxis>,
    pub semantic_axis: Vec<f64>,
    pub semantic_shared: f64,
    pub semantic_boost: f64,
    /// 0 disables the relevant subset.
    pub relevant_period: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Defaults to state/UT names for 36 groups, `group_NN` otherwise.
    pub group_names: Option<Vec<String>>,
}

/// A generated set and everything that was planted in it.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub set: EmbeddingSet,
    /// Unit bias directions, in spec order.
    pub ground_truth: Vec<Vec<f64>>,
    /// Rows carrying the semantic boost.
    pub relevant: Vec<bool>,
    pub semantic_axis: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct GroundTruthJson<'a> {
    bias_axes: &'a [Vec<f64>],
    semantic_axis: &'a [f64],
    relevant_rows: Vec<usize>,
}

impl SynthData {
    pub fn ground_truth_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GroundTruthJson {
            bias_axes: &self.ground_truth,
            semantic_axis: &self.semantic_axis,
            relevant_rows: (0..self.relevant.len()).filter(|&i| self.relevant[i]).collect(),
        })?)
    }
}

/// `count` orthonormal vectors in `dim` dimensions, from Gaussian draws.
pub fn random_orthonormal(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut g = Gaussian::new(seed);
    let mut basis = Vec::with_capacity(count);
    while basis.len() < count {
        let mut candidates = basis.clone();
        candidates.push((0..dim).map(|_| g.sample()).collect());
        basis = orthonormal_basis(&candidates);
    }
    basis
}

const AXIS_SEED_SALT: u64 = 0xA5A5_0F0F_5A5A_F0F0;

impl SynthSpec {
    /// 36 groups x 100 rows in 64 dimensions with one bias axis: group 0 is
    /// strongly displaced, the rest spread evenly over `[-1, 1]`.
    pub fn single_axis(seed: u64) -> Self {
        Self::with_axes(seed, 1)
    }

    /// Like [`single_axis`](Self::single_axis) with a second axis on which
    /// group 1 is displaced.
    pub fn desk_default(seed: u64) -> Self {
        Self::with_axes(seed, 2)
    }

    fn with_axes(seed: u64, n_axes: usize) -> Self {
        let n_groups = 36;
        let dim = 64;
        let basis = random_orthonormal(dim, n_axes + 2, seed ^ AXIS_SEED_SALT);
        let bias_axes = (0..n_axes)
            .map(|k| {
                let offsets = (0..n_groups)
                    .map(|g| match (k, g) {
                        (0, 0) => 3.0,
                        (0, g) => -1.0 + 2.0 * (g - 1) as f64 / (n_groups - 2) as f64,
                        (_, 1) => -3.0,
                        (_, g) => 0.5 * (std::f64::consts::TAU * g as f64 / n_groups as f64).cos(),
                    })
                    .collect();
                BiasAxis {
                    direction: basis[k].clone(),
                    offsets,
                }
            })
            .collect();
        Self {
            n_groups,
            per_group: 100,
            dim,
            bias_axes,
            semantic_axis: basis[n_axes].clone(),
            semantic_shared: 0.5,
            semantic_boost: 1.5,
            relevant_period: 8,
            noise_sigma: 0.15,
            seed,
            group_names: None,
        }
    }

    /// Removes every planted offset, keeping the rest of the spec.
    pub fn unbiased(mut self) -> Self {
        for a in &mut self.bias_axes {
            a.offsets.iter_mut().for_each(|o| *o = 0.0);
        }
        self
    }

    pub fn group_names(&self) -> Vec<String> {
        match &self.group_names {
            Some(n) => n.clone(),
            None if self.n_groups == STATES_AND_UTS.len() => {
                STATES_AND_UTS.iter().map(|s| s.to_string()).collect()
            }
            None => (0..self.n_groups).map(|g| format!("group_{g:02}")).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_groups == 0 || self.per_group == 0 {
            return bad("n_groups and per_group must be positive".into());
        }
        if self.dim < 2 {
            return bad(format!("dimension {} < 2", self.dim));
        }
        if !(self.noise_sigma > 0.0) {
            return bad("noise_sigma must be positive".into());
        }
        if let Some(n) = &self.group_names {
            if n.len() != self.n_groups || n.iter().any(String::is_empty) {
                return bad("group_names must list one non-empty name per group".into());
            }
        }
        let mut axes: Vec<&[f64]> = self.bias_axes.iter().map(|a| a.direction.as_slice()).collect();
        axes.push(&self.semantic_axis);
        for a in &axes {
            if a.len() != self.dim {
                return bad(format!("axis of length {} in dimension {}", a.len(), self.dim));
            }
            if (norm(a) - 1.0).abs() > 1e-9 {
                return bad(format!("axis norm {} is not 1", norm(a)));
            }
        }
        for i in 0..axes.len() {
            for j in i + 1..axes.len() {
                let c = dot(axes[i], axes[j]);
                if c.abs() > 1e-9 {
                    return bad(format!("axes {i} and {j} are not orthogonal (dot {c:e})"));
                }
            }
        }
        for (k, a) in self.bias_axes.iter().enumerate() {
            if a.offsets.len() != self.n_groups {
                return bad(format!(
                    "axis {k} has {} offsets for {} groups",
                    a.offsets.len(),
                    self.n_groups
                ));
            }
        }
        Ok(())
    }

    /// Sum of bias axes weighted by the offset of the most displaced group,
    /// normalized; the direction a biased concept leans toward.
    fn bias_lean(&self) -> Option<Vec<f64>> {
        let mut lean = vec![0.0; self.dim];
        for a in &self.bias_axes {
            let w = a.offsets.iter().copied().fold(0.0f64, |m, o| if o.abs() > m.abs() { o } else { m });
            lean.iter_mut().zip(&a.direction).for_each(|(l, d)| *l += w.signum() * d);
        }
        normalized(&lean)
    }

    /// Concept vectors over the planted geometry:
    /// - the first neutral prompt, leaning `0.6` toward the bias axes;
    /// - `"semantic"`, the pure semantic axis;
    /// - the zero-shot positive and negative prompts.
    pub fn concepts(&self) -> Result<Vec<ConceptVector>> {
        let lean = self.bias_lean().unwrap_or_else(|| vec![0.0; self.dim]);
        let mix = |a: f64, b: f64| -> Vec<f64> {
            self.semantic_axis
                .iter()
                .zip(&lean)
                .map(|(s, l)| a * s + b * l)
                .collect()
        };
        Ok(vec![
            ConceptVector::new(NEUTRAL[0], mix(0.8, 0.6))?,
            ConceptVector::new("semantic", self.semantic_axis.clone())?,
            ConceptVector::new(ZERO_SHOT_POSITIVE, normalized(&mix(0.8, 0.4)).expect("nonzero"))?,
            ConceptVector::new(ZERO_SHOT_NEGATIVE, normalized(&mix(0.7, -0.4)).expect("nonzero"))?,
        ])
    }
}

/// Generates the set described by `spec`.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let names = spec.group_names();
    let n = spec.n_groups * spec.per_group;
    let mut noise = Gaussian::new(spec.seed);
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    let mut relevant = Vec::with_capacity(n);
    for i in 0..n {
        let g = i % spec.n_groups;
        let ordinal = i / spec.n_groups;
        let rel = spec.relevant_period > 0 && (ordinal / 2) % spec.relevant_period == 0;
        let sem = spec.semantic_shared + if rel { spec.semantic_boost } else { 0.0 };
        let mut row: Vec<f64> = spec.semantic_axis.iter().map(|s| sem * s).collect();
        for a in &spec.bias_axes {
            let o = a.offsets[g];
            row.iter_mut().zip(&a.direction).for_each(|(r, d)| *r += o * d);
        }
        for r in row.iter_mut() {
            *r += spec.noise_sigma * noise.sample();
        }
        let row = normalized(&row).ok_or(Error::ZeroVector { row: i })?;
        data.extend_from_slice(&row);
        let gender = if ordinal % 2 == 0 { Gender::Male } else { Gender::Female };
        labels.push(RowLabel::new(names[g].clone(), gender, format!("synth-{i:05}")));
        relevant.push(rel);
    }
    Ok(SynthData {
        set: EmbeddingSet::new(data, spec.dim, labels)?,
        ground_truth: spec.bias_axes.iter().map(|a| a.direction.clone()).collect(),
        relevant,
        semantic_axis: spec.semantic_axis.clone(),
    })
}

/// Principal angles in degrees, ascending, between the span of the
/// transform's directions and the span of `ground_truth`. An empty transform
/// is at 90 degrees from every ground-truth direction.
pub fn planted_recovery_angle(transform: &DebiasTransform, ground_truth: &[Vec<f64>]) -> Result<Vec<f64>> {
    for g in ground_truth {
        check_dims(transform.dim, g.len())?;
    }
    let found: Vec<Vec<f64>> = transform.directions.iter().map(|d| d.w_hat.clone()).collect();
    principal_angles(&found, ground_truth)
}

pub fn principal_angles(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Vec<f64>> {
    let qa = orthonormal_basis(a);
    let qb = orthonormal_basis(b);
    if qa.is_empty() || qb.is_empty() {
        return Ok(vec![90.0; qb.len()]);
    }
    let m = DMatrix::from_fn(qa.len(), qb.len(), |i, j| dot(&qa[i], &qb[j]));
    let mut angles: Vec<f64> = m
        .singular_values()
        .iter()
        .map(|s| s.clamp(-1.0, 1.0).acos().to_degrees())
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}
