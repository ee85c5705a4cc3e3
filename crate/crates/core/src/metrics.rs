//! Audit quantities: cosine similarity, per-group mean similarity and its
//! dispersion, top-K retrieval histograms, Jensen-Shannon divergence against
//! a reference distribution, recall at K, and zero-shot binary accuracy.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedset::{ConceptVector, EmbeddingSet};
use crate::linalg::{check_dims, dot, norm};
use crate::{Error, Result};

pub const DEFAULT_TOP_K: usize = 500;

/// `v.t / (|v| |t|)`, clamped to `[-1, 1]`.
pub fn cosine_sim(v: &[f64], t: &[f64]) -> Result<f64> {
    check_dims(v.len(), t.len())?;
    let (nv, nt) = (norm(v), norm(t));
    if nv < 1e-12 {
        return Err(Error::ZeroVector { row: 0 });
    }
    if nt < 1e-12 {
        return Err(Error::ZeroVector { row: 1 });
    }
    Ok((dot(v, t) / (nv * nt)).clamp(-1.0, 1.0))
}

/// Similarity of every row of `set` to `t`, in row order.
pub fn similarities(set: &EmbeddingSet, t: &ConceptVector) -> Result<Vec<f64>> {
    check_dims(t.dim(), set.dim())?;
    (0..set.len())
        .into_par_iter()
        .map(|i| {
            cosine_sim(set.row(i), &t.vector).map_err(|e| match e {
                Error::ZeroVector { row: 0 } => Error::ZeroVector { row: i },
                other => other,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSimilarityTable {
    pub concept: String,
    pub per_group: BTreeMap<String, GroupStats>,
    /// Population standard deviation of the per-group means.
    pub overall_sigma: f64,
}

impl GroupSimilarityTable {
    pub fn total_count(&self) -> usize {
        self.per_group.values().map(|g| g.count).sum()
    }
}

fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Per-group mean and standard deviation of similarity to `t`.
pub fn group_mean_similarity(set: &EmbeddingSet, t: &ConceptVector) -> Result<GroupSimilarityTable> {
    group_mean_similarity_over(set, t, &set.groups())
}

/// Like [`group_mean_similarity`], over an explicit list of groups that must
/// all be present in `set`.
pub fn group_mean_similarity_over(
    set: &EmbeddingSet,
    t: &ConceptVector,
    groups: &[String],
) -> Result<GroupSimilarityTable> {
    if groups.is_empty() {
        return Err(Error::EmptyGroup(String::new()));
    }
    let sims = similarities(set, t)?;
    let mut by_group: BTreeMap<&str, Vec<f64>> = groups.iter().map(|g| (g.as_str(), Vec::new())).collect();
    for (s, l) in sims.iter().zip(set.labels()) {
        if let Some(v) = by_group.get_mut(l.group.as_str()) {
            v.push(*s);
        }
    }
    let mut per_group = BTreeMap::new();
    for (g, v) in by_group {
        if v.is_empty() {
            return Err(Error::EmptyGroup(g.to_string()));
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        per_group.insert(
            g.to_string(),
            GroupStats {
                mean,
                std: population_std(&v),
                count: v.len(),
            },
        );
    }
    let means: Vec<f64> = per_group.values().map(|g| g.mean).collect();
    Ok(GroupSimilarityTable {
        concept: t.text.clone(),
        overall_sigma: population_std(&means),
        per_group,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKHistogram {
    pub k: usize,
    /// Every group of the audited set, including those never retrieved.
    pub counts: BTreeMap<String, usize>,
    /// Row indices by similarity descending, ties by ascending index.
    pub selected_indices: Vec<usize>,
}

impl TopKHistogram {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Ranks row indices by `scores` descending, ties by ascending index.
pub fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Group histogram of the `k` rows most similar to `t`.
pub fn top_k_retrieval(set: &EmbeddingSet, t: &ConceptVector, k: usize) -> Result<TopKHistogram> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let sims = similarities(set, t)?;
    Ok(top_k_from_scores(set, &sims, k))
}

pub fn top_k_from_scores(set: &EmbeddingSet, scores: &[f64], k: usize) -> TopKHistogram {
    let mut selected = rank_desc(scores);
    selected.truncate(k);
    let mut counts: BTreeMap<String, usize> = set.groups().into_iter().map(|g| (g, 0)).collect();
    for &i in &selected {
        *counts.get_mut(&set.labels()[i].group).expect("group listed") += 1;
    }
    TopKHistogram {
        k,
        counts,
        selected_indices: selected,
    }
}

/// Fraction of relevant rows found among the top `k` by similarity to `t`.
pub fn recall_at_k(set: &EmbeddingSet, t: &ConceptVector, k: usize, relevant: &[bool]) -> Result<f64> {
    if relevant.len() != set.len() {
        return Err(Error::CountMismatch {
            what: "relevance mask",
            expected: set.len(),
            found: relevant.len(),
        });
    }
    let total = relevant.iter().filter(|&&r| r).count();
    if total == 0 {
        return Err(Error::InsufficientData("no relevant rows".into()));
    }
    let hist = top_k_retrieval(set, t, k)?;
    let hits = hist.selected_indices.iter().filter(|&&i| relevant[i]).count();
    Ok(hits as f64 / total as f64)
}

/// Relevance mask marking rows whose group is in `groups`.
pub fn relevance_from_groups(set: &EmbeddingSet, groups: &[String]) -> Vec<bool> {
    let g: BTreeSet<&str> = groups.iter().map(String::as_str).collect();
    set.labels().iter().map(|l| g.contains(l.group.as_str())).collect()
}

/// Shannon entropy in bits, with `0 log 0 = 0`.
pub fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.log2()).sum::<f64>()
}

/// Base-2 Jensen-Shannon divergence of two aligned distributions, in `[0, 1]`.
pub fn jsd_bits(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (entropy_bits(&m) - 0.5 * (entropy_bits(p) + entropy_bits(q))).clamp(0.0, 1.0)
}

/// Uniform reference over `groups`.
pub fn uniform_reference<S: AsRef<str>>(groups: &[S]) -> BTreeMap<String, f64> {
    let p = 1.0 / groups.len() as f64;
    groups.iter().map(|g| (g.as_ref().to_string(), p)).collect()
}

fn aligned(
    counts: &BTreeMap<String, usize>,
    reference: &BTreeMap<String, f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let total: usize = counts.values().sum();
    if total == 0 {
        return Err(Error::EmptyDistribution);
    }
    if reference.values().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidDistribution("negative or non-finite probability".into()));
    }
    let rsum: f64 = reference.values().sum();
    if (rsum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("reference sums to {rsum}")));
    }
    let keys: BTreeSet<&String> = counts.keys().chain(reference.keys()).collect();
    let p = keys
        .iter()
        .map(|k| counts.get(*k).copied().unwrap_or(0) as f64 / total as f64)
        .collect();
    let q = keys.iter().map(|k| reference.get(*k).copied().unwrap_or(0.0)).collect();
    Ok((p, q))
}

/// Base-2 JSD between the normalized `counts` and `reference`. Groups missing
/// from either side count as zero mass.
pub fn normalized_jsd(counts: &BTreeMap<String, usize>, reference: &BTreeMap<String, f64>) -> Result<f64> {
    let (p, q) = aligned(counts, reference)?;
    Ok(jsd_bits(&p, &q))
}

/// [`normalized_jsd`] after adding `epsilon` to every bin of both
/// distributions and renormalizing.
pub fn normalized_jsd_smoothed(
    counts: &BTreeMap<String, usize>,
    reference: &BTreeMap<String, f64>,
    epsilon: f64,
) -> Result<f64> {
    let (p, q) = aligned(counts, reference)?;
    let smooth = |v: Vec<f64>| {
        let s: f64 = v.iter().sum::<f64>() + epsilon * v.len() as f64;
        v.into_iter().map(|x| (x + epsilon) / s).collect::<Vec<_>>()
    };
    Ok(jsd_bits(&smooth(p), &smooth(q)))
}

/// Per-group fraction of rows closer to `t_pos` than to `t_neg`.
pub fn zero_shot_binary(
    set: &EmbeddingSet,
    t_pos: &ConceptVector,
    t_neg: &ConceptVector,
) -> Result<BTreeMap<String, f64>> {
    check_dims(set.dim(), t_neg.dim())?;
    let pos = similarities(set, t_pos)?;
    let neg = similarities(set, t_neg)?;
    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for ((p, n), l) in pos.iter().zip(&neg).zip(set.labels()) {
        let e = tally.entry(l.group.clone()).or_default();
        e.0 += (p > n) as usize;
        e.1 += 1;
    }
    Ok(tally
        .into_iter()
        .map(|(g, (c, n))| (g, c as f64 / n as f64))
        .collect())
}

/// Percentage reduction in dispersion, `(1 - after / before) * 100`.
pub fn delta_sigma_pct(sigma_before: f64, sigma_after: f64) -> Result<f64> {
    if !(sigma_before > 0.0) {
        return Err(Error::ZeroBaseline);
    }
    Ok((1.0 - sigma_after / sigma_before) * 100.0)
}

/// Percentage reduction in JSD, same convention as [`delta_sigma_pct`].
pub fn jsd_reduction_pct(jsd_before: f64, jsd_after: f64) -> Result<f64> {
    delta_sigma_pct(jsd_before, jsd_after)
}
