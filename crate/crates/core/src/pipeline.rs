//! End-to-end workflows: train/eval split, audit, and fit-and-debias.

use std::collections::BTreeMap;

use crate::embedset::{normalize_rows, ConceptVector, EmbeddingSet, Gender};
use crate::inlp::{apply_transform, fit_inlp, DebiasTransform, InlpConfig};
use crate::linalg::{check_dims, normalized};
use crate::metrics::{uniform_reference, zero_shot_binary};
use crate::prompts::{ZERO_SHOT_NEGATIVE, ZERO_SHOT_POSITIVE};
use crate::report::FairnessReport;
use crate::rng::SplitMix64;
use crate::slerpcomp::{compensate_set, slerp_set, CompensationMode, SlerpParams};
use crate::{Error, Result};

/// Splits every (group, gender) cell in half at random. Both outputs keep the
/// input row order.
pub fn cmd_split(set: &EmbeddingSet, seed: u64) -> Result<(EmbeddingSet, EmbeddingSet)> {
    let mut cells: BTreeMap<(&str, Gender), Vec<usize>> = BTreeMap::new();
    for (i, l) in set.labels().iter().enumerate() {
        cells.entry((l.group.as_str(), l.gender)).or_default().push(i);
    }
    let mut rng = SplitMix64::new(seed);
    let mut train = Vec::with_capacity(set.len() / 2);
    let mut eval = Vec::with_capacity(set.len() / 2);
    for ((group, gender), mut idx) in cells {
        if idx.len() % 2 != 0 {
            return Err(Error::OddCellCount {
                group: group.to_string(),
                gender: gender.to_string(),
                count: idx.len(),
            });
        }
        rng.shuffle(&mut idx);
        let (a, b) = idx.split_at(idx.len() / 2);
        train.extend_from_slice(a);
        eval.extend_from_slice(b);
    }
    train.sort_unstable();
    eval.sort_unstable();
    Ok((set.subset(&train), set.subset(&eval)))
}

fn find<'a>(concepts: &'a [ConceptVector], text: &str) -> Option<&'a ConceptVector> {
    concepts.iter().find(|c| c.text == text)
}

fn zero_shot_pair(concepts: &[ConceptVector]) -> Option<(&ConceptVector, &ConceptVector)> {
    Some((find(concepts, ZERO_SHOT_POSITIVE)?, find(concepts, ZERO_SHOT_NEGATIVE)?))
}

/// One before-only report per concept. Zero-shot accuracies are attached
/// when both screening prompts are among the concepts.
pub fn cmd_audit(model_tag: &str, set: &EmbeddingSet, concepts: &[ConceptVector], k: usize) -> Result<Vec<FairnessReport>> {
    if concepts.is_empty() {
        return Err(Error::InvalidConfig("no concepts to audit".into()));
    }
    let reference = uniform_reference(&set.groups());
    let zs = zero_shot_pair(concepts)
        .map(|(p, n)| zero_shot_binary(set, p, n))
        .transpose()?;
    concepts
        .iter()
        .map(|c| {
            let r = FairnessReport::audit(model_tag, set, c, k, &reference)?;
            Ok(match &zs {
                Some(z) => r.with_zero_shot(z, None),
                None => r,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DebiasConfig {
    pub model_tag: String,
    pub inlp: InlpConfig,
    pub alpha: f64,
    pub compensation: CompensationMode,
    pub k: usize,
}

impl Default for DebiasConfig {
    fn default() -> Self {
        Self {
            model_tag: "unknown".into(),
            inlp: InlpConfig::default(),
            alpha: 1.0,
            compensation: CompensationMode::default(),
            k: crate::metrics::DEFAULT_TOP_K,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DebiasOutcome {
    pub debiased: EmbeddingSet,
    pub transform: DebiasTransform,
    pub reports: Vec<FairnessReport>,
}

/// Projection, SLERP back toward the original by `alpha`, then similarity
/// compensation against the unit-length `anchor`.
pub fn debias_set(
    transform: &DebiasTransform,
    set: &EmbeddingSet,
    anchor: &ConceptVector,
    alpha: f64,
    mode: CompensationMode,
) -> Result<EmbeddingSet> {
    check_dims(set.dim(), anchor.dim())?;
    let unit = ConceptVector::new(
        anchor.text.clone(),
        normalized(&anchor.vector).ok_or_else(|| Error::UnknownConcept(anchor.text.clone()))?,
    )?;
    let projected = apply_transform(transform, set)?;
    let blended = slerp_set(set, &projected, SlerpParams::new(alpha)?)?;
    Ok(compensate_set(&blended, set, &unit, mode)?.0)
}

/// Fits on (normalized) `train`, debiases `eval` against the first concept
/// and reports every concept before and after.
pub fn cmd_debias(
    train: &EmbeddingSet,
    eval: &EmbeddingSet,
    concepts: &[ConceptVector],
    cfg: &DebiasConfig,
) -> Result<DebiasOutcome> {
    check_dims(train.dim(), eval.dim())?;
    let transform = fit_inlp(&normalize_rows(train)?, &cfg.inlp)?;
    log::info!(
        "fitted {} direction(s); residual accuracy {:.4} vs chance {:.4}",
        transform.len(),
        transform.final_accuracy,
        transform.chance_level
    );
    debias_with_transform(transform, eval, concepts, cfg)
}

/// The debias half of [`cmd_debias`] with an already fitted transform.
pub fn debias_with_transform(
    transform: DebiasTransform,
    eval: &EmbeddingSet,
    concepts: &[ConceptVector],
    cfg: &DebiasConfig,
) -> Result<DebiasOutcome> {
    check_dims(transform.dim, eval.dim())?;
    let anchor = concepts
        .first()
        .ok_or_else(|| Error::InvalidConfig("no concepts to debias against".into()))?;
    let debiased = debias_set(&transform, eval, anchor, cfg.alpha, cfg.compensation)?;
    let reference = uniform_reference(&eval.groups());
    let zs = match zero_shot_pair(concepts) {
        Some((p, n)) => Some((zero_shot_binary(eval, p, n)?, zero_shot_binary(&debiased, p, n)?)),
        None => None,
    };
    let reports = concepts
        .iter()
        .map(|c| {
            let r = FairnessReport::audit(&cfg.model_tag, eval, c, cfg.k, &reference)?.with_after(&debiased, c, &reference)?;
            Ok(match &zs {
                Some((b, d)) => r.with_zero_shot(b, Some(d)),
                None => r,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DebiasOutcome {
        debiased,
        transform,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedset::RowLabel;
    use crate::synth::{generate, SynthSpec};
    use std::collections::BTreeSet;

    #[test]
    fn split_halves_cells() {
        let data = generate(&SynthSpec::desk_default(9)).unwrap();
        let (a, b) = cmd_split(&data.set, 1).unwrap();
        assert_eq!(a.len(), 1800);
        assert_eq!(b.len(), 1800);
        for part in [&a, &b] {
            let mut cells: BTreeMap<(String, Gender), usize> = BTreeMap::new();
            for l in part.labels() {
                *cells.entry((l.group.clone(), l.gender)).or_default() += 1;
            }
            assert_eq!(cells.len(), 72);
            assert!(cells.values().all(|&c| c == 25));
        }
        let ids = |s: &EmbeddingSet| s.labels().iter().map(|l| l.source_id.clone()).collect::<BTreeSet<_>>();
        assert!(ids(&a).is_disjoint(&ids(&b)));
        assert_eq!(ids(&a).len() + ids(&b).len(), 3600);
        let (a2, _) = cmd_split(&data.set, 1).unwrap();
        assert_eq!(a.labels(), a2.labels());
        let (a3, _) = cmd_split(&data.set, 2).unwrap();
        assert_ne!(a.labels(), a3.labels());
    }

    #[test]
    fn odd_cell() {
        let rows = vec![vec![1.0, 0.0]; 3];
        let labels = (0..3).map(|i| RowLabel::new("X", Gender::Male, i.to_string())).collect();
        let set = EmbeddingSet::from_rows(&rows, labels).unwrap();
        assert!(matches!(cmd_split(&set, 0), Err(Error::OddCellCount { count: 3, .. })));
    }

    #[test]
    fn audit_planted_and_k_overflow() {
        let spec = SynthSpec::single_axis(2);
        let data = generate(&spec).unwrap();
        let concepts = spec.concepts().unwrap();
        let r = &cmd_audit("synth", &data.set, &concepts[..1], 500).unwrap()[0];
        let top = r.top_k_before.counts.iter().max_by_key(|(_, c)| **c).unwrap();
        assert_eq!(top.0, "Andaman and Nicobar Islands");
        assert!(*top.1 > 500 / 36);
        assert!(r.jsd_before > 0.1, "{}", r.jsd_before);
        let all = cmd_audit("synth", &data.set, &concepts[..1], 10_000).unwrap();
        assert_eq!(all[0].top_k_before.total(), 3600);
        assert!(cmd_audit("synth", &data.set, &[], 5).is_err());
    }

    #[test]
    fn unbiased_audit_is_near_uniform() {
        for seed in 0..3 {
            let spec = SynthSpec::single_axis(seed).unbiased();
            let data = generate(&spec).unwrap();
            let r = &cmd_audit("synth", &data.set, &spec.concepts().unwrap()[..1], 500).unwrap()[0];
            assert!(r.jsd_before < 0.05, "seed {seed}: {}", r.jsd_before);
        }
    }

    #[test]
    fn alpha_zero_is_identity() {
        let spec = SynthSpec::single_axis(4);
        let data = generate(&spec).unwrap();
        let (train, eval) = cmd_split(&data.set, 0).unwrap();
        let cfg = DebiasConfig {
            alpha: 0.0,
            ..Default::default()
        };
        let out = cmd_debias(&train, &eval, &spec.concepts().unwrap(), &cfg).unwrap();
        for (a, b) in out.debiased.as_slice().iter().zip(eval.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(out.reports[0].delta_sigma_pct.unwrap().abs() < 1e-6);
    }

    #[test]
    fn unbiased_fit_is_empty() {
        let spec = SynthSpec::single_axis(5).unbiased();
        let data = generate(&spec).unwrap();
        let (train, eval) = cmd_split(&data.set, 0).unwrap();
        let out = cmd_debias(&train, &eval, &spec.concepts().unwrap(), &DebiasConfig::default()).unwrap();
        assert!(out.transform.is_empty());
        assert!(out.reports[0].delta_sigma_pct.unwrap().abs() < 1e-6);
    }
}
