//! Iterative nullspace projection.
//!
//! Each round trains linear probes for the group attribute on the current
//! (already projected) embeddings, keeps the most accurate one, and removes
//! its direction with `P = I - w w^T`. Rounds continue until no probe beats
//! chance by more than the configured tolerance.
//!
//! Projections are stored as unit directions and applied sequentially as
//! `v <- v - (w.v) w`, which equals the matrix chain `P_{K-1} ... P_0 v`
//! in `O(Kd)` per vector.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biasdir::{train_direction, BiasDirection, ClassifierConfig};
use crate::embedset::EmbeddingSet;
use crate::linalg::{check_dims, dot, norm};
use crate::{Error, Result};

/// How group labels become binary probe targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// One positive group against everything else.
    Binary,
    /// One probe per group against the rest; the most accurate one wins.
    #[default]
    OneVsRestMax,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Strategy::Binary),
            "one_vs_rest_max" => Ok(Strategy::OneVsRestMax),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InlpConfig {
    pub max_iterations: usize,
    /// Chance level floor. The effective chance level of a probe is the
    /// larger of this and its majority-class rate.
    pub stop_accuracy: f64,
    pub stop_tolerance: f64,
    pub strategy: Strategy,
    /// Positive group for [`Strategy::Binary`]. With exactly two groups and
    /// no choice given, the second group in sorted order is positive.
    pub positive_group: Option<String>,
    pub classifier: ClassifierConfig,
}

impl Default for InlpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            stop_accuracy: 0.5,
            stop_tolerance: 0.02,
            strategy: Strategy::default(),
            positive_group: None,
            classifier: ClassifierConfig::default(),
        }
    }
}

impl InlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if !(self.stop_accuracy > 0.0 && self.stop_accuracy < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "stop_accuracy must lie in (0, 1), got {}",
                self.stop_accuracy
            )));
        }
        if !(self.stop_tolerance > 0.0) {
            return Err(Error::InvalidConfig("stop_tolerance must be positive".into()));
        }
        self.classifier.validate()
    }
}

/// An ordered chain of nullspace projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasTransform {
    pub dim: usize,
    pub strategy: Strategy,
    pub directions: Vec<BiasDirection>,
    /// Best probe accuracy measured on the fully projected training data.
    pub final_accuracy: f64,
    /// Chance level that accuracy was compared against.
    pub chance_level: f64,
    /// False when `max_iterations` ran out before reaching chance level.
    pub converged: bool,
}

impl DebiasTransform {
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            strategy: Strategy::default(),
            directions: Vec::new(),
            final_accuracy: 0.5,
            chance_level: 0.5,
            converged: true,
        }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Passes one vector through every projection in stored order.
    pub fn apply_vector(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dims(self.dim, v.len())?;
        let mut out = v.to_vec();
        for d in &self.directions {
            project_in_place(&mut out, &d.w_hat);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: DebiasTransform = serde_json::from_str(s)?;
        t.check()?;
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let t: DebiasTransform = serde_json::from_reader(BufReader::new(f))?;
        t.check()?;
        Ok(t)
    }

    fn check(&self) -> Result<()> {
        for d in &self.directions {
            check_dims(self.dim, d.dim())?;
            check_unit(&d.w_hat)?;
        }
        Ok(())
    }
}

fn check_unit(w: &[f64]) -> Result<()> {
    let n = norm(w);
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::UnnormalizedDirection { norm: n });
    }
    Ok(())
}

#[inline]
fn project_in_place(v: &mut [f64], w_hat: &[f64]) {
    let c = dot(v, w_hat);
    v.iter_mut().zip(w_hat).for_each(|(x, w)| *x -= c * w);
}

/// `v - (w_hat . v) w_hat`, the component of `v` orthogonal to `w_hat`.
pub fn project(v: &[f64], w_hat: &[f64]) -> Result<Vec<f64>> {
    check_dims(w_hat.len(), v.len())?;
    check_unit(w_hat)?;
    let mut out = v.to_vec();
    project_in_place(&mut out, w_hat);
    Ok(out)
}

/// Applies `t` to every row of `set`; labels are kept.
pub fn apply_transform(t: &DebiasTransform, set: &EmbeddingSet) -> Result<EmbeddingSet> {
    check_dims(t.dim, set.dim())?;
    set.map_rows(|_, r| t.apply_vector(r))
}

struct Task {
    y: Vec<bool>,
    chance: f64,
}

fn build_tasks(data: &EmbeddingSet, cfg: &InlpConfig) -> Result<Vec<Task>> {
    let groups = data.groups();
    if groups.len() < 2 {
        return Err(Error::TooFewGroups(format!(
            "need at least 2 groups, found {}",
            groups.len()
        )));
    }
    for g in &groups {
        let n = data.labels().iter().filter(|l| &l.group == g).count();
        if n < 2 {
            return Err(Error::TooFewGroups(format!("group {g:?} has {n} row(s), need 2")));
        }
    }
    let task_for = |positive: &str| {
        let y: Vec<bool> = data.labels().iter().map(|l| l.group == positive).collect();
        let pos = y.iter().filter(|&&b| b).count() as f64 / y.len() as f64;
        Task {
            chance: cfg.stop_accuracy.max(pos).max(1.0 - pos),
            y,
        }
    };
    Ok(match cfg.strategy {
        Strategy::Binary => {
            let positive = match &cfg.positive_group {
                Some(p) if groups.contains(p) => p.clone(),
                Some(p) => return Err(Error::EmptyGroup(p.clone())),
                None if groups.len() == 2 => groups[1].clone(),
                None => {
                    return Err(Error::InvalidConfig(format!(
                        "binary strategy over {} groups needs a positive group",
                        groups.len()
                    )))
                }
            };
            vec![task_for(&positive)]
        }
        Strategy::OneVsRestMax => groups.iter().map(|g| task_for(g)).collect(),
    })
}

/// Winning probe of one round.
#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub direction: BiasDirection,
    pub chance: f64,
}

impl ProbeOutcome {
    pub fn excess(&self) -> f64 {
        self.direction.train_accuracy - self.chance
    }
}

fn probe_round(
    x: &[f64],
    dim: usize,
    tasks: &[Task],
    cfg: &ClassifierConfig,
    iteration: usize,
) -> Result<Option<ProbeOutcome>> {
    let results: Vec<Result<BiasDirection>> = tasks
        .par_iter()
        .map(|t| train_direction(x, dim, &t.y, cfg, iteration))
        .collect();
    let mut best: Option<ProbeOutcome> = None;
    for (task, r) in tasks.iter().zip(results) {
        let direction = match r {
            Ok(d) => d,
            // Nothing left to separate for this task.
            Err(Error::DegenerateData { .. }) => continue,
            Err(e) => return Err(e),
        };
        let cand = ProbeOutcome {
            direction,
            chance: task.chance,
        };
        if best.as_ref().is_none_or(|b| cand.excess() > b.excess()) {
            best = Some(cand);
        }
    }
    Ok(best)
}

/// Trains the probes of one INLP round on `data` as is and returns the one
/// furthest above its chance level; `None` if every task is degenerate.
pub fn best_probe(data: &EmbeddingSet, cfg: &InlpConfig) -> Result<Option<ProbeOutcome>> {
    cfg.validate()?;
    let tasks = build_tasks(data, cfg)?;
    probe_round(data.as_slice(), data.dim(), &tasks, &cfg.classifier, 0)
}

/// Fits the projection chain on `data`.
///
/// Reaching `max_iterations` is not an error: the transform comes back with
/// `converged == false`.
pub fn fit_inlp(data: &EmbeddingSet, cfg: &InlpConfig) -> Result<DebiasTransform> {
    cfg.validate()?;
    let tasks = build_tasks(data, cfg)?;
    let dim = data.dim();
    let mut x = data.as_slice().to_vec();
    let mut directions: Vec<BiasDirection> = Vec::new();

    let mut outcome = None;
    for it in 0..=cfg.max_iterations {
        let Some(best) = probe_round(&x, dim, &tasks, &cfg.classifier, it)? else {
            outcome = Some((0.5f64.max(cfg.stop_accuracy), 0.5f64.max(cfg.stop_accuracy), true));
            break;
        };
        let excess = best.excess();
        let (mut dir, chance) = (best.direction, best.chance);
        log::info!(
            "inlp round {it}: best probe accuracy {:.4} (chance {:.4})",
            dir.train_accuracy,
            chance
        );
        if excess <= cfg.stop_tolerance {
            outcome = Some((dir.train_accuracy, chance, true));
            break;
        }
        if it == cfg.max_iterations {
            log::warn!(
                "inlp stopped after {} iterations with probe accuracy {:.4}",
                cfg.max_iterations,
                dir.train_accuracy
            );
            outcome = Some((dir.train_accuracy, chance, false));
            break;
        }
        // The probe was trained on projected rows, so its weights are already
        // orthogonal to earlier directions up to rounding; make it exact.
        for prev in &directions {
            project_in_place(&mut dir.w_hat, &prev.w_hat);
        }
        let n = norm(&dir.w_hat);
        dir.w_hat.iter_mut().for_each(|w| *w /= n);
        x.par_chunks_exact_mut(dim)
            .for_each(|row| project_in_place(row, &dir.w_hat));
        directions.push(dir);
    }
    let (final_accuracy, chance_level, converged) =
        outcome.expect("loop always records an outcome");
    Ok(DebiasTransform {
        dim,
        strategy: cfg.strategy,
        directions,
        final_accuracy,
        chance_level,
        converged,
    })
}
