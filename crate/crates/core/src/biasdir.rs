//! Logistic probes and the unit bias direction they define.
//!
//! A probe models `P(y = 1 | e) = sigmoid(w.e + b)` with `class1` rows as
//! the positive class. The stored direction is `w / |w|` together with the
//! intercept divided by the same factor, so `(w_hat, b)` makes exactly the
//! same decisions as the raw fit.

use serde::{Deserialize, Serialize};

use crate::embedset::EmbeddingSet;
use crate::linalg::{check_dims, dot, norm};
use crate::{Error, Result};

/// Below this weight norm the probe found no direction to normalize.
pub const DEGENERATE_NORM: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// Multiplier on the safe step `1 / L`, `L` being the Lipschitz constant
    /// of the loss gradient. Values up to 1 are monotone.
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub l2_lambda: f64,
    /// Training stops once an epoch improves the loss by less than this.
    pub convergence_tol: f64,
    /// Recorded for provenance. Full-batch descent from zero does not
    /// consume randomness.
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            max_epochs: 500,
            l2_lambda: 1e-4,
            convergence_tol: 1e-8,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be at least 1".into()));
        }
        if !(self.l2_lambda >= 0.0) {
            return Err(Error::InvalidConfig("l2_lambda must be non-negative".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidConfig("convergence_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasDirection {
    pub w_hat: Vec<f64>,
    #[serde(rename = "b")]
    pub bias: f64,
    #[serde(rename = "accuracy")]
    pub train_accuracy: f64,
    #[serde(rename = "iteration")]
    pub iteration_index: usize,
}

impl BiasDirection {
    pub fn dim(&self) -> usize {
        self.w_hat.len()
    }

    pub fn decision(&self, e: &[f64]) -> f64 {
        dot(&self.w_hat, e) + self.bias
    }

    /// `sigmoid(decision) >= 0.5`.
    pub fn predict(&self, e: &[f64]) -> bool {
        self.decision(e) >= 0.0
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LogisticFit {
    pub w: Vec<f64>,
    pub b: f64,
    pub epochs: usize,
}

#[inline]
fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

struct Problem<'a> {
    x: &'a [f64],
    dim: usize,
    y: &'a [bool],
    lambda: f64,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn loss(&self, w: &[f64], b: f64) -> f64 {
        let data: f64 = self
            .x
            .chunks_exact(self.dim)
            .zip(self.y)
            .map(|(row, &y)| {
                let s = dot(w, row) + b;
                softplus(s) - if y { s } else { 0.0 }
            })
            .sum();
        data / self.n() as f64 + 0.5 * self.lambda * dot(w, w)
    }

    fn gradient(&self, w: &[f64], b: f64, gw: &mut [f64]) -> f64 {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (row, &y) in self.x.chunks_exact(self.dim).zip(self.y) {
            let r = sigmoid(dot(w, row) + b) - if y { 1.0 } else { 0.0 };
            gb += r;
            gw.iter_mut().zip(row).for_each(|(g, xi)| *g += r * xi);
        }
        let inv_n = 1.0 / self.n() as f64;
        gw.iter_mut()
            .zip(w)
            .for_each(|(g, wi)| *g = *g * inv_n + self.lambda * wi);
        gb * inv_n
    }
}

/// Largest eigenvalue of `(1/n) [x 1]^T [x 1]`, by power iteration, padded
/// by 5% since the iteration approaches it from below.
fn gram_spectral_bound(x: &[f64], dim: usize) -> f64 {
    let n = (x.len() / dim) as f64;
    let mut v = vec![1.0; dim + 1];
    let mut lambda = 0.0;
    for _ in 0..60 {
        let mut out = vec![0.0; dim + 1];
        for row in x.chunks_exact(dim) {
            let s = dot(row, &v[..dim]) + v[dim];
            out[..dim].iter_mut().zip(row).for_each(|(o, xi)| *o += s * xi);
            out[dim] += s;
        }
        out.iter_mut().for_each(|o| *o /= n);
        let nv = norm(&out);
        if nv == 0.0 {
            break;
        }
        lambda = dot(&out, &v) / dot(&v, &v);
        v = out.iter().map(|o| o / nv).collect();
    }
    1.05 * lambda.max(f64::MIN_POSITIVE)
}

/// Minimizes the L2-regularized logistic loss by accelerated full-batch
/// gradient descent (Nesterov momentum, restarted whenever the loss rises).
/// Deterministic: starts from zero and sums in row order.
pub(crate) fn fit_logistic(
    x: &[f64],
    dim: usize,
    y: &[bool],
    cfg: &ClassifierConfig,
) -> Result<LogisticFit> {
    cfg.validate()?;
    debug_assert_eq!(x.len(), dim * y.len());
    let prob = Problem {
        x,
        dim,
        y,
        lambda: cfg.l2_lambda,
    };
    let lipschitz = 0.25 * gram_spectral_bound(x, dim) + cfg.l2_lambda;
    let mut step = cfg.learning_rate / lipschitz;
    let min_step = step * 1e-12;

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut zw = w.clone();
    let mut zb = 0.0;
    let mut gw = vec![0.0; dim];
    let mut t = 1.0f64;
    let mut loss = prob.loss(&w, b);
    let mut epochs = 0;

    while epochs < cfg.max_epochs {
        epochs += 1;
        let gb = prob.gradient(&zw, zb, &mut gw);
        let nw: Vec<f64> = zw.iter().zip(&gw).map(|(z, g)| z - step * g).collect();
        let nb = zb - step * gb;
        let nloss = prob.loss(&nw, nb);
        if nloss > loss {
            if t == 1.0 {
                // A plain gradient step overshot: the curvature bound was
                // too optimistic or we are at the floor of float precision.
                step *= 0.5;
                if step < min_step {
                    break;
                }
                continue;
            }
            t = 1.0;
            zw.copy_from_slice(&w);
            zb = b;
            continue;
        }
        let nt = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / nt;
        for ((z, &n), &o) in zw.iter_mut().zip(&nw).zip(&w) {
            *z = n + momentum * (n - o);
        }
        zb = nb + momentum * (nb - b);
        let improvement = loss - nloss;
        w = nw;
        b = nb;
        loss = nloss;
        t = nt;
        if improvement < cfg.convergence_tol {
            break;
        }
    }
    Ok(LogisticFit { w, b, epochs })
}

/// Fits a probe on labeled rows and returns its unit direction.
pub(crate) fn train_direction(
    x: &[f64],
    dim: usize,
    y: &[bool],
    cfg: &ClassifierConfig,
    iteration_index: usize,
) -> Result<BiasDirection> {
    let first = &x[..dim];
    if x.chunks_exact(dim).all(|r| r == first) {
        return Err(Error::DegenerateData { norm: 0.0 });
    }
    let fit = fit_logistic(x, dim, y, cfg)?;
    let n = norm(&fit.w);
    if n < DEGENERATE_NORM {
        return Err(Error::DegenerateData { norm: n });
    }
    let dir = BiasDirection {
        w_hat: fit.w.iter().map(|v| v / n).collect(),
        bias: fit.b / n,
        train_accuracy: 0.0,
        iteration_index,
    };
    let correct = x
        .chunks_exact(dim)
        .zip(y)
        .filter(|(r, &yy)| dir.predict(r) == yy)
        .count();
    log::debug!(
        "probe {iteration_index}: {} epochs, |w| = {n:.4e}",
        fit.epochs
    );
    Ok(BiasDirection {
        train_accuracy: correct as f64 / y.len() as f64,
        ..dir
    })
}

fn stack(class0: &EmbeddingSet, class1: &EmbeddingSet) -> Result<(Vec<f64>, Vec<bool>)> {
    check_dims(class0.dim(), class1.dim())?;
    if class0.is_empty() {
        return Err(Error::EmptyClass(0));
    }
    if class1.is_empty() {
        return Err(Error::EmptyClass(1));
    }
    let mut x = Vec::with_capacity(class0.as_slice().len() + class1.as_slice().len());
    x.extend_from_slice(class0.as_slice());
    x.extend_from_slice(class1.as_slice());
    let mut y = vec![false; class0.len()];
    y.resize(class0.len() + class1.len(), true);
    Ok((x, y))
}

/// Trains a probe separating `class0` (y = 0) from `class1` (y = 1).
pub fn train_classifier(
    class0: &EmbeddingSet,
    class1: &EmbeddingSet,
    cfg: &ClassifierConfig,
) -> Result<BiasDirection> {
    let (x, y) = stack(class0, class1)?;
    if y.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} rows in total, need at least 4",
            y.len()
        )));
    }
    train_direction(&x, class0.dim(), &y, cfg, 0)
}

/// Fraction of rows of both classes on the correct side of `dir`.
pub fn classify_accuracy(
    dir: &BiasDirection,
    class0: &EmbeddingSet,
    class1: &EmbeddingSet,
) -> Result<f64> {
    check_dims(dir.dim(), class0.dim())?;
    let (x, y) = stack(class0, class1)?;
    let correct = x
        .chunks_exact(dir.dim())
        .zip(&y)
        .filter(|(r, &yy)| dir.predict(r) == yy)
        .count();
    Ok(correct as f64 / y.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedset::{Gender, RowLabel};
    use crate::rng::Gaussian;

    fn cluster(center: &[f64], n: usize, g: &mut Gaussian) -> EmbeddingSet {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| center.iter().map(|c| c + g.sample()).collect())
            .collect();
        let labels = (0..n)
            .map(|i| RowLabel::new("c", Gender::Unspecified, i.to_string()))
            .collect();
        EmbeddingSet::from_rows(&rows, labels).unwrap()
    }

    fn axis(d: usize, k: usize, s: f64) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[k] = s;
        v
    }

    /// Independent oracle: for isotropic clusters the Bayes direction is the
    /// difference of class means; the best single-coordinate threshold is
    /// found by brute force over coordinates and midpoints.
    fn mean_difference(a: &EmbeddingSet, b: &EmbeddingSet) -> Vec<f64> {
        let d = a.dim();
        let mean = |s: &EmbeddingSet| {
            let mut m = vec![0.0; d];
            for r in s.rows() {
                m.iter_mut().zip(r).for_each(|(mi, x)| *mi += x / s.len() as f64);
            }
            m
        };
        let (ma, mb) = (mean(a), mean(b));
        mb.iter().zip(&ma).map(|(x, y)| x - y).collect()
    }

    #[test]
    fn separable_clusters_recover_the_axis() {
        let mut g = Gaussian::new(11);
        let c0 = cluster(&axis(8, 0, -5.0), 100, &mut g);
        let c1 = cluster(&axis(8, 0, 5.0), 100, &mut g);
        let dir = train_classifier(&c0, &c1, &ClassifierConfig::default()).unwrap();
        assert!((norm(&dir.w_hat) - 1.0).abs() < 1e-9);
        assert!(dir.train_accuracy >= 0.99, "{}", dir.train_accuracy);
        assert!(dir.w_hat[0].abs() >= 0.95, "{:?}", dir.w_hat);
        assert!(classify_accuracy(&dir, &c0, &c1).unwrap() >= 0.99);

        let oracle = mean_difference(&c0, &c1);
        let cos = dot(&oracle, &dir.w_hat) / norm(&oracle);
        assert!(cos >= 0.95, "cos to mean difference {cos}");

        // Brute-force: the single best coordinate is e1.
        let best = (0..8)
            .max_by(|&i, &j| oracle[i].abs().total_cmp(&oracle[j].abs()))
            .unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn swapped_labels_flip_the_direction() {
        let mut g = Gaussian::new(5);
        let c0 = cluster(&axis(8, 0, -5.0), 100, &mut g);
        let c1 = cluster(&axis(8, 0, 5.0), 100, &mut g);
        let cfg = ClassifierConfig::default();
        let a = train_classifier(&c0, &c1, &cfg).unwrap();
        let b = train_classifier(&c1, &c0, &cfg).unwrap();
        assert!(dot(&a.w_hat, &b.w_hat) <= -0.99);
    }

    #[test]
    fn identical_classes_are_degenerate() {
        let mut g = Gaussian::new(2);
        let c = cluster(&axis(4, 1, 1.0), 10, &mut g);
        assert!(matches!(
            train_classifier(&c, &c, &ClassifierConfig::default()),
            Err(Error::DegenerateData { .. })
        ));
        let same = EmbeddingSet::from_rows(
            &vec![vec![1.0, 2.0]; 3],
            (0..3).map(|i| RowLabel::new("a", Gender::Male, i.to_string())).collect(),
        )
        .unwrap();
        assert!(matches!(
            train_classifier(&same, &same.subset(&[0]), &ClassifierConfig::default()),
            Err(Error::DegenerateData { .. })
        ));
    }

    #[test]
    fn orthogonal_direction_is_at_chance() {
        // Data varies only along e1; test direction e2 with zero intercept.
        let mut g = Gaussian::new(9);
        let mk = |s: f64, g: &mut Gaussian| {
            let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![s + 0.3 * g.sample(), 0.0, 0.0]).collect();
            EmbeddingSet::from_rows(
                &rows,
                (0..200).map(|i| RowLabel::new("x", Gender::Male, i.to_string())).collect(),
            )
            .unwrap()
        };
        let c0 = mk(-1.0, &mut g);
        let c1 = mk(1.0, &mut g);
        let dir = BiasDirection {
            w_hat: vec![0.0, 1.0, 0.0],
            bias: 0.0,
            train_accuracy: 0.0,
            iteration_index: 0,
        };
        let acc = classify_accuracy(&dir, &c0, &c1).unwrap();
        assert!((acc - 0.5).abs() <= 0.1, "{acc}");
    }

    #[test]
    fn empty_class_and_dims() {
        let mut g = Gaussian::new(1);
        let c = cluster(&[0.0, 0.0], 4, &mut g);
        let empty = c.subset(&[]);
        let dir = BiasDirection {
            w_hat: vec![1.0, 0.0],
            bias: 0.0,
            train_accuracy: 0.0,
            iteration_index: 0,
        };
        assert!(matches!(classify_accuracy(&dir, &empty, &c), Err(Error::EmptyClass(0))));
        assert!(matches!(classify_accuracy(&dir, &c, &empty), Err(Error::EmptyClass(1))));
        let c3 = cluster(&[0.0, 0.0, 0.0], 4, &mut g);
        assert!(matches!(
            train_classifier(&c, &c3, &ClassifierConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            train_classifier(&c.subset(&[0]), &c.subset(&[1, 2]), &ClassifierConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn deterministic_and_scale_invariant_decisions() {
        let mut g = Gaussian::new(21);
        let c0 = cluster(&axis(6, 2, -1.0), 50, &mut g);
        let c1 = cluster(&axis(6, 2, 1.0), 50, &mut g);
        let cfg = ClassifierConfig::default();
        let a = train_classifier(&c0, &c1, &cfg).unwrap();
        let b = train_classifier(&c0, &c1, &cfg).unwrap();
        assert_eq!(
            a.w_hat.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.w_hat.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        // Decisions of the raw fit and the normalized direction agree.
        let (x, y) = stack(&c0, &c1).unwrap();
        let fit = fit_logistic(&x, 6, &y, &cfg).unwrap();
        for r in x.chunks_exact(6) {
            let raw = dot(&fit.w, r) + fit.b >= 0.0;
            assert_eq!(raw, a.predict(r));
            let scaled = dot(&fit.w, r) * 7.5 + fit.b * 7.5 >= 0.0;
            assert_eq!(raw, scaled);
        }
    }

    #[test]
    fn config_validation() {
        let bad = ClassifierConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ClassifierConfig {
            max_epochs: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn json_shape() {
        let d = BiasDirection {
            w_hat: vec![1.0, 0.0],
            bias: 0.5,
            train_accuracy: 0.75,
            iteration_index: 2,
        };
        let v: serde_json::Value = serde_json::to_value(&d).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(keys, ["accuracy", "b", "iteration", "w_hat"]);
    }
}
