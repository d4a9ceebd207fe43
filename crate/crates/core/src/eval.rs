//! Evaluation primitives: macro-F1, stratified splits, the logistic-regression
//! baseline and a Stirling estimate of the combination count.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngStream;
use crate::training::{argmax_rows, cross_entropy_loss};

/// Unweighted mean of per-class F1.
///
/// Classes absent from both `y_true` and `y_pred` are left out of the mean;
/// a class with no true positives scores 0.
pub fn macro_f1(y_true: &[usize], y_pred: &[usize], class_count: usize) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Input(format!(
            "{} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Input("macro F1 of an empty prediction set".into()));
    }
    let mut tp = vec![0usize; class_count];
    let mut fp = vec![0usize; class_count];
    let mut fneg = vec![0usize; class_count];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= class_count || p >= class_count {
            return Err(Error::Input(format!(
                "label pair ({t}, {p}) outside [0, {class_count})"
            )));
        }
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 0..class_count {
        let denom = 2 * tp[c] + fp[c] + fneg[c];
        if denom == 0 {
            continue;
        }
        present += 1;
        sum += (2 * tp[c]) as f64 / denom as f64;
    }
    Ok(sum / present as f64)
}

fn indices_by_class(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    by_class
}

/// Splits sample indices into `k` stratified folds.
///
/// Each class is shuffled and dealt round-robin; the dealing position carries
/// over from one class to the next so overall fold sizes also stay within one.
pub fn stratified_folds(labels: &[usize], k: usize, rng: &mut RngStream) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let by_class = indices_by_class(labels);
    if let Some((&class, members)) = by_class.iter().find(|(_, m)| m.len() < k) {
        return Err(Error::Stratification {
            class,
            count: members.len(),
            folds: k,
        });
    }
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (_, mut members) in by_class {
        rng.shuffle(&mut members);
        for i in members {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Stratified train/test split; each class sends `round(n_c · test_fraction)`
/// samples (at least one, and never all) to the test side.
pub fn stratified_holdout(
    labels: &[usize],
    test_fraction: f64,
    rng: &mut RngStream,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut members) in indices_by_class(labels) {
        if members.len() < 2 {
            return Err(Error::Stratification {
                class,
                count: members.len(),
                folds: 2,
            });
        }
        rng.shuffle(&mut members);
        let n_test = libm::round(members.len() as f64 * test_fraction) as usize;
        let n_test = n_test.clamp(1, members.len() - 1);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
        }
    }
}

/// Multinomial logistic regression.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogisticModel {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl LogisticModel {
    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = x.matmul(&self.w)?;
        z.add_row_vector(&self.b)?;
        Ok(z)
    }
}

/// Full-batch gradient descent on mean cross-entropy from a zero start, no
/// regularisation.
pub fn fit_logistic_baseline(dataset: &Dataset, config: LogisticConfig) -> Result<LogisticModel> {
    dataset.validate()?;
    if dataset.is_empty() {
        return Err(Error::Input("cannot fit on an empty dataset".into()));
    }
    if dataset.class_counts().iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::Input("training data contains a single class".into()));
    }
    let x = &dataset.features;
    let mut model = LogisticModel {
        w: Matrix::zeros(x.cols(), dataset.class_count()),
        b: vec![0.0; dataset.class_count()],
    };
    for epoch in 0..config.epochs {
        let logits = model.logits(x)?;
        let (loss, d_logits) = cross_entropy_loss(&logits, &dataset.labels)?;
        if !loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("non-finite logistic loss {loss}"),
            });
        }
        let grad_w = x.t_matmul(&d_logits)?;
        for (w, g) in model.w.as_mut_slice().iter_mut().zip(grad_w.as_slice()) {
            *w -= config.learning_rate * g;
        }
        for (b, g) in model.b.iter_mut().zip(d_logits.column_sums()) {
            *b -= config.learning_rate * g;
        }
    }
    Ok(model)
}

pub fn predict_logistic(model: &LogisticModel, x: &Matrix) -> Result<Vec<usize>> {
    Ok(argmax_rows(&model.logits(x)?))
}

/// Log-space Stirling estimates of `C(n, r)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StirlingEstimate {
    /// `ln` of the full form, square-root prefactor included.
    pub ln_full: f64,
    /// `ln` of the dominant term `n^n / (r^r (n-r)^(n-r))`.
    pub ln_dominant: f64,
}

impl StirlingEstimate {
    pub fn full(&self) -> f64 {
        libm::exp(self.ln_full)
    }

    pub fn dominant(&self) -> f64 {
        libm::exp(self.ln_dominant)
    }
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * libm::log(x)
    }
}

/// Both Stirling forms in log space. `r ∈ {0, n}` is exact (`ln 1 = 0`);
/// `r > n` has no combinations and yields `-∞`.
pub fn stirling_ln_combination(n: usize, r: usize) -> StirlingEstimate {
    if r > n {
        return StirlingEstimate {
            ln_full: f64::NEG_INFINITY,
            ln_dominant: f64::NEG_INFINITY,
        };
    }
    if r == 0 || r == n {
        return StirlingEstimate {
            ln_full: 0.0,
            ln_dominant: 0.0,
        };
    }
    let (nf, rf) = (n as f64, r as f64);
    let rest = nf - rf;
    let two_pi = 2.0 * core::f64::consts::PI;
    let ln_dominant = xlogx(nf) - xlogx(rf) - xlogx(rest);
    let ln_prefactor =
        0.5 * libm::log(two_pi * nf) - libm::log(two_pi) - 0.5 * libm::log(rf * rest);
    StirlingEstimate {
        ln_full: ln_prefactor + ln_dominant,
        ln_dominant,
    }
}

/// Full-form Stirling estimate of `C(n, r)`.
pub fn stirling_combination_estimate(n: usize, r: usize) -> f64 {
    stirling_ln_combination(n, r).full()
}

/// Sample mean and (population) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}
