//! One-vs-all linear SVM on feature vectors.
//!
//! Each class gets a binary hinge-loss problem `λ/2‖w‖² + mean hinge`
//! with `λ = 1/(C·n)`, solved by stochastic subgradient steps with step
//! size `1/(λt)` and averaged iterates. The bias is unregularized.
//! Prediction takes the argmax of class scores, ties to the lowest id.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::invalid_input;
use crate::seeds::stream_rng;
use crate::{math, Error, Result};

/// Per-class linear scorers, weights stored class-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOvaSvm {
    n_classes: usize,
    dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
    c: f64,
}

impl LinearOvaSvm {
    pub fn from_parts(dim: usize, weights: Vec<f64>, biases: Vec<f64>, c: f64) -> Result<Self> {
        let n_classes = biases.len();
        if n_classes < 2 {
            return Err(invalid_input!("a one-vs-all SVM needs at least 2 classes"));
        }
        if dim == 0 || weights.len() != n_classes * dim {
            return Err(Error::DimensionMismatch {
                what: "SVM weights",
                expected: n_classes * dim,
                got: weights.len(),
            });
        }
        if !math::all_finite(&weights) || !math::all_finite(&biases) || !c.is_finite() {
            return Err(Error::NonFinite("SVM parameters"));
        }
        Ok(LinearOvaSvm {
            n_classes,
            dim,
            weights,
            biases,
            c,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    pub fn bias(&self, class: usize) -> f64 {
        self.biases[class]
    }

    pub fn regularization_c(&self) -> f64 {
        self.c
    }

    pub fn score(&self, class: usize, feature: &[f64]) -> f64 {
        math::dot(self.weights(class), feature) + self.biases[class]
    }
}

/// Trained SVM plus the per-class objective measured at each epoch's
/// averaged iterate.
#[derive(Debug, Clone)]
pub struct SvmTraining {
    pub svm: LinearOvaSvm,
    pub epoch_objective: Vec<Vec<f64>>,
}

/// Trains one binary scorer per class id `0..=max(labels)`.
pub fn train_svm(
    features: &[Vec<f64>],
    labels: &[usize],
    c: f64,
    epochs: usize,
    seed: u64,
) -> Result<SvmTraining> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "training labels",
            expected: features.len(),
            got: labels.len(),
        });
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid_input!("regularization C must be positive, got {c}"));
    }
    if epochs == 0 {
        return Err(invalid_input!("SVM training needs at least one epoch"));
    }
    let dim = features[0].len();
    if dim == 0 {
        return Err(invalid_input!("features must be nonempty vectors"));
    }
    for f in features {
        if f.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "feature vector",
                expected: dim,
                got: f.len(),
            });
        }
        if !math::all_finite(f) {
            return Err(Error::NonFinite("training features"));
        }
    }
    let n_classes = labels.iter().max().unwrap() + 1;
    let mut class_counts = vec![0usize; n_classes];
    for &l in labels {
        class_counts[l] += 1;
    }
    if n_classes < 2 || class_counts.contains(&0) {
        return Err(invalid_input!(
            "training set must contain at least 2 classes with samples in every class"
        ));
    }

    let n = features.len();
    let lambda = 1.0 / (c * n as f64);
    let mut weights = vec![0.0; n_classes * dim];
    let mut biases = vec![0.0; n_classes];
    let mut epoch_objective = Vec::with_capacity(n_classes);

    for class in 0..n_classes {
        let signs: Vec<f64> = labels
            .iter()
            .map(|&l| if l == class { 1.0 } else { -1.0 })
            .collect();
        let mut rng = stream_rng(seed, class as u64);
        let mut w = vec![0.0; dim];
        let mut b = 0.0;
        let mut w_sum = vec![0.0; dim];
        let mut b_sum = 0.0;
        let mut t = 0u64;
        let mut order: Vec<usize> = (0..n).collect();
        let mut objectives = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (lambda * t as f64);
                let x = &features[i];
                let y = signs[i];
                let margin = y * (math::dot(&w, x) + b);
                let keep = 1.0 - eta * lambda;
                for wj in w.iter_mut() {
                    *wj *= keep;
                }
                if margin < 1.0 {
                    let step = eta * y;
                    for (wj, xj) in w.iter_mut().zip(x) {
                        *wj += step * xj;
                    }
                    b += step;
                }
                for (sj, wj) in w_sum.iter_mut().zip(&w) {
                    *sj += wj;
                }
                b_sum += b;
            }
            let scale = 1.0 / t as f64;
            let avg_w: Vec<f64> = w_sum.iter().map(|s| s * scale).collect();
            let avg_b = b_sum * scale;
            objectives.push(binary_objective(features, &signs, &avg_w, avg_b, lambda));
        }
        let scale = 1.0 / t as f64;
        for (slot, s) in weights[class * dim..(class + 1) * dim]
            .iter_mut()
            .zip(&w_sum)
        {
            *slot = s * scale;
        }
        biases[class] = b_sum * scale;
        epoch_objective.push(objectives);
    }

    Ok(SvmTraining {
        svm: LinearOvaSvm::from_parts(dim, weights, biases, c)?,
        epoch_objective,
    })
}

fn binary_objective(features: &[Vec<f64>], signs: &[f64], w: &[f64], b: f64, lambda: f64) -> f64 {
    let hinge: f64 = features
        .iter()
        .zip(signs)
        .map(|(x, &y)| (1.0 - y * (math::dot(w, x) + b)).max(0.0))
        .sum();
    0.5 * lambda * math::norm_sq(w) + hinge / features.len() as f64
}

/// Class with the highest score; ties resolve to the lowest class id.
pub fn predict(svm: &LinearOvaSvm, feature: &[f64]) -> Result<usize> {
    if feature.len() != svm.dim() {
        return Err(Error::DimensionMismatch {
            what: "feature vector",
            expected: svm.dim(),
            got: feature.len(),
        });
    }
    let mut best = 0;
    let mut best_score = svm.score(0, feature);
    for class in 1..svm.n_classes() {
        let score = svm.score(class, feature);
        if score > best_score {
            best = class;
            best_score = score;
        }
    }
    Ok(best)
}

/// Per-class accuracies, their unweighted mean, and the confusion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Confusion matrix side: covers both the SVM's classes and every label
    /// seen in the evaluation set.
    pub classes: usize,
    /// `None` for classes with no evaluation samples.
    pub per_class: Vec<Option<f64>>,
    /// Mean of the per-class accuracies that are present (not sample-weighted).
    pub average: f64,
    confusion: Vec<u64>,
}

impl EvalReport {
    pub fn confusion(&self, actual: usize, predicted: usize) -> u64 {
        self.confusion[actual * self.classes + predicted]
    }

    pub fn confusion_matrix(&self) -> &[u64] {
        &self.confusion
    }
}

/// Scores `features` against their labels. Labels outside the SVM's class
/// range can never be predicted and count as errors for their class.
pub fn evaluate(svm: &LinearOvaSvm, features: &[Vec<f64>], labels: &[usize]) -> Result<EvalReport> {
    if labels.is_empty() || features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "evaluation labels",
            expected: features.len(),
            got: labels.len(),
        });
    }
    let classes = labels
        .iter()
        .max()
        .map_or(svm.n_classes(), |&m| svm.n_classes().max(m + 1));
    let mut confusion = vec![0u64; classes * classes];
    for (feature, &label) in features.iter().zip(labels) {
        let predicted = predict(svm, feature)?;
        confusion[label * classes + predicted] += 1;
    }
    let mut per_class = Vec::with_capacity(classes);
    let mut total = 0.0;
    let mut present = 0usize;
    for class in 0..classes {
        let row = &confusion[class * classes..(class + 1) * classes];
        let count: u64 = row.iter().sum();
        if count == 0 {
            per_class.push(None);
        } else {
            let accuracy = row[class] as f64 / count as f64;
            per_class.push(Some(accuracy));
            total += accuracy;
            present += 1;
        }
    }
    debug_assert!(present > 0);
    Ok(EvalReport {
        classes,
        per_class,
        average: total / present as f64,
        confusion,
    })
}
