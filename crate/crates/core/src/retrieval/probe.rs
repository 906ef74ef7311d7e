use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, macro_f1, mean_std};
use super::store::EmbeddingStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub folds: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Z-score features with training-fold statistics.
    pub standardize: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            epochs: 300,
            lr: 0.1,
            seed: 7,
            standardize: true,
        }
    }
}

/// Single linear layer with softmax cross-entropy. Weights are `[classes, dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxRegression {
    pub classes: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl SoftmaxRegression {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
        }
    }

    fn logits(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let w = &self.weights[c * self.dim..(c + 1) * self.dim];
            *o = self.bias[c] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut z = vec![0.0; self.classes];
        self.logits(x, &mut z);
        // first maximum
        let mut best = 0;
        for c in 1..self.classes {
            if z[c] > z[best] {
                best = c;
            }
        }
        best
    }

    /// Mean cross-entropy over the rows of `x` (row-major, `dim` columns) and its gradient.
    pub fn loss_and_grad(&self, x: &[f64], y: &[usize]) -> (f64, Gradient) {
        let n = y.len();
        let mut grad = Gradient {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.classes],
        };
        let mut loss = 0.0;
        let mut z = vec![0.0; self.classes];
        for (i, &label) in y.iter().enumerate() {
            let xi = &x[i * self.dim..(i + 1) * self.dim];
            self.logits(xi, &mut z);
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
            let log_sum = max + sum.ln();
            loss += log_sum - z[label];
            for c in 0..self.classes {
                let delta = (z[c] - log_sum).exp() - if c == label { 1.0 } else { 0.0 };
                grad.bias[c] += delta;
                let g = &mut grad.weights[c * self.dim..(c + 1) * self.dim];
                for (gj, xj) in g.iter_mut().zip(xi) {
                    *gj += delta * xj;
                }
            }
        }
        let inv = 1.0 / n as f64;
        grad.weights.iter_mut().for_each(|g| *g *= inv);
        grad.bias.iter_mut().for_each(|g| *g *= inv);
        (loss * inv, grad)
    }

    /// Full-batch gradient descent; returns the loss before each step.
    pub fn fit(&mut self, x: &[f64], y: &[usize], epochs: usize, lr: f64) -> Vec<f64> {
        let mut history = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let (loss, g) = self.loss_and_grad(x, y);
            history.push(loss);
            for (w, gw) in self.weights.iter_mut().zip(&g.weights) {
                *w -= lr * gw;
            }
            for (b, gb) in self.bias.iter_mut().zip(&g.bias) {
                *b -= lr * gb;
            }
        }
        history
    }
}

/// Fold index per sample; each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Vec<usize> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    assignment
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train: usize,
    pub test: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub config: ProbeConfig,
    pub classes: Vec<String>,
    pub folds: Vec<FoldResult>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub macro_f1_mean: f64,
    pub macro_f1_std: f64,
}

impl ProbeReport {
    /// Percentages as `mean±std` with two decimals.
    pub fn formatted_macro_f1(&self) -> String {
        format_pm(self.macro_f1_mean, self.macro_f1_std)
    }

    pub fn formatted_accuracy(&self) -> String {
        format_pm(self.accuracy_mean, self.accuracy_std)
    }
}

pub fn format_pm(mean: f64, std: f64) -> String {
    format!("{:.2}±{:.2}", mean * 100.0, std * 100.0)
}

fn standardize(train: &mut [f64], test: &mut [f64], dim: usize) {
    let n = train.len() / dim;
    for j in 0..dim {
        let mean = (0..n).map(|i| train[i * dim + j]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (train[i * dim + j] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for v in train.iter_mut().skip(j).step_by(dim).chain(test.iter_mut().skip(j).step_by(dim)) {
            *v = (*v - mean) / sd;
        }
    }
}

/// Stratified k-fold cross-validation of a softmax probe on frozen embeddings.
pub fn linear_probe_cv(store: &EmbeddingStore, cfg: &ProbeConfig) -> Result<ProbeReport> {
    if cfg.folds < 2 {
        return Err(Error::Invalid("at least 2 folds are required".into()));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for m in store.meta() {
        *counts.entry(m.label).or_default() += 1;
    }
    if counts.len() < 2 {
        let (label, count) = counts
            .iter()
            .next()
            .map(|(l, c)| (store.labels[*l].clone(), *c))
            .unwrap_or_else(|| ("<none>".into(), 0));
        return Err(Error::ClassTooSmall {
            label: format!("{label} (only class present)"),
            count,
            required: cfg.folds,
        });
    }
    if let Some((l, c)) = counts.iter().find(|(_, c)| **c < cfg.folds) {
        return Err(Error::ClassTooSmall {
            label: store.labels[*l].clone(),
            count: *c,
            required: cfg.folds,
        });
    }
    let class_ids: Vec<usize> = counts.keys().copied().collect();
    let y: Vec<usize> = store
        .meta()
        .iter()
        .map(|m| class_ids.binary_search(&m.label).expect("label counted"))
        .collect();
    let dim = store.dim;
    let assignment = stratified_folds(&y, cfg.folds, cfg.seed);

    let folds = (0..cfg.folds)
        .into_par_iter()
        .map(|fold| {
            let (mut xtr, mut ytr, mut xte, mut yte) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for i in 0..store.len() {
                let row = store.row(i).iter().map(|&v| v as f64);
                if assignment[i] == fold {
                    xte.extend(row);
                    yte.push(y[i]);
                } else {
                    xtr.extend(row);
                    ytr.push(y[i]);
                }
            }
            if cfg.standardize {
                standardize(&mut xtr, &mut xte, dim);
            }
            let mut model = SoftmaxRegression::zeros(class_ids.len(), dim);
            let history = model.fit(&xtr, &ytr, cfg.epochs, cfg.lr);
            let preds: Vec<usize> = xte.chunks_exact(dim).map(|r| model.predict(r)).collect();
            Ok(FoldResult {
                fold,
                train: ytr.len(),
                test: yte.len(),
                accuracy: accuracy(&preds, &yte)?,
                macro_f1: macro_f1(&preds, &yte)?,
                final_loss: history.last().copied().unwrap_or(f64::NAN),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (accuracy_mean, accuracy_std) = mean_std(&folds.iter().map(|f| f.accuracy).collect::<Vec<_>>());
    let (macro_f1_mean, macro_f1_std) = mean_std(&folds.iter().map(|f| f.macro_f1).collect::<Vec<_>>());
    Ok(ProbeReport {
        config: *cfg,
        classes: class_ids.iter().map(|&c| store.labels[c].clone()).collect(),
        folds,
        accuracy_mean,
        accuracy_std,
        macro_f1_mean,
        macro_f1_std,
    })
}
