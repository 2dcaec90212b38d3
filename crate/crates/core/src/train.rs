//! Adam training loop and classification metrics.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::model::{backward_from_scores, cross_entropy, forward, Gradients, ModelParams};

/// A labeled graph borrowed from some dataset.
pub type Example<'a> = (&'a AttributedGraph, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub layer_sizes: Vec<usize>,
    pub seed: u64,
    pub class_weighting: bool,
    /// Graphs per optimizer step; gradients are averaged over the batch.
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            layer_sizes: vec![128, 256, 512],
            seed: 0,
            class_weighting: true,
            batch_size: 1,
        }
    }
}

impl TrainConfig {
    /// Defaults with narrow layers (16, 32, 64) for small corpora.
    pub fn desk_scale() -> Self {
        TrainConfig {
            layer_sizes: vec![16, 32, 64],
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.adam_eps > 0.0) {
            return Err(Error::Config("learning rate and epsilon must be positive".into()));
        }
        for beta in [self.adam_beta1, self.adam_beta2] {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::Config(format!("Adam beta {beta} outside (0, 1)")));
            }
        }
        if self.layer_sizes.is_empty() || self.layer_sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be nonempty and positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Adam with bias correction over a list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    first_moment: Vec<Array2<f64>>,
    second_moment: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig, params: &ModelParams) -> Self {
        let zeros: Vec<Array2<f64>> = params.tensors().iter().map(|t| Array2::zeros(t.raw_dim())).collect();
        Adam {
            learning_rate: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients) {
        self.step += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step);
        let bias2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);
        for (((param, grad), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            ndarray::Zip::from(param)
                .and(grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / bias1;
                    let v_hat = *v / bias2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Inverse-frequency class weights `n / (C · n_c)`; absent classes get weight 0.
pub fn class_weights(labels: impl IntoIterator<Item = usize>, n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    let mut total = 0usize;
    for label in labels {
        counts[label] += 1;
        total += 1;
    }
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                total as f64 / (n_classes as f64 * c as f64)
            }
        })
        .collect()
}

fn n_classes_of(data: &[Example<'_>]) -> usize {
    data.iter().map(|(_, y)| y + 1).max().unwrap_or(0).max(2)
}

fn mean_loss_and_accuracy(params: &ModelParams, data: &[Example<'_>], weights: &[f64]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for &(g, y) in data {
        let trace = forward(g, params)?;
        loss += cross_entropy(&trace, y, weights[y]).0;
        if trace.predicted_class() == y {
            correct += 1;
        }
    }
    let n = data.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

fn add_into(acc: &mut Gradients, g: &Gradients) {
    for (a, b) in acc.layer_weights.iter_mut().zip(&g.layer_weights) {
        *a += b;
    }
    acc.classifier += &g.classifier;
}

fn scale(acc: &mut Gradients, factor: f64) {
    for a in &mut acc.layer_weights {
        *a *= factor;
    }
    acc.classifier *= factor;
}

/// Trains from a Glorot initialization seeded by `cfg.seed`.
///
/// Graphs are visited one at a time (or in `cfg.batch_size` groups) in an
/// order reshuffled every epoch from the same seeded stream. With a
/// validation set, the parameters with the best validation accuracy (ties
/// broken by lower validation loss, then earlier epoch) are returned.
pub fn train(train: &[Example<'_>], validation: Option<&[Example<'_>]>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    let n_classes = n_classes_of(train);
    let mut present = vec![false; n_classes];
    for &(_, y) in train {
        present[y] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Training("training set contains a single class".into()));
    }
    let input_dim = train[0].0.feature_dim();
    if let Some(bad) = train.iter().find(|(g, _)| g.feature_dim() != input_dim) {
        return Err(Error::Config(format!(
            "inconsistent feature width {} (expected {input_dim})",
            bad.0.feature_dim()
        )));
    }

    let weights = if cfg.class_weighting {
        class_weights(train.iter().map(|&(_, y)| y), n_classes)
    } else {
        vec![1.0; n_classes]
    };
    let eval_weights = vec![1.0; n_classes];

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::glorot(input_dim, &cfg.layer_sizes, n_classes, &mut rng)?;
    let mut optimizer = Adam::new(cfg, &params);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, f64, usize, ModelParams)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Option<Gradients> = None;
            for &idx in batch {
                let (g, y) = train[idx];
                let trace = forward(g, &params)?;
                if trace.predicted_class() == y {
                    correct += 1;
                }
                let (loss, score_grad) = cross_entropy(&trace, y, weights[y]);
                epoch_loss += loss;
                let grads = backward_from_scores(&trace, g, &params, &score_grad)?;
                match acc.as_mut() {
                    Some(a) => add_into(a, &grads),
                    None => acc = Some(grads),
                }
            }
            let mut grads = acc.expect("nonempty batch");
            if batch.len() > 1 {
                scale(&mut grads, 1.0 / batch.len() as f64);
            }
            optimizer.step(&mut params, &grads);
        }
        let mut entry = EpochLog {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            validation_loss: None,
            validation_accuracy: None,
        };
        if let Some(val) = validation.filter(|v| !v.is_empty()) {
            let (vl, va) = mean_loss_and_accuracy(&params, val, &eval_weights)?;
            entry.validation_loss = Some(vl);
            entry.validation_accuracy = Some(va);
            let better = match &best {
                None => true,
                Some((ba, bl, _, _)) => va > *ba || (va == *ba && vl < *bl),
            };
            if better {
                best = Some((va, vl, epoch, params.clone()));
            }
        }
        log::debug!(
            "epoch {epoch}: loss {:.5} acc {:.4} val_acc {:?}",
            entry.train_loss,
            entry.train_accuracy,
            entry.validation_accuracy
        );
        log.push(entry);
    }

    let (params, best_epoch) = match best {
        Some((_, _, epoch, p)) => (p, epoch),
        None => (params, cfg.epochs),
    };
    Ok(TrainOutcome {
        params,
        log,
        best_epoch,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n: usize,
    pub accuracy: f64,
    /// Absent when the set holds a single class.
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
}

/// Accuracy plus ROC-AUC / PR-AUC of the class-1 probability.
pub fn evaluate(params: &ModelParams, data: &[Example<'_>]) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let mut scores = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    let mut correct = 0usize;
    for &(g, y) in data {
        let trace = forward(g, params)?;
        if trace.predicted_class() == y {
            correct += 1;
        }
        scores.push(trace.probabilities[1.min(trace.probabilities.len() - 1)]);
        labels.push(y == 1);
    }
    Ok(Evaluation {
        n: data.len(),
        accuracy: correct as f64 / data.len() as f64,
        roc_auc: roc_auc(&scores, &labels),
        pr_auc: pr_auc(&scores, &labels),
    })
}

/// Mann–Whitney estimate of ROC-AUC with average ranks for ties.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let pos_rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision, `Σ_k (R_k − R_{k−1}) P_k` over distinct score thresholds.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == labels.len() {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            if labels[k] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Some(ap)
}
