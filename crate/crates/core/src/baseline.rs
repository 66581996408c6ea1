//! Logistic regression on downsampled pixels, plus accuracy and ROC-AUC.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::raster::{downsample, GrayImage};
use crate::rng::ItemRng;

pub const DEFAULT_FEATURE_SPEC: [usize; 2] = [32, 32];
pub const BATCH_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// Downsampled `[width, height]` the weights were trained on.
    pub feature_spec: [usize; 2],
    /// One weight per feature, bias last.
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(feature_spec: [usize; 2]) -> Self {
        LinearModel {
            feature_spec,
            weights: vec![0.0; feature_spec[0] * feature_spec[1] + 1],
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_spec[0] * self.feature_spec[1]
    }

    pub fn bias(&self) -> f64 {
        *self.weights.last().expect("weights include a bias")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string(self).expect("model serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: LinearModel = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        if model.weights.len() != model.n_features() + 1 {
            return Err(Error::format(
                path,
                format!(
                    "{} weights for feature spec {:?}",
                    model.weights.len(),
                    model.feature_spec
                ),
            ));
        }
        if !model.weights.iter().all(|w| w.is_finite()) {
            return Err(Error::format(path, "non-finite weight"));
        }
        Ok(model)
    }
}

/// Flattened downsampled intensities.
pub fn features(img: &GrayImage, feature_spec: [usize; 2]) -> Result<Vec<f64>> {
    let small = downsample(img, feature_spec[0], feature_spec[1])?;
    Ok(small.data().iter().map(|&v| f64::from(v)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub positive: bool,
}

impl Sample {
    pub fn from_image(img: &GrayImage, label: Label, feature_spec: [usize; 2]) -> Result<Self> {
        Ok(Sample {
            features: features(img, feature_spec)?,
            positive: label.is_positive(),
        })
    }
}

/// Supplies the training samples of each epoch (augmentation may differ per epoch).
pub trait EpochSamples {
    fn samples(&mut self, epoch: u64) -> Result<Vec<Sample>>;
}

impl EpochSamples for Vec<Sample> {
    fn samples(&mut self, _epoch: u64) -> Result<Vec<Sample>> {
        Ok(self.clone())
    }
}

impl<F> EpochSamples for F
where
    F: FnMut(u64) -> Result<Vec<Sample>>,
{
    fn samples(&mut self, epoch: u64) -> Result<Vec<Sample>> {
        self(epoch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: u64,
    pub learning_rate: f64,
    pub seed: u64,
    pub batch_size: usize,
    pub feature_spec: [usize; 2],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            learning_rate: 0.5,
            seed: 0,
            batch_size: BATCH_SIZE,
            feature_spec: DEFAULT_FEATURE_SPEC,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn linear_response(weights: &[f64], x: &[f64]) -> f64 {
    let (w, bias) = weights.split_at(weights.len() - 1);
    w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias[0]
}

/// Logistic loss of one sample, computed as `softplus(z) − y·z`.
pub fn logistic_loss(weights: &[f64], x: &[f64], positive: bool) -> f64 {
    let z = linear_response(weights, x);
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    softplus - if positive { z } else { 0.0 }
}

/// Gradient of [`logistic_loss`] with respect to the weights (bias last).
pub fn logistic_gradient(weights: &[f64], x: &[f64], positive: bool) -> Vec<f64> {
    let residual = sigmoid(linear_response(weights, x)) - if positive { 1.0 } else { 0.0 };
    x.iter().map(|v| residual * v).chain([residual]).collect()
}

/// Mini-batch SGD on the mean logistic loss, starting from zero weights.
///
/// Each epoch visits the supplied samples in an order shuffled by
/// `(seed, epoch)`.
pub fn train<S: EpochSamples + ?Sized>(
    source: &mut S,
    config: &TrainConfig,
) -> Result<LinearModel> {
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::Training(format!(
            "learning rate must be > 0, got {}",
            config.learning_rate
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::Training("batch size must be >= 1".into()));
    }
    let mut model = LinearModel::zeros(config.feature_spec);
    let n_features = model.n_features();
    let mut grad = vec![0.0; n_features + 1];

    for epoch in 0..config.epochs {
        let samples = source.samples(epoch)?;
        if samples.len() < 2 {
            return Err(Error::Training(format!(
                "epoch {epoch} has {} sample(s)",
                samples.len()
            )));
        }
        let positives = samples.iter().filter(|s| s.positive).count();
        if positives == 0 || positives == samples.len() {
            return Err(Error::Training(format!(
                "epoch {epoch} contains a single class"
            )));
        }
        if let Some(bad) = samples.iter().find(|s| s.features.len() != n_features) {
            return Err(Error::Training(format!(
                "sample has {} features, model expects {n_features}",
                bad.features.len()
            )));
        }

        let mut order: Vec<usize> = (0..samples.len()).collect();
        ItemRng::derive(config.seed, "sgd", epoch).shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let s = &samples[i];
                let residual = sigmoid(linear_response(&model.weights, &s.features))
                    - if s.positive { 1.0 } else { 0.0 };
                for (g, v) in grad.iter_mut().zip(&s.features) {
                    *g += residual * v;
                }
                grad[n_features] += residual;
            }
            let step = config.learning_rate / batch.len() as f64;
            for (w, g) in model.weights.iter_mut().zip(&grad) {
                *w -= step * g;
            }
        }
        if !model.weights.iter().all(|w| w.is_finite()) {
            return Err(Error::Training(format!(
                "weights diverged in epoch {epoch}"
            )));
        }
    }
    Ok(model)
}

pub fn predict_features(model: &LinearModel, x: &[f64]) -> f64 {
    sigmoid(linear_response(&model.weights, x))
}

pub fn predict(model: &LinearModel, img: &GrayImage) -> Result<f64> {
    Ok(predict_features(model, &features(img, model.feature_spec)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Absent when only one class is present.
    pub auc: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Fraction of samples whose prediction (`score >= threshold` means positive)
/// matches the label.
pub fn accuracy(scores: &[f64], positives: &[bool], threshold: f64) -> f64 {
    let correct = scores
        .iter()
        .zip(positives)
        .filter(|(&s, &p)| (s >= threshold) == p)
        .count();
    correct as f64 / scores.len() as f64
}

/// Area under the ROC curve via the Mann–Whitney rank statistic, with
/// midranks for tied scores. `None` when either class is empty.
pub fn auc(scores: &[f64], positives: &[bool]) -> Option<f64> {
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j share their mean
        let midrank = (i + 1 + j) as f64 / 2.0;
        let tied_pos = order[i..j].iter().filter(|&&k| positives[k]).count();
        rank_sum_pos += midrank * tied_pos as f64;
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

pub fn metrics_from_scores(scores: &[f64], positives: &[bool]) -> Result<Metrics> {
    if scores.is_empty() {
        return Err(Error::Evaluation("no samples to evaluate".into()));
    }
    if scores.len() != positives.len() {
        return Err(Error::Evaluation(format!(
            "{} scores for {} labels",
            scores.len(),
            positives.len()
        )));
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    Ok(Metrics {
        accuracy: accuracy(scores, positives, 0.5),
        auc: auc(scores, positives),
        n_pos,
        n_neg: positives.len() - n_pos,
    })
}

/// Scores every labeled image (in parallel) and summarizes.
pub fn evaluate(model: &LinearModel, items: &[(GrayImage, Label)]) -> Result<Metrics> {
    let scores = items
        .par_iter()
        .map(|(img, _)| predict(model, img))
        .collect::<Result<Vec<f64>>>()?;
    let positives: Vec<bool> = items.iter().map(|(_, l)| l.is_positive()).collect();
    metrics_from_scores(&scores, &positives)
}

pub fn evaluate_samples(model: &LinearModel, samples: &[Sample]) -> Result<Metrics> {
    let scores: Vec<f64> = samples
        .par_iter()
        .map(|s| predict_features(model, &s.features))
        .collect();
    let positives: Vec<bool> = samples.iter().map(|s| s.positive).collect();
    metrics_from_scores(&scores, &positives)
}
