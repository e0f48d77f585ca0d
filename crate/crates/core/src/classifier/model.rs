use std::path::Path;

use serde::{Deserialize, Serialize};

use super::calibration::Calibration;
use super::embedding::EmbeddingVector;
use super::ClassifierError;
use crate::types::PostId;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Harmful,
    NotHarmful,
}

impl Label {
    pub fn is_harmful(self) -> bool {
        self == Label::Harmful
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub post_id: PostId,
    pub embedding: EmbeddingVector,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// L2 penalty on the weights (not the bias).
    pub l2: f64,
    pub max_iterations: usize,
    /// Stop once the gradient norm falls to this value.
    pub tolerance: f64,
    /// Step size; `None` uses `1/L` for the loss's gradient Lipschitz bound.
    pub learning_rate: Option<f64>,
    pub calibration_folds: usize,
    /// Fixed decision threshold; `None` picks one on out-of-fold scores.
    pub threshold: Option<f64>,
    /// Recall floor used when picking the threshold.
    pub min_recall: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            max_iterations: 5_000,
            tolerance: 1e-6,
            learning_rate: None,
            calibration_folds: 3,
            threshold: None,
            min_recall: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HateModel {
    pub version: u32,
    pub provider: String,
    pub dim: usize,
    pub weights: EmbeddingVector,
    pub bias: f64,
    pub calibration: Calibration,
    pub threshold: f64,
    /// Iterations the final fit used and whether it met the tolerance.
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub probability: f64,
    pub is_harmful: bool,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl HateModel {
    pub fn raw_score(&self, embedding: &EmbeddingVector) -> Result<f64, ClassifierError> {
        if embedding.dim() != self.dim {
            return Err(ClassifierError::InvalidInput(format!(
                "embedding has {} dimensions, model expects {}",
                embedding.dim(),
                self.dim
            )));
        }
        Ok(sigmoid(self.weights.dot(embedding) + self.bias))
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(ClassifierError::ModelFormat(format!(
                "unsupported model version {}",
                self.version
            )));
        }
        if self.weights.dim() != self.dim {
            return Err(ClassifierError::ModelFormat("weight length differs from dim".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) || !self.bias.is_finite() {
            return Err(ClassifierError::ModelFormat(format!(
                "threshold {} must lie in (0, 1)",
                self.threshold
            )));
        }
        Calibration::from_knots(self.calibration.knots().to_vec())?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        let json = serde_json::to_string_pretty(self).expect("model serializes");
        std::fs::write(path, json).map_err(|e| ClassifierError::ModelFormat(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ClassifierError::ModelFormat(format!("{}: {e}", path.display())))?;
        let model: Self =
            serde_json::from_str(&text).map_err(|e| ClassifierError::ModelFormat(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

/// `calibration(sigmoid(w·x + b))`, harmful when at or above the threshold.
pub fn predict(model: &HateModel, embedding: &EmbeddingVector) -> Result<Prediction, ClassifierError> {
    let probability = model.calibration.apply(model.raw_score(embedding)?);
    Ok(Prediction {
        probability,
        is_harmful: probability >= model.threshold,
    })
}

struct Fit {
    weights: Vec<f64>,
    bias: f64,
    iterations: usize,
    converged: bool,
}

/// Batch gradient descent on mean log-loss plus `l2/2 * |w|^2`.
fn fit_logistic(xs: &[&[f64]], ys: &[f64], config: &TrainConfig) -> Fit {
    let dim = xs[0].len();
    let n = xs.len() as f64;
    let max_sq = xs
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    let step = config
        .learning_rate
        .unwrap_or_else(|| 1.0 / ((max_sq + 1.0) / 4.0 + config.l2));
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut grad_w = vec![0.0; dim];
    for iteration in 0..config.max_iterations {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            let err = sigmoid(z) - y;
            for (g, xi) in grad_w.iter_mut().zip(x.iter()) {
                *g += err * xi;
            }
            grad_b += err;
        }
        for (g, wi) in grad_w.iter_mut().zip(&w) {
            *g = *g / n + config.l2 * wi;
        }
        grad_b /= n;
        let norm = (grad_w.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b).sqrt();
        if norm <= config.tolerance {
            return Fit {
                weights: w,
                bias: b,
                iterations: iteration,
                converged: true,
            };
        }
        for (wi, g) in w.iter_mut().zip(&grad_w) {
            *wi -= step * g;
        }
        b -= step * grad_b;
    }
    Fit {
        weights: w,
        bias: b,
        iterations: config.max_iterations,
        converged: false,
    }
}

fn raw(fit: &Fit, x: &[f64]) -> f64 {
    sigmoid(x.iter().zip(&fit.weights).map(|(a, b)| a * b).sum::<f64>() + fit.bias)
}

/// Picks the threshold with the highest precision among those keeping
/// recall at or above `min_recall`; ties go to the lower threshold.
fn choose_threshold(scored: &[(f64, bool)], min_recall: f64) -> f64 {
    let positives = scored.iter().filter(|(_, y)| *y).count();
    let mut candidates: Vec<f64> = scored.iter().map(|(p, _)| *p).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best: Option<(f64, f64)> = None;
    for t in candidates {
        let tp = scored.iter().filter(|(p, y)| *y && *p >= t).count();
        let fp = scored.iter().filter(|(p, y)| !*y && *p >= t).count();
        if tp + fp == 0 || positives == 0 {
            continue;
        }
        let recall = tp as f64 / positives as f64;
        if recall < min_recall {
            continue;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        if best.is_none_or(|(_, bp)| precision > bp) {
            best = Some((t, precision));
        }
    }
    best.map_or(0.5, |(t, _)| t).clamp(1e-9, 1.0 - 1e-9)
}

/// Trains the weights on every example and fits the calibration on
/// out-of-fold scores from a stratified k-fold split.
pub fn train(
    examples: &[LabeledExample],
    provider: &str,
    config: &TrainConfig,
) -> Result<HateModel, ClassifierError> {
    let positives = examples.iter().filter(|e| e.label.is_harmful()).count();
    let negatives = examples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(ClassifierError::DegenerateTraining(format!(
            "need both classes, got {positives} harmful and {negatives} not harmful"
        )));
    }
    let dim = examples[0].embedding.dim();
    if let Some(bad) = examples.iter().find(|e| e.embedding.dim() != dim) {
        return Err(ClassifierError::InvalidInput(format!(
            "example {} has {} dimensions, expected {dim}",
            bad.post_id,
            bad.embedding.dim()
        )));
    }
    if config.learning_rate.is_some_and(|r| r.is_nan() || r <= 0.0) || config.l2 < 0.0 || config.max_iterations == 0 {
        return Err(ClassifierError::InvalidInput("invalid training configuration".into()));
    }

    let xs: Vec<&[f64]> = examples.iter().map(|e| e.embedding.values()).collect();
    let ys: Vec<f64> = examples
        .iter()
        .map(|e| if e.label.is_harmful() { 1.0 } else { 0.0 })
        .collect();
    let full = fit_logistic(&xs, &ys, config);

    let folds = config.calibration_folds.min(positives).min(negatives);
    let (calibration, threshold) = if folds >= 2 {
        // Stratified assignment: order each class by post id, deal round-robin.
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.sort_by(|&a, &b| {
            (examples[a].label.is_harmful(), &examples[a].post_id)
                .cmp(&(examples[b].label.is_harmful(), &examples[b].post_id))
        });
        let mut fold_of = vec![0usize; examples.len()];
        let (mut next_pos, mut next_neg) = (0usize, 0usize);
        for &i in &order {
            let counter = if examples[i].label.is_harmful() {
                &mut next_pos
            } else {
                &mut next_neg
            };
            fold_of[i] = *counter % folds;
            *counter += 1;
        }
        let mut oof = Vec::with_capacity(examples.len());
        for k in 0..folds {
            let train_idx: Vec<usize> = (0..examples.len()).filter(|&i| fold_of[i] != k).collect();
            let fx: Vec<&[f64]> = train_idx.iter().map(|&i| xs[i]).collect();
            let fy: Vec<f64> = train_idx.iter().map(|&i| ys[i]).collect();
            let fit = fit_logistic(&fx, &fy, config);
            for i in (0..examples.len()).filter(|&i| fold_of[i] == k) {
                oof.push((raw(&fit, xs[i]), ys[i] > 0.5));
            }
        }
        let calibration = Calibration::fit_isotonic(&oof)?;
        let calibrated: Vec<(f64, bool)> =
            oof.iter().map(|(s, y)| (calibration.apply(*s), *y)).collect();
        let threshold = config
            .threshold
            .unwrap_or_else(|| choose_threshold(&calibrated, config.min_recall));
        (calibration, threshold)
    } else {
        (Calibration::identity(), config.threshold.unwrap_or(0.5))
    };

    let model = HateModel {
        version: MODEL_FORMAT_VERSION,
        provider: provider.to_owned(),
        dim,
        weights: EmbeddingVector::new(full.weights)?,
        bias: full.bias,
        calibration,
        threshold,
        iterations: full.iterations,
        converged: full.converged,
    };
    model.validate().map_err(|e| ClassifierError::InvalidInput(e.to_string()))?;
    Ok(model)
}
