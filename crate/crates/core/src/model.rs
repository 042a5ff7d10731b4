//! Fully connected sigmoid network `51 -> 200 -> 100 -> 50 -> 1` trained with
//! Adam on (optionally class-weighted) binary cross-entropy.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureError, FeatureMatrix, Normalizer, FEATURE_COUNT};
use crate::PROB_EPS;

pub const LAYER_SIZES: [usize; 5] = [FEATURE_COUNT, 200, 100, 50, 1];
pub const MODEL_SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input has {got} features, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("training data must contain both Trojan and normal rows")]
    SingleClass,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("model file has schema version {found}, this build reads version {expected}")]
    VersionMismatch { found: u64, expected: u64 },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Dense layer, weights stored row-major as `outputs x inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs)
                .map(|_| rng.random_range(-limit..limit))
                .collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], z: &mut Vec<f64>) {
        z.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut s = self.bias[o];
            for (w, v) in row.iter().zip(x) {
                s += w * v;
            }
            z.push(s);
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    pub layers: Vec<Layer>,
    pub normalizer: Normalizer,
    pub seed: u64,
}

impl DetectionModel {
    /// Glorot-uniform initialised network with the standard shape.
    pub fn new(seed: u64, normalizer: Normalizer) -> Self {
        Self::with_sizes(&LAYER_SIZES, seed, normalizer)
    }

    pub fn with_sizes(sizes: &[usize], seed: u64, normalizer: Normalizer) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| Layer::glorot(w[0], w[1], &mut rng))
            .collect();
        Self {
            layers,
            normalizer,
            seed,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    fn check(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.input_dim() {
            return Err(ModelError::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Output logit for an already normalized input.
    pub fn logit(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.check(x)?;
        let mut a = x.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.forward(&a, &mut z);
            if k == last {
                return Ok(z[0]);
            }
            a.clear();
            a.extend(z.iter().map(|&v| sigmoid(v)));
        }
        unreachable!("model has at least one layer")
    }

    /// Probability for a normalized input, clamped to `[eps, 1 - eps]`.
    pub fn predict_normalized(&self, x: &[f64]) -> Result<f64, ModelError> {
        Ok(sigmoid(self.logit(x)?).clamp(PROB_EPS, 1.0 - PROB_EPS))
    }

    /// Probability for a raw feature vector; the stored normalizer is applied first.
    pub fn predict(&self, raw: &[f64]) -> Result<f64, ModelError> {
        let x = self.normalizer.apply(raw)?;
        self.predict_normalized(&x)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = ModelFileRef {
            schema_version: MODEL_SCHEMA_VERSION,
            model: self,
        };
        serde_json::to_string(&file).expect("plain data serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| ModelError::Corrupt("missing schema_version".into()))?;
        if found != MODEL_SCHEMA_VERSION {
            return Err(ModelError::VersionMismatch {
                found,
                expected: MODEL_SCHEMA_VERSION,
            });
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        let m = file.model;
        if m.layers.is_empty() {
            return Err(ModelError::Corrupt("no layers".into()));
        }
        for (k, l) in m.layers.iter().enumerate() {
            let chained = k == 0 || m.layers[k - 1].outputs == l.inputs;
            if !chained || l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(ModelError::Corrupt(format!("layer {k} has inconsistent shape")));
            }
        }
        if m.layers.last().map(|l| l.outputs) != Some(1) {
            return Err(ModelError::Corrupt("output layer must have one unit".into()));
        }
        Ok(m)
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Weighted loss `w * (softplus(z) - y z)` of one normalized sample.
    pub fn sample_loss(&self, x: &[f64], label: bool, weight: f64) -> Result<f64, ModelError> {
        let z = self.logit(x)?;
        Ok(weight * (softplus(z) - if label { z } else { 0.0 }))
    }

    /// Adds `scale * d loss / d param` of one sample into `grad` (flattened in
    /// the same order as the parameters). Returns the sample loss.
    fn accumulate_gradient(
        &self,
        x: &[f64],
        label: bool,
        weight: f64,
        scale: f64,
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> f64 {
        let n = self.layers.len();
        ws.acts.resize(n + 1, Vec::new());
        ws.acts[0].clear();
        ws.acts[0].extend_from_slice(x);
        let mut z = Vec::new();
        let mut logit = 0.0;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.forward(&ws.acts[k], &mut z);
            if k == n - 1 {
                logit = z[0];
                ws.acts[k + 1].clear();
                ws.acts[k + 1].push(sigmoid(logit));
            } else {
                let next = &mut ws.acts[k + 1];
                next.clear();
                next.extend(z.iter().map(|&v| sigmoid(v)));
            }
        }
        let y = if label { 1.0 } else { 0.0 };
        let loss = weight * (softplus(logit) - y * logit);

        // offsets of each layer's parameters in the flat gradient
        let mut offsets = Vec::with_capacity(n);
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.param_count();
        }

        ws.delta.clear();
        ws.delta.push(scale * weight * (sigmoid(logit) - y));
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            let a_prev = &ws.acts[k];
            let g = &mut grad[offsets[k]..offsets[k] + layer.param_count()];
            let (gw, gb) = g.split_at_mut(layer.weights.len());
            for (o, &d) in ws.delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (gv, &a) in row.iter_mut().zip(a_prev) {
                    *gv += d * a;
                }
            }
            if k == 0 {
                break;
            }
            ws.next_delta.clear();
            ws.next_delta.resize(layer.inputs, 0.0);
            for (o, &d) in ws.delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (nd, &w) in ws.next_delta.iter_mut().zip(row) {
                    *nd += d * w;
                }
            }
            for (nd, &a) in ws.next_delta.iter_mut().zip(a_prev) {
                *nd *= a * (1.0 - a);
            }
            std::mem::swap(&mut ws.delta, &mut ws.next_delta);
        }
        loss
    }

    /// Flat analytic gradient of one sample's weighted loss.
    pub fn gradient(&self, x: &[f64], label: bool, weight: f64) -> Result<Vec<f64>, ModelError> {
        self.check(x)?;
        let mut grad = vec![0.0; self.param_count()];
        self.accumulate_gradient(x, label, weight, 1.0, &mut grad, &mut Workspace::default());
        Ok(grad)
    }
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    schema_version: u64,
    model: &'a DetectionModel,
}

#[derive(Deserialize)]
struct ModelFile {
    #[allow(dead_code)]
    schema_version: u64,
    model: DetectionModel,
}

#[derive(Default)]
struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next_delta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Loss multiplier for Trojan rows.
    pub class_weight: Option<f64>,
    pub oversample: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 2,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            class_weight: None,
            oversample: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 {
            return Err(ModelError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch size must be at least 1".into()));
        }
        if let Some(w) = self.class_weight {
            if !(w > 0.0) {
                return Err(ModelError::InvalidConfig("class weight must be positive".into()));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(ModelError::InvalidConfig("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Row indices for one epoch before shuffling: every row once, plus Trojan
/// rows repeated cyclically until both classes have the same count.
pub fn oversampled_indices(labels: &[bool], oversample: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    if oversample {
        let trojan: Vec<usize> = idx.iter().copied().filter(|&i| labels[i]).collect();
        let normal = labels.len() - trojan.len();
        if !trojan.is_empty() && trojan.len() < normal {
            idx.extend(trojan.iter().cycle().take(normal - trojan.len()));
        }
    }
    idx
}

/// Adam optimiser plus the shuffling stream; one [`Trainer::step`] is one update.
pub struct Trainer {
    pub model: DetectionModel,
    pub config: TrainConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    rng: ChaCha8Rng,
    grad: Vec<f64>,
    ws: Workspace,
}

impl Trainer {
    pub fn new(model: DetectionModel, config: TrainConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let n = model.param_count();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Self {
            model,
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            rng,
            grad: vec![0.0; n],
            ws: Workspace::default(),
        })
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn weight(&self, label: bool) -> f64 {
        match (label, self.config.class_weight) {
            (true, Some(w)) => w,
            _ => 1.0,
        }
    }

    /// One Adam update on the mean weighted loss of `batch` (normalized rows).
    /// Returns the mean loss before the update.
    pub fn step(&mut self, batch: &[(&[f64], bool)]) -> Result<f64, ModelError> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        for (x, _) in batch {
            self.model.check(x)?;
        }
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &(x, label) in batch {
            let w = self.weight(label);
            loss += self.model.accumulate_gradient(x, label, w, scale, &mut self.grad, &mut self.ws);
        }
        self.t += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (c.beta1, c.beta2, c.learning_rate, c.adam_eps);
        for (((p, g), m), v) in self
            .model
            .params_mut()
            .zip(&self.grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= lr * mhat / (vhat.sqrt() + eps);
        }
        Ok(loss * scale)
    }

    /// Mean weighted loss over the given normalized rows, without updating.
    pub fn dataset_loss(&self, rows: &[Vec<f64>], labels: &[bool]) -> Result<f64, ModelError> {
        let mut total = 0.0;
        for (x, &l) in rows.iter().zip(labels) {
            total += self.model.sample_loss(x, l, self.weight(l))?;
        }
        Ok(total / rows.len().max(1) as f64)
    }

    /// Runs `epochs` passes over `rows`. Before each update, `augment` may
    /// append extra (normalized, label) samples to the batch; it receives the
    /// current model and the batch's row indices.
    pub fn run_epochs<F>(
        &mut self,
        rows: &[Vec<f64>],
        labels: &[bool],
        epochs: usize,
        mut augment: F,
    ) -> Result<Vec<f64>, ModelError>
    where
        F: FnMut(&DetectionModel, &[usize], &mut ChaCha8Rng) -> Vec<(Vec<f64>, bool)>,
    {
        let base = oversampled_indices(labels, self.config.oversample);
        let mut epoch_losses = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let mut order = base.clone();
            order.shuffle(&mut self.rng);
            let mut sum = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(self.config.batch_size) {
                let extra = augment(&self.model, chunk, &mut self.rng);
                let mut batch: Vec<(&[f64], bool)> =
                    chunk.iter().map(|&i| (rows[i].as_slice(), labels[i])).collect();
                batch.extend(extra.iter().map(|(x, l)| (x.as_slice(), *l)));
                sum += self.step(&batch)?;
                batches += 1;
            }
            epoch_losses.push(sum / batches.max(1) as f64);
        }
        Ok(epoch_losses)
    }
}

/// Normalizes the matrix with freshly fitted statistics.
pub fn normalize_matrix(m: &FeatureMatrix) -> Result<(Normalizer, Vec<Vec<f64>>), ModelError> {
    let norm = Normalizer::fit_matrix(m)?;
    let rows = m
        .rows
        .iter()
        .map(|r| norm.apply(&r.values))
        .collect::<Result<_, _>>()?;
    Ok((norm, rows))
}

pub fn check_both_classes(labels: &[bool]) -> Result<(), ModelError> {
    let t = labels.iter().filter(|&&l| l).count();
    if t == 0 || t == labels.len() {
        return Err(ModelError::SingleClass);
    }
    Ok(())
}

/// Plain supervised training.
pub fn train(matrix: &FeatureMatrix, config: &TrainConfig) -> Result<DetectionModel, ModelError> {
    check_both_classes(&matrix.labels)?;
    config.validate()?;
    let (norm, rows) = normalize_matrix(matrix)?;
    let model = DetectionModel::new(config.seed, norm);
    let mut trainer = Trainer::new(model, config.clone())?;
    let epochs = config.epochs;
    trainer.run_epochs(&rows, &matrix.labels, epochs, |_, _, _| Vec::new())?;
    Ok(trainer.model)
}

/// Max relative error between analytic and central-difference gradients over
/// `samples` randomly chosen parameters (all parameters when `samples` is 0).
pub fn gradient_check(
    model: &DetectionModel,
    x: &[f64],
    label: bool,
    samples: usize,
    seed: u64,
) -> Result<f64, ModelError> {
    const H: f64 = 1e-5;
    let analytic = model.gradient(x, label, 1.0)?;
    let n = analytic.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if samples == 0 || samples >= n {
        (0..n).collect()
    } else {
        (0..samples).map(|_| rng.random_range(0..n)).collect()
    };
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for k in picks {
        let orig = *model.params().nth(k).expect("index in range");
        let set = |m: &mut DetectionModel, v: f64| {
            *m.params_mut().nth(k).expect("index in range") = v;
        };
        set(&mut probe, orig + H);
        let up = probe.sample_loss(x, label, 1.0)?;
        set(&mut probe, orig - H);
        let down = probe.sample_loss(x, label, 1.0)?;
        set(&mut probe, orig);
        let numeric = (up - down) / (2.0 * H);
        let a = analytic[k];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_predicts_one_half() {
        let mut m = DetectionModel::new(1, Normalizer::identity());
        for l in &mut m.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        assert_eq!(m.predict_normalized(&[0.3; FEATURE_COUNT]).unwrap(), 0.5);
    }

    #[test]
    fn saturated_output_is_clamped() {
        let mut m = DetectionModel::new(1, Normalizer::identity());
        let last = m.layers.last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        last.bias[0] = 1e3;
        assert_eq!(m.predict_normalized(&[0.0; FEATURE_COUNT]).unwrap(), 1.0 - PROB_EPS);
        last_bias(&mut m, -1e3);
        assert_eq!(m.predict_normalized(&[0.0; FEATURE_COUNT]).unwrap(), PROB_EPS);
    }

    fn last_bias(m: &mut DetectionModel, b: f64) {
        m.layers.last_mut().unwrap().bias[0] = b;
    }

    #[test]
    fn oversampling_duplicates_trojan_rows() {
        let idx = oversampled_indices(&[true, false, false, false], true);
        assert_eq!(idx.iter().filter(|&&i| i == 0).count(), 3);
        assert_eq!(idx.len(), 6);
        assert_eq!(oversampled_indices(&[true, false], false).len(), 2);
    }

    #[test]
    fn dimension_mismatch() {
        let m = DetectionModel::new(1, Normalizer::identity());
        assert!(matches!(
            m.predict_normalized(&[0.0; 3]),
            Err(ModelError::Dimension { .. })
        ));
    }

    #[test]
    fn rejects_bad_config() {
        let c = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            class_weight: Some(0.0),
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
