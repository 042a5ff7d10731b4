//! Adversarial training with per-net targeted attacks.
//!
//! After a few plain epochs, every mini-batch holding at least `min_trojan`
//! Trojan rows is extended with `ceil(ratio * min_trojan)` adversarial
//! versions of its first Trojan rows. Each adversarial vector comes from a
//! targeted attack on the row's source circuit against the current weights.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{run_attack, AttackConfig, AttackError, Oracle};
use crate::features::{extract_all, FeatureVector, Normalizer};
use crate::model::{check_both_classes, DetectionModel, ModelError, TrainConfig, Trainer};
use crate::netlist::CircuitGraph;

#[derive(Debug, Error)]
pub enum AdvTrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("invalid adversarial training configuration: {0}")]
    InvalidConfig(String),
    #[error("Trojan sample for net {0} has no source circuit")]
    MissingProvenance(String),
    #[error("sample is not labelled Trojan")]
    NotTrojan,
    #[error("gamma must have {expected} entries in [0, 1]")]
    BadGamma { expected: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvTrainConfig {
    /// Adversarial epochs after the warm-up.
    pub epochs: usize,
    pub batch_size: usize,
    /// Trojan rows a batch needs before adversarial rows are added.
    pub min_trojan: usize,
    /// Fraction of `min_trojan` rows turned into adversarial rows.
    pub ratio: f64,
    pub init_epochs: usize,
    /// Modifications per targeted attack.
    pub budget: usize,
    pub allow_relaxed: bool,
    /// Optimiser, weighting, oversampling and seed. Its `epochs` and
    /// `batch_size` fields are ignored.
    pub train: TrainConfig,
}

impl Default for AdvTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            min_trojan: 4,
            ratio: 0.1,
            init_epochs: 1,
            budget: 5,
            allow_relaxed: false,
            train: TrainConfig::default(),
        }
    }
}

impl AdvTrainConfig {
    pub fn validate(&self) -> Result<(), AdvTrainError> {
        let bad = |m: &str| Err(AdvTrainError::InvalidConfig(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.ratio) {
            return bad("ratio must lie in [0, 1]");
        }
        if self.budget == 0 {
            return bad("attack budget must be at least 1");
        }
        if self.min_trojan == 0 {
            return bad("minimum Trojan rows per batch must be at least 1");
        }
        self.plain_config().validate()?;
        Ok(())
    }

    /// Adversarial rows added to a batch that qualifies.
    pub fn adversarial_per_batch(&self) -> usize {
        (self.ratio * self.min_trojan as f64).ceil() as usize
    }

    /// Plain-training configuration with the same batch size, seed and total epoch count.
    pub fn plain_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.init_epochs + self.epochs,
            batch_size: self.batch_size,
            ..self.train.clone()
        }
    }
}

/// A training row that remembers where it came from.
#[derive(Clone, Debug)]
pub struct ProvenancedSample {
    pub features: FeatureVector,
    pub label: bool,
    pub circuit: Option<Arc<CircuitGraph>>,
}

/// Rows for every net of every circuit, each carrying its circuit.
pub fn samples_from_circuits(circuits: &[Arc<CircuitGraph>]) -> Vec<ProvenancedSample> {
    circuits
        .iter()
        .flat_map(|c| {
            let m = extract_all(c);
            m.rows
                .into_iter()
                .zip(m.labels)
                .map(|(features, label)| ProvenancedSample {
                    features,
                    label,
                    circuit: Some(Arc::clone(c)),
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Raw features of `sample`'s net after a targeted attack on its circuit.
/// Falls back to the unmodified vector when nothing can be rewritten.
pub fn generate_adversarial<O: Oracle + ?Sized>(
    sample: &ProvenancedSample,
    oracle: &O,
    budget: usize,
    allow_relaxed: bool,
) -> Result<FeatureVector, AdvTrainError> {
    if !sample.label {
        return Err(AdvTrainError::NotTrojan);
    }
    let circuit = sample
        .circuit
        .as_ref()
        .ok_or_else(|| AdvTrainError::MissingProvenance(sample.features.net.to_string()))?;
    let config = AttackConfig {
        allow_relaxed,
        ..AttackConfig::net(sample.features.net, budget)
    };
    match run_attack(circuit, oracle, &config) {
        Ok(trace) => {
            if trace.steps.is_empty() {
                log::debug!("no improving rewrite for {}", sample.features.net);
            }
            Ok(trace
                .final_features
                .into_iter()
                .next()
                .expect("one tracked net"))
        }
        Err(AttackError::NoTrojanGates) => {
            log::debug!("{} has no Trojan gates to rewrite", circuit.name());
            Ok(sample.features.clone())
        }
        Err(e) => Err(e.into()),
    }
}

/// Convex combination `x + gamma * (x_adv - x)` with per-coordinate gamma.
pub fn weaken(x: &[f64], x_adv: &[f64], gamma: &[f64]) -> Result<Vec<f64>, AdvTrainError> {
    if x.len() != x_adv.len()
        || gamma.len() != x.len()
        || gamma.iter().any(|g| !(0.0..=1.0).contains(g))
    {
        return Err(AdvTrainError::BadGamma { expected: x.len() });
    }
    Ok(x.iter()
        .zip(x_adv)
        .zip(gamma)
        .map(|((a, b), g)| a + g * (b - a))
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdvTrainStats {
    /// `(rows drawn, adversarial rows added)` per update after the warm-up.
    pub batches: Vec<(usize, usize)>,
    pub adversarial_examples: usize,
    /// Labels of every added row (always Trojan).
    pub added_labels: Vec<bool>,
    /// Every added row as `(dataset index of its source, raw features)`.
    #[serde(skip)]
    pub added: Vec<(usize, Vec<f64>)>,
    pub epoch_losses: Vec<f64>,
}

/// Robust training on `dataset`.
pub fn train_robust(
    dataset: &[ProvenancedSample],
    config: &AdvTrainConfig,
) -> Result<(DetectionModel, AdvTrainStats), AdvTrainError> {
    config.validate()?;
    let labels: Vec<bool> = dataset.iter().map(|s| s.label).collect();
    check_both_classes(&labels)?;
    if let Some(s) = dataset.iter().find(|s| s.label && s.circuit.is_none()) {
        return Err(AdvTrainError::MissingProvenance(s.features.net.to_string()));
    }
    let norm = Normalizer::fit(dataset.iter().map(|s| s.features.values.as_slice()))
        .map_err(ModelError::from)?;
    let rows: Vec<Vec<f64>> = dataset
        .iter()
        .map(|s| norm.apply(&s.features.values))
        .collect::<Result<_, _>>()
        .map_err(ModelError::from)?;
    let plain = config.plain_config();
    let model = DetectionModel::new(plain.seed, norm);
    let mut trainer = Trainer::new(model, plain)?;
    let mut stats = AdvTrainStats::default();
    stats.epoch_losses = trainer.run_epochs(&rows, &labels, config.init_epochs, |_, _, _| Vec::new())?;

    let per_batch = config.adversarial_per_batch();
    let mut failure: Option<AdvTrainError> = None;
    let losses = trainer.run_epochs(&rows, &labels, config.epochs, |model, batch, _| {
        let trojan: Vec<usize> = batch.iter().copied().filter(|&i| labels[i]).collect();
        if failure.is_some() || trojan.len() < config.min_trojan || per_batch == 0 {
            stats.batches.push((batch.len(), 0));
            return Vec::new();
        }
        let picked = &trojan[..per_batch.min(trojan.len())];
        let generated: Vec<Result<(Vec<f64>, Vec<f64>), AdvTrainError>> = picked
            .par_iter()
            .map(|&i| {
                let adv = generate_adversarial(&dataset[i], model, config.budget, config.allow_relaxed)?;
                let x = model.normalizer.apply(&adv.values).map_err(ModelError::from)?;
                Ok((adv.values, x))
            })
            .collect();
        let mut extra = Vec::with_capacity(generated.len());
        for (g, &i) in generated.into_iter().zip(picked) {
            match g {
                Ok((raw, x)) => {
                    stats.added.push((i, raw));
                    extra.push((x, true));
                }
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        }
        stats.batches.push((batch.len(), extra.len()));
        stats.adversarial_examples += extra.len();
        stats.added_labels.extend(extra.iter().map(|e| e.1));
        extra
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    stats.epoch_losses.extend(losses);
    Ok((trainer.model, stats))
}
