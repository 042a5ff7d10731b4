//! Hyperparameter profiles and layered run configuration.
//!
//! Values are merged in three layers: profile defaults, then a config file,
//! then command-line flags. Each layer only sets the fields it names.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::advtrain::AdvTrainConfig;
use crate::model::TrainConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    #[default]
    TrustHub,
    TritTc,
    /// Trust-HUB numbers as a starting point, meant to be overridden.
    Custom,
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::TrustHub => "trust-hub",
            Profile::TritTc => "trit-tc",
            Profile::Custom => "custom",
        })
    }
}

impl FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "trust-hub" | "trusthub" => Ok(Profile::TrustHub),
            "trit-tc" | "trittc" => Ok(Profile::TritTc),
            "custom" => Ok(Profile::Custom),
            other => Err(format!("unknown profile `{other}` (expected trust-hub, trit-tc or custom)")),
        }
    }
}

/// Everything a profile pins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub normal: TrainConfig,
    pub robust: AdvTrainConfig,
    /// Modifications made by the evaluation-time attacker.
    pub attack_budget: usize,
    /// Multiply the loss of Trojan rows by `|E_t| / |E|` of the training set.
    pub ratio_weighting: bool,
}

impl Profile {
    pub fn params(self) -> ProfileParams {
        let normal = TrainConfig {
            epochs: 50,
            batch_size: 2,
            oversample: true,
            ..TrainConfig::default()
        };
        match self {
            Profile::TrustHub | Profile::Custom => ProfileParams {
                robust: AdvTrainConfig {
                    epochs: 10,
                    batch_size: 16,
                    min_trojan: 4,
                    ratio: 0.1,
                    init_epochs: 1,
                    budget: 5,
                    allow_relaxed: false,
                    train: normal.clone(),
                },
                normal,
                attack_budget: 5,
                ratio_weighting: false,
            },
            Profile::TritTc => ProfileParams {
                robust: AdvTrainConfig {
                    epochs: 15,
                    batch_size: 16,
                    min_trojan: 4,
                    ratio: 0.1,
                    init_epochs: 5,
                    budget: 4,
                    allow_relaxed: false,
                    train: normal.clone(),
                },
                normal,
                attack_budget: 4,
                ratio_weighting: true,
            },
        }
    }
}

/// Trojan-row loss weight `|E_t| / |E|`, or `None` when there are no rows.
pub fn ratio_weight(labels: &[bool]) -> Option<f64> {
    let t = labels.iter().filter(|&&l| l).count();
    (t > 0).then(|| t as f64 / labels.len() as f64)
}

/// Partial [`TrainConfig`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub class_weight: Option<f64>,
    pub oversample: Option<bool>,
}

impl TrainOverrides {
    pub fn apply(&self, c: &mut TrainConfig) {
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = self.class_weight {
            c.class_weight = Some(v);
        }
        if let Some(v) = self.oversample {
            c.oversample = v;
        }
    }
}

/// Partial [`AdvTrainConfig`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvOverrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub min_trojan: Option<usize>,
    pub ratio: Option<f64>,
    pub init_epochs: Option<usize>,
    pub budget: Option<usize>,
    pub allow_relaxed: Option<bool>,
    pub learning_rate: Option<f64>,
    pub class_weight: Option<f64>,
    pub oversample: Option<bool>,
}

impl AdvOverrides {
    pub fn apply(&self, c: &mut AdvTrainConfig) {
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.min_trojan {
            c.min_trojan = v;
        }
        if let Some(v) = self.ratio {
            c.ratio = v;
        }
        if let Some(v) = self.init_epochs {
            c.init_epochs = v;
        }
        if let Some(v) = self.budget {
            c.budget = v;
        }
        if let Some(v) = self.allow_relaxed {
            c.allow_relaxed = v;
        }
        TrainOverrides {
            epochs: None,
            batch_size: None,
            learning_rate: self.learning_rate,
            class_weight: self.class_weight,
            oversample: self.oversample,
        }
        .apply(&mut c.train);
    }
}

/// One configuration layer, as read from a TOML or JSON file or built from flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    pub log_level: Option<String>,
    pub threads: Option<usize>,
    pub benchmark_dir: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub attack_budget: Option<usize>,
    pub ratio_weighting: Option<bool>,
    #[serde(default)]
    pub normal: TrainOverrides,
    #[serde(default)]
    pub robust: AdvOverrides,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad config {path}: {message}")]
    Syntax { path: PathBuf, message: String },
}

impl ConfigLayer {
    /// Reads a layer; `.json` files are JSON, anything else is TOML.
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let syntax = |message: String| ConfigError::Syntax {
            path: path.to_path_buf(),
            message,
        };
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| syntax(e.to_string()))
        } else {
            toml::from_str(&text).map_err(|e| syntax(e.to_string()))
        }
    }
}

/// Merged configuration, recorded verbatim in run manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalConfig {
    pub profile: Profile,
    pub seed: u64,
    pub log_level: String,
    /// Worker threads; 0 lets the pool pick.
    pub threads: usize,
    pub benchmark_dir: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub params: ProfileParams,
}

impl GlobalConfig {
    pub fn from_profile(profile: Profile) -> Self {
        Self {
            profile,
            seed: 0,
            log_level: "info".into(),
            threads: 0,
            benchmark_dir: None,
            model_dir: None,
            out_dir: None,
            params: profile.params(),
        }
    }

    /// Profile defaults, then each layer in order. A profile named by a
    /// later layer resets the parameters before that layer's fields apply.
    pub fn merge(layers: &[&ConfigLayer]) -> Self {
        let profile = layers
            .iter()
            .rev()
            .find_map(|l| l.profile)
            .unwrap_or_default();
        let mut g = Self::from_profile(profile);
        for l in layers {
            g.apply(l);
        }
        g
    }

    fn apply(&mut self, l: &ConfigLayer) {
        if let Some(v) = l.seed {
            self.seed = v;
        }
        if let Some(v) = &l.log_level {
            self.log_level = v.clone();
        }
        if let Some(v) = l.threads {
            self.threads = v;
        }
        if let Some(v) = &l.benchmark_dir {
            self.benchmark_dir = Some(v.clone());
        }
        if let Some(v) = &l.model_dir {
            self.model_dir = Some(v.clone());
        }
        if let Some(v) = &l.out_dir {
            self.out_dir = Some(v.clone());
        }
        if let Some(v) = l.attack_budget {
            self.params.attack_budget = v;
        }
        if let Some(v) = l.ratio_weighting {
            self.params.ratio_weighting = v;
        }
        l.normal.apply(&mut self.params.normal);
        l.robust.apply(&mut self.params.robust);
    }

    /// Normal-model settings for a training set with these labels.
    pub fn normal_config(&self, labels: &[bool]) -> TrainConfig {
        resolve(&self.params, self.params.normal.clone(), labels, self.seed)
    }

    /// Robust-model settings for a training set with these labels.
    pub fn robust_config(&self, labels: &[bool]) -> AdvTrainConfig {
        let mut r = self.params.robust.clone();
        r.train = resolve(&self.params, r.train, labels, self.seed);
        r
    }
}

fn resolve(p: &ProfileParams, mut c: TrainConfig, labels: &[bool], seed: u64) -> TrainConfig {
    c.seed = seed;
    if p.ratio_weighting && c.class_weight.is_none() {
        c.class_weight = ratio_weight(labels);
    }
    c
}
