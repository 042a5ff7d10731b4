//! Leave-one-out evaluation and report writing.
//!
//! Each benchmark is held out in turn. The models are trained on the rest,
//! then scored on the held-out circuit before and after an attack that
//! queries the very model being scored.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advtrain::{train_robust, AdvTrainError, ProvenancedSample};
use crate::attack::{run_attack, Alpha, AttackConfig, AttackError, Oracle};
use crate::config::{ConfigLayer, GlobalConfig, Profile};
use crate::features::{extract_all, FeatureMatrix};
use crate::model::{train, DetectionModel, ModelError};
use crate::netlist::{parse_verilog, CircuitGraph, LabelSpec, NetlistError};
use crate::synth::{corpus, SynthConfig};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("at least two benchmarks are needed, got {0}")]
    TooFewBenchmarks(usize),
    #[error("benchmark name `{0}` is used twice")]
    DuplicateBenchmark(String),
    #[error("training fold for `{0}` has no Trojan nets")]
    NoTrojanInFold(String),
    #[error("training fold for `{0}` contains its own nets")]
    FoldLeak(String),
    #[error("plan has no models to evaluate")]
    NoModels,
    #[error("{path}: {source}")]
    Load {
        path: PathBuf,
        source: NetlistError,
    },
    #[error("bad plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    AdvTrain(#[from] AdvTrainError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Confusion counts at threshold 0.5. Rates with an empty denominator are `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
}

pub fn compute_metrics(labels: &[bool], probs: &[f64]) -> Metrics {
    let mut m = Metrics::default();
    for (&l, &p) in labels.iter().zip(probs) {
        match (l, p >= 0.5) {
            (true, true) => m.tp += 1,
            (true, false) => m.fn_ += 1,
            (false, false) => m.tn += 1,
            (false, true) => m.fp += 1,
        }
    }
    let rate = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    m.tpr = rate(m.tp, m.fn_);
    m.tnr = rate(m.tn, m.fp);
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Normal,
    #[serde(rename = "r-htd")]
    Robust,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Normal => "normal",
            ModelKind::Robust => "r-htd",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkEntry {
    pub path: PathBuf,
    /// Sidecar with one Trojan net name per line.
    pub labels: Option<PathBuf>,
    /// Instance/net name pattern marking Trojan logic.
    pub label_regex: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_models() -> Vec<ModelKind> {
    vec![ModelKind::Normal, ModelKind::Robust]
}

fn default_alphas() -> Vec<Alpha> {
    vec![Alpha::Finite(1.0), Alpha::Finite(2.0), Alpha::Infinity]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    #[serde(default)]
    pub benchmarks: Vec<BenchmarkEntry>,
    pub synthetic: Option<SyntheticSpec>,
    pub profile: Option<Profile>,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<Alpha>,
    /// Attack budget; the profile's when absent.
    pub budget: Option<usize>,
    /// One full run per seed; the global seed when empty.
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    /// Field-level overrides on top of the profile.
    #[serde(default)]
    pub config: ConfigLayer,
}

impl ExperimentPlan {
    /// Reads a plan; `.json` files are JSON, anything else is TOML.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&text)?)
        } else {
            toml::from_str(&text).map_err(|e| EvalError::Plan(e.to_string()))
        }
    }

    /// Layer carrying the plan's profile, budget and overrides.
    pub fn layer(&self) -> ConfigLayer {
        let mut l = self.config.clone();
        if self.profile.is_some() {
            l.profile = self.profile;
        }
        if self.budget.is_some() {
            l.attack_budget = self.budget;
        }
        l
    }

    /// Parses every listed benchmark and appends the synthetic corpus.
    /// Relative paths resolve against `base`. Without explicit labels a
    /// `<stem>.labels` sidecar is used if present, else label comments.
    pub fn load_circuits(&self, base: &Path) -> Result<Vec<Arc<CircuitGraph>>, EvalError> {
        let mut out = Vec::new();
        for b in &self.benchmarks {
            let path = base.join(&b.path);
            let load = |source: NetlistError| EvalError::Load {
                path: path.clone(),
                source,
            };
            let spec = if let Some(l) = &b.labels {
                LabelSpec::from_sidecar_file(&base.join(l)).map_err(load)?
            } else if let Some(r) = &b.label_regex {
                LabelSpec::regex(r).map_err(load)?
            } else {
                let sidecar = path.with_extension("labels");
                if sidecar.is_file() {
                    LabelSpec::from_sidecar_file(&sidecar).map_err(load)?
                } else {
                    LabelSpec::Comments
                }
            };
            let text = std::fs::read_to_string(&path).map_err(|e| load(e.into()))?;
            out.push(Arc::new(parse_verilog(&text, &spec).map_err(load)?));
        }
        if let Some(s) = &self.synthetic {
            let generated = corpus(s.count, &SynthConfig::default(), s.seed)
                .map_err(|e| EvalError::Plan(format!("synthetic corpus: {e}")))?;
            out.extend(generated.into_iter().map(Arc::new));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub alpha: Alpha,
    /// TPR after `k = 0..=budget` accepted modifications; empty when the
    /// circuit has no Trojan gate to modify.
    pub tpr_by_k: Vec<f64>,
    pub accepted: usize,
}

impl AttackOutcome {
    pub fn final_tpr(&self) -> Option<f64> {
        self.tpr_by_k.last().copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub benchmark: String,
    pub model: ModelKind,
    pub seed: u64,
    pub trojan_nets: usize,
    pub normal_nets: usize,
    pub original: Metrics,
    pub attacked: Vec<AttackOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoocvReport {
    pub config: GlobalConfig,
    pub models: Vec<ModelKind>,
    pub alphas: Vec<Alpha>,
    pub seeds: Vec<u64>,
    pub results: Vec<FoldResult>,
}

/// Model-agnostic scoring of one held-out circuit.
pub fn score_circuit<O: Oracle>(
    circuit: &CircuitGraph,
    features: &FeatureMatrix,
    oracle: &O,
    alphas: &[Alpha],
    budget: usize,
) -> Result<(Metrics, Vec<AttackOutcome>), EvalError> {
    let probs: Vec<f64> = features.rows.iter().map(|r| oracle.predict_proba(r)).collect();
    let original = compute_metrics(&features.labels, &probs);
    let mut attacked = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let outcome = match run_attack(circuit, oracle, &AttackConfig::circuit(alpha, budget)) {
            Ok(trace) => AttackOutcome {
                alpha,
                tpr_by_k: (0..=budget)
                    .map(|k| trace.tpr_after(k).expect("circuit target reports TPR"))
                    .collect(),
                accepted: trace.steps.len(),
            },
            Err(AttackError::NoTrojanGates | AttackError::EmptyTrojanSet) => AttackOutcome {
                alpha,
                tpr_by_k: Vec::new(),
                accepted: 0,
            },
            Err(e) => return Err(e.into()),
        };
        attacked.push(outcome);
    }
    Ok((original, attacked))
}

/// Leave-one-out over `circuits`. Folds run in parallel; results come back
/// ordered by seed, benchmark, then model.
pub fn run_loocv(
    circuits: &[Arc<CircuitGraph>],
    models: &[ModelKind],
    alphas: &[Alpha],
    seeds: &[u64],
    config: &GlobalConfig,
) -> Result<LoocvReport, EvalError> {
    if circuits.len() < 2 {
        return Err(EvalError::TooFewBenchmarks(circuits.len()));
    }
    if models.is_empty() {
        return Err(EvalError::NoModels);
    }
    let mut names = BTreeSet::new();
    for c in circuits {
        if !names.insert(c.name()) {
            return Err(EvalError::DuplicateBenchmark(c.name().to_string()));
        }
    }
    let seeds: Vec<u64> = if seeds.is_empty() {
        vec![config.seed]
    } else {
        seeds.to_vec()
    };
    let matrices: Vec<FeatureMatrix> = circuits.par_iter().map(|c| extract_all(c)).collect();
    let jobs: Vec<(u64, usize, ModelKind)> = seeds
        .iter()
        .flat_map(|&s| (0..circuits.len()).flat_map(move |i| models.iter().map(move |&m| (s, i, m))))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(seed, held, kind)| {
            let fold_config = GlobalConfig {
                seed,
                ..config.clone()
            };
            run_fold(circuits, &matrices, held, kind, alphas, &fold_config)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LoocvReport {
        config: config.clone(),
        models: models.to_vec(),
        alphas: alphas.to_vec(),
        seeds,
        results,
    })
}

fn run_fold(
    circuits: &[Arc<CircuitGraph>],
    matrices: &[FeatureMatrix],
    held: usize,
    kind: ModelKind,
    alphas: &[Alpha],
    config: &GlobalConfig,
) -> Result<FoldResult, EvalError> {
    let name = circuits[held].name().to_string();
    let mut samples = Vec::new();
    for (i, (c, m)) in circuits.iter().zip(matrices).enumerate() {
        if i == held {
            continue;
        }
        for (f, &l) in m.rows.iter().zip(&m.labels) {
            samples.push(ProvenancedSample {
                features: f.clone(),
                label: l,
                circuit: Some(Arc::clone(c)),
            });
        }
    }
    if samples.iter().any(|s| s.features.circuit == name) {
        return Err(EvalError::FoldLeak(name));
    }
    let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
    if !labels.iter().any(|&l| l) {
        return Err(EvalError::NoTrojanInFold(name));
    }
    log::info!("fold {name}: training {kind} on {} rows", samples.len());
    let model: DetectionModel = match kind {
        ModelKind::Normal => {
            let matrix = FeatureMatrix {
                rows: samples.into_iter().map(|s| s.features).collect(),
                labels,
            };
            train(&matrix, &config.normal_config(&matrix.labels))?
        }
        ModelKind::Robust => train_robust(&samples, &config.robust_config(&labels))?.0,
    };
    let held_matrix = &matrices[held];
    let (original, attacked) = score_circuit(
        &circuits[held],
        held_matrix,
        &model,
        alphas,
        config.params.attack_budget,
    )?;
    let trojan_nets = held_matrix.trojan_count();
    Ok(FoldResult {
        benchmark: name,
        model: kind,
        seed: config.seed,
        trojan_nets,
        normal_nets: held_matrix.len() - trojan_nets,
        original,
        attacked,
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            n: v.len(),
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepStat {
    pub model: ModelKind,
    pub alpha: Alpha,
    pub k: usize,
    #[serde(flatten)]
    pub dist: Distribution,
}

impl LoocvReport {
    /// TPR distribution over benchmarks and seeds for every `(model, alpha, k)`.
    pub fn sweep(&self) -> Vec<SweepStat> {
        let budget = self.config.params.attack_budget;
        let mut out = Vec::new();
        for &model in &self.models {
            for (ai, &alpha) in self.alphas.iter().enumerate() {
                for k in 0..=budget {
                    let vals: Vec<f64> = self
                        .results
                        .iter()
                        .filter(|r| r.model == model)
                        .filter_map(|r| r.attacked.get(ai)?.tpr_by_k.get(k).copied())
                        .collect();
                    if let Some(dist) = Distribution::of(&vals) {
                        out.push(SweepStat {
                            model,
                            alpha,
                            k,
                            dist,
                        });
                    }
                }
            }
        }
        out
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{:.6}", x)).unwrap_or_default()
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-benchmark rows followed by one `Average` row per model and seed.
pub fn write_summary_csv<W: std::io::Write>(report: &LoocvReport, out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["benchmark", "model", "seed", "trojan_nets", "normal_nets", "tpr", "tnr"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(report.alphas.iter().map(|a| format!("tpr_attacked_alpha_{a}")));
    w.write_record(&header)?;
    for &seed in &report.seeds {
        for &model in &report.models {
            let rows: Vec<&FoldResult> = report
                .results
                .iter()
                .filter(|r| r.seed == seed && r.model == model)
                .collect();
            for r in &rows {
                let mut rec = vec![
                    r.benchmark.clone(),
                    model.to_string(),
                    seed.to_string(),
                    r.trojan_nets.to_string(),
                    r.normal_nets.to_string(),
                    fmt_opt(r.original.tpr),
                    fmt_opt(r.original.tnr),
                ];
                rec.extend(r.attacked.iter().map(|a| fmt_opt(a.final_tpr())));
                w.write_record(&rec)?;
            }
            let mut rec = vec![
                "Average".to_string(),
                model.to_string(),
                seed.to_string(),
                String::new(),
                String::new(),
                fmt_opt(mean(rows.iter().map(|r| r.original.tpr))),
                fmt_opt(mean(rows.iter().map(|r| r.original.tnr))),
            ];
            for ai in 0..report.alphas.len() {
                rec.push(fmt_opt(mean(
                    rows.iter().map(|r| r.attacked.get(ai).and_then(AttackOutcome::final_tpr)),
                )));
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: std::io::Write>(report: &LoocvReport, out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "alpha", "k", "n", "min", "q1", "median", "q3", "max", "mean"])?;
    for s in report.sweep() {
        let d = &s.dist;
        let f = |x: f64| format!("{x:.6}");
        w.write_record([
            s.model.to_string(),
            s.alpha.to_string(),
            s.k.to_string(),
            d.n.to_string(),
            f(d.min),
            f(d.q1),
            f(d.median),
            f(d.q3),
            f(d.max),
            f(d.mean),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `git describe` of the working directory, or `unknown`.
pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// Writes `summary.csv`, `sweep.csv` (only with a non-empty attack grid) and
/// `report.json` into `dir`. Returns the written paths.
pub fn emit_reports(
    report: &LoocvReport,
    plan_echo: &serde_json::Value,
    dir: &Path,
) -> Result<Vec<PathBuf>, EvalError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let summary = dir.join("summary.csv");
    write_summary_csv(report, std::fs::File::create(&summary)?)?;
    written.push(summary);
    if !report.alphas.is_empty() {
        let sweep = dir.join("sweep.csv");
        write_sweep_csv(report, std::fs::File::create(&sweep)?)?;
        written.push(sweep);
    }
    let json = serde_json::json!({
        "git_describe": git_describe(),
        "plan": plan_echo,
        "config": report.config,
        "results": report.results,
        "sweep": report.sweep(),
    });
    let path = dir.join("report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&json)?)?;
    written.push(path);
    Ok(written)
}
