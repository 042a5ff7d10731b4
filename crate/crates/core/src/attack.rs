//! Concealment metrics and the greedy gate-modification attack.
//!
//! The attack sees the detector only through [`Oracle::predict_proba`].

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Extractor, FeatureError, FeatureVector, DISTANCE_START};
use crate::model::DetectionModel;
use crate::netlist::{CircuitGraph, GateId, NetId};
use crate::rewrite::{
    applicable_patterns, apply_pattern, check_equivalence, Counterexample, EquivalenceOptions,
    PatternId, RewriteError, Verdict,
};
use crate::PROB_EPS;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("circuit has no Trojan gates")]
    NoTrojanGates,
    #[error("metric needs at least one Trojan net")]
    EmptyTrojanSet,
    #[error("alpha must be non-negative, got {0}")]
    NegativeAlpha(f64),
    #[error("invalid alpha `{0}`; use a non-negative number or `inf`")]
    BadAlpha(String),
    #[error("target net `{0}` is not a Trojan net")]
    NonTrojanTarget(String),
    #[error("attack budget must be at least 1")]
    InvalidBudget,
    #[error("attacked circuit is not equivalent to the original (output {})", .0.output)]
    NotEquivalent(Box<Counterexample>),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Gray-box access to a detector: a probability per feature vector and nothing else.
pub trait Oracle: Sync {
    fn predict_proba(&self, x: &FeatureVector) -> f64;
}

impl Oracle for DetectionModel {
    fn predict_proba(&self, x: &FeatureVector) -> f64 {
        self.predict(&x.values)
            .expect("feature vectors have the model's dimension")
    }
}

impl<O: Oracle + ?Sized> Oracle for &O {
    fn predict_proba(&self, x: &FeatureVector) -> f64 {
        (**self).predict_proba(x)
    }
}

/// Oracle answering from a fixed table keyed by the exact feature values.
#[derive(Clone, Debug, Default)]
pub struct LookupOracle {
    table: HashMap<Vec<u64>, f64>,
    pub default: f64,
}

impl LookupOracle {
    pub fn new(default: f64) -> Self {
        Self {
            table: HashMap::new(),
            default,
        }
    }

    fn key(x: &FeatureVector) -> Vec<u64> {
        x.values.iter().map(|v| v.to_bits()).collect()
    }

    pub fn insert(&mut self, x: &FeatureVector, p: f64) {
        self.table.insert(Self::key(x), p);
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Oracle for LookupOracle {
    fn predict_proba(&self, x: &FeatureVector) -> f64 {
        self.table.get(&Self::key(x)).copied().unwrap_or(self.default)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Alpha {
    Finite(f64),
    Infinity,
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Alpha::Finite(a) => write!(f, "{a}"),
            Alpha::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for Alpha {
    type Err = AttackError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity" | "∞") {
            return Ok(Alpha::Infinity);
        }
        let a: f64 = s.parse().map_err(|_| AttackError::BadAlpha(s.to_string()))?;
        if a.is_nan() {
            return Err(AttackError::BadAlpha(s.to_string()));
        }
        if a < 0.0 {
            return Err(AttackError::NegativeAlpha(a));
        }
        Ok(if a.is_infinite() {
            Alpha::Infinity
        } else {
            Alpha::Finite(a)
        })
    }
}

impl TryFrom<String> for Alpha {
    type Error = AttackError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Alpha> for String {
    fn from(a: Alpha) -> String {
        a.to_string()
    }
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Mean natural log of the clamped probabilities.
pub fn tcd(probs: &[f64]) -> Result<f64, AttackError> {
    if probs.is_empty() {
        return Err(AttackError::EmptyTrojanSet);
    }
    Ok(probs.iter().map(|&p| clamp(p).ln()).sum::<f64>() / probs.len() as f64)
}

/// `-mean |log p|^alpha` for finite alpha, `max log p` for infinite alpha.
pub fn alpha_tcd(probs: &[f64], alpha: Alpha) -> Result<f64, AttackError> {
    alpha_tcd_base(probs, alpha, std::f64::consts::E)
}

/// [`alpha_tcd`] with logarithms in an arbitrary base.
pub fn alpha_tcd_base(probs: &[f64], alpha: Alpha, base: f64) -> Result<f64, AttackError> {
    if probs.is_empty() {
        return Err(AttackError::EmptyTrojanSet);
    }
    let lnb = base.ln();
    let log = |p: f64| clamp(p).ln() / lnb;
    match alpha {
        Alpha::Finite(a) if a < 0.0 => Err(AttackError::NegativeAlpha(a)),
        Alpha::Finite(a) => {
            Ok(-probs.iter().map(|&p| log(p).abs().powf(a)).sum::<f64>() / probs.len() as f64)
        }
        Alpha::Infinity => Ok(probs.iter().map(|&p| log(p)).fold(f64::NEG_INFINITY, f64::max)),
    }
}

/// Log-probability of a single target net.
pub fn ttcd(p: f64) -> f64 {
    clamp(p).ln()
}

/// Metric evaluated by the attack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Alpha-TCD over every Trojan net of the current circuit.
    Circuit(Alpha),
    /// TTCD of one Trojan net.
    Net(NetId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub target: Target,
    /// Maximum number of gate modifications.
    pub budget: usize,
    /// Allows the non-equivalent flip-flop pattern.
    pub allow_relaxed: bool,
    /// Recompute every feature of every tracked net for each candidate.
    pub full_reextract: bool,
    /// Check the final circuit against the input by simulation.
    pub verify: bool,
    pub log_base: f64,
}

impl AttackConfig {
    pub fn circuit(alpha: Alpha, budget: usize) -> Self {
        Self {
            target: Target::Circuit(alpha),
            budget,
            allow_relaxed: false,
            full_reextract: false,
            verify: true,
            log_base: std::f64::consts::E,
        }
    }

    pub fn net(net: NetId, budget: usize) -> Self {
        Self {
            target: Target::Net(net),
            ..Self::circuit(Alpha::Infinity, budget)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackStep {
    pub iteration: usize,
    pub gate: GateId,
    pub instance: String,
    pub pattern: PatternId,
    pub metric: f64,
    pub candidates: usize,
    /// Fraction of Trojan nets still detected (circuit target only).
    pub tpr: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct AttackTrace {
    pub steps: Vec<AttackStep>,
    pub initial_metric: f64,
    pub final_metric: f64,
    pub initial_tpr: Option<f64>,
    pub final_circuit: CircuitGraph,
    /// Features of the tracked nets in the final circuit, by net id.
    pub final_features: Vec<FeatureVector>,
    pub queries_issued: usize,
}

/// JSON-friendly view of a trace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceReport {
    pub circuit: String,
    pub target: Target,
    pub budget: usize,
    pub initial_metric: f64,
    pub final_metric: f64,
    pub initial_tpr: Option<f64>,
    pub steps: Vec<AttackStep>,
    pub queries_issued: usize,
}

impl AttackTrace {
    pub fn report(&self, config: &AttackConfig) -> TraceReport {
        TraceReport {
            circuit: self.final_circuit.name().to_string(),
            target: config.target,
            budget: config.budget,
            initial_metric: self.initial_metric,
            final_metric: self.final_metric,
            initial_tpr: self.initial_tpr,
            steps: self.steps.clone(),
            queries_issued: self.queries_issued,
        }
    }

    /// Detected fraction after `k` accepted modifications (circuit target).
    pub fn tpr_after(&self, k: usize) -> Option<f64> {
        if k == 0 || self.steps.is_empty() {
            return self.initial_tpr;
        }
        self.steps[k.min(self.steps.len()) - 1].tpr
    }
}

/// Nets whose features are tracked, and their cached values.
struct State {
    circuit: CircuitGraph,
    features: HashMap<NetId, FeatureVector>,
}

struct Evaluation {
    metric: f64,
    tpr: Option<f64>,
    features: HashMap<NetId, FeatureVector>,
}

fn tracked_nets(c: &CircuitGraph, target: Target) -> Vec<NetId> {
    match target {
        Target::Circuit(_) => c.trojan_nets().iter().copied().collect(),
        Target::Net(n) => vec![n],
    }
}

/// Nets touched by gates within `hops` data-edge hops of `seeds`.
fn region(c: &CircuitGraph, seeds: &[GateId], hops: usize) -> HashSet<NetId> {
    let mut seen: HashSet<GateId> = seeds.iter().copied().collect();
    let mut frontier: Vec<GateId> = seeds.to_vec();
    for _ in 0..hops {
        let mut next = Vec::new();
        for &g in &frontier {
            let gate = c.gate(g);
            let mut touch = |h: GateId| {
                if seen.insert(h) {
                    next.push(h);
                }
            };
            for &i in &gate.inputs {
                if let Some(d) = c.driver_gate(i) {
                    touch(d);
                }
            }
            for o in gate.output_nets() {
                for h in c.data_loads(o) {
                    touch(h);
                }
            }
        }
        frontier = next;
    }
    let mut nets = HashSet::new();
    for g in seen {
        let gate = c.gate(g);
        nets.extend(gate.inputs.iter().copied());
        nets.extend(gate.output_nets());
    }
    nets
}

/// Features further than this many gate hops from a rewrite are reused.
pub const REEXTRACT_HOPS: usize = 6;

fn features_for(
    c: &CircuitGraph,
    nets: &[NetId],
    previous: Option<&HashMap<NetId, FeatureVector>>,
    modified: &[GateId],
    full: bool,
) -> Result<HashMap<NetId, FeatureVector>, AttackError> {
    let ex = Extractor::new(c);
    let near = match (full, previous) {
        (false, Some(_)) => Some(region(c, modified, REEXTRACT_HOPS)),
        _ => None,
    };
    let mut out = HashMap::with_capacity(nets.len());
    for &n in nets {
        let cached = previous.and_then(|p| p.get(&n));
        let fv = match (cached, &near) {
            (Some(old), Some(near)) if !near.contains(&n) => {
                let mut values = old.values.clone();
                values[DISTANCE_START..].copy_from_slice(&ex.distances(n));
                FeatureVector::new(values, n, c.name())
            }
            _ => ex.extract(n)?,
        };
        out.insert(n, fv);
    }
    Ok(out)
}

fn evaluate<O: Oracle + ?Sized>(
    features: HashMap<NetId, FeatureVector>,
    oracle: &O,
    config: &AttackConfig,
    queries: &AtomicUsize,
) -> Result<Evaluation, AttackError> {
    let mut ids: Vec<&NetId> = features.keys().collect();
    ids.sort();
    let probs: Vec<f64> = ids
        .iter()
        .map(|n| oracle.predict_proba(&features[n]))
        .collect();
    queries.fetch_add(probs.len(), Ordering::Relaxed);
    let (metric, tpr) = match config.target {
        Target::Circuit(alpha) => {
            let m = alpha_tcd_base(&probs, alpha, config.log_base)?;
            let hit = probs.iter().filter(|&&p| p >= 0.5).count();
            (m, Some(hit as f64 / probs.len() as f64))
        }
        Target::Net(_) => (ttcd(probs[0]) / config.log_base.ln(), None),
    };
    Ok(Evaluation {
        metric,
        tpr,
        features,
    })
}

/// Greedy attack: each iteration tries every applicable pattern on every
/// unmodified Trojan gate of the current circuit and keeps the candidate with
/// the lowest metric if it beats the best value so far (initially 0). Stops
/// after `budget` accepted modifications or when no candidate improves.
pub fn run_attack<O: Oracle + ?Sized>(
    circuit: &CircuitGraph,
    oracle: &O,
    config: &AttackConfig,
) -> Result<AttackTrace, AttackError> {
    if config.budget == 0 {
        return Err(AttackError::InvalidBudget);
    }
    if circuit.trojan_gates().is_empty() {
        return Err(AttackError::NoTrojanGates);
    }
    match config.target {
        Target::Net(n) => {
            let net = circuit
                .try_net(n)
                .map_err(|e| AttackError::Rewrite(e.into()))?;
            if !net.is_trojan {
                return Err(AttackError::NonTrojanTarget(net.name.clone()));
            }
        }
        Target::Circuit(Alpha::Finite(a)) if a < 0.0 => return Err(AttackError::NegativeAlpha(a)),
        Target::Circuit(_) => {
            if circuit.trojan_nets().is_empty() {
                return Err(AttackError::EmptyTrojanSet);
            }
        }
    }
    let queries = AtomicUsize::new(0);
    let nets = tracked_nets(circuit, config.target);
    let initial = evaluate(
        features_for(circuit, &nets, None, &[], true)?,
        oracle,
        config,
        &queries,
    )?;
    let initial_metric = initial.metric;
    let initial_tpr = initial.tpr;
    let mut state = State {
        circuit: circuit.clone(),
        features: initial.features,
    };
    let mut current_metric = initial_metric;
    let mut eligible: BTreeSet<GateId> = circuit.trojan_gates().clone();
    let mut best = 0.0_f64;
    let mut steps = Vec::new();

    for iteration in 0..config.budget {
        let candidates: Vec<(GateId, PatternId)> = eligible
            .iter()
            .flat_map(|&g| {
                applicable_patterns(&state.circuit, g)
                    .into_iter()
                    .filter(|p| config.allow_relaxed || p.preserves_sequential_semantics())
                    .map(move |p| (g, p))
            })
            .collect();
        if candidates.is_empty() {
            break;
        }
        let results: Vec<Result<(f64, GateId, PatternId, CircuitGraph, Evaluation), AttackError>> =
            candidates
                .par_iter()
                .map(|&(g, p)| {
                    let r = apply_pattern(&state.circuit, g, p)?;
                    let nets = tracked_nets(&r.circuit, config.target);
                    let feats = features_for(
                        &r.circuit,
                        &nets,
                        Some(&state.features),
                        &r.new_gate_ids,
                        config.full_reextract,
                    )?;
                    let ev = evaluate(feats, oracle, config, &queries)?;
                    Ok((ev.metric, g, p, r.circuit, ev))
                })
                .collect();
        let mut chosen: Option<(f64, GateId, PatternId, CircuitGraph, Evaluation)> = None;
        for r in results {
            let r = r?;
            let better = match &chosen {
                None => true,
                Some(c) => r.0 < c.0 || (r.0 == c.0 && (r.1, r.2) < (c.1, c.2)),
            };
            if better {
                chosen = Some(r);
            }
        }
        let (metric, g, p, next, ev) = chosen.expect("at least one candidate");
        if !(metric < best) {
            break;
        }
        log::debug!(
            "iteration {iteration}: {p} at {} -> {metric:.6}",
            state.circuit.gate(g).instance_name
        );
        steps.push(AttackStep {
            iteration,
            gate: g,
            instance: state.circuit.gate(g).instance_name.clone(),
            pattern: p,
            metric,
            candidates: candidates.len(),
            tpr: ev.tpr,
        });
        best = metric;
        current_metric = metric;
        eligible.remove(&g);
        state = State {
            circuit: next,
            features: ev.features,
        };
    }

    if config.verify && !config.allow_relaxed && !steps.is_empty() {
        let verdict = check_equivalence(circuit, &state.circuit, &EquivalenceOptions::default())?;
        if let Verdict::Counterexample(cex) = verdict {
            return Err(AttackError::NotEquivalent(Box::new(cex)));
        }
    }

    let mut final_features: Vec<FeatureVector> = state.features.into_values().collect();
    final_features.sort_by_key(|f| f.net);
    Ok(AttackTrace {
        steps,
        initial_metric,
        final_metric: current_metric,
        initial_tpr,
        final_circuit: state.circuit,
        final_features,
        queries_issued: queries.into_inner(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub circuit: String,
    pub alpha: Alpha,
    pub k: usize,
    pub tpr: f64,
    /// Accepted metric after `k` modifications (absent for `k = 0` or when
    /// the attack stopped earlier).
    pub metric: Option<f64>,
}

/// TPR after `k = 0..=k_max` modifications for each alpha.
pub fn attack_sweep<O: Oracle + ?Sized>(
    circuit: &CircuitGraph,
    oracle: &O,
    alphas: &[Alpha],
    k_max: usize,
    base: &AttackConfig,
) -> Result<Vec<SweepRow>, AttackError> {
    let mut rows = Vec::new();
    for &alpha in alphas {
        let config = AttackConfig {
            target: Target::Circuit(alpha),
            budget: k_max.max(1),
            ..base.clone()
        };
        let trace = run_attack(circuit, oracle, &config)?;
        for k in 0..=k_max {
            rows.push(SweepRow {
                circuit: circuit.name().to_string(),
                alpha,
                k,
                tpr: trace.tpr_after(k).expect("circuit target reports TPR"),
                metric: (k >= 1).then(|| trace.steps.get(k - 1).map(|s| s.metric)).flatten(),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_arithmetic() {
        assert!((tcd(&[0.5]).unwrap() + std::f64::consts::LN_2).abs() < 1e-12);
        let two = tcd(&[0.5, 0.25]).unwrap();
        assert!((two - (0.5f64.ln() + 0.25f64.ln()) / 2.0).abs() < 1e-12);
        assert!(tcd(&[1.0]).unwrap().abs() < 1e-6);
        let a2 = alpha_tcd(&[0.5], Alpha::Finite(2.0)).unwrap();
        assert!((a2 + std::f64::consts::LN_2.powi(2)).abs() < 1e-12);
        let inf = alpha_tcd(&[0.9, 0.1], Alpha::Infinity).unwrap();
        assert!((inf - 0.9f64.ln()).abs() < 1e-12);
        assert!(tcd(&[]).is_err());
        assert!(alpha_tcd(&[0.5], Alpha::Finite(-1.0)).is_err());
        assert_eq!(ttcd(0.3), alpha_tcd(&[0.3], Alpha::Infinity).unwrap());
    }

    #[test]
    fn alpha_parsing() {
        assert_eq!("inf".parse::<Alpha>().unwrap(), Alpha::Infinity);
        assert_eq!("2".parse::<Alpha>().unwrap(), Alpha::Finite(2.0));
        assert!("-1".parse::<Alpha>().is_err());
        assert!("x".parse::<Alpha>().is_err());
    }
}
