//! Structural net features.
//!
//! Column layout (1-based, as printed in CSV headers `f1..f51`):
//!
//! | columns | meaning |
//! |---------|---------|
//! | 1-5     | logic inputs of the gates exactly `n` levels away on the input side |
//! | 6-10 / 11-15 | flip-flops up to `n` levels away, input / output side |
//! | 16-20 / 21-25 | MUX2 cells up to `n` levels away, input / output side |
//! | 26-30 / 31-35 | distinct loops of at most `n` gates, input / output side |
//! | 36-40 / 41-45 | constant cells up to `n` levels away, input / output side |
//! | 46-51   | minimum levels to PI, PO, FF (in/out), MUX (in/out) |
//!
//! Levels follow [`neighborhood`]: the driving gate (input side) or the reading
//! gates (output side) are level 1. A loop on the input side is a simple
//! directed cycle through the driving gate, on the output side a cycle through
//! any reading gate; cycles are told apart by the set of nets they use. An
//! output-side constant is a constant cell feeding a gate of the output cone.
//! Unreachable distances take the sentinel value.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{neighborhood, CircuitGraph, Direction, GateId, NetId, NetlistError};

pub const FEATURE_COUNT: usize = 51;
/// Depth of the count features.
pub const MAX_LEVEL: usize = 5;
/// Index of the first distance column (0-based).
pub const DISTANCE_START: usize = 45;
pub const DEFAULT_SENTINEL: f64 = 100.0;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error("feature vector has {got} values, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("cannot fit a normalizer on an empty matrix")]
    Empty,
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub net: NetId,
    /// Name of the circuit the net belongs to.
    pub circuit: String,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, net: NetId, circuit: impl Into<String>) -> Self {
        Self {
            values,
            net,
            circuit: circuit.into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureVector>,
    pub labels: Vec<bool>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn trojan_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn extend(&mut self, other: FeatureMatrix) {
        self.rows.extend(other.rows);
        self.labels.extend(other.labels);
    }

    /// Writes `net,label,f1..f51` rows. Net names are looked up in `c`.
    pub fn write_csv<W: Write>(&self, c: &CircuitGraph, out: W) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["net".to_string(), "label".to_string()];
        header.extend((1..=FEATURE_COUNT).map(|k| format!("f{k}")));
        w.write_record(&header)?;
        for (row, &label) in self.rows.iter().zip(&self.labels) {
            let mut rec = vec![c.net(row.net).name.clone(), u8::from(label).to_string()];
            rec.extend(row.values.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Whole-circuit data shared by every net: distance fields.
pub struct Extractor<'c> {
    c: &'c CircuitGraph,
    sentinel: f64,
    /// PI, PO, FF-in, FF-out, MUX-in, MUX-out; `u32::MAX` when unreachable.
    dist: [Vec<u32>; 6],
}

const UNREACHED: u32 = u32::MAX;

impl<'c> Extractor<'c> {
    pub fn new(c: &'c CircuitGraph) -> Self {
        Self::with_sentinel(c, DEFAULT_SENTINEL)
    }

    pub fn with_sentinel(c: &'c CircuitGraph, sentinel: f64) -> Self {
        let n = c.net_count();
        let mut seeds_pi = Vec::new();
        let mut seeds_po = Vec::new();
        let mut seeds_ff_in = Vec::new();
        let mut seeds_ff_out = Vec::new();
        let mut seeds_mux_in = Vec::new();
        let mut seeds_mux_out = Vec::new();
        for net in c.nets() {
            if c.is_primary_input(net.id) {
                seeds_pi.push((net.id, 0));
            }
            if c.is_primary_output(net.id) {
                seeds_po.push((net.id, 0));
            }
            if let Some(g) = c.driver_gate(net.id) {
                let kind = c.gate(g).kind;
                if kind.is_dff() {
                    seeds_ff_in.push((net.id, 1));
                }
                if kind.is_mux() {
                    seeds_mux_in.push((net.id, 1));
                }
            }
            let mut ff = false;
            let mut mux = false;
            for g in c.data_loads(net.id) {
                ff |= c.gate(g).kind.is_dff();
                mux |= c.gate(g).kind.is_mux();
            }
            if ff {
                seeds_ff_out.push((net.id, 1));
            }
            if mux {
                seeds_mux_out.push((net.id, 1));
            }
        }
        let fwd = |seeds| bfs(c, n, seeds, true);
        let bwd = |seeds| bfs(c, n, seeds, false);
        Self {
            c,
            sentinel,
            dist: [
                fwd(seeds_pi),
                bwd(seeds_po),
                fwd(seeds_ff_in),
                bwd(seeds_ff_out),
                fwd(seeds_mux_in),
                bwd(seeds_mux_out),
            ],
        }
    }

    pub fn circuit(&self) -> &'c CircuitGraph {
        self.c
    }

    pub fn sentinel(&self) -> f64 {
        self.sentinel
    }

    /// Columns 46-51.
    pub fn distances(&self, net: NetId) -> [f64; 6] {
        let mut out = [0.0; 6];
        for (k, d) in self.dist.iter().enumerate() {
            let v = d[net.index()];
            out[k] = if v == UNREACHED {
                self.sentinel
            } else {
                (v as f64).min(self.sentinel)
            };
        }
        out
    }

    /// Columns 1-45.
    pub fn counts(&self, net: NetId) -> Result<[f64; DISTANCE_START], FeatureError> {
        let c = self.c;
        let mut f = [0.0; DISTANCE_START];
        let inn = neighborhood(c, net, Direction::Input, MAX_LEVEL)?;
        let out = neighborhood(c, net, Direction::Output, MAX_LEVEL)?;

        for (k, level) in inn.levels.iter().enumerate() {
            f[k] = level.iter().map(|&g| c.gate(g).kind.arity() as f64).sum();
        }

        let cumulative = |f: &mut [f64; DISTANCE_START], base: usize, per_level: &[usize]| {
            let mut acc = 0usize;
            for n in 0..MAX_LEVEL {
                acc += per_level.get(n).copied().unwrap_or(0);
                f[base + n] = acc as f64;
            }
        };
        let per_level = |nb: &crate::netlist::Neighborhood, pred: &dyn Fn(GateId) -> bool| {
            nb.levels
                .iter()
                .map(|l| l.iter().filter(|&&g| pred(g)).count())
                .collect::<Vec<_>>()
        };
        let is_ff = |g: GateId| c.gate(g).kind.is_dff();
        let is_mux = |g: GateId| c.gate(g).kind.is_mux();
        let is_const = |g: GateId| c.gate(g).kind.is_const();
        cumulative(&mut f, 5, &per_level(&inn, &is_ff));
        cumulative(&mut f, 10, &per_level(&out, &is_ff));
        cumulative(&mut f, 15, &per_level(&inn, &is_mux));
        cumulative(&mut f, 20, &per_level(&out, &is_mux));

        // loops
        let mut in_cycles = BTreeSet::new();
        if let Some(d) = c.driver_gate(net) {
            cycles_through(c, d, MAX_LEVEL, &mut in_cycles);
        }
        let mut out_cycles = BTreeSet::new();
        for g in c.data_loads(net) {
            cycles_through(c, g, MAX_LEVEL, &mut out_cycles);
        }
        for (base, set) in [(25, &in_cycles), (30, &out_cycles)] {
            for n in 0..MAX_LEVEL {
                f[base + n] = set.iter().filter(|(len, _)| *len <= n + 1).count() as f64;
            }
        }

        cumulative(&mut f, 35, &per_level(&inn, &is_const));
        // constants feeding the output cone, attributed to the shallowest reader
        let mut const_level: HashMap<GateId, usize> = HashMap::new();
        for (k, level) in out.levels.iter().enumerate() {
            for &g in level {
                for &i in &c.gate(g).inputs {
                    if let Some(d) = c.driver_gate(i) {
                        if c.gate(d).kind.is_const() {
                            const_level.entry(d).or_insert(k);
                        }
                    }
                }
            }
        }
        let mut per = vec![0usize; MAX_LEVEL];
        for &k in const_level.values() {
            per[k] += 1;
        }
        cumulative(&mut f, 40, &per);
        Ok(f)
    }

    pub fn extract(&self, net: NetId) -> Result<FeatureVector, FeatureError> {
        self.c.try_net(net)?;
        let mut values = Vec::with_capacity(FEATURE_COUNT);
        values.extend_from_slice(&self.counts(net)?);
        values.extend_from_slice(&self.distances(net));
        Ok(FeatureVector::new(values, net, self.c.name()))
    }
}

/// Multi-source unit-weight BFS over nets. Forward edges go from a gate's data
/// inputs to its outputs; backward edges the other way.
fn bfs(c: &CircuitGraph, n: usize, seeds: Vec<(NetId, u32)>, forward: bool) -> Vec<u32> {
    let mut dist = vec![UNREACHED; n];
    let mut queue = VecDeque::new();
    // seeds carry either 0 or 1, so sorting keeps the queue monotone
    let mut seeds = seeds;
    seeds.sort_by_key(|s| s.1);
    for (net, d) in seeds {
        if d < dist[net.index()] {
            dist[net.index()] = d;
            queue.push_back(net);
        }
    }
    while let Some(net) = queue.pop_front() {
        let d = dist[net.index()] + 1;
        let mut relax = |m: NetId, queue: &mut VecDeque<NetId>| {
            if d < dist[m.index()] {
                dist[m.index()] = d;
                queue.push_back(m);
            }
        };
        if forward {
            for g in c.data_loads(net) {
                for o in c.gate(g).output_nets() {
                    relax(o, &mut queue);
                }
            }
        } else if let Some(g) = c.driver_gate(net) {
            for &i in &c.gate(g).inputs {
                relax(i, &mut queue);
            }
        }
    }
    dist
}

/// Collects simple cycles of at most `max_len` gates through `start`, as
/// `(gate count, sorted net ids)`.
pub(crate) fn cycles_through(
    c: &CircuitGraph,
    start: GateId,
    max_len: usize,
    out: &mut BTreeSet<(usize, Vec<NetId>)>,
) {
    // backward distance (in gates) from every gate to `start`, for pruning
    let mut back: HashMap<GateId, usize> = HashMap::new();
    back.insert(start, 0);
    let mut frontier = vec![start];
    for depth in 1..max_len {
        let mut next = Vec::new();
        for g in frontier {
            for &i in &c.gate(g).inputs {
                if let Some(d) = c.driver_gate(i) {
                    if !back.contains_key(&d) {
                        back.insert(d, depth);
                        next.push(d);
                    }
                }
            }
        }
        frontier = next;
    }

    fn dfs(
        c: &CircuitGraph,
        start: GateId,
        g: GateId,
        max_len: usize,
        back: &HashMap<GateId, usize>,
        gates: &mut Vec<GateId>,
        nets: &mut Vec<NetId>,
        out: &mut BTreeSet<(usize, Vec<NetId>)>,
    ) {
        for o in c.gate(g).output_nets() {
            for h in c.data_loads(o) {
                if h == start {
                    nets.push(o);
                    let mut key = nets.clone();
                    key.sort();
                    out.insert((gates.len(), key));
                    nets.pop();
                    continue;
                }
                let Some(&b) = back.get(&h) else { continue };
                // `b` counts h itself plus the gates still needed to close the cycle
                if gates.len() + b > max_len || gates.contains(&h) {
                    continue;
                }
                gates.push(h);
                nets.push(o);
                dfs(c, start, h, max_len, back, gates, nets, out);
                nets.pop();
                gates.pop();
            }
        }
    }
    let mut gates = vec![start];
    let mut nets = Vec::new();
    dfs(c, start, start, max_len, &back, &mut gates, &mut nets, out);
}

pub fn extract_features(c: &CircuitGraph, net: NetId) -> Result<FeatureVector, FeatureError> {
    Extractor::new(c).extract(net)
}

/// Features of every net in id order, labelled from the circuit.
pub fn extract_all(c: &CircuitGraph) -> FeatureMatrix {
    let ex = Extractor::new(c);
    let rows: Vec<FeatureVector> = c
        .nets()
        .par_iter()
        .map(|n| ex.extract(n.id).expect("net ids come from the circuit"))
        .collect();
    let labels = c.nets().iter().map(|n| n.is_trojan).collect();
    FeatureMatrix { rows, labels }
}

/// Per-column min-max scaling into `[0, 1]`.
///
/// Distance columns ignore sentinel values when fitting and map them to 1.0.
/// Constant columns map to 0.0 and are flagged in `degenerate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub degenerate: Vec<bool>,
    pub sentinel: f64,
}

impl Normalizer {
    pub fn identity() -> Self {
        Self {
            min: vec![0.0; FEATURE_COUNT],
            max: vec![1.0; FEATURE_COUNT],
            degenerate: vec![false; FEATURE_COUNT],
            sentinel: DEFAULT_SENTINEL,
        }
    }

    pub fn fit<'a, I>(rows: I) -> Result<Self, FeatureError>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        Self::fit_with_sentinel(rows, DEFAULT_SENTINEL)
    }

    pub fn fit_with_sentinel<'a, I>(rows: I, sentinel: f64) -> Result<Self, FeatureError>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut min = vec![f64::INFINITY; FEATURE_COUNT];
        let mut max = vec![f64::NEG_INFINITY; FEATURE_COUNT];
        let mut any = false;
        for row in rows {
            check_dim(row)?;
            any = true;
            for (k, &v) in row.iter().enumerate() {
                if k >= DISTANCE_START && v >= sentinel {
                    continue;
                }
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        if !any {
            return Err(FeatureError::Empty);
        }
        let degenerate = min
            .iter()
            .zip(&max)
            .map(|(lo, hi)| !(hi > lo))
            .collect::<Vec<_>>();
        for k in 0..FEATURE_COUNT {
            if !min[k].is_finite() {
                min[k] = 0.0;
                max[k] = 0.0;
            }
        }
        Ok(Self {
            min,
            max,
            degenerate,
            sentinel,
        })
    }

    pub fn fit_matrix(m: &FeatureMatrix) -> Result<Self, FeatureError> {
        Self::fit(m.rows.iter().map(|r| r.values.as_slice()))
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, FeatureError> {
        check_dim(x)?;
        Ok(x
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                if k >= DISTANCE_START && v >= self.sentinel {
                    1.0
                } else if self.degenerate[k] {
                    0.0
                } else {
                    ((v - self.min[k]) / (self.max[k] - self.min[k])).clamp(0.0, 1.0)
                }
            })
            .collect())
    }
}

fn check_dim(x: &[f64]) -> Result<(), FeatureError> {
    if x.len() != FEATURE_COUNT {
        return Err(FeatureError::Dimension {
            expected: FEATURE_COUNT,
            got: x.len(),
        });
    }
    Ok(())
}
