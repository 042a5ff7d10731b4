use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::netlist::{CircuitGraph, NetId};

use super::{RewriteError, Simulator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceOptions {
    /// Outputs whose cone has at most this many primary inputs are checked exhaustively.
    pub exhaustive_limit: usize,
    /// Random vectors for wider combinational cones.
    pub random_vectors: usize,
    /// Random input sequences for sequential circuits.
    pub sequences: usize,
    pub cycles: usize,
    pub seed: u64,
}

impl Default for EquivalenceOptions {
    fn default() -> Self {
        Self {
            exhaustive_limit: 16,
            random_vectors: 10_000,
            sequences: 100,
            cycles: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    /// Input assignment per cycle, by primary-input name.
    pub inputs: Vec<Vec<(String, bool)>>,
    pub output: String,
    pub original: bool,
    pub modified: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Equivalent,
    Counterexample(Counterexample),
}

impl Verdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, Verdict::Equivalent)
    }
}

fn names(c: &CircuitGraph, ids: &[NetId]) -> Vec<String> {
    ids.iter().map(|&n| c.net(n).name.clone()).collect()
}

/// Primary inputs (indices into `c.primary_inputs()`) in the data cone of `net`.
fn support(c: &CircuitGraph, net: NetId, pi_pos: &HashMap<NetId, usize>) -> BTreeSet<usize> {
    let mut seen = vec![false; c.net_count()];
    let mut stack = vec![net];
    let mut out = BTreeSet::new();
    while let Some(n) = stack.pop() {
        if std::mem::replace(&mut seen[n.index()], true) {
            continue;
        }
        if let Some(&k) = pi_pos.get(&n) {
            out.insert(k);
        }
        if let Some(g) = c.driver_gate(n) {
            stack.extend(&c.gate(g).inputs);
        }
    }
    out
}

struct Pair<'a> {
    a: Simulator<'a>,
    b: Simulator<'a>,
    /// For each of `b`'s primary inputs, the index of the same-named input of `a`.
    b_from_a: Vec<usize>,
    /// For each of `a`'s primary outputs, the index of the same-named output of `b`.
    out_map: Vec<usize>,
}

impl Pair<'_> {
    /// Runs both circuits on a sequence of input words (in `a`'s input
    /// order); returns the first (cycle, output, lane) difference.
    fn run(&self, seq: &[Vec<u64>]) -> Option<(usize, usize, u32, bool, bool)> {
        let mut sa = vec![0u64; self.a.dffs().len()];
        let mut sb = vec![0u64; self.b.dffs().len()];
        let mut va = Vec::new();
        let mut vb = Vec::new();
        for (t, words) in seq.iter().enumerate() {
            let wb: Vec<u64> = self.b_from_a.iter().map(|&k| words[k]).collect();
            let oa = self.a.cycle(words, &mut sa, &mut va);
            let ob = self.b.cycle(&wb, &mut sb, &mut vb);
            for (k, &x) in oa.iter().enumerate() {
                let y = ob[self.out_map[k]];
                if x != y {
                    let lane = (x ^ y).trailing_zeros();
                    return Some((t, k, lane, x >> lane & 1 == 1, y >> lane & 1 == 1));
                }
            }
        }
        None
    }
}

/// Compares `original` and `modified` by simulation. Inputs and outputs are
/// matched by name. Flip-flops of both circuits start at zero.
pub fn check_equivalence(
    original: &CircuitGraph,
    modified: &CircuitGraph,
    opts: &EquivalenceOptions,
) -> Result<Verdict, RewriteError> {
    let (ai, bi) = (names(original, original.primary_inputs()), names(modified, modified.primary_inputs()));
    let (ao, bo) = (names(original, original.primary_outputs()), names(modified, modified.primary_outputs()));
    let sorted = |v: &[String]| {
        let mut v = v.to_vec();
        v.sort();
        v
    };
    if sorted(&ai) != sorted(&bi) || ai.len() != bi.len() {
        return Err(RewriteError::IoMismatch("primary inputs".into()));
    }
    if sorted(&ao) != sorted(&bo) || ao.len() != bo.len() {
        return Err(RewriteError::IoMismatch("primary outputs".into()));
    }
    let a_pos: HashMap<&str, usize> = ai.iter().enumerate().map(|(k, n)| (n.as_str(), k)).collect();
    let b_out: HashMap<&str, usize> = bo.iter().enumerate().map(|(k, n)| (n.as_str(), k)).collect();
    let pair = Pair {
        a: Simulator::new(original)?,
        b: Simulator::new(modified)?,
        b_from_a: bi.iter().map(|n| a_pos[n.as_str()]).collect(),
        out_map: ao.iter().map(|n| b_out[n.as_str()]).collect(),
    };
    let width = ai.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let found = |seq: &[Vec<u64>], hit: (usize, usize, u32, bool, bool)| {
        let (t, k, lane, x, y) = hit;
        Verdict::Counterexample(Counterexample {
            inputs: seq[..=t]
                .iter()
                .map(|w| {
                    ai.iter()
                        .zip(w)
                        .map(|(n, &v)| (n.clone(), v >> lane & 1 == 1))
                        .collect()
                })
                .collect(),
            output: ao[k].clone(),
            original: x,
            modified: y,
        })
    };

    if original.has_sequential() || modified.has_sequential() {
        let mut left = opts.sequences.max(1);
        while left > 0 {
            let lanes = left.min(64);
            left -= lanes;
            let mask = if lanes == 64 { !0 } else { (1u64 << lanes) - 1 };
            let seq: Vec<Vec<u64>> = (0..opts.cycles.max(1))
                .map(|_| (0..width).map(|_| rng.random::<u64>() & mask).collect())
                .collect();
            if let Some(hit) = pair.run(&seq) {
                return Ok(found(&seq, hit));
            }
        }
        return Ok(Verdict::Equivalent);
    }

    let pi_a: HashMap<NetId, usize> = original
        .primary_inputs()
        .iter()
        .enumerate()
        .map(|(k, &n)| (n, k))
        .collect();
    let pi_b: HashMap<NetId, usize> = modified
        .primary_inputs()
        .iter()
        .enumerate()
        .map(|(k, &n)| (n, pair.b_from_a[k]))
        .collect();
    let mut supports: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut wide = false;
    for (k, &po) in original.primary_outputs().iter().enumerate() {
        let mut s = support(original, po, &pi_a);
        s.extend(support(modified, modified.primary_outputs()[pair.out_map[k]], &pi_b));
        if s.len() <= opts.exhaustive_limit {
            supports.insert(s.into_iter().collect());
        } else {
            wide = true;
        }
    }
    for s in supports {
        let total: u64 = 1 << s.len();
        let mut base = 0u64;
        while base < total {
            let mut words = vec![0u64; width];
            for lane in 0..64u64 {
                let k = (base + lane) % total;
                for (j, &input) in s.iter().enumerate() {
                    words[input] |= (k >> j & 1) << lane;
                }
            }
            let seq = vec![words];
            if let Some(hit) = pair.run(&seq) {
                return Ok(found(&seq, hit));
            }
            base += 64;
        }
    }
    if wide {
        let mut left = opts.random_vectors.max(1);
        while left > 0 {
            left = left.saturating_sub(64);
            let seq = vec![(0..width).map(|_| rng.random::<u64>()).collect::<Vec<u64>>()];
            if let Some(hit) = pair.run(&seq) {
                return Ok(found(&seq, hit));
            }
        }
    }
    Ok(Verdict::Equivalent)
}
