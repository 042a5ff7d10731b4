//! Local logic-preserving gate rewrites (`m1`..`m16`), plus the simulator and
//! equivalence checker used to validate them.
//!
//! | id  | matches | replacement |
//! |-----|---------|-------------|
//! | m1  | AND     | NOT(NAND(x)) |
//! | m2  | AND     | NOR(NOT x1, .., NOT xn) |
//! | m3  | NAND    | NOT(AND(x)) |
//! | m4  | NAND    | OR(NOT x1, .., NOT xn) |
//! | m5  | OR      | NOT(NOR(x)) |
//! | m6  | OR      | NAND(NOT x1, .., NOT xn) |
//! | m7  | NOR     | NOT(OR(x)) |
//! | m8  | NOR     | AND(NOT x1, .., NOT xn) |
//! | m9  | XOR     | NOT(XNOR(x)) |
//! | m10 | XOR     | AND(OR(x1, r), NAND(x1, r)), r = x2 or XOR(x2..xn) |
//! | m11 | XNOR    | NOT(XOR(x)) |
//! | m12 | XNOR    | OR(AND(x1, r), NOR(x1, r)), r = x2 or XOR(x2..xn) |
//! | m13 | MUX2    | OR(AND(a, NOT s), AND(b, s)) |
//! | m14 | BUF     | NOT(NOT(x)); other combinational gates get two inverters on their output |
//! | m15 | DFF     | DFF(MUX2(q, d, 1)) |
//! | m16 | DFF     | DFF(DFF(d)), adds a cycle of latency and is not equivalent |
//!
//! The rewritten gate keeps its id and instance name and becomes the output
//! stage of the replacement, so the original output net keeps its driver id.

mod equiv;
mod simulate;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{
    CellFamily, CellKind, CircuitBuilder, CircuitGraph, GateId, NetId, NetlistError,
    REWRITE_PREFIX,
};

pub use equiv::{check_equivalence, Counterexample, EquivalenceOptions, Verdict};
pub use simulate::{simulate, simulate_sequence, Simulator};

#[derive(Debug, Error)]
pub enum RewriteError {
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error("pattern {pattern} does not apply to gate `{gate}` ({kind})")]
    Inapplicable {
        pattern: PatternId,
        gate: String,
        kind: String,
    },
    #[error("unknown pattern `{0}`")]
    UnknownPattern(String),
    #[error("combinational cycle through {}", .0.join(" -> "))]
    CombinationalCycle(Vec<String>),
    #[error("primary I/O differ: {0}")]
    IoMismatch(String),
    #[error("expected {expected} input values, got {got}")]
    InputLength { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PatternId(u8);

impl PatternId {
    pub const ALL: [PatternId; 16] = {
        let mut all = [PatternId(0); 16];
        let mut i = 0;
        while i < 16 {
            all[i] = PatternId(i as u8 + 1);
            i += 1;
        }
        all
    };

    pub fn new(n: u8) -> Option<Self> {
        (1..=16).contains(&n).then_some(Self(n))
    }

    pub fn number(self) -> u8 {
        self.0
    }

    /// `false` only for m16.
    pub fn preserves_sequential_semantics(self) -> bool {
        self.0 != 16
    }

    pub fn applies_to(self, kind: CellKind) -> bool {
        use CellFamily::*;
        let f = kind.family();
        match self.0 {
            1 | 2 => f == And,
            3 | 4 => f == Nand,
            5 | 6 => f == Or,
            7 | 8 => f == Nor,
            9 | 10 => f == Xor,
            11 | 12 => f == Xnor,
            13 => f == Mux2,
            14 => kind.is_combinational() && !kind.is_const(),
            15 | 16 => f == Dff,
            _ => false,
        }
    }
}

impl fmt::Display for PatternId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

impl FromStr for PatternId {
    type Err = RewriteError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .strip_prefix(['m', 'M'])
            .and_then(|n| n.parse().ok())
            .and_then(PatternId::new)
            .ok_or_else(|| RewriteError::UnknownPattern(s.to_string()))
    }
}

impl TryFrom<String> for PatternId {
    type Error = RewriteError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PatternId> for String {
    fn from(p: PatternId) -> String {
        p.to_string()
    }
}

/// Every catalog pattern whose predicate matches `gate`. Gates without a
/// connected output have nothing to rewrite.
pub fn applicable_patterns(c: &CircuitGraph, gate: GateId) -> Vec<PatternId> {
    let g = c.gate(gate);
    if g.output.is_none() {
        return Vec::new();
    }
    PatternId::ALL
        .into_iter()
        .filter(|p| p.applies_to(g.kind))
        .collect()
}

#[derive(Clone, Debug)]
pub struct RewriteResult {
    pub circuit: CircuitGraph,
    pub replaced_gate: GateId,
    pub pattern: PatternId,
    /// Added gates plus the rewritten gate itself.
    pub new_gate_ids: Vec<GateId>,
    pub new_net_ids: Vec<NetId>,
}

/// Serializable summary of a rewrite.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteDiff {
    pub pattern: PatternId,
    pub instance: String,
    pub kind_before: String,
    pub kind_after: String,
    pub added_gates: Vec<(String, String)>,
    pub added_nets: Vec<String>,
}

impl RewriteResult {
    pub fn diff(&self, original: &CircuitGraph) -> RewriteDiff {
        let c = &self.circuit;
        RewriteDiff {
            pattern: self.pattern,
            instance: c.gate(self.replaced_gate).instance_name.clone(),
            kind_before: original.gate(self.replaced_gate).kind.to_string(),
            kind_after: c.gate(self.replaced_gate).kind.to_string(),
            added_gates: self
                .new_gate_ids
                .iter()
                .filter(|&&g| g != self.replaced_gate)
                .map(|&g| (c.gate(g).instance_name.clone(), c.gate(g).kind.to_string()))
                .collect(),
            added_nets: self.new_net_ids.iter().map(|&n| c.net(n).name.clone()).collect(),
        }
    }
}

struct Patch<'a> {
    b: CircuitBuilder,
    slot: GateId,
    base: &'a str,
    gates: Vec<GateId>,
    nets: Vec<NetId>,
}

impl Patch<'_> {
    fn net(&mut self) -> NetId {
        let n = self.b.fresh_net(&format!("{REWRITE_PREFIX}{}", self.base));
        self.nets.push(n);
        n
    }

    fn gate(&mut self, family: CellFamily, inputs: &[NetId]) -> Result<NetId, NetlistError> {
        let out = self.net();
        let kind = CellKind::new(family, inputs.len() as u8)?;
        let name = self
            .b
            .fresh_instance_name(&format!("{REWRITE_PREFIX}{}", self.base));
        let id = self.b.add_gate(&name, kind, inputs, Some(out))?;
        self.gates.push(id);
        Ok(out)
    }

    fn inverters(&mut self, xs: &[NetId]) -> Result<Vec<NetId>, NetlistError> {
        xs.iter().map(|&x| self.gate(CellFamily::Not, &[x])).collect()
    }

    fn set_slot(&mut self, family: CellFamily, inputs: Vec<NetId>, output: NetId) -> Result<(), NetlistError> {
        let kind = CellKind::new(family, inputs.len() as u8)?;
        self.b.replace_gate(self.slot, kind, inputs, Some(output));
        Ok(())
    }
}

pub fn apply_pattern(
    c: &CircuitGraph,
    gate: GateId,
    pattern: PatternId,
) -> Result<RewriteResult, RewriteError> {
    use CellFamily::*;
    let g = c.try_gate(gate)?.clone();
    let Some(y) = g.output.filter(|_| pattern.applies_to(g.kind)) else {
        return Err(RewriteError::Inapplicable {
            pattern,
            gate: g.instance_name.clone(),
            kind: g.kind.to_string(),
        });
    };
    let mut p = Patch {
        b: CircuitBuilder::from_circuit(c),
        slot: gate,
        base: &g.instance_name,
        gates: Vec::new(),
        nets: Vec::new(),
    };
    let x = g.inputs.clone();
    let negate = |f: CellFamily| match f {
        And => Nand,
        Nand => And,
        Or => Nor,
        Nor => Or,
        Xor => Xnor,
        _ => Xor,
    };
    match pattern.0 {
        1 | 3 | 5 | 7 | 9 | 11 => {
            let t = p.gate(negate(g.kind.family()), &x)?;
            p.set_slot(Not, vec![t], y)?;
        }
        2 | 4 | 6 | 8 => {
            let dual = match g.kind.family() {
                And => Nor,
                Nand => Or,
                Or => Nand,
                _ => And,
            };
            let inv = p.inverters(&x)?;
            p.set_slot(dual, inv, y)?;
        }
        10 | 12 => {
            let r = if x.len() == 2 {
                x[1]
            } else {
                p.gate(Xor, &x[1..])?
            };
            let (first, second, join) = if pattern.0 == 10 {
                (Or, Nand, And)
            } else {
                (And, Nor, Or)
            };
            let u = p.gate(first, &[x[0], r])?;
            let v = p.gate(second, &[x[0], r])?;
            p.set_slot(join, vec![u, v], y)?;
        }
        13 => {
            let (a, b, s) = (x[0], x[1], x[2]);
            let ns = p.gate(Not, &[s])?;
            let u = p.gate(And, &[a, ns])?;
            let v = p.gate(And, &[b, s])?;
            p.set_slot(Or, vec![u, v], y)?;
        }
        14 if g.kind.family() == Buf => {
            let t = p.gate(Not, &x)?;
            p.set_slot(Not, vec![t], y)?;
        }
        14 => {
            let t = p.net();
            p.b.set_gate_output(gate, Some(t));
            let u = p.gate(Not, &[t])?;
            let name = p
                .b
                .fresh_instance_name(&format!("{REWRITE_PREFIX}{}", g.instance_name));
            let id = p.b.add_gate(&name, CellKind::of(Not), &[u], Some(y))?;
            p.gates.push(id);
        }
        15 => {
            let one = p.gate(Const1, &[])?;
            let m = p.gate(Mux2, &[y, x[0], one])?;
            p.b.set_gate_inputs(gate, vec![m]);
        }
        16 => {
            let t = p.net();
            let name = p
                .b
                .fresh_instance_name(&format!("{REWRITE_PREFIX}{}", g.instance_name));
            let id = p.b.add_dff(&name, x[0], g.clock, Some(t), None, &g.controls)?;
            p.gates.push(id);
            p.b.set_gate_inputs(gate, vec![t]);
        }
        _ => unreachable!("pattern ids are 1..=16"),
    }
    if c.is_trojan_gate(gate) {
        for &id in &p.gates {
            p.b.mark_trojan_gate(id);
        }
        for &n in &p.nets {
            p.b.mark_trojan_net(n);
        }
    }
    let mut new_gate_ids = vec![gate];
    new_gate_ids.extend(&p.gates);
    let new_net_ids = p.nets.clone();
    let circuit = p.b.build()?;
    Ok(RewriteResult {
        circuit,
        replaced_gate: gate,
        pattern,
        new_gate_ids,
        new_net_ids,
    })
}

/// How a rewrite may move a feature of an existing net.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trend {
    NonIncreasing,
    NonDecreasing,
    Any,
}

/// Allowed movement of each of the 51 features of nets that exist both before
/// and after applying `pattern`.
pub fn feature_trends(pattern: PatternId) -> [Trend; crate::features::FEATURE_COUNT] {
    use Trend::*;
    let mut t = [NonIncreasing; crate::features::FEATURE_COUNT];
    // logic-input counts depend on the replacement's arity
    t[..5].fill(Any);
    // distances
    t[45..].fill(NonDecreasing);
    let loops = 25..35;
    match pattern.0 {
        10 | 12 | 13 => t[loops].fill(Any),
        15 => {
            t[15..25].fill(Any); // MUX counts
            t[loops].fill(Any);
            t[35..45].fill(Any); // constants
            t[49] = Any;
            t[50] = Any;
        }
        16 => {
            t[5..15].fill(Any);
            t[loops].fill(Any);
        }
        _ => {}
    }
    t
}

/// Gates of `c` carrying the reserved rewrite prefix.
pub fn rewritten_gates(c: &CircuitGraph) -> BTreeSet<GateId> {
    c.gates()
        .iter()
        .filter(|g| g.instance_name.starts_with(REWRITE_PREFIX))
        .map(|g| g.id)
        .collect()
}
