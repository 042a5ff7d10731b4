//! Gate-level circuit graph IR.
//!
//! A [`CircuitGraph`] is built once (by the Verilog frontend, the synthetic
//! generator or a rewrite) and is immutable afterwards. Nets and gates are
//! addressed by dense ids that index into their owning vectors.

mod builder;
mod dump;
mod emit;
mod labels;
mod library;
mod parse;
mod traverse;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builder::CircuitBuilder;
pub use dump::{dump_graph_json, GraphDump, GRAPH_SCHEMA_VERSION};
pub use emit::emit_verilog;
pub use labels::LabelSpec;
pub use library::{CellLibrary, CellMatch};
pub use parse::{parse_verilog, parse_verilog_with_library};
pub use traverse::{neighborhood, Direction, Neighborhood};

/// Instance and net names generated by rewrites start with this prefix.
pub const REWRITE_PREFIX: &str = "__rw_";
/// Instance names of gates created from `assign` statements start with this prefix.
pub const ASSIGN_PREFIX: &str = "__assign_";

#[derive(Debug, Error)]
pub enum NetlistError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: unknown cell type `{cell}`")]
    UnknownCell { cell: String, line: usize, col: usize },
    #[error("{line}:{col}: behavioral construct `{keyword}` is not supported in a gate-level netlist")]
    Behavioral { keyword: String, line: usize, col: usize },
    #[error("{line}:{col}: instance `{instance}` pin `{pin}` references undeclared net `{net}`")]
    DanglingPin {
        instance: String,
        pin: String,
        net: String,
        line: usize,
        col: usize,
    },
    #[error("net `{net}` has more than one driver")]
    MultiplyDriven { net: String },
    #[error("instance `{instance}` ({kind}): {msg}")]
    PinArity {
        instance: String,
        kind: String,
        msg: String,
    },
    #[error("duplicate instance name `{0}`")]
    DuplicateInstance(String),
    #[error("duplicate net name `{0}`")]
    DuplicateNet(String),
    #[error("unknown net id {0}")]
    UnknownNet(u32),
    #[error("unknown gate id {0}")]
    UnknownGate(u32),
    #[error("unsupported netlist: {0}")]
    Unsupported(String),
    #[error("invalid label source: {0}")]
    Label(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NetId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GateId(pub u32);

impl NetId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl GateId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for GateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CellFamily {
    And,
    Nand,
    Or,
    Nor,
    Not,
    Xor,
    Xnor,
    Buf,
    Mux2,
    Dff,
    Const0,
    Const1,
}

impl CellFamily {
    pub fn name(self) -> &'static str {
        match self {
            CellFamily::And => "AND",
            CellFamily::Nand => "NAND",
            CellFamily::Or => "OR",
            CellFamily::Nor => "NOR",
            CellFamily::Not => "NOT",
            CellFamily::Xor => "XOR",
            CellFamily::Xnor => "XNOR",
            CellFamily::Buf => "BUF",
            CellFamily::Mux2 => "MUX2",
            CellFamily::Dff => "DFF",
            CellFamily::Const0 => "CONST0",
            CellFamily::Const1 => "CONST1",
        }
    }

    /// Families whose arity is chosen per instance (2 to 5 inputs).
    pub fn is_multi_input(self) -> bool {
        matches!(
            self,
            CellFamily::And
                | CellFamily::Nand
                | CellFamily::Or
                | CellFamily::Nor
                | CellFamily::Xor
                | CellFamily::Xnor
        )
    }
}

/// Cell family plus the number of logic inputs.
///
/// For MUX2 the inputs are `[a, b, select]` and the output is `select ? b : a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKind {
    family: CellFamily,
    arity: u8,
}

pub const MIN_ARITY: u8 = 2;
pub const MAX_ARITY: u8 = 5;

impl CellKind {
    pub fn new(family: CellFamily, arity: u8) -> Result<Self, NetlistError> {
        let expected = match family {
            f if f.is_multi_input() => {
                if !(MIN_ARITY..=MAX_ARITY).contains(&arity) {
                    return Err(NetlistError::Unsupported(format!(
                        "{} gates support 2 to 5 inputs, got {arity}",
                        f.name()
                    )));
                }
                arity
            }
            CellFamily::Not | CellFamily::Buf | CellFamily::Dff => 1,
            CellFamily::Mux2 => 3,
            CellFamily::Const0 | CellFamily::Const1 => 0,
            _ => unreachable!(),
        };
        if arity != expected {
            return Err(NetlistError::Unsupported(format!(
                "{} takes {expected} inputs, got {arity}",
                family.name()
            )));
        }
        Ok(Self { family, arity })
    }

    /// Convenience constructor for fixed-arity families.
    pub fn of(family: CellFamily) -> Self {
        let arity = match family {
            CellFamily::Not | CellFamily::Buf | CellFamily::Dff => 1,
            CellFamily::Mux2 => 3,
            CellFamily::Const0 | CellFamily::Const1 => 0,
            _ => 2,
        };
        Self { family, arity }
    }

    pub fn family(self) -> CellFamily {
        self.family
    }

    pub fn arity(self) -> usize {
        self.arity as usize
    }

    pub fn is_dff(self) -> bool {
        self.family == CellFamily::Dff
    }

    pub fn is_mux(self) -> bool {
        self.family == CellFamily::Mux2
    }

    pub fn is_const(self) -> bool {
        matches!(self.family, CellFamily::Const0 | CellFamily::Const1)
    }

    pub fn is_combinational(self) -> bool {
        !self.is_dff()
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.family.is_multi_input() {
            write!(f, "{}{}", self.family.name(), self.arity)
        } else {
            f.write_str(self.family.name())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub id: GateId,
    pub kind: CellKind,
    pub instance_name: String,
    /// Logic inputs in pin order. DFF: `[d]`, MUX2: `[a, b, select]`.
    pub inputs: Vec<NetId>,
    /// Main output (Y / Q). `None` when left unconnected.
    pub output: Option<NetId>,
    /// Inverted flip-flop output (QN), DFF only.
    pub inv_output: Option<NetId>,
    /// Flip-flop clock; never traversed by the featurizer.
    pub clock: Option<NetId>,
    /// Flip-flop reset/set/scan pins; never traversed by the featurizer.
    pub controls: Vec<NetId>,
}

impl Gate {
    pub fn output_nets(&self) -> impl Iterator<Item = NetId> + '_ {
        self.output.into_iter().chain(self.inv_output)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Driver {
    Gate(GateId),
    PrimaryInput,
    Undriven,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Net {
    pub id: NetId,
    pub name: String,
    pub driver: Driver,
    pub is_trojan: bool,
}

/// How a gate is attached to a net it reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PinRole {
    Data(u8),
    Clock,
    Control(u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sink {
    pub gate: GateId,
    pub role: PinRole,
}

/// Immutable gate/net graph of a flat netlist with Trojan labels.
#[derive(Clone, Debug)]
pub struct CircuitGraph {
    name: String,
    gates: Vec<Gate>,
    nets: Vec<Net>,
    primary_inputs: Vec<NetId>,
    primary_outputs: Vec<NetId>,
    trojan_gates: BTreeSet<GateId>,
    trojan_nets: BTreeSet<NetId>,
    net_index: HashMap<String, NetId>,
    gate_index: HashMap<String, GateId>,
    fanout: Vec<Vec<Sink>>,
    is_po: Vec<bool>,
}

impl CircuitGraph {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn nets(&self) -> &[Net] {
        &self.nets
    }

    pub fn gate(&self, id: GateId) -> &Gate {
        &self.gates[id.index()]
    }

    pub fn net(&self, id: NetId) -> &Net {
        &self.nets[id.index()]
    }

    pub fn try_net(&self, id: NetId) -> Result<&Net, NetlistError> {
        self.nets.get(id.index()).ok_or(NetlistError::UnknownNet(id.0))
    }

    pub fn try_gate(&self, id: GateId) -> Result<&Gate, NetlistError> {
        self.gates.get(id.index()).ok_or(NetlistError::UnknownGate(id.0))
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    pub fn net_count(&self) -> usize {
        self.nets.len()
    }

    pub fn primary_inputs(&self) -> &[NetId] {
        &self.primary_inputs
    }

    pub fn primary_outputs(&self) -> &[NetId] {
        &self.primary_outputs
    }

    pub fn is_primary_input(&self, net: NetId) -> bool {
        self.nets[net.index()].driver == Driver::PrimaryInput
    }

    pub fn is_primary_output(&self, net: NetId) -> bool {
        self.is_po[net.index()]
    }

    pub fn trojan_gates(&self) -> &BTreeSet<GateId> {
        &self.trojan_gates
    }

    pub fn trojan_nets(&self) -> &BTreeSet<NetId> {
        &self.trojan_nets
    }

    pub fn is_trojan_gate(&self, gate: GateId) -> bool {
        self.trojan_gates.contains(&gate)
    }

    pub fn is_trojan_net(&self, net: NetId) -> bool {
        self.nets[net.index()].is_trojan
    }

    pub fn net_by_name(&self, name: &str) -> Option<NetId> {
        self.net_index.get(name).copied()
    }

    pub fn gate_by_name(&self, name: &str) -> Option<GateId> {
        self.gate_index.get(name).copied()
    }

    /// Gate driving `net`, if any.
    pub fn driver_gate(&self, net: NetId) -> Option<GateId> {
        match self.nets[net.index()].driver {
            Driver::Gate(g) => Some(g),
            _ => None,
        }
    }

    /// Every gate pin reading `net`, ordered by (gate id, pin).
    pub fn sinks(&self, net: NetId) -> &[Sink] {
        &self.fanout[net.index()]
    }

    /// Gates reading `net` through a logic input (clock and control pins excluded).
    pub fn data_loads(&self, net: NetId) -> impl Iterator<Item = GateId> + '_ {
        let mut last = None;
        self.fanout[net.index()].iter().filter_map(move |s| match s.role {
            PinRole::Data(_) if last != Some(s.gate) => {
                last = Some(s.gate);
                Some(s.gate)
            }
            _ => None,
        })
    }

    pub fn has_sequential(&self) -> bool {
        self.gates.iter().any(|g| g.kind.is_dff())
    }

    /// Re-derives Trojan labels from `spec`, keeping the structure.
    pub fn relabel(&self, spec: &LabelSpec) -> Result<CircuitGraph, NetlistError> {
        let (gates, nets) = spec.resolve(self, &[])?;
        let mut b = CircuitBuilder::from_circuit(self);
        b.clear_labels();
        for g in gates {
            b.mark_trojan_gate(g);
        }
        for n in nets {
            b.mark_trojan_net(n);
        }
        b.build()
    }

    /// Canonical description used to compare circuits up to id renumbering.
    ///
    /// Two circuits with equal signatures have the same named gates with the same
    /// kinds and pin connections, the same primary I/O and the same labels.
    pub fn signature(&self) -> CircuitSignature {
        let net_name = |n: &NetId| self.nets[n.index()].name.clone();
        let mut gates: Vec<_> = self
            .gates
            .iter()
            .map(|g| {
                (
                    g.instance_name.clone(),
                    g.kind.to_string(),
                    g.inputs.iter().map(net_name).collect::<Vec<_>>(),
                    g.output.as_ref().map(net_name),
                    g.inv_output.as_ref().map(net_name),
                    g.clock.as_ref().map(net_name),
                    g.controls.iter().map(net_name).collect::<Vec<_>>(),
                )
            })
            .collect();
        gates.sort();
        let mut nets: Vec<String> = self.nets.iter().map(|n| n.name.clone()).collect();
        nets.sort();
        let mut trojan_nets: Vec<String> = self.trojan_nets.iter().map(net_name).collect();
        trojan_nets.sort();
        let mut trojan_gates: Vec<String> = self
            .trojan_gates
            .iter()
            .map(|g| self.gates[g.index()].instance_name.clone())
            .collect();
        trojan_gates.sort();
        CircuitSignature {
            gates,
            nets,
            inputs: self.primary_inputs.iter().map(net_name).collect(),
            outputs: self.primary_outputs.iter().map(net_name).collect(),
            trojan_nets,
            trojan_gates,
        }
    }
}

type GateSignature = (
    String,
    String,
    Vec<String>,
    Option<String>,
    Option<String>,
    Option<String>,
    Vec<String>,
);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CircuitSignature {
    pub gates: Vec<GateSignature>,
    pub nets: Vec<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub trojan_nets: Vec<String>,
    pub trojan_gates: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_kind_arity_rules() {
        assert!(CellKind::new(CellFamily::And, 5).is_ok());
        assert!(CellKind::new(CellFamily::And, 6).is_err());
        assert!(CellKind::new(CellFamily::Or, 1).is_err());
        assert!(CellKind::new(CellFamily::Not, 2).is_err());
        assert_eq!(CellKind::of(CellFamily::Mux2).arity(), 3);
        assert_eq!(CellKind::of(CellFamily::Const1).arity(), 0);
        assert_eq!(CellKind::new(CellFamily::Xnor, 3).unwrap().to_string(), "XNOR3");
    }
}
