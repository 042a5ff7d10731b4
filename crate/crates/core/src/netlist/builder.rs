use std::collections::{BTreeSet, HashMap};

use super::{
    CellKind, CircuitGraph, Driver, Gate, GateId, Net, NetId, NetlistError, PinRole, Sink,
};

#[derive(Clone, Debug)]
struct NetDecl {
    name: String,
    is_input: bool,
    is_output: bool,
}

/// Mutable staging area for a [`CircuitGraph`].
///
/// Drivers, fanout lists and every structural invariant are checked in
/// [`CircuitBuilder::build`].
#[derive(Clone, Debug)]
pub struct CircuitBuilder {
    name: String,
    nets: Vec<NetDecl>,
    gates: Vec<Gate>,
    inputs: Vec<NetId>,
    outputs: Vec<NetId>,
    net_index: HashMap<String, NetId>,
    gate_index: HashMap<String, GateId>,
    trojan_gates: BTreeSet<GateId>,
    trojan_nets: BTreeSet<NetId>,
}

impl CircuitBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            nets: Vec::new(),
            gates: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            net_index: HashMap::new(),
            gate_index: HashMap::new(),
            trojan_gates: BTreeSet::new(),
            trojan_nets: BTreeSet::new(),
        }
    }

    /// Starts from an existing circuit, keeping every id.
    pub fn from_circuit(c: &CircuitGraph) -> Self {
        let nets = c
            .nets
            .iter()
            .map(|n| NetDecl {
                name: n.name.clone(),
                is_input: n.driver == Driver::PrimaryInput,
                is_output: c.is_po[n.id.index()],
            })
            .collect();
        Self {
            name: c.name.clone(),
            nets,
            gates: c.gates.clone(),
            inputs: c.primary_inputs.clone(),
            outputs: c.primary_outputs.clone(),
            net_index: c.net_index.clone(),
            gate_index: c.gate_index.clone(),
            trojan_gates: c.trojan_gates.clone(),
            trojan_nets: c.trojan_nets.clone(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn declare(&mut self, name: &str) -> Result<NetId, NetlistError> {
        if self.net_index.contains_key(name) {
            return Err(NetlistError::DuplicateNet(name.to_string()));
        }
        let id = NetId(self.nets.len() as u32);
        self.nets.push(NetDecl {
            name: name.to_string(),
            is_input: false,
            is_output: false,
        });
        self.net_index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn input(&mut self, name: &str) -> Result<NetId, NetlistError> {
        let id = self.declare(name)?;
        self.nets[id.index()].is_input = true;
        self.inputs.push(id);
        Ok(id)
    }

    pub fn output(&mut self, name: &str) -> Result<NetId, NetlistError> {
        let id = self.declare(name)?;
        self.mark_output(id);
        Ok(id)
    }

    pub fn wire(&mut self, name: &str) -> Result<NetId, NetlistError> {
        self.declare(name)
    }

    /// Returns the net called `name`, declaring a wire if needed.
    pub fn wire_or_existing(&mut self, name: &str) -> NetId {
        match self.net_index.get(name) {
            Some(&id) => id,
            None => self.declare(name).expect("name checked"),
        }
    }

    pub fn mark_input(&mut self, id: NetId) {
        if !self.nets[id.index()].is_input {
            self.nets[id.index()].is_input = true;
            self.inputs.push(id);
        }
    }

    pub fn mark_output(&mut self, id: NetId) {
        if !self.nets[id.index()].is_output {
            self.nets[id.index()].is_output = true;
            self.outputs.push(id);
        }
    }

    pub fn net_id(&self, name: &str) -> Option<NetId> {
        self.net_index.get(name).copied()
    }

    pub fn net_name(&self, id: NetId) -> &str {
        &self.nets[id.index()].name
    }

    pub fn net_count(&self) -> usize {
        self.nets.len()
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    pub fn gate(&self, id: GateId) -> &Gate {
        &self.gates[id.index()]
    }

    fn fresh_name(taken: impl Fn(&str) -> bool, base: &str) -> String {
        if !taken(base) {
            return base.to_string();
        }
        (1..)
            .map(|k| format!("{base}_{k}"))
            .find(|n| !taken(n))
            .expect("unbounded")
    }

    /// Declares a new wire whose name starts with `base` and is unused.
    pub fn fresh_net(&mut self, base: &str) -> NetId {
        let name = Self::fresh_name(|n| self.net_index.contains_key(n), base);
        self.declare(&name).expect("fresh")
    }

    pub fn fresh_instance_name(&self, base: &str) -> String {
        Self::fresh_name(|n| self.gate_index.contains_key(n), base)
    }

    fn push_gate(&mut self, mut gate: Gate) -> Result<GateId, NetlistError> {
        if self.gate_index.contains_key(&gate.instance_name) {
            return Err(NetlistError::DuplicateInstance(gate.instance_name));
        }
        let id = GateId(self.gates.len() as u32);
        gate.id = id;
        self.gate_index.insert(gate.instance_name.clone(), id);
        self.gates.push(gate);
        Ok(id)
    }

    /// Adds a combinational cell (anything but a DFF).
    pub fn add_gate(
        &mut self,
        instance: &str,
        kind: CellKind,
        inputs: &[NetId],
        output: Option<NetId>,
    ) -> Result<GateId, NetlistError> {
        self.push_gate(Gate {
            id: GateId(0),
            kind,
            instance_name: instance.to_string(),
            inputs: inputs.to_vec(),
            output,
            inv_output: None,
            clock: None,
            controls: Vec::new(),
        })
    }

    pub fn add_dff(
        &mut self,
        instance: &str,
        d: NetId,
        clock: Option<NetId>,
        q: Option<NetId>,
        qn: Option<NetId>,
        controls: &[NetId],
    ) -> Result<GateId, NetlistError> {
        self.push_gate(Gate {
            id: GateId(0),
            kind: CellKind::of(super::CellFamily::Dff),
            instance_name: instance.to_string(),
            inputs: vec![d],
            output: q,
            inv_output: qn,
            clock,
            controls: controls.to_vec(),
        })
    }

    /// Adds a fully specified gate; `gate.id` is ignored.
    pub fn add_raw_gate(&mut self, gate: Gate) -> Result<GateId, NetlistError> {
        self.push_gate(gate)
    }

    /// Overwrites the kind and pins of gate `id`, keeping its id and instance name.
    pub fn replace_gate(
        &mut self,
        id: GateId,
        kind: CellKind,
        inputs: Vec<NetId>,
        output: Option<NetId>,
    ) {
        let g = &mut self.gates[id.index()];
        g.kind = kind;
        g.inputs = inputs;
        g.output = output;
        if !kind.is_dff() {
            g.inv_output = None;
            g.clock = None;
            g.controls.clear();
        }
    }

    pub fn set_gate_inputs(&mut self, id: GateId, inputs: Vec<NetId>) {
        self.gates[id.index()].inputs = inputs;
    }

    pub fn set_gate_output(&mut self, id: GateId, output: Option<NetId>) {
        self.gates[id.index()].output = output;
    }

    pub fn mark_trojan_gate(&mut self, id: GateId) {
        self.trojan_gates.insert(id);
    }

    pub fn mark_trojan_net(&mut self, id: NetId) {
        self.trojan_nets.insert(id);
    }

    pub fn clear_labels(&mut self) {
        self.trojan_gates.clear();
        self.trojan_nets.clear();
    }

    pub fn build(self) -> Result<CircuitGraph, NetlistError> {
        let net_count = self.nets.len();
        let check_net = |n: NetId| -> Result<(), NetlistError> {
            if n.index() < net_count {
                Ok(())
            } else {
                Err(NetlistError::UnknownNet(n.0))
            }
        };

        let mut drivers: Vec<Driver> = self
            .nets
            .iter()
            .map(|d| {
                if d.is_input {
                    Driver::PrimaryInput
                } else {
                    Driver::Undriven
                }
            })
            .collect();
        let mut fanout: Vec<Vec<Sink>> = vec![Vec::new(); net_count];

        for g in &self.gates {
            let arity_err = |msg: String| NetlistError::PinArity {
                instance: g.instance_name.clone(),
                kind: g.kind.to_string(),
                msg,
            };
            if g.inputs.len() != g.kind.arity() {
                return Err(arity_err(format!(
                    "expected {} logic inputs, found {}",
                    g.kind.arity(),
                    g.inputs.len()
                )));
            }
            if !g.kind.is_dff()
                && (g.inv_output.is_some() || g.clock.is_some() || !g.controls.is_empty())
            {
                return Err(arity_err(
                    "only flip-flops have clock, control or inverted outputs".into(),
                ));
            }
            for (pin, &n) in g.inputs.iter().enumerate() {
                check_net(n)?;
                fanout[n.index()].push(Sink {
                    gate: g.id,
                    role: PinRole::Data(pin as u8),
                });
            }
            if let Some(c) = g.clock {
                check_net(c)?;
                fanout[c.index()].push(Sink {
                    gate: g.id,
                    role: PinRole::Clock,
                });
            }
            for (pin, &n) in g.controls.iter().enumerate() {
                check_net(n)?;
                fanout[n.index()].push(Sink {
                    gate: g.id,
                    role: PinRole::Control(pin as u8),
                });
            }
            for out in g.output_nets() {
                check_net(out)?;
                let slot = &mut drivers[out.index()];
                if *slot != Driver::Undriven {
                    return Err(NetlistError::MultiplyDriven {
                        net: self.nets[out.index()].name.clone(),
                    });
                }
                *slot = Driver::Gate(g.id);
            }
        }
        for sinks in &mut fanout {
            sinks.sort();
        }

        for &g in &self.trojan_gates {
            if g.index() >= self.gates.len() {
                return Err(NetlistError::UnknownGate(g.0));
            }
        }
        for &n in &self.trojan_nets {
            check_net(n)?;
        }

        let mut is_po = vec![false; net_count];
        for &o in &self.outputs {
            is_po[o.index()] = true;
        }
        let nets = self
            .nets
            .into_iter()
            .enumerate()
            .map(|(i, d)| Net {
                id: NetId(i as u32),
                name: d.name,
                driver: drivers[i],
                is_trojan: self.trojan_nets.contains(&NetId(i as u32)),
            })
            .collect();

        Ok(CircuitGraph {
            name: self.name,
            gates: self.gates,
            nets,
            primary_inputs: self.inputs,
            primary_outputs: self.outputs,
            trojan_gates: self.trojan_gates,
            trojan_nets: self.trojan_nets,
            net_index: self.net_index,
            gate_index: self.gate_index,
            fanout,
            is_po,
        })
    }
}
