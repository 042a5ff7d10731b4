use serde::Serialize;

use super::{CircuitGraph, Driver};

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize)]
pub struct GraphDump {
    pub graph_schema: u32,
    pub name: String,
    pub primary_inputs: Vec<String>,
    pub primary_outputs: Vec<String>,
    pub nets: Vec<NetDump>,
    pub gates: Vec<GateDump>,
}

#[derive(Clone, Debug, Serialize)]
pub struct NetDump {
    pub id: u32,
    pub name: String,
    /// Instance name of the driving gate, `"<input>"` or `"<undriven>"`.
    pub driver: String,
    pub is_trojan: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GateDump {
    pub id: u32,
    pub instance: String,
    pub kind: String,
    pub inputs: Vec<String>,
    pub output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inv_output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clock: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub controls: Vec<String>,
    pub is_trojan: bool,
}

impl GraphDump {
    pub fn new(c: &CircuitGraph) -> Self {
        let name = |n: &super::NetId| c.net(*n).name.clone();
        Self {
            graph_schema: GRAPH_SCHEMA_VERSION,
            name: c.name().to_string(),
            primary_inputs: c.primary_inputs().iter().map(name).collect(),
            primary_outputs: c.primary_outputs().iter().map(name).collect(),
            nets: c
                .nets()
                .iter()
                .map(|n| NetDump {
                    id: n.id.0,
                    name: n.name.clone(),
                    driver: match n.driver {
                        Driver::Gate(g) => c.gate(g).instance_name.clone(),
                        Driver::PrimaryInput => "<input>".into(),
                        Driver::Undriven => "<undriven>".into(),
                    },
                    is_trojan: n.is_trojan,
                })
                .collect(),
            gates: c
                .gates()
                .iter()
                .map(|g| GateDump {
                    id: g.id.0,
                    instance: g.instance_name.clone(),
                    kind: g.kind.to_string(),
                    inputs: g.inputs.iter().map(name).collect(),
                    output: g.output.as_ref().map(name),
                    inv_output: g.inv_output.as_ref().map(name),
                    clock: g.clock.as_ref().map(name),
                    controls: g.controls.iter().map(name).collect(),
                    is_trojan: c.is_trojan_gate(g.id),
                })
                .collect(),
        }
    }
}

/// Pretty-printed JSON view of the graph for debugging.
pub fn dump_graph_json(c: &CircuitGraph) -> String {
    serde_json::to_string_pretty(&GraphDump::new(c)).expect("plain data serializes")
}
