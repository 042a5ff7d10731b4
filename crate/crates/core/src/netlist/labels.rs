use std::collections::BTreeSet;
use std::path::Path;

use regex::Regex;

use super::{CircuitGraph, GateId, NetId, NetlistError};

/// Where Trojan labels come from.
///
/// Whatever the source, the resolved sets are closed once: a gate is a Trojan
/// gate if it was selected directly or drives a selected net, and a net is a
/// Trojan net if it was selected directly or is driven by a selected gate.
#[derive(Clone, Debug, Default)]
pub enum LabelSpec {
    /// No Trojan labels.
    #[default]
    None,
    /// Instance names and net names matching the pattern.
    NameRegex(Regex),
    /// Explicit Trojan net names, usually loaded from a `.labels` sidecar.
    NetNames(BTreeSet<String>),
    /// `// trojan-net: a b` and `// trojan-gate: g` comments in the source.
    Comments,
}

/// Label directives collected from comments while parsing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub(crate) struct CommentLabels {
    pub nets: Vec<String>,
    pub gates: Vec<String>,
}

impl LabelSpec {
    pub fn regex(pattern: &str) -> Result<Self, NetlistError> {
        Regex::new(pattern)
            .map(LabelSpec::NameRegex)
            .map_err(|e| NetlistError::Label(e.to_string()))
    }

    /// Parses sidecar text: one net name per line, `#` starts a comment.
    pub fn from_sidecar_str(text: &str) -> Self {
        let names = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        LabelSpec::NetNames(names)
    }

    pub fn from_sidecar_file(path: &Path) -> Result<Self, NetlistError> {
        Ok(Self::from_sidecar_str(&std::fs::read_to_string(path)?))
    }

    pub(crate) fn resolve(
        &self,
        c: &CircuitGraph,
        comments: &[CommentLabels],
    ) -> Result<(BTreeSet<GateId>, BTreeSet<NetId>), NetlistError> {
        let mut seed_gates = BTreeSet::new();
        let mut seed_nets = BTreeSet::new();
        match self {
            LabelSpec::None => {}
            LabelSpec::NameRegex(re) => {
                seed_gates.extend(
                    c.gates()
                        .iter()
                        .filter(|g| re.is_match(&g.instance_name))
                        .map(|g| g.id),
                );
                seed_nets.extend(c.nets().iter().filter(|n| re.is_match(&n.name)).map(|n| n.id));
            }
            LabelSpec::NetNames(names) => {
                for name in names {
                    let id = c.net_by_name(name).ok_or_else(|| {
                        NetlistError::Label(format!("labelled net `{name}` is not in the netlist"))
                    })?;
                    seed_nets.insert(id);
                }
            }
            LabelSpec::Comments => {
                for block in comments {
                    for name in &block.nets {
                        let id = c.net_by_name(name).ok_or_else(|| {
                            NetlistError::Label(format!("trojan-net `{name}` is not declared"))
                        })?;
                        seed_nets.insert(id);
                    }
                    for name in &block.gates {
                        let id = c.gate_by_name(name).ok_or_else(|| {
                            NetlistError::Label(format!("trojan-gate `{name}` is not instantiated"))
                        })?;
                        seed_gates.insert(id);
                    }
                }
            }
        }
        let mut gates = seed_gates.clone();
        gates.extend(seed_nets.iter().filter_map(|&n| c.driver_gate(n)));
        let mut nets = seed_nets;
        for &g in &seed_gates {
            nets.extend(c.gate(g).output_nets());
        }
        Ok((gates, nets))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_skips_comments_and_blanks() {
        let spec = LabelSpec::from_sidecar_str("# header\n  t1 \n\nt2 # trailing\n");
        match spec {
            LabelSpec::NetNames(n) => {
                assert_eq!(n.into_iter().collect::<Vec<_>>(), vec!["t1", "t2"])
            }
            _ => panic!(),
        }
    }

    #[test]
    fn bad_regex_is_reported() {
        assert!(LabelSpec::regex("(").is_err());
    }
}
