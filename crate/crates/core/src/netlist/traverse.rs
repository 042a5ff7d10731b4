use std::collections::HashSet;

use super::{CircuitGraph, GateId, NetId, NetlistError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Towards the drivers (fan-in cone).
    Input,
    /// Towards the loads (fan-out cone).
    Output,
}

/// Gates around a net grouped by logic level.
///
/// `levels[k]` holds the gates first reached at level `k + 1`, sorted by id.
/// On the input side level 1 is the driving gate; on the output side level 1 is
/// the set of gates reading the net. Flip-flops are crossed through their data
/// pin only; clock and control pins are never followed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Neighborhood {
    pub levels: Vec<Vec<GateId>>,
}

impl Neighborhood {
    pub fn gates(&self) -> impl Iterator<Item = GateId> + '_ {
        self.levels.iter().flatten().copied()
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn neighborhood(
    c: &CircuitGraph,
    net: NetId,
    direction: Direction,
    depth: usize,
) -> Result<Neighborhood, NetlistError> {
    c.try_net(net)?;
    if depth == 0 {
        return Err(NetlistError::Unsupported("neighborhood depth must be at least 1".into()));
    }
    let mut seen: HashSet<GateId> = HashSet::new();
    let mut frontier: Vec<GateId> = match direction {
        Direction::Input => c.driver_gate(net).into_iter().collect(),
        Direction::Output => c.data_loads(net).collect(),
    };
    frontier.sort();
    frontier.dedup();
    let mut levels = Vec::new();
    for _ in 0..depth {
        if frontier.is_empty() {
            break;
        }
        seen.extend(frontier.iter().copied());
        let mut next = Vec::new();
        for &g in &frontier {
            let gate = c.gate(g);
            match direction {
                Direction::Input => {
                    next.extend(gate.inputs.iter().filter_map(|&n| c.driver_gate(n)));
                }
                Direction::Output => {
                    for o in gate.output_nets() {
                        next.extend(c.data_loads(o));
                    }
                }
            }
        }
        next.retain(|g| !seen.contains(g));
        next.sort();
        next.dedup();
        levels.push(std::mem::replace(&mut frontier, next));
    }
    Ok(Neighborhood { levels })
}
