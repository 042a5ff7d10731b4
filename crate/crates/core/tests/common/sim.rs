use std::collections::HashMap;

use htguard::netlist::{CellFamily, CellKind, CircuitBuilder, CircuitGraph, GateId, NetId};

/// Reference cell semantics, independent of the library simulator.
pub fn cell(f: CellFamily, x: &[bool]) -> bool {
    use CellFamily::*;
    match f {
        And => x.iter().all(|&v| v),
        Nand => !x.iter().all(|&v| v),
        Or => x.iter().any(|&v| v),
        Nor => !x.iter().any(|&v| v),
        Xor => x.iter().filter(|&&v| v).count() % 2 == 1,
        Xnor => x.iter().filter(|&&v| v).count() % 2 == 0,
        Not => !x[0],
        Buf => x[0],
        Mux2 => {
            if x[2] {
                x[1]
            } else {
                x[0]
            }
        }
        Const0 => false,
        Const1 => true,
        Dff => unreachable!("sequential"),
    }
}

/// One clock cycle: settles combinational logic by repeated sweeps, returns
/// PO values by name and the next flip-flop state.
pub fn cycle(c: &CircuitGraph, pis: &HashMap<String, bool>, state: &HashMap<GateId, bool>) -> (Vec<(String, bool)>, HashMap<GateId, bool>) {
    let mut val: HashMap<NetId, bool> = HashMap::new();
    for &p in c.primary_inputs() {
        val.insert(p, *pis.get(&c.net(p).name).unwrap_or(&false));
    }
    for g in c.gates() {
        if g.kind.is_dff() {
            let s = state.get(&g.id).copied().unwrap_or(false);
            if let Some(q) = g.output {
                val.insert(q, s);
            }
            if let Some(qn) = g.inv_output {
                val.insert(qn, !s);
            }
        }
    }
    loop {
        let mut progress = false;
        for g in c.gates() {
            if g.kind.is_dff() {
                continue;
            }
            let Some(o) = g.output else { continue };
            if val.contains_key(&o) {
                continue;
            }
            let ins: Option<Vec<bool>> = g.inputs.iter().map(|n| val.get(n).copied()).collect();
            if let Some(ins) = ins {
                val.insert(o, cell(g.kind.family(), &ins));
                progress = true;
            }
        }
        if !progress {
            break;
        }
    }
    let outs = c
        .primary_outputs()
        .iter()
        .map(|&o| (c.net(o).name.clone(), val[&o]))
        .collect();
    let next = c
        .gates()
        .iter()
        .filter(|g| g.kind.is_dff())
        .map(|g| (g.id, val[&g.inputs[0]]))
        .collect();
    (outs, next)
}

pub fn single_cell(family: CellFamily, arity: usize) -> CircuitGraph {
    let mut b = CircuitBuilder::new(format!("{family:?}{arity}"));
    let ins: Vec<NetId> = (0..arity).map(|i| b.input(&format!("x{i}")).unwrap()).collect();
    let y = b.output("y").unwrap();
    let z = b.output("z").unwrap();
    let kind = CellKind::new(family, arity as u8).unwrap();
    b.add_gate("u", kind, &ins, Some(y)).unwrap();
    // a second load on the rewritten output
    b.add_gate("load", CellKind::of(CellFamily::Not), &[y], Some(z)).unwrap();
    b.build().unwrap()
}

pub fn cell_fixtures() -> Vec<CircuitGraph> {
    use CellFamily::*;
    let mut out = Vec::new();
    for f in [And, Nand, Or, Nor, Xor, Xnor] {
        for n in 2..=5 {
            out.push(single_cell(f, n));
        }
    }
    out.push(single_cell(Not, 1));
    out.push(single_cell(Buf, 1));
    out.push(single_cell(Mux2, 3));
    out
}

pub fn exhaustive_equal(a: &CircuitGraph, b: &CircuitGraph) -> bool {
    let names: Vec<String> = a.primary_inputs().iter().map(|&p| a.net(p).name.clone()).collect();
    for v in 0u32..(1 << names.len()) {
        let pis: HashMap<String, bool> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), v >> i & 1 == 1))
            .collect();
        let (oa, _) = cycle(a, &pis, &HashMap::new());
        let (ob, _) = cycle(b, &pis, &HashMap::new());
        let mut oa = oa;
        let mut ob = ob;
        oa.sort();
        ob.sort();
        if oa != ob {
            return false;
        }
    }
    true
}

pub fn dff_fixture() -> CircuitGraph {
    let mut b = CircuitBuilder::new("seq");
    let a = b.input("a").unwrap();
    let clk = b.input("clk").unwrap();
    let q = b.output("q").unwrap();
    let qn = b.wire("qn").unwrap();
    let d = b.wire("d").unwrap();
    let y = b.output("y").unwrap();
    b.add_gate("x", CellKind::new(CellFamily::Xor, 2).unwrap(), &[a, q], Some(d)).unwrap();
    b.add_dff("ff", d, Some(clk), Some(q), Some(qn), &[]).unwrap();
    b.add_gate("o", CellKind::new(CellFamily::And, 2).unwrap(), &[qn, a], Some(y)).unwrap();
    b.build().unwrap()
}

pub fn sequences_equal(a: &CircuitGraph, b: &CircuitGraph, len: usize) -> bool {
    for v in 0u32..(1 << len) {
        let mut sa = HashMap::new();
        let mut sb = HashMap::new();
        for t in 0..len {
            let pis = HashMap::from([("a".to_string(), v >> t & 1 == 1)]);
            let (mut oa, na) = cycle(a, &pis, &sa);
            let (mut ob, nb) = cycle(b, &pis, &sb);
            oa.sort();
            ob.sort();
            if oa != ob {
                return false;
            }
            sa = na;
            sb = nb;
        }
    }
    true
}
