use crate::netlist::{CellFamily, CircuitGraph, Driver, Gate, GateId};

use super::RewriteError;

/// Levelized two-valued simulator evaluating 64 input vectors per pass, one
/// per bit lane. Flip-flops ignore clock and control pins: every call to
/// [`Simulator::cycle`] is one rising edge.
pub struct Simulator<'c> {
    c: &'c CircuitGraph,
    order: Vec<GateId>,
    dffs: Vec<GateId>,
}

impl<'c> Simulator<'c> {
    pub fn new(c: &'c CircuitGraph) -> Result<Self, RewriteError> {
        let n = c.gate_count();
        let comb_driver = |net| {
            c.driver_gate(net)
                .filter(|&d| c.gate(d).kind.is_combinational())
        };
        let mut indegree = vec![0usize; n];
        let mut dependents: Vec<Vec<GateId>> = vec![Vec::new(); n];
        let mut dffs = Vec::new();
        for g in c.gates() {
            if g.kind.is_dff() {
                dffs.push(g.id);
                continue;
            }
            for &i in &g.inputs {
                if let Some(d) = comb_driver(i) {
                    indegree[g.id.index()] += 1;
                    dependents[d.index()].push(g.id);
                }
            }
        }
        let mut order: Vec<GateId> = c
            .gates()
            .iter()
            .filter(|g| g.kind.is_combinational() && indegree[g.id.index()] == 0)
            .map(|g| g.id)
            .collect();
        let mut head = 0;
        while head < order.len() {
            let g = order[head];
            head += 1;
            for &d in &dependents[g.index()] {
                indegree[d.index()] -= 1;
                if indegree[d.index()] == 0 {
                    order.push(d);
                }
            }
        }
        let comb_total = n - dffs.len();
        if order.len() < comb_total {
            // walk backwards through unresolved gates until one repeats
            let mut path = vec![c
                .gates()
                .iter()
                .find(|g| g.kind.is_combinational() && indegree[g.id.index()] > 0)
                .expect("an unresolved gate exists")
                .id];
            loop {
                let g = *path.last().expect("non-empty");
                let prev = c
                    .gate(g)
                    .inputs
                    .iter()
                    .filter_map(|&i| comb_driver(i))
                    .find(|d| indegree[d.index()] > 0)
                    .expect("unresolved gates have an unresolved driver");
                if let Some(pos) = path.iter().position(|&p| p == prev) {
                    let mut cycle: Vec<String> = path[pos..]
                        .iter()
                        .rev()
                        .map(|&g| c.gate(g).instance_name.clone())
                        .collect();
                    cycle.push(cycle[0].clone());
                    return Err(RewriteError::CombinationalCycle(cycle));
                }
                path.push(prev);
            }
        }
        Ok(Self { c, order, dffs })
    }

    pub fn circuit(&self) -> &'c CircuitGraph {
        self.c
    }

    /// Flip-flops in state order.
    pub fn dffs(&self) -> &[GateId] {
        &self.dffs
    }

    fn eval(gate: &Gate, values: &[u64]) -> u64 {
        let v = |k: usize| values[gate.inputs[k].index()];
        let all = gate.inputs.iter().map(|i| values[i.index()]);
        match gate.kind.family() {
            CellFamily::And => all.fold(!0, |a, b| a & b),
            CellFamily::Nand => !all.fold(!0, |a, b| a & b),
            CellFamily::Or => all.fold(0, |a, b| a | b),
            CellFamily::Nor => !all.fold(0, |a, b| a | b),
            CellFamily::Xor => all.fold(0, |a, b| a ^ b),
            CellFamily::Xnor => !all.fold(0, |a, b| a ^ b),
            CellFamily::Not => !v(0),
            CellFamily::Buf => v(0),
            CellFamily::Mux2 => (v(0) & !v(2)) | (v(1) & v(2)),
            CellFamily::Const0 => 0,
            CellFamily::Const1 => !0,
            CellFamily::Dff => unreachable!("flip-flops are not evaluated combinationally"),
        }
    }

    /// Evaluates one cycle. `inputs` follows the primary-input order, `state`
    /// the [`Simulator::dffs`] order and is advanced to the next state.
    /// Returns the primary-output words observed before the clock edge.
    pub fn cycle(&self, inputs: &[u64], state: &mut [u64], values: &mut Vec<u64>) -> Vec<u64> {
        let c = self.c;
        values.clear();
        values.resize(c.net_count(), 0);
        for (k, &pi) in c.primary_inputs().iter().enumerate() {
            values[pi.index()] = inputs[k];
        }
        for (k, &f) in self.dffs.iter().enumerate() {
            let g = c.gate(f);
            if let Some(q) = g.output {
                values[q.index()] = state[k];
            }
            if let Some(qn) = g.inv_output {
                values[qn.index()] = !state[k];
            }
        }
        for &g in &self.order {
            let gate = c.gate(g);
            if let Some(o) = gate.output {
                values[o.index()] = Self::eval(gate, values);
            }
        }
        let outputs = c
            .primary_outputs()
            .iter()
            .map(|&po| match c.net(po).driver {
                Driver::Undriven => 0,
                _ => values[po.index()],
            })
            .collect();
        for (k, &f) in self.dffs.iter().enumerate() {
            state[k] = values[c.gate(f).inputs[0].index()];
        }
        outputs
    }
}

fn check_len(c: &CircuitGraph, v: &[bool]) -> Result<(), RewriteError> {
    if v.len() != c.primary_inputs().len() {
        return Err(RewriteError::InputLength {
            expected: c.primary_inputs().len(),
            got: v.len(),
        });
    }
    Ok(())
}

fn pack(v: &[bool]) -> Vec<u64> {
    v.iter().map(|&b| if b { !0 } else { 0 }).collect()
}

/// Output values for one input assignment, flip-flops at zero.
pub fn simulate(c: &CircuitGraph, inputs: &[bool]) -> Result<Vec<bool>, RewriteError> {
    Ok(simulate_sequence(c, &[inputs.to_vec()])?.remove(0))
}

/// Per-cycle outputs for an input sequence starting from the all-zero state.
pub fn simulate_sequence(
    c: &CircuitGraph,
    sequence: &[Vec<bool>],
) -> Result<Vec<Vec<bool>>, RewriteError> {
    let sim = Simulator::new(c)?;
    let mut state = vec![0u64; sim.dffs().len()];
    let mut values = Vec::new();
    let mut out = Vec::with_capacity(sequence.len());
    for step in sequence {
        check_len(c, step)?;
        let words = sim.cycle(&pack(step), &mut state, &mut values);
        out.push(words.iter().map(|w| w & 1 == 1).collect());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{parse_verilog, LabelSpec};

    fn parse(src: &str) -> CircuitGraph {
        parse_verilog(src, &LabelSpec::None).unwrap()
    }

    #[test]
    fn and_gate() {
        let c = parse("module m(a,b,y); input a,b; output y; AND2 g(.A(a),.B(b),.Y(y)); endmodule");
        assert_eq!(simulate(&c, &[true, true]).unwrap(), [true]);
        assert_eq!(simulate(&c, &[true, false]).unwrap(), [false]);
    }

    #[test]
    fn two_stage_register_delays_by_two() {
        let c = parse(
            "module m(d,clk,y); input d,clk; output y; wire q1;
             DFF f1(.D(d),.CLK(clk),.Q(q1)); DFF f2(.D(q1),.CLK(clk),.Q(y)); endmodule",
        );
        let seq: Vec<Vec<bool>> = (0..5).map(|t| vec![t == 0, false]).collect();
        let out: Vec<bool> = simulate_sequence(&c, &seq).unwrap().into_iter().map(|o| o[0]).collect();
        assert_eq!(out, [false, false, true, false, false]);
    }

    #[test]
    fn combinational_cycle_is_reported() {
        let c = parse(
            "module m(a,y); input a; output y; wire w;
             AND2 g1(.A(a),.B(y),.Y(w)); INV g2(.A(w),.Y(y)); endmodule",
        );
        match Simulator::new(&c) {
            Err(RewriteError::CombinationalCycle(path)) => {
                assert!(path.contains(&"g1".to_string()) && path.contains(&"g2".to_string()));
            }
            other => panic!("expected a cycle, got {:?}", other.err()),
        }
    }

    #[test]
    fn mux_and_parity() {
        let c = parse(
            "module m(a,b,s,p,y,z); input a,b,s,p; output y,z;
             MUX2 mx(.A(a),.B(b),.S(s),.Y(y)); XNOR3 x(.A(a),.B(b),.C(p),.Y(z)); endmodule",
        );
        assert_eq!(simulate(&c, &[true, false, false, false]).unwrap(), [true, false]);
        assert_eq!(simulate(&c, &[true, false, true, true]).unwrap(), [false, true]);
    }
}
