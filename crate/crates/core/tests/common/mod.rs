#![allow(dead_code)]

pub mod grad;
pub mod oracles;
pub mod sim;

use htguard::features::FEATURE_COUNT;
use htguard::netlist::{parse_verilog, CircuitGraph, LabelSpec, NetId};

/// Small hand-written netlists, none above 20 gates.
pub const FIXTURES: &[(&str, &str)] = &[
    (
        "chain",
        "module chain(a, b, c, y);
           input a, b, c; output y; wire w1, w2;
           AND2 g1(.A(a), .B(b), .Y(w1));
           INV g2(.A(w1), .Y(w2));
           OR2 g3(.A(w2), .B(c), .Y(y));
         endmodule",
    ),
    (
        "ff_loop",
        "module ff_loop(clk, en, q);
           input clk, en; output q; wire d, nq;
           DFF ff(.D(d), .CLK(clk), .Q(q));
           INV g1(.A(q), .Y(nq));
           AND2 g2(.A(nq), .B(en), .Y(d));
         endmodule",
    ),
    (
        "self_loop",
        "module self_loop(clk, q);
           input clk; output q; wire qn;
           DFF ff(.D(qn), .CLK(clk), .Q(q), .QN(qn));
         endmodule",
    ),
    (
        "mux_tree",
        "module mux_tree(a, b, c, d, s0, s1, y);
           input a, b, c, d, s0, s1; output y; wire m0, m1;
           MUX2 u0(.A(a), .B(b), .S(s0), .Y(m0));
           MUX2 u1(.A(c), .B(d), .S(s0), .Y(m1));
           MUX2 u2(.A(m0), .B(m1), .S(s1), .Y(y));
         endmodule",
    ),
    (
        "constants",
        "module constants(a, b, y, z);
           input a, b; output y, z; wire w, k, unused;
           AND2 g1(.A(a), .B(1'b1), .Y(w));
           OR2 g2(.A(w), .B(1'b0), .Y(y));
           TIE1 t(.Y(k));
           XOR2 g3(.A(k), .B(b), .Y(z));
           NAND2 g4(.A(k), .B(w), .Y(unused));
         endmodule",
    ),
    (
        "reconverge",
        "module reconverge(a, b, y);
           input a, b; output y; wire p, q, r, s;
           NAND2 g1(.A(a), .B(b), .Y(p));
           INV g2(.A(p), .Y(q));
           BUF g3(.A(p), .Y(r));
           NOR2 g4(.A(q), .B(r), .Y(s));
           XNOR3 g5(.A(s), .B(p), .C(a), .Y(y));
         endmodule",
    ),
    (
        "ring3",
        "module ring3(clk, x, y);
           input clk, x; output y; wire a, b, c, d;
           DFF f1(.D(c), .CLK(clk), .Q(a));
           DFF f2(.D(a), .CLK(clk), .Q(b));
           XOR2 g(.A(b), .B(x), .Y(d));
           DFF f3(.D(d), .CLK(clk), .Q(c));
           BUF o(.A(c), .Y(y));
         endmodule",
    ),
    (
        "long_loop",
        "module long_loop(clk, y);
           input clk; output y; wire n1, n2, n3, n4, n5, n6;
           DFF f(.D(n6), .CLK(clk), .Q(n1));
           INV g1(.A(n1), .Y(n2));
           INV g2(.A(n2), .Y(n3));
           INV g3(.A(n3), .Y(n4));
           INV g4(.A(n4), .Y(n5));
           INV g5(.A(n5), .Y(n6));
           BUF o(.A(n3), .Y(y));
         endmodule",
    ),
    (
        "five_loop",
        "module five_loop(clk, y);
           input clk; output y; wire n1, n2, n3, n4, n5;
           DFF f(.D(n5), .CLK(clk), .Q(n1));
           INV g1(.A(n1), .Y(n2));
           INV g2(.A(n2), .Y(n3));
           INV g3(.A(n3), .Y(n4));
           INV g4(.A(n4), .Y(n5));
           AND2 o(.A(n2), .B(n5), .Y(y));
         endmodule",
    ),
    (
        "po_feedthrough",
        "module po_feedthrough(a, b, y, z);
           input a, b; output y, z; wire dangling;
           AND2 g1(.A(a), .B(b), .Y(y));
           INV g2(.A(y), .Y(z));
           OR2 g3(.A(y), .B(z), .Y(dangling));
         endmodule",
    ),
    (
        "clock_and_reset",
        "module clock_and_reset(clk, rst, a, q);
           input clk, rst, a; output q; wire gclk, d, r;
           AND2 cg(.A(clk), .B(a), .Y(gclk));
           INV ri(.A(rst), .Y(r));
           MUX2 m(.A(a), .B(q), .S(r), .Y(d));
           DFFR ff(.D(d), .CLK(gclk), .RN(r), .Q(q));
         endmodule",
    ),
    (
        "double_loop",
        "module double_loop(clk, a, q1, q2);
           input clk, a; output q1, q2; wire d1, d2, qn1;
           DFF f1(.D(d1), .CLK(clk), .Q(q1), .QN(qn1));
           DFF f2(.D(d2), .CLK(clk), .Q(q2));
           NAND2 g1(.A(q1), .B(q2), .Y(d1));
           NOR3 g2(.A(qn1), .B(q2), .C(a), .Y(d2));
         endmodule",
    ),
];

pub fn fixture(name: &str) -> CircuitGraph {
    let src = FIXTURES
        .iter()
        .find(|f| f.0 == name)
        .unwrap_or_else(|| panic!("no fixture {name}"))
        .1;
    parse_verilog(src, &LabelSpec::None).unwrap()
}

pub fn all_fixtures() -> Vec<CircuitGraph> {
    FIXTURES
        .iter()
        .map(|(n, s)| parse_verilog(s, &LabelSpec::None).unwrap_or_else(|e| panic!("{n}: {e}")))
        .collect()
}

const INF: usize = usize::MAX / 4;

/// Straightforward re-derivation of all 51 features, written without the
/// library's traversal helpers. All-pairs shortest paths by Floyd-Warshall,
/// cycles by exhaustive enumeration from their smallest gate.
pub struct BruteForce<'c> {
    c: &'c CircuitGraph,
    /// `gd[a][b]`: fewest gate-to-gate steps from gate a to gate b.
    gd: Vec<Vec<usize>>,
    /// `nd[a][b]`: fewest gates crossed from net a to net b.
    nd: Vec<Vec<usize>>,
    cycles: Vec<(usize, Vec<usize>, Vec<usize>)>,
}

impl<'c> BruteForce<'c> {
    pub fn new(c: &'c CircuitGraph) -> Self {
        let g = c.gate_count();
        let n = c.net_count();
        let outs = |gi: usize| -> Vec<usize> {
            let gate = &c.gates()[gi];
            gate.output.iter().chain(gate.inv_output.iter()).map(|x| x.0 as usize).collect()
        };
        let ins = |gi: usize| -> Vec<usize> { c.gates()[gi].inputs.iter().map(|x| x.0 as usize).collect() };

        let mut gd = vec![vec![INF; g]; g];
        for a in 0..g {
            gd[a][a] = 0;
        }
        for a in 0..g {
            for b in 0..g {
                if outs(a).iter().any(|o| ins(b).contains(o)) && a != b {
                    gd[a][b] = 1;
                }
            }
        }
        floyd(&mut gd);

        let mut nd = vec![vec![INF; n]; n];
        for a in 0..n {
            nd[a][a] = 0;
        }
        for gi in 0..g {
            for i in ins(gi) {
                for o in outs(gi) {
                    if i != o {
                        nd[i][o] = 1;
                    }
                }
            }
        }
        floyd(&mut nd);

        // simple cycles as (gate count, gates, nets); start gate is the smallest
        let mut cycles = Vec::new();
        for s in 0..g {
            let mut stack = vec![(vec![s], Vec::<usize>::new())];
            while let Some((gates, nets)) = stack.pop() {
                let last = *gates.last().unwrap();
                for o in outs(last) {
                    for h in 0..g {
                        if !ins(h).contains(&o) {
                            continue;
                        }
                        if h == s {
                            let mut ns = nets.clone();
                            ns.push(o);
                            cycles.push((gates.len(), gates.clone(), ns));
                        } else if h > s && !gates.contains(&h) && gates.len() < 5 {
                            let mut gs = gates.clone();
                            gs.push(h);
                            let mut ns = nets.clone();
                            ns.push(o);
                            stack.push((gs, ns));
                        }
                    }
                }
            }
        }
        Self { c, gd, nd, cycles }
    }

    fn driver(&self, net: usize) -> Option<usize> {
        self.c.driver_gate(NetId(net as u32)).map(|g| g.0 as usize)
    }

    fn readers(&self, net: usize) -> Vec<usize> {
        (0..self.c.gate_count())
            .filter(|&h| self.c.gates()[h].inputs.iter().any(|x| x.0 as usize == net))
            .collect()
    }

    /// Level of every gate on the input side (1 = driver), or INF.
    fn in_levels(&self, net: usize) -> Vec<usize> {
        let d = self.driver(net);
        (0..self.c.gate_count())
            .map(|h| match d {
                Some(d) if self.gd[h][d] < INF => self.gd[h][d] + 1,
                _ => INF,
            })
            .collect()
    }

    fn out_levels(&self, net: usize) -> Vec<usize> {
        let r = self.readers(net);
        (0..self.c.gate_count())
            .map(|h| r.iter().map(|&l| self.gd[l][h]).min().map_or(INF, |d| d.saturating_add(1)))
            .map(|v| if v >= INF { INF } else { v })
            .collect()
    }

    pub fn features(&self, net: NetId) -> Vec<f64> {
        let c = self.c;
        let n = net.0 as usize;
        let gates = c.gates();
        let lin = self.in_levels(n);
        let lout = self.out_levels(n);
        let count = |lv: &[usize], k: usize, pred: &dyn Fn(usize) -> bool| -> f64 {
            (0..gates.len()).filter(|&h| lv[h] <= k && pred(h)).count() as f64
        };
        let ff = |h: usize| gates[h].kind.is_dff();
        let mux = |h: usize| gates[h].kind.is_mux();
        let konst = |h: usize| gates[h].kind.is_const();
        let mut f = Vec::with_capacity(FEATURE_COUNT);
        for k in 1..=5 {
            f.push(
                (0..gates.len())
                    .filter(|&h| lin[h] == k)
                    .map(|h| gates[h].kind.arity() as f64)
                    .sum(),
            );
        }
        for k in 1..=5 {
            f.push(count(&lin, k, &ff));
        }
        for k in 1..=5 {
            f.push(count(&lout, k, &ff));
        }
        for k in 1..=5 {
            f.push(count(&lin, k, &mux));
        }
        for k in 1..=5 {
            f.push(count(&lout, k, &mux));
        }
        let driver = self.driver(n);
        let readers = self.readers(n);
        for k in 1..=5 {
            f.push(
                self.cycles
                    .iter()
                    .filter(|(len, gs, _)| *len <= k && driver.is_some_and(|d| gs.contains(&d)))
                    .count() as f64,
            );
        }
        for k in 1..=5 {
            f.push(
                self.cycles
                    .iter()
                    .filter(|(len, gs, _)| *len <= k && gs.iter().any(|g| readers.contains(g)))
                    .count() as f64,
            );
        }
        for k in 1..=5 {
            f.push(count(&lin, k, &konst));
        }
        // a constant counts at level k if it feeds a gate of the output cone at level <= k
        for k in 1..=5 {
            f.push(
                (0..gates.len())
                    .filter(|&t| konst(t))
                    .filter(|&t| {
                        let o = gates[t].output.map(|x| x.0 as usize);
                        (0..gates.len()).any(|h| {
                            lout[h] <= k && o.is_some_and(|o| gates[h].inputs.iter().any(|x| x.0 as usize == o))
                        })
                    })
                    .count() as f64,
            );
        }
        // distances
        let nets = c.net_count();
        let cap = |v: usize| if v >= 100 { 100.0 } else { v as f64 };
        let pi = (0..nets)
            .filter(|&p| c.is_primary_input(NetId(p as u32)))
            .map(|p| self.nd[p][n])
            .min()
            .unwrap_or(INF);
        let po = (0..nets)
            .filter(|&p| c.is_primary_output(NetId(p as u32)))
            .map(|p| self.nd[n][p])
            .min()
            .unwrap_or(INF);
        let from_cells = |pred: &dyn Fn(usize) -> bool| {
            (0..gates.len())
                .filter(|&h| pred(h))
                .flat_map(|h| {
                    let g = &gates[h];
                    g.output.iter().chain(g.inv_output.iter()).map(|x| x.0 as usize).collect::<Vec<_>>()
                })
                .map(|q| self.nd[q][n].saturating_add(1))
                .min()
                .unwrap_or(INF)
        };
        let to_cells = |pred: &dyn Fn(usize) -> bool| {
            (0..gates.len())
                .filter(|&h| pred(h))
                .flat_map(|h| gates[h].inputs.iter().map(|x| x.0 as usize).collect::<Vec<_>>())
                .map(|d| self.nd[n][d].saturating_add(1))
                .min()
                .unwrap_or(INF)
        };
        f.push(cap(pi));
        f.push(cap(po));
        f.push(cap(from_cells(&ff)));
        f.push(cap(to_cells(&ff)));
        f.push(cap(from_cells(&mux)));
        f.push(cap(to_cells(&mux)));
        f
    }
}

fn floyd(d: &mut [Vec<usize>]) {
    let n = d.len();
    for k in 0..n {
        for i in 0..n {
            if d[i][k] >= INF {
                continue;
            }
            for j in 0..n {
                let v = d[i][k] + d[k][j];
                if v < d[i][j] {
                    d[i][j] = v;
                }
            }
        }
    }
}
