//! Random gate-level host circuits with an inserted trigger/payload Trojan.
//!
//! The host is a levelled random netlist of small gates with some flip-flops
//! (fed back from later logic) and multiplexers. The Trojan compares a set of
//! host nets against fixed values through a tree of wide AND/NOR gates,
//! optionally counts trigger events in a small register, and flips one host
//! net through an XOR or MUX payload. Trojan instances and nets are named
//! `troj_*` and labelled.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::netlist::{CellFamily, CellKind, CircuitBuilder, CircuitGraph, NetlistError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub inputs: usize,
    pub outputs: usize,
    /// Combinational host gates.
    pub gates: usize,
    pub flip_flops: usize,
    pub muxes: usize,
    /// Host nets compared by the trigger, inclusive range.
    pub trigger_width: (usize, usize),
    /// Probability of a trigger-event counter.
    pub counter_probability: f64,
    /// Widest host logic gate. With 2 the host never uses the 3- and
    /// 4-input cells the trigger is built from.
    pub host_max_arity: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            inputs: 20,
            outputs: 12,
            gates: 230,
            flip_flops: 16,
            muxes: 10,
            trigger_width: (12, 20),
            counter_probability: 0.5,
            host_max_arity: 4,
        }
    }
}

struct Proto {
    kind: CellKind,
    name: String,
    inputs: Vec<usize>,
    output: usize,
    trojan: bool,
}

struct Draft {
    nets: Vec<(String, bool)>,
    gates: Vec<Proto>,
    loads: Vec<usize>,
}

impl Draft {
    fn net(&mut self, name: String, trojan: bool) -> usize {
        self.nets.push((name, trojan));
        self.loads.push(0);
        self.nets.len() - 1
    }

    fn gate(&mut self, family: CellFamily, name: String, inputs: Vec<usize>, trojan: bool) -> usize {
        let out = self.net(format!("{name}_o"), trojan);
        self.push(family, name, inputs, out, trojan);
        out
    }

    fn push(&mut self, family: CellFamily, name: String, inputs: Vec<usize>, output: usize, trojan: bool) {
        for &i in &inputs {
            self.loads[i] += 1;
        }
        let kind = CellKind::new(family, inputs.len() as u8).expect("valid arity");
        self.gates.push(Proto {
            kind,
            name,
            inputs,
            output,
            trojan,
        });
    }
}

fn pick_inputs(rng: &mut ChaCha8Rng, pool: &[usize], k: usize) -> Vec<usize> {
    // favour recent nets so logic gets deep
    let mut out: Vec<usize> = Vec::with_capacity(k);
    while out.len() < k {
        let n = if rng.random_bool(0.7) && pool.len() > 8 {
            let window = pool.len().min(40);
            pool[pool.len() - 1 - rng.random_range(0..window)]
        } else {
            *pool.choose(rng).expect("non-empty pool")
        };
        if !out.contains(&n) || pool.len() < k {
            out.push(n);
        }
    }
    out
}

/// One host circuit with one Trojan, deterministic in `seed`.
pub fn generate(name: &str, config: &SynthConfig, seed: u64) -> Result<CircuitGraph, NetlistError> {
    use CellFamily::*;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Draft {
        nets: Vec::new(),
        gates: Vec::new(),
        loads: Vec::new(),
    };
    let pis: Vec<usize> = (0..config.inputs).map(|k| d.net(format!("in{k}"), false)).collect();
    let clk = d.net("clk".into(), false);

    let mut pool = pis.clone();
    let mut ff_d = Vec::new();
    for k in 0..config.flip_flops {
        let q = d.net(format!("ff{k}_q"), false);
        ff_d.push(q);
        pool.push(q);
    }

    let families = [
        (And, 2, 14),
        (Nand, 2, 14),
        (Or, 2, 12),
        (Nor, 2, 10),
        (Xor, 2, 6),
        (Xnor, 2, 3),
        (Not, 1, 14),
        (Buf, 1, 4),
        (And, 3, 6),
        (Or, 3, 5),
        (Nand, 3, 5),
        (Nor, 3, 3),
        (And, 4, 2),
        (Nor, 4, 1),
    ];
    let families: Vec<_> = families
        .into_iter()
        .filter(|f| f.1 <= config.host_max_arity.max(1))
        .collect();
    let total: u32 = families.iter().map(|f| f.2).sum();
    let mux_every = if config.muxes == 0 {
        usize::MAX
    } else {
        (config.gates / config.muxes).max(1)
    };
    for k in 0..config.gates {
        if k % mux_every == mux_every / 2 {
            let ins = pick_inputs(&mut rng, &pool, 3);
            let o = d.gate(Mux2, format!("g{k}"), ins, false);
            pool.push(o);
            continue;
        }
        let mut roll = rng.random_range(0..total);
        let &(family, arity, _) = families
            .iter()
            .find(|f| {
                if roll < f.2 {
                    true
                } else {
                    roll -= f.2;
                    false
                }
            })
            .expect("weights cover the range");
        let ins = pick_inputs(&mut rng, &pool, arity);
        let o = d.gate(family, format!("g{k}"), ins, false);
        pool.push(o);
    }
    let comb_start = pis.len() + 1 + config.flip_flops;
    let comb: Vec<usize> = (comb_start..d.nets.len()).collect();
    for (k, &q) in ff_d.iter().enumerate() {
        let src = comb[rng.random_range(comb.len() / 3..comb.len())];
        let name = format!("ff{k}");
        d.loads[src] += 1;
        d.gates.push(Proto {
            kind: CellKind::of(Dff),
            name,
            inputs: vec![src, clk],
            output: q,
            trojan: false,
        });
    }

    // payload victim first, so the trigger can avoid its fan-out cone
    let victims: Vec<usize> = comb.iter().copied().filter(|&n| d.loads[n] > 0).collect();
    let victim = *victims.choose(&mut rng).unwrap_or(&comb[comb.len() / 2]);
    let mut cone = vec![false; d.nets.len()];
    cone[victim] = true;
    for g in &d.gates {
        if !g.kind.is_dff() && g.inputs.iter().any(|&i| cone[i]) {
            cone[g.output] = true;
        }
    }
    let outside: Vec<usize> = comb.iter().copied().filter(|&n| !cone[n]).collect();

    // trigger: compare host nets with random constants
    let (lo, hi) = config.trigger_width;
    let width = rng.random_range(lo..=hi).min(outside.len());
    let mut candidates = outside.clone();
    candidates.shuffle(&mut rng);
    let leaves_src: Vec<usize> = candidates.into_iter().take(width).collect();
    let mut level: Vec<usize> = Vec::new();
    for (k, &src) in leaves_src.iter().enumerate() {
        if rng.random_bool(0.5) {
            level.push(d.gate(Not, format!("troj_inv{k}"), vec![src], true));
        } else {
            level.push(src);
        }
    }
    let mut depth = 0;
    while level.len() > 1 {
        let mut next = Vec::new();
        let mut k = 0;
        let mut chunk_id = 0;
        while k < level.len() {
            let remaining = level.len() - k;
            let mut take = rng.random_range(3..=4).min(remaining);
            if remaining - take == 1 {
                take = if take == 4 { 3 } else { take + 1 };
            }
            let ins = level[k..k + take].to_vec();
            k += take;
            if ins.len() == 1 {
                next.push(ins[0]);
                continue;
            }
            // alternate polarity: AND of ones, NOR of zeros
            let family = if depth % 2 == 0 { And } else { Nor };
            let family = if rng.random_bool(0.2) {
                if family == And { Nand } else { Or }
            } else {
                family
            };
            next.push(d.gate(family, format!("troj_t{depth}_{chunk_id}"), ins, true));
            chunk_id += 1;
        }
        level = next;
        depth += 1;
    }
    let mut trigger = level[0];

    if rng.random_bool(config.counter_probability) {
        let bits = rng.random_range(2..=3);
        let mut carry = trigger;
        let mut qs = Vec::new();
        for b in 0..bits {
            let q = d.net(format!("troj_cnt{b}_q"), true);
            let nxt = d.gate(Xor, format!("troj_cnt{b}_x"), vec![q, carry], true);
            d.push(Dff, format!("troj_cnt{b}"), vec![nxt], q, true);
            d.gates.last_mut().expect("just pushed").inputs.push(clk);
            carry = d.gate(And, format!("troj_cnt{b}_c"), vec![q, carry], true);
            qs.push(q);
        }
        qs.push(trigger);
        trigger = d.gate(And, "troj_fire".into(), qs, true);
    }

    // payload: flip the victim
    let payload = if rng.random_bool(0.5) {
        d.gate(Xor, "troj_pay".into(), vec![victim, trigger], true)
    } else {
        let other = *outside.choose(&mut rng).unwrap_or(&victim);
        d.gate(Mux2, "troj_pay".into(), vec![victim, other, trigger], true)
    };
    let payload_gate = d.gates.len() - 1;
    for (gi, g) in d.gates.iter_mut().enumerate() {
        if gi == payload_gate || g.trojan {
            continue;
        }
        let data = if g.kind.is_dff() { 1 } else { g.inputs.len() };
        for i in &mut g.inputs[..data] {
            if *i == victim {
                *i = payload;
            }
        }
    }
    let mut loads = vec![0usize; d.nets.len()];
    for g in &d.gates {
        let data = if g.kind.is_dff() { 1 } else { g.inputs.len() };
        for &i in &g.inputs[..data] {
            loads[i] += 1;
        }
    }

    // primary outputs: unloaded host nets first, then random ones
    let mut pos: Vec<usize> = comb
        .iter()
        .copied()
        .filter(|&n| loads[n] == 0 && !d.nets[n].1)
        .collect();
    pos.shuffle(&mut rng);
    pos.truncate(config.outputs);
    if !pos.contains(&payload) && loads[payload] == 0 {
        pos.push(payload);
    }
    while pos.len() < config.outputs {
        let n = comb[rng.random_range(comb.len() / 2..comb.len())];
        if !pos.contains(&n) {
            pos.push(n);
        }
    }

    let mut b = CircuitBuilder::new(name);
    let mut ids = Vec::with_capacity(d.nets.len());
    for (k, (net_name, _)) in d.nets.iter().enumerate() {
        let id = if pis.contains(&k) || k == clk {
            b.input(net_name)?
        } else {
            b.wire(net_name)?
        };
        ids.push(id);
    }
    for &p in &pos {
        b.mark_output(ids[p]);
    }
    for g in &d.gates {
        let id = if g.kind.is_dff() {
            b.add_dff(&g.name, ids[g.inputs[0]], Some(ids[g.inputs[1]]), Some(ids[g.output]), None, &[])?
        } else {
            let ins: Vec<_> = g.inputs.iter().map(|&i| ids[i]).collect();
            b.add_gate(&g.name, g.kind, &ins, Some(ids[g.output]))?
        };
        if g.trojan {
            b.mark_trojan_gate(id);
            b.mark_trojan_net(ids[g.output]);
        }
    }
    b.build()
}

/// `count` circuits named `synth_000`, `synth_001`, ...
pub fn corpus(count: usize, config: &SynthConfig, seed: u64) -> Result<Vec<CircuitGraph>, NetlistError> {
    (0..count)
        .map(|k| {
            generate(
                &format!("synth_{k:03}"),
                config,
                seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k as u64),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewrite::Simulator;

    #[test]
    fn generated_circuits_are_well_formed() {
        let cfg = SynthConfig::default();
        for seed in 0..5 {
            let c = generate("s", &cfg, seed).unwrap();
            assert!(Simulator::new(&c).is_ok(), "combinational loop");
            let t = c.trojan_nets().len();
            assert!((10..=60).contains(&t), "{t} Trojan nets");
            assert!(c.net_count() > 200);
            for &n in c.trojan_nets() {
                assert!(c.is_trojan_gate(c.driver_gate(n).unwrap()));
            }
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig::default();
        let a = generate("s", &cfg, 7).unwrap();
        let b = generate("s", &cfg, 7).unwrap();
        assert_eq!(a.signature(), b.signature());
    }
}
