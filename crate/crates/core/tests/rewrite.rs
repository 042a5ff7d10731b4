mod common;

use common::sim::{cell_fixtures, dff_fixture, exhaustive_equal, sequences_equal, single_cell};
use htguard::features::extract_all;
use htguard::netlist::{CellFamily, CellKind, CircuitBuilder};
use htguard::rewrite::{
    applicable_patterns, apply_pattern, check_equivalence, feature_trends, EquivalenceOptions,
    PatternId, Trend, Verdict,
};
use htguard::synth::{generate, SynthConfig};

#[test]
fn every_combinational_pattern_is_exhaustively_equivalent() {
    let mut applied = 0;
    let mut seen = std::collections::BTreeSet::new();
    for c in cell_fixtures() {
        let u = c.gate_by_name("u").unwrap();
        let patterns = applicable_patterns(&c, u);
        assert!(!patterns.is_empty(), "{} has no pattern", c.name());
        for p in patterns {
            let r = apply_pattern(&c, u, p).unwrap();
            assert!(exhaustive_equal(&c, &r.circuit), "{p} on {} changes the function", c.name());
            assert!(check_equivalence(&c, &r.circuit, &EquivalenceOptions::default())
                .unwrap()
                .is_equivalent());
            seen.insert(p);
            applied += 1;
        }
    }
    for n in 1..=14u8 {
        assert!(seen.contains(&PatternId::new(n).unwrap()), "m{n} never exercised");
    }
    assert!(applied >= 40);
}

#[test]
fn m15_preserves_every_input_sequence() {
    let c = dff_fixture();
    let ff = c.gate_by_name("ff").unwrap();
    let r = apply_pattern(&c, ff, "m15".parse().unwrap()).unwrap();
    assert!(sequences_equal(&c, &r.circuit, 8));
    assert!(check_equivalence(&c, &r.circuit, &EquivalenceOptions::default())
        .unwrap()
        .is_equivalent());
}

#[test]
fn m16_is_flagged_and_detected() {
    let m16: PatternId = "m16".parse().unwrap();
    assert!(!m16.preserves_sequential_semantics());
    assert!(PatternId::ALL.iter().filter(|p| !p.preserves_sequential_semantics()).eq([&m16]));
    let c = dff_fixture();
    let r = apply_pattern(&c, c.gate_by_name("ff").unwrap(), m16).unwrap();
    assert!(!sequences_equal(&c, &r.circuit, 6));
    assert!(matches!(
        check_equivalence(&c, &r.circuit, &EquivalenceOptions::default()).unwrap(),
        Verdict::Counterexample(_)
    ));
}

#[test]
fn checker_catches_a_wrong_rewrite() {
    let c = single_cell(CellFamily::And, 3);
    let mut b = CircuitBuilder::from_circuit(&c);
    let u = c.gate_by_name("u").unwrap();
    let g = c.gate(u);
    b.replace_gate(u, CellKind::new(CellFamily::Nand, 3).unwrap(), g.inputs.clone(), g.output);
    let bad = b.build().unwrap();
    let v = check_equivalence(&c, &bad, &EquivalenceOptions::default()).unwrap();
    let Verdict::Counterexample(cex) = v else { panic!("missed the difference") };
    assert_ne!(cex.original, cex.modified);
}

#[test]
fn rewrites_are_equivalent_on_synthetic_hosts() {
    let c = generate("eq", &SynthConfig::default(), 4).unwrap();
    let mut tried = 0;
    for &g in c.trojan_gates().iter().take(12) {
        for p in applicable_patterns(&c, g) {
            if !p.preserves_sequential_semantics() {
                continue;
            }
            let r = apply_pattern(&c, g, p).unwrap();
            let v = check_equivalence(&c, &r.circuit, &EquivalenceOptions::default()).unwrap();
            assert!(v.is_equivalent(), "{p} at {}", c.gate(g).instance_name);
            tried += 1;
        }
    }
    assert!(tried > 10);
}

#[test]
fn feature_trends_hold_for_surviving_nets() {
    let mut checked = 0;
    for seed in 0..3 {
        let c = generate("trend", &SynthConfig::default(), seed).unwrap();
        let before = extract_all(&c);
        for &g in c.trojan_gates().iter().step_by(3) {
            for p in applicable_patterns(&c, g) {
                let r = apply_pattern(&c, g, p).unwrap();
                let after = extract_all(&r.circuit);
                let trends = feature_trends(p);
                for (old, new) in before.rows.iter().zip(&after.rows) {
                    assert_eq!(old.net, new.net, "ids of existing nets are kept");
                    for k in 0..trends.len() {
                        let ok = match trends[k] {
                            Trend::NonIncreasing => new.values[k] <= old.values[k],
                            Trend::NonDecreasing => new.values[k] >= old.values[k],
                            Trend::Any => true,
                        };
                        assert!(
                            ok,
                            "{p} at {}: net {} f{} moved {} -> {}",
                            c.gate(g).instance_name,
                            c.net(old.net).name,
                            k + 1,
                            old.values[k],
                            new.values[k]
                        );
                    }
                }
                checked += 1;
            }
        }
    }
    assert!(checked > 20);
}
