use std::sync::Mutex;

use htguard::attack::{run_attack, AttackConfig, LookupOracle, Oracle};
use htguard::features::FeatureVector;
use htguard::netlist::CircuitGraph;

/// Forwards to an inner oracle and remembers every answer.
pub struct Recording<'a, O> {
    pub inner: &'a O,
    pub seen: Mutex<LookupOracle>,
}

impl<O: Oracle> Oracle for Recording<'_, O> {
    fn predict_proba(&self, x: &FeatureVector) -> f64 {
        let p = self.inner.predict_proba(x);
        self.seen.lock().unwrap().insert(x, p);
        p
    }
}

/// Counts table misses.
pub struct Strict<'a> {
    pub table: &'a LookupOracle,
    pub misses: Mutex<usize>,
}

impl Oracle for Strict<'_> {
    fn predict_proba(&self, x: &FeatureVector) -> f64 {
        let p = self.table.predict_proba(x);
        if p.is_nan() {
            *self.misses.lock().unwrap() += 1;
        }
        p
    }
}

/// Runs the attack against `oracle` while recording every answer, then
/// reruns it against a lookup table of those answers alone. Any table miss
/// or divergence in the trace is reported.
pub fn replay_against_lookup<O: Oracle>(c: &CircuitGraph, oracle: &O, cfg: &AttackConfig) -> Result<(), String> {
    let rec = Recording { inner: oracle, seen: Mutex::new(LookupOracle::new(f64::NAN)) };
    let a = run_attack(c, &rec, cfg).map_err(|e| e.to_string())?;
    let table = rec.seen.into_inner().unwrap();
    let strict = Strict { table: &table, misses: Mutex::new(0) };
    let b = run_attack(c, &strict, cfg).map_err(|e| e.to_string())?;
    let misses = *strict.misses.lock().unwrap();
    if misses > 0 {
        return Err(format!("{misses} queries were not answered by the recorded table"));
    }
    if a.steps != b.steps || a.initial_metric.to_bits() != b.initial_metric.to_bits() {
        return Err("trace differs against the lookup oracle".into());
    }
    if a.final_circuit.signature() != b.final_circuit.signature() {
        return Err("final circuit differs against the lookup oracle".into());
    }
    Ok(())
}
