use htguard::features::{Normalizer, FEATURE_COUNT};
use htguard::model::DetectionModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Independent forward pass: weighted binary cross-entropy on the logit.
pub fn oracle_loss(m: &DetectionModel, x: &[f64], y: bool, w: f64) -> f64 {
    let mut a = x.to_vec();
    let last = m.layers.len() - 1;
    for (k, l) in m.layers.iter().enumerate() {
        let z: Vec<f64> = (0..l.outputs)
            .map(|o| l.bias[o] + (0..l.inputs).map(|i| l.weights[o * l.inputs + i] * a[i]).sum::<f64>())
            .collect();
        if k == last {
            let z = z[0];
            // log(1 + e^z) - y z, written out stably
            let sp = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            return w * (sp - if y { z } else { 0.0 });
        }
        a = z.into_iter().map(sigmoid).collect();
    }
    unreachable!()
}

/// Pointer to parameter `k` in weights-then-bias, layer by layer order.
pub fn param(m: &mut DetectionModel, mut k: usize) -> &mut f64 {
    for l in &mut m.layers {
        if k < l.weights.len() {
            return &mut l.weights[k];
        }
        k -= l.weights.len();
        if k < l.bias.len() {
            return &mut l.bias[k];
        }
        k -= l.bias.len();
    }
    panic!("parameter index out of range")
}

/// Worst relative error between the library gradient and central differences
/// of [`oracle_loss`] over `instances` random models, inputs and labels.
pub fn worst_gradient_error(instances: u64) -> f64 {
    const H: f64 = 1e-5;
    let mut worst: f64 = 0.0;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DetectionModel::new(seed, Normalizer::identity());
        // move away from the initial point so every layer matters
        for l in &mut m.layers {
            l.bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
        }
        let x: Vec<f64> = (0..FEATURE_COUNT).map(|_| rng.random_range(0.0..1.0)).collect();
        let y = rng.random_bool(0.5);
        let w = rng.random_range(0.2..3.0);
        let analytic = m.gradient(&x, y, w).unwrap();
        assert_eq!(analytic.len(), m.param_count());
        assert!((m.sample_loss(&x, y, w).unwrap() - oracle_loss(&m, &x, y, w)).abs() < 1e-12);
        let n = analytic.len();
        // a random sample of parameters plus the whole output layer
        let mut picks: Vec<usize> = (0..40).map(|_| rng.random_range(0..n)).collect();
        picks.extend(n - 51..n);
        for k in picks {
            let mut p = m.clone();
            let v = *param(&mut p, k);
            *param(&mut p, k) = v + H;
            let up = oracle_loss(&p, &x, y, w);
            *param(&mut p, k) = v - H;
            let down = oracle_loss(&p, &x, y, w);
            let numeric = (up - down) / (2.0 * H);
            let a = analytic[k];
            worst = worst.max((a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-7));
        }
    }
    worst
}
