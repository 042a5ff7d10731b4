use std::sync::Arc;

use htguard::advtrain::{
    generate_adversarial, samples_from_circuits, train_robust, weaken, AdvTrainConfig, AdvTrainError,
    ProvenancedSample,
};
use htguard::features::{extract_all, FeatureMatrix, Normalizer};
use htguard::model::{train, DetectionModel, TrainConfig};
use htguard::synth::{corpus, SynthConfig};
use proptest::prelude::*;

fn tiny() -> SynthConfig {
    SynthConfig {
        inputs: 8,
        outputs: 5,
        gates: 50,
        flip_flops: 4,
        muxes: 3,
        trigger_width: (5, 7),
        ..Default::default()
    }
}

fn dataset(n: usize, seed: u64) -> Vec<ProvenancedSample> {
    let cs: Vec<_> = corpus(n, &tiny(), seed).unwrap().into_iter().map(Arc::new).collect();
    samples_from_circuits(&cs)
}

fn quick(ratio: f64, min_trojan: usize) -> AdvTrainConfig {
    AdvTrainConfig {
        epochs: 2,
        batch_size: 16,
        min_trojan,
        ratio,
        init_epochs: 1,
        budget: 2,
        allow_relaxed: false,
        train: TrainConfig { seed: 4, ..Default::default() },
    }
}

fn matrix(d: &[ProvenancedSample]) -> FeatureMatrix {
    FeatureMatrix {
        rows: d.iter().map(|s| s.features.clone()).collect(),
        labels: d.iter().map(|s| s.label).collect(),
    }
}

#[test]
fn zero_ratio_matches_plain_training() {
    let d = dataset(2, 1);
    let cfg = quick(0.0, 4);
    let (robust, stats) = train_robust(&d, &cfg).unwrap();
    let plain = train(&matrix(&d), &cfg.plain_config()).unwrap();
    assert_eq!(stats.adversarial_examples, 0);
    assert_eq!(robust.to_json(), plain.to_json());
}

#[test]
fn unreachable_threshold_adds_nothing() {
    let d = dataset(2, 2);
    let cfg = quick(1.0, 17);
    let (robust, stats) = train_robust(&d, &cfg).unwrap();
    assert_eq!(stats.adversarial_examples, 0);
    assert!(stats.batches.iter().all(|b| b.1 == 0));
    assert_eq!(robust.to_json(), train(&matrix(&d), &cfg.plain_config()).unwrap().to_json());
}

#[test]
fn qualifying_batches_grow_by_a_fixed_count_of_trojan_rows() {
    let d = dataset(2, 3);
    let cfg = quick(0.5, 2);
    let per = cfg.adversarial_per_batch();
    assert_eq!(per, 1);
    let (_, stats) = train_robust(&d, &cfg).unwrap();
    assert!(stats.adversarial_examples > 0);
    assert!(stats.batches.iter().all(|&(_, a)| a == 0 || a == per));
    assert_eq!(stats.added_labels.len(), stats.adversarial_examples);
    assert!(stats.added_labels.iter().all(|&l| l));
    assert_eq!(stats.added.len(), stats.adversarial_examples);
    for (i, raw) in &stats.added {
        assert!(d[*i].label);
        assert_eq!(raw.len(), d[*i].features.values.len());
    }
    let total: usize = stats.batches.iter().map(|b| b.1).sum();
    assert_eq!(total, stats.adversarial_examples);
}

#[test]
fn same_seed_same_robust_model() {
    let d = dataset(2, 5);
    let cfg = quick(0.5, 2);
    let a = train_robust(&d, &cfg).unwrap();
    let b = train_robust(&d, &cfg).unwrap();
    assert_eq!(a.0.to_json(), b.0.to_json());
    assert_eq!(a.1, b.1);
}

#[test]
fn trojan_rows_need_their_circuit() {
    let mut d = dataset(2, 6);
    let i = d.iter().position(|s| s.label).unwrap();
    d[i].circuit = None;
    assert!(matches!(
        train_robust(&d, &quick(0.5, 2)),
        Err(AdvTrainError::MissingProvenance(_))
    ));
}

#[test]
fn adversarial_vector_never_raises_target_probability() {
    let d = dataset(1, 7);
    let m = extract_all(d[0].circuit.as_ref().unwrap());
    let model = DetectionModel::new(3, Normalizer::fit_matrix(&m).unwrap());
    let mut checked = 0;
    for s in d.iter().filter(|s| s.label).take(6) {
        let adv = generate_adversarial(s, &model, 3, false).unwrap();
        assert_eq!(adv.net, s.features.net);
        let before = model.predict(&s.features.values).unwrap();
        let after = model.predict(&adv.values).unwrap();
        assert!(after <= before, "{after} > {before}");
        checked += 1;
    }
    assert!(checked > 0);
    let normal = d.iter().find(|s| !s.label).unwrap();
    assert!(matches!(
        generate_adversarial(normal, &model, 3, false),
        Err(AdvTrainError::NotTrojan)
    ));
}

#[test]
fn invalid_configs_are_rejected() {
    let d = dataset(1, 8);
    for cfg in [
        AdvTrainConfig { epochs: 0, ..quick(0.1, 4) },
        AdvTrainConfig { budget: 0, ..quick(0.1, 4) },
        AdvTrainConfig { min_trojan: 0, ..quick(0.1, 4) },
        quick(-0.1, 4),
        quick(1.1, 4),
    ] {
        assert!(matches!(train_robust(&d, &cfg), Err(AdvTrainError::InvalidConfig(_))));
    }
}

proptest! {
    #[test]
    fn weaken_stays_in_the_box(
        pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, 0.0f64..=1.0), 1..60)
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let g: Vec<f64> = pairs.iter().map(|p| p.2).collect();
        let w = weaken(&x, &y, &g).unwrap();
        for i in 0..x.len() {
            let (lo, hi) = (x[i].min(y[i]), x[i].max(y[i]));
            prop_assert!(w[i] >= lo - 1e-12 && w[i] <= hi + 1e-12);
        }
        prop_assert_eq!(weaken(&x, &y, &vec![0.0; x.len()]).unwrap(), x.clone());
    }
}
