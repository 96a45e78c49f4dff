use std::collections::BTreeMap;

use cect::data::{synth_generate, Dataset};
use cect::model::{checkpoint, Cect, CectConfig, ParamStore};
use cect::train::{
    fit, resume, Adam, AdamConfig, Plateau, PlateauConfig, TrainConfig, BEST_CHECKPOINT, LAST_CHECKPOINT,
};
use cect::{Graph, Rng, Tensor};
use proptest::prelude::*;

fn store(values: &[(&str, Vec<f32>)]) -> ParamStore {
    let mut p = ParamStore::new();
    for (k, v) in values {
        p.insert(*k, Tensor::new(vec![v.len()], v.clone()).unwrap());
    }
    p
}

fn grads(values: &[(&str, Vec<f32>)]) -> BTreeMap<String, Tensor> {
    values
        .iter()
        .map(|(k, v)| (k.to_string(), Tensor::new(vec![v.len()], v.clone()).unwrap()))
        .collect()
}

#[test]
fn zero_gradient_is_a_no_op() {
    let mut p = store(&[("w", vec![0.5, -1.0, 2.0])]);
    let before = p.clone();
    let mut adam = Adam::new(AdamConfig::default(), &p);
    for _ in 0..3 {
        adam.step(&mut p, &grads(&[("w", vec![0.0; 3])]), 0.003).unwrap();
    }
    assert_eq!(p, before);
}

#[test]
fn first_step_closed_form() {
    let g = [0.3f64, -2.0, 1e-3];
    let mut p = store(&[("w", vec![1.0; 3])]);
    let mut adam = Adam::new(AdamConfig::default(), &p);
    let lr = 0.003;
    adam.step(&mut p, &grads(&[("w", g.iter().map(|&v| v as f32).collect())]), lr)
        .unwrap();
    for (i, &gi) in g.iter().enumerate() {
        // m̂ = g and v̂ = g² after bias correction, so the step is lr·g/(|g|+ε).
        let gi = f64::from(gi as f32);
        let expected = 1.0 - lr * gi / (gi.abs() + 1e-8);
        let got = f64::from(p.get("w").unwrap().data()[i]);
        assert!((got - expected).abs() < 1e-7, "{got} vs {expected}");
        assert!(((1.0 - got).abs() - lr).abs() < 1e-5);
    }
}

#[test]
fn adam_replays_and_checks_shapes() {
    let run = || {
        let mut rng = Rng::new(3);
        let mut p = store(&[("a", vec![0.1, 0.2]), ("b", vec![1.0])]);
        let mut adam = Adam::new(AdamConfig::default(), &p);
        for _ in 0..20 {
            let g = grads(&[
                ("a", vec![rng.normal() as f32, rng.normal() as f32]),
                ("b", vec![rng.normal() as f32]),
            ]);
            adam.step(&mut p, &g, 0.01).unwrap();
        }
        (p, adam)
    };
    let (p1, a1) = run();
    let (p2, a2) = run();
    assert_eq!(p1, p2);
    assert_eq!(a1, a2);
    assert_eq!(a1.steps(), 20);

    let mut p = store(&[("a", vec![0.0, 0.0])]);
    let mut adam = Adam::new(AdamConfig::default(), &p);
    assert!(adam.step(&mut p, &grads(&[("a", vec![1.0])]), 0.1).is_err());
    assert!(adam.step(&mut p, &grads(&[("zz", vec![1.0])]), 0.1).is_err());
    assert_eq!(adam.steps(), 0);
}

#[test]
fn plateau_policy() {
    let mut s = Plateau::new(PlateauConfig::default(), 0.003);
    for v in [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3] {
        assert_eq!(s.step(v).unwrap(), 0.003);
    }

    let mut s = Plateau::new(PlateauConfig::default(), 0.003);
    let mut trace = vec![s.step(1.0).unwrap()];
    for _ in 0..6 {
        trace.push(s.step(1.0).unwrap());
    }
    assert_eq!(trace, [0.003, 0.003, 0.003, 0.003, 0.003, 0.003, 0.0015]);
    for _ in 0..6 {
        s.step(1.5).unwrap();
    }
    assert_eq!(s.lr, 0.00075);
    assert!(s.step(0.9).is_ok() && s.improved);
    assert!(s.step(f64::NAN).is_err());
    assert!(PlateauConfig {
        factor: 1.0,
        patience: 5
    }
    .validate()
    .is_err());
}

proptest! {
    #[test]
    fn lr_never_increases(values in proptest::collection::vec(0.0f64..10.0, 1..60), patience in 0usize..4) {
        let mut s = Plateau::new(PlateauConfig { factor: 0.5, patience }, 0.003);
        let mut last = s.lr;
        for v in values {
            let lr = s.step(v).unwrap();
            prop_assert!(lr <= last && lr <= 0.003);
            last = lr;
        }
    }
}

#[test]
fn graph_cross_entropy_closed_forms() {
    let mut g: Graph<f64> = Graph::new();
    let x = g.input(Tensor::zeros(&[3, 2]));
    let l = g.cross_entropy(x, &[0, 1, 1]).unwrap();
    assert!((g.value(l).item().unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    let x = g.input(Tensor::new(vec![1, 2], vec![20.0, -20.0]).unwrap());
    let l = g.cross_entropy(x, &[0]).unwrap();
    assert!(g.value(l).item().unwrap() < 1e-8);
    assert!(g.cross_entropy(x, &[2]).is_err());
}

fn micro_sets(seed: u64) -> (Dataset, Dataset) {
    let dir = tempfile::tempdir().unwrap();
    let m = synth_generate(dir.path(), 6, 32, seed).unwrap();
    let all = Dataset::load(&m, 32).unwrap();
    let (train, val): (Vec<_>, Vec<_>) = all.samples().iter().cloned().enumerate().partition(|(i, _)| i % 3 != 0);
    let strip = |v: Vec<(usize, _)>| Dataset::from_samples(v.into_iter().map(|(_, s)| s).collect(), 32).unwrap();
    (strip(train), strip(val))
}

fn micro_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 3,
        initial_lr: 1e-3,
        seed: 21,
        ..Default::default()
    }
}

#[test]
fn untrained_loss_is_near_ln2_and_runs_replay() {
    let (train, val) = micro_sets(1);
    let cfg = micro_config(2);
    let run = || {
        fit(
            Cect::new(CectConfig::micro(), 5).unwrap(),
            &train,
            &val,
            &cfg,
            None,
            &mut |_| {},
        )
        .unwrap()
    };
    let a = run();
    assert!(
        (a.history.step_losses[0] - std::f64::consts::LN_2).abs() < 0.1,
        "{}",
        a.history.step_losses[0]
    );
    assert_eq!(a.history.step_losses.len(), 2 * 3);
    assert_eq!(a.history.epochs.len(), 2);
    assert!(a.history.epochs[0].improved);
    let b = run();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model.params(), b.model.params());
}

#[test]
fn resume_matches_uninterrupted_run() {
    let (train, val) = micro_sets(2);
    let model = || Cect::new(CectConfig::micro(), 8).unwrap();
    let full_dir = tempfile::tempdir().unwrap();
    let full = fit(
        model(),
        &train,
        &val,
        &micro_config(4),
        Some(full_dir.path()),
        &mut |_| {},
    )
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let first = fit(model(), &train, &val, &micro_config(2), Some(dir.path()), &mut |_| {}).unwrap();
    assert_eq!(first.history.step_losses[..], full.history.step_losses[..6]);
    let mut seen = Vec::new();
    let rest = resume(
        dir.path(),
        &CectConfig::micro(),
        &train,
        &val,
        &micro_config(4),
        &mut |e| seen.push(e.epoch),
    )
    .unwrap();
    assert_eq!(seen, [2, 3]);
    assert_eq!(rest.history, full.history);
    assert_eq!(rest.model.params(), full.model.params());
    assert_eq!(rest.best.params(), full.best.params());
    for name in [LAST_CHECKPOINT, BEST_CHECKPOINT] {
        assert_eq!(
            std::fs::read(dir.path().join(name)).unwrap(),
            std::fs::read(full_dir.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let best = checkpoint::load(&dir.path().join(BEST_CHECKPOINT), &CectConfig::micro()).unwrap();
    assert_eq!(&best.records["head.bias"], full.best.params().get("head.bias").unwrap());

    let other = TrainConfig {
        initial_lr: 0.01,
        ..micro_config(4)
    };
    assert!(resume(dir.path(), &CectConfig::micro(), &train, &val, &other, &mut |_| {}).is_err());
    assert!(resume(
        dir.path(),
        &CectConfig::tiny(),
        &train,
        &val,
        &micro_config(4),
        &mut |_| {}
    )
    .is_err());
}

#[test]
fn divergence_is_reported_with_position() {
    let (train, val) = micro_sets(3);
    let cfg = TrainConfig {
        initial_lr: 1e30,
        ..micro_config(3)
    };
    let err = fit(
        Cect::new(CectConfig::micro(), 1).unwrap(),
        &train,
        &val,
        &cfg,
        None,
        &mut |_| {},
    )
    .unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("epoch") && msg.contains("step"), "{msg}");
    assert_eq!(err.class(), cect::ErrorClass::Runtime);
}

#[test]
fn config_validation() {
    let ok = TrainConfig::default();
    assert_eq!((ok.epochs, ok.initial_lr, ok.batch_size), (20, 0.003, 64));
    assert_eq!((ok.plateau.factor, ok.plateau.patience), (0.5, 5));
    ok.validate().unwrap();
    for bad in [
        TrainConfig {
            epochs: 0,
            ..ok.clone()
        },
        TrainConfig {
            initial_lr: 0.0,
            ..ok.clone()
        },
        TrainConfig {
            batch_size: 0,
            ..ok.clone()
        },
        TrainConfig {
            max_steps: Some(0),
            ..ok.clone()
        },
    ] {
        assert!(bad.validate().is_err());
    }
    let (train, _) = micro_sets(4);
    let empty = Dataset::from_samples(vec![], 32).unwrap();
    assert!(fit(
        Cect::new(CectConfig::micro(), 1).unwrap(),
        &train,
        &empty,
        &ok,
        None,
        &mut |_| {}
    )
    .is_err());
}
