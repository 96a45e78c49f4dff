use cect::data::{split, synth_generate, Dataset, SplitSpec};
use cect::eval::{
    ablate, confusion, confusion_from_logits, in_constraint_set, mean_cross_entropy, metrics, run_experiment, sweep,
    AblationSpec, Blocks, ConfusionMatrix, ExperimentData, SweepSpec,
};
use cect::model::{Architecture, Branch, CectConfig, EnsembleCoefficients};
use cect::train::TrainConfig;
use cect::{Rng, Tensor};
use proptest::prelude::*;

fn labels_for(cm: &ConfusionMatrix) -> (Vec<usize>, Vec<usize>) {
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for (p, y, k) in [(1, 1, cm.tp), (1, 0, cm.fp), (0, 1, cm.fn_), (0, 0, cm.tn)] {
        pred.extend(std::iter::repeat_n(p, k as usize));
        truth.extend(std::iter::repeat_n(y, k as usize));
    }
    (pred, truth)
}

#[test]
fn reference_row_is_reproduced() {
    let (pred, truth) = labels_for(&ConfusionMatrix::new(348, 12, 14, 1007));
    let cm = confusion(&pred, &truth).unwrap();
    assert_eq!(cm, ConfusionMatrix::new(348, 12, 14, 1007));
    assert_eq!((cm.positives(), cm.negatives(), cm.misclassified()), (362, 1019, 26));
    let m = metrics(&cm).unwrap();
    let reference = [98.1, 98.6, 96.7, 96.1, 98.8, 96.4];
    for ((name, v), p) in ["ACC", "NPV", "PPV", "SEN", "SPE", "FOS"]
        .iter()
        .zip(m.values())
        .zip(reference)
    {
        let pct = 100.0 * v.unwrap();
        assert!((pct - p).abs() <= 0.05, "{name}: {pct:.4} vs {p}");
    }
}

#[test]
fn closed_form_cases() {
    let m = metrics(&ConfusionMatrix::new(5, 0, 0, 0)).unwrap();
    assert_eq!(
        (m.acc, m.ppv, m.sen, m.fos),
        (Some(1.0), Some(1.0), Some(1.0), Some(1.0))
    );
    assert_eq!((m.npv, m.spe), (None, None));
    let m = metrics(&ConfusionMatrix::new(3, 0, 0, 4)).unwrap();
    assert!(m.values().iter().all(|v| *v == Some(1.0)));
    let m = metrics(&ConfusionMatrix::new(25, 25, 25, 25)).unwrap();
    assert!(m.values().iter().all(|v| *v == Some(0.5)));
    assert_eq!(confusion(&[1; 5], &[1; 5]).unwrap(), ConfusionMatrix::new(5, 0, 0, 0));
}

#[test]
fn brute_force_recount() {
    let mut rng = Rng::new(11);
    for _ in 0..50 {
        let pred: Vec<usize> = (0..20).map(|_| rng.below(2) as usize).collect();
        let truth: Vec<usize> = (0..20).map(|_| rng.below(2) as usize).collect();
        let cm = confusion(&pred, &truth).unwrap();
        let count = |p, y| pred.iter().zip(&truth).filter(|&(&a, &b)| a == p && b == y).count() as u64;
        assert_eq!(
            cm,
            ConfusionMatrix::new(count(1, 1), count(1, 0), count(0, 1), count(0, 0))
        );
        assert_eq!(cm.total(), 20);
    }
}

#[test]
fn logits_tie_to_negative() {
    let logits = Tensor::new(vec![4, 2], vec![0.0, 0.0, -1.0, 1.0, 1.0, -1.0, 3.0, 3.0]).unwrap();
    assert_eq!(
        confusion_from_logits(&logits, &[1, 1, 0, 0]).unwrap(),
        ConfusionMatrix::new(1, 0, 1, 2)
    );
    assert!(confusion_from_logits(&Tensor::zeros(&[2, 3]), &[0, 1]).is_err());
}

#[test]
fn cross_entropy_closed_forms() {
    let uniform = Tensor::zeros(&[4, 2]);
    assert!((mean_cross_entropy(&uniform, &[0, 1, 1, 0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    let sure = Tensor::new(vec![1, 2], vec![20.0, -20.0]).unwrap();
    assert!(mean_cross_entropy(&sure, &[0]).unwrap() < 1e-8);
    assert!(mean_cross_entropy(&sure, &[2]).is_err());
}

proptest! {
    #[test]
    fn metric_identities(tp in 0u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500) {
        let cm = ConfusionMatrix::new(tp, fp, fn_, tn);
        prop_assume!(cm.total() > 0);
        let m = metrics(&cm).unwrap();
        let (p, n) = (cm.positives() as f64, cm.negatives() as f64);
        let acc = m.acc.unwrap();
        let weighted = m.sen.unwrap_or(0.0) * p + m.spe.unwrap_or(0.0) * n;
        prop_assert!((acc - weighted / (p + n)).abs() < 1e-12);
        if let (Some(ppv), Some(sen), Some(fos)) = (m.ppv, m.sen, m.fos) {
            if ppv + sen > 0.0 {
                prop_assert!((fos - 2.0 * ppv * sen / (ppv + sen)).abs() < 1e-12);
            }
        }
        for v in m.values().into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let (pred, truth) = labels_for(&cm);
        prop_assert_eq!(metrics(&confusion(&pred, &truth).unwrap()).unwrap(), m);
    }
}

#[test]
fn standard_sweep_groups() {
    let spec = SweepSpec::default();
    assert_eq!(spec.groups.len(), 7);
    assert!(spec.groups.iter().all(in_constraint_set));
    let last = spec.groups[6].as_array();
    assert!(last.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    assert!(!in_constraint_set(&EnsembleCoefficients::new(0.5, 0.25, 0.25).unwrap()));
    assert!(!in_constraint_set(&EnsembleCoefficients::new(0.1, 0.2, 0.7).unwrap()));
    assert!(SweepSpec { groups: vec![] }.validate().is_err());
}

#[test]
fn ablation_rows_map_to_models() {
    let rows = AblationSpec::standard();
    assert_eq!(rows.len(), 7);
    let base = CectConfig::tiny();
    let cfgs: Vec<CectConfig> = rows.iter().map(|r| r.model_config(&base).unwrap()).collect();
    for (i, b) in Branch::ALL.into_iter().enumerate() {
        assert_eq!(cfgs[i].architecture, Architecture::EncoderOnly(b));
    }
    assert_eq!(cfgs[3].architecture, Architecture::TransformerOnly);
    assert_eq!(cfgs[4].active_branches(), vec![Branch::Sd3]);
    assert_eq!(cfgs[4].enabled_branches, [false, false, true]);
    assert_eq!(rows[4].scales, [false, false, true, true]);
    assert_eq!(cfgs[5].active_branches(), vec![Branch::Sd2, Branch::Sd3]);
    assert_eq!(cfgs[6], base);

    let mut bad = rows[6].clone();
    bad.blocks = Blocks {
        ceb: false,
        tdb: true,
        tcb: true,
    };
    assert!(bad.model_config(&base).is_err());
    let mut bad = rows[0].clone();
    bad.scales = [true, true, false, false];
    assert!(bad.model_config(&base).is_err());
    let mut bad = rows[5].clone();
    bad.scales = [true, true, true, true];
    assert!(bad.model_config(&base).is_err());
}

fn micro_data(seed: u64) -> ExperimentData {
    let dir = tempfile::tempdir().unwrap();
    let m = synth_generate(dir.path(), 6, 32, seed).unwrap();
    let s = split(&m, &SplitSpec::three_way(0.5, 0.25, 0.25, seed).unwrap(), None).unwrap();
    let load = |m| Dataset::load(m, 32).unwrap();
    ExperimentData {
        train: load(&s.train),
        val: load(&s.val),
        test: load(&s.test),
    }
}

fn quick_train(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 4,
        initial_lr: 1e-3,
        seed,
        ..Default::default()
    }
}

#[test]
fn sweep_is_deterministic_and_keeps_partial_results() {
    let data = micro_data(3);
    let model = CectConfig::micro();
    let tc = quick_train(5);
    let groups = SweepSpec {
        groups: vec![
            EnsembleCoefficients::new(0.8, 0.1, 0.1).unwrap(),
            EnsembleCoefficients::new(0.2, 0.2, 0.6).unwrap(),
        ],
    };
    let a = sweep(&model, &tc, &data, &groups, None, &mut |_, _| {}).unwrap();
    let b = sweep(&model, &tc, &data, &groups, None, &mut |_, _| {}).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0].test, a[1].test);

    let single = SweepSpec {
        groups: vec![groups.groups[1]],
    };
    let one = sweep(&model, &tc, &data, &single, None, &mut |_, _| {}).unwrap();
    let (_, direct) = run_experiment(
        &model.clone().with_coefficients(groups.groups[1]),
        &tc,
        &data,
        None,
        &mut |_| {},
    )
    .unwrap();
    assert_eq!(one[0].test.as_ref(), Some(&direct.test));
    assert_eq!(one[0], a[1]);

    let restricted = CectConfig {
        enabled_branches: [true, true, false],
        ..CectConfig::micro()
    };
    let mixed = SweepSpec {
        groups: vec![
            EnsembleCoefficients::new(0.5, 0.5, 0.0).unwrap(),
            EnsembleCoefficients::new(0.1, 0.1, 0.8).unwrap(),
        ],
    };
    let rows = sweep(&restricted, &tc, &data, &mixed, None, &mut |_, _| {}).unwrap();
    assert!(rows[0].error.is_none() && rows[0].test.is_some());
    assert!(rows[1].error.as_ref().unwrap().contains("disabled"));
}

#[test]
fn full_ablation_row_replays_the_main_run() {
    let data = micro_data(4);
    let model = CectConfig::micro();
    let tc = quick_train(9);
    let specs = AblationSpec::standard();
    let rows = ablate(&model, &tc, &data, &specs[3..], None, &mut |_, _| {}).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(
        rows.iter().all(|r| r.error.is_none()),
        "{:?}",
        rows.iter().map(|r| &r.error).collect::<Vec<_>>()
    );
    let (_, main) = run_experiment(&model, &tc, &data, None, &mut |_| {}).unwrap();
    let full = rows.last().unwrap();
    assert_eq!(full.history.as_ref().unwrap().step_losses, main.history.step_losses);
    assert_eq!(full.accuracy(), main.test.metrics.acc);
    let mut bad = specs[0].clone();
    bad.coefficients = Some(EnsembleCoefficients::equal());
    assert!(ablate(&model, &tc, &data, &[bad], None, &mut |_, _| {}).is_err());
}
