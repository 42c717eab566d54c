//! End-to-end behavior of the training regimes on small synthetic cohorts.

use debias_trainer::{
    audit_biases, split_folds, train_fold, FoldTrainer, ModelConfig, Regime, TileDataset,
    TrainConfig,
};
use ndarray::Array2;
use neuralcore::{Batch, ModelBundle, OptimizerKind};
use synthcohort::{generate_cohort, Amplitudes, ClassLabel, CohortSpec, ProjectSpec};

fn confounded_spec(n_patients: usize, seed: u64) -> CohortSpec {
    CohortSpec {
        n_patients,
        msi_rate: 0.2,
        projects: vec![
            ProjectSpec {
                id: "EPI".into(),
                prob_mss: 0.9,
                prob_msi: 0.1,
            },
            ProjectSpec {
                id: "HGU".into(),
                prob_mss: 0.1,
                prob_msi: 0.9,
            },
        ],
        glasses_per_project: 4,
        spots_per_patient: 2,
        tiles_per_spot: 2,
        feature_dim: 16,
        amplitudes: Amplitudes {
            class: 1.5,
            project: 1.5,
            patient: 0.5,
            glass: 0.5,
            noise: 1.0,
        },
        seed,
        ..CohortSpec::default()
    }
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 64,
        epochs: 2,
        folds: 3,
        monitor_every: 5,
        seed,
        dc_cap: 512,
        model: ModelConfig {
            fe_hidden: vec![32],
            feature_dim: 24,
            head_hidden: vec![16],
            image_input_px: 16,
        },
        ..TrainConfig::default()
    }
}

fn dataset(spec: &CohortSpec, biases: &[&str], model: &ModelConfig) -> TileDataset {
    let cohort = generate_cohort(spec).unwrap();
    let names: Vec<String> = biases.iter().map(|s| s.to_string()).collect();
    TileDataset::from_records(&cohort.tiles, &names, model).unwrap()
}

#[test]
fn lambda_zero_reproduces_baseline_bit_exactly() {
    let spec = confounded_spec(60, 5);
    let config = TrainConfig {
        lambda: 0.0,
        ..small_config(11)
    };
    let ds = dataset(&spec, &["project", "patient", "glass"], &config.model);
    let plan = split_folds(&ds.patients(), config.folds, config.seed).unwrap();

    let baseline = train_fold(&ds, &plan.folds[0], 0, &config, Regime::Baseline).unwrap();
    let ablated = train_fold(&ds, &plan.folds[0], 0, &config, Regime::BiasAblated).unwrap();

    assert_eq!(
        ModelBundle::module_hash(&baseline.bundle.fe),
        ModelBundle::module_hash(&ablated.bundle.fe),
        "extractor parameters must match bit-exactly at lambda = 0"
    );
    assert_eq!(
        ModelBundle::module_hash(&baseline.bundle.msi_head),
        ModelBundle::module_hash(&ablated.bundle.msi_head)
    );
}

#[test]
fn zero_task_learning_rate_freezes_task_parameters() {
    let spec = confounded_spec(40, 6);
    let config = TrainConfig {
        lr_task: 0.0,
        epochs: 1,
        ..small_config(3)
    };
    let ds = dataset(&spec, &["project"], &config.model);
    let plan = split_folds(&ds.patients(), config.folds, config.seed).unwrap();

    let init = FoldTrainer::new(
        ds.feature_dim,
        &[("project".into(), 2)],
        &config,
        Regime::Baseline,
        synthcohort::streams::substream_seed(config.seed, "model_init", 0),
    )
    .unwrap();
    let before_fe = ModelBundle::module_hash(&init.bundle.fe);
    let before_msi = ModelBundle::module_hash(&init.bundle.msi_head);

    let result = train_fold(&ds, &plan.folds[0], 0, &config, Regime::Baseline).unwrap();
    assert_eq!(before_fe, ModelBundle::module_hash(&result.bundle.fe));
    assert_eq!(before_msi, ModelBundle::module_hash(&result.bundle.msi_head));
}

#[test]
fn separable_cohort_reaches_high_training_accuracy() {
    let mut spec = confounded_spec(80, 7);
    spec.amplitudes = Amplitudes {
        class: 4.0,
        project: 0.0,
        patient: 0.0,
        glass: 0.0,
        noise: 0.5,
    };
    spec.projects = vec![
        ProjectSpec {
            id: "EPI".into(),
            prob_mss: 0.5,
            prob_msi: 0.5,
        },
        ProjectSpec {
            id: "HGU".into(),
            prob_mss: 0.5,
            prob_msi: 0.5,
        },
    ];
    let config = TrainConfig {
        epochs: 3,
        ..small_config(13)
    };
    let ds = dataset(&spec, &["project"], &config.model);
    let plan = split_folds(&ds.patients(), config.folds, config.seed).unwrap();
    let result = train_fold(&ds, &plan.folds[0], 0, &config, Regime::Baseline).unwrap();

    let train_idx = ds.indices_for_patients(&plan.folds[0].train_patients);
    let scores =
        debias_trainer::predict_scores(&result.bundle, &ds, &train_idx, config.batch_size)
            .unwrap();
    let correct = train_idx
        .iter()
        .zip(scores.iter())
        .filter(|(&i, &s)| (s >= 0.5) == (ds.labels[i] == 1))
        .count();
    let acc = correct as f64 / train_idx.len() as f64;
    assert!(acc >= 0.95, "training accuracy {acc}");
}

fn toy_batch(with_mss: bool) -> Batch {
    // 8 rows, feature dim 4, one binary bias
    let inputs = Array2::from_shape_fn((8, 4), |(i, j)| ((i * 5 + j * 3) % 7) as f64 / 3.0 - 1.0);
    let labels = if with_mss {
        vec![0, 0, 0, 0, 1, 1, 0, 0]
    } else {
        vec![1; 8]
    };
    let bias = vec![0, 1, 0, 1, 0, 1, 0, 1];
    Batch {
        inputs,
        labels,
        bias_values: vec![bias],
        tile_ids: (0..8).map(|i| format!("t{i}")).collect(),
    }
}

#[test]
fn no_conditioning_rows_skips_adversarial_phases() {
    let config = TrainConfig {
        bias_names: vec!["project".into()],
        ..small_config(1)
    };
    let mut trainer = FoldTrainer::new(
        4,
        &[("project".into(), 2)],
        &config,
        Regime::BiasAblated,
        9,
    )
    .unwrap();
    let be_hash = ModelBundle::module_hash(&trainer.bundle.be_heads[0]);
    let outcome = trainer.step(&toy_batch(false), false).unwrap();
    assert_eq!(outcome.adv_rows, 0);
    assert_eq!(outcome.loss_be, vec![None]);
    assert_eq!(
        be_hash,
        ModelBundle::module_hash(&trainer.bundle.be_heads[0]),
        "bias head must stay untouched without conditioning rows"
    );
}

#[test]
fn phase_two_freezes_extractor_and_task_head() {
    let config = TrainConfig {
        lr_task: 0.0, // isolate phases 2-3
        bias_names: vec!["project".into()],
        optimizer: OptimizerKind::Sgd { momentum: 0.0 },
        ..small_config(1)
    };
    let mut trainer = FoldTrainer::new(
        4,
        &[("project".into(), 2)],
        &config,
        Regime::BiasAblated,
        10,
    )
    .unwrap();
    let msi_hash = ModelBundle::module_hash(&trainer.bundle.msi_head);
    let be_hash = ModelBundle::module_hash(&trainer.bundle.be_heads[0]);
    let outcome = trainer.step(&toy_batch(true), false).unwrap();
    assert!(outcome.adv_rows >= 2);
    // task head untouched by phases 2-3 (phase 1 had lr 0)
    assert_eq!(msi_hash, ModelBundle::module_hash(&trainer.bundle.msi_head));
    // bias head did move in phase 2
    assert_ne!(be_hash, ModelBundle::module_hash(&trainer.bundle.be_heads[0]));
}

#[test]
fn phase_three_reduces_bias_correlation_on_a_fixed_batch() {
    // small adversarial ascent must strictly decrease corr^2(b, b_hat)
    let config = TrainConfig {
        lr_task: 0.0,
        lr_be: 0.0,
        lr_adv: 0.05,
        lambda: 1.0,
        bias_names: vec!["project".into()],
        optimizer: OptimizerKind::Sgd { momentum: 0.0 },
        ..small_config(1)
    };
    let mut trainer = FoldTrainer::new(
        4,
        &[("project".into(), 2)],
        &config,
        Regime::BiasAblated,
        77,
    )
    .unwrap();
    let batch = toy_batch(true);

    let corr_before = -trainer.step(&batch, false).unwrap().loss_be[0].unwrap();
    // second step measures the phase-2 loss on features already pushed by
    // the previous phase 3 (heads frozen at lr_be = 0)
    let corr_after = -trainer.step(&batch, false).unwrap().loss_be[0].unwrap();
    assert!(
        corr_after < corr_before,
        "corr^2 must drop: {corr_before} -> {corr_after}"
    );
}

#[test]
fn full_batch_switch_runs_adversarial_phases_without_conditioning_rows() {
    let config = TrainConfig {
        adv_on_full_batch: true,
        bias_names: vec!["project".into()],
        ..small_config(1)
    };
    let mut trainer = FoldTrainer::new(
        4,
        &[("project".into(), 2)],
        &config,
        Regime::BiasAblated,
        9,
    )
    .unwrap();
    // every row is MSI-H; the conditioned path would skip, the full-batch
    // switch must not
    let outcome = trainer.step(&toy_batch(false), false).unwrap();
    assert_eq!(outcome.adv_rows, 8);
    assert!(outcome.loss_be[0].is_some());
}

#[test]
fn patience_stops_training_when_validation_loss_plateaus() {
    let spec = confounded_spec(40, 6);
    let config = TrainConfig {
        lr_task: 0.0, // validation loss cannot improve
        lr_be: 0.0,
        lr_adv: 0.0,
        epochs: 6,
        patience: Some(1),
        ..small_config(3)
    };
    let ds = dataset(&spec, &["project"], &config.model);
    let plan = split_folds(&ds.patients(), config.folds, config.seed).unwrap();
    let result = train_fold(&ds, &plan.folds[0], 0, &config, Regime::Baseline).unwrap();
    assert_eq!(result.epochs_run, 2, "plateau should stop after the patience window");
    assert_eq!(result.snapshots.len(), 2);
}

#[test]
fn single_category_bias_contributes_zero_loss_and_training_proceeds() {
    let config = TrainConfig {
        bias_names: vec!["project".into()],
        ..small_config(1)
    };
    let mut trainer = FoldTrainer::new(
        4,
        &[("project".into(), 2)],
        &config,
        Regime::BiasAblated,
        12,
    )
    .unwrap();
    let mut batch = toy_batch(true);
    batch.bias_values[0] = vec![1; 8]; // one category present
    let outcome = trainer.step(&batch, false).unwrap();
    assert_eq!(outcome.loss_be[0], Some(0.0));
}

#[test]
fn baseline_on_confounded_cohort_absorbs_project_bias() {
    // weak visual project effect, strong class confounding: the initial
    // features carry little project signal, the trained ones inherit it
    // through the class direction
    let mut spec = confounded_spec(120, 21);
    spec.amplitudes.project = 0.4;
    spec.amplitudes.class = 2.0;
    spec.projects[0].prob_mss = 0.95;
    spec.projects[0].prob_msi = 0.05;
    spec.projects[1].prob_mss = 0.05;
    spec.projects[1].prob_msi = 0.95;
    let config = TrainConfig {
        epochs: 3,
        monitor_every: 1,
        batch_size: 32,
        ..small_config(17)
    };
    let ds = dataset(&spec, &["project", "patient", "glass"], &config.model);
    let plan = split_folds(&ds.patients(), config.folds, config.seed).unwrap();
    let result = train_fold(&ds, &plan.folds[0], 0, &config, Regime::Baseline).unwrap();

    let first_dc = result.history.rows.first().unwrap().dc_bias[0];
    let last_dc = result.history.rows.last().unwrap().dc_bias[0];
    assert!(
        last_dc >= 2.0 * first_dc,
        "project dc should at least double: {first_dc} -> {last_dc}"
    );
}

#[test]
fn task_dependence_grows_across_epochs_on_separable_cohort() {
    let mut spec = confounded_spec(100, 31);
    spec.amplitudes = Amplitudes {
        class: 2.0,
        project: 0.0,
        patient: 0.0,
        glass: 0.0,
        noise: 1.0,
    };
    spec.projects = vec![
        ProjectSpec {
            id: "EPI".into(),
            prob_mss: 0.5,
            prob_msi: 0.5,
        },
        ProjectSpec {
            id: "HGU".into(),
            prob_mss: 0.5,
            prob_msi: 0.5,
        },
    ];
    let config = TrainConfig {
        epochs: 3,
        monitor_every: 1,
        ..small_config(19)
    };
    let ds = dataset(&spec, &["project"], &config.model);
    let plan = split_folds(&ds.patients(), config.folds, config.seed).unwrap();
    let result = train_fold(&ds, &plan.folds[0], 0, &config, Regime::Baseline).unwrap();

    let train_idx = ds.indices_for_patients(&plan.folds[0].train_patients);
    let batches_per_epoch = train_idx.len().div_ceil(config.batch_size);
    let epoch_end_dc: Vec<f64> = (0..config.epochs)
        .map(|e| {
            let end_iter = (e + 1) * batches_per_epoch - 1;
            result
                .history
                .rows
                .iter()
                .rev()
                .find(|r| r.iter <= end_iter)
                .unwrap()
                .dc_task
        })
        .collect();
    for w in epoch_end_dc.windows(2) {
        assert!(
            w[1] >= w[0],
            "epoch-end task dc must not decrease: {epoch_end_dc:?}"
        );
    }
}

#[test]
fn ablation_halves_conditioned_project_dependence() {
    let mut spec = confounded_spec(150, 41);
    spec.amplitudes.project = 3.0;
    let config = TrainConfig {
        epochs: 3,
        batch_size: 32,
        ..small_config(23)
    };
    let ds = dataset(&spec, &["project", "patient", "glass"], &config.model);
    let plan = split_folds(&ds.patients(), config.folds, config.seed).unwrap();

    let baseline = train_fold(&ds, &plan.folds[0], 0, &config, Regime::Baseline).unwrap();
    let ablated = train_fold(&ds, &plan.folds[0], 0, &config, Regime::BiasAblated).unwrap();

    let dc_of = |bundle: &ModelBundle| {
        let rows = audit_biases(
            bundle,
            &ds,
            &["project".to_string()],
            "m",
            ClassLabel::Mss,
            config.dc_cap,
            1234,
            config.batch_size,
        )
        .unwrap();
        rows.iter()
            .find(|r| r.subgroup == "class=MSS" && r.variable == "project")
            .unwrap()
            .dc
            .unwrap()
    };
    let base_dc = dc_of(&baseline.bundle);
    let abl_dc = dc_of(&ablated.bundle);
    assert!(
        abl_dc <= 0.5 * base_dc,
        "conditioned project dc {abl_dc} vs baseline {base_dc}"
    );
}

#[test]
fn ablation_is_harmless_without_planted_bias() {
    let mut spec = confounded_spec(120, 51);
    spec.projects = vec![
        ProjectSpec {
            id: "EPI".into(),
            prob_mss: 0.5,
            prob_msi: 0.5,
        },
        ProjectSpec {
            id: "HGU".into(),
            prob_mss: 0.5,
            prob_msi: 0.5,
        },
    ];
    spec.amplitudes = Amplitudes {
        class: 2.5,
        project: 0.0,
        patient: 0.0,
        glass: 0.0,
        noise: 1.0,
    };
    let config = TrainConfig {
        epochs: 3,
        ..small_config(29)
    };
    let ds = dataset(&spec, &["project", "patient", "glass"], &config.model);
    let plan = split_folds(&ds.patients(), config.folds, config.seed).unwrap();

    let balanced_acc = |regime| -> f64 {
        let result = train_fold(&ds, &plan.folds[0], 0, &config, regime).unwrap();
        let val_idx = ds.indices_for_patients(&plan.folds[0].validation_patients);
        let scores =
            debias_trainer::predict_scores(&result.bundle, &ds, &val_idx, config.batch_size)
                .unwrap();
        let (mut tp, mut tn, mut pos, mut neg) = (0.0, 0.0, 0.0, 0.0);
        for (&i, &s) in val_idx.iter().zip(scores.iter()) {
            if ds.labels[i] == 1 {
                pos += 1.0;
                if s >= 0.5 {
                    tp += 1.0;
                }
            } else {
                neg += 1.0;
                if s < 0.5 {
                    tn += 1.0;
                }
            }
        }
        (tp / pos + tn / neg) / 2.0
    };
    let base = balanced_acc(Regime::Baseline);
    let ablated = balanced_acc(Regime::BiasAblated);
    assert!(
        (base - ablated).abs() < 0.05,
        "balanced accuracy drifted: baseline {base} vs ablated {ablated}"
    );
}

#[test]
fn audit_on_noise_features_reports_independence() {
    // pure-noise payloads, untrained extractor: every dependence is small
    let mut spec = confounded_spec(170, 61);
    spec.amplitudes = Amplitudes {
        class: 0.0,
        project: 0.0,
        patient: 0.0,
        glass: 0.0,
        noise: 1.0,
    };
    spec.tiles_per_spot = 3;
    let config = small_config(31);
    let ds = dataset(&spec, &["project", "glass"], &config.model);
    assert!(ds.len() >= 1000);
    let bundle = ModelBundle::init(ds.feature_dim, &[32], 24, &[16], 2, &[], 3);
    let rows = audit_biases(
        &bundle,
        &ds,
        &["project".to_string(), "glass".to_string()],
        "noise",
        ClassLabel::Mss,
        2048,
        7,
        config.batch_size,
    )
    .unwrap();
    for r in rows.iter().filter(|r| r.subgroup == "all") {
        let dc = r.dc.unwrap();
        assert!(dc < 0.05, "{}: dc {dc}", r.variable);
    }
}

#[test]
fn audit_of_identity_features_on_project_onehot_is_one() {
    // payloads ARE the one-hot of project; identity extractor passes them through
    let spec = CohortSpec {
        n_patients: 30,
        msi_rate: 0.3,
        feature_dim: 2,
        amplitudes: Amplitudes {
            class: 0.0,
            project: 0.0,
            patient: 0.0,
            glass: 0.0,
            noise: 1.0,
        },
        seed: 3,
        ..CohortSpec::default()
    };
    let cohort = generate_cohort(&spec).unwrap();
    let mut tiles = cohort.tiles.clone();
    for t in &mut tiles {
        let onehot = if t.project_id == "PRJ-A" {
            vec![1.0f32, 0.0]
        } else {
            vec![0.0, 1.0]
        };
        t.payload = synthcohort::TilePayload::Features(onehot);
    }
    let ds = TileDataset::from_records(
        &tiles,
        &["project".to_string()],
        &ModelConfig::default(),
    )
    .unwrap();

    let mut bundle = ModelBundle::init(2, &[], 2, &[], 2, &[], 0);
    bundle.fe = neuralcore::MlpParams::zeros(&[2, 2]);
    bundle.fe.layers[0].weights[[0, 0]] = 1.0;
    bundle.fe.layers[0].weights[[1, 1]] = 1.0;

    let rows = audit_biases(
        &bundle,
        &ds,
        &["project".to_string()],
        "identity",
        ClassLabel::Mss,
        2048,
        1,
        64,
    )
    .unwrap();
    let dc = rows
        .iter()
        .find(|r| r.subgroup == "all" && r.variable == "project")
        .unwrap()
        .dc
        .unwrap();
    assert!((dc - 1.0).abs() < 1e-9, "dc = {dc}");
}

#[test]
fn tiny_subgroups_are_marked_not_computable() {
    let spec = confounded_spec(30, 71);
    let config = small_config(37);
    // patient subgroups have few tiles; force some below 2 rows
    let cohort = generate_cohort(&spec).unwrap();
    let mut tiles = cohort.tiles;
    // keep exactly one tile of the first patient
    let first = tiles[0].patient_id.clone();
    let mut kept_one = false;
    tiles.retain(|t| {
        if t.patient_id == first {
            if kept_one {
                return false;
            }
            kept_one = true;
        }
        true
    });
    let ds = TileDataset::from_records(
        &tiles,
        &["project".to_string(), "patient".to_string()],
        &config.model,
    )
    .unwrap();
    let bundle = ModelBundle::init(ds.feature_dim, &[16], 8, &[8], 2, &[], 5);
    let rows = audit_biases(
        &bundle,
        &ds,
        &["project".to_string(), "patient".to_string()],
        "m",
        ClassLabel::Mss,
        512,
        1,
        64,
    )
    .unwrap();
    let row = rows
        .iter()
        .find(|r| r.subgroup == format!("patient={first}"))
        .unwrap();
    assert_eq!(row.dc, None);
    assert_eq!(row.n, 1);
}
