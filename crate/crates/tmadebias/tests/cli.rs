//! End-to-end command tests through the compiled binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_tmadebias")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_json(path: &Path, value: serde_json::Value) {
    std::fs::write(path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
}

fn small_cohort_config() -> serde_json::Value {
    serde_json::json!({
        "seed": 5,
        "cohort": {
            "n_patients": 40,
            "msi_rate": 0.3,
            "tiles_per_spot": 2,
            "feature_dim": 8,
            "amplitudes": {"class": 2.0, "project": 2.0, "patient": 0.5, "glass": 0.5, "noise": 1.0},
            "projects": [
                {"id": "EPI", "prob_mss": 0.8, "prob_msi": 0.2},
                {"id": "HGU", "prob_mss": 0.2, "prob_msi": 0.8}
            ]
        },
        "train": {
            "batch_size": 32,
            "epochs": 1,
            "folds": 2,
            "monitor_every": 2,
            "dc_cap": 256,
            "model": {"fe_hidden": [16], "feature_dim": 8, "head_hidden": [8], "image_input_px": 16}
        },
        "metrics": {"pca_cap": 500}
    })
}

struct Env {
    #[allow(dead_code)]
    tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Env {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        Env { tmp, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn str(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

fn synth_small(env: &Env) {
    let cfg = env.path("config.json");
    write_json(&cfg, small_cohort_config());
    let out = run(&[
        "synth",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &env.str("cohort"),
    ]);
    assert_code(&out, 0);
}

#[test]
fn synth_writes_manifest_and_is_deterministic() {
    let env = Env::new();
    synth_small(&env);
    assert!(env.path("cohort/manifest.csv").exists());
    assert!(env.path("cohort/payloads.bin").exists());
    assert!(env.path("cohort/spec.json").exists());
    let first = std::fs::read(env.path("cohort/manifest.csv")).unwrap();
    let first_payloads = std::fs::read(env.path("cohort/payloads.bin")).unwrap();

    let out = run(&[
        "synth",
        "--config",
        env.path("config.json").to_str().unwrap(),
        "--out",
        &env.str("cohort2"),
    ]);
    assert_code(&out, 0);
    assert_eq!(first, std::fs::read(env.path("cohort2/manifest.csv")).unwrap());
    assert_eq!(
        first_payloads,
        std::fs::read(env.path("cohort2/payloads.bin")).unwrap()
    );
}

#[test]
fn synth_rejects_bad_msi_rate_with_json_error() {
    let env = Env::new();
    let mut cfg = small_cohort_config();
    cfg["cohort"]["msi_rate"] = serde_json::json!(1.5);
    let cfg_path = env.path("bad.json");
    write_json(&cfg_path, cfg);
    let out = run(&[
        "synth",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        &env.str("cohort"),
    ]);
    assert_code(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap();
    let parsed: serde_json::Value = serde_json::from_str(line).expect("stderr is JSON");
    assert_eq!(parsed["error"]["code"], 2);
    assert!(parsed["error"]["message"].as_str().unwrap().contains("msi_rate"));
}

#[test]
fn synth_rejects_unknown_config_keys() {
    let env = Env::new();
    let cfg_path = env.path("unknown.json");
    write_json(&cfg_path, serde_json::json!({"cohort": {"made_up_field": 3}}));
    let out = run(&[
        "synth",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        &env.str("cohort"),
    ]);
    assert_code(&out, 2);
}

#[test]
fn train_writes_run_directory_with_dc_columns() {
    let env = Env::new();
    synth_small(&env);
    let out = run(&[
        "train",
        "--cohort",
        &env.str("cohort"),
        "--config",
        env.path("config.json").to_str().unwrap(),
        "--out",
        &env.str("run"),
    ]);
    assert_code(&out, 0);
    for f in [
        "config.json",
        "folds.json",
        "audit.csv",
        "summary.json",
        "history_fold0.csv",
        "history_fold1.csv",
        "checkpoint_fold0_final.bin",
        "checkpoint_fold0_final.bin.json",
    ] {
        assert!(env.path("run").join(f).exists(), "missing {f}");
    }
    let history = std::fs::read_to_string(env.path("run/history_fold0.csv")).unwrap();
    let header = history.lines().next().unwrap();
    for col in ["dc_task", "dc_project", "dc_patient", "dc_glass"] {
        assert!(header.contains(col), "history header lacks {col}: {header}");
    }
}

#[test]
fn train_outputs_are_byte_reproducible() {
    let env = Env::new();
    synth_small(&env);
    let cfg = env.path("config.json").display().to_string();
    for dir in ["r1", "r2"] {
        assert_code(
            &run(&[
                "train", "--cohort", &env.str("cohort"), "--config", &cfg, "--out", &env.str(dir),
                "--ablate",
            ]),
            0,
        );
    }
    // everything except the wall-clock metadata must match byte for byte
    for f in [
        "audit.csv",
        "history_fold0.csv",
        "history_fold1.csv",
        "folds.json",
        "summary.json",
        "config.json",
        "checkpoint_fold0_final.bin",
        "checkpoint_fold1_final.bin",
    ] {
        assert_eq!(
            std::fs::read(env.path("r1").join(f)).unwrap(),
            std::fs::read(env.path("r2").join(f)).unwrap(),
            "{f} differs between identical runs"
        );
    }
}

#[test]
fn ablate_with_empty_bias_list_is_config_error() {
    let env = Env::new();
    synth_small(&env);
    let mut cfg = small_cohort_config();
    cfg["train"]["bias_names"] = serde_json::json!([]);
    let cfg_path = env.path("nobias.json");
    write_json(&cfg_path, cfg);
    let out = run(&[
        "train",
        "--cohort",
        &env.str("cohort"),
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        &env.str("run"),
        "--ablate",
    ]);
    assert_code(&out, 2);
}

#[test]
fn lambda_zero_ablation_matches_baseline_task_hash() {
    let env = Env::new();
    synth_small(&env);
    let cfg = env.path("config.json").display().to_string();
    assert_code(
        &run(&["train", "--cohort", &env.str("cohort"), "--config", &cfg, "--out", &env.str("base")]),
        0,
    );
    assert_code(
        &run(&[
            "train",
            "--cohort",
            &env.str("cohort"),
            "--config",
            &cfg,
            "--out",
            &env.str("abl0"),
            "--ablate",
            "--lambda",
            "0",
        ]),
        0,
    );
    let hash = |dir: &str| -> serde_json::Value {
        serde_json::from_str::<serde_json::Value>(
            &std::fs::read_to_string(env.path(dir).join("summary.json")).unwrap(),
        )
        .unwrap()["task_params_hash"]
            .clone()
    };
    assert_eq!(hash("base"), hash("abl0"));
}

#[test]
fn audit_requires_checkpoint_and_is_deterministic() {
    let env = Env::new();
    synth_small(&env);
    let cfg = env.path("config.json").display().to_string();

    let out = run(&[
        "audit",
        "--cohort",
        &env.str("cohort"),
        "--checkpoint",
        &env.str("nope.bin"),
        "--out",
        &env.str("audit.csv"),
    ]);
    assert_code(&out, 4);

    assert_code(
        &run(&["train", "--cohort", &env.str("cohort"), "--config", &cfg, "--out", &env.str("run")]),
        0,
    );
    let ckpt = env.str("run/checkpoint_fold0_final.bin");
    assert_code(
        &run(&[
            "audit", "--cohort", &env.str("cohort"), "--checkpoint", &ckpt, "--config", &cfg,
            "--out", &env.str("a1.csv"),
        ]),
        0,
    );
    assert_code(
        &run(&[
            "audit", "--cohort", &env.str("cohort"), "--checkpoint", &ckpt, "--config", &cfg,
            "--out", &env.str("a2.csv"),
        ]),
        0,
    );
    assert_eq!(
        std::fs::read(env.path("a1.csv")).unwrap(),
        std::fs::read(env.path("a2.csv")).unwrap()
    );
}

#[test]
fn eval_requires_fold_plan_and_counts_pca_points() {
    let env = Env::new();
    synth_small(&env);
    let cfg = env.path("config.json").display().to_string();

    std::fs::create_dir_all(env.path("empty_run")).unwrap();
    write_json(
        &env.path("empty_run/config.json"),
        serde_json::json!({"regime": "baseline", "train": small_cohort_config()["train"]}),
    );
    let out = run(&[
        "eval",
        "--run",
        &env.str("empty_run"),
        "--cohort",
        &env.str("cohort"),
    ]);
    assert_code(&out, 4);

    assert_code(
        &run(&["train", "--cohort", &env.str("cohort"), "--config", &cfg, "--out", &env.str("run")]),
        0,
    );
    assert_code(
        &run(&[
            "eval",
            "--run",
            &env.str("run"),
            "--cohort",
            &env.str("cohort"),
            "--config",
            &cfg,
            "--prevalence",
            "0.15",
        ]),
        0,
    );
    for f in ["metrics.json", "strata.csv", "pca.json", "predictions_fold0.csv"] {
        assert!(env.path("run/eval").join(f).exists(), "missing {f}");
    }
    let pca: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(env.path("run/eval/pca.json")).unwrap())
            .unwrap();
    // every patient is in exactly one validation fold: all tiles project
    let n_tiles = std::fs::read_to_string(env.path("cohort/manifest.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    let expected = n_tiles.min(500);
    assert_eq!(pca["n_points"], expected);
    assert_eq!(pca["points"].as_array().unwrap().len(), expected);

    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(env.path("run/eval/metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["prevalence"], 0.15);
    assert!(metrics["tile"]["auc"]["value"].is_number());
    assert!(metrics["patient"]["auc"]["value"].is_number());
}

#[test]
fn report_needs_two_runs_and_zeroes_deltas_for_identical_inputs() {
    let env = Env::new();
    synth_small(&env);
    let cfg = env.path("config.json").display().to_string();
    assert_code(
        &run(&["train", "--cohort", &env.str("cohort"), "--config", &cfg, "--out", &env.str("runA"), "--ablate"]),
        0,
    );

    let out = run(&["report", &env.str("runA"), "--out", &env.str("cmp.json")]);
    assert_code(&out, 2);

    // identical second run
    assert_code(
        &run(&["train", "--cohort", &env.str("cohort"), "--config", &cfg, "--out", &env.str("runB"), "--ablate"]),
        0,
    );
    assert_code(
        &run(&[
            "report",
            &env.str("runA"),
            &env.str("runB"),
            "--out",
            &env.str("cmp.json"),
        ]),
        0,
    );
    let cmp: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(env.path("cmp.json")).unwrap()).unwrap();
    for entry in cmp["dc_vs_reference"][0].as_array().unwrap() {
        assert_eq!(entry["delta"].as_f64().unwrap(), 0.0, "{entry}");
    }

    // baseline-vs-ablated comparison carries all three biases with real values
    assert_code(
        &run(&["train", "--cohort", &env.str("cohort"), "--config", &cfg, "--out", &env.str("runBase")]),
        0,
    );
    assert_code(
        &run(&[
            "report",
            &env.str("runBase"),
            &env.str("runA"),
            "--out",
            &env.str("cmp2.json"),
        ]),
        0,
    );
    let cmp: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(env.path("cmp2.json")).unwrap()).unwrap();
    let entries = cmp["dc_vs_reference"][0].as_array().unwrap();
    let biases: Vec<&str> = entries.iter().map(|e| e["bias"].as_str().unwrap()).collect();
    for b in ["glass", "patient", "project"] {
        assert!(biases.contains(&b), "missing bias {b} in {biases:?}");
    }
    for entry in entries {
        assert!(entry["reference_mean"].as_f64().is_some());
        assert!(entry["run_mean"].as_f64().is_some());
    }
}

#[test]
fn image_mode_synth_preprocess_and_train_roundtrip() {
    let env = Env::new();
    let mut cfg = small_cohort_config();
    cfg["cohort"]["mode"] = serde_json::json!("spot-image");
    cfg["cohort"]["n_patients"] = serde_json::json!(8);
    cfg["cohort"]["msi_rate"] = serde_json::json!(0.5);
    cfg["cohort"]["spots_per_patient"] = serde_json::json!(1);
    cfg["preprocess"] = serde_json::json!({"tile_px": 128, "out_px": 64});
    cfg["train"]["batch_size"] = serde_json::json!(16);
    cfg["train"]["augment"] = serde_json::json!({
        "max_rotate_deg": 90.0, "flip_p": 0.5, "max_warp": 0.2, "max_hue": 0.15
    });
    let cfg_path = env.path("img.json");
    write_json(&cfg_path, cfg);

    assert_code(
        &run(&[
            "synth",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            &env.str("imgcohort"),
        ]),
        0,
    );
    assert!(env.path("imgcohort/spots/spots.csv").exists());
    assert!(env.path("imgcohort/tiles").exists());

    assert_code(
        &run(&[
            "preprocess",
            "--spots",
            &env.str("imgcohort/spots"),
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            &env.str("prep"),
        ]),
        0,
    );
    assert!(env.path("prep/manifest.csv").exists());
    let manifest = std::fs::read_to_string(env.path("prep/manifest.csv")).unwrap();
    let a_tile_line = manifest.lines().nth(1).unwrap();
    // {patient}_{spot}_{mag}_{row}_{col} naming
    assert!(
        a_tile_line.contains("_x") && a_tile_line.contains("tiles/"),
        "unexpected manifest line: {a_tile_line}"
    );
    // the produced manifest loads as a cohort manifest
    let loaded = synthcohort::load_manifest(&env.path("prep")).unwrap();
    assert!(!loaded.tiles.is_empty());
    assert!(loaded
        .tiles
        .iter()
        .any(|t| t.magnification == synthcohort::Magnification::X0));

    // and the adversarial regime trains on it, with augmentation enabled
    assert_code(
        &run(&[
            "train",
            "--cohort",
            &env.str("prep"),
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            &env.str("imgrun"),
            "--ablate",
        ]),
        0,
    );
    assert!(env.path("imgrun/summary.json").exists());
}
