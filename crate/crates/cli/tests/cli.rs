use std::path::Path;
use std::process::Command;

use mflab_cli::sweep::{expand, Variation};
use mflab_cli::{run_experiment, CliError, ExperimentConfig, Manifest, RunStatus};
use mflab_core::embedding::build_embedding;
use mflab_core::io::{codes_from_container, finite_trajectory_from_container, Container};
use mflab_core::Weights64;

fn base(kind: &str, out: &Path) -> String {
    format!(
        r#"{{
  "kind": "{kind}",
  "seed": 3,
  "arch": {{ "input_dim": 2, "widths": [10, 8, 1] }},
  "data": {{ "teacher": {{ "kind": "tanh-linear", "weights": [3.0, -2.0] }}, "panel_size": 32, "finite": true }},
  "embedding": {{ "scheme": "bidiverse", "seed": 2 }},
  "sgd": {{ "eps": 0.02, "steps": 50, "log_every": 5, "batch": "full" }},
  "integration": {{ "h": 0.02, "horizon": 1.0, "scheme": "euler", "checkpoint_every": 5 }},
  "out_dir": "{}"
}}"#,
        out.display()
    )
}

fn config(kind: &str, out: &Path) -> ExperimentConfig {
    ExperimentConfig::from_json(&base(kind, out)).unwrap()
}

fn violations(c: &ExperimentConfig) -> Vec<String> {
    match c.validate() {
        Err(CliError::Validation(v)) => v,
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn validation_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config("couple", dir.path());
    c.arch.widths = vec![10, 8, 2];
    c.integration.as_mut().unwrap().h = -0.1;
    c.sgd.as_mut().unwrap().eps = -1.0;
    let v = violations(&c);
    let has = |needle: &str| v.iter().any(|m| m.contains(needle));
    assert!(has("n_L must be 1"), "{v:?}");
    assert!(has("integration.h"), "{v:?}");
    assert!(has("sgd.eps"), "{v:?}");
    assert!(matches!(run_experiment(&c), Err(CliError::Validation(_))));
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());

    let mut c = config("train-mf", dir.path());
    c.schedules = serde_json::from_str(r#"{ "kind": "exponential-decay", "amplitude": 1.0, "rate": 0.5 }"#).unwrap();
    assert!(violations(&c).iter().any(|m| m.contains("xi_L identically 1")));
    c.kind = mflab_cli::ExperimentKind::Couple;
    c.validate().unwrap();
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = base("couple", dir.path()).replace("\"seed\": 3,", "\"seed\": 3, \"sede\": 4,");
    assert!(matches!(ExperimentConfig::from_json(&text), Err(CliError::Validation(_))));
    let text = base("couple", dir.path()).replace("\"h\": 0.02", "\"h\": 0.02, \"stpe\": 1");
    assert!(ExperimentConfig::from_json(&text).is_err());
}

#[test]
fn per_layer_schedules_and_alignment() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config("couple", dir.path());
    c.schedules = serde_json::from_str(r#"[{"kind":"constant","value":1.0},{"kind":"constant","value":0.5},{"kind":"constant","value":1.0}]"#)
        .unwrap();
    c.validate().unwrap();
    c.schedules = serde_json::from_str(r#"[{"kind":"constant","value":1.0}]"#).unwrap();
    assert!(violations(&c).iter().any(|m| m.starts_with("schedules")));
    let mut c = config("couple", dir.path());
    c.sgd.as_mut().unwrap().log_every = 3;
    assert!(violations(&c).iter().any(|m| m.contains("no mean-field checkpoint")));
}

#[test]
fn zero_steps_snapshot_is_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config("train-finite", dir.path());
    c.sgd.as_mut().unwrap().steps = 0;
    let out = run_experiment(&c).unwrap();
    let arch = c.arch.build().unwrap();
    let codes = codes_from_container(&Container::read_file(dir.path().join("codes.txt")).unwrap()).unwrap();
    let (_, init): (_, Weights64) = build_embedding(&arch, &c.embedding).unwrap().weights_on(&codes).unwrap();
    let traj = finite_trajectory_from_container::<f64>(&Container::read_file(dir.path().join("finite_snapshots.txt")).unwrap(), &arch)
        .unwrap();
    assert_eq!(traj.snapshots.len(), 1);
    assert_eq!(traj.snapshots[0].weights, init);
    assert_eq!(Manifest::read(&out.manifest).unwrap().status, RunStatus::Ok);
}

#[test]
fn identical_runs_give_identical_csvs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for kind in ["couple", "train-mf"] {
        let mut ca = config(kind, a.path());
        ca.data.finite = false;
        ca.sgd.as_mut().unwrap().batch = mflab_core::net::BatchMode::Single;
        let mut cb = ca.clone();
        cb.out_dir = Some(b.path().to_path_buf());
        cb.threads = Some(3);
        let (ra, rb) = (run_experiment(&ca).unwrap(), run_experiment(&cb).unwrap());
        for (x, y) in ra.metrics.iter().zip(&rb.metrics) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
        }
    }
}

#[test]
fn full_batch_euler_coupling_column_vanishes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&config("couple", dir.path())).unwrap();
    let csv = std::fs::read_to_string(&out.metrics[0]).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().ends_with(",coupling_dist"));
    let mut rows = 0;
    for line in lines {
        let d: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(d <= 1e-10, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 11);
}

#[test]
fn tracer_coupling_writes_population_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config("couple", dir.path());
    c.population = Some(vec![40, 40, 1]);
    c.integration.as_mut().unwrap().scheme = mflab_core::mf::Scheme::Rk4;
    let out = run_experiment(&c).unwrap();
    assert!(dir.path().join("population_codes.txt").exists());
    let csv = std::fs::read_to_string(&out.metrics[0]).unwrap();
    let last: f64 = csv.lines().last().unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(last > 0.0 && last < 1.0);
}

#[test]
fn overflow_keeps_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config("train-finite", dir.path());
    c.loss = mflab_cli::config::LossConfig::HalfSquared;
    c.sgd.as_mut().unwrap().eps = 1e300;
    let err = run_experiment(&c).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    let m = Manifest::read(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(m.status, RunStatus::Overflow);
    assert!(m.error.unwrap().contains("overflow"));
    for name in m.metrics.iter().chain(&m.snapshots) {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn sweep_expands_the_cartesian_product() {
    let dir = tempfile::tempdir().unwrap();
    let c = config("couple", dir.path());
    let vars: Vec<Variation> =
        vec!["seed=[1, 2, 3]".parse().unwrap(), "arch.widths=[[6, 6, 1], [12, 12, 1]]".parse().unwrap()];
    let configs = expand(&c, &vars, dir.path()).unwrap();
    assert_eq!(configs.len(), 6);
    assert_eq!(configs[5].seed, 3);
    assert_eq!(configs[5].arch.widths, vec![12, 12, 1]);
    assert_eq!(configs[5].out_dir.as_deref(), Some(dir.path().join("run_005").as_path()));
    let bad: Vec<Variation> = vec!["arch.widths=[[6, 2]]".parse().unwrap()];
    assert!(matches!(expand(&c, &bad, dir.path()), Err(CliError::Validation(_))));
    assert!("seed".parse::<Variation>().is_err());
    assert!("seed=3".parse::<Variation>().is_err());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, base("grad-check", &dir.path().join("run"))).unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, base("grad-check", &dir.path().join("run")).replace("[10, 8, 1]", "[10, 8, 3]")).unwrap();
    let bin = env!("CARGO_BIN_EXE_mflab");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(status(&["grad-check", "--config", good.to_str().unwrap()]), Some(0));
    assert_eq!(status(&["grad-check", "--config", bad.to_str().unwrap()]), Some(2));
    assert_eq!(status(&["couple", "--config", good.to_str().unwrap()]), Some(2));
    assert_eq!(status(&["check", "--config", good.to_str().unwrap()]), Some(0));
    let manifest = dir.path().join("run").join("manifest.json");
    let replayed = dir.path().join("again");
    assert_eq!(
        status(&["replay", "--manifest", manifest.to_str().unwrap(), "--out-dir", replayed.to_str().unwrap()]),
        Some(0)
    );
    assert_eq!(
        std::fs::read(dir.path().join("run/grad_check.csv")).unwrap(),
        std::fs::read(replayed.join("grad_check.csv")).unwrap()
    );
}
