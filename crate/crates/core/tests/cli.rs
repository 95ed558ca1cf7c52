mod common;

use std::fs;

use common::pipeline::{csv_files, hmiway, run_pipeline, smoke_config};
use hmiway::run::{Manifest, FAILED_FILE, MANIFEST_FILE};

#[test]
fn smoke_pipeline_is_reproducible_from_its_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_pipeline(&a, |_| smoke_config());
    run_pipeline(&b, |stage| a.join(stage).join(MANIFEST_FILE));

    let fa = csv_files(&a);
    let fb = csv_files(&b);
    assert!(fa.len() >= 10, "expected the pipeline's CSVs, got {:?}", fa.keys());
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (name, bytes) in &fa {
        assert!(bytes == &fb[name], "{name} differs between runs");
    }

    let data = Manifest::load(&a.join("data")).unwrap();
    let drivers = data.summary["drivers"].as_array().unwrap();
    assert_eq!(drivers.len(), 4);
    assert!(drivers.iter().all(|d| d["steps"].as_u64().unwrap() >= 300));

    let eval = Manifest::load(&a.join("eval")).unwrap();
    let eval_b = Manifest::load(&b.join("eval")).unwrap();
    assert_eq!(eval.artifacts, eval_b.artifacts);
    assert_eq!(eval.config, eval_b.config);
    assert!(eval.inputs.iter().all(|i| i.sha256.len() == 64));

    let traits = Manifest::load(&a.join("traits")).unwrap();
    let ck = traits.artifact("traits").unwrap();
    assert!(ck.file.starts_with("traits-final-") && ck.file.ends_with(".ckpt"));
}

#[test]
fn zero_episodes_is_rejected_before_any_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("eval");
    let config = smoke_config();
    let args = ["eval", "--config", config.to_str().unwrap(), "--drivers", "x", "--hmi", "y", "--episodes", "0", "--out"];
    let mut args: Vec<&str> = args.to_vec();
    args.push(out.to_str().unwrap());
    let result = hmiway(&args);
    assert!(!result.status.success());
    assert!(String::from_utf8_lossy(&result.stderr).contains("episodes"));
    assert!(!out.exists());
}

#[test]
fn invalid_config_reports_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    fs::write(&config, "seed = 1\n[eval]\nepisodes = 3\nepisdoes = 4\n").unwrap();
    let out = tmp.path().join("run");
    let result = hmiway(&["train-driver", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("line 4"), "{stderr}");
}

#[test]
fn unknown_subcommand_fails() {
    assert!(!hmiway(&["train-everything", "--out", "x"]).status.success());
}

#[test]
fn failures_leave_a_marker_and_existing_runs_are_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let config = smoke_config();
    let out = tmp.path().join("hmi");
    let missing = tmp.path().join("no-drivers");
    let result = hmiway(&[
        "train-hmi",
        "--config",
        config.to_str().unwrap(),
        "--drivers",
        missing.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!result.status.success());
    assert!(out.join(FAILED_FILE).exists());
    assert!(!out.join(MANIFEST_FILE).exists());

    // a second attempt into the same directory must not touch it
    let before = fs::read(out.join(FAILED_FILE)).unwrap();
    let again = hmiway(&["train-driver", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!again.status.success());
    assert_eq!(fs::read(out.join(FAILED_FILE)).unwrap(), before);
}

#[test]
fn trained_demonstrations_need_a_driver_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = smoke_config();
    let out = tmp.path().join("data");
    let result = hmiway(&[
        "gen-data",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "data.behavior=trained",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!result.status.success());
    assert!(String::from_utf8_lossy(&result.stderr).contains("--drivers"));
}
