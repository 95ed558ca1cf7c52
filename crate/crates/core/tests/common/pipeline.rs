use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const STAGES: [&str; 7] = ["drivers", "data", "traits", "embed", "hmi", "eval", "report"];

pub fn hmiway(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmiway"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

pub fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml")
}

fn stage_args(stage: &str, root: &Path) -> Vec<String> {
    let d = |s: &str| root.join(s).display().to_string();
    let pairs: Vec<(&str, &str)> = match stage {
        "drivers" => vec![],
        "data" => vec![("--drivers", "drivers")],
        "traits" => vec![("--data", "data")],
        "embed" => vec![("--data", "data"), ("--traits", "traits")],
        "hmi" => vec![("--drivers", "drivers")],
        "eval" => vec![("--drivers", "drivers"), ("--hmi", "hmi")],
        "report" => vec![("--eval", "eval"), ("--embed", "embed")],
        _ => unreachable!(),
    };
    let command = match stage {
        "drivers" => "train-driver",
        "data" => "gen-data",
        "traits" => "train-traits",
        "embed" => "embed",
        "hmi" => "train-hmi",
        "eval" => "eval",
        _ => "report",
    };
    let mut args = vec![command.to_string()];
    for (flag, dir) in pairs {
        args.push(flag.into());
        args.push(d(dir));
    }
    args.push("--out".into());
    args.push(d(stage));
    args
}

/// Runs every stage into `root`. `config_for` picks the config file of a
/// stage, which lets a rerun reuse the manifests of an earlier run.
pub fn run_pipeline(root: &Path, config_for: impl Fn(&str) -> PathBuf) {
    for stage in STAGES {
        let mut args = stage_args(stage, root);
        args.push("--config".into());
        args.push(config_for(stage).display().to_string());
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = hmiway(&refs);
        assert!(out.status.success(), "{stage} failed: {}", String::from_utf8_lossy(&out.stderr));
    }
}

/// Every CSV under `root`, keyed by path relative to it.
pub fn csv_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                files.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}
