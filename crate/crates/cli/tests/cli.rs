use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"{
  "seed": 3,
  "synth": {"n_patients": 40, "image_size": 16, "gland_radius": 5.0,
            "period_at_min_age": 5.0, "period_slope": 0.05, "slices_per_patient": [2, 3]},
  "model": {"input_size": 8, "layers": [
      {"type": "conv", "out_channels": 4, "kernel": 3, "stride": 1},
      {"type": "relu"}, {"type": "global_average_pool"}, {"type": "dense", "out_dim": 1}]},
  "train": {"epochs": 2, "batch_size": 8, "learning_rate": 0.05},
  "split": {"n_folds": 2},
  "bootstrap": {"n_replicates": 50},
  "compare_replicates": 50,
  "permutation_replicates": 200
}"#;

fn pag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pag")).args(args).env("RAYON_NUM_THREADS", "1").output().unwrap()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.json");
    std::fs::write(&path, TINY).unwrap();
    path
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn run_ok(args: &[&str]) {
    let out = pag(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_all_writes_every_artifact_and_reruns_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        run_ok(&["run-all", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    }
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (k, v) in &fa {
        assert!(v == &fb[k], "{} differs between reruns", k.display());
    }
    for f in [
        "train/fold_0.pagw",
        "train/fold_1.pagw",
        "analyze/odds_ratios.csv",
        "analyze/roc_pag_model.json",
        "analyze/roc_pirads_model.json",
        "analyze/confusion.json",
        "plot/roc.svg",
        "plot/pag_subgroups.svg",
        "plot/provenance.json",
    ] {
        assert!(fa.contains_key(Path::new(f)), "missing {f}");
    }
    assert!(!fa.contains_key(Path::new("train/fold_2.pagw")));

    let manifest: serde_json::Value = serde_json::from_slice(&fa[Path::new("preprocess/manifest.json")]).unwrap();
    let counted: u64 = manifest["patients"].as_array().unwrap().iter().map(|p| p["n_slices"].as_u64().unwrap()).sum();
    let store = pag_core::report::decode_slices(&fa[Path::new("preprocess/slices.bin")]).unwrap();
    assert_eq!(counted, store.len() as u64);
    assert_eq!(manifest["total_slices"].as_u64().unwrap(), counted);

    let trace = String::from_utf8(fa[Path::new("train/trace.csv")].clone()).unwrap();
    let summary = String::from_utf8(fa[Path::new("train/summary.csv")].clone()).unwrap();
    for line in summary.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let fold = cols[0];
        let min = trace
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|c| c[0] == fold)
            .map(|c| c[3].parse::<f64>().unwrap())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(cols[3].parse::<f64>().unwrap(), min);
    }

    let roc: serde_json::Value = serde_json::from_slice(&fa[Path::new("analyze/roc_pag_model.json")]).unwrap();
    for key in ["points", "auc", "ci_low", "ci_high", "n_replicates", "seed", "provenance"] {
        assert!(roc.get(key).is_some(), "ROC JSON lacks {key}");
    }
    let svg = String::from_utf8(fa[Path::new("plot/roc.svg")].clone()).unwrap();
    assert!(svg.contains("\"seed\":3") && svg.contains(roc["provenance"]["config_hash"].as_str().unwrap()));
}

#[test]
fn missing_split_file_is_a_clean_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = pag(&["train", "--config", tiny_config(dir.path()).to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing split file"), "{err}");
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"synth": {"cspc_fraction": 2.0}}"#).unwrap();
    assert_eq!(pag(&["synth", "--config", path.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&path, "{not json").unwrap();
    assert_eq!(pag(&["synth", "--config", path.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(pag(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn corrupt_volume_is_listed_as_failed_with_its_error_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out_dir = dir.path().join("o");
    let common = ["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()];
    run_ok(&[&["synth"], &common[..]].concat());
    let raw = out_dir.join("synth/images/SYN0001_t2w.raw");
    let bytes = std::fs::read(&raw).unwrap();
    std::fs::write(&raw, &bytes[..bytes.len() / 2]).unwrap();
    run_ok(&[&["preprocess"], &common[..]].concat());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("preprocess/manifest.json")).unwrap()).unwrap();
    let failed = manifest["failed"].as_array().unwrap();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0]["patient_id"], "SYN0001");
    assert_eq!(failed[0]["error"], "TruncatedFile");
    assert!(manifest["patients"].as_array().unwrap().iter().all(|p| p["patient_id"] != "SYN0001"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = pag(&["show-config", "--config", tiny_config(dir.path()).to_str().unwrap(), "--seed", "11"]);
    assert!(out.status.success());
    let cfg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["seed"], 11);
    assert_eq!(cfg["train"]["seed"], 11);
    assert_eq!(cfg["synth"]["seed"], 11);
}
