use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 3
[synthetic]
n_users = 500
n_items = 60
n_records = 6000
n_test_records = 1500
n_test_users = 150
[model]
latent_dim = 8
init_scale = 1.0
[train]
learning_rate = 0.01
epochs = 3
"#;

fn socialrec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_socialrec"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = socialrec(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    dir
}

fn with<'a>(stage: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![stage, "--config", "run.toml"];
    v.extend(extra);
    v
}

#[test]
fn gen_preprocess_train_eval_prints_map() {
    let dir = workspace();
    for stage in ["gen", "preprocess", "train", "predict"] {
        ok(dir.path(), &with(stage, &[]));
    }
    let out = ok(dir.path(), &with("eval", &[]));
    assert!(out.starts_with("MAP@3 "), "{out}");
    let map: f64 = out.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&map));
    for f in ["model.srmfm", "loss.csv", "scores.tsv", "map_report.tsv", "manifest.json"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn reruns_produce_identical_manifests() {
    let manifests: Vec<(String, String)> = (0..2)
        .map(|_| {
            let dir = workspace();
            for stage in ["gen", "preprocess", "train", "predict"] {
                ok(dir.path(), &with(stage, &[]));
            }
            (
                fs::read_to_string(dir.path().join("data/manifest.json")).unwrap(),
                fs::read_to_string(dir.path().join("out/manifest.json")).unwrap(),
            )
        })
        .collect();
    assert_eq!(manifests[0], manifests[1]);
}

#[test]
fn invalid_config_exits_2_with_field_names() {
    let dir = workspace();
    fs::write(
        dir.path().join("bad.toml"),
        "[train]\nlearning_rate = -1.0\n[ensemble]\nr_max = 9\n",
    )
    .unwrap();
    let out = socialrec(dir.path(), &["train", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train.learning_rate"), "{err}");
    assert!(err.contains("ensemble.r_max"), "{err}");

    let out = socialrec(dir.path(), &["gen", "--config", "missing.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stage_failure_exits_1_naming_the_stage() {
    let dir = workspace();
    let out = socialrec(dir.path(), &with("train", &[]));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage train failed"), "{err}");
}

#[test]
fn eval_names_disjoint_users() {
    let dir = workspace();
    ok(dir.path(), &with("gen", &[]));
    fs::write(dir.path().join("preds.tsv"), "999999\t1\t0.5\n").unwrap();
    let out = socialrec(dir.path(), &with("eval", &["--predictions", "preds.tsv"]));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("share no users"), "{err}");
}

#[test]
fn eval_refuses_other_config_hash_unless_forced() {
    let dir = workspace();
    for stage in ["gen", "preprocess", "train", "predict"] {
        ok(dir.path(), &with(stage, &[]));
    }
    let out = socialrec(dir.path(), &with("eval", &["--seed", "4"]));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config hash"));
    ok(dir.path(), &with("eval", &["--seed", "4", "--force"]));
}

#[test]
fn ensemble_writes_rankings() {
    let dir = workspace();
    ok(dir.path(), &with("gen", &[]));
    ok(dir.path(), &with("ensemble", &[]));
    let rankings = fs::read_to_string(dir.path().join("out/rankings.tsv")).unwrap();
    let mut lines = rankings.lines();
    assert!(lines.next().unwrap().starts_with("# config-hash "));
    for line in lines {
        let n = line.split('\t').count();
        assert!((2..=4).contains(&n), "{line}");
    }
    let out = ok(dir.path(), &with("eval", &["--predictions", "out/ensemble_scores.tsv"]));
    assert!(out.starts_with("MAP@3 "));
}
