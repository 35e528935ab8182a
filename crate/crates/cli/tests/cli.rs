use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rema(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rema")).args(args).env_remove("REMA_THREADS").output().unwrap()
}

fn synth_small(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("study");
    let mut args = vec!["synth", "--kind", "layered", "--layers", "6", "--planted", "2", "--n-correct", "60", "--n-error", "20"];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", out.to_str().unwrap()]);
    let o = rema(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("study.json")
}

#[test]
fn analyze_writes_every_report() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth_small(tmp.path(), &[]);
    let out = tmp.path().join("out");
    let o = rema(&["analyze", "--manifest", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "config.json",
        "id.json",
        "mi.json",
        "deviation.json",
        "deviation.csv",
        "divergence.json",
        "divergence_histogram.csv",
        "separability.json",
        "separability.csv",
        "projection.csv",
        "report.json",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let dev: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("deviation.json")).unwrap()).unwrap();
    assert_eq!(dev["layers"].as_array().unwrap().len(), 6);
}

#[test]
fn missing_manifest_argument_is_a_usage_error() {
    let o = rema(&["deviation"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn unreadable_manifest_is_a_data_error_with_json() {
    let o = rema(&["--error-json", "id", "--manifest", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(v["error"]["kind"], "study");
}

#[test]
fn k_sweep_rows_per_layer_are_non_decreasing() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth_small(tmp.path(), &[]);
    let json = tmp.path().join("dev.json");
    let o = rema(&["deviation", "--manifest", manifest.to_str().unwrap(), "--k-sweep", "5,10,15,20", "--out", json.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(json.with_extension("csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (layer, k, err, cor) = (col("layer_index"), col("k_prime"), col("mean_error"), col("mean_correct"));
    let mut by_layer: std::collections::BTreeMap<usize, Vec<(usize, f64, f64)>> = Default::default();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        by_layer.entry(f[layer].parse().unwrap()).or_default().push((f[k].parse().unwrap(), f[err].parse().unwrap(), f[cor].parse().unwrap()));
    }
    assert_eq!(by_layer.len(), 6);
    for rows in by_layer.values() {
        let sweep: Vec<_> = rows.iter().filter(|r| [5, 10, 15, 20].contains(&r.0)).collect();
        assert!(sweep.len() >= 4);
        let ks: Vec<usize> = sweep.iter().map(|r| r.0).collect();
        assert!(ks.windows(2).all(|w| w[0] <= w[1]));
        assert!(sweep.windows(2).all(|w| w[0].0 == w[1].0 || (w[0].1 <= w[1].1 && w[0].2 <= w[1].2)));
    }
}

#[test]
fn config_replay_reproduces_payloads() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth_small(tmp.path(), &[]);
    let first = tmp.path().join("first");
    let o = rema(&["analyze", "--manifest", manifest.to_str().unwrap(), "--out", first.to_str().unwrap(), "--seed", "7", "--k", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let second = tmp.path().join("second");
    let config = first.join("config.json");
    let o = rema(&["analyze", "--config", config.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["id.json", "mi.json", "deviation.json", "divergence.json", "separability.json", "projection.csv"] {
        assert_eq!(std::fs::read(first.join(f)).unwrap(), std::fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn token_mode_study_pools_like_the_pooled_one() {
    let tmp = tempfile::tempdir().unwrap();
    let pooled = synth_small(&tmp.path().join("a"), &["--dtype", "f64"]);
    let tokens = synth_small(&tmp.path().join("b"), &["--dtype", "f64", "--tokens", "4"]);
    let run = |m: &Path| {
        let o = rema(&["deviation", "--manifest", m.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        v["summary"]["relative_deviation"].as_f64().unwrap()
    };
    assert!((run(&pooled) - run(&tokens)).abs() < 1e-9);
}

#[test]
fn project_writes_csv_and_umap_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth_small(tmp.path(), &[]);
    let csv = tmp.path().join("proj.csv");
    let o = rema(&[
        "project",
        "--manifest",
        manifest.to_str().unwrap(),
        "--method",
        "tsne",
        "--perplexity",
        "10",
        "--iterations",
        "300",
        "--out",
        csv.to_str().unwrap(),
        "--emit-umap-input",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("id,label,x,y"));
    assert_eq!(text.lines().count(), 81);
    let side: serde_json::Value = serde_json::from_slice(&std::fs::read(csv.with_extension("umap.json")).unwrap()).unwrap();
    assert!(side.is_object());
}

#[test]
fn verify_published_tables_strict_mode() {
    let lenient = rema(&["verify-paper-tables"]);
    assert_eq!(lenient.status.code(), Some(0));
    let text = String::from_utf8_lossy(&lenient.stdout);
    assert!(text.lines().any(|l| l.starts_with("FLAG rel_dev_recomputation")));
    assert!(text.lines().any(|l| l.starts_with("PASS spearman_accuracy_rel_dev")));
    assert_eq!(rema(&["verify-paper-tables", "--strict"]).status.code(), Some(1));
}

#[test]
fn threads_flag_and_env_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth_small(tmp.path(), &[]);
    let a = rema(&["--threads", "3", "separability", "--manifest", manifest.to_str().unwrap()]);
    let b = Command::new(env!("CARGO_BIN_EXE_rema"))
        .args(["separability", "--manifest", manifest.to_str().unwrap()])
        .env("REMA_THREADS", "1")
        .output()
        .unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}
