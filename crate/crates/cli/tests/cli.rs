use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gdan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdan"))
        .args(args)
        .env_remove("GDAN_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Two 6-node communities; class follows the community and the first
/// feature carries a noisy hint of it.
fn write_dataset(dir: &Path) {
    let mut nodes = String::from("id,type,f1,f2\n");
    let mut labels = String::from("id,label,split\n");
    for i in 0..12 {
        let c = i / 6;
        let hint = if c == 0 { 1.0 } else { -1.0 };
        nodes.push_str(&format!(
            "n{i},company,{},{}\n",
            hint + 0.1 * (i % 3) as f64,
            0.05 * i as f64
        ));
        let split = match i % 6 {
            0..=3 => "train",
            4 => "val",
            _ => "test",
        };
        labels.push_str(&format!("n{i},{c},{split}\n"));
    }
    let mut edges = String::from("src,dst,relation\n");
    for c in 0..2 {
        let base = 6 * c;
        for k in 0..5 {
            let rel = if k % 2 == 0 { "holder" } else { "branch" };
            edges.push_str(&format!("n{},n{},{rel}\n", base + k, base + k + 1));
        }
    }
    edges.push_str("n5,n6,holder\n");
    fs::write(dir.join("nodes.csv"), nodes).unwrap();
    fs::write(dir.join("edges.csv"), edges).unwrap();
    fs::write(dir.join("labels.csv"), labels).unwrap();
}

const CONFIG: &str = r#"
seed = 1
output_dir = "runs"

[data]
nodes = "nodes.csv"
edges = "edges.csv"
labels = "labels.csv"

[model]
hidden_dim = 6
output_dim = 4
dropout = 0.1

[train]
epochs = 15

[explain]
seed_nodes = 4
subgraphs = 3
proxy_steps = 50

[curve]
step = 0.5
seeds = 2
"#;

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, CONFIG).unwrap();
    (dir, cfg)
}

fn run_dir(root: &Path) -> PathBuf {
    let runs: Vec<PathBuf> = fs::read_dir(root.join("runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(runs.len(), 1, "{runs:?}");
    runs[0].clone()
}

#[test]
fn help_lists_every_command() {
    let out = stdout(&gdan(&["--help"]));
    for cmd in ["validate", "train", "eval", "cluster", "explain", "curve"] {
        assert!(out.contains(cmd), "missing {cmd} in\n{out}");
    }
}

#[test]
fn validate_prints_statistics() {
    let (dir, _) = setup();
    let d = dir.path();
    let o = gdan(&[
        "validate",
        "--nodes",
        d.join("nodes.csv").to_str().unwrap(),
        "--edges",
        d.join("edges.csv").to_str().unwrap(),
        "--labels",
        d.join("labels.csv").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("holder"), "{s}");
    assert!(
        s.lines()
            .any(|l| l.starts_with("Total") && l.trim_end().ends_with("11")),
        "{s}"
    );
    assert!(
        s.lines()
            .any(|l| l.starts_with("Nodes") && l.contains("12")),
        "{s}"
    );
}

#[test]
fn corrupted_edge_file_fails_with_line_number() {
    let (dir, cfg) = setup();
    let edges = dir.path().join("edges.csv");
    let mut text = fs::read_to_string(&edges).unwrap();
    text.push_str("n1,ghost,holder\n");
    fs::write(&edges, text).unwrap();
    let o = gdan(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 13"), "{}", stderr(&o));
}

#[test]
fn empty_labels_warn() {
    let (dir, cfg) = setup();
    fs::write(dir.path().join("labels.csv"), "id,label,split\n").unwrap();
    let o = gdan(&["validate", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
}

#[test]
fn missing_and_unknown_keys_exit_with_2() {
    let (dir, cfg) = setup();
    fs::write(&cfg, CONFIG.replace("epochs = 15", "")).unwrap();
    let o = gdan(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epochs"), "{}", stderr(&o));

    fs::write(
        &cfg,
        CONFIG.replace("epochs = 15", "epochs = 15\nmomentum = 0.9"),
    )
    .unwrap();
    let o = gdan(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("momentum"), "{}", stderr(&o));
    drop(dir);
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let (_dir, cfg) = setup();
    let o = Command::new(env!("CARGO_BIN_EXE_gdan"))
        .args(["train", "--config", cfg.to_str().unwrap()])
        .env("GDAN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(gdan(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn full_pipeline_is_reproducible() {
    let (dir, cfg) = setup();
    let cfg = cfg.to_str().unwrap();
    let o = gdan(&["train", "--config", cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = run_dir(dir.path());
    let report1 = fs::read(run.join("train_report.json")).unwrap();
    let metrics1 = fs::read(run.join("metrics_test.json")).unwrap();
    assert!(run.join("checkpoint.json").exists());
    assert!(run.join("manifest_train.json").exists());
    let idmap = fs::read_to_string(run.join("idmap.csv")).unwrap();
    assert!(idmap.starts_with("index,id\n0,"), "{idmap}");

    let o = gdan(&["train", "--config", cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(report1, fs::read(run.join("train_report.json")).unwrap());
    assert_eq!(metrics1, fs::read(run.join("metrics_test.json")).unwrap());

    let o = gdan(&["eval", "--config", cfg, "--split", "val"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(run.join("metrics_val.json")).unwrap()).unwrap();
    assert_eq!(m["split"], "val");
    assert!(m["config_hash"].as_str().unwrap().len() == 64);

    let o = gdan(&["cluster", "--config", cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let c: serde_json::Value =
        serde_json::from_slice(&fs::read(run.join("cluster.json")).unwrap()).unwrap();
    assert!(c["nmi"].as_f64().unwrap() >= 0.0);
    let emb = fs::read_to_string(run.join("embeddings.csv")).unwrap();
    assert_eq!(emb.lines().count(), 13);

    for method in ["distshift", "loo"] {
        let o = gdan(&["explain", "--config", cfg, "--method", method]);
        assert!(o.status.success(), "{}", stderr(&o));
        let scores = fs::read_to_string(run.join(format!("edge_scores_{method}.csv"))).unwrap();
        assert!(scores.starts_with("src,dst,relation,score,n_subgraphs"));
        assert_eq!(scores.lines().count(), 1 + 22);
    }
    let first = fs::read(run.join("edge_scores_distshift.csv")).unwrap();
    gdan(&["explain", "--config", cfg, "--method", "distshift"]);
    assert_eq!(
        first,
        fs::read(run.join("edge_scores_distshift.csv")).unwrap()
    );

    let scores = run.join("edge_scores_distshift.csv");
    let o = gdan(&[
        "curve",
        "--config",
        cfg,
        "--scores",
        scores.to_str().unwrap(),
        "--mode",
        "delete",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let curve = fs::read_to_string(run.join("curve_delete.csv")).unwrap();
    assert!(curve.starts_with("fraction,accuracy_mean,accuracy_std"));
    assert_eq!(curve.lines().count(), 1 + 3);
    assert!(run.join("manifest_curve.json").exists());
}

#[test]
fn plug_in_base_uses_its_own_run_directory() {
    let (dir, cfg) = setup();
    let cfg = cfg.to_str().unwrap();
    assert!(gdan(&["train", "--config", cfg]).status.success());
    let o = gdan(&["train", "--config", cfg, "--base", "gc"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let n = fs::read_dir(dir.path().join("runs")).unwrap().count();
    assert_eq!(n, 2);
}
