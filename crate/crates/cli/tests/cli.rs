use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/golden").join(name)
}

struct Env {
    dir: tempfile::TempDir,
}

impl Env {
    fn new() -> Self {
        Env {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_coherence"))
            .args(args)
            .env("COHERENCE_CACHE_DIR", self.path("cache"))
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    }

    fn seed_images(&self) {
        let gt = golden("ground_truth.tsv");
        let mo = golden("model_outputs.tsv");
        self.ok(&[
            "ingest",
            "--captions",
            gt.to_str().unwrap(),
            "--model-outputs",
            mo.to_str().unwrap(),
            "--seed-fixtures",
            "--out",
            "ingest",
        ]);
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: PathBuf) -> Vec<u8> {
    fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn json(p: PathBuf) -> Value {
    serde_json::from_slice(&read(p)).unwrap()
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_2() {
    let env = Env::new();
    let out = env.run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn help_lists_every_subcommand() {
    let out = Env::new().ok(&["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "ingest",
        "serve",
        "map-labels",
        "stats",
        "train-classifier",
        "eval-classifier",
        "train-captioner",
        "generate",
        "score",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn map_labels_is_deterministic() {
    let env = Env::new();
    let ann = golden("annotations.jsonl");
    env.ok(&["map-labels", "--in", s(&ann), "--seed", "7", "--out", "a/single.jsonl"]);
    env.ok(&["map-labels", "--in", s(&ann), "--seed", "7", "--out", "b/single.jsonl"]);
    let a = read(env.path("a/single.jsonl"));
    assert_eq!(a, read(env.path("b/single.jsonl")));
    let rows: Vec<Value> = a
        .split(|&b| b == b'\n')
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_slice(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 233);
    assert!(rows.iter().all(|r| r.as_object().unwrap().keys().eq(["label", "pair_id"].iter())));

    let manifest = json(env.path("a/single.jsonl.manifest.json"));
    assert_eq!(manifest["command"], "map-labels");
    assert_eq!(manifest["config"]["seed"], 7);
    let expected = hex(&read(ann));
    assert_eq!(manifest["inputs"][0]["sha256"], expected.as_str());
}

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn run_stats(env: &Env, out: &str, tables: &str) {
    env.ok(&[
        "stats",
        "--annotations",
        s(&golden("annotations.jsonl")),
        "--pairs",
        s(&golden("ground_truth.tsv")),
        "--model-outputs",
        s(&golden("model_outputs.tsv")),
        "--tables",
        tables,
        "--out",
        out,
    ]);
}

#[test]
fn stats_table_one_has_the_published_shape() {
    let env = Env::new();
    run_stats(&env, "report", "1");
    let csv = String::from_utf8(read(env.path("report/table1.csv"))).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "Relation,Ground-truth,Model output");
    assert_eq!(lines.len(), 9);
    assert_eq!(lines[1], "Visible,65.00,80.00");
    assert_eq!(lines[5], "Meta,24.50,15.00");
    let manifest = json(env.path("report/manifest.json"));
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
}

#[test]
fn stats_is_deterministic() {
    let env = Env::new();
    run_stats(&env, "r1", "1,2,4-gt,genre");
    run_stats(&env, "r2", "1,2,4-gt,genre");
    for f in ["table1.csv", "table2.csv", "table4_gt.csv", "genre.csv", "summary.json"] {
        assert_eq!(read(env.path(&format!("r1/{f}"))), read(env.path(&format!("r2/{f}"))), "{f}");
    }
}

#[test]
fn stats_rejects_unknown_tables() {
    let env = Env::new();
    let out = env.run(&[
        "stats",
        "--annotations",
        s(&golden("annotations.jsonl")),
        "--pairs",
        s(&golden("ground_truth.tsv")),
        "--tables",
        "1,7",
        "--out",
        "r",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

fn train_classifier(env: &Env, out: &str, extra: &[&str]) {
    let ann = golden("annotations.jsonl");
    let gt = golden("ground_truth.tsv");
    let mut args = vec![
        "train-classifier",
        "--annotations",
        s(&ann),
        "--pairs",
        s(&gt),
        "--epochs",
        "3",
        "--seed",
        "5",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    env.ok(&args);
}

#[test]
fn train_classifier_is_deterministic() {
    let env = Env::new();
    env.seed_images();
    train_classifier(&env, "c1", &["--image", "fixture"]);
    train_classifier(&env, "c2", &["--image", "fixture"]);
    for f in ["model/weights.bin", "model/manifest.json", "training_log.json", "split.json", "evaluation.json"] {
        assert_eq!(read(env.path(&format!("c1/{f}"))), read(env.path(&format!("c2/{f}"))), "{f}");
    }
    let split = json(env.path("c1/split.json"));
    let sizes: Vec<usize> = ["train", "dev", "test"]
        .iter()
        .map(|k| split[k].as_array().unwrap().len())
        .collect();
    assert_eq!(sizes.iter().sum::<usize>(), 193);
    assert_eq!(sizes[2], 25);

    // eval-classifier reproduces the evaluation recorded at training time.
    env.ok(&[
        "eval-classifier",
        "--model",
        "c1/model",
        "--split",
        "c1/split.json",
        "--pairs",
        s(&golden("ground_truth.tsv")),
        "--out",
        "e",
    ]);
    assert_eq!(read(env.path("c1/evaluation.json")), read(env.path("e/evaluation.json")));
}

#[test]
fn config_file_then_flags() {
    let env = Env::new();
    fs::write(
        env.path("cfg.json"),
        r#"{"classifier": {"hidden_layers": [16], "batch_size": 8, "mode": "multi_label"}, "dev_fraction": 0.0}"#,
    )
    .unwrap();
    train_classifier(&env, "c", &["--config", "cfg.json", "--batch-size", "4"]);
    let m = json(env.path("c/manifest.json"));
    let c = &m["config"]["classifier"];
    assert_eq!(c["hidden_layers"], serde_json::json!([16]));
    assert_eq!(c["batch_size"], 4);
    assert_eq!(c["mode"], "multi_label");
    assert_eq!(c["epochs"], 3);
    assert_eq!(m["config"]["preset"], "desk");
    assert_eq!(m["inputs"].as_array().unwrap().len(), 3);
    assert_eq!(json(env.path("c/split.json"))["dev"].as_array().unwrap().len(), 0);
}

#[test]
fn bad_config_exits_2_with_field_path() {
    let env = Env::new();
    fs::write(env.path("cfg.json"), r#"{"classifier": {"dropout_p": "high"}}"#).unwrap();
    let out = env.run(&[
        "train-classifier",
        "--annotations",
        s(&golden("annotations.jsonl")),
        "--pairs",
        s(&golden("ground_truth.tsv")),
        "--config",
        "cfg.json",
        "--out",
        "c",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("classifier.dropout_p"), "{err}");

    fs::write(env.path("cfg.json"), r#"{"classifier": {"dropout_p": 1.5}}"#).unwrap();
    let out = env.run(&[
        "train-classifier",
        "--annotations",
        s(&golden("annotations.jsonl")),
        "--pairs",
        s(&golden("ground_truth.tsv")),
        "--config",
        "cfg.json",
        "--out",
        "c",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_fixture_is_a_runtime_error() {
    let env = Env::new();
    let out = env.run(&[
        "train-classifier",
        "--annotations",
        s(&golden("annotations.jsonl")),
        "--pairs",
        s(&golden("ground_truth.tsv")),
        "--image",
        "fixture",
        "--epochs",
        "1",
        "--out",
        "c",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ingest --seed-fixtures"));
}

#[test]
fn ingest_uses_the_cache_env_var() {
    let env = Env::new();
    env.seed_images();
    let fixtures = fs::read_dir(env.path("cache/fixtures")).unwrap().count();
    assert_eq!(fixtures, 240);
    let pairs = String::from_utf8(read(env.path("ingest/pairs.jsonl"))).unwrap();
    assert_eq!(pairs.lines().count(), 240);
    let first: Value = serde_json::from_str(pairs.lines().next().unwrap()).unwrap();
    assert_eq!(first["pair_id"], "eval:0");
    assert!(env.path("ingest/manifest.json").exists());
}

#[test]
fn serve_plan_only_writes_the_plan() {
    let env = Env::new();
    env.ok(&[
        "serve",
        "--pairs",
        s(&golden("ground_truth.tsv")),
        "--annotations",
        "store/annotations.jsonl",
        "--annotators",
        "ann1,ann2",
        "--overlap",
        "30",
        "--seed",
        "4",
        "--plan-only",
    ]);
    let plan = json(env.path("store/annotations.plan.json"));
    assert_eq!(plan["overlap"].as_array().unwrap().len(), 30);
    let lens: Vec<usize> = plan["queues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|q| q["pair_ids"].as_array().unwrap().len())
        .collect();
    assert_eq!(lens, vec![115, 115]);
    assert!(env.path("store/annotations.plan.json.manifest.json").exists());

    let out = env.run(&[
        "serve",
        "--pairs",
        s(&golden("ground_truth.tsv")),
        "--annotations",
        "a.jsonl",
        "--annotators",
        "solo",
        "--overlap",
        "5",
        "--plan-only",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn caption_pipeline_runs_end_to_end() {
    let env = Env::new();
    env.seed_images();
    fs::write(
        env.path("cap.json"),
        r#"{"captioner": {"model_dim": 16, "ff_dim": 32, "heads": 2, "enc_layers": 1, "dec_layers": 1, "max_len": 8}}"#,
    )
    .unwrap();
    env.ok(&[
        "train-captioner",
        "--pairs",
        s(&golden("ground_truth.tsv")),
        "--annotations",
        s(&golden("annotations.jsonl")),
        "--labels",
        "clue",
        "--config",
        "cap.json",
        "--steps",
        "4",
        "--eval-every",
        "2",
        "--out",
        "cap",
    ]);
    let log = json(env.path("cap/training_log.json"));
    assert_eq!(log["losses"].as_array().unwrap().len(), 4);
    assert_eq!(log["checkpoints"].as_array().unwrap().len(), 2);

    fs::write(env.path("img.bin"), b"any image bytes").unwrap();
    let out = env.ok(&["generate", "--model", "cap/model", "--label", "Meta", "--image", "img.bin"]);
    let single: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(single["label"], "Meta");
    assert!(env.path("cache/runs/generate.manifest.json").exists());

    env.ok(&[
        "generate",
        "--model",
        "cap/model",
        "--label",
        "Visible",
        "--pairs",
        s(&golden("model_outputs.tsv")),
        "--beam",
        "2",
        "--out",
        "gen/out.tsv",
    ]);
    let tsv = String::from_utf8(read(env.path("gen/out.tsv"))).unwrap();
    assert_eq!(tsv.lines().count(), 40);
    assert!(tsv.lines().all(|l| l.contains("\thttps://")));

    env.ok(&[
        "score",
        "--candidates",
        "gen/out.tsv",
        "--references",
        s(&golden("model_outputs.tsv")),
        "--out",
        "score.json",
    ]);
    let scores = json(env.path("score.json"));
    assert_eq!(scores["per_example"].as_array().unwrap().len(), 40);
    assert!(scores["corpus"].as_f64().unwrap() >= 0.0);

    let out = env.run(&["generate", "--model", "cap/model", "--label", "Happy", "--image", "img.bin"]);
    assert_eq!(out.status.code(), Some(2));
    let out = env.run(&["generate", "--model", "cap/model", "--beam", "9", "--image", "img.bin"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn table_five_from_requested_labels() {
    let env = Env::new();
    let requested: String = (0..40)
        .map(|i| format!("{{\"pair_id\":\"model:{i}\",\"label\":\"{}\"}}\n", if i < 20 { "Visible" } else { "none" }))
        .collect();
    fs::write(env.path("req.jsonl"), requested).unwrap();
    env.ok(&[
        "stats",
        "--annotations",
        s(&golden("annotations.jsonl")),
        "--pairs",
        s(&golden("ground_truth.tsv")),
        "--model-outputs",
        s(&golden("model_outputs.tsv")),
        "--requested",
        "req.jsonl",
        "--tables",
        "5",
        "--format",
        "markdown",
        "--out",
        "r",
    ]);
    let md = String::from_utf8(read(env.path("r/table5.md"))).unwrap();
    assert!(md.contains("| Relation | NONE | Visible |"), "{md}");
}
