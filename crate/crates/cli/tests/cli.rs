use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_attrspace"));
    c.env_remove("ATTRSPACE_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &TempDir, scenario: &str) -> PathBuf {
    let out = dir.path().join(format!("{scenario}.jsonl"));
    let r = run(&["synth", "--scenario", scenario, "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    out
}

const PAIR: [&str; 8] = [
    "--target",
    "sentiment=positive",
    "--target",
    "topic=sports",
    "--weight",
    "1",
    "--weight",
    "2",
];

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let c = dir.path().join("c.jsonl");
    for (p, seed) in [(&a, "4"), (&b, "4"), (&c, "5")] {
        assert_eq!(code(&run(&["synth", "--scenario", "skewed-tails", "--seed", seed, "--out", s(p)])), 0);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.jsonl");
    let r = run(&["synth", "--scenario", "nope", "--out", s(&out)]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("skewed-tails"));

    let missing = dir.path().join("missing.jsonl");
    let mut args = vec!["baseline", "--space", s(&missing)];
    args.extend(PAIR);
    assert_eq!(code(&run(&args)), 1);

    let space = synth(&dir, "symmetric-overlap");
    let r = run(&[
        "search",
        "--space",
        s(&space),
        "--target",
        "sentiment=positive",
        "--target",
        "topic=sports",
        "--weight",
        "1",
    ]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("one weight per target"));

    let r = run(&["search", "--space", s(&space), "--target", "topic=world", "--weight", "1"]);
    assert_eq!(code(&r), 2);
}

#[test]
fn full_k_search_returns_the_baseline() {
    let dir = TempDir::new().unwrap();
    let space = synth(&dir, "symmetric-overlap");
    let base = dir.path().join("base.json");
    let found = dir.path().join("found.json");
    let mut a = vec!["baseline", "--space", s(&space), "--out", s(&base)];
    a.extend(PAIR);
    assert_eq!(code(&run(&a)), 0);
    let mut b = vec!["search", "--space", s(&space), "--k", "0", "--m", "40", "--out", s(&found)];
    b.extend(PAIR);
    let r = run(&b);
    assert_eq!(code(&r), 0);
    assert!(stderr(&r).contains("search: K=full M=40 S=15"));
    let (base, found) = (json(&base), json(&found));
    assert_eq!(base["point"], found["point"]);
    assert_eq!(found["iterations_run"], 1);
    assert_eq!(found["metadata"]["K"], "full");
    // Oracle: per-attribute means straight from the JSONL records, weighted 1:2.
    let mut sums = [[0.0f64; 2]; 2];
    let mut counts = [0.0f64; 2];
    for line in fs::read_to_string(&space).unwrap().lines().skip(1) {
        let rec: Value = serde_json::from_str(line).unwrap();
        let t = usize::from(rec["aspect"] == "topic");
        counts[t] += 1.0;
        for (j, x) in rec["vector"].as_array().unwrap().iter().enumerate() {
            sums[t][j] += x.as_f64().unwrap();
        }
    }
    let p: Vec<f64> = serde_json::from_value(base["point"].clone()).unwrap();
    for j in 0..2 {
        let want = (sums[0][j] / counts[0] + 2.0 * sums[1][j] / counts[1]) / 3.0;
        assert!((p[j] - want).abs() < 1e-9, "{} vs {want}", p[j]);
    }
}

#[test]
fn search_reports_metadata_and_trajectories() {
    let dir = TempDir::new().unwrap();
    let space = synth(&dir, "skewed-tails");
    let out = dir.path().join("r.json");
    let mut a = vec!["search", "--space", s(&space), "--k", "30", "--m", "25", "--trajectories", "--out", s(&out)];
    a.extend(PAIR);
    assert_eq!(code(&run(&a)), 0);
    let v = json(&out);
    assert_eq!(v["metadata"]["K"], 30);
    assert_eq!(v["metadata"]["M"], 25);
    assert_eq!(v["candidates"].as_array().unwrap().len(), 25);
    let shortlist = v["shortlist_scores"].as_array().unwrap();
    assert!(shortlist.windows(2).all(|w| w[0].as_f64() <= w[1].as_f64()));
    assert!(v["quality"].as_f64().unwrap().is_finite());
}

#[test]
fn training_header_flags_and_divergence() {
    let dir = TempDir::new().unwrap();
    let space = synth(&dir, "three-aspect");
    let meta = dir.path().join("train.json");
    let model = dir.path().join("model.bin");
    let latent = dir.path().join("latent.jsonl");
    let r = run(&[
        "train",
        "--data",
        s(&space),
        "--epochs",
        "1",
        "--w2",
        "0",
        "--out-meta",
        s(&meta),
        "--out-model",
        s(&model),
        "--out-space",
        s(&latent),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let err = stderr(&r);
    assert!(err.contains("train: w1=0.5 w2=0 w3=0.3"), "{err}");
    assert!(err.contains("ablation:no-cls"));
    let v = json(&meta);
    assert_eq!(v["flags"], serde_json::json!(["ablation:no-cls"]));
    assert!(model.exists() && latent.exists());

    let r = run(&["train", "--data", s(&space), "--epochs", "2", "--lr", "1e200"]);
    assert_eq!(code(&r), 3, "{}", stderr(&r));

    let r = run(&["train", "--data", s(&space), "--w1", "0", "--w2", "0", "--w3", "0"]);
    assert_eq!(code(&r), 2);
}

#[test]
fn check_passes_and_detects_faults() {
    let r = run(&["check", "--cases", "40"]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let v: Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["invariants"].as_array().unwrap().len(), 5);

    let r = run(&["check", "--cases", "20", "--fault", "knn"]);
    assert_eq!(code(&r), 4);
    assert!(stderr(&r).contains("FAIL knn_equivalence"));

    let r = run(&["check", "--cases", "20", "--fault", "grad"]);
    assert_eq!(code(&r), 4);
    assert!(stderr(&r).contains("FAIL gradient_check"));
}

#[test]
fn sweep_deduplicates_and_writes_csv() {
    let dir = TempDir::new().unwrap();
    let space = synth(&dir, "symmetric-overlap");
    let csv = dir.path().join("sweep.csv");
    let mut a = vec!["sweep", "--space", s(&space), "--m", "20", "--ks", "1,5,5,full,0", "--out", s(&csv)];
    a.extend(PAIR);
    let r = run(&a);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert!(stderr(&r).contains("duplicate k value 5"));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,quality,baseline_quality,iterations_run,converged");
    let ks: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ks, ["1", "5", "full"]);

    let mut b = vec!["sweep", "--space", s(&space), "--ks", "3,3"];
    b.extend(PAIR);
    assert_eq!(code(&run(&b)), 2);
}

#[test]
fn flags_override_config_values() {
    let dir = TempDir::new().unwrap();
    let space = synth(&dir, "symmetric-overlap");
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        serde_json::json!({
            "seed": 9,
            "search": {"k": 7, "m": 30, "iters": 4, "target": ["sentiment=positive", "topic=sports"], "weight": [1.0, 1.0]}
        })
        .to_string(),
    )
    .unwrap();
    let out = dir.path().join("r.json");
    let r = run(&["search", "--config", s(&config), "--space", s(&space), "--k", "11", "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let meta = &json(&out)["metadata"];
    assert_eq!(meta["K"], 11);
    assert_eq!(meta["M"], 30);
    assert_eq!(meta["S"], 4);
    assert_eq!(meta["seed"], 9);

    let r = run(&["search", "--config", s(&config), "--seed", "2", "--space", s(&space), "--out", s(&out)]);
    assert_eq!(code(&r), 0);
    assert_eq!(json(&out)["metadata"]["seed"], 2);

    fs::write(&config, r#"{"search": {"kk": 3}}"#).unwrap();
    let r = run(&["search", "--config", s(&config), "--space", s(&space)]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("kk"));

    fs::write(&config, r#"{"searchh": {}}"#).unwrap();
    assert_eq!(code(&run(&["check", "--config", s(&config)])), 2);
}

#[test]
fn named_combinations_resolve_from_file() {
    let dir = TempDir::new().unwrap();
    let space = synth(&dir, "three-aspect");
    let table = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/combination_weights.json");
    let out = dir.path().join("b.json");
    let r = run(&[
        "baseline",
        "--space",
        s(&space),
        "--combination",
        "positive-sports-nontoxic",
        "--combinations",
        table,
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let v = json(&out);
    assert_eq!(v["weights"], serde_json::json!([3.0, 5.5, 1.0]));
    assert_eq!(v["targets"][2], "detoxification=nontoxic");

    let r = run(&["baseline", "--space", s(&space), "--combination", "missing", "--combinations", table]);
    assert_eq!(code(&r), 2);
}

#[test]
fn project_writes_panels_with_overlays() {
    let dir = TempDir::new().unwrap();
    let space = synth(&dir, "skewed-tails");
    let base = dir.path().join("base.json");
    let mut a = vec!["baseline", "--space", s(&space), "--out", s(&base)];
    a.extend(PAIR);
    assert_eq!(code(&run(&a)), 0);
    let out = dir.path().join("analysis.json");
    let overlay = format!("mid={}", s(&base));
    let r = run(&[
        "project",
        "--space",
        s(&space),
        "--mode",
        "joint",
        "--kde",
        "--resolution",
        "40",
        "--overlay",
        &overlay,
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let v = json(&out);
    assert_eq!(v["schema_version"], 1);
    let panels = v["panels"].as_array().unwrap();
    assert_eq!(panels.len(), 1);
    assert_eq!(panels[0]["scatters"].as_array().unwrap().len(), 2);
    assert_eq!(panels[0]["overlays"][0]["name"], "mid");

    let r = run(&["project", "--space", s(&space), "--bandwidth", "-1", "--kde", "--out", s(&out)]);
    assert_eq!(code(&r), 2);
}
