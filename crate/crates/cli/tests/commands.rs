use std::path::Path;

use battleship_cli::{main_with_args, EXIT_MISSING_CONFIG};
use battleship_core::eval::read_reports_jsonl;

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("battleship").chain(args.iter().copied()))
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("config.toml");
    std::fs::write(
        &path,
        "budget = 10\niterations = 2\nq = 5\nseed_positives = 10\nseed_negatives = 10\n\
         [matcher]\nfeature_space_size = 4096\nhidden_dim = 8\nepochs = 3\n",
    )
    .unwrap();
    path.to_str().unwrap().to_owned()
}

fn tiny_dataset(dir: &Path) -> String {
    let path = dir.join("pairs.csv");
    let p = path.to_str().unwrap().to_owned();
    assert_eq!(run(&["synth", "--out", &p, "--pairs", "400", "--positive-rate", "0.2", "--seed", "4"]), 0);
    p
}

#[test]
fn missing_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(dir.path());
    let missing = dir.path().join("nope.toml");
    let code = run(&["run", "--config", missing.to_str().unwrap(), "--dataset", &data]);
    assert_eq!(code, EXIT_MISSING_CONFIG);
}

#[test]
fn malformed_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(dir.path());
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "budget = \"many\"\n").unwrap();
    assert_eq!(run(&["run", "--config", config.to_str().unwrap(), "--dataset", &data]), 1);
    std::fs::write(&config, "no_such_key = 1\n").unwrap();
    assert_eq!(run(&["run", "--config", config.to_str().unwrap(), "--dataset", &data]), 1);
}

#[test]
fn unknown_strategy_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(dir.path());
    assert_ne!(run(&["run", "--dataset", &data, "--strategy", "greedy"]), 0);
}

#[test]
fn oracle_run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(dir.path());
    let config = tiny_config(dir.path());
    for strategy in ["battleship", "random", "entropy"] {
        let out = dir.path().join(strategy);
        let out_s = out.to_str().unwrap();
        let mut args = vec!["run", "--config", &config, "--dataset", &data, "--strategy", strategy, "--out-dir", out_s];
        if strategy == "battleship" {
            args.push("--dump");
        }
        assert_eq!(run(&args), 0, "{strategy}");
        let reports = read_reports_jsonl(out.join("reports.jsonl")).unwrap();
        assert_eq!(reports.iter().map(|r| r.labels_used).collect::<Vec<_>>(), vec![20, 30, 40]);
        let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
        assert_eq!(summary.lines().next().unwrap(), "iteration,labels_used,f1,auc_so_far");
        assert_eq!(summary.lines().count(), 4);
        if strategy == "battleship" {
            assert!(out.join("iter1_positive_edges.csv").exists());
            assert!(out.join("iter1_scores.csv").exists());
        }
    }
}

#[test]
fn same_seed_same_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(dir.path());
    let config = tiny_config(dir.path());
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        assert_eq!(run(&["run", "--config", &config, "--dataset", &data, "--seed", "9", "--out-dir", out.to_str().unwrap()]), 0);
        let mut reports = read_reports_jsonl(out.join("reports.jsonl")).unwrap();
        for r in &mut reports {
            r.timing = Default::default();
        }
        runs.push(serde_json::to_string(&reports).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn encodings_round_trip_and_select() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(dir.path());
    let config = tiny_config(dir.path());
    let enc = dir.path().join("enc.jsonl");
    let enc_s = enc.to_str().unwrap();
    assert_eq!(run(&["export-encodings", "--config", &config, "--dataset", &data, "--out", enc_s]), 0);
    assert_eq!(run(&["import-encodings", "--encodings", enc_s, "--dataset", &data]), 0);

    // labels for a few pool pairs taken from the encodings file
    let first_ids: Vec<String> = std::fs::read_to_string(&enc)
        .unwrap()
        .lines()
        .take(6)
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["pair_id"].as_str().unwrap().to_owned())
        .collect();
    let labels = dir.path().join("labels.jsonl");
    let body: String = first_ids
        .iter()
        .enumerate()
        .map(|(i, id)| format!("{}\n", serde_json::json!({"pair_id": id, "label": (i % 2) as u8, "provenance": "oracle", "timestamp": 0.0})))
        .collect();
    std::fs::write(&labels, body).unwrap();
    let out = dir.path().join("selection.json");
    let code = run(&[
        "select", "--config", &config, "--encodings", enc_s, "--dataset", &data,
        "--labels", labels.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let selection: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    let picked = selection["selected"].as_array().unwrap();
    assert_eq!(picked.len(), 10);
    assert!(picked.iter().all(|id| !first_ids.contains(&id.as_str().unwrap().to_owned())));
}

#[test]
fn corrupt_encodings_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(dir.path());
    let enc = dir.path().join("enc.jsonl");
    std::fs::write(&enc, "{\"pair_id\": \"x\"}\n").unwrap();
    assert_eq!(run(&["import-encodings", "--encodings", enc.to_str().unwrap(), "--dataset", &data]), 1);
}
