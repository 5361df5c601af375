use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use robustfl_bench::{expand_grid, parse_config, run_benchmark};

fn config(results: &Path, aggregators: &str, f: &str) -> String {
    format!(
        r#"{{
  // tiny grid
  "benchmark_config": {{
    "training_algorithm": {{"name": "DSGD", "parameters": {{}}}},
    "nb_steps": 15, "nb_training_seeds": 2, "nb_honest_clients": 4, "f": {f},
    "data_distribution": [{{"name": "gamma_similarity_niid", "distribution_parameter": [0.5]}}]
  }},
  "model": {{"name": "linear", "dataset_name": "blobs", "loss": "NLLLoss", "learning_rate": 0.1,
             "dataset_parameters": {{"n_classes": 3, "features": 4, "train_samples": 240, "test_samples": 90}}}},
  "aggregator": {aggregators},
  "pre_aggregators": [{{"name": "Bucketing", "parameters": {{"s": 2}}}}],
  "honest_clients": {{"momentum": 0.9, "weight_decay": 0.0001, "batch_size": 8}},
  "attack": [{{"name": "SignFlipping", "parameters": {{}}}}, {{"name": "Optimal_ALittleIsEnough", "parameters": {{"grid": [0.5, 1, 2]}}}}],
  "evaluation_and_results": {{"evaluation_delta": 5, "store_per_client_metrics": true, "results_directory": {:?}}}
}}"#,
        results.display().to_string()
    )
}

const AGGS: &str = r#"[{"name": "Median", "parameters": {}}, {"name": "GeometricMedian", "parameters": {}}]"#;

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for dir in fs::read_dir(root).unwrap() {
        let dir = dir.unwrap().path();
        for file in fs::read_dir(&dir).unwrap() {
            let file = file.unwrap().path();
            let name = format!(
                "{}/{}",
                dir.file_name().unwrap().to_string_lossy(),
                file.file_name().unwrap().to_string_lossy()
            );
            out.insert(name, fs::read(&file).unwrap());
        }
    }
    out
}

#[test]
fn parallel_and_serial_runs_match_and_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let serial = parse_config(&config(&tmp.path().join("serial"), AGGS, "[1]")).unwrap();
    let parallel = parse_config(&config(&tmp.path().join("parallel"), AGGS, "[1]")).unwrap();
    let n = expand_grid(&serial).unwrap().len();
    assert_eq!(n, 8);

    let s = run_benchmark(&serial, 1).unwrap();
    assert_eq!((s.completed, s.skipped, s.failed), (n, 0, 0));
    let p = run_benchmark(&parallel, 4).unwrap();
    assert_eq!((p.completed, p.skipped, p.failed), (n, 0, 0));
    let a = snapshot(&tmp.path().join("serial"));
    let b = snapshot(&tmp.path().join("parallel"));
    assert_eq!(a.len(), 2 * n);
    assert_eq!(a, b);

    let again = run_benchmark(&parallel, 4).unwrap();
    assert_eq!((again.completed, again.skipped, again.failed), (0, n, 0));
    assert_eq!(snapshot(&tmp.path().join("parallel")), b);
}

#[test]
fn infeasible_runs_fail_without_stopping_the_batch() {
    let tmp = tempfile::tempdir().unwrap();
    let aggs = r#"[{"name": "TrMean", "parameters": {}}]"#;
    let cfg = parse_config(&config(tmp.path(), aggs, "[1, 4]")).unwrap();
    let s = run_benchmark(&cfg, 2).unwrap();
    // Bucketing keeps ceil(8 / 2) = 4 rows for f = 4, and TrMean needs 4 > 8.
    assert_eq!(s.failed, 4);
    assert_eq!(s.completed, 4);
    assert!(s.failures.iter().all(|(id, msg)| id.contains("_f4_") && msg.contains("n > 2f")));
    assert!(s.to_json().starts_with("{\"completed\":4,\"skipped\":0,\"failed\":4"));
}
