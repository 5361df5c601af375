use std::path::PathBuf;

use rayon::prelude::*;
use robustfl_core::Pipeline;
use robustfl_sim::seed::stream;
use robustfl_sim::{load_idx, make_blobs_split, LabeledDataset, Simulation, TrainingSetup};
use serde::Serialize;

use crate::config::{BenchmarkConfig, DATA_DIR_ENV};
use crate::error::{field, Result};
use crate::grid::{check_feasible, expand_grid, Experiment};
use crate::results::{is_complete, write_result, ExperimentResult};

#[derive(Debug, Clone)]
pub struct Datasets {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// Directory holding the MNIST IDX files.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("./data"), PathBuf::from)
}

pub fn load_datasets(cfg: &BenchmarkConfig) -> Result<Datasets> {
    match cfg.model.dataset_name.as_str() {
        "blobs" => {
            let p = &cfg.model.dataset_parameters;
            let (train, test) = make_blobs_split(
                p.n_classes,
                p.train_samples,
                p.test_samples,
                p.features,
                p.spread,
                &mut stream(p.seed, "dataset"),
            )?;
            Ok(Datasets { train, test })
        }
        "mnist" => {
            let dir = data_dir();
            let train = load_idx(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
            )?;
            let test = load_idx(&dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"))?;
            Ok(Datasets { train, test })
        }
        other => Err(field("dataset_name", format!("unknown dataset {other:?}"))),
    }
}

pub fn run_experiment(cfg: &BenchmarkConfig, data: &Datasets, e: &Experiment) -> Result<ExperimentResult> {
    check_feasible(cfg, e)?;
    let b = &cfg.benchmark_config;
    let f = e.key.f;
    let seed = e.key.seed;
    let partition = e
        .distribution
        .split(&data.train, b.nb_honest_clients, &mut stream(seed, "partition"))?;
    let setup = TrainingSetup {
        algorithm: cfg.algorithm()?,
        arch: cfg.arch(data.train.dim(), data.train.n_classes())?,
        n_honest: b.nb_honest_clients,
        f,
        batch_size: cfg.honest_clients.batch_size,
        momentum: cfg.honest_clients.momentum,
        weight_decay: cfg.honest_clients.weight_decay,
        schedule: cfg.schedule()?,
        nb_steps: b.nb_steps,
        evaluation_delta: cfg.evaluation_delta(),
        per_client_metrics: cfg.evaluation_and_results.store_per_client_metrics,
    };
    let pipeline = Pipeline::new(&cfg.pre_aggregator_specs(f)?, &cfg.aggregator_spec(e.aggregator_index, f)?)?;
    let attack = cfg.attack_specs()?.swap_remove(e.attack_index);
    let series = Simulation::new(setup, &data.train, &data.test, &partition, pipeline, attack, seed)?.run()?;
    Ok(ExperimentResult {
        key: e.key.clone(),
        series,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Summary {
    pub completed: usize,
    pub skipped: usize,
    pub failed: usize,
    /// `(experiment id, error)` per failed run.
    pub failures: Vec<(String, String)>,
}

enum Outcome {
    Completed,
    Skipped,
    Failed(String, String),
}

/// Runs every experiment without a finished result on disk, at most
/// `parallelism` at a time. A failing run is recorded, not fatal.
pub fn run_benchmark(cfg: &BenchmarkConfig, parallelism: usize) -> Result<Summary> {
    let grid = expand_grid(cfg)?;
    let root = cfg.results_directory().to_path_buf();
    std::fs::create_dir_all(&root).map_err(crate::error::io(&root))?;
    let pending = grid.iter().any(|e| !is_complete(&root, &e.key));
    let data = if pending { Some(load_datasets(cfg)?) } else { None };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| field("parallel", e.to_string()))?;
    let outcomes: Vec<Outcome> = pool.install(|| {
        grid.par_iter()
            .map(|e| {
                if is_complete(&root, &e.key) {
                    log::info!("skip {}", e.key.id());
                    return Outcome::Skipped;
                }
                let data = data.as_ref().expect("datasets are loaded when a run is pending");
                let result = run_experiment(cfg, data, e).and_then(|r| write_result(&root, &r));
                match result {
                    Ok(dir) => {
                        log::info!("done {}", dir.display());
                        Outcome::Completed
                    }
                    Err(err) => {
                        log::error!("{} failed: {err}", e.key.id());
                        Outcome::Failed(e.key.id(), err.to_string())
                    }
                }
            })
            .collect()
    });
    let mut summary = Summary::default();
    for o in outcomes {
        match o {
            Outcome::Completed => summary.completed += 1,
            Outcome::Skipped => summary.skipped += 1,
            Outcome::Failed(id, msg) => {
                summary.failed += 1;
                summary.failures.push((id, msg));
            }
        }
    }
    Ok(summary)
}

impl Summary {
    /// One-line JSON form.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("summary fields are plain data")
    }
}
