//! The `config.json` schema: five top-level blocks plus the benchmark grid.
//! Lines may carry `//` comments.

use std::path::{Path, PathBuf};

use robustfl_core::{AggregatorSpec, AttackSpec, Params, Pipeline, PreAggregatorSpec};
use robustfl_sim::datadist::{Distribution, DistributionKind};
use robustfl_sim::models::DEFAULT_HIDDEN;
use robustfl_sim::{Algorithm, Arch, LrSchedule};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{field, io, Error, Result};

pub const DEFAULT_CONFIG_PATH: &str = "./config.json";
pub const DATA_DIR_ENV: &str = "ROBUSTFL_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub benchmark_config: BenchmarkSection,
    #[serde(default)]
    pub model: ModelSection,
    pub aggregator: Vec<NamedEntry>,
    #[serde(default)]
    pub pre_aggregators: Vec<NamedEntry>,
    #[serde(default)]
    pub honest_clients: HonestSection,
    pub attack: Vec<NamedEntry>,
    #[serde(default)]
    pub evaluation_and_results: ResultsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    #[serde(default)]
    pub training_algorithm: NamedEntry,
    pub nb_steps: usize,
    #[serde(default = "one")]
    pub nb_training_seeds: usize,
    pub nb_honest_clients: usize,
    pub f: Vec<usize>,
    #[serde(default = "iid_only")]
    pub data_distribution: Vec<DistributionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedEntry {
    pub name: String,
    #[serde(default)]
    pub parameters: Map<String, Value>,
}

impl Default for NamedEntry {
    fn default() -> Self {
        Self {
            name: "DSGD".into(),
            parameters: Map::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionEntry {
    pub name: String,
    #[serde(default)]
    pub distribution_parameter: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "linear")]
    pub name: String,
    #[serde(default = "blobs")]
    pub dataset_name: String,
    #[serde(default = "nll")]
    pub loss: String,
    #[serde(default = "lr")]
    pub learning_rate: f64,
    #[serde(default = "one_f")]
    pub learning_rate_decay: f64,
    #[serde(default)]
    pub milestones: Vec<usize>,
    /// Hidden width of the MLP.
    #[serde(default)]
    pub hidden: Option<usize>,
    #[serde(default)]
    pub dataset_parameters: BlobParameters,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            name: linear(),
            dataset_name: blobs(),
            loss: nll(),
            learning_rate: lr(),
            learning_rate_decay: 1.0,
            milestones: Vec::new(),
            hidden: None,
            dataset_parameters: BlobParameters::default(),
        }
    }
}

/// Synthetic dataset settings, used when `dataset_name` is `"blobs"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlobParameters {
    pub n_classes: usize,
    pub features: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub spread: f64,
    /// Seed of the dataset itself, shared by all training seeds.
    pub seed: u64,
}

impl Default for BlobParameters {
    fn default() -> Self {
        Self {
            n_classes: 3,
            features: 20,
            train_samples: 6000,
            test_samples: 1000,
            spread: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HonestSection {
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl Default for HonestSection {
    fn default() -> Self {
        Self {
            momentum: 0.0,
            weight_decay: 0.0,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResultsSection {
    /// Defaults to `min(50, nb_steps)`.
    pub evaluation_delta: Option<usize>,
    pub store_per_client_metrics: bool,
    pub results_directory: PathBuf,
}

impl Default for ResultsSection {
    fn default() -> Self {
        Self {
            evaluation_delta: None,
            store_per_client_metrics: false,
            results_directory: PathBuf::from("./results"),
        }
    }
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn lr() -> f64 {
    0.1
}
fn linear() -> String {
    "linear".into()
}
fn blobs() -> String {
    "blobs".into()
}
fn nll() -> String {
    "NLLLoss".into()
}
fn iid_only() -> Vec<DistributionEntry> {
    vec![DistributionEntry {
        name: "iid".into(),
        distribution_parameter: Vec::new(),
    }]
}

/// Removes `//` comments that start outside string literals.
pub fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let mut in_str = false;
        let mut escaped = false;
        let mut cut = line.len();
        let bytes = line.as_bytes();
        for (i, &b) in bytes.iter().enumerate() {
            if in_str {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_str = false,
                    _ => {}
                }
            } else if b == b'"' {
                in_str = true;
            } else if b == b'/' && bytes.get(i + 1) == Some(&b'/') {
                cut = i;
                break;
            }
        }
        out.push_str(&line[..cut]);
        out.push('\n');
    }
    out
}

pub fn parse_config(text: &str) -> Result<BenchmarkConfig> {
    let clean = strip_comments(text);
    if clean.trim().is_empty() {
        return Err(Error::Missing("benchmark_config"));
    }
    let value: Value = serde_json::from_str(&clean)?;
    if value.as_object().is_some_and(|o| !o.contains_key("benchmark_config")) {
        return Err(Error::Missing("benchmark_config"));
    }
    let cfg: BenchmarkConfig = serde_json::from_value(value)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<BenchmarkConfig> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    parse_config(&text)
}

fn number_params(what: &str, params: &Map<String, Value>) -> Result<Params> {
    params
        .iter()
        .map(|(k, v)| {
            v.as_f64()
                .map(|x| (k.clone(), x))
                .ok_or_else(|| field(format!("{what}.parameters.{k}"), "expected a number"))
        })
        .collect()
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        let b = &self.benchmark_config;
        if b.nb_steps == 0 {
            return Err(field("nb_steps", "must be at least 1"));
        }
        if b.nb_training_seeds == 0 {
            return Err(field("nb_training_seeds", "must be at least 1"));
        }
        if b.nb_honest_clients == 0 {
            return Err(field("nb_honest_clients", "must be at least 1"));
        }
        if b.f.is_empty() {
            return Err(field("f", "must list at least one value"));
        }
        self.algorithm()?;
        self.distributions()?;
        if self.aggregator.is_empty() {
            return Err(field("aggregator", "must list at least one aggregator"));
        }
        if self.attack.is_empty() {
            return Err(field("attack", "must list at least one attack"));
        }
        for i in 0..self.aggregator.len() {
            // Parameter and name checks; feasibility waits for the grid.
            Pipeline::<f64>::new(&self.pre_aggregator_specs(0)?, &self.aggregator_spec(i, 0)?)?;
        }
        self.attack_specs()?;
        for (what, labels) in [("aggregator", self.aggregator_labels()), ("attack", self.attack_labels())] {
            for (i, l) in labels.iter().enumerate() {
                if labels[..i].contains(l) {
                    return Err(field(what, format!("{l} is listed twice")));
                }
            }
        }
        let delta = self.evaluation_delta();
        if delta == 0 || delta > b.nb_steps {
            return Err(field(
                "evaluation_delta",
                format!("must lie in [1, nb_steps = {}], got {delta}", b.nb_steps),
            ));
        }
        self.schedule()?;
        let h = &self.honest_clients;
        if h.batch_size == 0 {
            return Err(field("batch_size", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&h.momentum) {
            return Err(field("momentum", format!("must lie in [0, 1), got {}", h.momentum)));
        }
        if !(h.weight_decay >= 0.0 && h.weight_decay.is_finite()) {
            return Err(field("weight_decay", format!("must be >= 0, got {}", h.weight_decay)));
        }
        if !matches!(self.model.loss.as_str(), "NLLLoss" | "CrossEntropyLoss") {
            return Err(field(
                "loss",
                format!("unknown loss {:?} (accepted: NLLLoss, CrossEntropyLoss)", self.model.loss),
            ));
        }
        self.arch(1, 2)?;
        match self.model.dataset_name.as_str() {
            "blobs" => {
                let p = &self.model.dataset_parameters;
                if p.n_classes < 2 || p.features == 0 || p.train_samples == 0 || p.test_samples == 0 {
                    return Err(field(
                        "dataset_parameters",
                        "blobs need n_classes >= 2 and positive features, train_samples, test_samples",
                    ));
                }
            }
            "mnist" => {}
            other => {
                return Err(field(
                    "dataset_name",
                    format!("unknown dataset {other:?} (accepted: blobs, mnist)"),
                ))
            }
        }
        Ok(())
    }

    pub fn algorithm(&self) -> Result<Algorithm> {
        let entry = &self.benchmark_config.training_algorithm;
        let params = number_params("training_algorithm", &entry.parameters)?;
        match entry.name.as_str() {
            "DSGD" => {
                if let Some(k) = params.keys().next() {
                    return Err(field(format!("training_algorithm.parameters.{k}"), "DSGD takes no parameters"));
                }
                Ok(Algorithm::Dsgd)
            }
            "FedAvg" => {
                if let Some(k) = params
                    .keys()
                    .find(|k| !matches!(k.as_str(), "proportion_selected_clients" | "local_steps_per_client"))
                {
                    return Err(field(format!("training_algorithm.parameters.{k}"), "not a FedAvg parameter"));
                }
                let p = params.get("proportion_selected_clients").copied().unwrap_or(1.0);
                if !(p > 0.0 && p <= 1.0) {
                    return Err(field("proportion_selected_clients", format!("must lie in (0, 1], got {p}")));
                }
                let l = params.get("local_steps_per_client").copied().unwrap_or(1.0);
                if !(l >= 1.0 && l.fract() == 0.0) {
                    return Err(field("local_steps_per_client", format!("must be a positive integer, got {l}")));
                }
                Ok(Algorithm::FedAvg {
                    proportion_selected_clients: p,
                    local_steps_per_client: l as usize,
                })
            }
            other => Err(field(
                "training_algorithm.name",
                format!("unknown algorithm {other:?} (accepted: DSGD, FedAvg)"),
            )),
        }
    }

    /// Every `(kind, parameter)` pair of the grid, in config order. IID
    /// contributes one pair whatever its parameter list.
    pub fn distributions(&self) -> Result<Vec<(DistributionKind, Option<f64>, Distribution)>> {
        let entries = &self.benchmark_config.data_distribution;
        if entries.is_empty() {
            return Err(field("data_distribution", "must list at least one distribution"));
        }
        let mut out = Vec::new();
        for e in entries {
            let kind: DistributionKind = e.name.parse().map_err(|err: robustfl_sim::Error| {
                field("data_distribution.name", err.to_string())
            })?;
            if kind == DistributionKind::Iid {
                out.push((kind, None, Distribution::Iid));
                continue;
            }
            if e.distribution_parameter.is_empty() {
                return Err(field(
                    "distribution_parameter",
                    format!("{} needs a non-empty parameter list", kind.name()),
                ));
            }
            for &p in &e.distribution_parameter {
                let d = kind
                    .with_parameter(p)
                    .map_err(|err| field("distribution_parameter", err.to_string()))?;
                out.push((kind, Some(p), d));
            }
        }
        Ok(out)
    }

    pub fn aggregator_spec(&self, i: usize, f: usize) -> Result<AggregatorSpec> {
        let e = &self.aggregator[i];
        let params = number_params("aggregator", &e.parameters)?;
        Ok(AggregatorSpec::parse(&e.name, f, params)?)
    }

    pub fn pre_aggregator_specs(&self, f: usize) -> Result<Vec<PreAggregatorSpec>> {
        self.pre_aggregators
            .iter()
            .map(|e| {
                let params = number_params("pre_aggregators", &e.parameters)?;
                Ok(PreAggregatorSpec::parse(&e.name, f, params)?)
            })
            .collect()
    }

    pub fn attack_specs(&self) -> Result<Vec<AttackSpec>> {
        self.attack
            .iter()
            .map(|e| {
                let mut rest = e.parameters.clone();
                let grid = match rest.remove("grid") {
                    None => None,
                    Some(Value::Array(items)) => Some(
                        items
                            .iter()
                            .map(|v| v.as_f64().ok_or_else(|| field("attack.parameters.grid", "expected numbers")))
                            .collect::<Result<Vec<f64>>>()?,
                    ),
                    Some(_) => return Err(field("attack.parameters.grid", "expected a list of numbers")),
                };
                let params = number_params("attack", &rest)?;
                Ok(AttackSpec::parse(&e.name, &params, grid)?)
            })
            .collect()
    }

    pub fn evaluation_delta(&self) -> usize {
        self.evaluation_and_results
            .evaluation_delta
            .unwrap_or(self.benchmark_config.nb_steps.min(50))
    }

    pub fn schedule(&self) -> Result<LrSchedule> {
        Ok(LrSchedule::new(
            self.model.learning_rate,
            self.model.learning_rate_decay,
            self.model.milestones.clone(),
        )?)
    }

    /// Model architecture for data with `d` features and `c` classes.
    /// `cnn_mnist` has no convolutional counterpart here and maps to the MLP.
    pub fn arch(&self, d: usize, c: usize) -> Result<Arch> {
        let h = self.model.hidden.unwrap_or(DEFAULT_HIDDEN);
        if h == 0 {
            return Err(field("hidden", "must be at least 1"));
        }
        match self.model.name.as_str() {
            "linear" => Ok(Arch::Linear { d, c }),
            "mlp" => Ok(Arch::Mlp { d, h, c }),
            "cnn_mnist" => {
                static WARNED: std::sync::Once = std::sync::Once::new();
                WARNED.call_once(|| log::warn!("model cnn_mnist is served by an MLP with {h} hidden units"));
                Ok(Arch::Mlp { d, h, c })
            }
            other => Err(field(
                "model.name",
                format!("unknown model {other:?} (accepted: linear, mlp, cnn_mnist)"),
            )),
        }
    }

    pub fn results_directory(&self) -> &Path {
        &self.evaluation_and_results.results_directory
    }

    /// Labels used in experiment ids. Entries sharing a name get their
    /// parameters appended so ids stay unique.
    pub fn aggregator_labels(&self) -> Vec<String> {
        entry_labels(&self.aggregator)
    }

    pub fn attack_labels(&self) -> Vec<String> {
        entry_labels(&self.attack)
    }

    pub fn pre_aggregator_labels(&self) -> Vec<String> {
        self.pre_aggregators.iter().map(|e| e.name.clone()).collect()
    }
}

fn entry_labels(entries: &[NamedEntry]) -> Vec<String> {
    entries
        .iter()
        .map(|e| {
            let shared = entries.iter().filter(|o| o.name == e.name).count() > 1;
            if !shared || e.parameters.is_empty() {
                return e.name.clone();
            }
            let mut label = e.name.clone();
            for (k, v) in &e.parameters {
                label.push('-');
                label.push_str(k);
                label.push_str(&sanitize(&v.to_string()));
            }
            label
        })
        .collect()
}

/// Keeps ASCII alphanumerics, `.`, `-` and `=`; everything else becomes `-`.
pub fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '=') { c } else { '-' })
        .collect()
}
