use robustfl_sim::datadist::{Distribution, DistributionKind};
use serde::{Deserialize, Serialize};

use crate::config::{sanitize, BenchmarkConfig};
use crate::error::Result;

/// Identifies one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentKey {
    pub aggregator: String,
    pub pre_aggregators: Vec<String>,
    pub attack: String,
    pub f: usize,
    pub distribution: String,
    pub distribution_parameter: Option<f64>,
    pub seed: u64,
}

impl ExperimentKey {
    /// Pipeline label: the aggregator, then pre-aggregators joined by `-`.
    pub fn pipeline_label(&self) -> String {
        if self.pre_aggregators.is_empty() {
            sanitize(&self.aggregator)
        } else {
            format!("{}_{}", sanitize(&self.aggregator), sanitize(&self.pre_aggregators.join("-")))
        }
    }

    /// Distribution tag with its parameter, e.g. `gamma0.33`.
    pub fn distribution_label(&self) -> String {
        let tag = self
            .distribution
            .parse::<DistributionKind>()
            .map(DistributionKind::tag)
            .unwrap_or(&self.distribution);
        match self.distribution_parameter {
            Some(p) => sanitize(&format!("{tag}{p}")),
            None => sanitize(tag),
        }
    }

    /// Filesystem-safe id, e.g. `TrMean_Clipping-NNM_SignFlipping_f2_gamma0.33_seed1`.
    pub fn id(&self) -> String {
        format!(
            "{}_{}_f{}_{}_seed{}",
            self.pipeline_label(),
            sanitize(&self.attack),
            self.f,
            self.distribution_label(),
            self.seed
        )
    }
}

/// A key plus the indices needed to rebuild its components from the config.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub key: ExperimentKey,
    pub aggregator_index: usize,
    pub attack_index: usize,
    pub distribution: Distribution,
}

/// Aggregators x attacks x f x (distribution, parameter) x seeds.
pub fn expand_grid(cfg: &BenchmarkConfig) -> Result<Vec<Experiment>> {
    let aggs = cfg.aggregator_labels();
    let attacks = cfg.attack_labels();
    let pre = cfg.pre_aggregator_labels();
    let dists = cfg.distributions()?;
    let b = &cfg.benchmark_config;
    let mut out = Vec::new();
    for (ai, agg) in aggs.iter().enumerate() {
        for (ki, attack) in attacks.iter().enumerate() {
            for &f in &b.f {
                for &(kind, param, distribution) in &dists {
                    for seed in 0..b.nb_training_seeds as u64 {
                        out.push(Experiment {
                            key: ExperimentKey {
                                aggregator: agg.clone(),
                                pre_aggregators: pre.clone(),
                                attack: attack.clone(),
                                f,
                                distribution: kind.name().to_string(),
                                distribution_parameter: param,
                                seed,
                            },
                            aggregator_index: ai,
                            attack_index: ki,
                            distribution,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Rows the server aggregates per step for this run.
pub fn aggregation_rows(cfg: &BenchmarkConfig, f: usize) -> Result<usize> {
    Ok(cfg.algorithm()?.participants(cfg.benchmark_config.nb_honest_clients) + f)
}

/// Checks the pipeline of one experiment against its input size.
pub fn check_feasible(cfg: &BenchmarkConfig, e: &Experiment) -> Result<()> {
    let f = e.key.f;
    let pipeline = robustfl_core::Pipeline::<f64>::new(
        &cfg.pre_aggregator_specs(f)?,
        &cfg.aggregator_spec(e.aggregator_index, f)?,
    )?;
    pipeline.check_feasible(aggregation_rows(cfg, f)?)?;
    Ok(())
}

/// Experiments whose pipeline cannot run, with the reason.
pub fn infeasible(cfg: &BenchmarkConfig, grid: &[Experiment]) -> Vec<(String, String)> {
    grid.iter()
        .filter_map(|e| check_feasible(cfg, e).err().map(|err| (e.key.id(), err.to_string())))
        .collect()
}
