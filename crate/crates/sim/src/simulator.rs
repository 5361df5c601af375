//! Honest clients, a Byzantine group and a server with a robust pipeline,
//! trained with DSGD or FedAvg.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robustfl_core::{AttackContext, AttackKind, AttackSpec, Pipeline, VectorSet};

use crate::data::LabeledDataset;
use crate::datadist::ClientPartition;
use crate::error::{Error, Result};
use crate::models::{self, Arch, Batch, LrSchedule, ModelParams, OptimizerState};
use crate::seed::{derive_seed, stream};

/// Samples used for the reported training loss.
pub const TRAIN_EVAL_SAMPLES: usize = 2000;
/// Samples per client used for per-client loss.
pub const CLIENT_EVAL_SAMPLES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Dsgd,
    FedAvg {
        proportion_selected_clients: f64,
        local_steps_per_client: usize,
    },
}

impl Algorithm {
    /// Honest rows the server receives per round.
    pub fn participants(&self, n_honest: usize) -> usize {
        match *self {
            Algorithm::Dsgd => n_honest,
            Algorithm::FedAvg {
                proportion_selected_clients: p,
                ..
            } => ((p * n_honest as f64).ceil() as usize).clamp(1, n_honest),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSetup {
    pub algorithm: Algorithm,
    pub arch: Arch,
    pub n_honest: usize,
    pub f: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: LrSchedule,
    pub nb_steps: usize,
    pub evaluation_delta: usize,
    pub per_client_metrics: bool,
}

impl TrainingSetup {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::Setting {
                name,
                reason: reason.to_string(),
            })
        };
        if self.n_honest == 0 {
            return bad("nb_honest_clients", "must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if self.nb_steps == 0 {
            return bad("nb_steps", "must be at least 1");
        }
        if self.evaluation_delta == 0 || self.evaluation_delta > self.nb_steps {
            return bad("evaluation_delta", "must lie in [1, nb_steps]");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", "must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay", "must be finite and >= 0");
        }
        if let Algorithm::FedAvg {
            proportion_selected_clients: p,
            local_steps_per_client: l,
        } = self.algorithm
        {
            if !(p > 0.0 && p <= 1.0) {
                return bad("proportion_selected_clients", "must lie in (0, 1]");
            }
            if l == 0 {
                return bad("local_steps_per_client", "must be at least 1");
            }
        }
        Ok(())
    }

    /// Steps at which metrics are recorded: 0, multiples of the delta and
    /// the last step.
    pub fn evaluation_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = (0..=self.nb_steps).step_by(self.evaluation_delta).collect();
        if steps.last() != Some(&self.nb_steps) {
            steps.push(self.nb_steps);
        }
        steps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub step: usize,
    pub test_accuracy: f64,
    pub train_loss: f64,
    pub client_losses: Vec<f64>,
}

/// A participant's local data stream and optimizer state.
#[derive(Debug, Clone)]
pub struct Client {
    pub indices: Vec<usize>,
    order: Vec<usize>,
    cursor: usize,
    pub state: OptimizerState,
    rng: ChaCha8Rng,
    flip_labels: bool,
}

impl Client {
    pub fn new(indices: Vec<usize>, n_params: usize, rng: ChaCha8Rng, flip_labels: bool) -> Self {
        let order = indices.clone();
        let mut c = Self {
            cursor: order.len(),
            indices,
            order,
            state: OptimizerState::new(n_params),
            rng,
            flip_labels,
        };
        c.reshuffle();
        c
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.cursor = 0;
    }

    /// The next mini-batch. A new pass over the local data starts, with a
    /// fresh shuffle, when fewer than `batch_size` unseen samples remain.
    pub fn next_batch(&mut self, batch_size: usize) -> Vec<usize> {
        let b = batch_size.min(self.order.len());
        if self.cursor + b > self.order.len() {
            self.reshuffle();
        }
        let out = self.order[self.cursor..self.cursor + b].to_vec();
        self.cursor += b;
        out
    }

    /// Momentum direction on the next batch: `buf <- m * buf + (g + wd * w)`.
    pub fn momentum_gradient(
        &mut self,
        model: &ModelParams,
        ds: &LabeledDataset,
        batch_size: usize,
        weight_decay: f64,
        momentum: f64,
    ) -> Vec<f64> {
        let idx = self.next_batch(batch_size);
        let mut batch = Batch::new(ds, &idx);
        if self.flip_labels {
            batch = batch.flipped();
        }
        let g = models::gradient(model, &batch);
        self.state
            .accumulate(&g, &model.flat, weight_decay, momentum)
            .to_vec()
    }

    /// Runs `steps` local momentum SGD steps from `model` and returns
    /// `local - model`.
    pub fn local_delta(
        &mut self,
        model: &ModelParams,
        ds: &LabeledDataset,
        setup: &TrainingSetup,
        lr: f64,
        steps: usize,
    ) -> Vec<f64> {
        let mut local = model.clone();
        for _ in 0..steps {
            let buf = self.momentum_gradient(&local, ds, setup.batch_size, setup.weight_decay, setup.momentum);
            for (p, b) in local.flat.iter_mut().zip(buf) {
                *p -= lr * b;
            }
        }
        local.flat.iter().zip(&model.flat).map(|(l, m)| l - m).collect()
    }
}

/// Aggregates the participants' rows, honest rows first.
pub struct Server {
    pub model: ModelParams,
    pub pipeline: Pipeline<f64>,
    pub schedule: LrSchedule,
    pub step: usize,
    rng: ChaCha8Rng,
}

pub struct Simulation<'a> {
    setup: TrainingSetup,
    train: &'a LabeledDataset,
    test: &'a LabeledDataset,
    pub clients: Vec<Client>,
    /// Label-flipping participants; empty for gradient-space attacks.
    byzantine: Vec<Client>,
    attack: AttackSpec,
    pub server: Server,
    sampling_rng: ChaCha8Rng,
    train_eval: Vec<usize>,
}

impl<'a> Simulation<'a> {
    pub fn new(
        setup: TrainingSetup,
        train: &'a LabeledDataset,
        test: &'a LabeledDataset,
        partition: &ClientPartition,
        pipeline: Pipeline<f64>,
        attack: AttackSpec,
        seed: u64,
    ) -> Result<Self> {
        setup.validate()?;
        if partition.n_clients() != setup.n_honest {
            return Err(Error::Setting {
                name: "nb_honest_clients",
                reason: format!(
                    "partition has {} clients, expected {}",
                    partition.n_clients(),
                    setup.n_honest
                ),
            });
        }
        for ds in [train, test] {
            if ds.dim() != setup.arch.input_dim() || ds.n_classes() != setup.arch.n_classes() {
                return Err(Error::Setting {
                    name: "model",
                    reason: format!(
                        "architecture expects {} features and {} classes, data has {} and {}",
                        setup.arch.input_dim(),
                        setup.arch.n_classes(),
                        ds.dim(),
                        ds.n_classes()
                    ),
                });
            }
        }
        pipeline.check_feasible(setup.algorithm.participants(setup.n_honest) + setup.f)?;

        let n_params = setup.arch.param_count();
        let clients = partition
            .assignments
            .iter()
            .enumerate()
            .map(|(k, idx)| Client::new(idx.clone(), n_params, stream(seed, &format!("client/{k}")), false))
            .collect();
        let byzantine = if attack.kind == AttackKind::LabelFlipping {
            (0..setup.f)
                .map(|j| {
                    let idx = partition.assignments[j % setup.n_honest].clone();
                    Client::new(idx, n_params, stream(seed, &format!("byzantine/{j}")), true)
                })
                .collect()
        } else {
            Vec::new()
        };
        let model = ModelParams::init(setup.arch, &mut stream(seed, "init"));
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream(seed, "train-eval"));
        order.truncate(TRAIN_EVAL_SAMPLES);
        Ok(Self {
            server: Server {
                model,
                pipeline,
                schedule: setup.schedule.clone(),
                step: 0,
                rng: stream(seed, "server"),
            },
            sampling_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, "sampling")),
            setup,
            train,
            test,
            clients,
            byzantine,
            attack,
            train_eval: order,
        })
    }

    pub fn setup(&self) -> &TrainingSetup {
        &self.setup
    }

    pub fn model(&self) -> &ModelParams {
        &self.server.model
    }

    /// The `f` Byzantine rows for this round, given the honest ones.
    fn byzantine_rows(&mut self, honest: &VectorSet<f64>, lr: f64) -> Result<Option<VectorSet<f64>>> {
        if self.setup.f == 0 {
            return Ok(None);
        }
        if self.attack.kind == AttackKind::LabelFlipping {
            let s = &self.setup;
            let model = &self.server.model;
            let rows = self
                .byzantine
                .iter_mut()
                .map(|c| match s.algorithm {
                    Algorithm::Dsgd => c.momentum_gradient(model, self.train, s.batch_size, s.weight_decay, s.momentum),
                    Algorithm::FedAvg {
                        local_steps_per_client,
                        ..
                    } => c.local_delta(model, self.train, s, lr, local_steps_per_client),
                })
                .collect();
            return Ok(Some(VectorSet::new(rows)?));
        }
        let ctx = AttackContext {
            honest,
            f: self.setup.f,
            pipeline: &self.server.pipeline,
        };
        Ok(self.attack.generate(&ctx, &self.server.rng)?)
    }

    fn aggregate(&mut self, honest: VectorSet<f64>, lr: f64) -> Result<Vec<f64>> {
        let xs = match self.byzantine_rows(&honest, lr)? {
            Some(byz) => honest.concat(&byz)?,
            None => honest,
        };
        Ok(self.server.pipeline.apply(&xs, &mut self.server.rng)?)
    }

    /// One DSGD step: every honest client sends its momentum gradient and
    /// the server moves by `-lr * aggregate`.
    pub fn dsgd_step(&mut self) -> Result<()> {
        let s = &self.setup;
        let model = &self.server.model;
        let rows: Vec<Vec<f64>> = self
            .clients
            .iter_mut()
            .map(|c| c.momentum_gradient(model, self.train, s.batch_size, s.weight_decay, s.momentum))
            .collect();
        let lr = self.server.schedule.lr(self.server.step);
        let agg = self.aggregate(VectorSet::new(rows)?, lr)?;
        for (p, a) in self.server.model.flat.iter_mut().zip(agg) {
            *p -= lr * a;
        }
        self.server.step += 1;
        Ok(())
    }

    /// One FedAvg round: sampled clients train locally from the broadcast
    /// model and send deltas; the server adds the aggregate delta.
    pub fn fedavg_round(&mut self) -> Result<()> {
        let Algorithm::FedAvg {
            local_steps_per_client,
            ..
        } = self.setup.algorithm
        else {
            return Err(Error::Setting {
                name: "training_algorithm",
                reason: "fedavg_round called on a DSGD setup".into(),
            });
        };
        let k = self.setup.algorithm.participants(self.setup.n_honest);
        let mut chosen = index::sample(&mut self.sampling_rng, self.setup.n_honest, k).into_vec();
        chosen.sort_unstable();
        let lr = self.server.schedule.lr(self.server.step);
        let rows: Vec<Vec<f64>> = chosen
            .iter()
            .map(|&c| {
                self.clients[c].local_delta(&self.server.model, self.train, &self.setup, lr, local_steps_per_client)
            })
            .collect();
        let agg = self.aggregate(VectorSet::new(rows)?, lr)?;
        for (p, a) in self.server.model.flat.iter_mut().zip(agg) {
            *p += a;
        }
        self.server.step += 1;
        Ok(())
    }

    pub fn step(&mut self) -> Result<()> {
        match self.setup.algorithm {
            Algorithm::Dsgd => self.dsgd_step(),
            Algorithm::FedAvg { .. } => self.fedavg_round(),
        }
    }

    pub fn metrics(&self) -> MetricRow {
        let model = &self.server.model;
        let client_losses = if self.setup.per_client_metrics {
            self.clients
                .iter()
                .map(|c| {
                    let idx = &c.indices[..c.indices.len().min(CLIENT_EVAL_SAMPLES)];
                    models::forward_loss(model, &Batch::new(self.train, idx)).0
                })
                .collect()
        } else {
            Vec::new()
        };
        MetricRow {
            step: self.server.step,
            test_accuracy: evaluate(model, self.test),
            train_loss: models::forward_loss(model, &Batch::new(self.train, &self.train_eval)).0,
            client_losses,
        }
    }

    /// Trains for `nb_steps`, recording metrics at every evaluation step.
    pub fn run(mut self) -> Result<Vec<MetricRow>> {
        let eval_at = self.setup.evaluation_steps();
        let mut series = Vec::with_capacity(eval_at.len());
        let mut next = eval_at.iter().copied().peekable();
        while let Some(&due) = next.peek() {
            while self.server.step < due {
                self.step()?;
            }
            series.push(self.metrics());
            next.next();
        }
        Ok(series)
    }
}

/// Test accuracy in [0, 1].
pub fn evaluate(model: &ModelParams, test: &LabeledDataset) -> f64 {
    models::accuracy(model, test)
}

/// Gradients Byzantine client `j` would send by following the honest
/// procedure on honest client `j mod n` data with mirrored labels.
pub fn label_flip_gradients(
    partition: &ClientPartition,
    f: usize,
    ds: &LabeledDataset,
    model: &ModelParams,
) -> Result<VectorSet<f64>> {
    let rows = (0..f)
        .map(|j| {
            let idx = &partition.assignments[j % partition.n_clients()];
            models::gradient(model, &Batch::new(ds, idx).flipped())
        })
        .collect();
    Ok(VectorSet::new(rows)?)
}
