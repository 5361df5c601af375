//! Multinomial logistic regression and a one-hidden-layer ReLU network,
//! trained with softmax cross-entropy and momentum SGD.

use rand::Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Linear { d: usize, c: usize },
    Mlp { d: usize, h: usize, c: usize },
}

impl Arch {
    pub fn param_count(self) -> usize {
        match self {
            Arch::Linear { d, c } => c * d + c,
            Arch::Mlp { d, h, c } => h * d + h + c * h + c,
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            Arch::Linear { d, .. } | Arch::Mlp { d, .. } => d,
        }
    }

    pub fn n_classes(self) -> usize {
        match self {
            Arch::Linear { c, .. } | Arch::Mlp { c, .. } => c,
        }
    }
}

/// Flat parameters. Linear: `W (c x d)`, `b (c)`. MLP: `W1 (h x d)`,
/// `b1 (h)`, `W2 (c x h)`, `b2 (c)`. Matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub flat: Vec<f64>,
    pub arch: Arch,
}

impl ModelParams {
    pub fn zeros(arch: Arch) -> Self {
        Self {
            flat: vec![0.0; arch.param_count()],
            arch,
        }
    }

    pub fn from_flat(arch: Arch, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != arch.param_count() {
            return Err(Error::Core(robustfl_core::Error::DimensionMismatch {
                expected: arch.param_count(),
                got: flat.len(),
            }));
        }
        Ok(Self { flat, arch })
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init<R: Rng + ?Sized>(arch: Arch, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        let mut fill = |block: &mut [f64], fan_in: usize| {
            let b = 1.0 / (fan_in as f64).sqrt();
            for w in block {
                *w = rng.random_range(-b..=b);
            }
        };
        match arch {
            Arch::Linear { d, c } => fill(&mut p.flat[..c * d], d),
            Arch::Mlp { d, h, c } => {
                fill(&mut p.flat[..h * d], d);
                let w2 = h * d + h;
                fill(&mut p.flat[w2..w2 + c * h], h);
            }
        }
        p
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    /// Writes the logits for `x` into `out`; for the MLP also the
    /// pre-activations of the hidden layer into `hidden`.
    fn forward(&self, x: &[f64], hidden: &mut [f64], out: &mut [f64]) {
        match self.arch {
            Arch::Linear { d, c } => affine(&self.flat[..c * d], &self.flat[c * d..], x, out),
            Arch::Mlp { d, h, c } => {
                let (w1, rest) = self.flat.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                affine(w1, b1, x, hidden);
                let act: Vec<f64> = hidden.iter().map(|&a| a.max(0.0)).collect();
                affine(w2, b2, &act, out);
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut hidden = vec![0.0; self.hidden_len()];
        let mut z = vec![0.0; self.arch.n_classes()];
        self.forward(x, &mut hidden, &mut z);
        argmax(&z)
    }

    fn hidden_len(&self) -> usize {
        match self.arch {
            Arch::Linear { .. } => 0,
            Arch::Mlp { h, .. } => h,
        }
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (k, o) in out.iter_mut().enumerate() {
        *o = b[k] + w[k * d..(k + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// First index of the maximum, so ties go to the lowest class id.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = k;
        }
    }
    best
}

/// Turns logits into probabilities in place and returns `log-sum-exp`.
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = z.iter().map(|&v| (v - m).exp()).sum();
    let lse = m + s.ln();
    for v in z.iter_mut() {
        *v = (*v - lse).exp();
    }
    lse
}

pub fn flip_label(y: usize, n_classes: usize) -> usize {
    n_classes - 1 - y
}

/// Sample indices into a dataset, optionally with labels mirrored
/// (`y -> C - 1 - y`).
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub ds: &'a LabeledDataset,
    pub idx: &'a [usize],
    pub flip_labels: bool,
}

impl<'a> Batch<'a> {
    pub fn new(ds: &'a LabeledDataset, idx: &'a [usize]) -> Self {
        Self {
            ds,
            idx,
            flip_labels: false,
        }
    }

    pub fn flipped(self) -> Self {
        Self {
            flip_labels: true,
            ..self
        }
    }

    fn label(&self, i: usize) -> usize {
        let y = self.ds.label(i);
        if self.flip_labels {
            flip_label(y, self.ds.n_classes())
        } else {
            y
        }
    }
}

fn check_batch(params: &ModelParams, batch: &Batch<'_>) {
    assert_eq!(params.arch.input_dim(), batch.ds.dim(), "feature dimension");
    assert_eq!(params.arch.n_classes(), batch.ds.n_classes(), "class count");
}

/// Mean negative log-likelihood and the number of correct predictions.
pub fn forward_loss(params: &ModelParams, batch: &Batch<'_>) -> (f64, usize) {
    check_batch(params, batch);
    if batch.idx.is_empty() {
        return (0.0, 0);
    }
    let mut hidden = vec![0.0; params.hidden_len()];
    let mut z = vec![0.0; params.arch.n_classes()];
    let mut loss = 0.0;
    let mut correct = 0;
    for &i in batch.idx {
        params.forward(batch.ds.features(i), &mut hidden, &mut z);
        let y = batch.label(i);
        correct += usize::from(argmax(&z) == y);
        let zy = z[y];
        loss += softmax_in_place(&mut z) - zy;
    }
    (loss / batch.idx.len() as f64, correct)
}

pub fn gradient(params: &ModelParams, batch: &Batch<'_>) -> Vec<f64> {
    loss_and_gradient(params, batch).1
}

pub fn loss_and_gradient(params: &ModelParams, batch: &Batch<'_>) -> (f64, Vec<f64>) {
    check_batch(params, batch);
    let mut grad = vec![0.0; params.len()];
    if batch.idx.is_empty() {
        return (0.0, grad);
    }
    let c = params.arch.n_classes();
    let mut hidden = vec![0.0; params.hidden_len()];
    let mut z = vec![0.0; c];
    let mut loss = 0.0;
    for &i in batch.idx {
        let x = batch.ds.features(i);
        params.forward(x, &mut hidden, &mut z);
        let y = batch.label(i);
        let zy = z[y];
        loss += softmax_in_place(&mut z) - zy;
        z[y] -= 1.0;
        let dz = &z;
        match params.arch {
            Arch::Linear { d, c } => {
                let (gw, gb) = grad.split_at_mut(c * d);
                outer_acc(gw, dz, x);
                acc(gb, dz);
            }
            Arch::Mlp { d, h, c } => {
                let w2 = &params.flat[h * d + h..h * d + h + c * h];
                let act: Vec<f64> = hidden.iter().map(|&a| a.max(0.0)).collect();
                let (gw1, rest) = grad.split_at_mut(h * d);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(c * h);
                outer_acc(gw2, dz, &act);
                acc(gb2, dz);
                let mut da = vec![0.0; h];
                for (k, &g) in dz.iter().enumerate() {
                    for (j, a) in da.iter_mut().enumerate() {
                        *a += w2[k * h + j] * g;
                    }
                }
                for (a, &pre) in da.iter_mut().zip(hidden.iter()) {
                    if pre <= 0.0 {
                        *a = 0.0;
                    }
                }
                outer_acc(gw1, &da, x);
                acc(gb1, &da);
            }
        }
    }
    let inv = 1.0 / batch.idx.len() as f64;
    for g in &mut grad {
        *g *= inv;
    }
    (loss * inv, grad)
}

fn outer_acc(m: &mut [f64], u: &[f64], v: &[f64]) {
    let d = v.len();
    for (k, &uk) in u.iter().enumerate() {
        for (mij, &vj) in m[k * d..(k + 1) * d].iter_mut().zip(v) {
            *mij += uk * vj;
        }
    }
}

fn acc(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// Fraction of samples whose predicted class matches the label.
pub fn accuracy(params: &ModelParams, ds: &LabeledDataset) -> f64 {
    let correct = (0..ds.len())
        .filter(|&i| params.predict(ds.features(i)) == ds.label(i))
        .count();
    correct as f64 / ds.len() as f64
}

/// `lr(t) = lr0 * decay^(number of milestones <= t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub lr0: f64,
    pub decay: f64,
    pub milestones: Vec<usize>,
}

impl LrSchedule {
    pub fn new(lr0: f64, decay: f64, mut milestones: Vec<usize>) -> Result<Self> {
        if !(lr0 > 0.0 && lr0.is_finite()) {
            return Err(Error::Setting {
                name: "learning_rate",
                reason: format!("must be positive, got {lr0}"),
            });
        }
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::Setting {
                name: "learning_rate_decay",
                reason: format!("must lie in (0, 1], got {decay}"),
            });
        }
        milestones.sort_unstable();
        Ok(Self {
            lr0,
            decay,
            milestones,
        })
    }

    pub fn constant(lr0: f64) -> Self {
        Self {
            lr0,
            decay: 1.0,
            milestones: Vec::new(),
        }
    }

    pub fn lr(&self, step: usize) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| m <= step).count();
        self.lr0 * self.decay.powi(passed as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub momentum_buf: Vec<f64>,
    pub step_count: usize,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        Self {
            momentum_buf: vec![0.0; len],
            step_count: 0,
        }
    }

    /// `buf <- momentum * buf + (update + weight_decay * params)`.
    pub fn accumulate(&mut self, update: &[f64], params: &[f64], weight_decay: f64, momentum: f64) -> &[f64] {
        for ((b, &g), &p) in self.momentum_buf.iter_mut().zip(update).zip(params) {
            *b = momentum * *b + (g + weight_decay * p);
        }
        self.step_count += 1;
        &self.momentum_buf
    }
}

/// One momentum SGD step with L2 weight decay.
pub fn sgd_update(
    params: &mut ModelParams,
    update: &[f64],
    state: &mut OptimizerState,
    schedule: &LrSchedule,
    step: usize,
    weight_decay: f64,
    momentum: f64,
) {
    let lr = schedule.lr(step);
    state.accumulate(update, &params.flat, weight_decay, momentum);
    for (p, &b) in params.flat.iter_mut().zip(&state.momentum_buf) {
        *p -= lr * b;
    }
}
