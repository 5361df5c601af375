//! Robust aggregation rules.
//!
//! Every rule maps a [`VectorSet`] of `n` rows, up to `f` of which may be
//! adversarial, to a single vector. Distance and score ties are broken by
//! the lower row index so that results are reproducible.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{
    argsort_by_dist, coord_order_stats, dot, norm, pairwise_sq_dists, sq_dist, sub, top_eigenpair,
    Scalar, VectorSet,
};

/// Rule-specific numeric parameters, keyed by name.
pub type Params = BTreeMap<String, f64>;

/// Largest `n` accepted by the subset-enumerating rules (MDA, SMEA).
pub const MAX_SUBSET_N: usize = 25;

pub const DEFAULT_CC_TAU: f64 = 100.0;
pub const DEFAULT_CC_ITERS: usize = 1;

const GM_MAX_ITERS: usize = 100;
const GM_RTOL: f64 = 1e-8;
const GM_EPS: f64 = 1e-12;
const CAF_MAX_ITERS: usize = 50;
const CAF_MIN_EIGENVALUE: f64 = 1e-12;
const SMEA_TIE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AggregatorKind {
    Average,
    Median,
    TrMean,
    GeometricMedian,
    MultiKrum,
    MeaMed,
    Mda,
    CenteredClipping,
    MoNNA,
    Smea,
    Caf,
}

impl AggregatorKind {
    pub const ALL: [AggregatorKind; 11] = [
        Self::Average,
        Self::Median,
        Self::TrMean,
        Self::GeometricMedian,
        Self::MultiKrum,
        Self::MeaMed,
        Self::Mda,
        Self::CenteredClipping,
        Self::MoNNA,
        Self::Smea,
        Self::Caf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Average => "Average",
            Self::Median => "Median",
            Self::TrMean => "TrMean",
            Self::GeometricMedian => "GeometricMedian",
            Self::MultiKrum => "MultiKrum",
            Self::MeaMed => "MeaMed",
            Self::Mda => "MDA",
            Self::CenteredClipping => "CenteredClipping",
            Self::MoNNA => "MoNNA",
            Self::Smea => "SMEA",
            Self::Caf => "CAF",
        }
    }

    /// Checks the rule's (n, f) feasibility condition.
    pub fn check_feasible(self, n: usize, f: usize) -> Result<()> {
        let infeasible = |requirement| Error::Infeasible {
            rule: self.name(),
            requirement,
            n,
            f,
        };
        if n == 0 {
            return Err(Error::Empty);
        }
        match self {
            Self::Average | Self::Median | Self::GeometricMedian | Self::CenteredClipping => {}
            Self::TrMean => {
                if n <= 2 * f {
                    return Err(infeasible("n > 2f"));
                }
            }
            Self::MultiKrum => {
                if n < f + 2 {
                    return Err(infeasible("n >= f + 2"));
                }
            }
            Self::MeaMed | Self::MoNNA | Self::Caf => {
                if n <= f {
                    return Err(infeasible("n > f"));
                }
            }
            Self::Mda | Self::Smea => {
                if n <= f {
                    return Err(infeasible("n > f"));
                }
                if n > MAX_SUBSET_N {
                    return Err(Error::TooLarge {
                        rule: self.name(),
                        n,
                        max: MAX_SUBSET_N,
                    });
                }
            }
        }
        Ok(())
    }

    fn allowed_params(self) -> &'static [&'static str] {
        match self {
            Self::CenteredClipping => &["tau", "iters"],
            Self::MoNNA => &["pivot"],
            _ => &[],
        }
    }
}

impl fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName {
                what: "aggregator",
                name: s.to_string(),
                valid: Self::ALL.map(Self::name).join(", "),
            })
    }
}

/// Named, parameterized aggregator descriptor as written in a config.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorSpec {
    pub kind: AggregatorKind,
    pub f: usize,
    pub params: Params,
}

impl AggregatorSpec {
    pub fn new(kind: AggregatorKind, f: usize) -> Self {
        Self {
            kind,
            f,
            params: Params::new(),
        }
    }

    pub fn parse(name: &str, f: usize, params: Params) -> Result<Self> {
        Ok(Self {
            kind: name.parse()?,
            f,
            params,
        })
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }
}

/// Memory carried by centered clipping between calls.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CenteredClipState<T> {
    pub prev: Option<Vec<T>>,
}

/// An instantiated aggregator. Only centered clipping holds state.
#[derive(Debug, Clone)]
pub struct Aggregator<T> {
    kind: AggregatorKind,
    f: usize,
    cc_tau: T,
    cc_iters: usize,
    pivot: usize,
    state: CenteredClipState<T>,
}

impl<T: Scalar> Aggregator<T> {
    pub fn new(spec: &AggregatorSpec) -> Result<Self> {
        let allowed = spec.kind.allowed_params();
        if let Some(key) = spec.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidParam {
                name: key.clone(),
                reason: format!(
                    "not a parameter of {} (accepted: [{}])",
                    spec.kind,
                    allowed.join(", ")
                ),
            });
        }
        let tau = spec.params.get("tau").copied().unwrap_or(DEFAULT_CC_TAU);
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParam {
                name: "tau".into(),
                reason: format!("clipping radius must be > 0, got {tau}"),
            });
        }
        let iters = count_param(&spec.params, "iters", DEFAULT_CC_ITERS)?;
        if iters == 0 {
            return Err(Error::InvalidParam {
                name: "iters".into(),
                reason: "must be >= 1".into(),
            });
        }
        let pivot = count_param(&spec.params, "pivot", 0)?;
        Ok(Self {
            kind: spec.kind,
            f: spec.f,
            cc_tau: T::lit(tau),
            cc_iters: iters,
            pivot,
            state: CenteredClipState::default(),
        })
    }

    pub fn kind(&self) -> AggregatorKind {
        self.kind
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn is_stateful(&self) -> bool {
        self.kind == AggregatorKind::CenteredClipping
    }

    /// Forgets the centered-clipping reference point.
    pub fn reset(&mut self) {
        self.state = CenteredClipState::default();
    }

    pub fn check_feasible(&self, n: usize) -> Result<()> {
        self.kind.check_feasible(n, self.f)?;
        if self.kind == AggregatorKind::MoNNA && self.pivot >= n {
            return Err(Error::InvalidParam {
                name: "pivot".into(),
                reason: format!("row {} out of range for n={n}", self.pivot),
            });
        }
        Ok(())
    }

    pub fn aggregate(&mut self, xs: &VectorSet<T>) -> Result<Vec<T>> {
        self.check_feasible(xs.n())?;
        let f = self.f;
        match self.kind {
            AggregatorKind::Average => Ok(average(xs)),
            AggregatorKind::Median => Ok(median(xs)),
            AggregatorKind::TrMean => trmean(xs, f),
            AggregatorKind::GeometricMedian => Ok(geometric_median(xs)),
            AggregatorKind::MultiKrum => multi_krum(xs, f),
            AggregatorKind::MeaMed => meamed(xs, f),
            AggregatorKind::Mda => mda(xs, f),
            AggregatorKind::CenteredClipping => {
                centered_clipping(xs, &mut self.state, self.cc_tau, self.cc_iters)
            }
            AggregatorKind::MoNNA => monna(xs, f, self.pivot),
            AggregatorKind::Smea => smea(xs, f),
            AggregatorKind::Caf => caf(xs, f),
        }
    }
}

fn count_param(params: &Params, key: &str, default: usize) -> Result<usize> {
    match params.get(key) {
        None => Ok(default),
        Some(&v) if v >= 0.0 && v.fract() == 0.0 && v.is_finite() => Ok(v as usize),
        Some(&v) => Err(Error::InvalidParam {
            name: key.into(),
            reason: format!("expected a non-negative integer, got {v}"),
        }),
    }
}

pub fn average<T: Scalar>(xs: &VectorSet<T>) -> Vec<T> {
    xs.mean()
}

/// Coordinate-wise median; the two middle values are averaged for even `n`.
pub fn median<T: Scalar>(xs: &VectorSet<T>) -> Vec<T> {
    let n = xs.n();
    let drop = (n - 1) / 2;
    coord_order_stats(xs, drop, drop).expect("median drop count always feasible")
}

pub fn trmean<T: Scalar>(xs: &VectorSet<T>, f: usize) -> Result<Vec<T>> {
    AggregatorKind::TrMean.check_feasible(xs.n(), f)?;
    coord_order_stats(xs, f, f)
}

/// Weiszfeld iteration for the minimizer of `sum_i ||v - x_i||`, started at
/// the mean. Distances below `1e-12` are floored to keep weights finite.
/// Iteration stops when a step is below `1e-8` times the median distance
/// to the inputs, a scale that neither moves with translations nor grows
/// with far-away outliers.
pub fn geometric_median<T: Scalar>(xs: &VectorSet<T>) -> Vec<T> {
    let eps = T::lit(GM_EPS);
    let rtol = T::solver_tol(GM_RTOL);
    let mut v = xs.mean();
    for _ in 0..GM_MAX_ITERS {
        let mut num = vec![T::zero(); xs.d()];
        let mut den = T::zero();
        let mut dists = Vec::with_capacity(xs.n());
        for row in xs.rows() {
            let dist = sq_dist(&v, row).sqrt();
            dists.push(dist);
            let w = T::one() / dist.max(eps);
            for (a, &x) in num.iter_mut().zip(row) {
                *a = *a + w * x;
            }
            den = den + w;
        }
        let next: Vec<T> = num.into_iter().map(|a| a / den).collect();
        let step = sq_dist(&next, &v).sqrt();
        v = next;
        let mid = dists.len() / 2;
        let (_, scale, _) =
            dists.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).expect("finite"));
        if step <= rtol * *scale {
            break;
        }
    }
    v
}

/// Mean of the `n - f` rows with the smallest Krum scores, where a row's
/// score sums its squared distances to its `n - f - 1` nearest other rows.
pub fn multi_krum<T: Scalar>(xs: &VectorSet<T>, f: usize) -> Result<Vec<T>> {
    let n = xs.n();
    AggregatorKind::MultiKrum.check_feasible(n, f)?;
    let dists = pairwise_sq_dists(xs);
    let neighbors = n - f - 1;
    let scores: Vec<T> = (0..n)
        .map(|i| {
            // Other rows only.
            let mut others: Vec<T> = (0..n).filter(|&j| j != i).map(|j| dists[i][j]).collect();
            others.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            others[..neighbors].iter().copied().sum()
        })
        .collect();
    let order = argsort_by_dist(&scores);
    Ok(xs.mean_of(&order[..n - f]))
}

/// Per coordinate, the mean of the `n - f` values closest to that
/// coordinate's median.
pub fn meamed<T: Scalar>(xs: &VectorSet<T>, f: usize) -> Result<Vec<T>> {
    let n = xs.n();
    AggregatorKind::MeaMed.check_feasible(n, f)?;
    let med = median(xs);
    let keep = n - f;
    let inv = T::one() / T::from_count(keep);
    let out = (0..xs.d())
        .map(|j| {
            let gaps: Vec<T> = xs.rows().map(|r| (r[j] - med[j]).abs()).collect();
            argsort_by_dist(&gaps)[..keep]
                .iter()
                .map(|&i| xs.row(i)[j])
                .sum::<T>()
                * inv
        })
        .collect();
    Ok(out)
}

/// Advances `idx` to the next `k`-combination of `0..n` in lexicographic
/// order. Returns `false` after the last one.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Mean over the `(n - f)`-subset of smallest diameter.
///
/// Subsets sharing the minimal diameter (they often share the pair that
/// realizes it) are compared on their remaining pairwise distances, largest
/// first, and only then by lexicographic index order.
pub fn mda<T: Scalar>(xs: &VectorSet<T>, f: usize) -> Result<Vec<T>> {
    let n = xs.n();
    AggregatorKind::Mda.check_feasible(n, f)?;
    let dists = pairwise_sq_dists(xs);
    let k = n - f;
    let sorted_desc = |subset: &[usize]| -> Vec<T> {
        let mut all = Vec::with_capacity(k * k.saturating_sub(1) / 2);
        for (a, &i) in subset.iter().enumerate() {
            for &j in &subset[a + 1..] {
                all.push(dists[i][j]);
            }
        }
        all.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        all
    };
    let mut subset: Vec<usize> = (0..k).collect();
    let mut best = subset.clone();
    let mut best_diam = T::infinity();
    loop {
        let mut diam = T::zero();
        for (a, &i) in subset.iter().enumerate() {
            for &j in &subset[a + 1..] {
                diam = diam.max(dists[i][j]);
            }
        }
        let better =
            diam < best_diam || (diam == best_diam && sorted_desc(&subset) < sorted_desc(&best));
        if better {
            best_diam = diam;
            best.copy_from_slice(&subset);
        }
        if !next_combination(&mut subset, n) {
            break;
        }
    }
    Ok(xs.mean_of(&best))
}

/// Centered clipping: starting from the remembered reference point (or the
/// origin), repeatedly move by the mean of the deviations clipped to
/// radius `tau`. The result becomes the next reference point.
pub fn centered_clipping<T: Scalar>(
    xs: &VectorSet<T>,
    state: &mut CenteredClipState<T>,
    tau: T,
    iters: usize,
) -> Result<Vec<T>> {
    let mut v = match state.prev.take() {
        Some(prev) if prev.len() == xs.d() => prev,
        Some(prev) => {
            return Err(Error::DimensionMismatch {
                expected: prev.len(),
                got: xs.d(),
            })
        }
        None => vec![T::zero(); xs.d()],
    };
    let inv_n = T::one() / T::from_count(xs.n());
    for _ in 0..iters {
        let mut step = vec![T::zero(); xs.d()];
        for row in xs.rows() {
            let u = sub(row, &v);
            let nu = norm(&u);
            let c = if nu > T::zero() {
                T::one().min(tau / nu)
            } else {
                T::one()
            };
            for (s, &ui) in step.iter_mut().zip(&u) {
                *s = *s + ui * c;
            }
        }
        for (vi, si) in v.iter_mut().zip(step) {
            *vi = *vi + si * inv_n;
        }
    }
    state.prev = Some(v.clone());
    Ok(v)
}

/// Mean of the `n - f` rows nearest to row `pivot`, itself included.
pub fn monna<T: Scalar>(xs: &VectorSet<T>, f: usize, pivot: usize) -> Result<Vec<T>> {
    let n = xs.n();
    AggregatorKind::MoNNA.check_feasible(n, f)?;
    if pivot >= n {
        return Err(Error::InvalidParam {
            name: "pivot".into(),
            reason: format!("row {pivot} out of range for n={n}"),
        });
    }
    let p = xs.row(pivot);
    let dists: Vec<T> = xs.rows().map(|r| sq_dist(p, r)).collect();
    Ok(xs.mean_of(&argsort_by_dist(&dists)[..n - f]))
}

/// Mean over the `(n - f)`-subset whose empirical covariance has the
/// smallest top eigenvalue.
///
/// Eigenvalues within a relative `1e-9` of the incumbent count as ties, so
/// that subsets with mathematically equal spectra resolve to the
/// lexicographically first one despite power-iteration rounding.
pub fn smea<T: Scalar>(xs: &VectorSet<T>, f: usize) -> Result<Vec<T>> {
    let n = xs.n();
    AggregatorKind::Smea.check_feasible(n, f)?;
    let k = n - f;
    let tie = T::solver_tol(SMEA_TIE_RTOL);
    let mut subset: Vec<usize> = (0..k).collect();
    let mut best = subset.clone();
    let mut best_lambda = T::infinity();
    loop {
        let (lambda, _) = top_eigenpair(&xs.select(&subset), &vec![T::one(); k])?;
        if lambda < best_lambda - tie * best_lambda.abs() || best_lambda.is_infinite() {
            best_lambda = lambda;
            best.copy_from_slice(&subset);
        }
        if !next_combination(&mut subset, n) {
            break;
        }
    }
    Ok(xs.mean_of(&best))
}

fn weighted_mean<T: Scalar>(xs: &VectorSet<T>, w: &[T]) -> Vec<T> {
    let total: T = w.iter().copied().sum();
    let mut acc = vec![T::zero(); xs.d()];
    for (row, &wi) in xs.rows().zip(w) {
        for (a, &x) in acc.iter_mut().zip(row) {
            *a = *a + wi * x;
        }
    }
    acc.into_iter().map(|a| a / total).collect()
}

/// Spectral filter: repeatedly down-weights rows in proportion to their
/// squared projection on the top eigenvector of the weighted covariance.
/// Filtering stops once weight mass `2f` has been removed; the weighted
/// mean of the visited iterate with the smallest top eigenvalue wins.
pub fn caf<T: Scalar>(xs: &VectorSet<T>, f: usize) -> Result<Vec<T>> {
    let n = xs.n();
    AggregatorKind::Caf.check_feasible(n, f)?;
    let budget = T::from_count(2 * f);
    let min_eig = T::lit(CAF_MIN_EIGENVALUE);
    let mut w = vec![T::one(); n];
    let mut best: Option<(T, Vec<T>)> = None;
    for _ in 0..CAF_MAX_ITERS {
        let mu = weighted_mean(xs, &w);
        let (lambda, v) = top_eigenpair(xs, &w)?;
        let removed: T = w.iter().map(|&wi| T::one() - wi).sum();
        let alive = w.iter().filter(|&&wi| wi > T::zero()).count();
        let stop = removed >= budget || alive <= 1 || lambda <= min_eig;
        let proj: Vec<T> = xs
            .rows()
            .map(|r| {
                let p = dot(&sub(r, &mu), &v);
                p * p
            })
            .collect();
        if best.as_ref().is_none_or(|(b, _)| lambda < *b) {
            best = Some((lambda, mu));
        }
        if stop {
            break;
        }
        let tmax = proj
            .iter()
            .zip(&w)
            .filter(|(_, &wi)| wi > T::zero())
            .map(|(&t, _)| t)
            .fold(T::zero(), T::max);
        if tmax <= T::zero() {
            break;
        }
        for (wi, &t) in w.iter_mut().zip(&proj) {
            *wi = (*wi * (T::one() - t / tmax)).max(T::zero());
        }
        if w.iter().all(|&wi| wi <= T::zero()) {
            // Symmetric survivors all hit the maximum projection at once.
            break;
        }
    }
    Ok(best.expect("at least one iterate").1)
}
