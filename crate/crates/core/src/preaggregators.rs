//! Pre-aggregation transforms and the pre-aggregate-then-aggregate pipeline.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::aggregators::{Aggregator, AggregatorSpec, Params};
use crate::error::{Error, Result};
use crate::numerics::{argsort_by_dist, norm, pairwise_sq_dists, Scalar, VectorSet};

pub const DEFAULT_BUCKET_SIZE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PreAggregatorKind {
    Nnm,
    Bucketing,
    Clipping,
    Arc,
}

impl PreAggregatorKind {
    pub const ALL: [PreAggregatorKind; 4] = [Self::Nnm, Self::Bucketing, Self::Clipping, Self::Arc];

    pub fn name(self) -> &'static str {
        match self {
            Self::Nnm => "NNM",
            Self::Bucketing => "Bucketing",
            Self::Clipping => "Clipping",
            Self::Arc => "ARC",
        }
    }

    fn allowed_params(self) -> &'static [&'static str] {
        match self {
            Self::Bucketing => &["s"],
            Self::Clipping => &["c"],
            Self::Nnm | Self::Arc => &[],
        }
    }
}

impl fmt::Display for PreAggregatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PreAggregatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName {
                what: "pre-aggregator",
                name: s.to_string(),
                valid: Self::ALL.map(Self::name).join(", "),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreAggregatorSpec {
    pub kind: PreAggregatorKind,
    pub f: usize,
    pub params: Params,
}

impl PreAggregatorSpec {
    pub fn new(kind: PreAggregatorKind, f: usize) -> Self {
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

#[derive(Debug, Clone)]
pub struct PreAggregator<T> {
    kind: PreAggregatorKind,
    f: usize,
    clip: T,
    bucket: usize,
}

impl<T: Scalar> PreAggregator<T> {
    pub fn new(spec: &PreAggregatorSpec) -> Result<Self> {
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
        let clip = match (spec.kind, spec.params.get("c")) {
            (PreAggregatorKind::Clipping, None) => {
                return Err(Error::InvalidParam {
                    name: "c".into(),
                    reason: "Clipping requires a norm cap".into(),
                })
            }
            (_, Some(&c)) if !(c > 0.0 && c.is_finite()) => {
                return Err(Error::InvalidParam {
                    name: "c".into(),
                    reason: format!("norm cap must be > 0, got {c}"),
                })
            }
            (_, c) => c.copied().unwrap_or(1.0),
        };
        let bucket = match spec.params.get("s") {
            None => DEFAULT_BUCKET_SIZE,
            Some(&s) if s >= 1.0 && s.fract() == 0.0 && s.is_finite() => s as usize,
            Some(&s) => {
                return Err(Error::InvalidParam {
                    name: "s".into(),
                    reason: format!("bucket size must be an integer >= 1, got {s}"),
                })
            }
        };
        Ok(Self {
            kind: spec.kind,
            f: spec.f,
            clip: T::lit(clip),
            bucket,
        })
    }

    pub fn kind(&self) -> PreAggregatorKind {
        self.kind
    }

    /// Number of rows produced from `n` input rows, or the violated condition.
    pub fn output_rows(&self, n: usize) -> Result<usize> {
        match self.kind {
            PreAggregatorKind::Nnm | PreAggregatorKind::Arc if n <= self.f => {
                Err(Error::Infeasible {
                    rule: self.kind.name(),
                    requirement: "n > f",
                    n,
                    f: self.f,
                })
            }
            PreAggregatorKind::Bucketing => Ok(n.div_ceil(self.bucket)),
            _ => Ok(n),
        }
    }

    pub fn apply<R: Rng + ?Sized>(&self, xs: &VectorSet<T>, rng: &mut R) -> Result<VectorSet<T>> {
        match self.kind {
            PreAggregatorKind::Nnm => nnm(xs, self.f),
            PreAggregatorKind::Bucketing => Ok(bucketing(xs, self.bucket, rng)),
            PreAggregatorKind::Clipping => Ok(static_clipping(xs, self.clip)),
            PreAggregatorKind::Arc => arc(xs, self.f),
        }
    }
}

/// Nearest-neighbor mixing: each row becomes the mean of its `n - f`
/// nearest rows, itself included.
pub fn nnm<T: Scalar>(xs: &VectorSet<T>, f: usize) -> Result<VectorSet<T>> {
    let n = xs.n();
    if n <= f {
        return Err(Error::Infeasible {
            rule: "NNM",
            requirement: "n > f",
            n,
            f,
        });
    }
    let dists = pairwise_sq_dists(xs);
    let mut data = Vec::with_capacity(n * xs.d());
    for row in &dists {
        data.extend(xs.mean_of(&argsort_by_dist(row)[..n - f]));
    }
    VectorSet::from_flat(n, xs.d(), data)
}

/// Bucketing with a shuffle drawn from `rng`.
pub fn bucketing<T: Scalar, R: Rng + ?Sized>(
    xs: &VectorSet<T>,
    s: usize,
    rng: &mut R,
) -> VectorSet<T> {
    let mut order: Vec<usize> = (0..xs.n()).collect();
    order.shuffle(rng);
    bucketing_with_order(xs, s, &order)
}

/// Replaces consecutive groups of `s` rows, taken in `order`, by their
/// means. The last bucket may be smaller.
pub fn bucketing_with_order<T: Scalar>(
    xs: &VectorSet<T>,
    s: usize,
    order: &[usize],
) -> VectorSet<T> {
    assert!(s >= 1, "bucket size must be >= 1");
    assert_eq!(
        order.len(),
        xs.n(),
        "order must be a permutation of the rows"
    );
    let buckets = order.len().div_ceil(s);
    let mut data = Vec::with_capacity(buckets * xs.d());
    for chunk in order.chunks(s) {
        data.extend(xs.mean_of(chunk));
    }
    VectorSet::from_flat(buckets, xs.d(), data).expect("bucket means of finite rows are finite")
}

fn clip_row<T: Scalar>(row: &mut [T], cap: T) {
    let nr = norm(row);
    if nr > cap {
        let c = cap / nr;
        for v in row {
            *v = *v * c;
        }
    }
}

/// Scales every row with norm above `c` down to norm `c`.
pub fn static_clipping<T: Scalar>(xs: &VectorSet<T>, c: T) -> VectorSet<T> {
    let mut out = xs.clone();
    out.map_rows(|_, row| clip_row(row, c));
    out
}

/// Adaptive robust clipping: clips the `floor(2f(n-f)/n)` largest-norm rows
/// to the norm of the next largest one.
pub fn arc<T: Scalar>(xs: &VectorSet<T>, f: usize) -> Result<VectorSet<T>> {
    let n = xs.n();
    if n <= f {
        return Err(Error::Infeasible {
            rule: "ARC",
            requirement: "n > f",
            n,
            f,
        });
    }
    let k = 2 * f * (n - f) / n;
    if k == 0 {
        return Ok(xs.clone());
    }
    let norms: Vec<T> = xs.rows().map(norm).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).expect("finite norms"));
    let cap = norms[order[k]];
    let mut out = xs.clone();
    let clipped = &order[..k];
    out.map_rows(|i, row| {
        if clipped.contains(&i) {
            clip_row(row, cap);
        }
    });
    Ok(out)
}

/// Pre-aggregators applied left to right, followed by an aggregator.
#[derive(Debug, Clone)]
pub struct Pipeline<T> {
    pub pre: Vec<PreAggregator<T>>,
    pub agg: Aggregator<T>,
}

impl<T: Scalar> Pipeline<T> {
    pub fn new(pre: &[PreAggregatorSpec], agg: &AggregatorSpec) -> Result<Self> {
        Ok(Self {
            pre: pre.iter().map(PreAggregator::new).collect::<Result<_>>()?,
            agg: Aggregator::new(agg)?,
        })
    }

    pub fn aggregator(agg: Aggregator<T>) -> Self {
        Self {
            pre: Vec::new(),
            agg,
        }
    }

    /// Validates that `n` input rows survive every stage.
    pub fn check_feasible(&self, n: usize) -> Result<()> {
        let rows = self.pre.iter().try_fold(n, |rows, p| p.output_rows(rows))?;
        self.agg.check_feasible(rows)
    }

    pub fn apply<R: Rng + ?Sized>(&mut self, xs: &VectorSet<T>, rng: &mut R) -> Result<Vec<T>> {
        let mut cur = std::borrow::Cow::Borrowed(xs);
        for p in &self.pre {
            cur = std::borrow::Cow::Owned(p.apply(&cur, rng)?);
        }
        self.agg.aggregate(&cur)
    }

    pub fn reset(&mut self) {
        self.agg.reset();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregators::AggregatorKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn x3() -> VectorSet<f64> {
        VectorSet::new(vec![vec![1., 2., 3.], vec![4., 5., 6.], vec![7., 8., 9.]]).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn nnm_examples() {
        assert_eq!(
            nnm(&x3(), 1).unwrap().to_rows(),
            vec![
                vec![2.5, 3.5, 4.5],
                vec![2.5, 3.5, 4.5],
                vec![5.5, 6.5, 7.5]
            ]
        );
        let same = VectorSet::repeat(&[1.0, 2.0], 3).unwrap();
        assert_eq!(nnm(&same, 1).unwrap(), same);
        assert_eq!(nnm(&x3(), 0).unwrap().to_rows(), vec![vec![4., 5., 6.]; 3]);
        assert!(nnm(&x3(), 3).is_err());
    }

    #[test]
    fn bucketing_examples() {
        let out = bucketing(&x3(), 3, &mut rng());
        assert_eq!(out.to_rows(), vec![vec![4., 5., 6.]]);
        let out = bucketing(&x3(), 10, &mut rng());
        assert_eq!(out.to_rows(), vec![vec![4., 5., 6.]]);

        let mut rows = bucketing(&x3(), 1, &mut rng()).to_rows();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(rows, x3().to_rows());

        let out = bucketing_with_order(&x3(), 2, &[2, 0, 1]);
        assert_eq!(out.to_rows(), vec![vec![4., 5., 6.], vec![4., 5., 6.]]);
    }

    #[test]
    fn clipping_examples() {
        let xs = VectorSet::<f64>::new(vec![vec![3.0, 4.0]]).unwrap();
        let out = static_clipping(&xs, 2.0);
        assert!((out.row(0)[0] - 1.2).abs() < 1e-15 && (out.row(0)[1] - 1.6).abs() < 1e-15);
        assert_eq!(static_clipping(&xs, 5.0), xs);
        let zero = VectorSet::new(vec![vec![0.0, 0.0]]).unwrap();
        assert_eq!(static_clipping(&zero, 1.0), zero);
    }

    #[test]
    fn arc_examples() {
        let out = arc(&x3(), 1).unwrap();
        assert_eq!(out.row(0), x3().row(0));
        assert_eq!(out.row(1), x3().row(1));
        let s = (77.0f64 / 194.0).sqrt();
        for (a, b) in out.row(2).iter().zip([7.0 * s, 8.0 * s, 9.0 * s]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((norm(out.row(2)) - 77f64.sqrt()).abs() < 1e-12);
        assert_eq!(arc(&x3(), 0).unwrap(), x3());
        let same = VectorSet::repeat(&[1.0, 1.0], 4).unwrap();
        assert_eq!(arc(&same, 1).unwrap(), same);
    }

    #[test]
    fn pipeline_examples() {
        let mut p = Pipeline::<f64>::new(
            &[PreAggregatorSpec::new(PreAggregatorKind::Nnm, 1)],
            &AggregatorSpec::new(AggregatorKind::MultiKrum, 1),
        )
        .unwrap();
        assert_eq!(p.apply(&x3(), &mut rng()).unwrap(), vec![2.5, 3.5, 4.5]);

        let mut p =
            Pipeline::<f64>::new(&[], &AggregatorSpec::new(AggregatorKind::Average, 0)).unwrap();
        assert_eq!(p.apply(&x3(), &mut rng()).unwrap(), vec![4., 5., 6.]);

        let mut p = Pipeline::<f64>::new(
            &[PreAggregatorSpec::new(PreAggregatorKind::Clipping, 0).with_param("c", 1e9)],
            &AggregatorSpec::new(AggregatorKind::Median, 0),
        )
        .unwrap();
        assert_eq!(p.apply(&x3(), &mut rng()).unwrap(), vec![4., 5., 6.]);
    }

    #[test]
    fn pipeline_feasibility_follows_bucketing() {
        let p = Pipeline::<f64>::new(
            &[PreAggregatorSpec::new(PreAggregatorKind::Bucketing, 1).with_param("s", 2.0)],
            &AggregatorSpec::new(AggregatorKind::TrMean, 2),
        )
        .unwrap();
        // 9 rows -> 5 buckets > 2f
        assert!(p.check_feasible(9).is_ok());
        // 8 rows -> 4 buckets
        assert!(p.check_feasible(8).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(
            PreAggregator::<f64>::new(&PreAggregatorSpec::new(PreAggregatorKind::Clipping, 0))
                .is_err()
        );
        let bad = PreAggregatorSpec::new(PreAggregatorKind::Clipping, 0).with_param("c", -1.0);
        assert!(PreAggregator::<f64>::new(&bad).is_err());
        let bad = PreAggregatorSpec::new(PreAggregatorKind::Bucketing, 0).with_param("s", 0.0);
        assert!(PreAggregator::<f64>::new(&bad).is_err());
        let bad = PreAggregatorSpec::new(PreAggregatorKind::Nnm, 0).with_param("c", 1.0);
        assert!(PreAggregator::<f64>::new(&bad).is_err());
        assert!("Unknown".parse::<PreAggregatorKind>().is_err());
    }
}
