//! Dense vector kernels shared by the aggregation rules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

use crate::error::{Error, Result};

/// Floating-point scalar the robust-aggregation math is written against.
pub trait Scalar:
    Float + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Lossy for narrower types.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    /// Relative tolerance for iterative solvers: `requested`, but never
    /// tighter than a few ulps of the type.
    fn solver_tol(requested: f64) -> Self {
        let floor = Self::epsilon() * Self::lit(16.0);
        Self::lit(requested).max(floor)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `n` vectors of a common dimension `d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet<T> {
    data: Vec<T>,
    n: usize,
    d: usize,
}

impl<T: Scalar> VectorSet<T> {
    /// Builds a set from explicit rows, rejecting empty, ragged or non-finite input.
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty)?;
        let d = first.len();
        if d == 0 {
            return Err(Error::ZeroDimension);
        }
        let n = rows.len();
        let mut data = Vec::with_capacity(n * d);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != d {
                return Err(Error::Ragged {
                    row: i,
                    expected: d,
                    got: row.len(),
                });
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { row: i });
            }
            data.extend(row);
        }
        Ok(Self { data, n, d })
    }

    pub fn from_slices(rows: &[&[T]]) -> Result<Self> {
        Self::new(rows.iter().map(|r| r.to_vec()).collect())
    }

    pub fn from_flat(n: usize, d: usize, data: Vec<T>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty);
        }
        if d == 0 {
            return Err(Error::ZeroDimension);
        }
        if data.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { row: pos / d });
        }
        Ok(Self { data, n, d })
    }

    /// `n` copies of `row`.
    pub fn repeat(row: &[T], n: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(n * row.len());
        for _ in 0..n {
            data.extend_from_slice(row);
        }
        Self::from_flat(n, row.len(), data)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_flat(&self) -> &[T] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.rows().map(<[T]>::to_vec).collect()
    }

    /// Appends the rows of `other` below the rows of `self`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if other.d != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: other.d,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self {
            data,
            n: self.n + other.n,
            d: self.d,
        })
    }

    /// New set with rows taken in the order given by `indices`.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            data,
            n: indices.len(),
            d: self.d,
        }
    }

    /// Coordinate-wise arithmetic mean of all rows.
    pub fn mean(&self) -> Vec<T> {
        let mut acc = vec![T::zero(); self.d];
        for row in self.rows() {
            add_assign(&mut acc, row);
        }
        scale(&mut acc, T::one() / T::from_count(self.n));
        acc
    }

    /// Mean of the rows listed in `indices` (non-empty).
    pub fn mean_of(&self, indices: &[usize]) -> Vec<T> {
        debug_assert!(!indices.is_empty());
        let mut acc = vec![T::zero(); self.d];
        for &i in indices {
            add_assign(&mut acc, self.row(i));
        }
        scale(&mut acc, T::one() / T::from_count(indices.len()));
        acc
    }

    /// Applies `f` to every row in place.
    pub fn map_rows(&mut self, mut f: impl FnMut(usize, &mut [T])) {
        for (i, row) in self.data.chunks_exact_mut(self.d).enumerate() {
            f(i, row);
        }
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let t = x - y;
            t * t
        })
        .sum()
}

pub fn add_assign<T: Scalar>(acc: &mut [T], x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a = *a + b;
    }
}

pub fn scale<T: Scalar>(x: &mut [T], c: T) {
    for v in x {
        *v = *v * c;
    }
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

/// Symmetric `n x n` matrix of squared Euclidean distances between rows.
#[allow(clippy::needless_range_loop)]
pub fn pairwise_sq_dists<T: Scalar>(xs: &VectorSet<T>) -> Vec<Vec<T>> {
    let n = xs.n();
    let mut out = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sq_dist(xs.row(i), xs.row(j));
            out[i][j] = d;
            out[j][i] = d;
        }
    }
    out
}

/// Indices `0..dists.len()` ordered by ascending distance, ties by lower index.
pub(crate) fn argsort_by_dist<T: Scalar>(dists: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dists.len()).collect();
    idx.sort_by(|&a, &b| dists[a].partial_cmp(&dists[b]).expect("finite distances"));
    idx
}

/// Per coordinate: sort the `n` values, drop the `drop_low` smallest and
/// `drop_high` largest, and average what remains.
pub fn coord_order_stats<T: Scalar>(
    xs: &VectorSet<T>,
    drop_low: usize,
    drop_high: usize,
) -> Result<Vec<T>> {
    let n = xs.n();
    if drop_low + drop_high >= n {
        return Err(Error::InvalidParam {
            name: "drop_low + drop_high".into(),
            reason: format!("{} + {} must be < n = {}", drop_low, drop_high, n),
        });
    }
    let keep = n - drop_low - drop_high;
    let inv = T::one() / T::from_count(keep);
    let mut column = Vec::with_capacity(n);
    let out = (0..xs.d())
        .map(|j| {
            column.clear();
            column.extend(xs.rows().map(|r| r[j]));
            column.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
            column[drop_low..n - drop_high].iter().copied().sum::<T>() * inv
        })
        .collect();
    Ok(out)
}

const POWER_MAX_ITERS: usize = 1000;
const POWER_RTOL: f64 = 1e-10;

/// Dominant eigenpair of the weighted empirical covariance
/// `sum_i w_i (x_i - mu)(x_i - mu)^T / sum_i w_i`, by power iteration
/// without forming the matrix.
///
/// A zero covariance yields `(0, e_1)`.
pub fn top_eigenpair<T: Scalar>(xs: &VectorSet<T>, weights: &[T]) -> Result<(T, Vec<T>)> {
    if weights.len() != xs.n() {
        return Err(Error::DimensionMismatch {
            expected: xs.n(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| *w < T::zero() || !w.is_finite()) {
        return Err(Error::InvalidParam {
            name: "weights".into(),
            reason: "must be finite and non-negative".into(),
        });
    }
    let total: T = weights.iter().copied().sum();
    if total <= T::zero() {
        return Err(Error::InvalidParam {
            name: "weights".into(),
            reason: "must have a positive sum".into(),
        });
    }

    let d = xs.d();
    let mut mu = vec![T::zero(); d];
    for (row, &w) in xs.rows().zip(weights) {
        for (m, &x) in mu.iter_mut().zip(row) {
            *m = *m + w * x;
        }
    }
    scale(&mut mu, T::one() / total);

    // Centered rows with their normalized weights; zero-weight and
    // zero-deviation rows contribute nothing to the operator.
    let centered: Vec<(T, Vec<T>)> = xs
        .rows()
        .zip(weights)
        .filter(|(_, &w)| w > T::zero())
        .map(|(row, &w)| (w / total, sub(row, &mu)))
        .filter(|(_, c)| c.iter().any(|v| *v != T::zero()))
        .collect();

    let mut e1 = vec![T::zero(); d];
    e1[0] = T::one();
    if centered.is_empty() {
        return Ok((T::zero(), e1));
    }

    let apply = |v: &[T]| -> Vec<T> {
        let mut out = vec![T::zero(); d];
        for (w, c) in &centered {
            let coef = *w * dot(c, v);
            for (o, &ci) in out.iter_mut().zip(c) {
                *o = *o + coef * ci;
            }
        }
        out
    };

    let ones = vec![T::one() / T::from_count(d).sqrt(); d];
    let mut v = ones;
    let mut av = apply(&v);
    if norm(&av) == T::zero() {
        v = e1.clone();
        av = apply(&v);
    }
    if norm(&av) == T::zero() {
        // Start from the largest deviation, which lies in the operator's range.
        let (_, c) = centered
            .iter()
            .max_by(|a, b| norm(&a.1).partial_cmp(&norm(&b.1)).expect("finite"))
            .expect("non-empty");
        v = c.clone();
        let nv = norm(&v);
        scale(&mut v, T::one() / nv);
        av = apply(&v);
    }

    let rtol = T::solver_tol(POWER_RTOL);
    let mut lambda = dot(&v, &av);
    for _ in 0..POWER_MAX_ITERS {
        let nav = norm(&av);
        if nav == T::zero() {
            break;
        }
        v = av;
        scale(&mut v, T::one() / nav);
        av = apply(&v);
        let next = dot(&v, &av);
        let converged = (next - lambda).abs() <= rtol * next.abs();
        lambda = next;
        if converged {
            break;
        }
    }
    Ok((lambda.max(T::zero()), v))
}
