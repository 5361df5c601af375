//! Randomized checks shared by the property tests and the acceptance run.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robustfl_core::aggregators::{
    geometric_median, mda, smea, Aggregator, AggregatorKind, AggregatorSpec,
};
use robustfl_core::numerics::{norm, top_eigenpair};
use robustfl_core::preaggregators::{arc, bucketing, nnm, static_clipping};
use robustfl_core::VectorSet64 as VectorSet;

fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> VectorSet {
    VectorSet::new(
        (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-scale..scale)).collect())
            .collect(),
    )
    .unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Smallest feasible n for the rule given f, plus some slack.
fn feasible_n(kind: AggregatorKind, f: usize, extra: usize) -> usize {
    let base = match kind {
        AggregatorKind::TrMean => 2 * f + 1,
        AggregatorKind::MultiKrum => f + 2,
        _ => f + 1,
    };
    base + extra
}

fn run(kind: AggregatorKind, f: usize, xs: &VectorSet) -> Vec<f64> {
    let spec = match kind {
        AggregatorKind::CenteredClipping => AggregatorSpec::new(kind, f).with_param("tau", 1e6),
        _ => AggregatorSpec::new(kind, f),
    };
    Aggregator::new(&spec).unwrap().aggregate(xs).unwrap()
}

pub fn every_rule_fixes_identical_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for kind in AggregatorKind::ALL {
        for _ in 0..100 {
            let f = rng.random_range(0..3);
            let n = feasible_n(kind, f, rng.random_range(0..3));
            let d = rng.random_range(1..5);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
            let xs = VectorSet::repeat(&x, n).unwrap();
            let out = run(kind, f, &xs);
            assert!(max_abs_diff(&out, &x) < 1e-9, "{kind} {out:?} vs {x:?}");
        }
    }
}

const EQUIVARIANT: [AggregatorKind; 9] = [
    AggregatorKind::Average,
    AggregatorKind::Median,
    AggregatorKind::TrMean,
    AggregatorKind::GeometricMedian,
    AggregatorKind::MultiKrum,
    AggregatorKind::MeaMed,
    AggregatorKind::Mda,
    AggregatorKind::MoNNA,
    AggregatorKind::Smea,
];

pub fn translation_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for kind in EQUIVARIANT {
        for _ in 0..100 {
            let f = rng.random_range(0..3);
            let mut n = feasible_n(kind, f, rng.random_range(0..4));
            if kind == AggregatorKind::MeaMed && n.is_multiple_of(2) {
                n += 1;
            }
            let d = rng.random_range(1..5);
            let xs = random_set(&mut rng, n, d, 1.0);
            let t: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
            let shifted = VectorSet::new(
                xs.rows()
                    .map(|r| r.iter().zip(&t).map(|(a, b)| a + b).collect())
                    .collect(),
            )
            .unwrap();
            let base: Vec<f64> = run(kind, f, &xs)
                .iter()
                .zip(&t)
                .map(|(a, b)| a + b)
                .collect();
            let moved = run(kind, f, &shifted);
            assert!(
                max_abs_diff(&base, &moved) < 1e-8,
                "{kind}: {base:?} vs {moved:?}"
            );
        }
    }
}

pub fn permutation_invariance_in_general_position() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let kinds = AggregatorKind::ALL
        .into_iter()
        .filter(|k| !matches!(k, AggregatorKind::MoNNA | AggregatorKind::CenteredClipping));
    for kind in kinds {
        for _ in 0..100 {
            let f = rng.random_range(0..3);
            let mut n = feasible_n(kind, f, rng.random_range(0..4));
            if kind == AggregatorKind::MeaMed && n.is_multiple_of(2) {
                // With even n the two middle values are equidistant from the
                // median, a tie that general position cannot rule out.
                n += 1;
            }
            if matches!(kind, AggregatorKind::Mda | AggregatorKind::Smea) && n - f < 2 {
                // Singleton subsets all have diameter and spread zero.
                n += 1;
            }
            let d = rng.random_range(1..5);
            // Continuous draws: distances and coordinates are distinct almost surely.
            let xs = random_set(&mut rng, n, d, 1.0);
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let a = run(kind, f, &xs);
            let b = run(kind, f, &xs.select(&perm));
            assert!(max_abs_diff(&a, &b) < 1e-9, "{kind}: {a:?} vs {b:?}");
        }
    }
}

fn unit_ball_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let p: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        if norm(&p) <= 1.0 {
            return p;
        }
    }
}

/// Unit vectors scattered within about 30 degrees of a random axis, so the
/// outliers cannot cancel out in the plain average.
fn outlier_directions(rng: &mut ChaCha8Rng, f: usize, d: usize) -> Vec<Vec<f64>> {
    let axis = loop {
        let p = unit_ball_point(rng, d);
        let np = norm(&p);
        if np > 1e-2 {
            break p.iter().map(|v| v / np).collect::<Vec<_>>();
        }
    };
    (0..f)
        .map(|_| {
            let jitter = unit_ball_point(rng, d);
            let u: Vec<f64> = axis.iter().zip(&jitter).map(|(a, j)| a + 0.5 * j).collect();
            let nu = norm(&u);
            u.iter().map(|v| v / nu).collect()
        })
        .collect()
}

pub fn bounded_breakdown() {
    let robust = [
        AggregatorKind::Median,
        AggregatorKind::TrMean,
        AggregatorKind::MeaMed,
        AggregatorKind::Mda,
        AggregatorKind::MultiKrum,
        AggregatorKind::GeometricMedian,
        AggregatorKind::MoNNA,
        AggregatorKind::Smea,
        AggregatorKind::Caf,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let f = rng.random_range(1..4);
        let n = 2 * f + 1 + rng.random_range(0..2);
        let d = rng.random_range(1..5);
        let honest: Vec<Vec<f64>> = (0..n - f).map(|_| unit_ball_point(&mut rng, d)).collect();
        let dirs = outlier_directions(&mut rng, f, d);
        for radius in [1e3, 1e6, 1e9] {
            let mut rows = honest.clone();
            rows.extend(dirs.iter().map(|u| u.iter().map(|v| v * radius).collect()));
            let xs = VectorSet::new(rows).unwrap();
            for kind in robust {
                let out = run(kind, f, &xs);
                // Bounds of geometric-median type scale with n / (n - 2f), never with R.
                assert!(norm(&out) <= 10.0, "{kind} R={radius}: {out:?}");
            }
            let avg = run(AggregatorKind::Average, f, &xs);
            assert!(norm(&avg) >= radius * f as f64 * 0.5 / n as f64 - 1.0);
        }
    }
}

/// Lexicographic subset enumeration written independently of the library.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn mean_of(rows: &[Vec<f64>], s: &[usize]) -> Vec<f64> {
    let d = rows[0].len();
    (0..d)
        .map(|j| s.iter().map(|&i| rows[i][j]).sum::<f64>() / s.len() as f64)
        .collect()
}

fn mda_oracle(rows: &[Vec<f64>], f: usize) -> Vec<f64> {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    // Key: all pairwise squared distances, largest first. Comparing keys
    // compares diameters first and breaks diameter ties on the rest.
    let key = |s: &[usize]| {
        let mut ds = Vec::new();
        for a in 0..s.len() {
            for b in a + 1..s.len() {
                ds.push(dist(&rows[s[a]], &rows[s[b]]));
            }
        }
        ds.sort_by(|x, y| y.partial_cmp(x).unwrap());
        ds
    };
    let best = subsets(rows.len(), rows.len() - f)
        .into_iter()
        .map(|s| (key(&s), s))
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .unwrap();
    mean_of(rows, &best.1)
}

fn smea_oracle(rows: &[Vec<f64>], f: usize) -> Vec<f64> {
    let d = rows[0].len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for s in subsets(rows.len(), rows.len() - f) {
        let mu = mean_of(rows, &s);
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for &i in &s {
            for a in 0..d {
                for b in 0..d {
                    cov[(a, b)] += (rows[i][a] - mu[a]) * (rows[i][b] - mu[b]);
                }
            }
        }
        cov /= s.len() as f64;
        let top = SymmetricEigen::new(cov).eigenvalues.max();
        if best.as_ref().is_none_or(|(b, _)| top < *b) {
            best = Some((top, s));
        }
    }
    mean_of(rows, &best.unwrap().1)
}

pub fn subset_rules_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..50 {
        for n in 1..=8usize {
            for f in 0..=2usize.min(n - 1) {
                let d = rng.random_range(1..4);
                let xs = random_set(&mut rng, n, d, 1.0);
                let rows = xs.to_rows();
                assert!(max_abs_diff(&mda(&xs, f).unwrap(), &mda_oracle(&rows, f)) < 1e-12);
                assert!(max_abs_diff(&smea(&xs, f).unwrap(), &smea_oracle(&rows, f)) < 1e-12);
            }
        }
    }
}

pub fn geometric_median_beats_every_input_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let objective = |xs: &VectorSet, v: &[f64]| {
        xs.rows()
            .map(|r| {
                r.iter()
                    .zip(v)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum::<f64>()
    };
    for _ in 0..100 {
        let n = rng.random_range(1..12);
        let d = rng.random_range(1..6);
        let xs = random_set(&mut rng, n, d, 3.0);
        let v = geometric_median(&xs);
        let at_v = objective(&xs, &v);
        for row in xs.rows() {
            assert!(at_v <= objective(&xs, row) + 1e-6);
        }
    }
}

pub fn top_eigenvalue_matches_dense_decomposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let n = rng.random_range(2..10);
        let d = rng.random_range(1..5);
        let xs = random_set(&mut rng, n, d, 2.0);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = w.iter().sum();
        let mu: Vec<f64> = (0..d)
            .map(|j| xs.rows().zip(&w).map(|(r, wi)| wi * r[j]).sum::<f64>() / total)
            .collect();
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for (r, wi) in xs.rows().zip(&w) {
            for a in 0..d {
                for b in 0..d {
                    cov[(a, b)] += wi * (r[a] - mu[a]) * (r[b] - mu[b]) / total;
                }
            }
        }
        let expected = SymmetricEigen::new(cov).eigenvalues.max();
        let (got, v) = top_eigenpair(&xs, &w).unwrap();
        assert!(
            (got - expected).abs() <= 1e-8 * expected.abs(),
            "{got} vs {expected}"
        );
        assert!((norm(&v) - 1.0).abs() < 1e-12);
    }
}

pub fn preaggregator_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..100 {
        let n = rng.random_range(2..10);
        let d = rng.random_range(1..5);
        let f = rng.random_range(0..n);
        let xs = random_set(&mut rng, n, d, 5.0);

        let mixed = nnm(&xs, f).unwrap();
        assert_eq!((mixed.n(), mixed.d()), (n, d));
        for j in 0..d {
            let lo = xs.rows().map(|r| r[j]).fold(f64::INFINITY, f64::min);
            let hi = xs.rows().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
            assert!(mixed
                .rows()
                .all(|r| r[j] >= lo - 1e-12 && r[j] <= hi + 1e-12));
        }

        let c = rng.random_range(0.1..5.0);
        let clipped = static_clipping(&xs, c);
        assert!(clipped.rows().all(|r| norm(r) <= c + 1e-12));

        let out = arc(&xs, f).unwrap();
        assert_eq!((out.n(), out.d()), (n, d));
        let mut norms: Vec<f64> = xs.rows().map(norm).collect();
        norms.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let k = 2 * f * (n - f) / n;
        let cap = norms[k];
        for (a, b) in xs.rows().zip(out.rows()) {
            assert!(norm(b) <= cap + 1e-12);
            let cos = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (norm(a) * norm(b));
            assert!((cos - 1.0).abs() < 1e-12);
        }

        let s = rng.random_range(1..4);
        let seed = rng.random::<u64>();
        let b1 = bucketing(&xs, s, &mut ChaCha8Rng::seed_from_u64(seed));
        let b2 = bucketing(&xs, s, &mut ChaCha8Rng::seed_from_u64(seed));
        assert_eq!(b1, b2);
        assert_eq!(b1.n(), n.div_ceil(s));
        if n % s == 0 {
            assert!(max_abs_diff(&b1.mean(), &xs.mean()) < 1e-12);
        }
    }
}
