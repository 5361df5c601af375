//! Splitting a labeled dataset across honest clients.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution as _, Gamma};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

/// Disjoint per-client index lists into a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientPartition {
    pub assignments: Vec<Vec<usize>>,
}

impl ClientPartition {
    pub fn n_clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.assignments.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.assignments.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Iid,
    Dirichlet { alpha: f64 },
    GammaSimilarity { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DistributionKind {
    Iid,
    Dirichlet,
    GammaSimilarity,
}

impl DistributionKind {
    pub const ALL: [DistributionKind; 3] = [Self::Iid, Self::Dirichlet, Self::GammaSimilarity];

    pub fn name(self) -> &'static str {
        match self {
            Self::Iid => "iid",
            Self::Dirichlet => "dirichlet_niid",
            Self::GammaSimilarity => "gamma_similarity_niid",
        }
    }

    /// Short tag used in experiment ids.
    pub fn tag(self) -> &'static str {
        match self {
            Self::Iid => "iid",
            Self::Dirichlet => "alpha",
            Self::GammaSimilarity => "gamma",
        }
    }

    pub fn with_parameter(self, p: f64) -> Result<Distribution> {
        match self {
            Self::Iid => Ok(Distribution::Iid),
            Self::Dirichlet if p > 0.0 && p.is_finite() => Ok(Distribution::Dirichlet { alpha: p }),
            Self::Dirichlet => Err(Error::Setting {
                name: "distribution_parameter",
                reason: format!("Dirichlet concentration must be positive and finite, got {p}"),
            }),
            Self::GammaSimilarity if (0.0..=1.0).contains(&p) => {
                Ok(Distribution::GammaSimilarity { gamma: p })
            }
            Self::GammaSimilarity => Err(Error::Setting {
                name: "distribution_parameter",
                reason: format!("gamma similarity must lie in [0, 1], got {p}"),
            }),
        }
    }
}

impl fmt::Display for DistributionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistributionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Core(robustfl_core::Error::UnknownName {
                    what: "data distribution",
                    name: s.to_string(),
                    valid: Self::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", "),
                })
            })
    }
}

impl Distribution {
    pub fn split<R: Rng + ?Sized>(
        &self,
        ds: &LabeledDataset,
        n_honest: usize,
        rng: &mut R,
    ) -> Result<ClientPartition> {
        match *self {
            Self::Iid => iid_split(ds, n_honest, rng),
            Self::Dirichlet { alpha } => dirichlet_split(ds, n_honest, alpha, rng),
            Self::GammaSimilarity { gamma } => gamma_split(ds, n_honest, gamma, rng),
        }
    }
}

fn check_clients(n_honest: usize, m: usize) -> Result<()> {
    if n_honest == 0 || m < n_honest {
        return Err(Error::TooFewSamples {
            clients: n_honest,
            samples: m,
        });
    }
    Ok(())
}

/// Contiguous chunks of `items`, the first `len % n` chunks one longer.
fn even_chunks(items: &[usize], n: usize) -> Vec<Vec<usize>> {
    let (base, extra) = (items.len() / n, items.len() % n);
    let mut out = Vec::with_capacity(n);
    let mut at = 0;
    for k in 0..n {
        let len = base + usize::from(k < extra);
        out.push(items[at..at + len].to_vec());
        at += len;
    }
    out
}

pub fn iid_split<R: Rng + ?Sized>(
    ds: &LabeledDataset,
    n_honest: usize,
    rng: &mut R,
) -> Result<ClientPartition> {
    check_clients(n_honest, ds.len())?;
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(rng);
    Ok(ClientPartition {
        assignments: even_chunks(&idx, n_honest),
    })
}

/// Integer sizes summing to `total`, proportional to `p`. Leftover units go
/// to the largest fractional parts, ties to the lower index.
pub fn largest_remainder(p: &[f64], total: usize) -> Vec<usize> {
    let exact: Vec<f64> = p.iter().map(|&pi| pi * total as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        sizes[k] += 1;
    }
    sizes
}

fn dirichlet_draw<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::Setting {
        name: "distribution_parameter",
        reason: e.to_string(),
    })?;
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        return Ok(draws.into_iter().map(|g| g / total).collect());
    }
    // Every draw underflowed: the limit of a tiny concentration is a point
    // mass on one client.
    let mut p = vec![0.0; n];
    p[rng.random_range(0..n)] = 1.0;
    Ok(p)
}

pub fn dirichlet_split<R: Rng + ?Sized>(
    ds: &LabeledDataset,
    n_honest: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<ClientPartition> {
    check_clients(n_honest, ds.len())?;
    let mut by_class = vec![Vec::new(); ds.n_classes()];
    for i in 0..ds.len() {
        by_class[ds.label(i)].push(i);
    }
    let mut assignments = vec![Vec::new(); n_honest];
    for mut pool in by_class {
        if pool.is_empty() {
            continue;
        }
        pool.shuffle(rng);
        let p = dirichlet_draw(alpha, n_honest, rng)?;
        let mut at = 0;
        for (client, size) in largest_remainder(&p, pool.len()).into_iter().enumerate() {
            assignments[client].extend_from_slice(&pool[at..at + size]);
            at += size;
        }
    }
    repair_empty(&mut assignments);
    Ok(ClientPartition { assignments })
}

/// Gives every empty client one sample taken from the currently largest
/// client. Needs at least as many samples as clients.
fn repair_empty(assignments: &mut [Vec<usize>]) {
    for k in 0..assignments.len() {
        if !assignments[k].is_empty() {
            continue;
        }
        let donor = (0..assignments.len())
            .max_by(|&a, &b| assignments[a].len().cmp(&assignments[b].len()).then(b.cmp(&a)))
            .expect("at least one client");
        let moved = assignments[donor].pop().expect("donor holds at least two samples");
        log::warn!("client {k} received no samples; moved sample {moved} from client {donor}");
        assignments[k].push(moved);
    }
}

pub fn gamma_split<R: Rng + ?Sized>(
    ds: &LabeledDataset,
    n_honest: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<ClientPartition> {
    check_clients(n_honest, ds.len())?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Setting {
            name: "distribution_parameter",
            reason: format!("gamma similarity must lie in [0, 1], got {gamma}"),
        });
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(rng);
    let k = (gamma * ds.len() as f64).floor() as usize;
    let (homogeneous, rest) = idx.split_at_mut(k);
    rest.sort_by_key(|&i| ds.label(i));
    let mut assignments = even_chunks(homogeneous, n_honest);
    for (client, block) in assignments.iter_mut().zip(even_chunks(rest, n_honest)) {
        client.extend(block);
    }
    if assignments.iter().any(Vec::is_empty) {
        // Only reachable when m < n, which check_clients already rejects.
        return Err(Error::TooFewSamples {
            clients: n_honest,
            samples: ds.len(),
        });
    }
    Ok(ClientPartition { assignments })
}

/// Mean over clients of the L1 distance between the client's label
/// frequencies and the global ones.
pub fn label_skew(ds: &LabeledDataset, partition: &ClientPartition) -> f64 {
    let c = ds.n_classes();
    let global: Vec<f64> = ds
        .class_counts()
        .into_iter()
        .map(|k| k as f64 / ds.len() as f64)
        .collect();
    let mut total = 0.0;
    for client in &partition.assignments {
        let mut hist = vec![0.0; c];
        for &i in client {
            hist[ds.label(i)] += 1.0;
        }
        let m = client.len().max(1) as f64;
        total += hist.iter().zip(&global).map(|(h, g)| (h / m - g).abs()).sum::<f64>();
    }
    total / partition.n_clients() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn balanced(classes: usize, per_class: usize) -> LabeledDataset {
        let m = classes * per_class;
        let labels = (0..m).map(|i| i % classes).collect();
        LabeledDataset::new((0..m).map(|i| i as f64).collect(), labels, 1, classes).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn iid_sizes() {
        let ds = balanced(2, 2);
        assert_eq!(iid_split(&ds, 2, &mut rng(0)).unwrap().sizes(), vec![2, 2]);
        let ds5 = LabeledDataset::new(vec![0.0; 5], vec![0, 1, 0, 1, 0], 1, 2).unwrap();
        assert_eq!(iid_split(&ds5, 2, &mut rng(0)).unwrap().sizes(), vec![3, 2]);
        let one = iid_split(&ds5, 1, &mut rng(0)).unwrap();
        let mut all = one.assignments[0].clone();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn too_many_clients() {
        let ds = balanced(2, 1);
        assert!(matches!(
            iid_split(&ds, 3, &mut rng(0)),
            Err(Error::TooFewSamples { clients: 3, samples: 2 })
        ));
    }

    #[test]
    fn largest_remainder_rounding() {
        assert_eq!(largest_remainder(&[0.5, 0.5], 5), vec![3, 2]);
        assert_eq!(largest_remainder(&[0.1, 0.6, 0.3], 10), vec![1, 6, 3]);
        assert_eq!(largest_remainder(&[0.34, 0.33, 0.33], 2), vec![1, 1, 0]);
        assert_eq!(largest_remainder(&[1.0], 7), vec![7]);
    }

    #[test]
    fn dirichlet_huge_alpha_is_nearly_uniform() {
        let ds = balanced(2, 200);
        let p = dirichlet_split(&ds, 2, 1e9, &mut rng(5)).unwrap();
        for client in &p.assignments {
            assert!(client.len().abs_diff(200) <= 2, "{}", client.len());
            let zeros = client.iter().filter(|&&i| ds.label(i) == 0).count();
            assert!(zeros.abs_diff(100) <= 2);
        }
        assert_eq!(p.total(), 400);
    }

    #[test]
    fn dirichlet_single_client_and_single_class() {
        let ds = balanced(2, 10);
        let p = dirichlet_split(&ds, 1, 0.5, &mut rng(1)).unwrap();
        assert_eq!(p.sizes(), vec![20]);
        let one = LabeledDataset::new(vec![0.0; 30], vec![0; 30], 1, 2).unwrap();
        let q = dirichlet_split(&one, 3, 0.5, &mut rng(2)).unwrap();
        assert_eq!(q.total(), 30);
        assert!(q.assignments.iter().all(|a| !a.is_empty()));
    }

    #[test]
    fn dirichlet_repairs_empty_clients() {
        let ds = balanced(2, 50);
        for seed in 0..20 {
            let p = dirichlet_split(&ds, 10, 0.01, &mut rng(seed)).unwrap();
            assert!(p.assignments.iter().all(|a| !a.is_empty()));
            assert_eq!(p.total(), 100);
        }
    }

    #[test]
    fn gamma_zero_aligns_with_classes() {
        let ds = balanced(2, 50);
        let p = gamma_split(&ds, 2, 0.0, &mut rng(9)).unwrap();
        assert!(p.assignments[0].iter().all(|&i| ds.label(i) == 0));
        assert!(p.assignments[1].iter().all(|&i| ds.label(i) == 1));
        let all = gamma_split(&ds, 1, 0.0, &mut rng(9)).unwrap();
        assert_eq!(all.sizes(), vec![100]);
    }

    #[test]
    fn gamma_one_matches_iid() {
        let ds = balanced(3, 20);
        let a = gamma_split(&ds, 4, 1.0, &mut rng(4)).unwrap();
        let b = iid_split(&ds, 4, &mut rng(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn names_round_trip() {
        for k in DistributionKind::ALL {
            assert_eq!(k.name().parse::<DistributionKind>().unwrap(), k);
        }
        assert!("label_skew".parse::<DistributionKind>().is_err());
        assert!(DistributionKind::GammaSimilarity.with_parameter(1.5).is_err());
        assert!(DistributionKind::Dirichlet.with_parameter(0.0).is_err());
    }
}
