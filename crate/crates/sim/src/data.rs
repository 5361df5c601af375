use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Row-major feature matrix plus one class id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    d: usize,
    n_classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, d: usize, n_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Dataset("no samples".into()));
        }
        if d == 0 {
            return Err(Error::Dataset("feature dimension is zero".into()));
        }
        if n_classes < 2 {
            return Err(Error::Dataset(format!("need at least 2 classes, got {n_classes}")));
        }
        if features.len() != labels.len() * d {
            return Err(Error::Dataset(format!(
                "{} feature values for {} samples of dimension {d}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y >= n_classes) {
            return Err(Error::Dataset(format!(
                "sample {i} has label {} outside [0, {n_classes})",
                labels[i]
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Dataset(format!("sample {} has a non-finite feature", i / d)));
        }
        Ok(Self {
            features,
            labels,
            d,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            features.extend_from_slice(self.features(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(features, labels, self.d, self.n_classes)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

fn blob_centers<R: Rng + ?Sized>(n_classes: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n_classes)
        .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

/// `counts[c]` samples around `centers[c]`, grouped by class.
fn sample_blobs<R: Rng + ?Sized>(
    centers: &[Vec<f64>],
    counts: &[usize],
    spread: f64,
    rng: &mut R,
) -> Result<LabeledDataset> {
    let d = centers[0].len();
    let m: usize = counts.iter().sum();
    let mut features = Vec::with_capacity(m * d);
    let mut labels = Vec::with_capacity(m);
    for (c, (center, &count)) in centers.iter().zip(counts).enumerate() {
        for _ in 0..count {
            features.extend(
                center
                    .iter()
                    .map(|&mu| mu + spread * rng.sample::<f64, _>(StandardNormal)),
            );
            labels.push(c);
        }
    }
    LabeledDataset::new(features, labels, d, centers.len())
}

/// `total` spread over `n_classes`, the first `total % n_classes` one larger.
fn balanced_counts(total: usize, n_classes: usize) -> Vec<usize> {
    (0..n_classes)
        .map(|c| total / n_classes + usize::from(c < total % n_classes))
        .collect()
}

fn check_blob_args(n_classes: usize, d: usize, spread: f64) -> Result<()> {
    if n_classes < 2 || d == 0 {
        return Err(Error::Dataset(format!(
            "blobs need at least 2 classes and 1 feature (got {n_classes}, {d})"
        )));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::Dataset(format!("blob spread must be finite and >= 0, got {spread}")));
    }
    Ok(())
}

/// Isotropic Gaussian clusters around standard-normal centers, one cluster
/// per class, samples grouped by class.
pub fn make_blobs<R: Rng + ?Sized>(
    n_classes: usize,
    per_class: usize,
    d: usize,
    spread: f64,
    rng: &mut R,
) -> Result<LabeledDataset> {
    check_blob_args(n_classes, d, spread)?;
    let centers = blob_centers(n_classes, d, rng);
    sample_blobs(&centers, &vec![per_class; n_classes], spread, rng)
}

/// Train and test sets of the given total sizes drawn around the same
/// centers, classes as balanced as the totals allow.
pub fn make_blobs_split<R: Rng + ?Sized>(
    n_classes: usize,
    n_train: usize,
    n_test: usize,
    d: usize,
    spread: f64,
    rng: &mut R,
) -> Result<(LabeledDataset, LabeledDataset)> {
    check_blob_args(n_classes, d, spread)?;
    let centers = blob_centers(n_classes, d, rng);
    let train = sample_blobs(&centers, &balanced_counts(n_train, n_classes), spread, rng)?;
    let test = sample_blobs(&centers, &balanced_counts(n_test, n_classes), spread, rng)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn blobs_are_balanced_and_reproducible() {
        let a = make_blobs(3, 100, 4, 0.5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = make_blobs(3, 100, 4, 0.5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a.len(), 300);
        assert_eq!(a.class_counts(), vec![100, 100, 100]);
        assert_eq!(a, b);
    }

    #[test]
    fn split_sizes() {
        let (tr, te) = make_blobs_split(3, 6000, 1000, 2, 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(tr.class_counts(), vec![2000, 2000, 2000]);
        assert_eq!(te.class_counts(), vec![334, 333, 333]);
    }

    #[test]
    fn rejects_bad_labels_and_shapes() {
        assert!(LabeledDataset::new(vec![0.0; 4], vec![0, 2], 2, 2).is_err());
        assert!(LabeledDataset::new(vec![0.0; 3], vec![0, 1], 2, 2).is_err());
        assert!(LabeledDataset::new(vec![], vec![], 2, 2).is_err());
        assert!(LabeledDataset::new(vec![0.0, f64::NAN], vec![0], 2, 2).is_err());
    }

    #[test]
    fn subset_keeps_rows() {
        let ds = LabeledDataset::new(vec![1., 2., 3., 4., 5., 6.], vec![0, 1, 0], 2, 2).unwrap();
        let s = ds.subset(&[2, 0]).unwrap();
        assert_eq!(s.features(0), &[5., 6.]);
        assert_eq!(s.labels(), &[0, 0]);
    }
}
