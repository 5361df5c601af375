use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robustfl_sim::datadist::{dirichlet_split, gamma_split, iid_split, label_skew};
use robustfl_sim::LabeledDataset;

fn balanced(classes: usize, m: usize) -> LabeledDataset {
    LabeledDataset::new(vec![0.0; m], (0..m).map(|i| i % classes).collect(), 1, classes).unwrap()
}

#[test]
fn skew_grows_with_heterogeneity() {
    let ds = balanced(10, 10_000);
    let (mut dir_ok, mut gamma_ok) = (0, 0);
    for trial in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let lo = label_skew(&ds, &dirichlet_split(&ds, 10, 0.1, &mut rng).unwrap());
        let hi = label_skew(&ds, &dirichlet_split(&ds, 10, 100.0, &mut rng).unwrap());
        dir_ok += usize::from(lo > hi);
        let g0 = label_skew(&ds, &gamma_split(&ds, 10, 0.0, &mut rng).unwrap());
        let g1 = label_skew(&ds, &gamma_split(&ds, 10, 1.0, &mut rng).unwrap());
        gamma_ok += usize::from(g0 > g1);
    }
    assert!(dir_ok >= 95, "dirichlet {dir_ok}/100");
    assert!(gamma_ok >= 95, "gamma {gamma_ok}/100");
}

#[test]
fn splits_are_disjoint_and_reproducible() {
    let ds = balanced(4, 203);
    for seed in 0..10 {
        let parts = [
            iid_split(&ds, 7, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap(),
            dirichlet_split(&ds, 7, 0.3, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap(),
            gamma_split(&ds, 7, 0.4, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap(),
        ];
        for p in &parts {
            let mut all: Vec<usize> = p.assignments.concat();
            all.sort_unstable();
            assert_eq!(all, (0..203).collect::<Vec<_>>());
            assert!(p.assignments.iter().all(|a| !a.is_empty()));
        }
        let again = dirichlet_split(&ds, 7, 0.3, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(again, parts[1]);
    }
}
