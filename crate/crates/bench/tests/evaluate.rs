use std::fs;
use std::path::Path;

use robustfl_bench::evaluate::heatmap_grids;
use robustfl_bench::svg::ramp_color;
use robustfl_bench::{emit_curves, emit_heatmap, worst_case_maximal_accuracy, write_result, CellFilter, ExperimentKey, ExperimentResult};
use robustfl_sim::MetricRow;

#[test]
fn worst_case_reference_values() {
    let v = |xs: &[f64]| xs.to_vec();
    assert_eq!(worst_case_maximal_accuracy(&[vec![v(&[0.8])], vec![v(&[0.6])]]).unwrap(), 0.6);
    assert_eq!(worst_case_maximal_accuracy(&[vec![v(&[0.1, 0.9, 0.7])]]).unwrap(), 0.9);
    assert!((worst_case_maximal_accuracy(&[vec![v(&[0.8]), v(&[0.6])]]).unwrap() - 0.7).abs() < 1e-15);
    assert!(worst_case_maximal_accuracy(&[]).is_err());
    assert!(worst_case_maximal_accuracy(&[vec![]]).is_err());
}

#[test]
fn adding_an_attack_never_raises_the_metric() {
    let base = vec![vec![vec![0.2, 0.7], vec![0.9, 0.4]]];
    let a = worst_case_maximal_accuracy(&base).unwrap();
    for extra in [0.0, 0.5, 1.0] {
        let mut more = base.clone();
        more.push(vec![vec![extra]]);
        let b = worst_case_maximal_accuracy(&more).unwrap();
        assert!(b <= a);
        assert!((0.0..=1.0).contains(&b));
    }
}

fn result(agg: &str, attack: &str, f: usize, gamma: f64, seed: u64, accs: &[f64]) -> ExperimentResult {
    ExperimentResult {
        key: ExperimentKey {
            aggregator: agg.into(),
            pre_aggregators: vec![],
            attack: attack.into(),
            f,
            distribution: "gamma_similarity_niid".into(),
            distribution_parameter: Some(gamma),
            seed,
        },
        series: accs
            .iter()
            .enumerate()
            .map(|(i, &a)| MetricRow {
                step: 10 * i,
                test_accuracy: a,
                train_loss: 1.0 - a,
                client_losses: vec![],
            })
            .collect(),
    }
}

fn populate(root: &Path) {
    for (attack, scale) in [("SignFlipping", 1.0), ("ALittleIsEnough", 0.5), ("InnerProductManipulation", 0.8)] {
        for f in [1, 2] {
            for gamma in [0.0, 1.0] {
                for seed in 0..2 {
                    let top = scale * (0.9 - 0.1 * f as f64 + 0.05 * gamma) - 0.01 * seed as f64;
                    write_result(root, &result("Median", attack, f, gamma, seed, &[0.1, top, top / 2.0])).unwrap();
                }
            }
        }
    }
}

#[test]
fn curves_have_one_column_per_attack() {
    let root = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    populate(root.path());
    let filter = CellFilter {
        f: Some(1),
        distribution: Some("gamma1".into()),
        ..CellFilter::default()
    };
    let report = emit_curves(root.path(), out.path(), &filter).unwrap();
    assert_eq!(report.warnings, 0);
    assert_eq!(report.files.len(), 2);
    let csv = fs::read_to_string(out.path().join("curve_Median_f1_gamma1.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(header, ["step", "ALittleIsEnough", "InnerProductManipulation", "SignFlipping"]);
    assert_eq!(csv.lines().count(), 4);
    let svg = fs::read_to_string(out.path().join("curve_Median_f1_gamma1.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);

    let all = emit_curves(root.path(), out.path(), &CellFilter::default()).unwrap();
    assert_eq!(all.files.len(), 8);
}

#[test]
fn empty_results_produce_no_files() {
    let root = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let report = emit_curves(root.path(), &out.path().join("plots"), &CellFilter::default()).unwrap();
    assert!(report.files.is_empty());
    assert!(report.warnings > 0);
    let report = emit_heatmap(&root.path().join("nowhere"), &out.path().join("plots")).unwrap();
    assert!(report.files.is_empty());
    assert!(report.warnings > 0);
}

#[test]
fn heatmap_csv_and_svg_agree() {
    let root = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    populate(root.path());
    // Drop one run to leave a hole.
    fs::remove_file(root.path().join("Median_SignFlipping_f2_gamma0_seed1/metrics.csv")).unwrap();
    let report = emit_heatmap(root.path(), out.path()).unwrap();
    // The incomplete directory and the hole it leaves.
    assert_eq!(report.warnings, 2);
    let csv = fs::read_to_string(out.path().join("heatmap_Median.csv")).unwrap();
    let svg = fs::read_to_string(out.path().join("heatmap_Median.svg")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "f,gamma0,gamma1");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("2,,"), "{}", lines[2]);
    let fills: Vec<&str> = svg
        .split("fill=\"")
        .skip(2)
        .map(|s| s.split('"').next().unwrap())
        .filter(|s| s.starts_with('#') && *s != "#000000")
        .collect();
    let mut expect = Vec::new();
    for line in &lines[1..] {
        for cell in line.split(',').skip(1) {
            expect.push(if cell.is_empty() { "#ffffff".to_string() } else { ramp_color(cell.parse().unwrap()) });
        }
    }
    let rect_fills: Vec<String> = svg
        .lines()
        .filter(|l| l.starts_with("<rect x="))
        .map(|l| l.split("fill=\"").nth(1).unwrap().split('"').next().unwrap().to_string())
        .collect();
    assert_eq!(rect_fills, expect);
    assert!(!fills.is_empty());
    assert!(svg.contains(">\u{2013}<"));

    // f = 1, gamma = 1: the ALIE runs are the worst, seed maxima 0.425 and 0.415.
    let grids = heatmap_grids(&robustfl_bench::results::read_all(root.path()).unwrap().0).unwrap();
    let v = grids[0].cells[0][1].unwrap();
    assert!((v - 0.42).abs() < 1e-12, "{v}");
    let again = emit_heatmap(root.path(), out.path()).unwrap();
    assert_eq!(again.files.len(), 2);
    assert_eq!(fs::read_to_string(out.path().join("heatmap_Median.svg")).unwrap(), svg);
}
