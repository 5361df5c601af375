use robustfl_bench::results::{metrics_csv, read_result_dir};
use robustfl_bench::{read_result, write_result, Error, ExperimentKey, ExperimentResult};
use robustfl_sim::MetricRow;

fn key() -> ExperimentKey {
    ExperimentKey {
        aggregator: "TrMean".into(),
        pre_aggregators: vec!["Clipping".into(), "NNM".into()],
        attack: "SignFlipping".into(),
        f: 2,
        distribution: "gamma_similarity_niid".into(),
        distribution_parameter: Some(0.33),
        seed: 1,
    }
}

fn row(step: usize, acc: f64, loss: f64, clients: Vec<f64>) -> MetricRow {
    MetricRow {
        step,
        test_accuracy: acc,
        train_loss: loss,
        client_losses: clients,
    }
}

#[test]
fn id_format() {
    assert_eq!(key().id(), "TrMean_Clipping-NNM_SignFlipping_f2_gamma0.33_seed1");
    let iid = ExperimentKey {
        pre_aggregators: vec![],
        distribution: "iid".into(),
        distribution_parameter: None,
        ..key()
    };
    assert_eq!(iid.id(), "TrMean_SignFlipping_f2_iid_seed1");
}

#[test]
fn round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let r = ExperimentResult {
        key: key(),
        series: vec![
            row(0, 1.0 / 3.0, std::f64::consts::LN_2, vec![0.1, 1e-300]),
            #[allow(clippy::excessive_precision)]
            row(50, 0.123456789012345678, 12345.678901234567, vec![2.0 / 7.0, 0.0]),
        ],
    };
    write_result(dir.path(), &r).unwrap();
    assert_eq!(read_result(dir.path(), &r.key).unwrap(), r);
    let leftovers: Vec<_> = std::fs::read_dir(dir.path().join(r.key.id()))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn schema_without_client_columns() {
    let csv = metrics_csv(&[row(0, 0.5, 1.0, vec![])]);
    assert_eq!(csv.lines().next().unwrap(), "step,test_accuracy,train_loss");
    assert!(csv.lines().all(|l| l.split(',').count() == 3));
    let with = metrics_csv(&[row(0, 0.5, 1.0, vec![0.2, 0.3])]);
    assert_eq!(with.lines().next().unwrap(), "step,test_accuracy,train_loss,client0_loss,client1_loss");
}

#[test]
fn absent_result() {
    let dir = tempfile::tempdir().unwrap();
    let err = read_result(dir.path(), &key()).unwrap_err();
    assert!(matches!(err, Error::ResultAbsent(_)));
    assert!(err.to_string().starts_with("result absent"));
    std::fs::create_dir_all(dir.path().join("x")).unwrap();
    assert!(read_result_dir(&dir.path().join("x")).is_err());
}
