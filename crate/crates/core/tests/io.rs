use std::path::PathBuf;

use ndarray::{array, s};
use tsbpca_core::eval::{generate, preset};
use tsbpca_core::io::{read_csv, read_sidecar, read_ts, sidecar_path, write_compact, write_csv};
use tsbpca_core::{compress, Error, Pooling, RunConfig};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn three_case_fixture_parses() {
    let ds = read_ts(fixture("three_cases.ts")).unwrap();
    assert_eq!((ds.n_instances(), ds.n_times(), ds.n_vars()), (3, 5, 2));
    assert_eq!(ds.labels(), Some(&[0, 1, 0][..]));
    assert_eq!(
        ds.values().slice(s![0, .., 0]),
        array![0.1, 0.25, -1.5, 2.0, 3.125]
    );
    assert_eq!(ds.values()[[2, 4, 0]], 100.0);
    assert_eq!(ds.values()[[1, 1, 1]], -2.5);
}

#[test]
fn ts_to_csv_round_trip_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let ds = read_ts(fixture("three_cases.ts")).unwrap();
    let out = dir.path().join("three.csv");
    write_csv(&ds, &out).unwrap();
    let back = read_csv(&out).unwrap();
    assert_eq!(back.values(), ds.values());
    assert_eq!(back.labels(), ds.labels());
}

#[test]
fn malformed_fixtures_fail_loudly() {
    assert!(matches!(
        read_ts(fixture("variable_length.ts")),
        Err(Error::UnsupportedFeature(_))
    ));
    assert!(matches!(
        read_ts(fixture("missing_metadata.ts")),
        Err(Error::MetadataMissing(_))
    ));
    assert!(matches!(
        read_ts(fixture("truncated_case.ts")),
        Err(Error::ParseError { line: 8, .. })
    ));
    assert!(matches!(
        read_ts(fixture("bad_number.ts")),
        Err(Error::ParseError {
            line: 8,
            column: 9,
            ..
        })
    ));
    assert!(matches!(
        read_ts(fixture("missing_dimension.ts")),
        Err(Error::ParseError { line: 8, .. })
    ));
    assert!(matches!(
        read_ts(fixture("undeclared_label.ts")),
        Err(Error::ParseError { line: 8, .. })
    ));
    assert!(matches!(
        read_ts(fixture("does_not_exist.ts")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn compact_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(&preset("stationary-2class", 4).unwrap(), 4).unwrap();
    let config = RunConfig::new(7, 3).with_seed(4);
    let rep = compress(&ds, &config).unwrap();
    let path = dir.path().join("y.csv");
    write_compact(&rep, &path).unwrap();

    let back = read_csv(&path).unwrap();
    assert_eq!(back.values(), rep.values.view());
    assert_eq!(back.labels(), rep.labels.as_deref());
    assert_eq!(back.names().unwrap(), &["c0", "c1", "c2"]);

    let meta = read_sidecar(sidecar_path(&path)).unwrap();
    assert_eq!(meta.config, config);
    assert_eq!(meta.eigen_trajectory.len(), ds.n_batches(7));
    assert_eq!(meta.reports, rep.reports);
    assert_eq!(meta.shape, [40, 100, 3]);

    let raw: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
    for key in ["config", "eigen_trajectory", "reports"] {
        assert!(raw.get(key).is_some(), "sidecar lacks `{key}`");
    }
}

#[test]
fn pooled_output_has_one_step_per_batch() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tsbpca_core::eval::SyntheticSpec::stationary(3, 10, vec![2.0, 1.0, 0.5], 1);
    let ds = generate(&spec, 1).unwrap();
    let rep = compress(
        &ds,
        &RunConfig::new(4, 2).with_pooling(Pooling::MeanOverBatch),
    )
    .unwrap();
    let path = dir.path().join("pooled.csv");
    write_compact(&rep, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let times: std::collections::BTreeSet<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(times.into_iter().collect::<Vec<_>>(), ["0", "1", "2"]);
    assert_eq!(
        read_sidecar(sidecar_path(&path))
            .unwrap()
            .eigen_trajectory
            .len(),
        3
    );
}

#[test]
fn failed_write_leaves_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no/such/dir/y.csv");
    let ds = generate(&preset("stationary", 0).unwrap(), 0).unwrap();
    let rep = compress(&ds, &RunConfig::new(50, 1)).unwrap();
    assert!(matches!(
        write_compact(&rep, &missing),
        Err(Error::Io { .. })
    ));
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}
