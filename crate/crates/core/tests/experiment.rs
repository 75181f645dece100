mod common;

use std::fs;

use common::catalog_dir;
use metaimpute::engine::Method;
use metaimpute::experiment::{
    emit_report, run_experiment, CellOutcome, ExperimentConfig, GridSection, ImputationSection,
};
use metaimpute::metrics::Metric;
use metaimpute::missingness::{Mechanism, Pattern};

fn small_config(out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        seed: 5,
        out: out.to_path_buf(),
        catalog: catalog_dir(),
        datasets: vec!["BH".into(), "WN".into()],
        grid: GridSection {
            mechanisms: vec![Mechanism::Mcar, Mechanism::Mnar],
            patterns: vec![Pattern::Uniform],
            methods: vec![Method::DaeMt, Method::Mean],
        },
        imputation: ImputationSection {
            n_imputations: 2,
            total_epochs: 12,
            ..ImputationSection::default()
        },
        ..ExperimentConfig::default()
    }
}

#[test]
fn reruns_produce_identical_files_and_record_failures() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_experiment(&small_config(a.path())).unwrap();
    let rb = run_experiment(&small_config(b.path())).unwrap();
    emit_report(&ra, a.path()).unwrap();
    emit_report(&rb, b.path()).unwrap();
    for file in ["results.csv", "cells.csv", "tables.txt", "masks/bh_mnar_uniform.mask.csv"] {
        let x = fs::read(a.path().join(file)).unwrap();
        assert_eq!(x, fs::read(b.path().join(file)).unwrap(), "{file} differs");
    }

    assert_eq!(ra.cells.len(), 4);
    assert_eq!(ra.hard_failures(), 2);
    let wn = ra.cell("WN", Mechanism::Mcar, Pattern::Uniform).unwrap();
    match &wn.outcome {
        CellOutcome::Failed { reason } => assert!(reason.contains("winequality"), "{reason}"),
        other => panic!("expected failure, got {other:?}"),
    }

    let results = fs::read_to_string(a.path().join("results.csv")).unwrap();
    assert!(results.lines().skip(1).all(|l| l.starts_with(&ra.config_digest)));
    let sidecar = fs::read_to_string(a.path().join("masks/bh_mcar_uniform.spec.txt")).unwrap();
    assert!(sidecar.contains(&format!("config = {}", ra.config_digest)));
    assert!(sidecar.contains("pattern = uniform"));
}

#[test]
fn all_methods_in_a_cell_share_one_mask() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&small_config(dir.path())).unwrap();
    let cell = report.cell("BH", Mechanism::Mnar, Pattern::Uniform).unwrap().result().unwrap();
    let (_, mask) = metaimpute::missingness::load_mask(&dir.path().join("masks"), "bh_mnar_uniform").unwrap();
    assert_eq!(mask.digest(), cell.mask_digest);
    assert_eq!(cell.methods.len(), 2);
    let cells = fs::read_to_string({
        emit_report(&report, dir.path()).unwrap();
        dir.path().join("cells.csv")
    })
    .unwrap();
    assert!(cells.contains(&cell.mask_digest));
}

#[test]
fn single_mean_cell_on_boston() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        datasets: vec!["BH".into()],
        grid: GridSection {
            mechanisms: vec![Mechanism::Mcar],
            patterns: vec![Pattern::Random],
            methods: vec![Method::Mean],
        },
        ..small_config(dir.path())
    };
    let report = run_experiment(&config).unwrap();
    let s = report
        .summary("BH", Mechanism::Mcar, Pattern::Random, Method::Mean, Metric::RmseSum)
        .unwrap();
    assert_eq!(s.values.len(), 1);
    // One unit of error per vulnerable column, give or take.
    assert!((s.mean - 9.0).abs() < 1.5, "mean imputation scored {}", s.mean);
    let cell = report.cell("BH", Mechanism::Mcar, Pattern::Random).unwrap().result().unwrap();
    assert!((cell.tuned.achieved - 0.158).abs() < 0.01);
}

#[test]
fn empty_dataset_list_is_rejected_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        datasets: vec![],
        ..small_config(dir.path())
    };
    assert!(run_experiment(&config).is_err());
    assert!(!dir.path().join("masks").exists());
}
