use std::fs;

use iqa_core::ensemble::*;
use iqa_core::exact::{energy_fraction, WaveFunction};
use iqa_core::models::{sample_sk, ProblemModel};
use iqa_core::schedules::AnnealPath;
use iqa_core::schedules::FieldProfile;
use iqa_core::spectrum::{detect_crossings, CrossingOptions};
use iqa_core::Error;

fn fraction_config(n_values: Vec<usize>, realizations: u64) -> EnsembleConfig {
    EnsembleConfig::new(n_values, realizations, 2024, AnnealPath::diagonal(1.0, 0.01).unwrap())
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn single_realization_is_reproducible() {
    let cfg = fraction_config(vec![4], 1);
    let a = crossing_fraction(&cfg).unwrap();
    let b = crossing_fraction(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0].n_ok, 1);
    // the same answer straight from the instance
    let model: ProblemModel = sample_sk(4, cfg.seed(4, 0)).unwrap().into();
    let report =
        detect_crossings(&model, &cfg.path, &FieldProfile::ramp(4).unwrap(), &CrossingOptions::new(1, 160)).unwrap();
    assert_eq!(a[0].n_ground_crossing, report.has_ground_crossing() as usize);
}

#[test]
fn resume_reuses_every_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fraction_config(vec![4, 5], 12);
    cfg.output_dir = Some(dir.path().to_path_buf());
    let first = crossing_fraction(&cfg).unwrap();
    let path = dir.path().join(RECORD_FILE);
    let bytes = fs::read(&path).unwrap();
    assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 24);
    let second = crossing_fraction(&cfg).unwrap();
    assert_eq!(first, second);
    assert_eq!(fs::read(&path).unwrap(), bytes, "a resumed run must not recompute anything");
}

#[test]
fn interrupted_record_is_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fraction_config(vec![4], 6);
    cfg.output_dir = Some(dir.path().to_path_buf());
    let full = crossing_fraction(&cfg).unwrap();
    let path = dir.path().join(RECORD_FILE);
    let text = fs::read_to_string(&path).unwrap();
    // chop the last line in half, as a killed writer would
    let cut = text.len() - text.lines().last().unwrap().len() / 2 - 1;
    fs::write(&path, &text[..cut]).unwrap();
    let again = crossing_fraction(&cfg).unwrap();
    assert_eq!(full, again);
    let store = RecordStore::open(dir.path(), &cfg.config_hash()).unwrap();
    assert_eq!(store.len(), 6);
}

#[test]
fn split_workers_agree_with_one_run() {
    let whole = crossing_fraction(&fraction_config(vec![4], 20)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (first, count) in [(0, 8), (8, 12)] {
        let mut cfg = fraction_config(vec![4], count);
        cfg.first_realization = first;
        cfg.output_dir = Some(dir.path().to_path_buf());
        crossing_fraction(&cfg).unwrap();
    }
    let mut merged = fraction_config(vec![4], 20);
    merged.output_dir = Some(dir.path().to_path_buf());
    let before = fs::read(dir.path().join(RECORD_FILE)).unwrap();
    assert_eq!(crossing_fraction(&merged).unwrap(), whole);
    assert_eq!(fs::read(dir.path().join(RECORD_FILE)).unwrap(), before);
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = fraction_config(vec![4, 6], 16);
    let one = in_pool(1, || crossing_fraction(&cfg).unwrap());
    let three = in_pool(3, || crossing_fraction(&cfg).unwrap());
    assert_eq!(one, three);
    for p in &one {
        assert!(p.ci_low <= p.fraction && p.fraction <= p.ci_high);
    }
}

#[test]
fn other_settings_need_another_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fraction_config(vec![4], 2);
    cfg.output_dir = Some(dir.path().to_path_buf());
    crossing_fraction(&cfg).unwrap();
    cfg.base_seed += 1;
    assert!(matches!(crossing_fraction(&cfg), Err(Error::Ensemble(_))));
}

/// A base seed whose first N = 2 instance has no ground crossing.
fn non_crossing_seed() -> u64 {
    (0..200)
        .find(|&b| {
            crossing_fraction(&EnsembleConfig::new(vec![2], 1, b, AnnealPath::diagonal(1.0, 0.01).unwrap())).unwrap()[0]
                .n_ground_crossing
                == 0
        })
        .expect("some instance does not cross")
}

#[test]
fn comparison_without_crossings_is_an_error() {
    let mut cfg = EnsembleConfig::new(vec![2], 1, non_crossing_seed(), AnnealPath::diagonal(1.0, 0.01).unwrap());
    cfg.t_values = vec![1.0];
    let err = final_energy_comparison(&cfg).unwrap_err();
    assert!(err.to_string().contains("realizations"), "{err}");
}

#[test]
fn comparison_rejects_bad_inputs() {
    let mut cfg = fraction_config(vec![4, 6], 2);
    cfg.t_values = vec![1.0];
    assert!(final_energy_comparison(&cfg).is_err());
    let mut cfg = fraction_config(vec![4], 2);
    cfg.t_values = vec![2.0, 1.0];
    assert!(final_energy_comparison(&cfg).is_err());
}

fn crossing_config(n: usize, realizations: u64, dt: f64) -> EnsembleConfig {
    EnsembleConfig::new(vec![n], realizations, 2024, AnnealPath::diagonal(1.0, dt).unwrap())
}

#[test]
fn sudden_limit_keeps_the_uniform_state() {
    let mut cfg = crossing_config(4, 12, 1e-4);
    cfg.t_values = vec![1e-3];
    cfg.max_instances = Some(2);
    let report = final_energy_comparison(&cfg).unwrap();
    assert_eq!(report.instance_seeds.len(), 2);
    // oracle: the uniform superposition's energy fraction
    let want: f64 = report
        .instance_seeds
        .iter()
        .map(|&s| energy_fraction(&WaveFunction::plus_x(4).unwrap(), &sample_sk(4, s).unwrap().into()).unwrap())
        .sum::<f64>()
        / 2.0;
    for protocol in [PROTOCOL_IQA, PROTOCOL_CONVENTIONAL] {
        let p = report.point(1e-3, protocol).unwrap();
        assert_eq!(p.n_instances, 2);
        assert!((p.mean_fraction - want).abs() < 1e-3, "{protocol}: {} vs {want}", p.mean_fraction);
    }
}

#[test]
fn comparison_records_and_plateaus() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = crossing_config(4, 12, 0.05);
    cfg.t_values = vec![5.0, 300.0];
    cfg.max_instances = Some(1);
    cfg.output_dir = Some(dir.path().to_path_buf());
    let report = final_energy_comparison(&cfg).unwrap();
    let conventional = report.plateau(PROTOCOL_CONVENTIONAL).unwrap();
    assert!(conventional.value < 0.01, "{conventional:?}");
    let iqa = report.plateau(PROTOCOL_IQA).unwrap();
    assert_eq!(iqa.change, Some(iqa.value - report.point(5.0, PROTOCOL_IQA).unwrap().mean_fraction));
    // every averaged instance has a stored ground crossing
    let store = RecordStore::open(dir.path(), &cfg.config_hash()).unwrap();
    let records = store.records();
    let energies: Vec<_> = records
        .iter()
        .filter_map(|r| match r {
            RunRecord::Energy(e) => Some(e),
            _ => None,
        })
        .collect();
    assert_eq!(energies.len(), 4);
    for e in energies {
        let screened = records
            .iter()
            .any(|r| matches!(r, RunRecord::Screen(s) if s.seed == e.seed && s.ground_crossing_count > 0));
        assert!(screened);
    }
    // resuming the comparison reuses everything
    let before = fs::read(dir.path().join(RECORD_FILE)).unwrap();
    // one instance leaves the standard error undefined (NaN), so compare the serialized form
    let again = final_energy_comparison(&cfg).unwrap();
    assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(&report).unwrap());
    assert_eq!(fs::read(dir.path().join(RECORD_FILE)).unwrap(), before);
}

#[test]
fn wilson_interval_brackets_the_estimate() {
    assert_eq!(wilson_interval(0, 10, WILSON_Z).0, 0.0);
    assert_eq!(wilson_interval(10, 10, WILSON_Z).1, 1.0);
    let (lo, hi) = wilson_interval(5, 10, WILSON_Z);
    assert!((lo - 0.2366).abs() < 1e-4 && (hi - 0.7634).abs() < 1e-4);
}
