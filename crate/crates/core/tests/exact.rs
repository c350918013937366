mod common;

use iqa_core::exact::*;
use iqa_core::models::*;
use iqa_core::schedules::{AnnealPath, FieldProfile, ProfileKind};
use iqa_core::Error;
use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;

fn model_for(n: usize, seed: u64) -> ProblemModel {
    sample_sk(n, seed).unwrap().into()
}

fn fig4() -> ProblemModel {
    make_deterministic_sk(DeterministicKind::Fig4, 4).unwrap().into()
}

#[test]
fn magnetizations_and_energy_match_dense_forms() {
    for seed in 0..5 {
        let model = model_for(3, seed);
        let amps = common::random_state(3, seed + 100);
        let psi = WaveFunction::from_amplitudes(3, amps.clone()).unwrap();
        let v = DVector::from_column_slice(&amps);
        let m = magnetizations(&psi);
        for (a, b) in m.iter().zip(common::magnetizations(&v, 3)) {
            assert!((a - b).abs() < 1e-14);
        }
        let h0 = common::dense_hamiltonian(&model, 1.0, &[0.0; 3]).map(|x| Complex64::new(x, 0.0));
        let e = (v.adjoint() * &h0 * &v)[(0, 0)].re;
        assert!((expected_h0(&psi, &model).unwrap() - e).abs() < 1e-12);
    }
}

#[test]
fn energy_fraction_examples() {
    let model: ProblemModel = SkInstance::new(2, vec![1.0], vec![0.0, 0.0], None).unwrap().into();
    // aligned pair is the ground state, anti-aligned is the top
    assert_eq!(energy_fraction(&WaveFunction::basis(2, 0b00).unwrap(), &model).unwrap(), 0.0);
    assert_eq!(energy_fraction(&WaveFunction::basis(2, 0b01).unwrap(), &model).unwrap(), 1.0);
    assert!((energy_fraction(&WaveFunction::plus_x(2).unwrap(), &model).unwrap() - 0.5).abs() < 1e-15);
    let flat: ProblemModel = SkInstance::new(2, vec![0.0], vec![0.0, 0.0], None).unwrap().into();
    assert!(matches!(energy_fraction(&WaveFunction::plus_x(2).unwrap(), &flat), Err(Error::Domain(_))));
}

#[test]
fn wave_function_validation() {
    assert!(WaveFunction::basis(2, 4).is_err());
    assert!(WaveFunction::from_amplitudes(2, vec![Complex64::new(1.0, 0.0); 4]).is_err());
    assert!(matches!(WaveFunction::plus_x(40), Err(Error::Capacity { .. })));
    let psi = WaveFunction::plus_x(3).unwrap();
    assert!(apply_hamiltonian(&psi, &fig4(), 1.0, &[1.0; 4]).is_err());
}

#[test]
fn uniform_start_for_plain_paths() {
    let model = fig4();
    let path = AnnealPath::diagonal(10.0, 0.1).unwrap();
    let psi = initial_state(&model, &path, &FieldProfile::ramp(4).unwrap()).unwrap();
    assert_eq!(psi, WaveFunction::plus_x(4).unwrap());
}

#[test]
fn matches_dense_reference_for_small_instances() {
    for n in 2..=4 {
        for seed in 0..3u64 {
            let model = model_for(n, seed);
            let path = AnnealPath::diagonal(3.0, 0.1).unwrap();
            let profile = FieldProfile::ramp(n).unwrap();
            let psi0 = common::random_state(n, seed);
            let traj = propagate(
                WaveFunction::from_amplitudes(n, psi0.clone()).unwrap(),
                &path,
                &profile,
                &model,
                &PropagateOptions::default(),
            )
            .unwrap();
            let reference = common::dense_reference(&model, &path, &profile, &psi0, 100);
            assert_eq!(traj.samples.len(), reference.len());
            for (sample, want) in traj.samples.iter().zip(&reference) {
                for (a, b) in sample.magnetizations.iter().zip(want) {
                    assert!((a - b).abs() < 1e-6, "N = {n}, seed = {seed}, t = {}", sample.t);
                }
            }
        }
    }
}

#[test]
fn fig4_spins_freeze() {
    let model = fig4();
    let path = AnnealPath::diagonal(10.0, 0.1).unwrap();
    let profile = FieldProfile::ramp(4).unwrap();
    let psi = initial_state(&model, &path, &profile).unwrap();
    let traj = propagate(psi, &path, &profile, &model, &PropagateOptions::default()).unwrap();
    assert!(traj.max_norm_error < 1e-10);
    let offs: Vec<(usize, f64)> = traj.freeze_log.iter().map(|r| (r.spin, r.field_off_time)).collect();
    for (spin, want) in [(4, 2.5), (3, 5.0), (2, 7.5)] {
        let got = offs.iter().find(|(s, _)| *s == spin).unwrap().1;
        assert!((got - want).abs() < 1e-9, "spin {spin}: {got}");
    }
    for rec in &traj.freeze_log {
        for sample in traj.samples.iter().filter(|s| s.t >= rec.frozen_from - 1e-12) {
            assert!(
                (sample.magnetizations[rec.spin - 1] - rec.m_z).abs() < 1e-8,
                "spin {} at t = {}",
                rec.spin,
                sample.t
            );
        }
    }
}

#[test]
fn single_spin_follows_its_field() {
    // one spin with a small longitudinal field: slow annealing ends near the classical ground state
    let model: ProblemModel = SkInstance::new(1, vec![], vec![1.0], None).unwrap().into();
    let path = AnnealPath::diagonal(50.0, 0.01).unwrap();
    let profile = FieldProfile::homogeneous(1).unwrap();
    let traj =
        propagate(WaveFunction::plus_x(1).unwrap(), &path, &profile, &model, &PropagateOptions::default()).unwrap();
    assert!(traj.final_sample().energy_fraction < 1e-3, "{}", traj.final_sample().energy_fraction);
}

#[test]
fn conventional_protocol_is_adiabatic_at_large_t() {
    let model = fig4();
    let path = AnnealPath::diagonal(400.0, 0.05).unwrap();
    let profile = FieldProfile::homogeneous(4).unwrap();
    let traj =
        propagate(WaveFunction::plus_x(4).unwrap(), &path, &profile, &model, &PropagateOptions { stride: usize::MAX })
            .unwrap();
    assert_eq!(traj.samples.len(), 2);
    assert!(traj.final_sample().energy_fraction < 0.01, "{}", traj.final_sample().energy_fraction);
}

#[test]
fn global_phase_does_not_matter() {
    let model = model_for(3, 9);
    let path = AnnealPath::diagonal(2.0, 0.1).unwrap();
    let profile = FieldProfile::ramp(3).unwrap();
    let amps = common::random_state(3, 5);
    let mut rotated = WaveFunction::from_amplitudes(3, amps.clone()).unwrap();
    rotated.rotate_phase(1.234);
    let a = propagate(
        WaveFunction::from_amplitudes(3, amps).unwrap(),
        &path,
        &profile,
        &model,
        &PropagateOptions::default(),
    )
    .unwrap();
    let b = propagate(rotated, &path, &profile, &model, &PropagateOptions::default()).unwrap();
    for (x, y) in a.samples.iter().zip(&b.samples) {
        for (p, q) in x.magnetizations.iter().zip(&y.magnetizations) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}

#[test]
fn stride_selects_samples() {
    let model = fig4();
    let path = AnnealPath::diagonal(1.0, 0.1).unwrap();
    let profile = FieldProfile::new(ProfileKind::Quench, 4).unwrap();
    let traj =
        propagate(WaveFunction::plus_x(4).unwrap(), &path, &profile, &model, &PropagateOptions { stride: 3 }).unwrap();
    let times: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
    assert_eq!(times.len(), 5);
    assert_eq!(times[0], 0.0);
    assert!((times[4] - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matrix_free_equals_dense(n in 2usize..=4, seed in 0u64..1000, s in 0.0f64..=1.0, g in proptest::collection::vec(0.0f64..=1.0, 4)) {
        let model = model_for(n, seed);
        let gammas = &g[..n];
        let amps = common::random_state(n, seed ^ 0xabc);
        let psi = WaveFunction::from_amplitudes(n, amps.clone()).unwrap();
        let got = apply_hamiltonian(&psi, &model, s, gammas).unwrap();
        let h = common::dense_hamiltonian(&model, s, gammas).map(|x| Complex64::new(x, 0.0));
        let want = h * DVector::from_column_slice(&amps);
        for (a, b) in got.iter().zip(want.iter()) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn propagation_preserves_norm(seed in 0u64..200, t in 0.5f64..5.0) {
        let model = model_for(3, seed);
        let path = AnnealPath::diagonal(t, 0.1).unwrap();
        let traj = propagate(WaveFunction::plus_x(3).unwrap(), &path, &FieldProfile::ramp(3).unwrap(), &model, &PropagateOptions::default()).unwrap();
        prop_assert!(traj.max_norm_error < 1e-10);
    }
}
