mod common;

use iqa_core::models::*;
use iqa_core::schedules::{AnnealPath, FieldProfile};
use iqa_core::spectrum::*;
use iqa_core::Error;
use nalgebra::DMatrix;

fn fig5() -> ProblemModel {
    make_deterministic_sk(DeterministicKind::Fig5, 8).unwrap().into()
}

fn pair() -> ProblemModel {
    SkInstance::new(2, vec![1.0], vec![-1.0, 0.7], None).unwrap().into()
}

/// Lowest eigenvalue of the dense Hamiltonian restricted to one sector.
fn dense_sector_ground(model: &ProblemModel, s: f64, gammas: &[f64], label: SectorLabel) -> f64 {
    let h = common::dense_hamiltonian(model, s, gammas);
    let idx: Vec<usize> = (0..h.nrows()).filter(|&c| c as u64 & label.mask == label.values).collect();
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| h[(idx[a], idx[b])]);
    common::sorted_eigenvalues(&sub)[0]
}

#[test]
fn sector_labels() {
    let all = SectorLabel::enumerate(3, 0b101);
    let values: Vec<u64> = all.iter().map(|l| l.values).collect();
    assert_eq!(values, vec![0b000, 0b001, 0b100, 0b101]);
    assert_eq!(all[1].bit_string(), "-.+");
    assert_eq!(all[0].block_dim(), 2);
    assert!(all[1].conflicts_with(&all[0]));
    assert!(!all[1].conflicts_with(&SectorLabel::new(3, 0b010, 0b010).unwrap()));
    assert!(SectorLabel::new(3, 0b001, 0b010).is_err());
    assert!(SectorLabel::new(2, 0b100, 0).is_err());
}

#[test]
fn frozen_masks_follow_the_ramp() {
    let r = FieldProfile::ramp(4).unwrap();
    assert_eq!(frozen_mask(&r, 0.1, 0.1), 0);
    assert_eq!(frozen_mask(&r, 0.5, 0.5), 0b1100);
    assert_eq!(frozen_mask(&r, 1.0, 1.0), 0b1111);
    assert_eq!(frozen_mask(&FieldProfile::homogeneous(4).unwrap(), 0.9, 0.9), 0);
}

#[test]
fn sector_union_matches_dense_spectrum_on_fig5() {
    let model = fig5();
    let profile = FieldProfile::ramp(8).unwrap();
    let path = AnnealPath::diagonal(1.0, 0.01).unwrap();
    let problem = SpectralProblem::new(&model).unwrap();
    let opts = EigenOptions::default();
    for i in 0..100 {
        let u = i as f64 / 99.0;
        let (s, tau) = path.at_fraction(u);
        let gammas = profile.gammas(s, tau);
        let per_sector = problem.all_sector_levels(s, &gammas, 256, &opts).unwrap();
        let mut union: Vec<f64> = per_sector.iter().flat_map(|(_, l)| l.iter().copied()).collect();
        union.sort_by(f64::total_cmp);
        let dense = common::sorted_eigenvalues(&common::dense_hamiltonian(&model, s, &gammas));
        assert_eq!(union.len(), 256);
        for (a, b) in union.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-8, "u = {u}: {a} vs {b}");
        }
    }
}

#[test]
fn blocks_are_exact_restrictions() {
    let model = fig5();
    let profile = FieldProfile::ramp(8).unwrap();
    let (s, tau) = (0.6, 0.6);
    let gammas = profile.gammas(s, tau);
    let problem = SpectralProblem::new(&model).unwrap();
    let h = common::dense_hamiltonian(&model, s, &gammas);
    let mask = frozen_mask(&profile, s, tau);
    assert_ne!(mask, 0);
    for label in SectorLabel::enumerate(8, mask) {
        let block = problem.block(s, &gammas, label).unwrap();
        let idx: Vec<usize> = (0..256).filter(|&c| c as u64 & mask == label.values).collect();
        let want = DMatrix::from_fn(idx.len(), idx.len(), |a, b| h[(idx[a], idx[b])]);
        assert!((block.dense() - want).abs().max() < 1e-14);
        // nothing leaks out of the sector
        for &c in &idx {
            for d in 0..256 {
                if d as u64 & mask != label.values {
                    assert_eq!(h[(c, d)], 0.0);
                }
            }
        }
    }
}

#[test]
fn sector_spectrum_checks_mask() {
    let model = fig5();
    let gammas = FieldProfile::ramp(8).unwrap().gammas(0.6, 0.6);
    assert!(matches!(sector_spectrum(&model, 0.6, &gammas, SectorLabel::full(8), 1), Err(Error::Domain(_))));
}

#[test]
fn two_spin_crossing_matches_dense_oracle() {
    let model = pair();
    let profile = FieldProfile::ramp(2).unwrap();
    let path = AnnealPath::diagonal(1.0, 0.01).unwrap();
    let report = detect_crossings(&model, &path, &profile, &CrossingOptions::new(1, 200)).unwrap();
    assert_eq!(report.ground_crossings(), 1, "{report:?}");
    let ev = &report.events[0];

    // oracle: ground sector on a fine grid over the window where spin 2 is frozen
    let up = SectorLabel::new(2, 0b10, 0b00).unwrap();
    let down = SectorLabel::new(2, 0b10, 0b10).unwrap();
    let mut switch = None;
    let mut prev: Option<f64> = None;
    for i in 0..=100_000 {
        let tau = 0.5 + 0.5 * i as f64 / 100_000.0;
        if tau >= 1.0 {
            break;
        }
        let g = profile.gammas(tau, tau);
        let diff = dense_sector_ground(&model, tau, &g, up) - dense_sector_ground(&model, tau, &g, down);
        if let Some(p) = prev {
            if p.signum() != diff.signum() {
                switch = Some(tau);
            }
        }
        prev = Some(diff);
    }
    let tau_star = switch.expect("oracle finds a crossing");
    assert!((ev.refined_tau - tau_star).abs() < 1e-5, "{} vs {tau_star}", ev.refined_tau);
    assert_ne!(ev.sector_a, ev.sector_b);
    assert!(ev.gap_left * ev.gap_right <= 0.0);
}

#[test]
fn homogeneous_fields_never_cross() {
    let report = detect_crossings(
        &pair(),
        &AnnealPath::diagonal(1.0, 0.01).unwrap(),
        &FieldProfile::homogeneous(2).unwrap(),
        &CrossingOptions::new(3, 100),
    )
    .unwrap();
    assert!(report.events.is_empty());
}

#[test]
fn fig5_has_exact_ground_crossings() {
    let model = fig5();
    let profile = FieldProfile::ramp(8).unwrap();
    let path = AnnealPath::diagonal(1.0, 0.01).unwrap();
    let report = detect_crossings(&model, &path, &profile, &CrossingOptions::ground_only(8)).unwrap();
    assert!(report.has_ground_crossing());
    for ev in &report.events {
        assert_ne!(ev.sector_a, ev.sector_b);
        assert!(ev.sector_a.conflicts_with(&ev.sector_b));
        assert!(ev.gap_left * ev.gap_right <= 0.0, "{ev:?}");
        assert!(ev.tau_bracket[1] - ev.tau_bracket[0] <= 1e-6 + 1e-15);
    }
    // a finer grid never loses a crossing
    let fine = detect_crossings(&model, &path, &profile, &CrossingOptions::new(1, 640)).unwrap();
    assert!(fine.ground_crossings() >= report.ground_crossings());
}

#[test]
fn lowest_levels_are_sorted() {
    let slices =
        lowest_levels(&fig5(), &AnnealPath::diagonal(1.0, 0.01).unwrap(), &FieldProfile::ramp(8).unwrap(), 10, 11)
            .unwrap();
    assert_eq!(slices.len(), 11);
    for sl in &slices {
        assert_eq!(sl.levels.len(), 10);
        assert!(sl.levels.windows(2).all(|w| w[0].energy <= w[1].energy));
    }
}

#[test]
fn adiabatic_bound_cases() {
    let path = AnnealPath::diagonal(1.0, 0.01).unwrap();
    match adiabatic_bound(&pair(), &path, &FieldProfile::ramp(2).unwrap(), 200).unwrap() {
        AdiabaticBound::Infinite { .. } => {}
        other => panic!("expected an exact crossing, got {other:?}"),
    }
    match adiabatic_bound(&pair(), &path, &FieldProfile::homogeneous(2).unwrap(), 200).unwrap() {
        AdiabaticBound::Finite { time, min_gap, .. } => {
            assert!(time.is_finite() && time > 0.0 && min_gap > 0.0);
        }
        other => panic!("expected a finite bound, got {other:?}"),
    }
    assert!(adiabatic_bound(&pair(), &path, &FieldProfile::quench(2).unwrap(), 50).is_err());
}

#[test]
fn capacity_is_enforced() {
    let model: ProblemModel = PSpinModel::new(MAX_SPECTRUM_SPINS + 1, 3).unwrap().into();
    assert!(matches!(SpectralProblem::new(&model), Err(Error::Capacity { .. })));
}
