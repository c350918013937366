//! Instantaneous spectra of `H = s·H0 − Σ_j Γ_j σ^x_j`.
//!
//! Once a field is off the corresponding σ^z commutes with `H`, so the
//! Hamiltonian splits into blocks labelled by the values of the frozen spins.
//! Levels in different blocks can cross exactly.

mod crossings;
pub mod lanczos;
mod sector;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crossings::{
    adiabatic_bound, detect_crossings, field_speed_sum, AdiabaticBound, CrossingEvent, CrossingOptions, CrossingReport,
    Degeneracy,
};
pub use sector::{EigenOptions, SectorBlock, SectorLabel};

use crate::error::{Error, Result};
use crate::models::ProblemModel;
use crate::schedules::{AnnealPath, FieldProfile};

/// Largest N accepted by the spectral routines by default.
pub const MAX_SPECTRUM_SPINS: usize = 16;

/// Default number of merged levels kept per grid point.
pub fn default_k_levels(n_spins: usize) -> usize {
    if n_spins >= 4 {
        10
    } else {
        (1usize << n_spins).min(10)
    }
}

/// Default crossing grid: 40 points per spin.
pub fn default_grid_points(n_spins: usize) -> usize {
    40 * n_spins
}

/// Spins whose field is exactly zero at `(s, τ)`.
pub fn frozen_mask(profile: &FieldProfile, s: f64, tau: f64) -> u64 {
    profile.frozen_mask(s, tau)
}

/// The model's diagonal, computed once and shared by every spectral query.
#[derive(Debug, Clone)]
pub struct SpectralProblem {
    pub n_spins: usize,
    pub diag: Vec<f64>,
}

impl SpectralProblem {
    pub fn new(model: &ProblemModel) -> Result<Self> {
        let n = model.n_spins();
        if n > MAX_SPECTRUM_SPINS {
            return Err(Error::Capacity { what: "sector spectra", n, max: MAX_SPECTRUM_SPINS });
        }
        Ok(SpectralProblem { n_spins: n, diag: model.diagonal()? })
    }

    /// `max_c |E(c)|`, the operator norm of the diagonal H0.
    pub fn h0_norm(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    pub fn block(&self, s: f64, gammas: &[f64], sector: SectorLabel) -> Result<SectorBlock> {
        if gammas.len() != self.n_spins || sector.n_spins != self.n_spins {
            return Err(Error::domain("field array or sector does not match the model size"));
        }
        SectorBlock::build(&self.diag, s, gammas, sector)
    }

    /// Lowest `k` levels of one sector, ascending.
    pub fn sector_levels(
        &self,
        s: f64,
        gammas: &[f64],
        sector: SectorLabel,
        k: usize,
        opts: &EigenOptions,
    ) -> Result<Vec<f64>> {
        let block = self.block(s, gammas, sector)?;
        if k > block.dim() {
            log::warn!("requested {k} levels from a block of dimension {}; clipping", block.dim());
        }
        block.lowest_levels(k, opts)
    }

    /// Lowest `k` levels of every sector allowed by the current frozen set.
    pub fn all_sector_levels(
        &self,
        s: f64,
        gammas: &[f64],
        k: usize,
        opts: &EigenOptions,
    ) -> Result<Vec<(SectorLabel, Vec<f64>)>> {
        let mask = mask_of(gammas);
        SectorLabel::enumerate(self.n_spins, mask)
            .into_iter()
            .map(|label| {
                let block = self.block(s, gammas, label)?;
                Ok((label, block.lowest_levels(k.min(block.dim()), opts)?))
            })
            .collect()
    }
}

pub(crate) fn mask_of(gammas: &[f64]) -> u64 {
    gammas.iter().enumerate().filter(|(_, &g)| g == 0.0).fold(0u64, |m, (i, _)| m | 1 << i)
}

/// Lowest `k` eigenvalues of `H` restricted to `sector`.
pub fn sector_spectrum(
    model: &ProblemModel,
    s: f64,
    gammas: &[f64],
    sector: SectorLabel,
    k: usize,
) -> Result<Vec<f64>> {
    let problem = SpectralProblem::new(model)?;
    if mask_of(gammas) != sector.mask {
        return Err(Error::domain(format!(
            "sector mask {:#b} differs from the set of zero fields {:#b}",
            sector.mask,
            mask_of(gammas)
        )));
    }
    problem.sector_levels(s, gammas, sector, k, &EigenOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub energy: f64,
    pub sector: SectorLabel,
    /// Position of the level within its own sector (0 = sector ground).
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSlice {
    pub t_over_t: f64,
    pub s: f64,
    pub tau: f64,
    pub levels: Vec<Level>,
}

/// Merges per-sector levels into the global lowest `k`, ordered by energy and
/// then by sector label.
pub fn merge_levels(per_sector: &[(SectorLabel, Vec<f64>)], k: usize) -> Vec<Level> {
    let mut all: Vec<Level> = per_sector
        .iter()
        .flat_map(|(label, levels)| {
            levels.iter().enumerate().map(move |(index, &energy)| Level { energy, sector: *label, index })
        })
        .collect();
    all.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.sector.cmp(&b.sector)).then(a.index.cmp(&b.index)));
    all.truncate(k);
    all
}

/// Spectrum slice at path fraction `u`, with τ optionally pinned.
pub(crate) fn slice_at(
    problem: &SpectralProblem,
    path: &AnnealPath,
    profile: &FieldProfile,
    u: f64,
    tau_override: Option<f64>,
    k: usize,
    opts: &EigenOptions,
) -> Result<SpectrumSlice> {
    let (s, tau) = path.at_fraction(u);
    let tau = tau_override.unwrap_or(tau);
    let gammas = profile.gammas(s, tau);
    let per_sector = problem.all_sector_levels(s, &gammas, k, opts)?;
    Ok(SpectrumSlice { t_over_t: u, s, tau, levels: merge_levels(&per_sector, k) })
}

fn check_sizes(model: &ProblemModel, profile: &FieldProfile) -> Result<()> {
    if model.n_spins() != profile.n_spins {
        return Err(Error::domain(format!("model has {} spins, profile has {}", model.n_spins(), profile.n_spins)));
    }
    Ok(())
}

/// Lowest `k` levels at `n_grid` evenly spaced points `t/T ∈ [0, 1]`.
pub fn lowest_levels(
    model: &ProblemModel,
    path: &AnnealPath,
    profile: &FieldProfile,
    k: usize,
    n_grid: usize,
) -> Result<Vec<SpectrumSlice>> {
    check_sizes(model, profile)?;
    path.validate()?;
    if n_grid < 2 {
        return Err(Error::domain("spectrum grid needs at least 2 points"));
    }
    let problem = SpectralProblem::new(model)?;
    let opts = EigenOptions::default();
    (0..n_grid)
        .into_par_iter()
        .map(|i| {
            let u = i as f64 / (n_grid - 1) as f64;
            slice_at(&problem, path, profile, u, None, k, &opts)
        })
        .collect()
}

/// Ground energy, sector and normalized real ground vector (indexed by full
/// configuration word) at `(s, gammas)`. Ties between sectors go to the
/// smallest label.
pub fn ground_state_vector(model: &ProblemModel, s: f64, gammas: &[f64]) -> Result<(f64, SectorLabel, Vec<f64>)> {
    let problem = SpectralProblem::new(model)?;
    let opts = EigenOptions::default();
    let per_sector = problem.all_sector_levels(s, gammas, 1, &opts)?;
    let ground = merge_levels(&per_sector, 2);
    if ground.len() > 1 && (ground[1].energy - ground[0].energy).abs() < 1e-12 && ground[1].sector != ground[0].sector {
        log::warn!("ground level is degenerate across sectors {} and {}", ground[0].sector, ground[1].sector);
    }
    let label = ground[0].sector;
    let block = problem.block(s, gammas, label)?;
    let pair = block.lowest_pairs(1, &opts)?.remove(0);
    let mut full = vec![0.0; problem.diag.len()];
    // fix the sign so the largest component is positive
    let pivot = pair.vector.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
    let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
    for (&w, &x) in block.words.iter().zip(&pair.vector) {
        full[w as usize] = sign * x;
    }
    Ok((pair.value, label, full))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{PSpinModel, SkInstance};

    #[test]
    fn transverse_only_ground() {
        let model: ProblemModel = PSpinModel::new(5, 3).unwrap().into();
        let levels = sector_spectrum(&model, 0.0, &[1.0; 5], SectorLabel::full(5), 2).unwrap();
        assert!((levels[0] + 5.0).abs() < 1e-10);
        assert!((levels[1] + 3.0).abs() < 1e-10);
    }

    #[test]
    fn fully_frozen_sectors_are_classical() {
        let sk = SkInstance::new(3, vec![0.3, -0.2, 0.5], vec![0.1, -0.4, 0.2], None).unwrap();
        let model: ProblemModel = sk.into();
        for label in SectorLabel::enumerate(3, 0b111) {
            let e = sector_spectrum(&model, 0.8, &[0.0; 3], label, 1).unwrap();
            assert!((e[0] - 0.8 * model.energy_word(label.values)).abs() < 1e-14);
        }
    }

    #[test]
    fn mask_must_match_fields() {
        let model: ProblemModel = PSpinModel::new(2, 3).unwrap().into();
        let label = SectorLabel::new(2, 0b10, 0).unwrap();
        assert!(sector_spectrum(&model, 0.5, &[1.0, 1.0], label, 1).is_err());
    }
}
