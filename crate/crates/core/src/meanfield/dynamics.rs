//! Recursive mean-field propagation: every spin evolves under
//! `H_eff = −h σ^z − Γ_j σ^x` with `h = p s m^{p-1}` frozen at the left end of
//! each step, using the exact 2×2 exponential.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::saddle::{solve_saddle, SaddlePointQuery};
use crate::error::{Error, Result};
use crate::models::PSpinModel;
use crate::schedules::{AnnealPath, FieldProfile};

/// Spins per rayon task; below this many spins the update runs inline.
const PAR_CHUNK: usize = 2048;

/// `N` single-spin states `a|↑⟩ + b|↓⟩` and the field that last drove them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub t: f64,
    pub amplitudes: Vec<[Complex64; 2]>,
    pub h: f64,
}

/// `exp(−i H_eff dt)` for `H_eff = −h σ^z − Γ σ^x`, row-major.
pub fn rabi_propagator(h: f64, gamma: f64, dt: f64) -> [Complex64; 4] {
    let r = h.hypot(gamma);
    if r == 0.0 {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        return [one, zero, zero, one];
    }
    let (sn, c) = (r * dt).sin_cos();
    let off = Complex64::new(0.0, sn * gamma / r);
    [Complex64::new(c, sn * h / r), off, off, Complex64::new(c, -sn * h / r)]
}

impl MeanFieldState {
    pub fn n_spins(&self) -> usize {
        self.amplitudes.len()
    }

    /// Average `⟨σ^z⟩`, summed in spin order.
    pub fn magnetization(&self) -> f64 {
        let total: f64 = self.amplitudes.iter().map(|[a, b]| a.norm_sqr() - b.norm_sqr()).sum();
        total / self.n_spins() as f64
    }

    pub fn spin_magnetization(&self, j: usize) -> f64 {
        let [a, b] = self.amplitudes[j - 1];
        a.norm_sqr() - b.norm_sqr()
    }

    /// Largest deviation of a single-spin norm from 1.
    pub fn max_norm_error(&self) -> f64 {
        self.amplitudes.iter().map(|[a, b]| (a.norm_sqr() + b.norm_sqr() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Advances every spin by `dt` at fixed `s` and fields `gammas` (index 0
    /// holds spin 1). The field `h` is computed from the current state.
    pub fn step(&mut self, p: u32, s: f64, gammas: &[f64], dt: f64) -> Result<()> {
        if gammas.len() != self.n_spins() {
            return Err(Error::domain(format!("{} fields supplied for {} spins", gammas.len(), self.n_spins())));
        }
        let m = self.magnetization();
        let h = p as f64 * s * m.powi(p as i32 - 1);

        // The profiles produce at most a handful of distinct fields per step.
        let mut cache: Vec<(f64, [Complex64; 4])> = Vec::with_capacity(4);
        for &g in gammas {
            if !cache.iter().any(|(v, _)| *v == g) {
                cache.push((g, rabi_propagator(h, g, dt)));
            }
        }
        let lookup = |g: f64| -> &[Complex64; 4] { &cache.iter().find(|(v, _)| *v == g).expect("cached propagator").1 };
        let update = |amps: &mut [[Complex64; 2]], fields: &[f64]| {
            for (psi, &g) in amps.iter_mut().zip(fields) {
                let u = lookup(g);
                let [a, b] = *psi;
                *psi = [u[0] * a + u[1] * b, u[2] * a + u[3] * b];
            }
        };
        if self.amplitudes.len() > PAR_CHUNK {
            self.amplitudes
                .par_chunks_mut(PAR_CHUNK)
                .zip(gammas.par_chunks(PAR_CHUNK))
                .for_each(|(amps, fields)| update(amps, fields));
        } else {
            update(&mut self.amplitudes, gammas);
        }
        self.h = h;
        self.t += dt;
        Ok(())
    }
}

/// Free-function form of [`MeanFieldState::step`].
pub fn step(state: &mut MeanFieldState, p: u32, s: f64, gammas: &[f64], dt: f64) -> Result<()> {
    state.step(p, s, gammas, dt)
}

/// Ground state of `−h σ^z − Γ σ^x`.
pub fn single_spin_ground_state(h: f64, gamma: f64) -> [Complex64; 2] {
    let r = h.hypot(gamma);
    if r == 0.0 {
        log::warn!("degenerate single-spin ground state (h = 0, Gamma = 0); choosing |up>");
        return [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    }
    if gamma == 0.0 {
        return if h > 0.0 {
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]
        } else {
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]
        };
    }
    let c = h / r;
    let a = ((1.0 + c) / 2.0).sqrt();
    let b = ((1.0 - c) / 2.0).sqrt();
    [Complex64::new(a, 0.0), Complex64::new(b, 0.0)]
}

/// Product of single-spin ground states in the self-consistent field of the
/// lowest-free-energy zero-temperature saddle point at `(q.s, q.tau)`.
pub fn initial_product_state(q: &SaddlePointQuery, profile: &FieldProfile) -> Result<MeanFieldState> {
    if q.beta.is_finite() {
        return Err(Error::domain("initial states are built from the beta = infinity equations"));
    }
    let gammas = profile.gammas(q.s, q.tau);
    let sol = solve_saddle(q, Some(&gammas))?;
    let amplitudes = gammas.iter().map(|&g| single_spin_ground_state(sol.h, g)).collect();
    Ok(MeanFieldState { t: 0.0, amplitudes, h: sol.h })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationSample {
    pub t: f64,
    pub m_z: f64,
    pub energy_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationTrajectory {
    pub samples: Vec<MagnetizationSample>,
    pub final_mz: f64,
    /// Largest single-spin norm error seen at any sample.
    pub max_norm_error: f64,
}

fn check_sizes(profile: &FieldProfile, model: &PSpinModel) -> Result<()> {
    if profile.n_spins != model.n_spins {
        return Err(Error::domain(format!("profile has {} spins, model has {}", profile.n_spins, model.n_spins)));
    }
    Ok(())
}

/// Runs the mean-field dynamics along `path`, recording every `stride`-th
/// step (the first and last points are always recorded).
pub fn run_meanfield(
    path: &AnnealPath,
    profile: &FieldProfile,
    model: &PSpinModel,
    stride: usize,
) -> Result<MagnetizationTrajectory> {
    path.validate()?;
    check_sizes(profile, model)?;
    let stride = stride.max(1);
    let p = model.p;
    let (s0, tau0) = path.at_fraction(0.0);
    let mut state = initial_product_state(&SaddlePointQuery::zero_temperature(s0, tau0, p), profile)?;

    let sample = |state: &MeanFieldState, t: f64| {
        let m = state.magnetization();
        MagnetizationSample { t, m_z: m, energy_density: -m.powi(p as i32) }
    };
    let mut samples = vec![sample(&state, 0.0)];
    let mut max_norm_error = state.max_norm_error();

    let n_steps = path.n_steps();
    let mut gammas = Vec::with_capacity(profile.n_spins);
    for k in 0..n_steps {
        let t0 = path.step_time(k);
        let t1 = path.step_time(k + 1);
        let (s, tau) = path.at_fraction(t0 / path.total_time);
        profile.gammas_into(s, tau, &mut gammas);
        state.step(p, s, &gammas, t1 - t0)?;
        state.t = t1;
        if (k + 1) % stride == 0 || k + 1 == n_steps {
            samples.push(sample(&state, t1));
            max_norm_error = max_norm_error.max(state.max_norm_error());
        }
    }
    Ok(MagnetizationTrajectory { final_mz: state.magnetization(), samples, max_norm_error })
}

/// Instantaneous ground-state magnetization at `n_points` evenly spaced
/// times along the path.
pub fn ground_state_reference_curve(
    path: &AnnealPath,
    profile: &FieldProfile,
    model: &PSpinModel,
    n_points: usize,
) -> Result<Vec<(f64, f64)>> {
    path.validate()?;
    check_sizes(profile, model)?;
    if n_points < 2 {
        return Err(Error::domain("reference curve needs at least 2 points"));
    }
    (0..n_points)
        .map(|i| {
            let u = i as f64 / (n_points - 1) as f64;
            let (s, tau) = path.at_fraction(u);
            let gammas = profile.gammas(s, tau);
            let sol = solve_saddle(&SaddlePointQuery::zero_temperature(s, tau, model.p), Some(&gammas))?;
            Ok((u * path.total_time, sol.m))
        })
        .collect()
}
