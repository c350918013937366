//! State-vector Schrödinger dynamics for small systems.
//!
//! Each step freezes `H(s, τ)` at the left end of the step and applies
//! `exp(−i H dt)` by a Taylor series on the matrix-free operator. The diagonal
//! is shifted by its midpoint (the resulting global phase is restored at the
//! end) and the step is split so every Taylor argument has norm ≤ 1.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{extremes_of, DiagonalSpectrumSummary, ProblemModel, MAX_ENUMERATION_SPINS};
use crate::schedules::{AnnealPath, FieldProfile};

/// Series terms are summed until their norm drops below this.
pub const TAYLOR_TOL: f64 = 1e-16;
const MAX_TAYLOR_TERMS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveFunction {
    pub n_spins: usize,
    pub amplitudes: Vec<Complex64>,
}

fn check_capacity(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("wave function needs at least one spin"));
    }
    if n > MAX_ENUMERATION_SPINS {
        return Err(Error::Capacity { what: "state-vector dynamics", n, max: MAX_ENUMERATION_SPINS });
    }
    Ok(())
}

impl WaveFunction {
    /// Every spin along +x: the uniform superposition.
    pub fn plus_x(n_spins: usize) -> Result<Self> {
        check_capacity(n_spins)?;
        let dim = 1usize << n_spins;
        let a = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
        Ok(WaveFunction { n_spins, amplitudes: vec![a; dim] })
    }

    /// The σ^z basis state of a configuration word.
    pub fn basis(n_spins: usize, word: u64) -> Result<Self> {
        check_capacity(n_spins)?;
        let dim = 1usize << n_spins;
        if word as usize >= dim {
            return Err(Error::domain(format!("configuration {word} has bits beyond {n_spins} spins")));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[word as usize] = Complex64::new(1.0, 0.0);
        Ok(WaveFunction { n_spins, amplitudes })
    }

    /// Wraps amplitudes whose norm is 1 to within 1e−9.
    pub fn from_amplitudes(n_spins: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        check_capacity(n_spins)?;
        if amplitudes.len() != 1 << n_spins {
            return Err(Error::domain(format!("{} amplitudes supplied for {} spins", amplitudes.len(), n_spins)));
        }
        let psi = WaveFunction { n_spins, amplitudes };
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("wave function norm {norm} is not 1")));
        }
        Ok(psi)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Multiplies every amplitude by `e^{iφ}`.
    pub fn rotate_phase(&mut self, phi: f64) {
        let z = Complex64::from_polar(1.0, phi);
        self.amplitudes.iter_mut().for_each(|a| *a *= z);
    }
}

fn check_model(psi: &WaveFunction, model: &ProblemModel) -> Result<()> {
    if psi.n_spins != model.n_spins() {
        return Err(Error::domain(format!("wave function has {} spins, model has {}", psi.n_spins, model.n_spins())));
    }
    Ok(())
}

fn check_fields(n: usize, gammas: &[f64]) -> Result<()> {
    if gammas.len() != n {
        return Err(Error::domain(format!("{} fields supplied for {n} spins", gammas.len())));
    }
    Ok(())
}

/// `H ψ` for `H = s·H0 − Σ_j Γ_j σ^x_j`, without forming a matrix.
pub fn apply_hamiltonian(psi: &WaveFunction, model: &ProblemModel, s: f64, gammas: &[f64]) -> Result<Vec<Complex64>> {
    check_model(psi, model)?;
    check_fields(psi.n_spins, gammas)?;
    let diag = model.diagonal()?;
    let mut out: Vec<Complex64> = psi.amplitudes.iter().zip(&diag).map(|(a, e)| a * (s * e)).collect();
    for (j, &g) in gammas.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let half = 1usize << j;
        for (ob, ib) in out.chunks_mut(2 * half).zip(psi.amplitudes.chunks(2 * half)) {
            let (olo, ohi) = ob.split_at_mut(half);
            let (ilo, ihi) = ib.split_at(half);
            for i in 0..half {
                olo[i] -= ihi[i] * g;
                ohi[i] -= ilo[i] * g;
            }
        }
    }
    Ok(out)
}

/// Per-spin `⟨σ^z_j⟩`, index 0 holding spin 1.
pub fn magnetizations(psi: &WaveFunction) -> Vec<f64> {
    let mut m = vec![0.0; psi.n_spins];
    for (c, a) in psi.amplitudes.iter().enumerate() {
        let p = a.norm_sqr();
        for (j, mj) in m.iter_mut().enumerate() {
            if c >> j & 1 == 0 {
                *mj += p;
            } else {
                *mj -= p;
            }
        }
    }
    m
}

fn expectation_of_diag(psi: &WaveFunction, diag: &[f64]) -> f64 {
    psi.amplitudes.iter().zip(diag).map(|(a, e)| a.norm_sqr() * e).sum()
}

/// `⟨ψ|H0|ψ⟩`.
pub fn expected_h0(psi: &WaveFunction, model: &ProblemModel) -> Result<f64> {
    check_model(psi, model)?;
    Ok(expectation_of_diag(psi, &model.diagonal()?))
}

fn fraction_of(energy: f64, ext: &DiagonalSpectrumSummary) -> Result<f64> {
    let width = ext.e_max - ext.e_min;
    if width <= 0.0 {
        return Err(Error::domain("energy fraction is undefined for a constant H0"));
    }
    Ok((energy - ext.e_min) / width)
}

/// `(⟨H0⟩ − E_min) / (E_max − E_min)`.
pub fn energy_fraction(psi: &WaveFunction, model: &ProblemModel) -> Result<f64> {
    check_model(psi, model)?;
    let diag = model.diagonal()?;
    fraction_of(expectation_of_diag(psi, &diag), &extremes_of(&diag))
}

/// Ground state at the start of the path. For `s = 0` with every field at 1
/// this is the uniform superposition; otherwise it comes from the sector
/// eigensolver.
pub fn initial_state(model: &ProblemModel, path: &AnnealPath, profile: &FieldProfile) -> Result<WaveFunction> {
    let n = model.n_spins();
    let (s, tau) = path.at_fraction(0.0);
    let gammas = profile.gammas(s, tau);
    if s == 0.0 && gammas.iter().all(|&g| g == 1.0) {
        return WaveFunction::plus_x(n);
    }
    let (_, _, vector) = crate::spectrum::ground_state_vector(model, s, &gammas)?;
    WaveFunction::from_amplitudes(n, vector.into_iter().map(|x| Complex64::new(x, 0.0)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactSample {
    pub t: f64,
    pub magnetizations: Vec<f64>,
    /// `⟨H0⟩`.
    pub energy: f64,
    pub energy_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreezeRecord {
    pub spin: usize,
    /// Time at which `Γ_j` first vanishes along the path.
    pub field_off_time: f64,
    /// First step boundary at which the step Hamiltonian has `Γ_j = 0`.
    pub frozen_from: f64,
    pub m_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactTrajectory {
    pub samples: Vec<ExactSample>,
    pub freeze_log: Vec<FreezeRecord>,
    pub final_state: WaveFunction,
    pub max_norm_error: f64,
}

impl ExactTrajectory {
    pub fn final_sample(&self) -> &ExactSample {
        self.samples.last().expect("trajectories always hold the initial sample")
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PropagateOptions {
    /// Record every `stride`-th step; the first and last states are always
    /// recorded.
    pub stride: usize,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        PropagateOptions { stride: 1 }
    }
}

/// Split real and imaginary parts, so the real symmetric operator acts with
/// plain `f64` arithmetic.
struct SplitState {
    re: Vec<f64>,
    im: Vec<f64>,
}

struct Stepper {
    diag: Vec<f64>,
    e_min: f64,
    e_max: f64,
    shifted: Vec<f64>,
    flips: Vec<(usize, f64)>,
    term: SplitState,
    next: SplitState,
}

impl Stepper {
    fn new(diag: Vec<f64>) -> Self {
        let dim = diag.len();
        let ext = extremes_of(&diag);
        let zeros = || SplitState { re: vec![0.0; dim], im: vec![0.0; dim] };
        Stepper {
            diag,
            e_min: ext.e_min,
            e_max: ext.e_max,
            shifted: vec![0.0; dim],
            flips: Vec::new(),
            term: zeros(),
            next: zeros(),
        }
    }

    /// `(out_re, out_im) ← (c·A·in_im, −c·A·in_re)`, i.e. `−i c A` applied
    /// to `in_re + i in_im`.
    fn apply_rotated(shifted: &[f64], flips: &[(usize, f64)], input: &SplitState, out: &mut SplitState, c: f64) {
        let (xr, xi) = (&input.re[..], &input.im[..]);
        let (yr, yi) = (&mut out.re[..], &mut out.im[..]);
        for (((yr, yi), (xr, xi)), d) in yr.iter_mut().zip(yi.iter_mut()).zip(xr.iter().zip(xi)).zip(shifted) {
            let d = c * d;
            *yr = d * xi;
            *yi = -d * xr;
        }
        for &(bit, g) in flips {
            let gc = c * g;
            let half = 1usize << bit;
            if half == 1 {
                for ((yr, yi), (xr, xi)) in
                    yr.chunks_exact_mut(2).zip(yi.chunks_exact_mut(2)).zip(xr.chunks_exact(2).zip(xi.chunks_exact(2)))
                {
                    yr[0] -= gc * xi[1];
                    yr[1] -= gc * xi[0];
                    yi[0] += gc * xr[1];
                    yi[1] += gc * xr[0];
                }
                continue;
            }
            for ((yr, yi), (xr, xi)) in yr
                .chunks_exact_mut(2 * half)
                .zip(yi.chunks_exact_mut(2 * half))
                .zip(xr.chunks_exact(2 * half).zip(xi.chunks_exact(2 * half)))
            {
                let (yr_lo, yr_hi) = yr.split_at_mut(half);
                let (yi_lo, yi_hi) = yi.split_at_mut(half);
                let (xr_lo, xr_hi) = xr.split_at(half);
                let (xi_lo, xi_hi) = xi.split_at(half);
                for i in 0..half {
                    yr_lo[i] -= gc * xi_hi[i];
                    yr_hi[i] -= gc * xi_lo[i];
                    yi_lo[i] += gc * xr_hi[i];
                    yi_hi[i] += gc * xr_lo[i];
                }
            }
        }
    }

    /// Advances `psi` by `dt` under the frozen Hamiltonian and returns the
    /// global phase `−c·dt` still to be applied.
    fn step(&mut self, psi: &mut SplitState, s: f64, gammas: &[f64], dt: f64, t: f64) -> Result<f64> {
        let centre = 0.5 * s * (self.e_min + self.e_max);
        let half_width = 0.5 * s * (self.e_max - self.e_min);
        for (out, e) in self.shifted.iter_mut().zip(&self.diag) {
            *out = s * e - centre;
        }
        self.flips.clear();
        self.flips.extend(gammas.iter().enumerate().filter(|(_, &g)| g != 0.0).map(|(j, &g)| (j, g)));
        let bound = half_width + self.flips.iter().map(|(_, g)| g).sum::<f64>();
        let substeps = ((bound * dt).ceil() as usize).max(1);
        let delta = dt / substeps as f64;

        for _ in 0..substeps {
            self.term.re.copy_from_slice(&psi.re);
            self.term.im.copy_from_slice(&psi.im);
            let mut converged = false;
            for k in 1..=MAX_TAYLOR_TERMS {
                // (−i A δ / k)(x + i y) = (δ/k) A y − i (δ/k) A x
                let c = delta / k as f64;
                Self::apply_rotated(&self.shifted, &self.flips, &self.term, &mut self.next, c);
                std::mem::swap(&mut self.term, &mut self.next);
                let mut norm_sq = 0.0;
                for i in 0..psi.re.len() {
                    psi.re[i] += self.term.re[i];
                    psi.im[i] += self.term.im[i];
                    norm_sq += self.term.re[i] * self.term.re[i] + self.term.im[i] * self.term.im[i];
                }
                if norm_sq.sqrt() < TAYLOR_TOL {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Integrator {
                    t,
                    detail: format!(
                        "Taylor series did not converge in {MAX_TAYLOR_TERMS} terms (operator bound {bound}, substep {delta})"
                    ),
                });
            }
        }
        Ok(-centre * dt)
    }
}

impl SplitState {
    fn from_psi(psi: &WaveFunction) -> Self {
        SplitState {
            re: psi.amplitudes.iter().map(|a| a.re).collect(),
            im: psi.amplitudes.iter().map(|a| a.im).collect(),
        }
    }

    fn to_psi(&self, n_spins: usize, phase: f64) -> WaveFunction {
        let z = Complex64::from_polar(1.0, phase);
        WaveFunction {
            n_spins,
            amplitudes: self.re.iter().zip(&self.im).map(|(&r, &i)| Complex64::new(r, i) * z).collect(),
        }
    }

    fn probabilities(&self) -> impl Iterator<Item = f64> + '_ {
        self.re.iter().zip(&self.im).map(|(r, i)| r * r + i * i)
    }
}

/// Integrates the Schrödinger equation along `path` starting from `psi`.
pub fn propagate(
    psi: WaveFunction,
    path: &AnnealPath,
    profile: &FieldProfile,
    model: &ProblemModel,
    opts: &PropagateOptions,
) -> Result<ExactTrajectory> {
    path.validate()?;
    check_model(&psi, model)?;
    if profile.n_spins != psi.n_spins {
        return Err(Error::domain(format!("profile has {} spins, wave function has {}", profile.n_spins, psi.n_spins)));
    }
    let n = psi.n_spins;
    let norm0 = psi.norm();
    if (norm0 - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("initial wave function norm {norm0} is not 1")));
    }
    let stride = opts.stride.max(1);
    let diag = model.diagonal()?;
    let ext = extremes_of(&diag);
    let mut stepper = Stepper::new(diag);
    let mut state = SplitState::from_psi(&psi);
    drop(psi);

    let sample = |state: &SplitState, diag: &[f64], t: f64| -> Result<(ExactSample, f64)> {
        let mut m = vec![0.0; n];
        let mut energy = 0.0;
        let mut total = 0.0;
        for (c, p) in state.probabilities().enumerate() {
            total += p;
            energy += p * diag[c];
            for (j, mj) in m.iter_mut().enumerate() {
                if c >> j & 1 == 0 {
                    *mj += p;
                } else {
                    *mj -= p;
                }
            }
        }
        let energy_fraction = fraction_of(energy, &ext).unwrap_or(f64::NAN);
        Ok((ExactSample { t, magnetizations: m, energy, energy_fraction }, (total.sqrt() - 1.0).abs()))
    };

    let field_off_times: Vec<Option<f64>> = (1..=n)
        .map(|j| profile.field_off_tau(j).ok().and_then(|tau| path.fraction_at_tau(tau)).map(|u| u * path.total_time))
        .collect();

    let (first, err0) = sample(&state, &stepper.diag, 0.0)?;
    let mut samples = vec![first];
    let mut max_norm_error = err0;
    let mut freeze_log: Vec<FreezeRecord> = Vec::new();
    let mut frozen = vec![false; n];
    let mut phase = 0.0;
    let mut gammas = Vec::with_capacity(n);

    let n_steps = path.n_steps();
    for k in 0..=n_steps {
        let t0 = path.step_time(k);
        let (s, tau) = path.at_fraction(t0 / path.total_time);
        profile.gammas_into(s, tau, &mut gammas);
        let mut newly: Vec<usize> = Vec::new();
        for j in 0..n {
            if !frozen[j] && gammas[j] == 0.0 {
                frozen[j] = true;
                newly.push(j);
            }
        }
        if !newly.is_empty() {
            let m = sample(&state, &stepper.diag, t0)?.0.magnetizations;
            for j in newly {
                freeze_log.push(FreezeRecord {
                    spin: j + 1,
                    field_off_time: field_off_times[j].unwrap_or(t0),
                    frozen_from: t0,
                    m_z: m[j],
                });
            }
        }
        if k == n_steps {
            break;
        }
        let t1 = path.step_time(k + 1);
        phase += stepper.step(&mut state, s, &gammas, t1 - t0, t0)?;
        if (k + 1) % stride == 0 || k + 1 == n_steps {
            let (smp, err) = sample(&state, &stepper.diag, t1)?;
            max_norm_error = max_norm_error.max(err);
            samples.push(smp);
        }
    }
    let final_state = state.to_psi(n, phase);
    Ok(ExactTrajectory { samples, freeze_log, final_state, max_norm_error })
}
