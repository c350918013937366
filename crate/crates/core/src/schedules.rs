//! Annealing paths in the (s, τ) plane and per-spin transverse-field profiles.
//!
//! A path is an affine map `t ↦ (s(t), τ(t))` over `[0, T]`. A profile maps
//! the control parameter (τ for the inhomogeneous schedules, s for the
//! conventional one) to the field Γ_j on each spin. Spin indices are 1-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fields smaller than this are reported as exactly zero.
pub const FIELD_OFF_CLAMP: f64 = 1e-15;

/// Affine annealing path from `(s0, tau0)` at `t = 0` to `(s1, tau1)` at `t = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealPath {
    pub s0: f64,
    pub tau0: f64,
    pub s1: f64,
    pub tau1: f64,
    #[serde(rename = "T")]
    pub total_time: f64,
    pub dt: f64,
}

impl AnnealPath {
    pub fn new(s0: f64, tau0: f64, s1: f64, tau1: f64, total_time: f64, dt: f64) -> Result<Self> {
        let path = AnnealPath { s0, tau0, s1, tau1, total_time, dt };
        path.validate()?;
        Ok(path)
    }

    /// `s(t) = τ(t) = t/T`, the diagonal used for the spin-glass instances.
    pub fn diagonal(total_time: f64, dt: f64) -> Result<Self> {
        Self::new(0.0, 0.0, 1.0, 1.0, total_time, dt)
    }

    /// `s(t) = τ(t) = 1/10 + 9t/(10T)`, the transition-free path through the
    /// p-spin phase diagram.
    pub fn offset_diagonal(total_time: f64, dt: f64) -> Result<Self> {
        Self::new(0.1, 0.1, 1.0, 1.0, total_time, dt)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} = {v} must lie in [0, 1]")))
            }
        };
        unit("s0", self.s0)?;
        unit("tau0", self.tau0)?;
        unit("s1", self.s1)?;
        unit("tau1", self.tau1)?;
        if self.s0 > self.s1 {
            return Err(Error::domain(format!("s0 = {} exceeds s1 = {}", self.s0, self.s1)));
        }
        if self.tau0 > self.tau1 {
            return Err(Error::domain(format!("tau0 = {} exceeds tau1 = {}", self.tau0, self.tau1)));
        }
        if !(self.total_time.is_finite() && self.total_time > 0.0) {
            return Err(Error::domain(format!("T = {} must be positive", self.total_time)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::domain(format!("dt = {} must be positive", self.dt)));
        }
        if self.dt > self.total_time {
            return Err(Error::domain(format!("dt = {} exceeds T = {}", self.dt, self.total_time)));
        }
        Ok(())
    }

    /// `(s, τ)` at time `t ∈ [0, T]`.
    pub fn evaluate(&self, t: f64) -> Result<(f64, f64)> {
        if !(0.0..=self.total_time).contains(&t) {
            return Err(Error::domain(format!("t = {t} outside [0, {}]", self.total_time)));
        }
        Ok(self.at_fraction(t / self.total_time))
    }

    /// `(s, τ)` at `t/T = u`. Written as a convex combination so both
    /// endpoints are reproduced exactly.
    pub fn at_fraction(&self, u: f64) -> (f64, f64) {
        if u >= 1.0 {
            return (self.s1, self.tau1);
        }
        let v = 1.0 - u;
        (self.s0 * v + self.s1 * u, self.tau0 * v + self.tau1 * u)
    }

    /// The fraction `t/T` at which τ reaches `tau`, if the path gets there.
    pub fn fraction_at_tau(&self, tau: f64) -> Option<f64> {
        let span = self.tau1 - self.tau0;
        if span <= 0.0 {
            return if tau == self.tau0 { Some(0.0) } else { None };
        }
        let u = (tau - self.tau0) / span;
        (0.0..=1.0).contains(&u).then_some(u)
    }

    /// Number of integration steps; the last step is shortened if `T` is not
    /// a whole multiple of `dt`.
    pub fn n_steps(&self) -> usize {
        let ratio = self.total_time / self.dt;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
            (nearest as usize).max(1)
        } else {
            ratio.ceil() as usize
        }
    }

    /// Left endpoint of step `k`; `step_time(n_steps()) == T`.
    pub fn step_time(&self, k: usize) -> f64 {
        if k >= self.n_steps() {
            self.total_time
        } else {
            k as f64 * self.dt
        }
    }
}

/// Shape of the per-spin transverse-field schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    /// Each field ramps linearly from 1 to 0 over its own window of width 1/N.
    Ramp,
    /// Each field drops from 1 to 0 at the start of its window.
    Quench,
    /// All fields equal `1 - s` (conventional annealing).
    Homogeneous,
}

impl ProfileKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProfileKind::Ramp => "ramp",
            ProfileKind::Quench => "quench",
            ProfileKind::Homogeneous => "homogeneous",
        }
    }
}

impl std::str::FromStr for ProfileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ramp" => Ok(ProfileKind::Ramp),
            "quench" => Ok(ProfileKind::Quench),
            "homogeneous" => Ok(ProfileKind::Homogeneous),
            other => Err(Error::domain(format!("unknown profile '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldProfile {
    pub kind: ProfileKind,
    pub n_spins: usize,
}

impl FieldProfile {
    pub fn new(kind: ProfileKind, n_spins: usize) -> Result<Self> {
        if n_spins == 0 {
            return Err(Error::domain("profile needs at least one spin"));
        }
        Ok(FieldProfile { kind, n_spins })
    }

    pub fn ramp(n_spins: usize) -> Result<Self> {
        Self::new(ProfileKind::Ramp, n_spins)
    }

    pub fn quench(n_spins: usize) -> Result<Self> {
        Self::new(ProfileKind::Quench, n_spins)
    }

    pub fn homogeneous(n_spins: usize) -> Result<Self> {
        Self::new(ProfileKind::Homogeneous, n_spins)
    }

    /// The parameter the profile is driven by: τ for the inhomogeneous
    /// schedules, s for the conventional one.
    pub fn control(&self, s: f64, tau: f64) -> f64 {
        match self.kind {
            ProfileKind::Homogeneous => s,
            ProfileKind::Ramp | ProfileKind::Quench => tau,
        }
    }

    fn check_spin(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.n_spins {
            Err(Error::domain(format!("spin index {j} outside 1..={}", self.n_spins)))
        } else {
            Ok(())
        }
    }

    /// Γ_j at control value `x` (τ, or s for the homogeneous profile).
    pub fn gamma(&self, j: usize, x: f64) -> Result<f64> {
        self.check_spin(j)?;
        Ok(self.gamma_unchecked(j, x))
    }

    pub(crate) fn gamma_unchecked(&self, j: usize, x: f64) -> f64 {
        let n = self.n_spins as f64;
        let offset = (self.n_spins - j) as f64;
        let g = match self.kind {
            ProfileKind::Ramp => {
                let u = n * x - offset;
                if u < 0.0 {
                    1.0
                } else if u >= 1.0 {
                    0.0
                } else {
                    1.0 - u
                }
            }
            ProfileKind::Quench => {
                if x < offset / n {
                    1.0
                } else {
                    0.0
                }
            }
            ProfileKind::Homogeneous => 1.0 - x,
        };
        if g < FIELD_OFF_CLAMP {
            0.0
        } else {
            g
        }
    }

    /// Fields on all spins, index 0 holding spin 1.
    pub fn gammas(&self, s: f64, tau: f64) -> Vec<f64> {
        let x = self.control(s, tau);
        (1..=self.n_spins).map(|j| self.gamma_unchecked(j, x)).collect()
    }

    pub fn gammas_into(&self, s: f64, tau: f64, out: &mut Vec<f64>) {
        let x = self.control(s, tau);
        out.clear();
        out.extend((1..=self.n_spins).map(|j| self.gamma_unchecked(j, x)));
    }

    /// Smallest τ at which Γ_j vanishes.
    pub fn field_off_tau(&self, j: usize) -> Result<f64> {
        self.check_spin(j)?;
        let n = self.n_spins as f64;
        match self.kind {
            ProfileKind::Ramp => Ok((self.n_spins - j + 1) as f64 / n),
            ProfileKind::Quench => Ok((self.n_spins - j) as f64 / n),
            ProfileKind::Homogeneous => {
                Err(Error::UnsupportedProfile("homogeneous fields never vanish individually before s = 1".into()))
            }
        }
    }

    /// dΓ_j/dx for the continuous profiles. On a ramp window boundary the
    /// slope of the window to the left is used at x = 1 and the window to the
    /// right elsewhere.
    pub fn gamma_slope(&self, j: usize, x: f64) -> Result<f64> {
        self.check_spin(j)?;
        let n = self.n_spins as f64;
        match self.kind {
            ProfileKind::Homogeneous => Ok(-1.0),
            ProfileKind::Ramp => {
                let lo = (self.n_spins - j) as f64 / n;
                let hi = (self.n_spins - j + 1) as f64 / n;
                let inside = (x >= lo && x < hi) || (j == 1 && x >= 1.0);
                Ok(if inside { -n } else { 0.0 })
            }
            ProfileKind::Quench => Err(Error::UnsupportedProfile("quench fields are discontinuous".into())),
        }
    }

    /// Bit set (bit j-1 for spin j) of spins whose field is exactly zero.
    pub fn frozen_mask(&self, s: f64, tau: f64) -> u64 {
        let x = self.control(s, tau);
        (1..=self.n_spins).filter(|&j| self.gamma_unchecked(j, x) == 0.0).fold(0u64, |m, j| m | (1u64 << (j - 1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_endpoints_and_midpoint() {
        let p = AnnealPath::new(0.1, 0.1, 1.0, 1.0, 10.0, 0.1).unwrap();
        assert_eq!(p.evaluate(0.0).unwrap().0, 0.1);
        assert_eq!(p.evaluate(10.0).unwrap().0, 1.0);
        let q = AnnealPath::new(0.0, 0.0, 1.0, 1.0, 4.0, 0.1).unwrap();
        assert_eq!(q.evaluate(2.0).unwrap().0, 0.5);
        assert!(p.evaluate(10.5).is_err());
        assert!(p.evaluate(-0.1).is_err());
    }

    #[test]
    fn path_validation() {
        assert!(AnnealPath::new(0.5, 0.0, 0.4, 1.0, 1.0, 0.1).is_err());
        assert!(AnnealPath::new(0.0, 0.0, 1.0, 1.0, 1.0, -1.0).is_err());
        assert!(AnnealPath::new(0.0, 0.0, 1.0, 1.0, 1.0, 2.0).is_err());
        assert!(AnnealPath::new(0.0, 0.0, 1.2, 1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn step_grid() {
        let p = AnnealPath::diagonal(10.0, 0.1).unwrap();
        assert_eq!(p.n_steps(), 100);
        assert_eq!(p.step_time(100), 10.0);
        assert_eq!(p.step_time(25), 2.5);
        let q = AnnealPath::diagonal(1.0, 0.3).unwrap();
        assert_eq!(q.n_steps(), 4);
        assert_eq!(q.step_time(4), 1.0);
    }

    #[test]
    fn ramp_values() {
        let r = FieldProfile::ramp(4).unwrap();
        assert_eq!(r.gamma(1, 0.0).unwrap(), 1.0);
        assert_eq!(r.gamma(4, 0.125).unwrap(), 0.5);
        assert_eq!(r.gamma(4, 0.25).unwrap(), 0.0);
        assert_eq!(r.gamma(1, 1.0).unwrap(), 0.0);
        assert!(r.gamma(0, 0.5).is_err());
        assert!(r.gamma(5, 0.5).is_err());
    }

    #[test]
    fn quench_values() {
        let q = FieldProfile::quench(4).unwrap();
        assert_eq!(q.gamma(4, 0.0).unwrap(), 0.0);
        assert_eq!(q.gamma(3, 0.0).unwrap(), 1.0);
        assert_eq!(q.gamma(3, 0.25).unwrap(), 0.0);
        assert_eq!(q.gamma(3, 0.2499).unwrap(), 1.0);
    }

    #[test]
    fn homogeneous_values() {
        let h = FieldProfile::homogeneous(3).unwrap();
        assert_eq!(h.gammas(0.25, 0.9), vec![0.75; 3]);
        assert_eq!(h.frozen_mask(1.0, 0.0), 0b111);
        assert_eq!(h.frozen_mask(0.999, 1.0), 0);
    }

    #[test]
    fn field_off_taus() {
        let r = FieldProfile::ramp(4).unwrap();
        assert_eq!(r.field_off_tau(4).unwrap(), 0.25);
        assert_eq!(r.field_off_tau(1).unwrap(), 1.0);
        let q = FieldProfile::quench(4).unwrap();
        assert_eq!(q.field_off_tau(4).unwrap(), 0.0);
        let h = FieldProfile::homogeneous(4).unwrap();
        assert!(matches!(h.field_off_tau(1), Err(Error::UnsupportedProfile(_))));
    }

    #[test]
    fn frozen_mask_ramp() {
        let r = FieldProfile::ramp(4).unwrap();
        assert_eq!(r.frozen_mask(0.0, 0.0), 0);
        assert_eq!(r.frozen_mask(1.0, 1.0), 0b1111);
        assert_eq!(r.frozen_mask(0.3, 0.3), 0b1000);
    }

    #[test]
    fn ramp_slopes() {
        let r = FieldProfile::ramp(4).unwrap();
        for &x in &[0.0, 0.1, 0.25, 0.6, 0.99, 1.0] {
            let total: f64 = (1..=4).map(|j| r.gamma_slope(j, x).unwrap().abs()).sum();
            assert_eq!(total, 4.0, "x = {x}");
        }
    }
}
