//! Static saddle-point equations of the p-spin model in a transverse field.
//!
//! With `h = p s m^{p-1}` the magnetization must satisfy `m = F(m)` where
//! `F` averages the single-spin response `⟨σ^z⟩ = (h/r) tanh(β r)`,
//! `r = √(h² + Γ²)`, over the field distribution. At β = ∞ the response is
//! `h/r`, with `sgn h` (and `sgn 0 = 0`) for Γ = 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid resolution of the fixed-point scan on `[0, 1]`.
const SCAN_POINTS: usize = 20_000;
/// Largest accepted `|F(m) − m|` at a returned solution.
pub const SADDLE_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddlePointQuery {
    pub s: f64,
    pub tau: f64,
    pub p: u32,
    /// Inverse temperature; `f64::INFINITY` selects the ground-state equations.
    pub beta: f64,
}

impl SaddlePointQuery {
    pub fn zero_temperature(s: f64, tau: f64, p: u32) -> Self {
        SaddlePointQuery { s, tau, p, beta: f64::INFINITY }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.s) || !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::domain(format!(
                "saddle query needs s, tau in [0, 1], got s = {}, tau = {}",
                self.s, self.tau
            )));
        }
        if self.p == 0 {
            return Err(Error::domain("saddle query needs p >= 1"));
        }
        if !(self.beta > 0.0) {
            return Err(Error::domain(format!("beta = {} must be positive", self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleSolution {
    pub m: f64,
    pub h: f64,
    /// Free-energy density (ground-state energy density at β = ∞).
    pub f: f64,
    /// `|F(m) − m|` at the returned point.
    pub residual: f64,
}

const ROUNDING_SLACK: f64 = 8.0 * f64::EPSILON;

/// Field distribution as `(Γ, weight)` pairs with weights summing to 1.
fn field_weights(q: &SaddlePointQuery, gammas: Option<&[f64]>) -> Result<Vec<(f64, f64)>> {
    match gammas {
        None => Ok(vec![(1.0, 1.0 - q.tau), (0.0, q.tau)]),
        Some([]) => Err(Error::domain("field array is empty")),
        Some(gs) => {
            // counts first, so a uniform field gets weight exactly 1
            let mut counts: Vec<(f64, usize)> = Vec::new();
            for &g in gs {
                if !(g >= 0.0 && g.is_finite()) {
                    return Err(Error::domain(format!("transverse field {g} must be finite and >= 0")));
                }
                match counts.iter_mut().find(|(v, _)| *v == g) {
                    Some(entry) => entry.1 += 1,
                    None => counts.push((g, 1)),
                }
            }
            let total = gs.len() as f64;
            Ok(counts.into_iter().map(|(g, c)| (g, c as f64 / total)).collect())
        }
    }
}

struct Equations {
    s: f64,
    p: u32,
    beta: f64,
    weights: Vec<(f64, f64)>,
}

impl Equations {
    fn field(&self, m: f64) -> f64 {
        self.p as f64 * self.s * m.powi(self.p as i32 - 1)
    }

    fn response(&self, h: f64, gamma: f64) -> f64 {
        let r = h.hypot(gamma);
        if r == 0.0 {
            return 0.0;
        }
        if self.beta.is_infinite() {
            if gamma == 0.0 {
                h.signum()
            } else {
                h / r
            }
        } else {
            h / r * (self.beta * r).tanh()
        }
    }

    fn map(&self, m: f64) -> f64 {
        let h = self.field(m);
        self.weights.iter().map(|&(g, w)| w * self.response(h, g)).sum()
    }

    fn gap(&self, m: f64) -> f64 {
        self.map(m) - m
    }

    /// `(1/β) ln 2cosh(β r)`, tending to `r` as β → ∞.
    fn log_partition(&self, r: f64) -> f64 {
        if self.beta.is_infinite() {
            r
        } else {
            r + (-2.0 * self.beta * r).exp().ln_1p() / self.beta
        }
    }

    fn free_energy(&self, m: f64) -> f64 {
        let h = self.field(m);
        let kinetic: f64 = self.weights.iter().map(|&(g, w)| w * self.log_partition(h.hypot(g))).sum();
        -self.s * m.powi(self.p as i32) + h * m - kinetic
    }

    fn solution(&self, m: f64) -> SaddleSolution {
        SaddleSolution { m, h: self.field(m), f: self.free_energy(m), residual: self.gap(m).abs() }
    }
}

/// Every fixed point on `[0, 1]`, in increasing `m`.
pub fn saddle_branches(q: &SaddlePointQuery, gammas: Option<&[f64]>) -> Result<Vec<SaddleSolution>> {
    q.validate()?;
    let eq = Equations { s: q.s, p: q.p, beta: q.beta, weights: field_weights(q, gammas)? };

    let mut roots = Vec::new();
    let mut prev_m = 0.0;
    let mut prev_g = eq.gap(0.0);
    if prev_g == 0.0 {
        roots.push(0.0);
    }
    for i in 1..=SCAN_POINTS {
        let m = if i == SCAN_POINTS { 1.0 } else { i as f64 / SCAN_POINTS as f64 };
        let mut g = eq.gap(m);
        // weight sums can miss 1 by an ulp, which would hide the root at m = 1
        if g.abs() <= ROUNDING_SLACK {
            g = 0.0;
        }
        if g == 0.0 {
            roots.push(m);
        } else if prev_g != 0.0 && (g > 0.0) != (prev_g > 0.0) {
            roots.push(bisect(&eq, prev_m, prev_g, m));
        }
        prev_m = m;
        prev_g = g;
    }

    let branches: Vec<SaddleSolution> =
        roots.into_iter().map(|m| eq.solution(m)).filter(|sol| sol.residual < SADDLE_RESIDUAL_TOL).collect();
    if branches.is_empty() {
        return Err(Error::Numeric(format!("no self-consistent magnetization found at s = {}, tau = {}", q.s, q.tau)));
    }
    Ok(branches)
}

fn bisect(eq: &Equations, mut lo: f64, g_lo: f64, mut hi: f64) -> f64 {
    let lo_positive = g_lo > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g = eq.gap(mid);
        if g == 0.0 {
            return mid;
        }
        if (g > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if eq.gap(lo).abs() <= eq.gap(hi).abs() {
        lo
    } else {
        hi
    }
}

/// The fixed point of lowest free energy. Without `gammas`, a fraction τ of
/// the spins has Γ = 0 and the rest Γ = 1.
pub fn solve_saddle(q: &SaddlePointQuery, gammas: Option<&[f64]>) -> Result<SaddleSolution> {
    let branches = saddle_branches(q, gammas)?;
    Ok(branches.into_iter().min_by(|a, b| a.f.total_cmp(&b.f)).expect("non-empty branch list"))
}
