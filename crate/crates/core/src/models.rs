//! Diagonal target Hamiltonians.
//!
//! Configurations are `u64` words: bit `j-1` describes spin `j`, a clear bit
//! is σ^z = +1 (up) and a set bit is σ^z = −1 (down). The all-up
//! configuration is therefore the word `0`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest N for which a full 2^N diagonal may be enumerated.
pub const MAX_ENUMERATION_SPINS: usize = 24;

/// σ^z eigenvalue of spin `j` (1-based) in configuration `word`. Words
/// address the first 64 spins; any further spin reads as up.
#[inline]
pub fn spin_value(word: u64, j: usize) -> f64 {
    if bit(word, j - 1) == 0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
fn bit(word: u64, i: usize) -> u64 {
    u32::try_from(i).ok().and_then(|i| word.checked_shr(i)).unwrap_or(0) & 1
}

/// Converts ±1 spins (index 0 holds spin 1) to a configuration word.
pub fn word_from_spins(spins: &[i8]) -> Result<u64> {
    if spins.len() > 64 {
        return Err(Error::domain("configurations are limited to 64 spins"));
    }
    spins.iter().enumerate().try_fold(0u64, |w, (i, &v)| match v {
        1 => Ok(w),
        -1 => Ok(w | 1 << i),
        other => Err(Error::domain(format!("spin value {other} is not ±1"))),
    })
}

/// Fully connected ferromagnet `H0 = −N m^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PSpinModel {
    pub n_spins: usize,
    pub p: u32,
}

impl PSpinModel {
    pub fn new(n_spins: usize, p: u32) -> Result<Self> {
        if n_spins == 0 {
            return Err(Error::domain("p-spin model needs N >= 1"));
        }
        if p == 0 {
            return Err(Error::domain("p-spin exponent must be >= 1"));
        }
        Ok(PSpinModel { n_spins, p })
    }

    /// Energy of a configuration with average magnetization `m`.
    pub fn energy_from_magnetization(&self, m: f64) -> f64 {
        -(self.n_spins as f64) * m.powi(self.p as i32)
    }

    pub fn energy_word(&self, word: u64) -> f64 {
        let mask = low_mask(self.n_spins);
        let down = (word & mask).count_ones() as f64;
        let n = self.n_spins as f64;
        self.energy_from_magnetization((n - 2.0 * down) / n)
    }
}

/// Two-local Ising Hamiltonian `H0 = −Σ_{j<k} J_jk σ_j σ_k − Σ_j h_j σ_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkDocument", into = "SkDocument")]
pub struct SkInstance {
    n_spins: usize,
    /// Upper-triangle couplings in row-major order: (1,2), (1,3), …, (N−1,N).
    couplings: Vec<f64>,
    local_fields: Vec<f64>,
    seed: Option<u64>,
}

/// Deterministic instances with closed-form coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeterministicKind {
    /// `J_jk = cos(j⁴) + cos(k⁴)`, `h_j = cos(j²)`, N = 4.
    Fig4,
    /// `J_jk = cos(j⁵ + k⁵)/2`, `h_j = cos(j)`, N = 8.
    Fig5,
}

#[inline]
fn pair_index(n: usize, j: usize, k: usize) -> usize {
    // 1-based j < k
    let (a, b) = (j - 1, k - 1);
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

impl SkInstance {
    pub fn new(n_spins: usize, couplings: Vec<f64>, local_fields: Vec<f64>, seed: Option<u64>) -> Result<Self> {
        if n_spins == 0 {
            return Err(Error::domain("SK instance needs N >= 1"));
        }
        let pairs = n_spins * (n_spins - 1) / 2;
        if couplings.len() != pairs {
            return Err(Error::domain(format!(
                "expected {pairs} couplings for N = {n_spins}, got {}",
                couplings.len()
            )));
        }
        if local_fields.len() != n_spins {
            return Err(Error::domain(format!("expected {n_spins} local fields, got {}", local_fields.len())));
        }
        if couplings.iter().chain(&local_fields).any(|v| !v.is_finite()) {
            return Err(Error::domain("couplings and fields must be finite"));
        }
        Ok(SkInstance { n_spins, couplings, local_fields, seed })
    }

    /// Builds an instance from closures evaluated at 1-based indices.
    pub fn from_fn(
        n_spins: usize,
        coupling: impl Fn(usize, usize) -> f64,
        field: impl Fn(usize) -> f64,
    ) -> Result<Self> {
        let mut couplings = Vec::with_capacity(n_spins * n_spins.saturating_sub(1) / 2);
        for j in 1..=n_spins {
            for k in (j + 1)..=n_spins {
                couplings.push(coupling(j, k));
            }
        }
        let fields = (1..=n_spins).map(field).collect();
        Self::new(n_spins, couplings, fields, None)
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn local_fields(&self) -> &[f64] {
        &self.local_fields
    }

    /// J_jk for 1-based `j != k`.
    pub fn coupling(&self, j: usize, k: usize) -> f64 {
        let (a, b) = if j < k { (j, k) } else { (k, j) };
        self.couplings[pair_index(self.n_spins, a, b)]
    }

    /// h_j for 1-based `j`.
    pub fn field(&self, j: usize) -> f64 {
        self.local_fields[j - 1]
    }

    pub fn energy_word(&self, word: u64) -> f64 {
        let n = self.n_spins;
        let mut e = 0.0;
        let mut idx = 0;
        for j in 0..n {
            let sj = if bit(word, j) == 0 { 1.0 } else { -1.0 };
            let mut row = 0.0;
            for k in (j + 1)..n {
                let sk = if bit(word, k) == 0 { 1.0 } else { -1.0 };
                row += self.couplings[idx] * sk;
                idx += 1;
            }
            e -= sj * (row + self.local_fields[j]);
        }
        e
    }
}

/// Serialized form `{n, seed, J: [[j, k, value], …], h: […]}` with 1-based
/// indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkDocument {
    pub n: usize,
    pub seed: Option<u64>,
    #[serde(rename = "J")]
    pub couplings: Vec<(usize, usize, f64)>,
    pub h: Vec<f64>,
}

impl From<SkInstance> for SkDocument {
    fn from(sk: SkInstance) -> Self {
        let n = sk.n_spins;
        let mut couplings = Vec::with_capacity(sk.couplings.len());
        for j in 1..=n {
            for k in (j + 1)..=n {
                couplings.push((j, k, sk.coupling(j, k)));
            }
        }
        SkDocument { n, seed: sk.seed, couplings, h: sk.local_fields }
    }
}

impl TryFrom<SkDocument> for SkInstance {
    type Error = Error;

    fn try_from(doc: SkDocument) -> Result<Self> {
        let n = doc.n;
        if n == 0 {
            return Err(Error::domain("SK instance needs N >= 1"));
        }
        let pairs = n * (n - 1) / 2;
        let mut couplings = vec![f64::NAN; pairs];
        for &(j, k, v) in &doc.couplings {
            if !(1 <= j && j < k && k <= n) {
                return Err(Error::domain(format!("coupling index ({j}, {k}) is not 1 <= j < k <= {n}")));
            }
            let slot = &mut couplings[pair_index(n, j, k)];
            if !slot.is_nan() {
                return Err(Error::domain(format!("coupling ({j}, {k}) listed twice")));
            }
            *slot = v;
        }
        if couplings.iter().any(|v| v.is_nan()) {
            return Err(Error::domain(format!("expected all {pairs} couplings")));
        }
        SkInstance::new(n, couplings, doc.h, doc.seed)
    }
}

/// Closed-form instances used for the individual-magnetization and spectrum
/// studies.
pub fn make_deterministic_sk(kind: DeterministicKind, n_spins: usize) -> Result<SkInstance> {
    match kind {
        DeterministicKind::Fig4 => {
            if n_spins != 4 {
                return Err(Error::domain(format!("Fig4 instance requires N = 4, got {n_spins}")));
            }
            let quartic = |j: usize| ((j * j * j * j) as f64).cos();
            SkInstance::from_fn(4, |j, k| quartic(j) + quartic(k), |j| ((j * j) as f64).cos())
        }
        DeterministicKind::Fig5 => {
            if n_spins != 8 {
                return Err(Error::domain(format!("Fig5 instance requires N = 8, got {n_spins}")));
            }
            let fifth = |j: usize| (j as f64).powi(5);
            SkInstance::from_fn(8, |j, k| (fifth(j) + fifth(k)).cos() / 2.0, |j| (j as f64).cos())
        }
    }
}

/// Gaussian instance with every `J_jk` and `h_j` drawn independently from
/// N(0, 1/N). The stream depends on `seed` alone.
pub fn sample_sk(n_spins: usize, seed: u64) -> Result<SkInstance> {
    if n_spins < 2 {
        return Err(Error::domain(format!("random instances need N >= 2, got {n_spins}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, (1.0 / n_spins as f64).sqrt()).map_err(|e| Error::Numeric(e.to_string()))?;
    let pairs = n_spins * (n_spins - 1) / 2;
    let couplings: Vec<f64> = (0..pairs).map(|_| normal.sample(&mut rng)).collect();
    let fields: Vec<f64> = (0..n_spins).map(|_| normal.sample(&mut rng)).collect();
    SkInstance::new(n_spins, couplings, fields, Some(seed))
}

/// Any diagonal target Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProblemModel {
    PSpin(PSpinModel),
    Sk(SkInstance),
}

impl From<PSpinModel> for ProblemModel {
    fn from(m: PSpinModel) -> Self {
        ProblemModel::PSpin(m)
    }
}

impl From<SkInstance> for ProblemModel {
    fn from(m: SkInstance) -> Self {
        ProblemModel::Sk(m)
    }
}

impl ProblemModel {
    pub fn n_spins(&self) -> usize {
        match self {
            ProblemModel::PSpin(m) => m.n_spins,
            ProblemModel::Sk(m) => m.n_spins,
        }
    }

    /// Diagonal matrix element of H0 for a configuration word.
    pub fn energy_word(&self, word: u64) -> f64 {
        match self {
            ProblemModel::PSpin(m) => m.energy_word(word),
            ProblemModel::Sk(m) => m.energy_word(word),
        }
    }

    /// Diagonal matrix element of H0 for ±1 spins (index 0 holds spin 1).
    pub fn classical_energy(&self, spins: &[i8]) -> Result<f64> {
        if spins.len() != self.n_spins() {
            return Err(Error::domain(format!(
                "configuration has {} spins, model has {}",
                spins.len(),
                self.n_spins()
            )));
        }
        Ok(self.energy_word(word_from_spins(spins)?))
    }

    /// All 2^N diagonal elements, indexed by configuration word.
    pub fn diagonal(&self) -> Result<Vec<f64>> {
        let n = self.n_spins();
        if n > MAX_ENUMERATION_SPINS {
            return Err(Error::Capacity { what: "diagonal enumeration", n, max: MAX_ENUMERATION_SPINS });
        }
        Ok(match self {
            ProblemModel::PSpin(m) => (0..1u64 << n).map(|w| m.energy_word(w)).collect(),
            ProblemModel::Sk(m) => sk_diagonal(m),
        })
    }
}

/// Gray-code walk: each step flips one spin and updates the energy in O(N).
fn sk_diagonal(sk: &SkInstance) -> Vec<f64> {
    let n = sk.n_spins;
    let dim = 1usize << n;
    let mut out = vec![0.0; dim];
    let mut spins = vec![1.0f64; n];
    let mut energy = sk.energy_word(0);
    out[0] = energy;
    let mut word = 0usize;
    for step in 1..dim {
        let flip = step.trailing_zeros() as usize;
        let mut local = sk.local_fields[flip];
        for (k, &sk_val) in spins.iter().enumerate() {
            if k != flip {
                local += sk.coupling(flip + 1, k + 1) * sk_val;
            }
        }
        // E changes by 2 σ_flip (h_flip + Σ_k J σ_k) when σ_flip → −σ_flip
        energy += 2.0 * spins[flip] * local;
        spins[flip] = -spins[flip];
        word ^= 1 << flip;
        out[word] = energy;
    }
    out
}

#[inline]
pub(crate) fn low_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Exact extremes of the diagonal over all configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagonalSpectrumSummary {
    pub e_min: f64,
    pub e_max: f64,
    pub argmin_config: u64,
}

pub fn diagonal_extremes(model: &ProblemModel) -> Result<DiagonalSpectrumSummary> {
    Ok(extremes_of(&model.diagonal()?))
}

pub(crate) fn extremes_of(diag: &[f64]) -> DiagonalSpectrumSummary {
    let mut summary = DiagonalSpectrumSummary { e_min: f64::INFINITY, e_max: f64::NEG_INFINITY, argmin_config: 0 };
    for (w, &e) in diag.iter().enumerate() {
        if e < summary.e_min {
            summary.e_min = e;
            summary.argmin_config = w as u64;
        }
        summary.e_max = summary.e_max.max(e);
    }
    summary
}

/// Configurations attaining the minimum to within `tol`.
pub fn ground_configurations(diag: &[f64], tol: f64) -> Vec<u64> {
    let e_min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    diag.iter().enumerate().filter(|(_, &e)| e - e_min <= tol).map(|(w, _)| w as u64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sk2() -> ProblemModel {
        SkInstance::new(2, vec![1.0], vec![0.0, 0.0], None).unwrap().into()
    }

    #[test]
    fn pspin_energies() {
        let m: ProblemModel = PSpinModel::new(3, 3).unwrap().into();
        assert_eq!(m.classical_energy(&[1, 1, 1]).unwrap(), -3.0);
        let m2: ProblemModel = PSpinModel::new(2, 3).unwrap().into();
        assert_eq!(m2.classical_energy(&[1, -1]).unwrap(), 0.0);
        assert!(m2.classical_energy(&[1, 1, 1]).is_err());
        assert!(m2.classical_energy(&[1, 0]).is_err());
    }

    #[test]
    fn single_bond() {
        assert_eq!(sk2().classical_energy(&[1, 1]).unwrap(), -1.0);
        let ext = diagonal_extremes(&sk2()).unwrap();
        assert_eq!((ext.e_min, ext.e_max), (-1.0, 1.0));
    }

    #[test]
    fn pspin_extremes() {
        let m: ProblemModel = PSpinModel::new(3, 3).unwrap().into();
        let ext = diagonal_extremes(&m).unwrap();
        assert_eq!(ext.e_min, -3.0);
        assert_eq!(ext.argmin_config, 0);
    }

    #[test]
    fn deterministic_coefficients() {
        let f4 = make_deterministic_sk(DeterministicKind::Fig4, 4).unwrap();
        assert!((f4.field(1) - 0.540302305868).abs() < 1e-9);
        assert_eq!(f4.coupling(1, 2), 1f64.cos() + 16f64.cos());
        assert_eq!(f4.coupling(2, 1), f4.coupling(1, 2));
        let f5 = make_deterministic_sk(DeterministicKind::Fig5, 8).unwrap();
        assert!((f5.field(2) + 0.416146836547).abs() < 1e-9);
        assert_eq!(f5.coupling(2, 3), (32f64 + 243.0).cos() / 2.0);
        assert!(make_deterministic_sk(DeterministicKind::Fig4, 5).is_err());
        assert!(make_deterministic_sk(DeterministicKind::Fig5, 4).is_err());
    }

    #[test]
    fn gray_code_diagonal_matches_direct() {
        let sk = sample_sk(7, 11).unwrap();
        let model = ProblemModel::Sk(sk.clone());
        let diag = model.diagonal().unwrap();
        for (w, &e) in diag.iter().enumerate() {
            assert!((e - sk.energy_word(w as u64)).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let a = sample_sk(4, 1).unwrap();
        let b = sample_sk(4, 1).unwrap();
        let c = sample_sk(4, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.couplings(), c.couplings());
        assert!(sample_sk(1, 0).is_err());
    }

    #[test]
    fn json_document_round_trip() {
        let sk = sample_sk(5, 3).unwrap();
        let text = serde_json::to_string(&sk).unwrap();
        assert!(text.contains("\"J\":[[1,2,"));
        let back: SkInstance = serde_json::from_str(&text).unwrap();
        assert_eq!(back, sk);
        let bad = r#"{"n":2,"seed":null,"J":[[2,1,0.5]],"h":[0,0]}"#;
        assert!(serde_json::from_str::<SkInstance>(bad).is_err());
    }
}
