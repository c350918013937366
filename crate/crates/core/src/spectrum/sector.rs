//! Symmetry sectors labelled by the values of frozen spins, and the
//! Hamiltonian restricted to one sector.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lanczos::{self, EigenPair, LanczosOptions};
use crate::error::{Error, Result};
use crate::models::low_mask;

/// Joint eigenspace of the σ^z operators of the frozen spins.
///
/// `mask` has bit `j-1` set for each frozen spin `j`; `values` uses the
/// configuration-word convention (set bit = down) and is a subset of `mask`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SectorLabel {
    pub n_spins: usize,
    pub mask: u64,
    pub values: u64,
}

impl SectorLabel {
    pub fn new(n_spins: usize, mask: u64, values: u64) -> Result<Self> {
        if mask & !low_mask(n_spins) != 0 {
            return Err(Error::domain(format!("sector mask {mask:#b} exceeds {n_spins} spins")));
        }
        if values & !mask != 0 {
            return Err(Error::domain("sector values must be a subset of the mask"));
        }
        Ok(SectorLabel { n_spins, mask, values })
    }

    /// The unique sector when no spin is frozen.
    pub fn full(n_spins: usize) -> Self {
        SectorLabel { n_spins, mask: 0, values: 0 }
    }

    /// Drops the frozen spins outside `mask`.
    pub fn restrict(&self, mask: u64) -> Self {
        SectorLabel { n_spins: self.n_spins, mask: self.mask & mask, values: self.values & mask }
    }

    pub fn frozen_count(&self) -> u32 {
        self.mask.count_ones()
    }

    pub fn block_dim(&self) -> usize {
        1usize << (self.n_spins - self.frozen_count() as usize)
    }

    /// Whether the two labels assign opposite values to some spin frozen in
    /// both.
    pub fn conflicts_with(&self, other: &SectorLabel) -> bool {
        let common = self.mask & other.mask;
        (self.values ^ other.values) & common != 0
    }

    /// All sectors sharing `mask`, in increasing order of `values`.
    pub fn enumerate(n_spins: usize, mask: u64) -> Vec<SectorLabel> {
        let mut out = Vec::with_capacity(1 << mask.count_ones());
        // iterate over submasks of `mask` in increasing numeric order
        let mut sub = 0u64;
        loop {
            out.push(SectorLabel { n_spins, mask, values: sub });
            if sub == mask {
                break;
            }
            sub = (sub.wrapping_sub(mask)) & mask;
        }
        out
    }

    /// One character per spin, spin 1 first: `+`/`-` frozen up/down, `.` free.
    pub fn bit_string(&self) -> String {
        (0..self.n_spins)
            .map(|i| {
                if self.mask >> i & 1 == 0 {
                    '.'
                } else if self.values >> i & 1 == 0 {
                    '+'
                } else {
                    '-'
                }
            })
            .collect()
    }
}

impl fmt::Display for SectorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.bit_string())
    }
}

/// The Hamiltonian `s·H0 − Σ_j Γ_j σ^x_j` restricted to one sector.
///
/// Block index bit `i` is the `i`-th free spin in increasing spin order.
#[derive(Debug, Clone)]
pub struct SectorBlock {
    pub label: SectorLabel,
    /// Full configuration word of each block basis state.
    pub words: Vec<u64>,
    pub diag: Vec<f64>,
    /// `(block bit, Γ)` for each free spin with a non-zero field.
    pub flips: Vec<(usize, f64)>,
}

impl SectorBlock {
    /// `diag_full` holds H0 for every configuration word.
    pub fn build(diag_full: &[f64], s: f64, gammas: &[f64], label: SectorLabel) -> Result<Self> {
        let n = label.n_spins;
        if gammas.len() != n {
            return Err(Error::domain(format!("{} fields supplied for {n} spins", gammas.len())));
        }
        for (j, &g) in gammas.iter().enumerate() {
            if label.mask >> j & 1 == 1 && g != 0.0 {
                return Err(Error::domain(format!("spin {} is in the sector mask but has field {g}", j + 1)));
            }
        }
        let free: Vec<usize> = (0..n).filter(|&j| label.mask >> j & 1 == 0).collect();
        let dim = 1usize << free.len();
        let mut words = Vec::with_capacity(dim);
        let mut diag = Vec::with_capacity(dim);
        for b in 0..dim {
            let mut w = label.values;
            for (i, &j) in free.iter().enumerate() {
                if b >> i & 1 == 1 {
                    w |= 1 << j;
                }
            }
            words.push(w);
            diag.push(s * diag_full[w as usize]);
        }
        let flips = free.iter().enumerate().filter(|(_, &j)| gammas[j] != 0.0).map(|(i, &j)| (i, gammas[j])).collect();
        Ok(SectorBlock { label, words, diag, flips })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `y ← H x` on the block.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, xi), d) in y.iter_mut().zip(x).zip(&self.diag) {
            *yi = d * xi;
        }
        for &(bit, g) in &self.flips {
            let half = 1usize << bit;
            for (yb, xb) in y.chunks_mut(2 * half).zip(x.chunks(2 * half)) {
                let (ylo, yhi) = yb.split_at_mut(half);
                let (xlo, xhi) = xb.split_at(half);
                for i in 0..half {
                    ylo[i] -= g * xhi[i];
                    yhi[i] -= g * xlo[i];
                }
            }
        }
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diag));
        for &(bit, g) in &self.flips {
            for b in 0..dim {
                m[(b, b ^ (1 << bit))] -= g;
            }
        }
        m
    }

    /// The `k` lowest eigenvalues, ascending.
    pub fn lowest_levels(&self, k: usize, opts: &EigenOptions) -> Result<Vec<f64>> {
        let dim = self.dim();
        let k = k.min(dim);
        if k == 0 {
            return Ok(Vec::new());
        }
        if dim == 1 {
            return Ok(vec![self.diag[0]]);
        }
        if opts.use_dense(dim, k) {
            let mut vals = lanczos::dense_eigenvalues(self.dense());
            vals.truncate(k);
            return Ok(vals);
        }
        let pairs = lanczos::lowest_eigenpairs(|x, y| self.apply(x, y), dim, k, &opts.lanczos)?;
        Ok(pairs.into_iter().map(|p| p.value).collect())
    }

    /// The `k` lowest eigenpairs, ascending, with block-indexed vectors.
    pub fn lowest_pairs(&self, k: usize, opts: &EigenOptions) -> Result<Vec<EigenPair>> {
        let dim = self.dim();
        let k = k.min(dim);
        if opts.use_dense(dim, k) {
            return Ok(lanczos::dense_lowest_pairs(self.dense(), k));
        }
        lanczos::lowest_eigenpairs(|x, y| self.apply(x, y), dim, k, &opts.lanczos)
    }
}

/// How sector eigenproblems are solved.
#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Blocks up to this dimension are diagonalized densely.
    pub dense_threshold: usize,
    pub lanczos: LanczosOptions,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { dense_threshold: 64, lanczos: LanczosOptions::default() }
    }
}

impl EigenOptions {
    fn use_dense(&self, dim: usize, k: usize) -> bool {
        dim <= self.dense_threshold || 4 * k >= dim
    }
}
