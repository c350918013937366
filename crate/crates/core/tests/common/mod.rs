//! Dense-matrix oracles built directly from the model definitions.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use iqa_core::models::{ProblemModel, SkInstance};
use iqa_core::schedules::{AnnealPath, FieldProfile};

/// `+1` for a clear bit, `-1` for a set bit.
pub fn z(word: usize, j: usize) -> f64 {
    if word >> (j - 1) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Classical energy from the textbook formulas, without the library's
/// evaluation routines.
pub fn energy(model: &ProblemModel, word: usize) -> f64 {
    match model {
        ProblemModel::PSpin(m) => {
            let n = m.n_spins;
            let mag: f64 = (1..=n).map(|j| z(word, j)).sum::<f64>() / n as f64;
            -(n as f64) * mag.powi(m.p as i32)
        }
        ProblemModel::Sk(sk) => sk_energy(sk, word),
    }
}

pub fn sk_energy(sk: &SkInstance, word: usize) -> f64 {
    let n = sk.n_spins();
    let mut e = 0.0;
    for j in 1..=n {
        for k in (j + 1)..=n {
            e -= sk.coupling(j, k) * z(word, j) * z(word, k);
        }
        e -= sk.field(j) * z(word, j);
    }
    e
}

pub fn dense_hamiltonian(model: &ProblemModel, s: f64, gammas: &[f64]) -> DMatrix<f64> {
    let n = model.n_spins();
    let dim = 1usize << n;
    let mut h = DMatrix::zeros(dim, dim);
    for c in 0..dim {
        h[(c, c)] = s * energy(model, c);
        for j in 1..=n {
            h[(c ^ (1 << (j - 1)), c)] -= gammas[j - 1];
        }
    }
    h
}

pub fn sorted_eigenvalues(h: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = h.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `exp(-i H t)` from the eigendecomposition of the real symmetric `H`.
pub fn dense_propagator(h: &DMatrix<f64>, t: f64) -> DMatrix<Complex64> {
    let eig = h.clone().symmetric_eigen();
    let v = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
    let phases = DMatrix::from_diagonal(&DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| Complex64::from_polar(1.0, -l * t)),
    ));
    &v * phases * v.adjoint()
}

pub fn magnetizations(psi: &DVector<Complex64>, n: usize) -> Vec<f64> {
    (1..=n).map(|j| psi.iter().enumerate().map(|(c, a)| z(c, j) * a.norm_sqr()).sum()).collect()
}

/// Reference trajectory: the Hamiltonian of each coarse step (left endpoint)
/// applied through `sub` exact substeps of `dt/sub`. Returns the per-spin
/// magnetizations after every coarse step, starting with the initial state.
pub fn dense_reference(
    model: &ProblemModel,
    path: &AnnealPath,
    profile: &FieldProfile,
    psi0: &[Complex64],
    sub: usize,
) -> Vec<Vec<f64>> {
    let n = model.n_spins();
    let mut psi = DVector::from_column_slice(psi0);
    let mut out = vec![magnetizations(&psi, n)];
    for k in 0..path.n_steps() {
        let t0 = path.step_time(k);
        let t1 = path.step_time(k + 1);
        let (s, tau) = path.at_fraction(t0 / path.total_time);
        let h = dense_hamiltonian(model, s, &profile.gammas(s, tau));
        let u = dense_propagator(&h, (t1 - t0) / sub as f64);
        for _ in 0..sub {
            psi = &u * psi;
        }
        out.push(magnetizations(&psi, n));
    }
    out
}

/// Random normalized state from a simple deterministic generator.
pub fn random_state(n: usize, seed: u64) -> Vec<Complex64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<Complex64> =
        (0..1usize << n).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    v
}
