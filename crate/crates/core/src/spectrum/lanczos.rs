//! Extremal eigenpairs of real symmetric operators.
//!
//! Lanczos with full reorthogonalization. Several low-lying eigenpairs are
//! obtained by locking: each converged Ritz vector is added to a locked set
//! and the next run is kept orthogonal to it, so degenerate eigenvalues are
//! found with their multiplicity.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Convergence controls for [`lowest_eigenpairs`].
#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Stop when the residual norm `‖A x − θ x‖` drops below this value.
    pub residual_tol: f64,
    /// Hard cap on Krylov dimension per run (further capped by the operator
    /// dimension).
    pub max_krylov: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { residual_tol: 1e-10, max_krylov: 600 }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        for v in basis {
            let c = dot(v, w);
            axpy(-c, v, w);
        }
    }
}

/// Deterministic start vector with a positive bias (ground states of the
/// stoquastic blocks are positive).
fn start_vector(dim: usize, run: usize) -> Vec<f64> {
    let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ (run as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    (0..dim)
        .map(|_| {
            state = crate::seeding::splitmix64(state);
            0.5 + (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

/// Lowest eigenpair of `apply` restricted to the orthogonal complement of
/// `locked`.
fn lowest_deflated<F>(
    apply: &F,
    dim: usize,
    locked: &[Vec<f64>],
    run: usize,
    opts: &LanczosOptions,
) -> Result<EigenPair>
where
    F: Fn(&[f64], &mut [f64]),
{
    let available = dim - locked.len();
    let max_m = available.min(opts.max_krylov).max(1);

    let mut v = start_vector(dim, run);
    orthogonalize(&mut v, locked);
    let mut nv = norm(&v);
    if nv < 1e-8 {
        // start vector nearly inside the locked span; fall back to unit vectors
        for i in 0..dim {
            v.iter_mut().for_each(|x| *x = 0.0);
            v[(i + run) % dim] = 1.0;
            orthogonalize(&mut v, locked);
            nv = norm(&v);
            if nv > 1e-4 {
                break;
            }
        }
        if nv < 1e-12 {
            return Err(Error::Numeric("Lanczos could not build a start vector".into()));
        }
    }
    v.iter_mut().for_each(|x| *x /= nv);

    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; dim];

    loop {
        let j = basis.len() - 1;
        apply(&basis[j], &mut w);
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        axpy(-a, &basis[j], &mut w);
        if j > 0 {
            axpy(-beta[j - 1], &basis[j - 1], &mut w);
        }
        orthogonalize(&mut w, locked);
        orthogonalize(&mut w, &basis);
        let b = norm(&w);
        let m = j + 1;

        let breakdown = b < 1e-13 * (1.0 + a.abs());
        let full = m >= available;
        let capped = m >= max_m;
        if breakdown || full || capped || m < 5 || m.is_multiple_of(5) {
            let (theta, y) = tridiagonal_lowest(&alpha, &beta);
            let residual = b * y[m - 1].abs();
            if breakdown || full || residual < opts.residual_tol {
                let mut x = vec![0.0; dim];
                for (coef, vb) in y.iter().zip(&basis) {
                    axpy(*coef, vb, &mut x);
                }
                orthogonalize(&mut x, locked);
                let nx = norm(&x);
                x.iter_mut().for_each(|c| *c /= nx);
                return Ok(EigenPair { value: theta, vector: x });
            }
            if capped {
                return Err(Error::Numeric(format!(
                    "Lanczos stalled at Krylov dimension {m} with residual {residual:e}"
                )));
            }
        }
        beta.push(b);
        w.iter_mut().for_each(|x| *x /= b);
        basis.push(std::mem::replace(&mut w, vec![0.0; dim]));
    }
}

/// Lowest eigenvalue and eigenvector of the symmetric tridiagonal matrix
/// with diagonal `alpha` and off-diagonal `beta` (length ≥ alpha.len()-1).
fn tridiagonal_lowest(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |r, c| {
        if r == c {
            alpha[r]
        } else if r + 1 == c {
            beta[r]
        } else if c + 1 == r {
            beta[c]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let (idx, &theta) =
        eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty tridiagonal");
    (theta, eig.eigenvectors.column(idx).iter().copied().collect())
}

/// The `k` lowest eigenpairs (ascending) of a symmetric operator of
/// dimension `dim` given by its action `apply(x, y)`: `y ← A x`.
pub fn lowest_eigenpairs<F>(apply: F, dim: usize, k: usize, opts: &LanczosOptions) -> Result<Vec<EigenPair>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let k = k.min(dim);
    let mut found: Vec<EigenPair> = Vec::with_capacity(k);
    let mut locked: Vec<Vec<f64>> = Vec::with_capacity(k);
    for run in 0..k {
        let pair = lowest_deflated(&apply, dim, &locked, run, opts)?;
        locked.push(pair.vector.clone());
        found.push(pair);
    }
    found.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(found)
}

/// All eigenvalues (ascending) of a dense symmetric matrix.
pub fn dense_eigenvalues(matrix: DMatrix<f64>) -> Vec<f64> {
    let mut vals: Vec<f64> = matrix.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// The `k` lowest eigenpairs (ascending) of a dense symmetric matrix.
pub fn dense_lowest_pairs(matrix: DMatrix<f64>, k: usize) -> Vec<EigenPair> {
    let eig = SymmetricEigen::new(matrix);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    order
        .into_iter()
        .take(k)
        .map(|i| EigenPair { value: eig.eigenvalues[i], vector: eig.eigenvectors.column(i).iter().copied().collect() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_apply(n: usize) -> impl Fn(&[f64], &mut [f64]) {
        move |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let mut v = 2.0 * x[i];
                if i > 0 {
                    v -= x[i - 1];
                }
                if i + 1 < n {
                    v -= x[i + 1];
                }
                y[i] = v;
            }
        }
    }

    #[test]
    fn path_laplacian_low_modes() {
        let n = 200;
        let pairs = lowest_eigenpairs(laplacian_apply(n), n, 3, &LanczosOptions::default()).unwrap();
        for (k, p) in pairs.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((p.value - exact).abs() < 1e-10, "{} vs {}", p.value, exact);
        }
    }

    #[test]
    fn degenerate_levels_found_with_multiplicity() {
        // diag(1, 1, 1, 2, 3, ...) has a threefold ground level
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|i| if i < 3 { 1.0 } else { i as f64 }).collect();
        let d2 = diag.clone();
        let apply = move |x: &[f64], y: &mut [f64]| {
            for i in 0..x.len() {
                y[i] = d2[i] * x[i];
            }
        };
        let pairs = lowest_eigenpairs(apply, n, 4, &LanczosOptions::default()).unwrap();
        let vals: Vec<f64> = pairs.iter().map(|p| p.value).collect();
        for (v, e) in vals.iter().zip([1.0, 1.0, 1.0, 3.0]) {
            assert!((v - e).abs() < 1e-10, "{vals:?}");
        }
    }

    #[test]
    fn tiny_operators() {
        let apply = |x: &[f64], y: &mut [f64]| y[0] = -3.0 * x[0];
        let pairs = lowest_eigenpairs(apply, 1, 2, &LanczosOptions::default()).unwrap();
        assert_eq!(pairs.len(), 1);
        assert!((pairs[0].value + 3.0).abs() < 1e-14);
    }
}
