//! Symmetric Toeplitz solves: Levinson recursion with a dense fallback.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solve `T x = b` where `T_ij = t[|i - j|]`, by Levinson recursion.
///
/// Returns `None` when a reflection step loses positive definiteness, which
/// is the signal to fall back to a dense factorization.
pub fn levinson(t: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    assert!(t.len() >= n, "Toeplitz column shorter than right-hand side");
    if n == 0 {
        return Some(Vec::new());
    }
    let t0 = t[0];
    if !(t0 > 0.0) {
        return None;
    }
    let r: Vec<f64> = t[1..n].iter().map(|v| v / t0).collect();
    let b: Vec<f64> = b.iter().map(|v| v / t0).collect();

    let mut x = vec![b[0]];
    if n == 1 {
        return Some(x);
    }
    let mut y = vec![-r[0]];
    let mut alpha = -r[0];
    let mut beta = 1.0;
    for k in 1..n {
        beta *= 1.0 - alpha * alpha;
        if !(beta > 1e-14) {
            return None;
        }
        let dot: f64 = (0..k).map(|i| r[i] * x[k - 1 - i]).sum();
        let mu = (b[k] - dot) / beta;
        let mut next = Vec::with_capacity(k + 1);
        for i in 0..k {
            next.push(x[i] + mu * y[k - 1 - i]);
        }
        next.push(mu);
        x = next;
        if k < n - 1 {
            let dot: f64 = (0..k).map(|i| r[i] * y[k - 1 - i]).sum();
            alpha = (-r[k] - dot) / beta;
            let mut z = Vec::with_capacity(k + 1);
            for i in 0..k {
                z.push(y[i] + alpha * y[k - 1 - i]);
            }
            z.push(alpha);
            y = z;
        }
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

pub fn toeplitz_matrix(t: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| t[i.abs_diff(j)])
}

/// Dense Cholesky solve; fails when the matrix is not positive definite.
pub fn solve_dense(t: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let m = toeplitz_matrix(t, b.len());
    let chol = m.cholesky().ok_or_else(|| {
        Error::Conditioning(format!(
            "Toeplitz matrix of size {} is not positive definite",
            b.len()
        ))
    })?;
    Ok(chol.solve(&DVector::from_column_slice(b)).iter().copied().collect())
}

/// Levinson first, dense Cholesky if the recursion breaks down.
pub fn solve_symmetric(t: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    match levinson(t, b) {
        Some(x) => Ok(x),
        None => {
            log::debug!("Levinson recursion broke down; using dense Cholesky");
            solve_dense(t, b)
        }
    }
}

/// `T x` for the symmetric Toeplitz matrix with first column `t`.
pub fn toeplitz_apply(t: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| (0..n).map(|j| t[i.abs_diff(j)] * x[j]).sum())
        .collect()
}
