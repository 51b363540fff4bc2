//! Lawson–Hanson active-set nonnegative least squares for small dense systems.

use nalgebra::{DMatrix, DVector};

/// Minimize `||A w - b||` subject to `w >= 0`.
pub(crate) fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut w = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * a.norm() * b.norm().max(1.0);
    let max_outer = 3 * n + 10;

    for _ in 0..max_outer {
        let grad = a.transpose() * (b - a * &w);
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]));
        let Some(j) = candidate else { break };
        if grad[j] <= tol {
            break;
        }
        passive[j] = true;

        loop {
            let z = solve_passive(a, b, &passive);
            let feasible = (0..n).filter(|&i| passive[i]).all(|i| z[i] > 0.0);
            if feasible {
                w = z;
                break;
            }
            // Step back toward the feasible region until a passive weight hits zero.
            let mut step = f64::INFINITY;
            for i in (0..n).filter(|&i| passive[i] && z[i] <= 0.0) {
                let denom = w[i] - z[i];
                if denom > 0.0 {
                    step = step.min(w[i] / denom);
                }
            }
            if !step.is_finite() {
                step = 0.0;
            }
            w += (&z - &w) * step;
            for i in 0..n {
                if passive[i] && w[i] <= 1e-15 {
                    passive[i] = false;
                    w[i] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    w
}

fn solve_passive(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    let sub = DMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])]);
    let svd = sub.svd(true, true);
    let sol = svd
        .solve(b, 1e-14)
        .unwrap_or_else(|_| DVector::zeros(idx.len()));
    let mut z = DVector::zeros(passive.len());
    for (c, &i) in idx.iter().enumerate() {
        z[i] = sol[c];
    }
    z
}
