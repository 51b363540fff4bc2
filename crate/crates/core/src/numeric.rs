//! FFT-backed correlation and small regression helpers shared by the estimators.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub(crate) fn demeaned(x: &[f64]) -> Vec<f64> {
    let m = mean(x);
    x.iter().map(|v| v - m).collect()
}

/// Forward FFT in place.
pub(crate) fn fft(buf: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(buf.len()).process(buf);
}

/// Unnormalized inverse FFT in place.
pub(crate) fn ifft(buf: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(buf.len()).process(buf);
}

/// `out[k] = sum_m x[m] * y[m + k]` for k = 0..=max_lag (linear, not circular).
pub(crate) fn cross_correlation(x: &[f64], y: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len().max(y.len()) + max_lag + 1;
    let size = n.next_power_of_two();
    let mut a: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(size, Complex64::default());
    let mut b: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(size, Complex64::default());
    fft(&mut a);
    fft(&mut b);
    for (ai, bi) in a.iter_mut().zip(&b) {
        *ai = ai.conj() * bi;
    }
    ifft(&mut a);
    let scale = 1.0 / size as f64;
    (0..=max_lag).map(|k| a[k].re * scale).collect()
}

/// Linear convolution `out[n] = sum_k g[k] * x[n - k]`, truncated to `x.len()`.
pub(crate) fn causal_convolution_fft(g: &[f64], x: &[f64]) -> Vec<f64> {
    let size = (g.len() + x.len()).next_power_of_two();
    let mut a: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(size, Complex64::default());
    let mut b: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(size, Complex64::default());
    fft(&mut a);
    fft(&mut b);
    for (ai, bi) in a.iter_mut().zip(&b) {
        *ai *= bi;
    }
    ifft(&mut a);
    let scale = 1.0 / size as f64;
    a[..x.len()].iter().map(|c| c.re * scale).collect()
}

pub(crate) fn causal_convolution_direct(g: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            let kmax = g.len().min(n + 1);
            (0..kmax).map(|k| g[k] * x[n - k]).sum()
        })
        .collect()
}

/// Ordinary least squares `y = a + b x`.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    pub residual_rms: f64,
    pub r_squared: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - intercept - slope * a;
            e * e
        })
        .sum();
    let slope_stderr = if x.len() > 2 && sxx > 0.0 {
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r_squared = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    LineFit {
        intercept,
        slope,
        slope_stderr,
        residual_rms: (ssr / n).sqrt(),
        r_squared,
    }
}
