//! Stationary Kyle equilibrium: Markovian closed form, general kernels by
//! causal spectral factorization, and the camouflage/efficiency diagnostics.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numeric::{cross_correlation, fft, ifft};
use crate::series::{AcfCurve, ImpactKernel, SamplingScale, Variogram};

/// Largest AR(1) coefficient accepted before clamping.
pub const ALPHA_CAP: f64 = 1.0 - 1e-6;

/// Fraction of the tabulated lags covered by the cosine taper.
pub const TAPER_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct KyleInputs {
    /// ACF of the informed trader's fundamental estimate.
    pub sigma_it: AcfCurve,
    /// ACF of the noise-trader flow.
    pub omega_nt: AcfCurve,
}

impl KyleInputs {
    pub fn new(sigma_it: AcfCurve, omega_nt: AcfCurve) -> Result<Self> {
        sigma_it.tau.ensure_same(&omega_nt.tau, "kyle inputs")?;
        if sigma_it.values.len() != omega_nt.values.len() {
            return Err(Error::Alignment(format!(
                "signal ACF has max lag {} but flow ACF has {}",
                sigma_it.max_lag(),
                omega_nt.max_lag()
            )));
        }
        if !(sigma_it.lag0() > 0.0 && omega_nt.lag0() > 0.0) {
            return Err(Error::InvalidInput("lag-0 values must be positive".into()));
        }
        Ok(Self { sigma_it, omega_nt })
    }

    pub fn tau(&self) -> SamplingScale {
        self.sigma_it.tau
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KyleEquilibrium {
    /// Pricing kernel with G_0 = 1.
    pub kernel: ImpactKernel,
    /// Absolute G_0 when it can be determined.
    pub kernel_scale: Option<f64>,
    /// Price ACF. In absolute units when `kernel_scale` is known, otherwise
    /// the ACF implied by the unit kernel acting on the noise-trader flow.
    pub price_acf: AcfCurve,
    pub price_variance_ratio: Option<f64>,
    pub camouflage_delta: Option<f64>,
    /// Relative residual of the time-domain proportionality check.
    pub verification_residual: f64,
    /// Number of tapered lags at the end of each input ACF.
    pub taper_lags: usize,
}

impl KyleEquilibrium {
    /// Kernel in absolute units, if the scale is known.
    pub fn absolute_kernel(&self) -> Option<ImpactKernel> {
        self.kernel_scale.map(|g0| self.kernel.scaled(g0))
    }
}

/// Price-to-signal variance ratio `(1 - sqrt(1 - a^2)) / a^2` for an AR(1)
/// signal, evaluated in the cancellation-free form `1 / (1 + sqrt(1 - a^2))`.
pub fn price_variance_ratio(alpha: f64) -> f64 {
    let a = alpha.min(ALPHA_CAP);
    1.0 / (1.0 + (1.0 - a * a).sqrt())
}

/// Closed-form equilibrium for an AR(1) signal and white noise-trader flow.
pub fn solve_markovian(
    alpha: f64,
    sigma_it0: f64,
    omega0: f64,
    max_lag: usize,
    tau: SamplingScale,
) -> Result<KyleEquilibrium> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(sigma_it0 > 0.0 && omega0 > 0.0) {
        return Err(Error::InvalidInput("variances must be positive".into()));
    }
    let a = alpha.min(ALPHA_CAP);
    let ratio = price_variance_ratio(a);
    let sk0 = ratio * sigma_it0;
    let g0 = (sk0 * (1.0 - a * a) / omega0).sqrt();
    let kernel = ImpactKernel::exponential(1.0, a, max_lag, tau)?.normalized()?;
    let price_acf = AcfCurve::analytic((0..=max_lag).map(|n| sk0 * a.powi(n as i32)).collect(), tau);
    Ok(KyleEquilibrium {
        kernel,
        kernel_scale: Some(g0),
        price_acf,
        price_variance_ratio: Some(ratio),
        camouflage_delta: None,
        verification_residual: 0.0,
        taper_lags: 0,
    })
}

fn taper_width(max_lag: usize) -> usize {
    if max_lag < 10 {
        0
    } else {
        (TAPER_FRACTION * max_lag as f64).ceil() as usize
    }
}

/// Cosine taper over the final `width` lags, reaching zero at the last lag.
fn tapered(values: &[f64], width: usize) -> Vec<f64> {
    let last = values.len() - 1;
    let start = last.saturating_sub(width);
    values
        .iter()
        .enumerate()
        .map(|(k, v)| {
            if width == 0 || k <= start {
                *v
            } else {
                let x = (k - start) as f64 / width as f64;
                v * 0.5 * (1.0 + (std::f64::consts::PI * x).cos())
            }
        })
        .collect()
}

/// Real spectral density on an `n`-point grid from a one-sided ACF.
fn spectral_density(acf: &[f64], n: usize) -> Vec<f64> {
    let mut buf = vec![Complex64::default(); n];
    buf[0] = Complex64::new(acf[0], 0.0);
    for (k, &c) in acf.iter().enumerate().skip(1) {
        buf[k] = Complex64::new(c, 0.0);
        buf[n - k] = Complex64::new(c, 0.0);
    }
    fft(&mut buf);
    buf.into_iter().map(|z| z.re).collect()
}

/// Causal minimum-phase factor `h` with `|H(w)|^2 = exp(log_power(w))`.
fn minimum_phase_factor(log_power: &[f64]) -> Vec<f64> {
    let n = log_power.len();
    let mut c: Vec<Complex64> = log_power.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    ifft(&mut c);
    let scale = 0.5 / n as f64;
    let mut d = vec![Complex64::default(); n];
    d[0] = c[0] * scale;
    for k in 1..n / 2 {
        d[k] = c[k] * (2.0 * scale);
    }
    d[n / 2] = c[n / 2] * scale;
    fft(&mut d);
    for z in d.iter_mut() {
        *z = z.exp();
    }
    ifft(&mut d);
    d[..n / 2].iter().map(|z| z.re / n as f64).collect()
}

/// `P_n = sum_d A_d Omega_{n+d}` with `A` the autocorrelation of `g`.
fn forward_price_acf(g: &[f64], omega: &[f64], max_lag: usize) -> Vec<f64> {
    let a = cross_correlation(g, g, g.len() - 1);
    let l = omega.len() as isize - 1;
    let k = a.len() as isize - 1;
    (0..=max_lag as isize)
        .map(|n| {
            let lo = (-n - l).max(-k);
            let hi = (l - n).min(k);
            (lo..=hi)
                .map(|d| a[d.unsigned_abs()] * omega[(n + d).unsigned_abs()])
                .sum()
        })
        .collect()
}

/// Proportional least squares `p ~ s * x`; returns `(s, ||p - s x|| / ||p||)`.
fn proportional_fit(p: &[f64], x: &[f64]) -> (f64, f64) {
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxp: f64 = x.iter().zip(p).map(|(a, b)| a * b).sum();
    let s = if sxx > 0.0 { sxp / sxx } else { 0.0 };
    let err: f64 = x.iter().zip(p).map(|(a, b)| (b - s * a).powi(2)).sum();
    let norm: f64 = p.iter().map(|v| v * v).sum();
    (s, if norm > 0.0 { (err / norm).sqrt() } else { 0.0 })
}

/// General perfect-camouflage equilibrium.
///
/// The kernel is the causal minimum-phase factor of `S_IT / S_NT`, so the
/// price ACF it produces from the noise-trader flow is proportional to the
/// signal ACF. The result is checked in the time domain against the forward
/// double sum over lags `0..=min(max_lag, input max lag)`.
pub fn solve_combo(inputs: &KyleInputs, max_lag: usize, tol: f64) -> Result<KyleEquilibrium> {
    let tau = inputs.tau();
    let input_lag = inputs.sigma_it.max_lag();
    let grid = (8 * max_lag.max(input_lag).max(1)).next_power_of_two();
    if max_lag >= grid / 2 {
        return Err(Error::InvalidInput(format!("max lag {max_lag} too large for grid")));
    }
    let width = taper_width(input_lag);
    let sigma = tapered(&inputs.sigma_it.values, width);
    let omega = tapered(&inputs.omega_nt.values, width);

    let s_it = spectral_density(&sigma, grid);
    let s_nt = spectral_density(&omega, grid);
    let floor = 1e-13 * s_it.iter().chain(&s_nt).fold(0.0f64, |m, v| m.max(v.abs()));
    let mut log_ratio = Vec::with_capacity(grid);
    for (j, (a, b)) in s_it.iter().zip(&s_nt).enumerate() {
        if !(*a > floor && *b > floor) {
            return Err(Error::Factorization(format!(
                "spectral density not positive at frequency bin {j}/{grid} (signal {a:.3e}, flow {b:.3e})"
            )));
        }
        log_ratio.push(a.ln() - b.ln());
    }
    let full = minimum_phase_factor(&log_ratio);
    let g0 = full[0];
    if !(g0 > 0.0 && g0.is_finite()) {
        return Err(Error::Factorization(format!("factor has G_0 = {g0}")));
    }
    let full: Vec<f64> = full.iter().map(|g| g / g0).collect();

    let check_lag = max_lag.min(input_lag);
    let p = forward_price_acf(&full, &omega, check_lag);
    let (_, residual) = proportional_fit(&p, &sigma[..=check_lag]);
    if !(residual < tol) {
        return Err(Error::NonConvergence { residual, tol });
    }

    let kernel = ImpactKernel::raw(full[..=max_lag].to_vec(), tau)?.normalized()?;
    let price_acf = AcfCurve::analytic(forward_price_acf(&full, &omega, max_lag), tau);
    Ok(KyleEquilibrium {
        kernel,
        kernel_scale: None,
        price_acf,
        price_variance_ratio: None,
        camouflage_delta: None,
        verification_residual: residual,
        taper_lags: width,
    })
}

/// Closed-form price variogram `V_n = 2 Sigma^SK_0 (1 - Sigma^IT_n / Sigma^IT_0)`.
pub fn kyle_variogram(
    equilibrium: &KyleEquilibrium,
    sigma_it: &AcfCurve,
    max_lag: usize,
) -> Result<Variogram> {
    if equilibrium.kernel_scale.is_none() {
        return Err(Error::MissingScale);
    }
    if max_lag == 0 || max_lag > sigma_it.max_lag() {
        return Err(Error::InvalidInput(format!(
            "max lag {max_lag} outside 1..={}",
            sigma_it.max_lag()
        )));
    }
    let sk0 = equilibrium.price_acf.lag0();
    let it0 = sigma_it.lag0();
    let values = (1..=max_lag)
        .map(|n| 2.0 * sk0 * (1.0 - sigma_it.values[n] / it0))
        .collect();
    Ok(Variogram {
        values,
        tau: sigma_it.tau,
        asymptote: Some(2.0 * sk0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CamouflageFit {
    pub scale: f64,
    pub delta: f64,
    pub residual_rms: f64,
}

/// Fit `Omega_n = scale * Omega^NT_n + delta * [n = 0]`.
///
/// With a white noise-trader ACF the split between scale and delta is not
/// identifiable; delta is then reported as zero.
pub fn check_camouflage(excess_flow_acf: &AcfCurve, nt_acf: &AcfCurve) -> Result<CamouflageFit> {
    excess_flow_acf.tau.ensure_same(&nt_acf.tau, "check_camouflage")?;
    if excess_flow_acf.values.len() != nt_acf.values.len() {
        return Err(Error::Alignment("camouflage curves differ in length".into()));
    }
    let om = &excess_flow_acf.values;
    let nt = &nt_acf.values;
    let sxx: f64 = nt[1..].iter().map(|v| v * v).sum();
    let identifiable = sxx > 1e-24 * nt[0] * nt[0];
    let scale = if identifiable {
        nt[1..].iter().zip(&om[1..]).map(|(a, b)| a * b).sum::<f64>() / sxx
    } else {
        om[0] / nt[0]
    };
    let delta = if identifiable { om[0] - scale * nt[0] } else { 0.0 };
    let ss: f64 = om[1..]
        .iter()
        .zip(&nt[1..])
        .map(|(o, n)| (o - scale * n).powi(2))
        .sum();
    Ok(CamouflageFit {
        scale,
        delta,
        residual_rms: (ss / om.len() as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyFit {
    pub scale: f64,
    /// RMS misfit relative to the price ACF at lag 0.
    pub residual_rms: f64,
}

/// One-parameter fit `Sigma^SK_n = scale * Sigma^IT_n`.
pub fn check_price_efficiency(price_acf: &AcfCurve, sigma_it: &AcfCurve) -> Result<EfficiencyFit> {
    price_acf.tau.ensure_same(&sigma_it.tau, "check_price_efficiency")?;
    let n = price_acf.values.len().min(sigma_it.values.len());
    let p = &price_acf.values[..n];
    let x = &sigma_it.values[..n];
    let (scale, _) = proportional_fit(p, x);
    let p0 = p[0].abs();
    if !(p0 > 0.0) {
        return Err(Error::Degenerate("price ACF has zero lag-0 value".into()));
    }
    let ss: f64 = p.iter().zip(x).map(|(a, b)| (a - scale * b).powi(2)).sum();
    Ok(EfficiencyFit {
        scale,
        residual_rms: (ss / n as f64).sqrt() / p0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tau() -> SamplingScale {
        SamplingScale::step()
    }

    fn ar1(alpha: f64, len: usize) -> AcfCurve {
        AcfCurve::analytic((0..=len).map(|n| alpha.powi(n as i32)).collect(), tau())
    }

    fn white(len: usize) -> AcfCurve {
        let mut v = vec![0.0; len + 1];
        v[0] = 1.0;
        AcfCurve::analytic(v, tau())
    }

    #[test]
    fn variance_ratio_values() {
        assert!((price_variance_ratio(0.6) - 5.0 / 9.0).abs() < 1e-15);
        assert!((price_variance_ratio(1e-4) - 0.5).abs() < 1e-6);
        assert!(price_variance_ratio(0.999_999_9) <= 1.0);
    }

    #[test]
    fn markovian_price_variance_matches_kernel() {
        let eq = solve_markovian(0.6, 2.0, 0.5, 400, tau()).unwrap();
        let g0 = eq.kernel_scale.unwrap();
        let var: f64 = eq.kernel.values.iter().map(|g| (g0 * g).powi(2)).sum::<f64>() * 0.5;
        assert!((var - 2.0 * 5.0 / 9.0).abs() < 1e-12);
        assert!(eq.price_acf.lag0() <= 2.0);
    }

    #[test]
    fn combo_recovers_markovian_shape() {
        let inputs = KyleInputs::new(ar1(0.9, 400), white(400)).unwrap();
        let eq = solve_combo(&inputs, 50, 1e-3).unwrap();
        for (n, g) in eq.kernel.values.iter().enumerate() {
            assert!((g - 0.9f64.powi(n as i32)).abs() < 1e-3, "lag {n}: {g}");
        }
    }

    #[test]
    fn near_permanent_signal_gives_near_permanent_kernel() {
        let inputs = KyleInputs::new(ar1(0.999, 20_000), white(20_000)).unwrap();
        let eq = solve_combo(&inputs, 20, 1e-3).unwrap();
        for (n, g) in eq.kernel.values.iter().enumerate() {
            assert!((g - 0.999f64.powi(n as i32)).abs() < 1e-3);
            assert!(*g > 0.97);
        }
    }

    #[test]
    fn rejects_invalid_flow_spectrum() {
        let mut bad = vec![0.0; 51];
        bad[0] = 1.0;
        bad[1] = 0.9;
        bad[2] = -0.9;
        let inputs = KyleInputs::new(ar1(0.5, 50), AcfCurve::analytic(bad, tau())).unwrap();
        assert!(matches!(
            solve_combo(&inputs, 10, 1e-3),
            Err(Error::Factorization(_))
        ));
    }

    #[test]
    fn variogram_closed_form() {
        let eq = solve_markovian(0.5, 1.0 / price_variance_ratio(0.5), 1.0, 10, tau()).unwrap();
        let v = kyle_variogram(&eq, &ar1(0.5, 10), 10).unwrap();
        assert!((v.values[0] - 1.0).abs() < 1e-12);
        assert!((v.asymptote.unwrap() - 2.0).abs() < 1e-12);

        let inputs = KyleInputs::new(ar1(0.5, 40), white(40)).unwrap();
        let shape_only = solve_combo(&inputs, 10, 1e-3).unwrap();
        assert!(matches!(
            kyle_variogram(&shape_only, &ar1(0.5, 40), 5),
            Err(Error::MissingScale)
        ));
    }

    #[test]
    fn camouflage_fits() {
        let nt = ar1(0.7, 20);
        let fit = check_camouflage(&nt, &nt).unwrap();
        assert!((fit.scale - 1.0).abs() < 1e-12 && fit.delta.abs() < 1e-12);
        assert!(fit.residual_rms < 1e-12);

        let mut om: Vec<f64> = nt.values.iter().map(|v| 2.0 * v).collect();
        om[0] += 0.3;
        let fit = check_camouflage(&AcfCurve::analytic(om, tau()), &nt).unwrap();
        assert!((fit.scale - 2.0).abs() < 1e-12);
        assert!((fit.delta - 0.3).abs() < 1e-12);
    }

    #[test]
    fn efficiency_fits() {
        let x = ar1(0.8, 30);
        let p = AcfCurve::analytic(x.values.iter().map(|v| 0.4 * v).collect(), tau());
        let fit = check_price_efficiency(&p, &x).unwrap();
        assert!((fit.scale - 0.4).abs() < 1e-12 && fit.residual_rms < 1e-12);

        let eq = solve_markovian(0.8, 1.0, 1.0, 30, tau()).unwrap();
        let fit = check_price_efficiency(&eq.price_acf, &x).unwrap();
        assert!((fit.scale - price_variance_ratio(0.8)).abs() < 1e-12);

        let unrelated = AcfCurve::analytic((0..=30).map(|n| (n as f64 * 0.7).cos()).collect(), tau());
        assert!(check_price_efficiency(&unrelated, &x).unwrap().residual_rms > 0.1);
    }
}
