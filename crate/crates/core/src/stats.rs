//! Estimators for autocovariance, variogram and response curves, plus
//! log-space curve fits.
//!
//! All estimators skip the burn-in prefix of their inputs and remove the
//! sample mean of stationary inputs internally; callers never de-mean.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{cross_correlation, demeaned};
pub use crate::numeric::{fit_line, LineFit};
use crate::series::{
    AcfCurve, FitParams, FitResult, LagCurve, LagWindow, ResponseCurve, ResponseKind,
    SampledSeries, SeriesKind, Variogram,
};

fn check_window(len: usize, max_lag: usize) -> Result<()> {
    if 4 * max_lag >= len {
        Err(Error::WindowTooShort { len, max_lag })
    } else {
        Ok(())
    }
}

/// Biased autocovariance estimate: `C_n = (1/T) sum_m (x_m - xbar)(x_{m+n} - xbar)`.
///
/// The divisor is the full sample length, which keeps the estimated sequence
/// positive semidefinite.
pub fn estimate_acf(series: &SampledSeries, max_lag: usize) -> Result<AcfCurve> {
    let x = series.active();
    check_window(x.len(), max_lag)?;
    let centered = demeaned(x);
    let scale = centered.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let magnitude = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale <= 1e-12 * magnitude || scale == 0.0 {
        return Err(Error::Degenerate(format!(
            "{} series is constant; autocovariance undefined",
            series.kind().as_str()
        )));
    }
    let t = centered.len() as f64;
    let mut values: Vec<f64> = cross_correlation(&centered, &centered, max_lag)
        .into_iter()
        .map(|c| c / t)
        .collect();
    // |C_n| <= C_0 holds exactly for this estimator; clip FFT round-off.
    let c0 = values[0];
    for v in values.iter_mut().skip(1) {
        *v = v.clamp(-c0, c0);
    }
    Ok(AcfCurve {
        values,
        tau: series.tau(),
        sample_count: centered.len(),
    })
}

/// Empirical variogram `V_n = mean_m (p_{m+n} - p_m)^2` for n = 1..=max_lag.
///
/// The asymptote is the mean over the final quartile of lags, reported only
/// when the slope there is within two standard errors of zero.
pub fn estimate_variogram(series: &SampledSeries, max_lag: usize) -> Result<Variogram> {
    series.ensure_kind(&[SeriesKind::Price], "estimate_variogram")?;
    let p = series.active();
    check_window(p.len(), max_lag)?;
    let t = p.len();
    let values: Vec<f64> = (1..=max_lag)
        .into_par_iter()
        .map(|n| {
            let s: f64 = p[n..]
                .iter()
                .zip(&p[..t - n])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            s / (t - n) as f64
        })
        .collect();
    let asymptote = flat_tail_level(&values);
    Ok(Variogram {
        values,
        tau: series.tau(),
        asymptote,
    })
}

/// Mean of the final quartile if its fitted slope is statistically flat.
pub(crate) fn flat_tail_level(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 4 {
        return None;
    }
    let start = (3 * n) / 4;
    let tail = &values[start..];
    if tail.len() < 3 {
        return None;
    }
    let lags: Vec<f64> = (start..n).map(|i| (i + 1) as f64).collect();
    let LineFit {
        slope,
        slope_stderr,
        ..
    } = fit_line(&lags, tail);
    let level = tail.iter().sum::<f64>() / tail.len() as f64;
    let span = (tail.len() - 1) as f64;
    let negligible = (slope * span).abs() <= 1e-9 * level.abs().max(f64::MIN_POSITIVE);
    if slope.abs() < 2.0 * slope_stderr || negligible {
        Some(level)
    } else {
        None
    }
}

struct Aligned<'a> {
    prices: &'a [f64],
    flows: Vec<f64>,
    /// Number of trade indices averaged over, shared by every lag.
    count: usize,
}

fn align<'a>(
    prices: &'a SampledSeries,
    flows: &SampledSeries,
    max_lag: usize,
    op: &str,
) -> Result<Aligned<'a>> {
    prices.ensure_kind(&[SeriesKind::Price], op)?;
    flows.ensure_kind(&[SeriesKind::Flow, SeriesKind::Sign], op)?;
    if prices.len() != flows.len() {
        return Err(Error::Alignment(format!(
            "{op}: price length {} differs from flow length {}",
            prices.len(),
            flows.len()
        )));
    }
    prices.tau().ensure_same(&flows.tau(), op)?;
    let start = prices.burn_in().max(flows.burn_in());
    let p = &prices.values()[start..];
    check_window(p.len(), max_lag)?;
    let q = demeaned(&flows.values()[start..]);
    let count = p.len() - 1 - max_lag;
    Ok(Aligned {
        prices: p,
        flows: q,
        count,
    })
}

/// Response `R_n = <q_m (p_{m+n} - p_{m-1})>` for n = 0..=max_lag.
///
/// Every lag averages over the same trade indices m = 1..=T-1-max_lag, so
/// the curve is exactly the running sum of [`estimate_return_response`].
pub fn estimate_response(
    prices: &SampledSeries,
    flows: &SampledSeries,
    max_lag: usize,
) -> Result<ResponseCurve> {
    let a = align(prices, flows, max_lag, "estimate_response")?;
    let (p, q, m_count) = (a.prices, &a.flows, a.count);
    let values = (0..=max_lag)
        .into_par_iter()
        .map(|n| {
            let s: f64 = (1..=m_count).map(|m| q[m] * (p[m + n] - p[m - 1])).sum();
            s / m_count as f64
        })
        .collect();
    Ok(ResponseCurve {
        values,
        kind: ResponseKind::Cumulative,
        tau: prices.tau(),
    })
}

/// Return response `S_k = <q_m r_{m+k}>` for k = 0..=max_lag, where
/// `r_j = p_j - p_{j-1}` is the return over bin j (it contains trade j).
pub fn estimate_return_response(
    prices: &SampledSeries,
    flows: &SampledSeries,
    max_lag: usize,
) -> Result<ResponseCurve> {
    let a = align(prices, flows, max_lag, "estimate_return_response")?;
    let (p, q, m_count) = (a.prices, &a.flows, a.count);
    let values = (0..=max_lag)
        .into_par_iter()
        .map(|k| {
            let s: f64 = (1..=m_count)
                .map(|m| q[m] * (p[m + k] - p[m + k - 1]))
                .sum();
            s / m_count as f64
        })
        .collect();
    Ok(ResponseCurve {
        values,
        kind: ResponseKind::Differential,
        tau: prices.tau(),
    })
}

/// Running sum `R_n = sum_{0 <= m < n} S_m`, with `R_0 = 0`.
///
/// The output has one more entry than the input. With the return convention
/// of [`estimate_return_response`], entry n+1 equals `estimate_response` at lag n.
pub fn cumulate_response(s: &ResponseCurve) -> Result<ResponseCurve> {
    s.ensure_kind(ResponseKind::Differential)?;
    let mut values = Vec::with_capacity(s.values.len() + 1);
    let mut acc = 0.0;
    values.push(acc);
    for v in &s.values {
        acc += v;
        values.push(acc);
    }
    Ok(ResponseCurve {
        values,
        kind: ResponseKind::Cumulative,
        tau: s.tau,
    })
}

fn window_values<C: LagCurve + ?Sized>(curve: &C, window: LagWindow) -> Result<Vec<(f64, f64)>> {
    if window.start < curve.first_lag() || window.end > curve.last_lag() {
        return Err(Error::InvalidInput(format!(
            "fit window {window} outside curve lags [{}, {}]",
            curve.first_lag(),
            curve.last_lag()
        )));
    }
    if window.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "fit window {window} needs at least two lags"
        )));
    }
    window
        .lags()
        .map(|lag| {
            let v = curve.at_lag(lag).expect("lag checked against range");
            if v > 0.0 {
                Ok((lag as f64, v.ln()))
            } else {
                Err(Error::FitDomain(format!(
                    "value {v:.3e} at lag {lag} is not positive; shrink the window"
                )))
            }
        })
        .collect()
}

/// Least-squares fit of `ln C_n = ln A - n / l` over the window.
/// The timescale is reported in units of the curve's tau (`l * tau`).
pub fn fit_exponential<C: LagCurve + ?Sized>(curve: &C, window: LagWindow) -> Result<FitResult> {
    let points = window_values(curve, window)?;
    let (x, y): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
    let line = fit_line(&x, &y);
    if line.slope >= 0.0 {
        return Err(Error::FitDomain(format!(
            "curve does not decay over {window} (log slope {:.3e})",
            line.slope
        )));
    }
    Ok(FitResult {
        params: FitParams::Exponential {
            amplitude: line.intercept.exp(),
            timescale: -curve.tau().value / line.slope,
        },
        window,
        residual_rms: line.residual_rms,
    })
}

/// Least-squares fit of `ln C_n = ln A - exponent * ln n` over the window.
pub fn fit_power_law<C: LagCurve + ?Sized>(curve: &C, window: LagWindow) -> Result<FitResult> {
    if window.start == 0 {
        return Err(Error::FitDomain(
            "power-law fit needs lags >= 1".into(),
        ));
    }
    let points = window_values(curve, window)?;
    let (x, y): (Vec<f64>, Vec<f64>) = points.into_iter().map(|(n, v)| (n.ln(), v)).unzip();
    let line = fit_line(&x, &y);
    Ok(FitResult {
        params: FitParams::PowerLaw {
            amplitude: line.intercept.exp(),
            exponent: -line.slope,
        },
        window,
        residual_rms: line.residual_rms,
    })
}
