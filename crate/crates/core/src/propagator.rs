//! Propagator-model calibration by Toeplitz deconvolution, price prediction
//! and the predicted-to-empirical variogram ratio.
//!
//! Returns are taken as `r_j = p_j - p_{j-1}`, so the return response solves
//! `S_k = sum_l x_l Omega_{k-l}` for the kernel increments
//! `x_l = G_l - G_{l-1}`; the level kernel is their running sum.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::series::{
    AcfCurve, ImpactKernel, ResponseCurve, ResponseKind, SampledSeries, SeriesKind, TimeUnit,
    Unit,
};
use crate::stats::{estimate_acf, estimate_return_response, estimate_variogram};
use crate::synth::simulate_market;
use crate::toeplitz::{solve_symmetric, toeplitz_apply};

pub const DEFAULT_RIDGE: f64 = 1e-6;
/// Post-solve relative residual above which a quality warning is attached.
pub const RESIDUAL_WARNING: f64 = 0.01;
/// Variance ratios above this are flagged as overshooting.
pub const PHI_ANOMALY: f64 = 1.2;

/// Kernel truncation used when none is configured: `min(500, len / 20)`.
pub fn default_max_lag(data_len: usize) -> usize {
    (data_len / 20).min(500)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationProblem {
    pub s: ResponseCurve,
    pub omega: AcfCurve,
    pub max_lag: usize,
    /// Ridge weight relative to `Omega_0`.
    pub ridge: f64,
}

impl CalibrationProblem {
    pub fn new(s: ResponseCurve, omega: AcfCurve, max_lag: usize, ridge: f64) -> Result<Self> {
        s.ensure_kind(ResponseKind::Differential)?;
        s.tau.ensure_same(&omega.tau, "calibration problem")?;
        if max_lag + 1 > s.values.len() || max_lag + 1 > omega.values.len() {
            return Err(Error::InvalidInput(format!(
                "max lag {max_lag} exceeds curve lengths ({} response, {} ACF)",
                s.values.len(),
                omega.values.len()
            )));
        }
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::InvalidInput(format!("ridge must be >= 0, got {ridge}")));
        }
        Ok(Self {
            s,
            omega,
            max_lag,
            ridge,
        })
    }

    /// Estimate S and Omega from data at one sampling scale.
    pub fn from_data(
        prices: &SampledSeries,
        flows: &SampledSeries,
        max_lag: usize,
        ridge: f64,
    ) -> Result<Self> {
        let s = estimate_return_response(prices, flows, max_lag)?;
        let omega = estimate_acf(flows, max_lag)?;
        Self::new(s, omega, max_lag, ridge)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Solution of the regularized Toeplitz system, `G_l - G_{l-1}`.
    pub increments: Vec<f64>,
    pub kernel: ImpactKernel,
    /// `||Omega x - S|| / ||S||` without the ridge term.
    pub relative_residual: f64,
    pub warning: Option<String>,
}

/// Solve `(Omega + ridge * Omega_0 * I) x = S` and cumulate to the level kernel.
pub fn calibrate(problem: &CalibrationProblem) -> Result<Calibration> {
    let n = problem.max_lag + 1;
    let omega = &problem.omega.values[..n];
    let s = &problem.s.values[..n];
    let mut t = omega.to_vec();
    t[0] += problem.ridge * omega[0];
    let x = solve_symmetric(&t, s)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Conditioning("non-finite kernel increments".into()));
    }
    let fitted = toeplitz_apply(omega, &x);
    let err: f64 = fitted.iter().zip(s).map(|(a, b)| (a - b).powi(2)).sum();
    let norm: f64 = s.iter().map(|v| v * v).sum();
    let relative_residual = if norm > 0.0 { (err / norm).sqrt() } else { 0.0 };
    let warning = (relative_residual > RESIDUAL_WARNING).then(|| {
        format!("relative residual {relative_residual:.3e} exceeds {RESIDUAL_WARNING}")
    });
    if let Some(w) = &warning {
        log::warn!("calibration quality: {w}");
    }
    let mut acc = 0.0;
    let levels = x
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    Ok(Calibration {
        increments: x,
        kernel: ImpactKernel::raw(levels, problem.s.tau)?,
        relative_residual,
        warning,
    })
}

/// Prices implied by a kernel acting on flows; same contract as [`simulate_market`].
pub fn predict_prices(kernel: &ImpactKernel, flows: &SampledSeries) -> Result<SampledSeries> {
    simulate_market(kernel, flows)
}

/// Per-bin summary of individual signed trades: `(sum of sizes, sum of signs)`.
pub fn bin_trades(trades: &[f64]) -> (f64, i64) {
    let q = trades.iter().sum();
    let eps = trades
        .iter()
        .map(|t| {
            if *t > 0.0 {
                1
            } else if *t < 0.0 {
                -1
            } else {
                0
            }
        })
        .sum();
    (q, eps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignSeries {
    pub series: SampledSeries,
    /// True when per-bin sign counts were unavailable and the sign of the
    /// bin total was used instead.
    pub from_bin_totals: bool,
}

/// Sign-sum series for the flows. Uses `sign_sums` when provided, otherwise
/// the sign of each bin total.
pub fn to_sign_series(flows: &SampledSeries, sign_sums: Option<&[i64]>) -> Result<SignSeries> {
    flows.ensure_kind(&[SeriesKind::Flow], "to_sign_series")?;
    let (values, from_bin_totals) = match sign_sums {
        Some(e) => {
            if e.len() != flows.len() {
                return Err(Error::Alignment(format!(
                    "{} sign sums for {} flow bins",
                    e.len(),
                    flows.len()
                )));
            }
            (e.iter().map(|&v| v as f64).collect(), false)
        }
        None => {
            log::warn!("per-bin sign counts unavailable; using the sign of each bin total");
            let v = flows
                .values()
                .iter()
                .map(|q| if *q == 0.0 { 0.0 } else { q.signum() })
                .collect();
            (v, true)
        }
    };
    let series = SampledSeries::new(values, flows.tau(), SeriesKind::Sign, Unit::Dimensionless)?
        .with_burn_in(flows.burn_in());
    Ok(SignSeries {
        series,
        from_bin_totals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionReport {
    /// `Phi_n` for n = 1..=len.
    pub phi_by_lag: Vec<f64>,
    pub reference_lag: usize,
    pub phi_at_reference: f64,
    pub anomalous_lags: Vec<usize>,
}

/// `Phi_n = V^P_n / V^emp_n` for n = 1..=max(reference lag, 1).
///
/// Both series are compared over their common post-burn-in range.
pub fn variance_ratio(
    predicted: &SampledSeries,
    empirical: &SampledSeries,
    reference_lag_time: f64,
    unit: TimeUnit,
) -> Result<PredictionReport> {
    predicted.ensure_kind(&[SeriesKind::Price], "variance_ratio")?;
    empirical.ensure_kind(&[SeriesKind::Price], "variance_ratio")?;
    predicted.tau().ensure_same(&empirical.tau(), "variance_ratio")?;
    if predicted.len() != empirical.len() {
        return Err(Error::Alignment(format!(
            "predicted length {} differs from empirical length {}",
            predicted.len(),
            empirical.len()
        )));
    }
    let reference_lag = predicted.tau().lags_for(reference_lag_time, unit)?.max(1);
    let start = predicted.burn_in().max(empirical.burn_in());
    let trim = |s: &SampledSeries| {
        SampledSeries::new(s.values()[start..].to_vec(), s.tau(), SeriesKind::Price, s.unit())
    };
    let vp = estimate_variogram(&trim(predicted)?, reference_lag)?;
    let ve = estimate_variogram(&trim(empirical)?, reference_lag)?;
    let mut phi_by_lag = Vec::with_capacity(reference_lag);
    for (n, (p, e)) in vp.values.iter().zip(&ve.values).enumerate() {
        if !(*e > 0.0) {
            return Err(Error::Degenerate(format!(
                "empirical variogram is zero at lag {}",
                n + 1
            )));
        }
        phi_by_lag.push(p / e);
    }
    let anomalous_lags = phi_by_lag
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > PHI_ANOMALY)
        .map(|(i, _)| i + 1)
        .collect();
    Ok(PredictionReport {
        phi_at_reference: phi_by_lag[reference_lag - 1],
        phi_by_lag,
        reference_lag,
        anomalous_lags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::SamplingScale;

    fn tau() -> SamplingScale {
        SamplingScale::step()
    }

    fn diff(values: Vec<f64>) -> ResponseCurve {
        ResponseCurve {
            values,
            kind: ResponseKind::Differential,
            tau: tau(),
        }
    }

    fn white(omega0: f64, len: usize) -> AcfCurve {
        let mut v = vec![0.0; len];
        v[0] = omega0;
        AcfCurve::analytic(v, tau())
    }

    #[test]
    fn white_flow_increments_are_scaled_response() {
        let s = vec![0.6, 0.2, -0.1, 0.05];
        let p = CalibrationProblem::new(diff(s.clone()), white(2.0, 4), 3, 0.0).unwrap();
        let c = calibrate(&p).unwrap();
        for (x, v) in c.increments.iter().zip(&s) {
            assert_eq!(*x, v / 2.0);
        }
        assert!((c.kernel.values[3] - 0.375).abs() < 1e-15);
        assert!(c.warning.is_none());
    }

    #[test]
    fn rejects_cumulative_response() {
        let mut r = diff(vec![1.0, 2.0]);
        r.kind = ResponseKind::Cumulative;
        assert!(matches!(
            CalibrationProblem::new(r, white(1.0, 2), 1, 0.0),
            Err(Error::WrongKind { .. })
        ));
    }

    #[test]
    fn sign_arithmetic() {
        assert_eq!(bin_trades(&[2.0, -1.0, 5.0]), (6.0, 1));
        assert_eq!(bin_trades(&[1.0; 4]), (4.0, 4));
        assert_eq!(bin_trades(&[]), (0.0, 0));
    }

    #[test]
    fn sign_series_fallback_is_flagged() {
        let q = SampledSeries::new(vec![6.0, -0.5, 0.0], tau(), SeriesKind::Flow, Unit::FractionOfAdv)
            .unwrap();
        let s = to_sign_series(&q, None).unwrap();
        assert!(s.from_bin_totals);
        assert_eq!(s.series.values(), &[1.0, -1.0, 0.0]);
        let s = to_sign_series(&q, Some(&[1, -3, 0])).unwrap();
        assert!(!s.from_bin_totals);
        assert_eq!(s.series.values(), &[1.0, -3.0, 0.0]);
    }

    #[test]
    fn default_truncation() {
        assert_eq!(default_max_lag(1_000_000), 500);
        assert_eq!(default_max_lag(2000), 100);
    }
}
