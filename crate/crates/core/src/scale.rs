//! Coarse-graining across sampling scales, the ACF/response scaling
//! relations, and low-frequency de-trending helpers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{
    AcfCurve, FitResult, ImpactKernel, ResponseCurve, SampledSeries, SamplingScale, SeriesKind,
    TimeUnit, Unit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockAlignment {
    /// Samples after the last complete block are discarded.
    #[default]
    DropTailRemainder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoarsenSpec {
    pub r: usize,
    #[serde(default)]
    pub alignment: BlockAlignment,
}

impl CoarsenSpec {
    pub fn new(r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidInput("coarsening ratio must be >= 1".into()));
        }
        Ok(Self {
            r,
            alignment: BlockAlignment::DropTailRemainder,
        })
    }
}

fn blocks(series: &SampledSeries, spec: CoarsenSpec) -> Result<usize> {
    if spec.r == 0 {
        return Err(Error::InvalidInput("coarsening ratio must be >= 1".into()));
    }
    if spec.r > series.len() {
        return Err(Error::Degenerate(format!(
            "coarsening ratio {} exceeds series length {}",
            spec.r,
            series.len()
        )));
    }
    Ok(series.len() / spec.r)
}

fn coarse_series(
    values: Vec<f64>,
    series: &SampledSeries,
    kind: SeriesKind,
    r: usize,
) -> Result<SampledSeries> {
    Ok(SampledSeries::new(values, series.tau().coarsened(r), kind, series.unit())?
        .with_burn_in(series.burn_in().div_ceil(r)))
}

/// Non-overlapping block sums of `r` flow samples.
pub fn coarsen_flow(flow: &SampledSeries, spec: CoarsenSpec) -> Result<SampledSeries> {
    flow.ensure_kind(&[SeriesKind::Flow, SeriesKind::Sign], "coarsen_flow")?;
    let n = blocks(flow, spec)?;
    let values = flow.values()[..n * spec.r]
        .chunks_exact(spec.r)
        .map(|c| c.iter().sum())
        .collect();
    coarse_series(values, flow, flow.kind(), spec.r)
}

/// Block-final price of each complete block, `p_{(n+1) r - 1}`.
pub fn coarsen_price(price: &SampledSeries, spec: CoarsenSpec) -> Result<SampledSeries> {
    price.ensure_kind(&[SeriesKind::Price], "coarsen_price")?;
    let n = blocks(price, spec)?;
    let values = (0..n).map(|i| price.values()[(i + 1) * spec.r - 1]).collect();
    coarse_series(values, price, SeriesKind::Price, spec.r)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("beta must lie in (0, 1], got {beta}")))
    }
}

fn check_ratio(r: usize) -> Result<()> {
    if r == 0 {
        Err(Error::InvalidInput("coarsening ratio must be >= 1".into()))
    } else {
        Ok(())
    }
}

/// Long-scale flow ACF predicted from the short-scale one: `Omega_n * r^(2 - beta)`.
pub fn rescale_acf(omega_short: &AcfCurve, r: usize, beta: f64) -> Result<AcfCurve> {
    check_beta(beta)?;
    check_ratio(r)?;
    let f = (r as f64).powf(2.0 - beta);
    Ok(AcfCurve {
        values: omega_short.values.iter().map(|v| v * f).collect(),
        tau: omega_short.tau.coarsened(r),
        sample_count: omega_short.sample_count,
    })
}

/// Long-scale response predicted from the short-scale one: `R_n * r^(1/2 + (2 - beta)/2)`.
pub fn rescale_response(resp_short: &ResponseCurve, r: usize, beta: f64) -> Result<ResponseCurve> {
    check_beta(beta)?;
    check_ratio(r)?;
    let f = (r as f64).powf(0.5 + (2.0 - beta) / 2.0);
    Ok(ResponseCurve {
        values: resp_short.values.iter().map(|v| v * f).collect(),
        kind: resp_short.kind,
        tau: resp_short.tau.coarsened(r),
    })
}

/// Read an ACF decay exponent off a power-law fit, for use as `beta`.
pub fn beta_from_fit(fit: &FitResult) -> Result<f64> {
    let beta = fit
        .exponent()
        .ok_or_else(|| Error::InvalidInput("fit is not a power law".into()))?;
    check_beta(beta)?;
    Ok(beta)
}

/// Block means of the short-scale kernel: `G^long_n = mean(G_{nr}, ..., G_{nr+r-1})`.
pub fn coarsen_kernel(g_short: &ImpactKernel, r: usize) -> Result<ImpactKernel> {
    check_ratio(r)?;
    if g_short.len() < r {
        return Err(Error::InvalidInput(format!(
            "kernel length {} shorter than ratio {r}",
            g_short.len()
        )));
    }
    let values = g_short
        .values
        .chunks_exact(r)
        .map(|c| c.iter().sum::<f64>() / r as f64)
        .collect();
    ImpactKernel::raw(values, g_short.tau.coarsened(r))
}

fn ensure_positive(series: &SampledSeries, op: &str) -> Result<()> {
    match series.values().iter().position(|v| !(*v > 0.0)) {
        Some(i) => Err(Error::InvalidInput(format!(
            "{op}: value {} at index {i} is not positive (log domain)",
            series.values()[i]
        ))),
        None => Ok(()),
    }
}

/// Causal log-growth trend `eta_n = (1/w) ln(X_n / X_{n-w})`, with `w` the
/// window in samples. Indices before `w` are zero and flagged as burn-in.
pub fn causal_trend(series: &SampledSeries, window: f64, unit: TimeUnit) -> Result<SampledSeries> {
    ensure_positive(series, "causal_trend")?;
    let w = series.tau().lags_for(window, unit)?;
    if w == 0 || series.len() <= w {
        return Err(Error::InvalidInput(format!(
            "trend window of {w} samples needs a longer series than {}",
            series.len()
        )));
    }
    let x = series.values();
    let values = (0..x.len())
        .map(|n| {
            if n < w {
                0.0
            } else {
                (x[n] / x[n - w]).ln() / w as f64
            }
        })
        .collect();
    Ok(SampledSeries::new(values, series.tau(), SeriesKind::Trend, Unit::Dimensionless)?
        .with_burn_in(w.max(series.burn_in())))
}

/// `x_n = (X_n / X_{n0}) exp(-sum_{n0 < m <= n} eta_m)`, where `n0` is the
/// first index with an available trend; earlier indices are flagged as burn-in.
pub fn detrend(series: &SampledSeries, trend: &SampledSeries) -> Result<SampledSeries> {
    trend.ensure_kind(&[SeriesKind::Trend], "detrend")?;
    series.tau().ensure_same(&trend.tau(), "detrend")?;
    if series.len() != trend.len() {
        return Err(Error::Alignment(format!(
            "series length {} differs from trend length {}",
            series.len(),
            trend.len()
        )));
    }
    let n0 = trend.burn_in();
    if n0 >= series.len() {
        return Err(Error::Alignment("trend is never available".into()));
    }
    let x = series.values();
    let eta = trend.values();
    let x0 = x[n0];
    if !(x0 > 0.0) {
        return Err(Error::InvalidInput(format!("origin value {x0} is not positive")));
    }
    let mut acc = 0.0;
    let values = (0..x.len())
        .map(|n| {
            if n > n0 {
                acc += eta[n];
            }
            x[n] / x0 * (-acc).exp()
        })
        .collect();
    Ok(SampledSeries::new(values, series.tau(), series.kind(), series.unit())?
        .with_burn_in(n0.max(series.burn_in())))
}

/// Dividend-based fundamental proxy `P^F_n = M_n <P/M>` with a full-sample mean.
pub fn fundamental_from_dividends(
    prices: &SampledSeries,
    dividends: &SampledSeries,
) -> Result<SampledSeries> {
    prices.ensure_kind(&[SeriesKind::Price], "fundamental_from_dividends")?;
    dividends.ensure_kind(&[SeriesKind::Dividend], "fundamental_from_dividends")?;
    prices.tau().ensure_same(&dividends.tau(), "fundamental_from_dividends")?;
    if prices.len() != dividends.len() {
        return Err(Error::Alignment(format!(
            "price length {} differs from dividend length {}",
            prices.len(),
            dividends.len()
        )));
    }
    ensure_positive(dividends, "fundamental_from_dividends")?;
    let m = dividends.values();
    let ratio = prices.values().iter().zip(m).map(|(p, d)| p / d).sum::<f64>() / m.len() as f64;
    let values = m.iter().map(|d| d * ratio).collect();
    Ok(SampledSeries::new(values, prices.tau(), SeriesKind::Price, prices.unit())?
        .with_burn_in(prices.burn_in().max(dividends.burn_in())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub label: String,
    pub values: Vec<f64>,
}

/// Ordered trading sessions sharing one sampling scale and unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionedSeries {
    pub tau: SamplingScale,
    pub unit: Unit,
    pub sessions: Vec<Session>,
}

/// Splice sessions in log space so each opens where the previous closed.
pub fn strip_overnight(sessions: &SessionedSeries) -> Result<SampledSeries> {
    let mut out: Vec<f64> = Vec::new();
    for s in &sessions.sessions {
        if s.values.is_empty() {
            log::warn!("skipping empty session {}", s.label);
            continue;
        }
        if let Some(v) = s.values.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "strip_overnight: session {} has nonpositive price {v}",
                s.label
            )));
        }
        let logs: Vec<f64> = s.values.iter().map(|v| v.ln()).collect();
        let shift = out.last().map_or(0.0, |prev| prev - logs[0]);
        out.extend(logs.iter().map(|l| l + shift));
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("no nonempty sessions".into()));
    }
    SampledSeries::new(
        out.into_iter().map(f64::exp).collect(),
        sessions.tau,
        SeriesKind::Price,
        sessions.unit,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(values: Vec<f64>, kind: SeriesKind) -> SampledSeries {
        SampledSeries::new(values, SamplingScale::step(), kind, Unit::Dimensionless).unwrap()
    }

    fn spec(r: usize) -> CoarsenSpec {
        CoarsenSpec::new(r).unwrap()
    }

    #[test]
    fn block_sums_and_subsamples() {
        let q = s(vec![1.0, 2.0, 3.0, 4.0, 5.0], SeriesKind::Flow);
        let c = coarsen_flow(&q, spec(2)).unwrap();
        assert_eq!(c.values(), &[3.0, 7.0]);
        assert_eq!(c.tau().value, 2.0);
        assert_eq!(coarsen_flow(&q, spec(1)).unwrap().values(), q.values());
        assert!(matches!(coarsen_flow(&q, spec(6)), Err(Error::Degenerate(_))));

        let p = s(vec![10.0, 11.0, 12.0, 13.0], SeriesKind::Price);
        assert_eq!(coarsen_price(&p, spec(2)).unwrap().values(), &[11.0, 13.0]);
        assert!(coarsen_price(&q, spec(2)).is_err());
    }

    #[test]
    fn burn_in_rounds_up() {
        let q = s(vec![1.0; 10], SeriesKind::Flow).with_burn_in(3);
        assert_eq!(coarsen_flow(&q, spec(2)).unwrap().burn_in(), 2);
    }

    #[test]
    fn scaling_factors() {
        let acf = AcfCurve::analytic(vec![1.0, 0.5], SamplingScale::step());
        assert_eq!(rescale_acf(&acf, 2, 1.0).unwrap().values, vec![2.0, 1.0]);
        let f = rescale_acf(&acf, 5, 0.7).unwrap().values[0];
        assert!((f - 8.103).abs() < 1e-3);
        assert_eq!(rescale_acf(&acf, 1, 0.7).unwrap().values, acf.values);
        assert!(rescale_acf(&acf, 2, 0.0).is_err());

        let r = ResponseCurve {
            values: vec![1.0],
            kind: crate::series::ResponseKind::Cumulative,
            tau: SamplingScale::step(),
        };
        assert!((rescale_response(&r, 4, 1.0).unwrap().values[0] - 4.0).abs() < 1e-12);
        assert!((rescale_response(&r, 5, 0.7).unwrap().values[0] - 6.37).abs() < 1e-2);
    }

    #[test]
    fn kernel_block_means() {
        let tau = SamplingScale::step();
        let g = ImpactKernel::raw(vec![2.0; 9], tau).unwrap();
        assert_eq!(coarsen_kernel(&g, 3).unwrap().values, vec![2.0; 3]);
        let a: f64 = 0.8;
        let g = ImpactKernel::exponential(1.0, a, 5, tau).unwrap();
        let c = coarsen_kernel(&g, 2).unwrap();
        assert!((c.values[0] - (1.0 + a) / 2.0).abs() < 1e-15);
        assert!((c.values[1] - (a.powi(2) + a.powi(3)) / 2.0).abs() < 1e-15);
        assert_eq!(coarsen_kernel(&g, 1).unwrap().values, g.values);
    }

    #[test]
    fn trend_of_exponential_growth() {
        let g = 0.01;
        let x = s((0..50).map(|n| (g * n as f64).exp()).collect(), SeriesKind::Price);
        let eta = causal_trend(&x, 10.0, TimeUnit::Step).unwrap();
        assert_eq!(eta.burn_in(), 10);
        for v in &eta.values()[10..] {
            assert!((v - g).abs() < 1e-12);
        }
        let d = detrend(&x, &eta).unwrap();
        for v in &d.values()[10..] {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let flat = causal_trend(&s(vec![3.0; 20], SeriesKind::Price), 5.0, TimeUnit::Step).unwrap();
        assert!(flat.values().iter().all(|v| *v == 0.0));
        assert!(causal_trend(&s(vec![1.0, -1.0, 2.0], SeriesKind::Price), 1.0, TimeUnit::Step).is_err());
    }

    #[test]
    fn zero_trend_normalizes_by_origin() {
        let x = s(vec![2.0, 4.0, 8.0], SeriesKind::Price);
        let eta = s(vec![0.0; 3], SeriesKind::Trend).with_burn_in(1);
        assert_eq!(detrend(&x, &eta).unwrap().values()[1..], [1.0, 2.0]);
    }

    #[test]
    fn dividend_proxy() {
        let m = s(vec![1.0, 2.0, 4.0], SeriesKind::Dividend);
        let p = s(vec![3.0, 6.0, 12.0], SeriesKind::Price);
        assert_eq!(fundamental_from_dividends(&p, &m).unwrap().values(), p.values());
        let flat = s(vec![2.0; 3], SeriesKind::Dividend);
        let f = fundamental_from_dividends(&p, &flat).unwrap();
        assert!(f.values().iter().all(|v| (*v - 7.0).abs() < 1e-12));
        let bad = s(vec![1.0, 0.0, 1.0], SeriesKind::Dividend);
        assert!(fundamental_from_dividends(&p, &bad).is_err());
    }

    #[test]
    fn overnight_splice() {
        let day = |v: Vec<f64>, l: &str| Session {
            label: l.into(),
            values: v,
        };
        let sessions = |d: Vec<Session>| SessionedSeries {
            tau: SamplingScale::step(),
            unit: Unit::Dimensionless,
            sessions: d,
        };
        let two = sessions(vec![
            day(vec![1.0, 1.1], "d1"),
            day(vec![], "holiday"),
            day(vec![1.2, 1.25], "d2"),
        ]);
        let out = strip_overnight(&two).unwrap();
        let v = out.values();
        assert_eq!(v.len(), 4);
        assert!((v[2] - 1.1).abs() < 1e-12);
        assert!((v[3] - 1.1 * 1.25 / 1.2).abs() < 1e-12);

        let one = sessions(vec![day(vec![1.0, 1.3, 0.9], "d1")]);
        let out = strip_overnight(&one).unwrap();
        for (a, b) in out.values().iter().zip([1.0, 1.3, 0.9]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
