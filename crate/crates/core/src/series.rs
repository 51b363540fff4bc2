//! Uniformly sampled series and the lag-indexed curves estimated from them.
//!
//! Every curve carries the sampling scale it was built at, so that objects
//! from different coarse-graining levels are never mixed by accident.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time unit of a sampling scale.
///
/// Conversions follow a trading calendar: one session is 390 minutes
/// (9:30 to 16:00), one year is 250 sessions or 12 months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    Step,
    Microsecond,
    Second,
    Minute,
    Day,
    Month,
    Year,
}

impl TimeUnit {
    /// Length of one unit in years, `None` for the dimensionless step.
    fn in_years(self) -> Option<f64> {
        const MINUTES_PER_DAY: f64 = 390.0;
        const DAYS_PER_YEAR: f64 = 250.0;
        let minute = 1.0 / (MINUTES_PER_DAY * DAYS_PER_YEAR);
        match self {
            TimeUnit::Step => None,
            TimeUnit::Microsecond => Some(minute / 60e6),
            TimeUnit::Second => Some(minute / 60.0),
            TimeUnit::Minute => Some(minute),
            TimeUnit::Day => Some(1.0 / DAYS_PER_YEAR),
            TimeUnit::Month => Some(1.0 / 12.0),
            TimeUnit::Year => Some(1.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TimeUnit::Step => "step",
            TimeUnit::Microsecond => "us",
            TimeUnit::Second => "s",
            TimeUnit::Minute => "min",
            TimeUnit::Day => "day",
            TimeUnit::Month => "month",
            TimeUnit::Year => "year",
        }
    }
}

/// Real-time duration of one lag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingScale {
    pub value: f64,
    pub unit: TimeUnit,
}

impl SamplingScale {
    pub fn new(value: f64, unit: TimeUnit) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sampling scale must be positive and finite, got {value}"
            )));
        }
        Ok(Self { value, unit })
    }

    /// One dimensionless step.
    pub fn step() -> Self {
        Self {
            value: 1.0,
            unit: TimeUnit::Step,
        }
    }

    pub fn minutes(value: f64) -> Self {
        Self {
            value,
            unit: TimeUnit::Minute,
        }
    }

    pub fn days(value: f64) -> Self {
        Self {
            value,
            unit: TimeUnit::Day,
        }
    }

    pub fn months(value: f64) -> Self {
        Self {
            value,
            unit: TimeUnit::Month,
        }
    }

    /// Scale after aggregating `r` consecutive samples.
    pub fn coarsened(self, r: usize) -> Self {
        Self {
            value: self.value * r as f64,
            unit: self.unit,
        }
    }

    /// Express a duration given in this scale's unit in `target` units.
    pub fn convert(value: f64, from: TimeUnit, to: TimeUnit) -> Result<f64> {
        if from == to {
            return Ok(value);
        }
        match (from.in_years(), to.in_years()) {
            (Some(a), Some(b)) => Ok(value * a / b),
            _ => Err(Error::InvalidInput(format!(
                "cannot convert between {} and {}",
                from.as_str(),
                to.as_str()
            ))),
        }
    }

    /// Duration of `lags` steps, in `unit`.
    pub fn lags_to(self, lags: f64, unit: TimeUnit) -> Result<f64> {
        Self::convert(lags * self.value, self.unit, unit)
    }

    /// Nearest whole number of lags covering `duration` given in `unit`.
    pub fn lags_for(self, duration: f64, unit: TimeUnit) -> Result<usize> {
        let in_own = Self::convert(duration, unit, self.unit)?;
        let lags = (in_own / self.value).round();
        if !(lags.is_finite() && lags >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "duration {duration} {} is not representable in lags of {self}",
                unit.as_str()
            )));
        }
        Ok(lags as usize)
    }

    pub fn same_as(&self, other: &SamplingScale) -> bool {
        self.unit == other.unit && (self.value - other.value).abs() <= 1e-12 * self.value.abs()
    }

    pub(crate) fn ensure_same(&self, other: &SamplingScale, what: &str) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::Alignment(format!(
                "{what}: sampling scales differ ({self} vs {other})"
            )))
        }
    }
}

impl fmt::Display for SamplingScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.value, self.unit.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Price,
    Flow,
    Sign,
    Dividend,
    Trend,
}

impl SeriesKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SeriesKind::Price => "price",
            SeriesKind::Flow => "flow",
            SeriesKind::Sign => "sign",
            SeriesKind::Dividend => "dividend",
            SeriesKind::Trend => "trend",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    BasisPoints,
    FractionOfAdv,
    Dimensionless,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::BasisPoints => "bp",
            Unit::FractionOfAdv => "fraction_of_adv",
            Unit::Dimensionless => "dimensionless",
        }
    }
}

/// A gap-free, uniformly sampled real series.
///
/// The first `burn_in` samples are flagged (simulation warm-up, trend
/// warm-up) and skipped by every estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSeries {
    values: Vec<f64>,
    tau: SamplingScale,
    kind: SeriesKind,
    unit: Unit,
    burn_in: usize,
}

impl SampledSeries {
    pub fn new(values: Vec<f64>, tau: SamplingScale, kind: SeriesKind, unit: Unit) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("series must hold at least one value".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "{} series has a non-finite value at index {i}",
                kind.as_str()
            )));
        }
        SamplingScale::new(tau.value, tau.unit)?;
        Ok(Self {
            values,
            tau,
            kind,
            unit,
            burn_in: 0,
        })
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in.min(self.values.len());
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Samples past the flagged burn-in prefix.
    pub fn active(&self) -> &[f64] {
        &self.values[self.burn_in..]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tau(&self) -> SamplingScale {
        self.tau
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub(crate) fn ensure_kind(&self, allowed: &[SeriesKind], op: &str) -> Result<()> {
        if allowed.contains(&self.kind) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "{op} does not accept a {} series",
                self.kind.as_str()
            )))
        }
    }
}

/// Common read access to lag-indexed curves, used by the fitting routines.
pub trait LagCurve {
    /// Lag of the first stored value.
    fn first_lag(&self) -> usize;
    fn lag_values(&self) -> &[f64];
    fn tau(&self) -> SamplingScale;

    fn last_lag(&self) -> usize {
        self.first_lag() + self.lag_values().len().saturating_sub(1)
    }

    fn at_lag(&self, lag: usize) -> Option<f64> {
        lag.checked_sub(self.first_lag())
            .and_then(|i| self.lag_values().get(i).copied())
    }
}

/// Autocovariance C_0..C_N.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfCurve {
    pub values: Vec<f64>,
    pub tau: SamplingScale,
    /// Number of samples behind the estimate, 0 for analytic curves.
    pub sample_count: usize,
}

impl AcfCurve {
    pub fn analytic(values: Vec<f64>, tau: SamplingScale) -> Self {
        Self {
            values,
            tau,
            sample_count: 0,
        }
    }

    pub fn lag0(&self) -> f64 {
        self.values[0]
    }

    pub fn max_lag(&self) -> usize {
        self.values.len() - 1
    }

    /// Two-sided lookup with zero beyond the tabulated range.
    pub fn at(&self, lag: isize) -> f64 {
        self.values.get(lag.unsigned_abs()).copied().unwrap_or(0.0)
    }

    /// Standard error of an estimated value at `lag` under Bartlett's
    /// formula truncated at the tabulated range. `None` for analytic curves.
    pub fn bartlett_stderr(&self, lag: usize) -> Option<f64> {
        if self.sample_count == 0 {
            return None;
        }
        let c0 = self.values[0];
        let rho = |k: usize| self.values.get(k).map_or(0.0, |c| c / c0);
        let m = self.max_lag();
        let mut var = 0.0;
        for k in 0..=m {
            let kk = k as isize;
            let l = lag as isize;
            let w = if k == 0 { 1.0 } else { 2.0 };
            let a = rho(k) * rho(k);
            let b = rho((kk + l).unsigned_abs()) * rho((kk - l).unsigned_abs());
            var += w * (a + b) / 2.0;
        }
        Some(c0 * (var / self.sample_count as f64).sqrt())
    }
}

impl LagCurve for AcfCurve {
    fn first_lag(&self) -> usize {
        0
    }
    fn lag_values(&self) -> &[f64] {
        &self.values
    }
    fn tau(&self) -> SamplingScale {
        self.tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelNormalization {
    Raw,
    UnitLag0,
}

/// Causal impact kernel G_0..G_N acting on flows at one sampling scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactKernel {
    pub values: Vec<f64>,
    pub tau: SamplingScale,
    pub normalization: KernelNormalization,
}

impl ImpactKernel {
    pub fn raw(values: Vec<f64>, tau: SamplingScale) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "kernel must be nonempty and finite".into(),
            ));
        }
        Ok(Self {
            values,
            tau,
            normalization: KernelNormalization::Raw,
        })
    }

    /// Exponential kernel `scale * decay^n`, n = 0..=max_lag.
    pub fn exponential(scale: f64, decay: f64, max_lag: usize, tau: SamplingScale) -> Result<Self> {
        Self::raw(
            (0..=max_lag).map(|n| scale * decay.powi(n as i32)).collect(),
            tau,
        )
    }

    /// Kernel rescaled so that G_0 = 1 exactly.
    pub fn normalized(&self) -> Result<Self> {
        let g0 = self.values[0];
        if !(g0 > 0.0) {
            return Err(Error::Degenerate(format!(
                "cannot normalize a kernel with G_0 = {g0}"
            )));
        }
        let mut values: Vec<f64> = self.values.iter().map(|g| g / g0).collect();
        values[0] = 1.0;
        Ok(Self {
            values,
            tau: self.tau,
            normalization: KernelNormalization::UnitLag0,
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|g| g * factor).collect(),
            tau: self.tau,
            normalization: KernelNormalization::Raw,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl LagCurve for ImpactKernel {
    fn first_lag(&self) -> usize {
        0
    }
    fn lag_values(&self) -> &[f64] {
        &self.values
    }
    fn tau(&self) -> SamplingScale {
        self.tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    /// R_n: price change from just before a trade to n lags after it.
    Cumulative,
    /// S_n: one-step return n lags after a trade.
    Differential,
}

impl ResponseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ResponseKind::Cumulative => "cumulative",
            ResponseKind::Differential => "differential",
        }
    }
}

/// Response curve indexed by lag n >= 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseCurve {
    pub values: Vec<f64>,
    pub kind: ResponseKind,
    pub tau: SamplingScale,
}

impl ResponseCurve {
    pub fn ensure_kind(&self, expected: ResponseKind) -> Result<()> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(Error::WrongKind {
                expected: expected.as_str(),
                got: self.kind.as_str(),
            })
        }
    }
}

impl LagCurve for ResponseCurve {
    fn first_lag(&self) -> usize {
        0
    }
    fn lag_values(&self) -> &[f64] {
        &self.values
    }
    fn tau(&self) -> SamplingScale {
        self.tau
    }
}

/// Variogram V_1..V_N (stored from lag 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Variogram {
    pub values: Vec<f64>,
    pub tau: SamplingScale,
    pub asymptote: Option<f64>,
}

impl Variogram {
    /// V_n for n >= 1.
    pub fn at(&self, lag: usize) -> Option<f64> {
        lag.checked_sub(1).and_then(|i| self.values.get(i).copied())
    }

    pub fn max_lag(&self) -> usize {
        self.values.len()
    }
}

impl LagCurve for Variogram {
    fn first_lag(&self) -> usize {
        1
    }
    fn lag_values(&self) -> &[f64] {
        &self.values
    }
    fn tau(&self) -> SamplingScale {
        self.tau
    }
}

/// Inclusive lag interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagWindow {
    pub start: usize,
    pub end: usize,
}

impl LagWindow {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidInput(format!(
                "empty lag window [{start}, {end}]"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lags(&self) -> impl Iterator<Item = usize> {
        self.start..=self.end
    }
}

impl fmt::Display for LagWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum FitParams {
    /// `amplitude * exp(-lag * tau / timescale)`; timescale in units of tau.
    Exponential { amplitude: f64, timescale: f64 },
    /// `amplitude * lag^(-exponent)`.
    PowerLaw { amplitude: f64, exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FitParams,
    pub window: LagWindow,
    /// RMS residual of the fit in log space.
    pub residual_rms: f64,
}

impl FitResult {
    pub fn amplitude(&self) -> f64 {
        match self.params {
            FitParams::Exponential { amplitude, .. } | FitParams::PowerLaw { amplitude, .. } => {
                amplitude
            }
        }
    }

    pub fn timescale(&self) -> Option<f64> {
        match self.params {
            FitParams::Exponential { timescale, .. } => Some(timescale),
            FitParams::PowerLaw { .. } => None,
        }
    }

    pub fn exponent(&self) -> Option<f64> {
        match self.params {
            FitParams::PowerLaw { exponent, .. } => Some(exponent),
            FitParams::Exponential { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_nonfinite() {
        let tau = SamplingScale::step();
        assert!(SampledSeries::new(vec![], tau, SeriesKind::Price, Unit::Dimensionless).is_err());
        assert!(SampledSeries::new(
            vec![1.0, f64::NAN],
            tau,
            SeriesKind::Price,
            Unit::Dimensionless
        )
        .is_err());
        assert!(SamplingScale::new(0.0, TimeUnit::Minute).is_err());
    }

    #[test]
    fn coarsening_multiplies_scale_exactly() {
        let tau = SamplingScale::minutes(1.0);
        assert_eq!(tau.coarsened(5).coarsened(6), tau.coarsened(30));
        assert_eq!(tau.coarsened(30).value, 30.0);
    }

    #[test]
    fn trading_calendar_conversions() {
        let minute = SamplingScale::minutes(1.0);
        assert_eq!(minute.lags_for(4.0, TimeUnit::Day).unwrap(), 4 * 390);
        assert_eq!(SamplingScale::minutes(30.0).lags_for(4.0, TimeUnit::Day).unwrap(), 52);
        let years = SamplingScale::months(1.0).lags_to(31.2, TimeUnit::Year).unwrap();
        assert!((years - 2.6).abs() < 1e-12);
        assert!(SamplingScale::step().lags_for(1.0, TimeUnit::Day).is_err());
    }

    #[test]
    fn normalized_kernel_has_unit_lag0() {
        let k = ImpactKernel::exponential(3.0, 0.5, 4, SamplingScale::step()).unwrap();
        let n = k.normalized().unwrap();
        assert_eq!(n.values[0], 1.0);
        assert_eq!(n.normalization, KernelNormalization::UnitLag0);
        assert!((n.values[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn lag_window_must_be_nonempty() {
        assert!(LagWindow::new(3, 2).is_err());
        assert_eq!(LagWindow::new(1, 50).unwrap().len(), 50);
    }
}
