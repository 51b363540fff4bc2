//! Seeded stationary Gaussian series with a prescribed autocovariance, and
//! forward simulation of prices through a causal impact kernel.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnls::nnls;
use crate::numeric::{causal_convolution_direct, causal_convolution_fft, fft};
use crate::series::{
    AcfCurve, ImpactKernel, LagWindow, SampledSeries, SamplingScale, SeriesKind, Unit,
};
use crate::stats::fit_power_law;

/// Seed for every random draw in the crate; there is no global generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

impl Seed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Independent child seed for a labelled sub-stream.
    pub fn derive(self, stream: u64) -> Seed {
        // splitmix64 finalizer
        let mut z = self.0 ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Seed(z ^ (z >> 31))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AcfForm {
    White { variance: f64 },
    Ar1 { variance: f64, alpha: f64 },
    /// Sum of independent AR(1) components; total variance is the weight sum.
    ExpMixture { weights: Vec<f64>, alphas: Vec<f64> },
    Tabulated(AcfCurve),
}

/// Target autocovariance for [`generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct AcfSpec {
    pub form: AcfForm,
    pub tau: SamplingScale,
}

impl AcfSpec {
    pub fn white(variance: f64, tau: SamplingScale) -> Result<Self> {
        Self::validated(AcfForm::White { variance }, tau)
    }

    pub fn ar1(variance: f64, alpha: f64, tau: SamplingScale) -> Result<Self> {
        Self::validated(AcfForm::Ar1 { variance, alpha }, tau)
    }

    pub fn exp_mixture(weights: Vec<f64>, alphas: Vec<f64>, tau: SamplingScale) -> Result<Self> {
        Self::validated(AcfForm::ExpMixture { weights, alphas }, tau)
    }

    pub fn tabulated(curve: AcfCurve) -> Result<Self> {
        let tau = curve.tau;
        Self::validated(AcfForm::Tabulated(curve), tau)
    }

    fn validated(form: AcfForm, tau: SamplingScale) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        match &form {
            AcfForm::White { variance } if !(*variance > 0.0 && variance.is_finite()) => {
                return bad(format!("white variance must be positive, got {variance}"));
            }
            AcfForm::Ar1 { variance, alpha } => {
                if !(*variance > 0.0 && variance.is_finite()) {
                    return bad(format!("AR(1) variance must be positive, got {variance}"));
                }
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return bad(format!("AR(1) alpha must lie in (0, 1), got {alpha}"));
                }
            }
            AcfForm::ExpMixture { weights, alphas } => {
                if weights.len() != alphas.len() || weights.len() < 2 {
                    return bad("exponential mixture needs at least two matched terms".into());
                }
                if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                    return bad("mixture weights must be positive".into());
                }
                if alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
                    return bad("mixture alphas must lie in (0, 1)".into());
                }
            }
            AcfForm::Tabulated(curve) => {
                if curve.values.is_empty() || !(curve.values[0] > 0.0) {
                    return bad("tabulated ACF needs a positive lag-0 value".into());
                }
                if curve.values.iter().any(|v| !v.is_finite()) {
                    return bad("tabulated ACF has non-finite values".into());
                }
            }
            AcfForm::White { .. } => {}
        }
        Ok(Self { form, tau })
    }

    pub fn variance(&self) -> f64 {
        match &self.form {
            AcfForm::White { variance } | AcfForm::Ar1 { variance, .. } => *variance,
            AcfForm::ExpMixture { weights, .. } => weights.iter().sum(),
            AcfForm::Tabulated(c) => c.values[0],
        }
    }

    /// Population autocovariance at lags 0..=max_lag.
    pub fn analytic_acf(&self, max_lag: usize) -> AcfCurve {
        let values = (0..=max_lag)
            .map(|n| match &self.form {
                AcfForm::White { variance } => {
                    if n == 0 {
                        *variance
                    } else {
                        0.0
                    }
                }
                AcfForm::Ar1 { variance, alpha } => variance * alpha.powi(n as i32),
                AcfForm::ExpMixture { weights, alphas } => weights
                    .iter()
                    .zip(alphas)
                    .map(|(w, a)| w * a.powf(n as f64))
                    .sum(),
                AcfForm::Tabulated(c) => c.values.get(n).copied().unwrap_or(0.0),
            })
            .collect();
        AcfCurve::analytic(values, self.tau)
    }
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Stationary AR(1) path started from its stationary law.
fn ar1_path(variance: f64, alpha: f64, length: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let innov = (variance * (1.0 - alpha * alpha)).sqrt();
    let mut out = Vec::with_capacity(length);
    let z0: f64 = StandardNormal.sample(rng);
    let mut x = variance.sqrt() * z0;
    out.push(x);
    for _ in 1..length {
        let z: f64 = StandardNormal.sample(rng);
        x = alpha * x + innov * z;
        out.push(x);
    }
    out
}

/// Zero-mean stationary Gaussian series whose population ACF is `spec`'s.
///
/// Identical `(spec, length, seed)` gives bit-identical output.
pub fn generate(spec: &AcfSpec, length: usize, seed: Seed) -> Result<SampledSeries> {
    if length == 0 {
        return Err(Error::InvalidInput("length must be at least 1".into()));
    }
    let mut rng = seed.rng();
    let values = match &spec.form {
        AcfForm::White { variance } => {
            let sd = variance.sqrt();
            normals(&mut rng, length).into_iter().map(|z| sd * z).collect()
        }
        AcfForm::Ar1 { variance, alpha } => ar1_path(*variance, *alpha, length, &mut rng),
        AcfForm::ExpMixture { weights, alphas } => {
            let mut acc = vec![0.0; length];
            for (w, a) in weights.iter().zip(alphas) {
                let path = ar1_path(*w, *a, length, &mut rng);
                for (s, v) in acc.iter_mut().zip(path) {
                    *s += v;
                }
            }
            acc
        }
        AcfForm::Tabulated(curve) => circulant_sample(curve, length, &mut rng)?,
    };
    SampledSeries::new(values, spec.tau, SeriesKind::Flow, Unit::Dimensionless)
}

const EMBEDDING_CAP: usize = 16;

/// Circulant embedding of a tabulated ACF (zero beyond its last lag).
fn circulant_sample(curve: &AcfCurve, length: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let c = &curve.values;
    let mut half = (length.saturating_sub(1)).max(c.len() - 1).max(1).next_power_of_two();
    loop {
        let size = 2 * half;
        let mut row = vec![Complex64::default(); size];
        for k in 0..=half {
            let v = c.get(k).copied().unwrap_or(0.0);
            row[k] = Complex64::new(v, 0.0);
            if k > 0 && k < half {
                row[size - k] = Complex64::new(v, 0.0);
            }
        }
        fft(&mut row);
        let eig: Vec<f64> = row.iter().map(|z| z.re).collect();
        let max = eig.iter().cloned().fold(f64::MIN, f64::max);
        let min = eig.iter().cloned().fold(f64::MAX, f64::min);
        if min >= -1e-10 * max {
            let mut xi: Vec<Complex64> = eig
                .iter()
                .map(|&l| {
                    let s = (l.max(0.0) / size as f64).sqrt();
                    let a: f64 = StandardNormal.sample(rng);
                    let b: f64 = StandardNormal.sample(rng);
                    Complex64::new(s * a, s * b)
                })
                .collect();
            fft(&mut xi);
            return Ok(xi[..length].iter().map(|z| z.re).collect());
        }
        if size >= EMBEDDING_CAP * length.max(c.len()) {
            return Err(Error::Embedding {
                min_eigenvalue: min,
                size,
            });
        }
        half *= 2;
    }
}

/// Exponential mixture whose ACF mimics `variance * n^(-beta)` shape over `lag_range`.
///
/// Timescales sit on a geometric grid spanning the range; weights come from
/// nonnegative least squares on relative errors and are rescaled so that
/// the lag-0 value equals `variance`.
pub fn powerlaw_mixture_spec(
    beta: f64,
    variance: f64,
    n_terms: usize,
    lag_range: LagWindow,
    tau: SamplingScale,
) -> Result<AcfSpec> {
    if n_terms < 3 {
        return Err(Error::InvalidInput(format!(
            "power-law mixture needs at least 3 terms, got {n_terms}"
        )));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidInput(format!("beta must lie in (0, 1), got {beta}")));
    }
    if !(variance > 0.0) {
        return Err(Error::InvalidInput(format!("variance must be positive, got {variance}")));
    }
    if lag_range.start == 0 || lag_range.end <= lag_range.start {
        return Err(Error::InvalidInput(format!(
            "lag range {lag_range} must start at 1 or later and be nondegenerate"
        )));
    }
    let (lo, hi) = (lag_range.start as f64, lag_range.end as f64);
    let alphas: Vec<f64> = (0..n_terms)
        .map(|i| {
            let scale = lo * (hi / lo).powf(i as f64 / (n_terms - 1) as f64);
            (-1.0 / scale).exp()
        })
        .collect();

    let mut lags: Vec<usize> = (0..400)
        .map(|i| (lo * (hi / lo).powf(i as f64 / 399.0)).round() as usize)
        .collect();
    lags.dedup();
    let a = DMatrix::from_fn(lags.len(), n_terms, |r, c| {
        let n = lags[r] as f64;
        alphas[c].powf(n) * n.powf(beta)
    });
    let b = DVector::from_element(lags.len(), 1.0);
    let w = nnls(&a, &b);

    let (weights, kept): (Vec<f64>, Vec<f64>) = w
        .iter()
        .zip(&alphas)
        .filter(|(w, _)| **w > 1e-14)
        .map(|(w, a)| (*w, *a))
        .unzip();
    if weights.len() < 2 {
        return Err(Error::SpecConstruction(
            "fewer than two mixture components survived the fit".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.iter().map(|w| w * variance / total).collect();
    let spec = AcfSpec::exp_mixture(weights, kept, tau)?;

    let acf = spec.analytic_acf(lag_range.end);
    let fit = fit_power_law(&acf, lag_range)?;
    let slope = fit.exponent().expect("power-law fit");
    if (slope - beta).abs() > 0.05 {
        return Err(Error::SpecConstruction(format!(
            "mixture log-log slope {slope:.3} misses target {beta:.3} by more than 0.05"
        )));
    }
    Ok(spec)
}

const DIRECT_CONVOLUTION_LIMIT: usize = 4_000_000;

/// Propagator-model prices `p_n = sum_{m <= n} G_{n-m} q_m`.
///
/// The first `kernel.len()` outputs are flagged as burn-in because they miss
/// flow history older than the series start.
pub fn simulate_market(kernel: &ImpactKernel, flow: &SampledSeries) -> Result<SampledSeries> {
    flow.ensure_kind(&[SeriesKind::Flow, SeriesKind::Sign], "simulate_market")?;
    kernel.tau.ensure_same(&flow.tau(), "simulate_market")?;
    if kernel.len() > flow.len() {
        return Err(Error::InvalidInput(format!(
            "kernel length {} exceeds flow length {}",
            kernel.len(),
            flow.len()
        )));
    }
    let q = flow.values();
    let p = if kernel.len().saturating_mul(q.len()) <= DIRECT_CONVOLUTION_LIMIT {
        causal_convolution_direct(&kernel.values, q)
    } else {
        causal_convolution_fft(&kernel.values, q)
    };
    let burn_in = flow.burn_in() + kernel.len();
    Ok(SampledSeries::new(p, flow.tau(), SeriesKind::Price, Unit::Dimensionless)?
        .with_burn_in(burn_in))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::estimate_acf;

    fn tau() -> SamplingScale {
        SamplingScale::step()
    }

    #[test]
    fn spec_validation() {
        assert!(AcfSpec::white(0.0, tau()).is_err());
        assert!(AcfSpec::ar1(1.0, 1.0, tau()).is_err());
        assert!(AcfSpec::exp_mixture(vec![1.0], vec![0.5], tau()).is_err());
        assert!(AcfSpec::exp_mixture(vec![1.0, -1.0], vec![0.5, 0.6], tau()).is_err());
        assert!(AcfSpec::exp_mixture(vec![1.0, 1.0], vec![0.5, 0.6], tau()).is_ok());
    }

    #[test]
    fn same_seed_same_path() {
        let spec = AcfSpec::ar1(1.0, 0.5, tau()).unwrap();
        let a = generate(&spec, 1000, Seed(7)).unwrap();
        let b = generate(&spec, 1000, Seed(7)).unwrap();
        let c = generate(&spec, 1000, Seed(8)).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn white_variance_within_monte_carlo_band() {
        // Var of the sample variance of N(0,1) is 2/T: 3 sigma at T=1e5 is 0.0134.
        let spec = AcfSpec::white(1.0, tau()).unwrap();
        let x = generate(&spec, 100_000, Seed(1)).unwrap();
        let v = x.values().iter().map(|v| v * v).sum::<f64>() / 1e5;
        assert!((v - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn ar1_lag1_within_three_stderr() {
        let spec = AcfSpec::ar1(1.0, 0.5, tau()).unwrap();
        let x = generate(&spec, 100_000, Seed(2)).unwrap();
        let acf = estimate_acf(&x, 10).unwrap();
        let se = acf.bartlett_stderr(1).unwrap();
        assert!((acf.values[1] - 0.5).abs() < 3.0 * se, "{} ± {se}", acf.values[1]);
    }

    #[test]
    fn tabulated_generation_matches_target() {
        let target = AcfCurve::analytic((0..=20).map(|n| 0.8f64.powi(n)).collect(), tau());
        let spec = AcfSpec::tabulated(target).unwrap();
        let x = generate(&spec, 200_000, Seed(3)).unwrap();
        let acf = estimate_acf(&x, 5).unwrap();
        for n in 0..=5 {
            let se = acf.bartlett_stderr(n).unwrap();
            assert!((acf.values[n] - 0.8f64.powi(n as i32)).abs() < 4.0 * se);
        }
    }

    #[test]
    fn non_embeddable_acf_is_reported() {
        // |C_1| > C_0 cannot be the ACF of any process.
        let bad = AcfCurve::analytic(vec![1.0, 1.5, 0.2], tau());
        let spec = AcfSpec::tabulated(bad).unwrap();
        match generate(&spec, 64, Seed(0)) {
            Err(Error::Embedding { min_eigenvalue, .. }) => assert!(min_eigenvalue < 0.0),
            other => panic!("expected embedding error, got {other:?}"),
        }
    }

    #[test]
    fn powerlaw_mixture_slope() {
        let w = LagWindow::new(1, 200).unwrap();
        let spec = powerlaw_mixture_spec(0.7, 1.0, 8, w, tau()).unwrap();
        assert!((spec.variance() - 1.0).abs() < 1e-12);
        let fit = fit_power_law(&spec.analytic_acf(200), w).unwrap();
        assert!((fit.exponent().unwrap() - 0.7).abs() < 0.05);

        let near_one = powerlaw_mixture_spec(0.95, 2.0, 8, w, tau()).unwrap();
        let fit = fit_power_law(&near_one.analytic_acf(200), w).unwrap();
        assert!((fit.exponent().unwrap() - 0.95).abs() < 0.05);

        assert!(powerlaw_mixture_spec(0.7, 1.0, 1, w, tau()).is_err());
    }

    #[test]
    fn simulate_identity_and_cumsum() {
        let flow = SampledSeries::new(
            vec![0.3, -1.2, 2.0, 0.5],
            tau(),
            SeriesKind::Flow,
            Unit::Dimensionless,
        )
        .unwrap();
        let delta = ImpactKernel::raw(vec![1.0, 0.0, 0.0], tau()).unwrap();
        assert_eq!(simulate_market(&delta, &flow).unwrap().values(), flow.values());

        let ones = SampledSeries::new(vec![1.0; 3], tau(), SeriesKind::Flow, Unit::Dimensionless)
            .unwrap();
        let perm = ImpactKernel::raw(vec![1.0; 3], tau()).unwrap();
        let p = simulate_market(&perm, &ones).unwrap();
        assert_eq!(p.values(), &[1.0, 2.0, 3.0]);
        assert_eq!(p.burn_in(), 3);
    }

    #[test]
    fn simulate_rejects_mismatches() {
        let flow = SampledSeries::new(vec![1.0; 3], tau(), SeriesKind::Flow, Unit::Dimensionless)
            .unwrap();
        let long = ImpactKernel::raw(vec![1.0; 4], tau()).unwrap();
        assert!(simulate_market(&long, &flow).is_err());
        let other = ImpactKernel::raw(vec![1.0], SamplingScale::minutes(5.0)).unwrap();
        assert!(matches!(
            simulate_market(&other, &flow),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn fft_route_matches_direct() {
        let spec = AcfSpec::white(1.0, tau()).unwrap();
        let flow = generate(&spec, 50_000, Seed(4)).unwrap();
        let kernel = ImpactKernel::exponential(1.0, 0.99, 199, tau()).unwrap();
        let fast = simulate_market(&kernel, &flow).unwrap();
        let direct = causal_convolution_direct(&kernel.values, flow.values());
        let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in fast.values().iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
    }
}
