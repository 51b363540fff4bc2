//! End-to-end experiment pipelines. Each one fills a [`ReportBundle`].

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;

use crate::app::config::{Experiment, PipelineConfig};
use crate::app::io::{binned_series, load_binned, load_monthly, monthly_series};
use crate::app::report::{Curve, ReportBundle};
use crate::error::{Error, Result};
use crate::kyle::{kyle_variogram, price_variance_ratio, solve_combo, solve_markovian, KyleInputs};
use crate::numeric::fit_line;
use crate::propagator::{
    calibrate, default_max_lag, predict_prices, to_sign_series, variance_ratio, CalibrationProblem,
};
use crate::scale::{
    beta_from_fit, causal_trend, coarsen_flow, coarsen_kernel, coarsen_price, detrend,
    fundamental_from_dividends, rescale_acf, rescale_response, strip_overnight, CoarsenSpec,
};
use crate::series::{
    AcfCurve, ImpactKernel, SampledSeries, SamplingScale, SeriesKind, TimeUnit, Unit,
};
use crate::stats::{estimate_acf, estimate_response, estimate_variogram, fit_exponential, fit_power_law};
use crate::synth::{generate, powerlaw_mixture_spec, simulate_market, AcfSpec, Seed};

/// Mean-reversion times and variance ratio used for the universality markets.
pub const UNIVERSALITY_TAU_EMP_YEARS: f64 = 3.4;
pub const UNIVERSALITY_TAU_F_YEARS: f64 = 2.6;
pub const UNIVERSALITY_VARIANCE_RATIO: f64 = 0.26;

const DAYS_PER_YEAR: f64 = 250.0;
const MINUTES_PER_DAY: f64 = 390.0;

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n as f64).sqrt()
}

/// Largest `|a_n / b_n - 1|` over the common range.
fn max_rel_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x / y - 1.0).abs())
        .fold(0.0, f64::max)
}

fn over_g0(kernel: &ImpactKernel) -> Vec<f64> {
    let g0 = kernel.values[0];
    kernel.values.iter().map(|g| g / g0).collect()
}

/// Run the configured experiment. Errors carry the stage name and config hash.
pub fn run_experiment(config: &PipelineConfig) -> Result<ReportBundle> {
    config.validate()?;
    let experiment = config
        .experiment
        .ok_or_else(|| Error::Config("no experiment selected".into()))?;
    let hash = config.hash();
    let mut bundle = ReportBundle::new(experiment.as_str(), &hash, config.to_json());
    let result = match experiment {
        Experiment::Universality => universality(config, &mut bundle),
        Experiment::LowfreqTable1 => lowfreq_table1(config, &mut bundle),
        Experiment::MultiscaleFig2 => multiscale_fig2(config, &mut bundle),
        Experiment::PhiFig4 => phi_fig4(config, &mut bundle),
        Experiment::AppendixB => appendix_b(config, &mut bundle),
    };
    result
        .and_then(|()| stage("validate report", bundle.validate()))
        .map_err(|e| e.in_stage(format!("{experiment} (config {hash})")))?;
    Ok(bundle)
}

fn universality(cfg: &PipelineConfig, bundle: &mut ReportBundle) -> Result<()> {
    let len = cfg.synthetic.length.unwrap_or(500_000);
    let tau = SamplingScale::days(1.0);
    let tau_emp = UNIVERSALITY_TAU_EMP_YEARS * DAYS_PER_YEAR;
    let tau_f = UNIVERSALITY_TAU_F_YEARS * DAYS_PER_YEAR;
    let tau_min = tau_emp.min(tau_f);
    let max_lag = cfg.calibration.max_lag.unwrap_or(1000);
    let deep = (tau_min / 20.0).floor() as usize;
    let mut windows: Vec<usize> = [deep, (tau_min / 5.0) as usize, tau_min as usize, max_lag]
        .into_iter()
        .filter(|w| *w >= 1 && *w <= max_lag)
        .collect();
    windows.dedup();

    let a_emp = (-1.0 / tau_emp).exp();
    let a_f = (-1.0 / tau_f).exp();
    let g_f = (UNIVERSALITY_VARIANCE_RATIO * (1.0 - a_f * a_f) / (1.0 - a_emp * a_emp)).sqrt();
    let k_emp = ImpactKernel::exponential(1.0, a_emp, (8.0 * tau_emp) as usize, tau)?;
    let k_f = ImpactKernel::exponential(g_f, a_f, (8.0 * tau_f) as usize, tau)?;
    if len < k_emp.len() + 5 * max_lag {
        return Err(Error::Config(format!(
            "universality needs synthetic.length >= {}, got {len}",
            k_emp.len() + 5 * max_lag
        )));
    }

    let flow_spec = stage("flow spec", AcfSpec::white(cfg.synthetic.flow_variance, tau))?;
    let flow = stage("generate flow", generate(&flow_spec, len, Seed(cfg.seed).derive(1)))?;
    let mut normalized = Vec::new();
    for (label, kernel) in [("emp", &k_emp), ("fund", &k_f)] {
        let prices = stage("simulate", simulate_market(kernel, &flow))?;
        let full = stage(
            "estimate",
            CalibrationProblem::from_data(&prices, &flow, max_lag, cfg.calibration.ridge),
        )?;
        for &w in &windows {
            let p = CalibrationProblem::new(full.s.clone(), full.omega.clone(), w, full.ridge)?;
            let cal = stage("calibrate", calibrate(&p))?;
            if let Some(warning) = &cal.warning {
                bundle.note(format!("{label} window {w}: {warning}"));
            }
            bundle.curve(
                Curve::from_lags(format!("g-over-g0-{label}-w{w}"), 0, over_g0(&cal.kernel))?
                    .with_x_label("lag_days"),
            )?;
            if w == max_lag {
                normalized.push(over_g0(&cal.kernel));
            }
        }
        let v = stage("variogram", estimate_variogram(&prices, max_lag))?;
        bundle.curve(Curve::from_lag_curve(format!("variogram-{label}"), &v)?.with_x_label("lag_days"))?;
    }
    let dev: Vec<f64> = normalized[0]
        .iter()
        .zip(&normalized[1])
        .map(|(a, b)| (a / b - 1.0).abs())
        .collect();
    let deep_dev = dev[..=deep.min(max_lag)].iter().copied().fold(0.0, f64::max);
    bundle.scalar("tau_emp_days", tau_emp);
    bundle.scalar("tau_f_days", tau_f);
    bundle.scalar("deep_window_lags", deep as f64);
    bundle.scalar("max_rel_dev_deep", deep_dev);
    if let Some(d) = dev.get(tau_min as usize) {
        bundle.scalar("rel_dev_at_tau_min", *d);
    }
    bundle.scalar("max_rel_dev_all", dev.iter().copied().fold(0.0, f64::max));
    bundle.curve(Curve::from_lags("g-ratio-deviation", 0, dev)?.with_x_label("lag_days"))?;
    Ok(())
}

/// AR(1)-around-a-trend stand-in for the monthly index when no file is given.
fn synthetic_monthly(seed: Seed) -> Result<(SampledSeries, SampledSeries)> {
    let months = 1767;
    let tau = SamplingScale::months(1.0);
    let a_emp = (-1.0 / (UNIVERSALITY_TAU_EMP_YEARS * 12.0)).exp();
    let a_f = (-1.0 / (UNIVERSALITY_TAU_F_YEARS * 12.0)).exp();
    let sd = 0.25;
    let u = generate(&AcfSpec::ar1(sd * sd, a_emp, tau)?, months, seed.derive(21))?;
    let v = generate(
        &AcfSpec::ar1(sd * sd * UNIVERSALITY_VARIANCE_RATIO, a_f, tau)?,
        months,
        seed.derive(22),
    )?;
    let growth = 0.0035;
    let prices = (0..months)
        .map(|n| 10.0 * (growth * n as f64 + u.values()[n]).exp())
        .collect();
    let dividends = (0..months)
        .map(|n| 0.4 * (growth * n as f64 + v.values()[n]).exp())
        .collect();
    Ok((
        SampledSeries::new(prices, tau, SeriesKind::Price, Unit::Dimensionless)?,
        SampledSeries::new(dividends, tau, SeriesKind::Dividend, Unit::Dimensionless)?,
    ))
}

/// Detrended, de-meaned copy of the post-burn-in part of a price series.
fn stationary_part(series: &SampledSeries, window_years: f64) -> Result<SampledSeries> {
    let trend = causal_trend(series, window_years, TimeUnit::Year)?;
    let d = detrend(series, &trend)?;
    let x = d.active();
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    SampledSeries::new(
        x.iter().map(|v| v - mean).collect(),
        d.tau(),
        SeriesKind::Price,
        d.unit(),
    )
}

/// Low-frequency calibration: timescales and variance ratios from monthly data.
pub fn lowfreq_table1(cfg: &PipelineConfig, bundle: &mut ReportBundle) -> Result<()> {
    let lf = &cfg.lowfreq;
    let (prices, dividends) = match &lf.monthly_csv {
        Some(path) => {
            let records = stage("load monthly", load_monthly(path, &lf.columns))?;
            bundle.note(format!("monthly data: {} ({} rows)", path.display(), records.len()));
            monthly_series(&records)?
        }
        None => {
            bundle.note("no monthly data file configured; using a synthetic stand-in");
            stage("synthetic monthly", synthetic_monthly(Seed(cfg.seed)))?
        }
    };
    let fundamental = stage("fundamental", fundamental_from_dividends(&prices, &dividends))?;
    let emp = stage("detrend price", stationary_part(&prices, lf.trend_window_years))?;
    let fund = stage("detrend fundamental", stationary_part(&fundamental, lf.trend_window_years))?;
    let acf_emp = stage("acf price", estimate_acf(&emp, lf.max_lag_months))?;
    let acf_f = stage("acf fundamental", estimate_acf(&fund, lf.max_lag_months))?;
    let window = cfg.calibration.exp_fit.to_lag_window()?;
    let fit_emp = stage("fit price", fit_exponential(&acf_emp, window))?;
    let fit_f = stage("fit fundamental", fit_exponential(&acf_f, window))?;
    let months_per_year = 12.0;
    let tau_emp = fit_emp.timescale().expect("exponential fit") / months_per_year;
    let tau_f = fit_f.timescale().expect("exponential fit") / months_per_year;
    let vf_ratio = acf_f.lag0() / acf_emp.lag0();

    // Kyle model with one step of `kyle_step_years` and an AR(1) signal
    // matching the fundamental's decay.
    let alpha = (-lf.kyle_step_years / tau_f).exp();
    let ratio = price_variance_ratio(alpha);
    let steps = ((lf.max_lag_months as f64 / months_per_year / lf.kyle_step_years).ceil() as usize).max(2);
    let step_tau = SamplingScale::new(lf.kyle_step_years, TimeUnit::Year)?;
    let eq = stage("kyle", solve_markovian(alpha, acf_f.lag0(), 1.0, steps, step_tau))?;
    let sigma_it = AcfCurve::analytic(
        (0..=steps).map(|n| acf_f.lag0() * alpha.powi(n as i32)).collect(),
        step_tau,
    );
    let v_sk = stage("kyle variogram", kyle_variogram(&eq, &sigma_it, steps))?;

    bundle.scalar("tau_emp_years", tau_emp);
    bundle.scalar("tau_f_years", tau_f);
    bundle.scalar("vf_over_vemp", vf_ratio);
    bundle.scalar("vsk_over_vemp", ratio * vf_ratio);
    bundle.scalar("kyle_alpha", alpha);
    bundle.scalar("kyle_price_variance_ratio", ratio);
    bundle.scalar("fit_residual_rms_emp", fit_emp.residual_rms);
    bundle.scalar("fit_residual_rms_f", fit_f.residual_rms);
    let stderr = |a: &AcfCurve| (0..a.values.len()).map(|n| a.bartlett_stderr(n).unwrap_or(0.0)).collect();
    bundle.curve(
        Curve::from_lag_curve("acf-emp", &acf_emp)?
            .with_x_label("lag_months")
            .with_stderr(stderr(&acf_emp))?,
    )?;
    bundle.curve(
        Curve::from_lag_curve("acf-fund", &acf_f)?
            .with_x_label("lag_months")
            .with_stderr(stderr(&acf_f))?,
    )?;
    for (name, fit, acf) in [("acf-fit-emp", &fit_emp, &acf_emp), ("acf-fit-fund", &fit_f, &acf_f)] {
        let (amp, l) = (fit.amplitude(), fit.timescale().expect("exponential fit"));
        let values = (0..acf.values.len()).map(|n| amp * (-(n as f64) / l).exp()).collect();
        bundle.curve(Curve::from_lags(name, 0, values)?.with_x_label("lag_months"))?;
    }
    bundle.curve(Curve::from_lags("detrended-emp", 0, emp.values().to_vec())?.with_x_label("month"))?;
    bundle.curve(Curve::from_lags("detrended-fund", 0, fund.values().to_vec())?.with_x_label("month"))?;
    let x = (1..=v_sk.values.len()).map(|n| n as f64 * lf.kyle_step_years).collect();
    bundle.curve(Curve::new("variogram-sk", x, v_sk.values.clone())?.with_x_label("lag_years"))?;
    Ok(())
}

/// Prices, flows and sign sums at the finest intraday scale.
struct IntradayMarket {
    prices: SampledSeries,
    flows: SampledSeries,
    signs: SampledSeries,
}

fn powerlaw_kernel(gamma: f64, len: usize, tau: SamplingScale) -> Result<ImpactKernel> {
    ImpactKernel::raw((0..len).map(|n| (1.0 + n as f64).powf(-gamma)).collect(), tau)
}

/// Bins of `trades_per_bin` trades whose signs follow a long-memory latent
/// series and whose sizes are lognormal; prices are driven by volumes.
fn synthetic_intraday(cfg: &PipelineConfig, len: usize) -> Result<IntradayMarket> {
    let s = &cfg.synthetic;
    let tau = SamplingScale::minutes(cfg.highfreq.bin_minutes);
    let spec = powerlaw_mixture_spec(s.beta, 1.0, s.n_terms, s.mixture_lags.to_lag_window()?, tau)?;
    let seed = Seed(cfg.seed);
    let latent = generate(&spec, len, seed.derive(31))?;
    let mut rng = seed.derive(32).rng();
    let sizes = LogNormal::new(0.0, 1.0).expect("valid lognormal");
    let mut q = Vec::with_capacity(len);
    let mut eps = Vec::with_capacity(len);
    let mut trades = vec![0.0; cfg.highfreq.trades_per_bin];
    for z in latent.values() {
        let p_buy = 0.5 * (1.0 + z.tanh());
        for t in trades.iter_mut() {
            let sign = if rng.random::<f64>() < p_buy { 1.0 } else { -1.0 };
            *t = sign * sizes.sample(&mut rng);
        }
        let (v, e) = crate::propagator::bin_trades(&trades);
        q.push(v);
        eps.push(e);
    }
    let flows = SampledSeries::new(q, tau, SeriesKind::Flow, Unit::FractionOfAdv)?;
    let gamma = (1.0 - s.beta) / 2.0;
    let kernel = powerlaw_kernel(gamma, 2000.min(len / 10).max(1), tau)?.scaled(s.kernel_scale);
    let prices = simulate_market(&kernel, &flows)?;
    let signs = to_sign_series(&flows, Some(&eps))?.series;
    Ok(IntradayMarket {
        prices,
        flows,
        signs,
    })
}

fn intraday_market(cfg: &PipelineConfig, default_len: usize, bundle: &mut ReportBundle) -> Result<IntradayMarket> {
    match &cfg.highfreq.binned_csv {
        Some(path) => {
            let records = load_binned(path)?;
            let data = binned_series(&records, SamplingScale::minutes(cfg.highfreq.bin_minutes))?;
            let prices = strip_overnight(&data.prices)?;
            if prices.len() != data.flows.len() {
                return Err(Error::Alignment(format!(
                    "{} price bins after removing empty sessions, {} flow bins",
                    prices.len(),
                    data.flows.len()
                )));
            }
            let signs = to_sign_series(&data.flows, Some(&data.signs))?.series;
            bundle.note(format!("binned data: {} ({} bins)", path.display(), records.len()));
            Ok(IntradayMarket {
                prices,
                flows: data.flows,
                signs,
            })
        }
        None => {
            let len = cfg.synthetic.length.unwrap_or(default_len);
            bundle.note(format!("synthetic intraday market with {len} bins"));
            synthetic_intraday(cfg, len)
        }
    }
}

struct ScaleResult {
    r: usize,
    omega: AcfCurve,
    response: crate::series::ResponseCurve,
    kernel: ImpactKernel,
    warning: Option<String>,
}

fn calibrate_at_scale(m: &IntradayMarket, r: usize, max_lag: Option<usize>, ridge: f64) -> Result<ScaleResult> {
    let spec = CoarsenSpec::new(r)?;
    let q = coarsen_flow(&m.flows, spec)?;
    let p = coarsen_price(&m.prices, spec)?;
    let usable = q.len() - q.burn_in().max(p.burn_in());
    let l = max_lag.unwrap_or(50).min(usable.saturating_sub(2) / 5).max(1);
    let omega = estimate_acf(&q, l)?;
    let response = estimate_response(&p, &q, l)?;
    let cal = calibrate(&CalibrationProblem::from_data(&p, &q, l, ridge)?)?;
    Ok(ScaleResult {
        r,
        omega,
        response,
        kernel: cal.kernel,
        warning: cal.warning,
    })
}

/// Multi-scale propagator calibration: flow ACF, response and kernel at each
/// coarse-graining ratio, their rescaled collapse, and G_0 against tau.
pub fn multiscale_fig2(cfg: &PipelineConfig, bundle: &mut ReportBundle) -> Result<()> {
    let market = stage("market", intraday_market(cfg, 1_000_000, bundle))?;
    let c = &cfg.calibration;
    let results: Vec<ScaleResult> = c
        .scales
        .par_iter()
        .map(|&r| {
            calibrate_at_scale(&market, r, c.max_lag, c.ridge).map_err(|e| e.in_stage(format!("scale r={r}")))
        })
        .collect::<Result<_>>()?;
    let bin = cfg.highfreq.bin_minutes;
    for res in &results {
        let r = res.r;
        if let Some(w) = &res.warning {
            bundle.note(format!("r={r}: {w}"));
        }
        let units = format!("tau={} min", r as f64 * bin);
        let stderr = (0..res.omega.values.len())
            .map(|n| res.omega.bartlett_stderr(n).unwrap_or(0.0))
            .collect();
        bundle.curve(
            Curve::from_lag_curve(format!("omega-r{r}"), &res.omega)?
                .with_units(units.clone())
                .with_stderr(stderr)?,
        )?;
        bundle.curve(Curve::from_lag_curve(format!("response-r{r}"), &res.response)?.with_units(units.clone()))?;
        bundle.curve(Curve::from_lag_curve(format!("kernel-r{r}"), &res.kernel)?.with_units(units))?;
        bundle.scalar(format!("g0_r{r}"), res.kernel.values[0]);
    }

    if let Some(base) = results.iter().find(|s| s.r == 1) {
        let window = c.power_fit.to_lag_window()?;
        let beta = match fit_power_law(&base.omega, window).and_then(|f| beta_from_fit(&f)) {
            Ok(b) => b,
            Err(e) => {
                bundle.note(format!("flow ACF exponent fit failed ({e}); using configured beta"));
                cfg.synthetic.beta
            }
        };
        bundle.scalar("beta_fit", beta);
        if let Ok(f) = fit_power_law(&base.kernel, window) {
            bundle.scalar("gamma_fit", f.exponent().expect("power-law fit"));
        }
        for res in results.iter().filter(|s| s.r > 1) {
            let n = res.omega.values.len().min(base.omega.values.len());
            let om = rescale_acf(&base.omega, res.r, beta)?;
            let rr = rescale_response(&base.response, res.r, beta)?;
            bundle.scalar(
                format!("collapse_omega_max_dev_r{}", res.r),
                max_rel_dev(&res.omega.values[..n], &om.values[..n]),
            );
            let n = res.response.values.len().min(base.response.values.len());
            bundle.scalar(
                format!("collapse_response_max_dev_r{}", res.r),
                max_rel_dev(&res.response.values[..n], &rr.values[..n]),
            );
        }
    }

    let taus: Vec<f64> = results.iter().map(|s| s.r as f64 * bin).collect();
    let g0: Vec<f64> = results.iter().map(|s| s.kernel.values[0]).collect();
    if results.len() >= 2 && g0.iter().all(|g| *g > 0.0) {
        let lx: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
        let ly: Vec<f64> = g0.iter().map(|g| g.ln()).collect();
        bundle.scalar("g0_tau_log_slope", fit_line(&lx, &ly).slope);
    }
    bundle.curve(Curve::new("g0-vs-tau", taus, g0)?.with_x_label("tau_min"))?;
    Ok(())
}

/// Variance ratio of volume-based and sign-based predictions per scale.
pub fn phi_fig4(cfg: &PipelineConfig, bundle: &mut ReportBundle) -> Result<()> {
    let market = stage("market", intraday_market(cfg, 300_000, bundle))?;
    let c = &cfg.calibration;
    let reference = cfg.highfreq.reference_lag_days;
    let results: Vec<(usize, f64, f64)> = c
        .scales
        .par_iter()
        .map(|&r| {
            phi_at_scale(&market, r, c.max_lag, c.ridge, reference)
                .map(|(pq, pe)| (r, pq, pe))
                .map_err(|e| e.in_stage(format!("scale r={r}")))
        })
        .collect::<Result<_>>()?;
    let bin = cfg.highfreq.bin_minutes;
    let taus: Vec<f64> = results.iter().map(|(r, ..)| *r as f64 * bin).collect();
    for (r, pq, pe) in &results {
        bundle.scalar(format!("phi_q_r{r}"), *pq);
        bundle.scalar(format!("phi_eps_r{r}"), *pe);
    }
    bundle.scalar("reference_lag_minutes", reference * MINUTES_PER_DAY);
    bundle.curve(
        Curve::new("phi-q-vs-tau", taus.clone(), results.iter().map(|x| x.1).collect())?.with_x_label("tau_min"),
    )?;
    bundle.curve(Curve::new("phi-eps-vs-tau", taus, results.iter().map(|x| x.2).collect())?.with_x_label("tau_min"))?;
    Ok(())
}

fn phi_at_scale(
    m: &IntradayMarket,
    r: usize,
    max_lag: Option<usize>,
    ridge: f64,
    reference_days: f64,
) -> Result<(f64, f64)> {
    let spec = CoarsenSpec::new(r)?;
    let p = coarsen_price(&m.prices, spec)?;
    let mut out = [0.0; 2];
    for (i, flow) in [&m.flows, &m.signs].into_iter().enumerate() {
        let f = coarsen_flow(flow, spec)?;
        let l = max_lag.unwrap_or_else(|| default_max_lag(f.len())).max(1);
        let cal = calibrate(&CalibrationProblem::from_data(&p, &f, l, ridge)?)?;
        let predicted = predict_prices(&cal.kernel, &f)?;
        out[i] = variance_ratio(&predicted, &p, reference_days, TimeUnit::Day)?.phi_at_reference;
    }
    Ok((out[0], out[1]))
}

/// Short/long-scale consistency of Kyle-model markets with white and
/// power-law noise-trader flow, plus the kernel exponent relation.
pub fn appendix_b(cfg: &PipelineConfig, bundle: &mut ReportBundle) -> Result<()> {
    let len = cfg.synthetic.length.unwrap_or(3_000_000);
    let tau = SamplingScale::days(1.0);
    let k = &cfg.kyle;
    let b = &cfg.appendix_b;
    let s = &cfg.synthetic;
    let input_lags = cfg.kyle_input_lags();
    let alpha = (-1.0 / k.tau_f).exp();
    let sigma = AcfCurve::analytic(
        (0..=input_lags).map(|n| k.signal_variance * alpha.powi(n as i32)).collect(),
        tau,
    );
    for (i, case) in ["white", "powerlaw"].into_iter().enumerate() {
        let flow_spec = if case == "white" {
            AcfSpec::white(s.flow_variance, tau)?
        } else {
            stage(
                "mixture",
                powerlaw_mixture_spec(s.beta, s.flow_variance, s.n_terms, s.mixture_lags.to_lag_window()?, tau),
            )?
        };
        let inputs = KyleInputs::new(sigma.clone(), flow_spec.analytic_acf(input_lags))?;
        let eq = stage("solve combo", solve_combo(&inputs, k.max_lag, k.tol))?;
        let q = stage("generate flow", generate(&flow_spec, len, Seed(cfg.seed).derive(41 + i as u64)))?;
        let p = stage("simulate", simulate_market(&eq.kernel, &q))?;
        let sk_lags = (b.short_lag_budget + 1).min(eq.kernel.len());
        bundle.curve(Curve::from_lags(format!("kernel-sk-{case}"), 0, eq.kernel.values[..sk_lags].to_vec())?)?;

        for &r in &b.ratios {
            let l_long = (b.short_lag_budget / r).max(1);
            let l_short = r * (l_long + 1) - 1;
            let short = stage(
                "calibrate short",
                CalibrationProblem::from_data(&p, &q, l_short, cfg.calibration.ridge).and_then(|x| calibrate(&x)),
            )?;
            let spec = CoarsenSpec::new(r)?;
            let (qc, pc) = (coarsen_flow(&q, spec)?, coarsen_price(&p, spec)?);
            let long = stage(
                "calibrate long",
                CalibrationProblem::from_data(&pc, &qc, l_long, cfg.calibration.ridge).and_then(|x| calibrate(&x)),
            )?;
            let coarse = coarsen_kernel(&short.kernel, r)?;
            let rel = rms_diff(&long.kernel.values, &coarse.values) / coarse.values[0].abs();
            bundle.scalar(format!("kernel_rms_{case}_r{r}"), rel);
            bundle.curve(Curve::from_lag_curve(format!("kernel-long-{case}-r{r}"), &long.kernel)?)?;
            bundle.curve(Curve::from_lag_curve(format!("kernel-coarse-{case}-r{r}"), &coarse)?)?;
        }
        let omega = stage("flow acf", estimate_acf(&q, 100))?;
        bundle.curve(Curve::from_lag_curve(format!("omega-{case}"), &omega)?.with_x_label("lag_days"))?;
        let v = stage("variogram", estimate_variogram(&p, 100))?;
        bundle.curve(Curve::from_lag_curve(format!("variogram-{case}"), &v)?.with_x_label("lag_days"))?;
    }

    let (beta_fit, gamma_fit) = stage("exponent", exponent_relation(cfg))?;
    bundle.scalar("beta_fit", beta_fit);
    bundle.scalar("gamma_fit", gamma_fit);
    bundle.scalar("gamma_predicted", (1.0 - beta_fit) / 2.0);
    bundle.scalar("gamma_relation_error", (gamma_fit - (1.0 - beta_fit) / 2.0).abs());
    bundle.note(format!(
        "kernel exponent measured on a slow-signal market (signal time {} steps) so that the fit window lies well inside the diffusive regime",
        b.exponent_tau_f
    ));
    Ok(())
}

/// Fit `beta` on the simulated flow ACF and `gamma` on the calibrated kernel
/// of a market whose signal decays much slower than the fit window.
pub fn exponent_relation(cfg: &PipelineConfig) -> Result<(f64, f64)> {
    let b = &cfg.appendix_b;
    let s = &cfg.synthetic;
    let tau = SamplingScale::step();
    let tf = b.exponent_tau_f;
    let input_lags = (12.0 * tf).ceil() as usize;
    let alpha = (-1.0 / tf).exp();
    let lags = crate::series::LagWindow::new(1, tf.ceil() as usize)?;
    let flow_spec = powerlaw_mixture_spec(s.beta, s.flow_variance, s.n_terms, lags, tau)?;
    let sigma = AcfCurve::analytic((0..=input_lags).map(|n| alpha.powi(n as i32)).collect(), tau);
    let inputs = KyleInputs::new(sigma, flow_spec.analytic_acf(input_lags))?;
    let eq = solve_combo(&inputs, (0.8 * tf) as usize, 1e-2)?;
    let q = generate(&flow_spec, b.exponent_length, Seed(cfg.seed).derive(51))?;
    let p = simulate_market(&eq.kernel, &q)?;
    let l = b.exponent_max_lag;
    let cal = calibrate(&CalibrationProblem::from_data(&p, &q, l, cfg.calibration.ridge)?)?;
    let window = cfg.calibration.power_fit.to_lag_window()?;
    let omega = estimate_acf(&q, window.end.max(l))?;
    let beta = fit_power_law(&omega, window)?.exponent().expect("power-law fit");
    let gamma = fit_power_law(&cal.kernel, window)?.exponent().expect("power-law fit");
    Ok((beta, gamma))
}

/// Convenience wrapper used by the CLI: run and write the report.
pub fn run_and_emit(config: &PipelineConfig, out: &Path) -> Result<(ReportBundle, Vec<std::path::PathBuf>)> {
    let bundle = run_experiment(config)?;
    let files = crate::app::report::emit_report(&bundle, out).map_err(|e| e.in_stage("emit report"))?;
    Ok((bundle, files))
}
