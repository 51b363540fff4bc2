//! Single-step operations behind the CLI subcommands other than `experiment`.

use std::path::{Path, PathBuf};

use crate::app::config::{FlowModel, PipelineConfig};
use crate::app::io::{
    binned_series, ensure_dir, load_binned, read_series, write_series, CsvMeta,
};
use crate::app::report::{Curve, ReportBundle};
use crate::error::{Error, Result};
use crate::kyle::{solve_combo, solve_markovian, KyleInputs};
use crate::propagator::{calibrate, default_max_lag, CalibrationProblem};
use crate::scale::{causal_trend, coarsen_flow, coarsen_price, detrend, strip_overnight, CoarsenSpec};
use crate::series::{AcfCurve, ImpactKernel, SampledSeries, SamplingScale, SeriesKind, TimeUnit};
use crate::synth::{generate, powerlaw_mixture_spec, simulate_market, AcfSpec, Seed};

fn meta(cfg: &PipelineConfig, op: &str) -> CsvMeta {
    CsvMeta::new(cfg.hash()).with("operation", op).with("seed", cfg.seed)
}

/// Flow ACF model from the `[synthetic]` section.
pub fn flow_spec(cfg: &PipelineConfig, tau: SamplingScale) -> Result<AcfSpec> {
    let s = &cfg.synthetic;
    match s.flow {
        FlowModel::White => AcfSpec::white(s.flow_variance, tau),
        FlowModel::Ar1 => AcfSpec::ar1(s.flow_variance, s.alpha, tau),
        FlowModel::Powerlaw => powerlaw_mixture_spec(
            s.beta,
            s.flow_variance,
            s.n_terms,
            s.mixture_lags.to_lag_window()?,
            tau,
        ),
    }
}

/// Simulate a flow series and the propagator-model prices it drives.
///
/// Writes `<hash>-flow.csv` and `<hash>-price.csv` into `out`.
pub fn generate_market(cfg: &PipelineConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let s = &cfg.synthetic;
    let len = s.length.unwrap_or(100_000);
    let tau = SamplingScale::step();
    let flow = generate(&flow_spec(cfg, tau)?, len, Seed(cfg.seed).derive(1))?;
    let kernel = ImpactKernel::exponential(s.kernel_scale, s.kernel_decay, s.kernel_len.saturating_sub(1), tau)?;
    let prices = simulate_market(&kernel, &flow)?;
    let dir = ensure_dir(out)?;
    let hash = cfg.hash();
    let flow_path = dir.join(format!("{hash}-flow.csv"));
    let price_path = dir.join(format!("{hash}-price.csv"));
    write_series(&flow_path, &flow, &meta(cfg, "generate"))?;
    write_series(&price_path, &prices, &meta(cfg, "generate"))?;
    Ok(vec![flow_path, price_path])
}

/// Price and flow inputs for a calibration: two series files, or the
/// configured binned CSV with overnight gaps removed.
pub fn load_market(
    cfg: &PipelineConfig,
    prices: Option<&Path>,
    flows: Option<&Path>,
) -> Result<(SampledSeries, SampledSeries)> {
    match (prices, flows, &cfg.highfreq.binned_csv) {
        (Some(p), Some(q), _) => {
            let p = read_series(p)?;
            let q = read_series(q)?;
            p.ensure_kind(&[SeriesKind::Price], "price input")?;
            q.ensure_kind(&[SeriesKind::Flow, SeriesKind::Sign], "flow input")?;
            Ok((p, q))
        }
        (None, None, Some(path)) => {
            let records = load_binned(path)?;
            let data = binned_series(&records, SamplingScale::minutes(cfg.highfreq.bin_minutes))?;
            Ok((strip_overnight(&data.prices)?, data.flows))
        }
        _ => Err(Error::Config(
            "calibration needs both --prices and --flows, or highfreq.binned_csv".into(),
        )),
    }
}

/// Propagator calibration at the native scale and every configured ratio.
pub fn calibrate_propagator(
    cfg: &PipelineConfig,
    prices: &SampledSeries,
    flows: &SampledSeries,
) -> Result<ReportBundle> {
    cfg.validate()?;
    let mut bundle = ReportBundle::new("calibrate-propagator", cfg.hash(), cfg.to_json());
    for &r in &cfg.calibration.scales {
        let spec = CoarsenSpec::new(r)?;
        let (p, q) = if r == 1 {
            (prices.clone(), flows.clone())
        } else {
            (coarsen_price(prices, spec)?, coarsen_flow(flows, spec)?)
        };
        let usable = q.len() - q.burn_in().max(p.burn_in());
        let l = cfg
            .calibration
            .max_lag
            .unwrap_or_else(|| default_max_lag(usable))
            .max(1);
        let problem = CalibrationProblem::from_data(&p, &q, l, cfg.calibration.ridge)
            .map_err(|e| e.in_stage(format!("estimate r={r}")))?;
        let cal = calibrate(&problem).map_err(|e| e.in_stage(format!("calibrate r={r}")))?;
        if let Some(w) = &cal.warning {
            bundle.note(format!("r={r}: {w}"));
        }
        bundle.scalar(format!("g0_r{r}"), cal.kernel.values[0]);
        bundle.scalar(format!("relative_residual_r{r}"), cal.relative_residual);
        let units = format!("tau={}", p.tau());
        bundle.curve(Curve::from_lags(format!("kernel-r{r}"), 0, cal.kernel.values)?.with_units(units.clone()))?;
        bundle.curve(Curve::from_lags(format!("s-r{r}"), 0, problem.s.values)?.with_units(units.clone()))?;
        bundle.curve(Curve::from_lags(format!("omega-r{r}"), 0, problem.omega.values)?.with_units(units))?;
    }
    Ok(bundle)
}

/// Kyle equilibrium for an AR(1) signal with `kyle.tau_f` steps of memory
/// and the configured noise-trader flow. The Markovian closed form is
/// reported alongside when the flow is white.
pub fn calibrate_kyle(cfg: &PipelineConfig) -> Result<ReportBundle> {
    cfg.validate()?;
    let k = &cfg.kyle;
    let tau = SamplingScale::step();
    let lags = cfg.kyle_input_lags();
    let alpha = (-1.0 / k.tau_f).exp();
    let mut bundle = ReportBundle::new("calibrate-kyle", cfg.hash(), cfg.to_json());
    let sigma = AcfCurve::analytic(
        (0..=lags).map(|n| k.signal_variance * alpha.powi(n as i32)).collect(),
        tau,
    );
    let omega = flow_spec(cfg, tau)?.analytic_acf(lags);
    let max_lag = k.max_lag.min(lags);
    let eq = solve_combo(&KyleInputs::new(sigma, omega)?, max_lag, k.tol).map_err(|e| e.in_stage("solve combo"))?;
    bundle.scalar("alpha", alpha);
    bundle.scalar("verification_residual", eq.verification_residual);
    bundle.scalar("taper_lags", eq.taper_lags as f64);
    bundle.curve(Curve::from_lags("kernel", 0, eq.kernel.values.clone())?)?;
    bundle.curve(Curve::from_lags("price-acf-shape", 0, eq.price_acf.values.clone())?)?;
    if cfg.synthetic.flow == FlowModel::White {
        let m = solve_markovian(alpha, k.signal_variance, cfg.synthetic.flow_variance, max_lag, tau)?;
        let dev = eq
            .kernel
            .values
            .iter()
            .zip(&m.kernel.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        bundle.scalar("markovian_max_abs_dev", dev);
        bundle.scalar("kernel_scale", m.kernel_scale.expect("closed form has a scale"));
        bundle.scalar("price_variance_ratio", m.price_variance_ratio.expect("closed form ratio"));
    } else {
        bundle.note("non-white flow: absolute kernel scale is not determined");
    }
    Ok(bundle)
}

/// Coarse-grain one series file by ratio `r`.
pub fn coarsen_file(cfg: &PipelineConfig, input: &Path, r: usize, out: &Path) -> Result<PathBuf> {
    let series = read_series(input)?;
    let spec = CoarsenSpec::new(r)?;
    let coarse = match series.kind() {
        SeriesKind::Price => coarsen_price(&series, spec)?,
        SeriesKind::Flow | SeriesKind::Sign => coarsen_flow(&series, spec)?,
        other => {
            return Err(Error::InvalidInput(format!(
                "cannot coarsen a {} series",
                other.as_str()
            )))
        }
    };
    let dir = ensure_dir(out)?;
    let path = dir.join(format!("{}-{}-r{r}.csv", cfg.hash(), coarse.kind().as_str()));
    write_series(&path, &coarse, &meta(cfg, "coarsen").with("ratio", r))?;
    Ok(path)
}

/// Causal trend and detrended series of one file; the window is
/// `lowfreq.trend_window_years` unless overridden.
pub fn detrend_file(
    cfg: &PipelineConfig,
    input: &Path,
    window: Option<(f64, TimeUnit)>,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let series = read_series(input)?;
    let (w, unit) = window.unwrap_or((cfg.lowfreq.trend_window_years, TimeUnit::Year));
    let trend = causal_trend(&series, w, unit)?;
    let detrended = detrend(&series, &trend)?;
    let dir = ensure_dir(out)?;
    let hash = cfg.hash();
    let m = meta(cfg, "detrend").with("window", format!("{w} {}", unit.as_str()));
    let trend_path = dir.join(format!("{hash}-trend.csv"));
    let out_path = dir.join(format!("{hash}-detrended.csv"));
    write_series(&trend_path, &trend, &m)?;
    write_series(&out_path, &detrended, &m)?;
    Ok(vec![trend_path, out_path])
}
