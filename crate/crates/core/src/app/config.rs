//! Pipeline configuration: TOML file, validation and the config hash.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::app::io::MonthlyColumns;
use crate::error::{Error, Result};
use crate::series::LagWindow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Universality,
    LowfreqTable1,
    MultiscaleFig2,
    PhiFig4,
    #[serde(rename = "appendixB", alias = "appendix_b")]
    AppendixB,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Universality,
        Experiment::LowfreqTable1,
        Experiment::MultiscaleFig2,
        Experiment::PhiFig4,
        Experiment::AppendixB,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Universality => "universality",
            Experiment::LowfreqTable1 => "lowfreq_table1",
            Experiment::MultiscaleFig2 => "multiscale_fig2",
            Experiment::PhiFig4 => "phi_fig4",
            Experiment::AppendixB => "appendixB",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s) || (s == "appendix_b" && *e == Experiment::AppendixB))
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.as_str()).collect();
                Error::Config(format!("unknown experiment `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// Shape of a synthetic flow ACF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowModel {
    White,
    Ar1,
    Powerlaw,
}

/// `[start, end]` lag window as written in the config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window(pub usize, pub usize);

impl Window {
    pub fn to_lag_window(self) -> Result<LagWindow> {
        LagWindow::new(self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Number of steps; each experiment picks its own size when unset.
    pub length: Option<usize>,
    pub flow: FlowModel,
    pub flow_variance: f64,
    /// AR(1) coefficient of the flow when `flow = "ar1"`.
    pub alpha: f64,
    pub beta: f64,
    pub n_terms: usize,
    /// Lag range the power-law mixture is fitted over.
    pub mixture_lags: Window,
    /// Exponential kernel `G_n = kernel_scale * kernel_decay^n` used by `generate`.
    pub kernel_scale: f64,
    pub kernel_decay: f64,
    pub kernel_len: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            length: None,
            flow: FlowModel::White,
            flow_variance: 1.0,
            alpha: 0.9,
            beta: 0.7,
            n_terms: 8,
            mixture_lags: Window(1, 1500),
            kernel_scale: 1.0,
            kernel_decay: 0.8,
            kernel_len: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub ridge: f64,
    /// Kernel truncation; `min(500, len / 20)` when unset.
    pub max_lag: Option<usize>,
    pub scales: Vec<usize>,
    pub power_fit: Window,
    pub exp_fit: Window,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            ridge: crate::propagator::DEFAULT_RIDGE,
            max_lag: None,
            scales: vec![1, 5, 30, 65, 130, 250],
            power_fit: Window(1, 30),
            exp_fit: Window(1, 36),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KyleConfig {
    /// Mean-reversion time of the informed trader's signal, in steps.
    pub tau_f: f64,
    pub signal_variance: f64,
    /// Number of tabulated input lags; about twelve signal times when unset.
    pub input_lags: Option<usize>,
    pub max_lag: usize,
    pub tol: f64,
}

impl Default for KyleConfig {
    fn default() -> Self {
        Self {
            tau_f: 50.0,
            signal_variance: 1.0,
            input_lags: None,
            max_lag: 1000,
            tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowFreqConfig {
    pub monthly_csv: Option<PathBuf>,
    pub columns: MonthlyColumns,
    pub trend_window_years: f64,
    /// Real-time length of one step of the Kyle model fitted to the
    /// fundamental ACF.
    pub kyle_step_years: f64,
    pub max_lag_months: usize,
}

impl Default for LowFreqConfig {
    fn default() -> Self {
        Self {
            monthly_csv: None,
            columns: MonthlyColumns::default(),
            trend_window_years: 20.0,
            kyle_step_years: 1.0,
            max_lag_months: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HighFreqConfig {
    pub binned_csv: Option<PathBuf>,
    pub bin_minutes: f64,
    pub reference_lag_days: f64,
    /// Trades per bin in the synthetic sign/volume model.
    pub trades_per_bin: usize,
}

impl Default for HighFreqConfig {
    fn default() -> Self {
        Self {
            binned_csv: None,
            bin_minutes: 1.0,
            reference_lag_days: 4.0,
            trades_per_bin: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppendixBConfig {
    /// Coarse-graining ratios for the short/long consistency check.
    pub ratios: Vec<usize>,
    /// Short-scale kernel lags available to the long-scale window.
    pub short_lag_budget: usize,
    /// Slow-signal branch for the kernel exponent, in steps.
    pub exponent_tau_f: f64,
    pub exponent_length: usize,
    pub exponent_max_lag: usize,
}

impl Default for AppendixBConfig {
    fn default() -> Self {
        Self {
            ratios: vec![5, 30],
            short_lag_budget: 300,
            exponent_tau_f: 5000.0,
            exponent_length: 1_000_000,
            exponent_max_lag: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub experiment: Option<Experiment>,
    pub seed: u64,
    pub out: PathBuf,
    pub synthetic: SyntheticConfig,
    pub calibration: CalibrationConfig,
    pub kyle: KyleConfig,
    pub lowfreq: LowFreqConfig,
    pub highfreq: HighFreqConfig,
    #[serde(rename = "appendixB", alias = "appendix_b")]
    pub appendix_b: AppendixBConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 42,
            out: PathBuf::from("out"),
            synthetic: SyntheticConfig::default(),
            calibration: CalibrationConfig::default(),
            kyle: KyleConfig::default(),
            lowfreq: LowFreqConfig::default(),
            highfreq: HighFreqConfig::default(),
            appendix_b: AppendixBConfig::default(),
        }
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

fn positive(v: f64, name: &str) -> Result<()> {
    check(v > 0.0 && v.is_finite(), || format!("{name} must be positive, got {v}"))
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.synthetic;
        if let Some(len) = s.length {
            check(len >= 100, || format!("synthetic.length must be >= 100, got {len}"))?;
        }
        positive(s.flow_variance, "synthetic.flow_variance")?;
        check(s.alpha > 0.0 && s.alpha < 1.0, || {
            format!("synthetic.alpha must lie in (0, 1), got {}", s.alpha)
        })?;
        check(s.beta > 0.0 && s.beta < 1.0, || {
            format!("synthetic.beta must lie in (0, 1), got {}", s.beta)
        })?;
        check(s.n_terms >= 1, || "synthetic.n_terms must be >= 1".into())?;
        s.mixture_lags.to_lag_window()?;
        positive(s.kernel_scale, "synthetic.kernel_scale")?;
        check(s.kernel_decay > 0.0 && s.kernel_decay < 1.0, || {
            format!("synthetic.kernel_decay must lie in (0, 1), got {}", s.kernel_decay)
        })?;

        let c = &self.calibration;
        check(c.ridge >= 0.0 && c.ridge.is_finite(), || {
            format!("calibration.ridge must be >= 0, got {}", c.ridge)
        })?;
        if let Some(m) = c.max_lag {
            check(m >= 1, || "calibration.max_lag must be >= 1".into())?;
        }
        check(!c.scales.is_empty(), || "calibration.scales is empty".into())?;
        check(c.scales.iter().all(|r| *r >= 1), || "calibration.scales entries must be >= 1".into())?;
        c.power_fit.to_lag_window()?;
        c.exp_fit.to_lag_window()?;

        let k = &self.kyle;
        positive(k.tau_f, "kyle.tau_f")?;
        positive(k.signal_variance, "kyle.signal_variance")?;
        positive(k.tol, "kyle.tol")?;
        check(k.max_lag >= 1, || "kyle.max_lag must be >= 1".into())?;

        let l = &self.lowfreq;
        positive(l.trend_window_years, "lowfreq.trend_window_years")?;
        positive(l.kyle_step_years, "lowfreq.kyle_step_years")?;
        check(l.max_lag_months >= 2, || "lowfreq.max_lag_months must be >= 2".into())?;

        let h = &self.highfreq;
        positive(h.bin_minutes, "highfreq.bin_minutes")?;
        positive(h.reference_lag_days, "highfreq.reference_lag_days")?;
        check(h.trades_per_bin >= 1, || "highfreq.trades_per_bin must be >= 1".into())?;

        let b = &self.appendix_b;
        check(!b.ratios.is_empty() && b.ratios.iter().all(|r| *r >= 2), || {
            "appendixB.ratios entries must be >= 2".into()
        })?;
        check(b.short_lag_budget >= 2 * b.ratios.iter().max().copied().unwrap_or(2), || {
            "appendixB.short_lag_budget must cover two blocks of the largest ratio".into()
        })?;
        positive(b.exponent_tau_f, "appendixB.exponent_tau_f")?;
        check(b.exponent_length >= 100, || "appendixB.exponent_length must be >= 100".into())?;
        check(b.exponent_max_lag >= 2, || "appendixB.exponent_max_lag must be >= 2".into())?;
        Ok(())
    }

    /// Canonical JSON echo of the configuration.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    ///
    /// The output directory is excluded so that the same run written to two
    /// places produces identical file names.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let text = serde_json::to_string(&c.to_json()).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    /// Signal input lags for the Kyle solver.
    pub fn kyle_input_lags(&self) -> usize {
        self.kyle
            .input_lags
            .unwrap_or_else(|| ((12.0 * self.kyle.tau_f).ceil() as usize).max(3000))
    }
}
