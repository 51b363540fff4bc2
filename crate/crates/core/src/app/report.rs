//! Report bundles: scalar results and plot-ready curves, written as one JSON
//! summary plus one CSV per curve.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::app::io::{ensure_dir, CsvMeta, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::series::LagCurve;

/// One plot-ready curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub name: String,
    /// Meaning of the abscissa, e.g. `lag` or `tau_min`.
    pub x_label: String,
    pub units: String,
    #[serde(skip)]
    pub x: Vec<f64>,
    #[serde(skip)]
    pub values: Vec<f64>,
    #[serde(skip)]
    pub stderr: Option<Vec<f64>>,
}

impl Curve {
    pub fn new(name: impl Into<String>, x: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if x.len() != values.len() {
            return Err(Error::Alignment(format!(
                "curve {name}: {} abscissae for {} values",
                x.len(),
                values.len()
            )));
        }
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return Err(Error::InvalidInput(format!("curve name `{name}` is not file-safe")));
        }
        Ok(Self {
            name,
            x_label: "lag".into(),
            units: "dimensionless".into(),
            x,
            values,
            stderr: None,
        })
    }

    /// Curve over lags `first_lag, first_lag + 1, ...`.
    pub fn from_lags(name: impl Into<String>, first_lag: usize, values: Vec<f64>) -> Result<Self> {
        let x = (0..values.len()).map(|i| (first_lag + i) as f64).collect();
        Self::new(name, x, values)
    }

    pub fn from_lag_curve<C: LagCurve + ?Sized>(name: impl Into<String>, curve: &C) -> Result<Self> {
        Self::from_lags(name, curve.first_lag(), curve.lag_values().to_vec())
    }

    pub fn with_x_label(mut self, label: impl Into<String>) -> Self {
        self.x_label = label.into();
        self
    }

    pub fn with_units(mut self, units: impl Into<String>) -> Self {
        self.units = units.into();
        self
    }

    pub fn with_stderr(mut self, stderr: Vec<f64>) -> Result<Self> {
        if stderr.len() != self.values.len() {
            return Err(Error::Alignment(format!("curve {}: stderr length mismatch", self.name)));
        }
        self.stderr = Some(stderr);
        Ok(self)
    }

    fn check_finite(&self) -> Result<()> {
        let bad = |v: &[f64]| v.iter().position(|x| !x.is_finite());
        let found = bad(&self.x)
            .or_else(|| bad(&self.values))
            .or_else(|| self.stderr.as_deref().and_then(bad));
        match found {
            Some(i) => Err(Error::Degenerate(format!(
                "curve {} has a non-finite entry at row {i}",
                self.name
            ))),
            None => Ok(()),
        }
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBundle {
    pub experiment: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub scalars: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub curves: Vec<Curve>,
}

impl ReportBundle {
    pub fn new(experiment: impl Into<String>, config_hash: impl Into<String>, config: serde_json::Value) -> Self {
        Self {
            experiment: experiment.into(),
            config_hash: config_hash.into(),
            config,
            scalars: BTreeMap::new(),
            notes: Vec::new(),
            curves: Vec::new(),
        }
    }

    pub fn scalar(&mut self, key: impl Into<String>, value: f64) {
        self.scalars.insert(key.into(), value);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn curve(&mut self, curve: Curve) -> Result<()> {
        if self.curves.iter().any(|c| c.name == curve.name) {
            return Err(Error::InvalidInput(format!("duplicate curve name {}", curve.name)));
        }
        self.curves.push(curve);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.scalars.get(key).copied()
    }

    pub fn find_curve(&self, name: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| c.name == name)
    }

    /// Rejects NaN or infinite numbers anywhere in the bundle.
    pub fn validate(&self) -> Result<()> {
        for (k, v) in &self.scalars {
            if !v.is_finite() {
                return Err(Error::Degenerate(format!("scalar {k} is not finite ({v})")));
            }
        }
        self.curves.iter().try_for_each(Curve::check_finite)
    }

    pub fn summary_file_name(&self) -> String {
        format!("summary-{}.json", self.config_hash)
    }

    pub fn curve_file_name(&self, curve: &Curve) -> String {
        format!("{}-{}.csv", self.config_hash, curve.name)
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    schema_version: u32,
    experiment: &'a str,
    config_hash: &'a str,
    config: &'a serde_json::Value,
    scalars: &'a BTreeMap<String, f64>,
    notes: &'a [String],
    curves: BTreeMap<&'a str, CurveEntry<'a>>,
}

#[derive(Serialize)]
struct CurveEntry<'a> {
    file: String,
    x_label: &'a str,
    units: &'a str,
    rows: usize,
}

fn write_curve(path: &Path, bundle: &ReportBundle, curve: &Curve) -> Result<()> {
    let err = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(err)?);
    CsvMeta::new(&bundle.config_hash)
        .with("experiment", &bundle.experiment)
        .with("curve", &curve.name)
        .with("x", &curve.x_label)
        .with("units", &curve.units)
        .write_to(&mut w)
        .map_err(err)?;
    writeln!(w, "lag_or_tau,value,stderr").map_err(err)?;
    for i in 0..curve.values.len() {
        match &curve.stderr {
            Some(s) => writeln!(w, "{},{},{}", curve.x[i], curve.values[i], s[i]),
            None => writeln!(w, "{},{},", curve.x[i], curve.values[i]),
        }
        .map_err(err)?;
    }
    w.flush().map_err(err)
}

/// Write the summary and curve files into `dir`; returns the paths written.
pub fn emit_report(bundle: &ReportBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    bundle.validate()?;
    let dir = ensure_dir(dir)?;
    let mut written = Vec::with_capacity(bundle.curves.len() + 1);
    let mut entries = BTreeMap::new();
    for curve in &bundle.curves {
        let file = bundle.curve_file_name(curve);
        let path = dir.join(&file);
        write_curve(&path, bundle, curve)?;
        written.push(path);
        entries.insert(
            curve.name.as_str(),
            CurveEntry {
                file,
                x_label: &curve.x_label,
                units: &curve.units,
                rows: curve.values.len(),
            },
        );
    }
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        experiment: &bundle.experiment,
        config_hash: &bundle.config_hash,
        config: &bundle.config,
        scalars: &bundle.scalars,
        notes: &bundle.notes,
        curves: entries,
    };
    let path = dir.join(bundle.summary_file_name());
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    written.insert(0, path);
    Ok(written)
}
