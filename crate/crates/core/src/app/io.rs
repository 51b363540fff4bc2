//! CSV ingestion for monthly index data and binned intraday data, and the
//! series file format used by the CLI.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scale::{Session, SessionedSeries};
use crate::series::{SampledSeries, SamplingScale, SeriesKind, TimeUnit, Unit};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    fn index(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    /// Accepts `YYYY-MM`, `YYYY-MM-DD` and the decimal `YYYY.MM` form, where
    /// a single digit after the point means tenths (`1871.1` is October).
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        let (year, month) = if let Some((y, rest)) = s.split_once('-') {
            let m = rest.split('-').next()?;
            (y.parse().ok()?, m.parse().ok()?)
        } else if let Some((y, frac)) = s.split_once('.') {
            let m: u32 = match frac.len() {
                1 => frac.parse::<u32>().ok()? * 10,
                2 => frac.parse().ok()?,
                _ => return None,
            };
            (y.parse().ok()?, m)
        } else {
            return None;
        };
        (1..=12).contains(&month).then_some(Self { year, month })
    }
}

impl std::fmt::Display for YearMonth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonthlyRecord {
    pub date: YearMonth,
    pub price: f64,
    pub dividend: f64,
}

/// Column names for [`load_monthly`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonthlyColumns {
    pub date: String,
    pub price: String,
    pub dividend: String,
}

impl Default for MonthlyColumns {
    fn default() -> Self {
        Self {
            date: "Date".into(),
            price: "SP500".into(),
            dividend: "Dividend".into(),
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| parse_err(path, 1, format!("missing column `{name}`")))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse_err(path, line, format!("{other:?}")),
    }
}

fn positive(field: Option<&str>, what: &str, path: &Path, line: usize) -> Result<f64> {
    let raw = field.map(str::trim).unwrap_or("");
    if raw.is_empty() {
        return Err(parse_err(path, line, format!("missing {what}")));
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| parse_err(path, line, format!("{what} `{raw}` is not a number")))?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(parse_err(path, line, format!("{what} {v} must be positive")));
    }
    Ok(v)
}

/// Monthly prices and dividends with strictly increasing, gap-free dates.
pub fn load_monthly(path: &Path, columns: &MonthlyColumns) -> Result<Vec<MonthlyRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let (di, pi, mi) = (
        column(&headers, &columns.date, path)?,
        column(&headers, &columns.price, path)?,
        column(&headers, &columns.dividend, path)?,
    );
    let mut out: Vec<MonthlyRecord> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let raw_date = rec.get(di).unwrap_or("");
        let date = YearMonth::parse(raw_date)
            .ok_or_else(|| parse_err(path, line, format!("bad date `{raw_date}`")))?;
        let price = positive(rec.get(pi), "price", path, line)?;
        let dividend = positive(rec.get(mi), "dividend", path, line)?;
        if let Some(prev) = out.last() {
            let step = date.index() - prev.date.index();
            if step <= 0 {
                return Err(Error::Ordering {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("date {date} does not follow {}", prev.date),
                });
            }
            if step > 1 {
                return Err(Error::Ordering {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("gap of {step} months after {}", prev.date),
                });
            }
        }
        out.push(MonthlyRecord {
            date,
            price,
            dividend,
        });
    }
    if out.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    Ok(out)
}

/// Split monthly records into a price series and a dividend series.
pub fn monthly_series(records: &[MonthlyRecord]) -> Result<(SampledSeries, SampledSeries)> {
    let tau = SamplingScale::months(1.0);
    let prices = SampledSeries::new(
        records.iter().map(|r| r.price).collect(),
        tau,
        SeriesKind::Price,
        Unit::Dimensionless,
    )?;
    let dividends = SampledSeries::new(
        records.iter().map(|r| r.dividend).collect(),
        tau,
        SeriesKind::Dividend,
        Unit::Dimensionless,
    )?;
    Ok((prices, dividends))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedRecord {
    pub session: String,
    pub bin: u64,
    pub price: f64,
    pub signed_volume: f64,
    pub sign_sum: i64,
}

/// Binned records `session,bin,price,signed_volume,sign_sum`.
///
/// Bins must increase by one within a session; a repeated `(session, bin)`
/// pair is rejected. Opposite signs of volume and sign sum only warn.
pub fn load_binned(path: &Path) -> Result<Vec<BinnedRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let idx: Vec<usize> = ["session", "bin", "price", "signed_volume", "sign_sum"]
        .iter()
        .map(|c| column(&headers, c, path))
        .collect::<Result<_>>()?;
    let mut seen = HashSet::new();
    let mut out: Vec<BinnedRecord> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let get = |i: usize| rec.get(idx[i]).unwrap_or("").trim();
        let session = get(0).to_string();
        if session.is_empty() {
            return Err(parse_err(path, line, "missing session"));
        }
        let bin: u64 = get(1)
            .parse()
            .map_err(|_| parse_err(path, line, format!("bin `{}` is not an integer", get(1))))?;
        let price = positive(Some(get(2)), "price", path, line)?;
        let signed_volume: f64 = get(3).parse().map_err(|_| {
            parse_err(path, line, format!("signed_volume `{}` is not a number", get(3)))
        })?;
        if !signed_volume.is_finite() {
            return Err(parse_err(path, line, "signed_volume is not finite"));
        }
        let sign_sum: i64 = get(4).parse().map_err(|_| {
            parse_err(path, line, format!("sign_sum `{}` is not an integer", get(4)))
        })?;
        if !seen.insert((session.clone(), bin)) {
            return Err(Error::DuplicateKey {
                path: path.to_path_buf(),
                line,
                msg: format!("session {session} bin {bin} appears twice"),
            });
        }
        if let Some(prev) = out.last() {
            if prev.session == session && bin != prev.bin + 1 {
                return Err(Error::Ordering {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("session {session}: bin {bin} does not follow {}", prev.bin),
                });
            }
        }
        if signed_volume != 0.0 && sign_sum != 0 && (signed_volume > 0.0) != (sign_sum > 0) {
            log::warn!("{}:{line}: signed volume and sign sum disagree in sign", path.display());
        }
        out.push(BinnedRecord {
            session,
            bin,
            price,
            signed_volume,
            sign_sum,
        });
    }
    if out.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    Ok(out)
}

pub fn write_binned(path: &Path, records: &[BinnedRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in records {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Binned data split into per-session prices, flows and sign sums.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedData {
    pub prices: SessionedSeries,
    pub flows: SampledSeries,
    pub signs: Vec<i64>,
}

pub fn binned_series(records: &[BinnedRecord], bin_tau: SamplingScale) -> Result<BinnedData> {
    let mut sessions: Vec<Session> = Vec::new();
    for r in records {
        match sessions.last_mut() {
            Some(s) if s.label == r.session => s.values.push(r.price),
            _ => sessions.push(Session {
                label: r.session.clone(),
                values: vec![r.price],
            }),
        }
    }
    let flows = SampledSeries::new(
        records.iter().map(|r| r.signed_volume).collect(),
        bin_tau,
        SeriesKind::Flow,
        Unit::FractionOfAdv,
    )?;
    Ok(BinnedData {
        prices: SessionedSeries {
            tau: bin_tau,
            unit: Unit::BasisPoints,
            sessions,
        },
        flows,
        signs: records.iter().map(|r| r.sign_sum).collect(),
    })
}

/// Metadata lines written ahead of every CSV the tool emits.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvMeta {
    pub config_hash: String,
    pub entries: Vec<(String, String)>,
}

impl CsvMeta {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Self {
            config_hash: config_hash.into(),
            entries: Vec::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub(crate) fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# schema_version: {SCHEMA_VERSION}")?;
        writeln!(w, "# config_hash: {}", self.config_hash)?;
        for (k, v) in &self.entries {
            writeln!(w, "# {k}: {v}")?;
        }
        Ok(())
    }
}

fn unit_from_str(s: &str) -> Option<Unit> {
    [Unit::BasisPoints, Unit::FractionOfAdv, Unit::Dimensionless]
        .into_iter()
        .find(|u| u.as_str() == s)
}

fn kind_from_str(s: &str) -> Option<SeriesKind> {
    [
        SeriesKind::Price,
        SeriesKind::Flow,
        SeriesKind::Sign,
        SeriesKind::Dividend,
        SeriesKind::Trend,
    ]
    .into_iter()
    .find(|k| k.as_str() == s)
}

fn time_unit_from_str(s: &str) -> Option<TimeUnit> {
    [
        TimeUnit::Step,
        TimeUnit::Microsecond,
        TimeUnit::Second,
        TimeUnit::Minute,
        TimeUnit::Day,
        TimeUnit::Month,
        TimeUnit::Year,
    ]
    .into_iter()
    .find(|u| u.as_str() == s)
}

/// Write a series as `index,value` with its metadata in `#` lines.
pub fn write_series(path: &Path, series: &SampledSeries, meta: &CsvMeta) -> Result<()> {
    if let Some(i) = series.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::Degenerate(format!("non-finite value at index {i}")));
    }
    let err = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(err)?);
    meta.write_to(&mut w).map_err(err)?;
    let tau = series.tau();
    writeln!(w, "# kind: {}", series.kind().as_str()).map_err(err)?;
    writeln!(w, "# units: {}", series.unit().as_str()).map_err(err)?;
    writeln!(w, "# tau: {} {}", tau.value, tau.unit.as_str()).map_err(err)?;
    writeln!(w, "# burn_in: {}", series.burn_in()).map_err(err)?;
    writeln!(w, "index,value").map_err(err)?;
    for (i, v) in series.values().iter().enumerate() {
        writeln!(w, "{i},{v}").map_err(err)?;
    }
    w.flush().map_err(err)
}

/// Read a file produced by [`write_series`].
pub fn read_series(path: &Path) -> Result<SampledSeries> {
    let reader = BufReader::new(open(path)?);
    let mut kind = None;
    let mut unit = Unit::Dimensionless;
    let mut tau = None;
    let mut burn_in = 0;
    let mut values = Vec::new();
    let mut header_seen = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if let Some(meta) = line.strip_prefix('#') {
            let Some((k, v)) = meta.split_once(':') else { continue };
            let v = v.trim();
            match k.trim() {
                "kind" => {
                    kind = Some(kind_from_str(v).ok_or_else(|| {
                        parse_err(path, lineno, format!("unknown kind `{v}`"))
                    })?)
                }
                "units" => {
                    unit = unit_from_str(v)
                        .ok_or_else(|| parse_err(path, lineno, format!("unknown unit `{v}`")))?
                }
                "tau" => {
                    let (val, u) = v
                        .split_once(' ')
                        .ok_or_else(|| parse_err(path, lineno, "tau needs `<value> <unit>`"))?;
                    let val: f64 = val
                        .parse()
                        .map_err(|_| parse_err(path, lineno, format!("bad tau `{val}`")))?;
                    let u = time_unit_from_str(u)
                        .ok_or_else(|| parse_err(path, lineno, format!("unknown time unit `{u}`")))?;
                    tau = Some(SamplingScale::new(val, u)?);
                }
                "burn_in" => {
                    burn_in = v
                        .parse()
                        .map_err(|_| parse_err(path, lineno, format!("bad burn_in `{v}`")))?
                }
                _ => {}
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            header_seen = true;
            if line.trim() != "index,value" {
                return Err(parse_err(path, lineno, "expected header `index,value`"));
            }
            continue;
        }
        let (_, v) = line
            .split_once(',')
            .ok_or_else(|| parse_err(path, lineno, "expected `index,value`"))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad value `{v}`")))?;
        values.push(v);
    }
    let kind = kind.ok_or_else(|| parse_err(path, 1, "missing `# kind:` line"))?;
    let tau = tau.ok_or_else(|| parse_err(path, 1, "missing `# tau:` line"))?;
    if values.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    Ok(SampledSeries::new(values, tau, kind, unit)?.with_burn_in(burn_in))
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.to_path_buf())
}
