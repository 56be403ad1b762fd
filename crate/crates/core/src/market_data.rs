//! Price/return ingestion and rolling-window views.

use std::fs::File;
use std::io::Read;
use std::ops::Deref;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the value column of an input file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Prices,
    Returns,
}

impl FromStr for ValueKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "prices" | "price" => Ok(ValueKind::Prices),
            "returns" | "return" => Ok(ValueKind::Returns),
            other => Err(Error::Domain(format!("unknown value kind `{other}`"))),
        }
    }
}

/// Percentage log-returns indexed by strictly increasing dates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    id: String,
    dates: Vec<NaiveDate>,
    returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(id: impl Into<String>, dates: Vec<NaiveDate>, returns: Vec<f64>) -> Result<Self> {
        if dates.len() != returns.len() {
            return Err(Error::Domain(format!(
                "{} dates but {} returns",
                dates.len(),
                returns.len()
            )));
        }
        if let Some(i) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::Domain(format!(
                "dates not strictly increasing at {} -> {}",
                dates[i],
                dates[i + 1]
            )));
        }
        if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
            return Err(Error::Domain(format!("non-finite return at {}", dates[i])));
        }
        Ok(Self {
            id: id.into(),
            dates,
            returns,
        })
    }

    /// Builds a series on consecutive calendar days starting at `start`.
    /// Used for simulated data, which has no natural calendar.
    pub fn with_daily_index(id: impl Into<String>, start: NaiveDate, returns: Vec<f64>) -> Result<Self> {
        let dates = start.iter_days().take(returns.len()).collect();
        Self::new(id, dates, returns)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn window(&self, start: usize, length: usize) -> Result<WindowView<'_>> {
        window(self, start, length)
    }
}

/// A borrowed, contiguous slice `[start, start + length)` of a series.
#[derive(Debug, Clone, Copy)]
pub struct WindowView<'a> {
    series: &'a ReturnSeries,
    start: usize,
    length: usize,
}

impl<'a> WindowView<'a> {
    pub fn series_id(&self) -> &'a str {
        &self.series.id
    }

    pub fn start_index(&self) -> usize {
        self.start
    }

    pub fn returns(&self) -> &'a [f64] {
        &self.series.returns[self.start..self.start + self.length]
    }

    pub fn dates(&self) -> &'a [NaiveDate] {
        &self.series.dates[self.start..self.start + self.length]
    }

    pub fn last_date(&self) -> NaiveDate {
        self.series.dates[self.start + self.length - 1]
    }
}

impl Deref for WindowView<'_> {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        self.returns()
    }
}

pub fn window(series: &ReturnSeries, start: usize, length: usize) -> Result<WindowView<'_>> {
    match start.checked_add(length) {
        Some(end) if length > 0 && end <= series.len() => Ok(WindowView { series, start, length }),
        _ => Err(Error::Bounds {
            start,
            length,
            len: series.len(),
        }),
    }
}

/// Outcome of reading a file: the series plus how many rows were skipped.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub series: ReturnSeries,
    pub dropped_rows: usize,
}

/// Percentage log-return between consecutive prices.
pub fn pct_log_return(prev: f64, next: f64) -> f64 {
    100.0 * (next / prev).ln()
}

pub fn load_series(path: impl AsRef<Path>, kind: ValueKind) -> Result<Loaded> {
    let path = path.as_ref();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".to_owned());
    let file = File::open(path)?;
    read_series(file, path, id, kind)
}

fn is_missing(field: &str) -> bool {
    matches!(
        field.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "nan" | "null" | "."
    )
}

/// Reads a two-column `date,value` CSV. `source` is only used in error messages.
pub fn read_series<R: Read>(reader: R, source: &Path, id: String, kind: ValueKind) -> Result<Loaded> {
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        msg,
    };

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let mut rows: Vec<(NaiveDate, f64)> = Vec::new();
    let mut dropped = 0usize;
    let mut first = true;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(parse_err(line, format!("expected 2 columns, found {}", rec.len())));
        }
        let date_field = &rec[0];
        let date = match NaiveDate::parse_from_str(date_field, "%Y-%m-%d") {
            Ok(d) => d,
            // optional header row
            Err(_) if first && date_field.parse::<f64>().is_err() && rec[1].parse::<f64>().is_err() => {
                first = false;
                continue;
            }
            Err(e) => return Err(parse_err(line, format!("bad ISO-8601 date `{date_field}`: {e}"))),
        };
        first = false;
        if is_missing(&rec[1]) {
            dropped += 1;
            continue;
        }
        let value: f64 = rec[1]
            .parse()
            .map_err(|_| parse_err(line, format!("bad number `{}`", &rec[1])))?;
        if !value.is_finite() {
            return Err(parse_err(line, format!("non-finite value `{}`", &rec[1])));
        }
        if kind == ValueKind::Prices && value <= 0.0 {
            return Err(Error::Domain(format!(
                "{}:{line}: non-positive price {value}",
                source.display()
            )));
        }
        if let Some(&(prev, _)) = rows.last() {
            if date <= prev {
                return Err(parse_err(line, format!("date {date} not after {prev}")));
            }
        }
        rows.push((date, value));
    }

    if dropped > 0 {
        log::info!("{}: dropped {dropped} rows with missing values", source.display());
    }
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{}: {} usable rows, need at least 2",
            source.display(),
            rows.len()
        )));
    }

    let (dates, returns) = match kind {
        ValueKind::Returns => rows.into_iter().unzip(),
        ValueKind::Prices => rows
            .windows(2)
            .map(|w| (w[1].0, pct_log_return(w[0].1, w[1].1)))
            .unzip(),
    };
    Ok(Loaded {
        series: ReturnSeries::new(id, dates, returns)?,
        dropped_rows: dropped,
    })
}

/// Writes `date,value` rows (no header), using the shortest round-trip float format.
pub fn write_series<W: std::io::Write>(series: &ReturnSeries, mut out: W) -> Result<()> {
    writeln!(out, "date,value")?;
    for (d, r) in series.dates.iter().zip(&series.returns) {
        writeln!(out, "{},{}", d.format("%Y-%m-%d"), r)?;
    }
    Ok(())
}
