//! Weighted continuous ranked probability score on a fixed grid.
//!
//! `wcrps = (y_u - y_l) / (K - 1) * sum_k w(y_k) (F(y_k) - 1{y < y_k})^2`
//! with `y_k = y_l + k (y_u - y_l) / K`, `k = 1..K`. The prefactor and the
//! node spacing differ by a factor `K / (K - 1)`; both are kept as written
//! so scores are comparable with published tables.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dist::{norm_cdf, norm_pdf, FRAC_1_SQRT_2PI};
use crate::error::{Error, Result};
use crate::forecast::PredictiveDensity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Uniform,
    Center,
    Tails,
    #[serde(rename = "tail_r")]
    TailRight,
    #[serde(rename = "tail_l")]
    TailLeft,
}

impl WeightKind {
    pub const ALL: [WeightKind; 5] = [
        WeightKind::Uniform,
        WeightKind::Center,
        WeightKind::Tails,
        WeightKind::TailRight,
        WeightKind::TailLeft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WeightKind::Uniform => "uniform",
            WeightKind::Center => "center",
            WeightKind::Tails => "tails",
            WeightKind::TailRight => "tail_r",
            WeightKind::TailLeft => "tail_l",
        }
    }
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WeightKind::ALL
            .into_iter()
            .find(|w| w.name() == s.trim())
            .ok_or_else(|| Error::Domain(format!("unknown weight `{s}`")))
    }
}

pub fn weight_value(kind: WeightKind, z: f64) -> f64 {
    match kind {
        WeightKind::Uniform => 1.0,
        WeightKind::Center => norm_pdf(z),
        WeightKind::Tails => 1.0 - norm_pdf(z) / FRAC_1_SQRT_2PI,
        WeightKind::TailRight => norm_cdf(z),
        WeightKind::TailLeft => 1.0 - norm_cdf(z),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringGrid {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl Default for ScoringGrid {
    fn default() -> Self {
        Self {
            lower: -100.0,
            upper: 100.0,
            points: 1000,
        }
    }
}

impl ScoringGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.lower < self.upper) || !self.lower.is_finite() || !self.upper.is_finite() || self.points < 2 {
            return Err(Error::Domain(format!("invalid scoring grid {self:?}")));
        }
        Ok(())
    }

    /// `(y_u - y_l) / (K - 1)`.
    pub fn prefactor(&self) -> f64 {
        (self.upper - self.lower) / (self.points - 1) as f64
    }

    pub fn contains(&self, y: f64) -> bool {
        (self.lower..=self.upper).contains(&y)
    }
}

/// `y_1..y_K`; `y_l` itself is not a node.
pub fn grid_points(grid: &ScoringGrid) -> Vec<f64> {
    let k = grid.points as f64;
    (1..=grid.points)
        .map(|i| grid.lower + (grid.upper - grid.lower) * i as f64 / k)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wcrps {
    pub value: f64,
    /// The realized value lies outside `[y_l, y_u]`.
    pub truncated: bool,
}

/// Scores precomputed CDF values at the grid nodes with an arbitrary weight.
pub fn wcrps_from_cdf(
    nodes: &[f64],
    cdf: &[f64],
    realized: f64,
    weight: impl Fn(f64) -> f64,
    grid: &ScoringGrid,
) -> Wcrps {
    debug_assert_eq!(nodes.len(), cdf.len());
    let sum: f64 = nodes
        .iter()
        .zip(cdf)
        .map(|(&z, &f)| {
            let ind = if realized < z { 1.0 } else { 0.0 };
            weight(z) * (f - ind) * (f - ind)
        })
        .sum();
    Wcrps {
        value: grid.prefactor() * sum,
        truncated: !grid.contains(realized),
    }
}

/// wCRPS with a caller-supplied weight function.
pub fn wcrps_with(
    density: &PredictiveDensity,
    realized: f64,
    weight: impl Fn(f64) -> f64,
    grid: &ScoringGrid,
) -> Wcrps {
    let nodes = grid_points(grid);
    let cdf = density.cdf_on_grid(&nodes);
    wcrps_from_cdf(&nodes, &cdf, realized, weight, grid)
}

pub fn wcrps(density: &PredictiveDensity, realized: f64, weight: WeightKind, grid: &ScoringGrid) -> Wcrps {
    wcrps_with(density, realized, |z| weight_value(weight, z), grid)
}

/// Scores one forecast under several weights, evaluating the CDF once.
pub fn wcrps_many(
    density: &PredictiveDensity,
    realized: f64,
    weights: &[WeightKind],
    grid: &ScoringGrid,
) -> Vec<Wcrps> {
    let nodes = grid_points(grid);
    let cdf = density.cdf_on_grid(&nodes);
    weights
        .iter()
        .map(|&w| wcrps_from_cdf(&nodes, &cdf, realized, |z| weight_value(w, z), grid))
        .collect()
}

/// Closed-form CRPS of `N(mu, sigma^2)` at `y`.
pub fn gaussian_crps(mu: f64, sigma: f64, y: f64) -> f64 {
    let z = (y - mu) / sigma;
    sigma * (z * (2.0 * norm_cdf(z) - 1.0) + 2.0 * norm_pdf(z) - 1.0 / std::f64::consts::PI.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub series_id: String,
    pub model_id: String,
    pub weight: WeightKind,
    pub horizon: usize,
    pub target_date: NaiveDate,
    pub value: f64,
    pub truncated: bool,
}

pub const SCORE_HEADER: &str = "series_id,model_id,weight,horizon,target_date,value,truncated";

pub fn write_score_row<W: Write>(out: &mut W, r: &ScoreRecord) -> std::io::Result<()> {
    writeln!(
        out,
        "{},{},{},{},{},{},{}",
        r.series_id, r.model_id, r.weight, r.horizon, r.target_date, r.value, r.truncated
    )
}

/// Writes the header and rows; floats use the shortest round-trip form.
pub fn write_scores<W: Write>(mut out: W, records: &[ScoreRecord]) -> Result<()> {
    writeln!(out, "{SCORE_HEADER}")?;
    for r in records {
        write_score_row(&mut out, r)?;
    }
    Ok(())
}

/// Reads a score CSV, skipping `#` comment lines.
pub fn read_scores<R: Read>(input: R) -> Result<Vec<ScoreRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let bad = |line: u64, msg: String| Error::Parse {
        path: "scores".into(),
        line,
        msg,
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 7 {
            return Err(bad(line, format!("expected 7 columns, found {}", rec.len())));
        }
        out.push(ScoreRecord {
            series_id: rec[0].to_owned(),
            model_id: rec[1].to_owned(),
            weight: rec[2].parse().map_err(|e: Error| bad(line, e.to_string()))?,
            horizon: rec[3]
                .parse()
                .map_err(|_| bad(line, format!("bad horizon `{}`", &rec[3])))?,
            target_date: rec[4]
                .parse()
                .map_err(|_| bad(line, format!("bad date `{}`", &rec[4])))?,
            value: rec[5]
                .parse()
                .map_err(|_| bad(line, format!("bad value `{}`", &rec[5])))?,
            truncated: rec[6]
                .parse()
                .map_err(|_| bad(line, format!("bad flag `{}`", &rec[6])))?,
        });
    }
    Ok(out)
}
