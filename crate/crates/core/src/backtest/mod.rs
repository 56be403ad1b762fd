//! Rolling-window out-of-sample evaluation.
//!
//! For every origin `t` (the number of observations available) from `W` to
//! `T - max(h)`, the model is refitted on `y_{t-W+1..t}` when
//! `(t - W) % refit_every == 0`. Between refits the parameters stay frozen
//! and only the state recursion is re-run through the new data, starting
//! from the window of the last refit. Each origin produces one predictive
//! density per horizon, scored against `y_{t+h}` under every weight.
//!
//! Work is split into blocks (one refit plus the origins that reuse it) for
//! each series and roster entry. Every block derives its random streams from
//! the master seed, the series id, the origin and the model id, so results do
//! not depend on scheduling or on the number of workers.

mod dm;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use dm::{dm_test, newey_west_variance, DmOptions, DmResult, MIN_DM_LEN};

use crate::error::{Error, Result};
use crate::forecast::{predict, Fitted, ForecastConfig};
use crate::market_data::ReturnSeries;
use crate::mle::{self, OptimizerConfig, MIN_FIT_WINDOW};
use crate::scoring::{wcrps_many, ScoreRecord, ScoringGrid, WeightKind};
use crate::smc::{pmmh, PmmhConfig, SmcConfig};
use crate::volmodels::{Family, ModelSpec};

/// A model in the comparison. Labels must be unique; specs need not be.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RosterEntry {
    pub label: String,
    pub spec: ModelSpec,
}

impl RosterEntry {
    pub fn new(spec: ModelSpec) -> Self {
        Self { label: spec.id(), spec }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestPlan {
    pub window: usize,
    pub refit_every: usize,
    pub horizons: Vec<usize>,
    pub weights: Vec<WeightKind>,
    pub grid: ScoringGrid,
    pub roster: Vec<RosterEntry>,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub smc: SmcConfig,
    pub pmmh: PmmhConfig,
    pub forecast: ForecastConfig,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl Default for BacktestPlan {
    fn default() -> Self {
        Self {
            window: 1000,
            refit_every: 40,
            horizons: vec![1, 5, 20],
            weights: WeightKind::ALL.to_vec(),
            grid: ScoringGrid::default(),
            roster: ModelSpec::roster().into_iter().map(RosterEntry::new).collect(),
            seed: 0,
            optimizer: OptimizerConfig {
                std_errors: false,
                ..OptimizerConfig::default()
            },
            smc: SmcConfig::default(),
            pmmh: PmmhConfig::default(),
            forecast: ForecastConfig::default(),
            workers: 0,
        }
    }
}

impl BacktestPlan {
    pub fn max_horizon(&self) -> usize {
        self.horizons.iter().copied().max().unwrap_or(0)
    }

    /// Checks the plan on its own and against every series. Runs before any
    /// estimation work.
    pub fn validate(&self, series: &[ReturnSeries]) -> Result<()> {
        let plan_err = |msg: String| Err(Error::Plan(msg));
        if self.window < MIN_FIT_WINDOW {
            return plan_err(format!(
                "window {} is below the minimum of {MIN_FIT_WINDOW}",
                self.window
            ));
        }
        if self.refit_every == 0 {
            return plan_err("refit_every must be at least 1".into());
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return plan_err(format!(
                "horizons must be non-empty and positive, got {:?}",
                self.horizons
            ));
        }
        if self.weights.is_empty() {
            return plan_err("no weights selected".into());
        }
        if self.roster.is_empty() {
            return plan_err("empty model roster".into());
        }
        let mut labels = HashSet::new();
        for e in &self.roster {
            if !labels.insert(e.label.as_str()) {
                return plan_err(format!("duplicate roster label `{}`", e.label));
            }
        }
        if unique(&self.horizons) != self.horizons.len() || unique(&self.weights) != self.weights.len() {
            return plan_err("horizons and weights must not repeat".into());
        }
        self.grid.validate().map_err(|e| Error::Plan(e.to_string()))?;
        if self.roster.iter().any(|e| e.spec.family == Family::Sv) {
            self.pmmh.validate().map_err(|e| Error::Plan(e.to_string()))?;
        }
        if series.is_empty() {
            return plan_err("no series".into());
        }
        let mut ids = HashSet::new();
        for s in series {
            if !ids.insert(s.id()) {
                return plan_err(format!("duplicate series id `{}`", s.id()));
            }
            if s.len() < self.window + self.max_horizon() {
                return plan_err(format!(
                    "series `{}` has {} observations; window {} plus horizon {} needs at least {}",
                    s.id(),
                    s.len(),
                    self.window,
                    self.max_horizon(),
                    self.window + self.max_horizon()
                ));
            }
        }
        Ok(())
    }

    /// Forecast origins for a series of length `len`: `W..=len - max(h)`.
    pub fn origins(&self, len: usize) -> std::ops::RangeInclusive<usize> {
        self.window..=len - self.max_horizon()
    }

    /// The work units, in canonical order.
    pub fn blocks(&self, series: &[ReturnSeries]) -> Vec<Block> {
        let mut out = Vec::new();
        for (si, s) in series.iter().enumerate() {
            let origins = self.origins(s.len());
            let last = *origins.end();
            for ei in 0..self.roster.len() {
                let mut start = *origins.start();
                while start <= last {
                    let end = (start + self.refit_every).min(last + 1);
                    out.push(Block {
                        series: si,
                        entry: ei,
                        refit_origin: start,
                        end_origin: end,
                    });
                    start = end;
                }
            }
        }
        out
    }

    pub fn block_key(&self, series: &[ReturnSeries], b: &Block) -> BlockKey {
        BlockKey {
            series_id: series[b.series].id().to_owned(),
            model: self.roster[b.entry].label.clone(),
            refit_origin: b.refit_origin,
        }
    }
}

fn unique<T: Eq + std::hash::Hash>(xs: &[T]) -> usize {
    xs.iter().collect::<HashSet<_>>().len()
}

/// One refit and the origins `refit_origin..end_origin` that share it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub series: usize,
    pub entry: usize,
    pub refit_origin: usize,
    pub end_origin: usize,
}

/// Stable identity of a block, used to resume interrupted runs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockKey {
    pub series_id: String,
    pub model: String,
    pub refit_origin: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutput {
    pub key: BlockKey,
    /// Whether the refit met the optimizer's convergence criterion (always
    /// true for PMMH).
    pub converged: bool,
    pub records: Vec<ScoreRecord>,
}

const SEED_FIT: u64 = 0x6669_74;
const SEED_FORECAST: u64 = 0x666f_7265;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one task: independent of scheduling and of roster position.
pub fn task_seed(master: u64, series_id: &str, origin: usize, model_id: &str, salt: u64) -> u64 {
    [
        fnv1a(series_id.as_bytes()),
        origin as u64,
        fnv1a(model_id.as_bytes()),
        salt,
    ]
    .into_iter()
    .fold(splitmix(master), |acc, x| splitmix(acc ^ x))
}

fn fit_block(plan: &BacktestPlan, spec: &ModelSpec, ys: &[f64], seed: u64) -> Result<(Fitted, bool)> {
    if spec.family == Family::Sv {
        let cfg = PmmhConfig {
            seed,
            ..plan.pmmh.clone()
        };
        let smc = SmcConfig { seed, ..plan.smc };
        Ok((Fitted::Pmmh(pmmh(ys, spec.leverage, &smc, &cfg)?), true))
    } else {
        let fit = mle::fit(spec, ys, &plan.optimizer, seed)?;
        let converged = fit.converged;
        Ok((Fitted::Mle(fit), converged))
    }
}

/// Runs one block: refit, then forecast and score every origin it covers.
pub fn run_block(plan: &BacktestPlan, series: &[ReturnSeries], block: &Block) -> Result<BlockOutput> {
    let s = &series[block.series];
    let entry = &plan.roster[block.entry];
    let spec = entry.spec;
    let model_id = spec.id();
    let ys = s.returns();
    let first = block.refit_origin - plan.window;
    let fit_seed = task_seed(plan.seed, s.id(), block.refit_origin, &model_id, SEED_FIT);
    let (fitted, converged) = fit_block(plan, &spec, &ys[first..block.refit_origin], fit_seed)?;
    if !converged {
        log::warn!(
            "{} on {} at origin {}: fit did not converge",
            entry.label,
            s.id(),
            block.refit_origin
        );
    }
    let mut records =
        Vec::with_capacity((block.end_origin - block.refit_origin) * plan.horizons.len() * plan.weights.len());
    for t in block.refit_origin..block.end_origin {
        let data = &ys[first..t];
        for &h in &plan.horizons {
            let seed = task_seed(plan.seed, s.id(), t, &model_id, SEED_FORECAST ^ ((h as u64) << 32));
            let density = predict(&spec, &fitted, data, h, &plan.forecast, seed)?;
            let target = t + h - 1;
            let scores = wcrps_many(&density, ys[target], &plan.weights, &plan.grid);
            for (&w, sc) in plan.weights.iter().zip(scores) {
                records.push(ScoreRecord {
                    series_id: s.id().to_owned(),
                    model_id: entry.label.clone(),
                    weight: w,
                    horizon: h,
                    target_date: s.dates()[target],
                    value: sc.value,
                    truncated: sc.truncated,
                });
            }
        }
    }
    Ok(BlockOutput {
        key: plan.block_key(series, block),
        converged,
        records,
    })
}

/// Runs every block not listed in `skip`, calling `on_done` as each one
/// finishes (possibly from several threads, in any order). Returns the new
/// outputs in canonical block order.
pub fn run_blocks<F>(
    plan: &BacktestPlan,
    series: &[ReturnSeries],
    skip: &HashSet<BlockKey>,
    on_done: F,
) -> Result<Vec<BlockOutput>>
where
    F: Fn(&BlockOutput) + Sync,
{
    plan.validate(series)?;
    let todo: Vec<Block> = plan
        .blocks(series)
        .into_iter()
        .filter(|b| !skip.contains(&plan.block_key(series, b)))
        .collect();
    let work = |b: &Block| {
        let out = run_block(plan, series, b)?;
        on_done(&out);
        Ok(out)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.workers)
            .build()
            .map_err(|e| Error::State(format!("worker pool: {e}")))?;
        pool.install(|| todo.par_iter().map(work).collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        todo.iter().map(work).collect()
    }
}

/// Puts records into canonical order: series, roster entry, horizon,
/// weight (all in plan order), then target date.
pub fn sort_records(plan: &BacktestPlan, series: &[ReturnSeries], records: &mut [ScoreRecord]) {
    let spos: HashMap<&str, usize> = series.iter().enumerate().map(|(i, s)| (s.id(), i)).collect();
    let mpos: HashMap<&str, usize> = plan
        .roster
        .iter()
        .enumerate()
        .map(|(i, e)| (e.label.as_str(), i))
        .collect();
    let hpos = |h: usize| plan.horizons.iter().position(|&x| x == h);
    let wpos = |w: WeightKind| plan.weights.iter().position(|&x| x == w);
    records.sort_by_cached_key(|r| {
        (
            spos.get(r.series_id.as_str()).copied(),
            mpos.get(r.model_id.as_str()).copied(),
            hpos(r.horizon),
            wpos(r.weight),
            r.target_date,
        )
    });
}

/// Full backtest: every block, records in canonical order.
pub fn run_scores(plan: &BacktestPlan, series: &[ReturnSeries]) -> Result<Vec<ScoreRecord>> {
    let outs = run_blocks(plan, series, &HashSet::new(), |_| {})?;
    let mut records: Vec<ScoreRecord> = outs.into_iter().flat_map(|o| o.records).collect();
    sort_records(plan, series, &mut records);
    Ok(records)
}

/// Full backtest and report against `benchmark` (a roster label).
pub fn run(plan: &BacktestPlan, series: &[ReturnSeries], benchmark: &str, dm: &DmOptions) -> Result<BacktestReport> {
    let records = run_scores(plan, series)?;
    BacktestReport::from_records(&records, &plan.roster, benchmark, dm)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanScore {
    pub model: String,
    pub weight: WeightKind,
    pub horizon: usize,
    pub mean: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub model: String,
    pub weight: WeightKind,
    pub horizon: usize,
    pub mean: f64,
    pub benchmark_mean: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DmRow {
    pub series_id: String,
    pub weight: WeightKind,
    pub horizon: usize,
    pub model_a: String,
    pub model_b: String,
    /// The test result, or why it could not be computed.
    pub result: std::result::Result<DmResult, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulativeDelta {
    pub series_id: String,
    pub weight: WeightKind,
    pub horizon: usize,
    /// Model without leverage.
    pub nl_model: String,
    /// Model with leverage.
    pub lev_model: String,
    pub points: Vec<(NaiveDate, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub benchmark: String,
    pub means: Vec<MeanScore>,
    pub ratios: Vec<RatioRow>,
    pub dm: Vec<DmRow>,
    pub cumulative: Vec<CumulativeDelta>,
}

type Cell<'a> = (&'a str, WeightKind, usize);
type Stream = BTreeMap<(String, NaiveDate), f64>;

/// Groups records into one stream per (model, weight, horizon) and checks
/// that streams sharing a horizon cover exactly the same (series, date) keys.
fn streams<'a>(records: &'a [ScoreRecord]) -> Result<BTreeMap<Cell<'a>, Stream>> {
    let mut cells: BTreeMap<Cell<'a>, Stream> = BTreeMap::new();
    for r in records {
        let key = (r.series_id.clone(), r.target_date);
        let cell = cells.entry((r.model_id.as_str(), r.weight, r.horizon)).or_default();
        if cell.insert(key, r.value).is_some() {
            return Err(Error::Alignment(format!(
                "duplicate score for {} {} h={} {} {}",
                r.model_id, r.weight, r.horizon, r.series_id, r.target_date
            )));
        }
    }
    let mut reference: HashMap<usize, (&Cell<'a>, BTreeSet<&(String, NaiveDate)>)> = HashMap::new();
    for (cell, stream) in &cells {
        let keys: BTreeSet<_> = stream.keys().collect();
        match reference.get(&cell.2) {
            None => {
                reference.insert(cell.2, (cell, keys));
            }
            Some((first, first_keys)) if *first_keys != keys => {
                return Err(Error::Alignment(format!(
                    "{} {} h={} and {} {} h={} cover different target dates",
                    first.0, first.1, first.2, cell.0, cell.1, cell.2
                )));
            }
            Some(_) => {}
        }
    }
    Ok(cells)
}

/// Mean score per (model, weight, horizon), pooled over series.
pub fn mean_scores(records: &[ScoreRecord]) -> Result<Vec<MeanScore>> {
    Ok(streams(records)?
        .into_iter()
        .map(|((model, weight, horizon), s)| MeanScore {
            model: model.to_owned(),
            weight,
            horizon,
            mean: s.values().sum::<f64>() / s.len() as f64,
            n: s.len(),
        })
        .collect())
}

/// Mean-score ratios relative to `benchmark`, cell by cell.
pub fn ratio_table(means: &[MeanScore], benchmark: &str) -> Result<Vec<RatioRow>> {
    let bench: HashMap<(WeightKind, usize), f64> = means
        .iter()
        .filter(|m| m.model == benchmark)
        .map(|m| ((m.weight, m.horizon), m.mean))
        .collect();
    if bench.is_empty() {
        return Err(Error::Plan(format!("benchmark `{benchmark}` has no scores")));
    }
    means
        .iter()
        .map(|m| {
            let b = *bench
                .get(&(m.weight, m.horizon))
                .ok_or_else(|| Error::Alignment(format!("benchmark has no scores for {} h={}", m.weight, m.horizon)))?;
            if b == 0.0 {
                return Err(Error::DegenerateVariance(format!(
                    "benchmark mean is zero for {} h={}",
                    m.weight, m.horizon
                )));
            }
            let ratio = if m.model == benchmark { 1.0 } else { m.mean / b };
            Ok(RatioRow {
                model: m.model.clone(),
                weight: m.weight,
                horizon: m.horizon,
                mean: m.mean,
                benchmark_mean: b,
                ratio,
            })
        })
        .collect()
}

/// Running sum of `loss_nl - loss_lev`; rising stretches favor the leverage
/// model. Both inputs must list the same dates in the same order.
pub fn cumulative_delta(loss_nl: &[(NaiveDate, f64)], loss_lev: &[(NaiveDate, f64)]) -> Result<Vec<(NaiveDate, f64)>> {
    if loss_nl.len() != loss_lev.len() {
        return Err(Error::Alignment(format!(
            "loss series have lengths {} and {}",
            loss_nl.len(),
            loss_lev.len()
        )));
    }
    let mut acc = 0.0;
    loss_nl
        .iter()
        .zip(loss_lev)
        .map(|(&(da, a), &(db, b))| {
            if da != db {
                return Err(Error::Alignment(format!("dates {da} and {db} do not match")));
            }
            acc += a - b;
            Ok((da, acc))
        })
        .collect()
}

impl BacktestReport {
    /// Builds every table from score records. `roster` fixes the model order
    /// of the DM pairs and identifies leverage/no-leverage twins.
    pub fn from_records(
        records: &[ScoreRecord],
        roster: &[RosterEntry],
        benchmark: &str,
        dm: &DmOptions,
    ) -> Result<Self> {
        let cells = streams(records)?;
        let means = mean_scores(records)?;
        let ratios = ratio_table(&means, benchmark)?;

        let mut keys: Vec<(WeightKind, usize)> = cells.keys().map(|c| (c.1, c.2)).collect();
        keys.sort();
        keys.dedup();
        let series_ids: BTreeSet<&str> = records.iter().map(|r| r.series_id.as_str()).collect();
        let losses = |model: &str, w: WeightKind, h: usize, sid: &str| -> Vec<(NaiveDate, f64)> {
            cells
                .get(&(model, w, h))
                .map(|s| {
                    s.iter()
                        .filter(|((id, _), _)| id == sid)
                        .map(|((_, d), v)| (*d, *v))
                        .collect()
                })
                .unwrap_or_default()
        };
        let present: Vec<&RosterEntry> = roster.iter().filter(|e| cells.keys().any(|c| c.0 == e.label)).collect();

        let mut dm_rows = Vec::new();
        let mut cumulative = Vec::new();
        for &sid in &series_ids {
            for &(w, h) in &keys {
                for (i, a) in present.iter().enumerate() {
                    let la: Vec<f64> = losses(&a.label, w, h, sid).into_iter().map(|x| x.1).collect();
                    for b in &present[i + 1..] {
                        let lb: Vec<f64> = losses(&b.label, w, h, sid).into_iter().map(|x| x.1).collect();
                        dm_rows.push(DmRow {
                            series_id: sid.to_owned(),
                            weight: w,
                            horizon: h,
                            model_a: a.label.clone(),
                            model_b: b.label.clone(),
                            result: dm_test(&la, &lb, h, dm).map_err(|e| e.to_string()),
                        });
                    }
                }
                for nl in present.iter().filter(|e| !e.spec.leverage) {
                    for lev in present.iter().filter(|e| e.spec == nl.spec.twin()) {
                        cumulative.push(CumulativeDelta {
                            series_id: sid.to_owned(),
                            weight: w,
                            horizon: h,
                            nl_model: nl.label.clone(),
                            lev_model: lev.label.clone(),
                            points: cumulative_delta(&losses(&nl.label, w, h, sid), &losses(&lev.label, w, h, sid))?,
                        });
                    }
                }
            }
        }
        Ok(Self {
            benchmark: benchmark.to_owned(),
            means,
            ratios,
            dm: dm_rows,
            cumulative,
        })
    }

    pub fn ratio(&self, model: &str, weight: WeightKind, horizon: usize) -> Option<f64> {
        self.ratios
            .iter()
            .find(|r| r.model == model && r.weight == weight && r.horizon == horizon)
            .map(|r| r.ratio)
    }

    pub fn write_ratios<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "model,weight,horizon,mean,benchmark_mean,ratio")?;
        for r in &self.ratios {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.model, r.weight, r.horizon, r.mean, r.benchmark_mean, r.ratio
            )?;
        }
        Ok(())
    }

    pub fn write_dm<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "series_id,weight,horizon,model_a,model_b,statistic,p_value,lag,n,note"
        )?;
        for r in &self.dm {
            match &r.result {
                Ok(d) => writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},",
                    r.series_id, r.weight, r.horizon, r.model_a, r.model_b, d.statistic, d.p_value, d.lag, d.n
                )?,
                Err(e) => writeln!(
                    out,
                    "{},{},{},{},{},,,,,\"{}\"",
                    r.series_id,
                    r.weight,
                    r.horizon,
                    r.model_a,
                    r.model_b,
                    e.replace('"', "'")
                )?,
            }
        }
        Ok(())
    }

    /// Pairs `(nl_model, lev_model)` with cumulative series, in report order.
    pub fn delta_pairs(&self) -> Vec<(String, String)> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for c in &self.cumulative {
            let p = (c.nl_model.clone(), c.lev_model.clone());
            if !pairs.contains(&p) {
                pairs.push(p);
            }
        }
        pairs
    }

    /// All cumulative series for one pair as `series_id,weight,horizon,date,value`.
    pub fn write_delta<W: Write>(&self, nl_model: &str, lev_model: &str, mut out: W) -> Result<()> {
        writeln!(out, "series_id,weight,horizon,date,value")?;
        for c in self
            .cumulative
            .iter()
            .filter(|c| c.nl_model == nl_model && c.lev_model == lev_model)
        {
            for (d, v) in &c.points {
                writeln!(out, "{},{},{},{d},{v}", c.series_id, c.weight, c.horizon)?;
            }
        }
        Ok(())
    }
}
