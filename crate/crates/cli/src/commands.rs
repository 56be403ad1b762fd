use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use chrono::NaiveDate;
use clap::Args;
use serde::Serialize;
use sha2::{Digest, Sha256};
use volcast::backtest::{self, BacktestReport, BlockOutput, DmOptions, RosterEntry};
use volcast::forecast::Fitted;
use volcast::market_data::{load_series, write_series, ReturnSeries};
use volcast::mle::{self, MIN_FIT_WINDOW};
use volcast::scoring::{read_scores, write_scores, ScoreRecord, WeightKind};
use volcast::smc::{self, SmcConfig};
use volcast::volmodels::{simulate_path, EgarchParams, Family, ModelSpec, Params, ResidualBank, SvParams};

use crate::config::{self, hex, parse_kind, parse_roster_entry, Loaded};
use crate::journal::{self, Journal};
use crate::{CliError, Common};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn header(hash: &str, seed: u64) -> String {
    format!("# volcast {VERSION} config_hash={hash} seed={seed}")
}

fn hash_parts<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex(&h.finalize())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

/// Writes `header` then whatever `body` emits, creating parent directories.
fn write_file(
    path: &Path,
    header: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{header}")?;
    body(&mut out)?;
    out.flush()?;
    Ok(())
}

/// Loads the optional config and settles the seed (0 when none is given).
fn base_config(common: &Common) -> Result<(Loaded, u64), CliError> {
    let mut loaded = config::load(common.config.as_deref())?;
    config::resolve_seed(&mut loaded.config, common.seed)?;
    let seed = loaded.config.seed.unwrap_or(0);
    Ok((loaded, seed))
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: Common,
    /// Input CSV files (`date,value`).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// What the value column holds: `prices` or `returns`.
    #[arg(long, default_value = "prices")]
    kind: String,
    /// Directory for the normalized return files and `manifest.csv`.
    #[arg(long, short)]
    out_dir: PathBuf,
}

pub fn ingest(a: IngestArgs) -> Result<(), CliError> {
    let (_, seed) = base_config(&a.common)?;
    let kind = parse_kind(Some(&a.kind))?;
    let mut loaded = Vec::new();
    let mut blobs = vec![a.kind.as_bytes().to_vec()];
    for p in &a.inputs {
        blobs.push(read_bytes(p)?);
        loaded.push((p, load_series(p, kind)?));
    }
    let head = header(&hash_parts(blobs.iter().map(Vec::as_slice)), seed);
    let mut ids = HashSet::new();
    for (p, l) in &loaded {
        let id = l.series.id();
        if !ids.insert(id) {
            return Err(CliError::usage(format!("two inputs share the series id `{id}`")));
        }
        write_file(&a.out_dir.join(format!("{id}.csv")), &head, |w| {
            Ok(write_series(&l.series, w)?)
        })?;
        if !a.common.quiet {
            eprintln!(
                "{}: {} returns ({} rows dropped)",
                p.display(),
                l.series.len(),
                l.dropped_rows
            );
        }
    }
    write_file(&a.out_dir.join("manifest.csv"), &head, |w| {
        writeln!(w, "id,source,n_returns,dropped_rows,first_date,last_date")?;
        for (p, l) in &loaded {
            let s = &l.series;
            writeln!(
                w,
                "{},{},{},{},{},{}",
                s.id(),
                p.display(),
                s.len(),
                l.dropped_rows,
                s.dates()[0],
                s.dates()[s.len() - 1]
            )?;
        }
        Ok(())
    })
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Return CSV to fit.
    #[arg(long)]
    data: PathBuf,
    /// Model id, e.g. `tegarch`, `beta-tegarch-nl`, `sv`.
    #[arg(long)]
    model: String,
    /// What the value column holds: `returns` or `prices`.
    #[arg(long, default_value = "returns")]
    kind: String,
    /// First observation of the window (0-based).
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// Window length; defaults to the rest of the series.
    #[arg(long)]
    length: Option<usize>,
    /// Fit artifact path (TOML).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Write the post-burn-in PMMH chain here (SV models only).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// PMMH chain length, overriding the config.
    #[arg(long)]
    iterations: Option<usize>,
    /// PMMH burn-in, overriding the config.
    #[arg(long)]
    burn_in: Option<usize>,
    /// Particles per likelihood estimate, overriding the config.
    #[arg(long)]
    particles: Option<usize>,
}

#[derive(Serialize)]
struct FitArtifact<'a> {
    series_id: &'a str,
    start: usize,
    length: usize,
    first_date: NaiveDate,
    last_date: NaiveDate,
    fitted: &'a Fitted,
}

pub fn fit(a: FitArgs) -> Result<(), CliError> {
    let (loaded, seed) = base_config(&a.common)?;
    let spec: ModelSpec = a.model.parse()?;
    let series = load_series(&a.data, parse_kind(Some(&a.kind))?)?.series;
    let length = a.length.unwrap_or(series.len().saturating_sub(a.start));
    let view = series.window(a.start, length)?;
    if view.len() < MIN_FIT_WINDOW {
        return Err(CliError::usage(format!(
            "window has {} observations, need at least {MIN_FIT_WINDOW}",
            view.len()
        )));
    }
    let c = &loaded.config;
    let settings = format!(
        "{spec}|{}|{}|{:?}|{:?}|{:?}",
        a.start, length, a.iterations, a.burn_in, a.particles
    );
    let config_bytes = toml::to_string(c).map_err(|e| CliError::runtime(e.to_string()))?;
    let hash = hash_parts([settings.as_bytes(), config_bytes.as_bytes(), &read_bytes(&a.data)?]);
    let head = header(&hash, seed);

    let fitted = if spec.family == Family::Sv {
        let mut cfg = c.pmmh.to_config(seed);
        cfg.n_iter = a.iterations.unwrap_or(cfg.n_iter);
        cfg.burn_in = a.burn_in.unwrap_or(cfg.burn_in);
        cfg.validate()?;
        let smc = SmcConfig {
            n_particles: a.particles.unwrap_or(c.smc.n_particles),
            seed,
        };
        let post = smc::pmmh(&view, spec.leverage, &smc, &cfg)?;
        print_posterior(&spec, &post);
        if let Some(path) = &a.trace {
            write_file(path, &head, |w| {
                writeln!(w, "iteration,mu,phi,sigma,rho,loglik")?;
                for (i, (d, ll)) in post.draws.iter().zip(&post.logliks).enumerate() {
                    writeln!(w, "{i},{},{},{},{},{ll}", d.mu, d.phi, d.sigma, d.rho)?;
                }
                Ok(())
            })?;
        }
        Fitted::Pmmh(post)
    } else {
        if a.trace.is_some() {
            return Err(CliError::usage("--trace applies to SV models only"));
        }
        let cfg = mle::OptimizerConfig {
            std_errors: true,
            ..c.optimizer
        };
        let fit = mle::fit(&spec, &view, &cfg, seed)?;
        print_mle(&fit);
        Fitted::Mle(fit)
    };

    let artifact = FitArtifact {
        series_id: series.id(),
        start: a.start,
        length,
        first_date: view.dates()[0],
        last_date: view.last_date(),
        fitted: &fitted,
    };
    let out = a
        .out
        .unwrap_or_else(|| PathBuf::from(format!("fit_{}_{}.toml", series.id(), spec.id())));
    let text = toml::to_string(&artifact).map_err(|e| CliError::runtime(format!("fit artifact: {e}")))?;
    write_file(&out, &head, |w| Ok(w.write_all(text.as_bytes())?))?;
    eprintln!("wrote {}", out.display());

    match &fitted {
        Fitted::Mle(f) if !f.converged => Err(CliError::estimation(format!(
            "{spec} did not converge (gradient max-norm {:.2e} after {} iterations)",
            f.grad_max_norm, f.iterations
        ))),
        _ => Ok(()),
    }
}

fn print_mle(fit: &mle::FitResult) {
    let p = &fit.params;
    let se = fit.std_errors;
    let fmt_se = |v: Option<f64>| v.map_or("-".to_owned(), |s| format!("{s:.6}"));
    println!("model      {}", fit.spec);
    println!("converged  {}", fit.converged);
    println!("loglik     {:.6}", fit.loglik);
    println!("{:<8} {:>12} {:>12}", "param", "estimate", "std.err");
    let mut rows = vec![
        ("omega", p.omega, se.map(|s| s.omega)),
        ("alpha", p.alpha, se.map(|s| s.alpha)),
        ("gamma", p.gamma, se.and_then(|s| s.gamma)),
        ("beta", p.beta, se.map(|s| s.beta)),
    ];
    if let Some(nu) = p.nu {
        rows.push(("nu", nu, se.and_then(|s| s.nu)));
    }
    rows.push(("h1", p.h1, se.map(|s| s.h1)));
    for (name, v, s) in rows {
        println!("{name:<8} {v:>12.6} {:>12}", fmt_se(s));
    }
}

fn print_posterior(spec: &ModelSpec, post: &smc::PosteriorDraws) {
    let m = post.mean();
    println!("model       {spec}");
    println!("draws       {}", post.draws.len());
    println!("acceptance  {:.3}", post.acceptance_rate);
    println!("{:<8} {:>12} {:>12} {:>12}", "param", "mean", "q2.5", "q97.5");
    let coords: [(&str, f64, fn(&SvParams) -> f64); 4] = [
        ("mu", m.mu, |p| p.mu),
        ("phi", m.phi, |p| p.phi),
        ("sigma", m.sigma, |p| p.sigma),
        ("rho", m.rho, |p| p.rho),
    ];
    for (name, mean, f) in coords {
        let (lo, hi) = post.interval(f, 0.95);
        println!("{name:<8} {mean:>12.6} {lo:>12.6} {hi:>12.6}");
    }
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub common: Common,
    /// Continue from the journal of an interrupted run.
    #[arg(long)]
    resume: bool,
    /// Worker threads (0 = all cores); results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Rolling window length, overriding the config.
    #[arg(long)]
    window: Option<usize>,
    /// Refit cadence, overriding the config.
    #[arg(long)]
    refit_every: Option<usize>,
    /// Comma-separated horizons, overriding the config.
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<usize>>,
}

const JOURNAL: &str = "journal.csv";

pub fn backtest(a: BacktestArgs) -> Result<(), CliError> {
    let Some(_) = a.common.config else {
        return Err(CliError::usage("backtest needs --config"));
    };
    let mut loaded = config::load(a.common.config.as_deref())?;
    config::resolve_seed(&mut loaded.config, a.common.seed)?;
    let c = &mut loaded.config;
    if let Some(w) = a.workers {
        c.workers = w;
    }
    if let Some(w) = a.window {
        c.backtest.window = w;
    }
    if let Some(r) = a.refit_every {
        c.backtest.refit_every = r;
    }
    if let Some(h) = a.horizons.clone() {
        c.backtest.horizons = h;
    }
    config::check_required(c)?;
    let out_dir = match (&a.output, &loaded.config.output) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => loaded.resolve(o),
        (None, None) => PathBuf::from("volcast-out"),
    };

    let series = loaded.load_series()?;
    let plan = loaded.plan()?;
    plan.validate(&series)?;
    let benchmark = benchmark_label(loaded.config.models.benchmark.as_deref(), &plan.roster)?;
    let seed = plan.seed;
    let head = header(&loaded.hash()?, seed);

    std::fs::create_dir_all(&out_dir)?;
    let journal_path = out_dir.join(JOURNAL);
    let (journal, previous) = if a.resume && journal_path.exists() {
        let (found, progress) = journal::load(&journal_path)?;
        if found != head {
            return Err(CliError::usage(format!(
                "{} was written by a different configuration ({found}); rerun without --resume",
                journal_path.display()
            )));
        }
        (Journal::append_to(&journal_path, progress.valid_len)?, progress)
    } else {
        (Journal::create(&journal_path, &head)?, journal::Progress::default())
    };

    let total = plan.blocks(&series).len();
    let todo = total - previous.done.len();
    if !a.common.quiet {
        eprintln!(
            "{} series x {} models, {} blocks ({} already done)",
            series.len(),
            plan.roster.len(),
            total,
            previous.done.len()
        );
    }
    let state = Mutex::new((journal, 0usize, None::<CliError>));
    let started = Instant::now();
    let on_done = |out: &BlockOutput| {
        let mut guard = state.lock().expect("journal lock");
        let (journal, finished, failure) = &mut *guard;
        if let Err(e) = journal.record(out) {
            failure.get_or_insert(e);
        }
        *finished += 1;
        if !a.common.quiet {
            let elapsed = started.elapsed().as_secs_f64();
            let eta = elapsed / *finished as f64 * (todo - *finished) as f64;
            let last = out
                .records
                .last()
                .map(|r| r.target_date.to_string())
                .unwrap_or_default();
            eprintln!(
                "[{}/{}] {} {} origin {} (to {last}){} eta {:.0}s",
                *finished,
                todo,
                out.key.series_id,
                out.key.model,
                out.key.refit_origin,
                if out.converged { "" } else { " [not converged]" },
                eta
            );
        }
    };
    let result = backtest::run_blocks(&plan, &series, &previous.done, on_done);
    let (_, _, failure) = state.into_inner().expect("journal lock");
    let fresh = result.map_err(|e| {
        CliError::runtime(format!(
            "backtest stopped: {e}; finished blocks are kept in {}, rerun with --resume",
            journal_path.display()
        ))
    })?;
    if let Some(e) = failure {
        return Err(CliError::runtime(format!("journal: {}", e.message)));
    }

    let mut records = previous.records;
    records.extend(fresh.into_iter().flat_map(|o| o.records));
    backtest::sort_records(&plan, &series, &mut records);
    write_file(&out_dir.join("scores.csv"), &head, |w| Ok(write_scores(w, &records)?))?;
    let report = BacktestReport::from_records(&records, &plan.roster, &benchmark, &loaded.config.dm)?;
    write_report(&out_dir, &head, &report, true, true)?;
    print_ratios(&report, &plan.roster);
    if !a.common.quiet {
        let truncated = records.iter().filter(|r| r.truncated).count();
        if truncated > 0 {
            eprintln!("warning: {truncated} realized values fell outside the scoring grid");
        }
        eprintln!("wrote {}", out_dir.display());
    }
    Ok(())
}

fn benchmark_label(requested: Option<&str>, roster: &[RosterEntry]) -> Result<String, CliError> {
    match requested {
        Some(b) if roster.iter().any(|e| e.label == b) => Ok(b.to_owned()),
        Some(b) => Err(CliError::usage(format!("benchmark `{b}` is not in the roster"))),
        None => Ok(roster
            .iter()
            .find(|e| e.label == "tegarch-nl")
            .unwrap_or(&roster[0])
            .label
            .clone()),
    }
}

fn write_report(dir: &Path, head: &str, report: &BacktestReport, tables: bool, deltas: bool) -> Result<(), CliError> {
    if tables {
        write_file(&dir.join("ratios.csv"), head, |w| Ok(report.write_ratios(w)?))?;
        write_file(&dir.join("dm.csv"), head, |w| Ok(report.write_dm(w)?))?;
    }
    if deltas {
        for (nl, lev) in report.delta_pairs() {
            write_file(&dir.join(format!("cumdelta_{nl}_vs_{lev}.csv")), head, |w| {
                Ok(report.write_delta(&nl, &lev, w)?)
            })?;
        }
    }
    Ok(())
}

fn print_ratios(report: &BacktestReport, roster: &[RosterEntry]) {
    let mut keys: Vec<(usize, WeightKind)> = report.ratios.iter().map(|r| (r.horizon, r.weight)).collect();
    keys.sort();
    keys.dedup();
    let models: Vec<&str> = roster
        .iter()
        .map(|e| e.label.as_str())
        .filter(|m| report.ratios.iter().any(|r| r.model == *m))
        .collect();
    println!("mean wCRPS relative to {}", report.benchmark);
    print!("{:>3} {:<8}", "h", "weight");
    for m in &models {
        print!(" {m:>14}");
    }
    println!();
    for (h, w) in keys {
        print!("{h:>3} {:<8}", w.name());
        for m in &models {
            match report.ratio(m, w, h) {
                Some(r) => print!(" {r:>14.4}"),
                None => print!(" {:>14}", "-"),
            }
        }
        println!();
    }
}

/// Seed recorded in a score file's header, if any.
fn header_seed(path: &Path) -> Option<u64> {
    let text = std::fs::read_to_string(path).ok()?;
    let first = text.lines().next()?;
    first
        .split_whitespace()
        .find_map(|t| t.strip_prefix("seed=")?.parse().ok())
}

/// Roster from the config when given, else from the labels in the scores.
fn roster_for(loaded: &Loaded, records: &[ScoreRecord]) -> Result<Vec<RosterEntry>, CliError> {
    if !loaded.config.models.roster.is_empty() {
        return loaded.roster();
    }
    let mut labels: Vec<&str> = Vec::new();
    for r in records {
        if !labels.contains(&r.model_id.as_str()) {
            labels.push(&r.model_id);
        }
    }
    labels
        .into_iter()
        .map(|l| {
            parse_roster_entry(l).map_err(|_| {
                CliError::usage(format!(
                    "model `{l}` is not a model id; pass a config whose [models] roster labels it"
                ))
            })
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    /// Score CSV written by `backtest`.
    #[arg(long)]
    scores: PathBuf,
    /// Model the ratios are relative to.
    #[arg(long)]
    benchmark: Option<String>,
    /// Apply the Harvey-Leybourne-Newbold small-sample correction.
    #[arg(long)]
    hln: bool,
    /// HAC bandwidth (default: horizon - 1).
    #[arg(long)]
    lag: Option<usize>,
    #[arg(long, short)]
    out_dir: PathBuf,
}

fn load_scores(common: &Common, path: &Path) -> Result<(Loaded, Vec<ScoreRecord>, u64), CliError> {
    let (loaded, seed) = base_config(common)?;
    let records = read_scores(File::open(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?)?;
    if records.is_empty() {
        return Err(CliError::usage(format!("{} holds no scores", path.display())));
    }
    let seed = if common.seed.is_none() && common.config.is_none() && std::env::var(config::SEED_ENV).is_err() {
        header_seed(path).unwrap_or(seed)
    } else {
        seed
    };
    Ok((loaded, records, seed))
}

pub fn compare(a: CompareArgs) -> Result<(), CliError> {
    let (loaded, records, seed) = load_scores(&a.common, &a.scores)?;
    let roster = roster_for(&loaded, &records)?;
    let benchmark = benchmark_label(
        a.benchmark.as_deref().or(loaded.config.models.benchmark.as_deref()),
        &roster,
    )?;
    let dm = DmOptions {
        lag: a.lag.or(loaded.config.dm.lag),
        hln: a.hln || loaded.config.dm.hln,
    };
    let settings = format!("{benchmark}|{:?}|{}", dm.lag, dm.hln);
    let head = header(&hash_parts([settings.as_bytes(), &read_bytes(&a.scores)?]), seed);
    let report = BacktestReport::from_records(&records, &roster, &benchmark, &dm)?;
    write_report(&a.out_dir, &head, &report, true, false)?;
    print_ratios(&report, &roster);
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// Score CSV written by `backtest`.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, short)]
    out_dir: PathBuf,
}

pub fn report(a: ReportArgs) -> Result<(), CliError> {
    let (loaded, records, seed) = load_scores(&a.common, &a.scores)?;
    let roster = roster_for(&loaded, &records)?;
    let head = header(&hash_parts([b"report".as_slice(), &read_bytes(&a.scores)?]), seed);
    let report = BacktestReport::from_records(&records, &roster, &roster[0].label, &loaded.config.dm)?;
    if report.cumulative.is_empty() {
        return Err(CliError::usage("no leverage/no-leverage pair among the scored models"));
    }
    write_report(&a.out_dir, &head, &report, false, true)?;
    for (nl, lev) in report.delta_pairs() {
        for c in report
            .cumulative
            .iter()
            .filter(|c| c.nl_model == nl && c.lev_model == lev)
        {
            let last = c.points.last().map_or(0.0, |p| p.1);
            println!(
                "{} {nl} vs {lev} {} h={}: final cumulative delta {last:.6}",
                c.series_id, c.weight, c.horizon
            );
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Model id.
    #[arg(long)]
    model: String,
    /// Parameters as `name=value`: omega, alpha, gamma, beta, nu (EGARCH
    /// families) or mu, phi, sigma, rho (SV); `h0` sets the initial state.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Number of returns.
    #[arg(long, short)]
    n: usize,
    /// Date of the first return; later returns follow on consecutive days.
    #[arg(long, default_value = "2000-01-03")]
    start_date: NaiveDate,
    #[arg(long, short)]
    out: PathBuf,
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let (_, seed) = base_config(&a.common)?;
    let spec: ModelSpec = a.model.parse()?;
    let mut kv = std::collections::BTreeMap::new();
    for p in &a.params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("parameter `{p}` is not name=value")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("parameter `{p}` has a non-numeric value")))?;
        kv.insert(k.trim().to_owned(), v);
    }
    let mut take = |k: &str, default: Option<f64>| -> Result<f64, CliError> {
        kv.remove(k)
            .or(default)
            .ok_or_else(|| CliError::usage(format!("missing parameter `{k}`")))
    };
    let h0 = take("h0", Some(0.0))?;
    let params = if spec.family == Family::Sv {
        Params::Sv(SvParams {
            mu: take("mu", None)?,
            phi: take("phi", None)?,
            sigma: take("sigma", None)?,
            rho: take("rho", Some(0.0))?,
        })
    } else {
        Params::Egarch(EgarchParams {
            omega: take("omega", None)?,
            alpha: take("alpha", None)?,
            gamma: take("gamma", Some(0.0))?,
            beta: take("beta", None)?,
            nu: if spec.family == Family::Spegarch {
                None
            } else {
                Some(take("nu", None)?)
            },
            h1: h0,
        })
    };
    if let Some(k) = kv.keys().next() {
        return Err(CliError::usage(format!("unknown parameter `{k}` for {spec}")));
    }
    // SPEGARCH has no innovation law of its own; simulate from normal residuals
    let bank = if spec.family == Family::Spegarch {
        let normal = simulate_path(
            &ModelSpec::new(Family::Sv, false),
            &Params::Sv(SvParams {
                mu: 0.0,
                phi: 0.0,
                sigma: 1e-12,
                rho: 0.0,
            }),
            0.0,
            10_000,
            seed ^ 0x5eed,
            None,
        )?;
        Some(ResidualBank::standardized(&normal.returns)?)
    } else {
        None
    };
    let path = simulate_path(&spec, &params, h0, a.n, seed, bank.as_ref())?;
    let id = a
        .out
        .file_stem()
        .map_or("sim".into(), |s| s.to_string_lossy().into_owned());
    let series = ReturnSeries::with_daily_index(id, a.start_date, path.returns)?;
    let settings = format!("{spec}|{:?}|{}|{}", a.params, a.n, a.start_date);
    let head = header(&hash_parts([settings.as_bytes()]), seed);
    write_file(&a.out, &head, |w| Ok(write_series(&series, w)?))?;
    if !a.common.quiet {
        eprintln!("wrote {} returns to {}", series.len(), a.out.display());
    }
    Ok(())
}
