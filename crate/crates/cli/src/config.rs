//! Run configuration: one TOML file, overridable by flags and `VOLCAST_SEED`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use volcast::backtest::{BacktestPlan, DmOptions, RosterEntry};
use volcast::forecast::ForecastConfig;
use volcast::market_data::{load_series, ReturnSeries, ValueKind};
use volcast::mle::OptimizerConfig;
use volcast::scoring::{ScoringGrid, WeightKind};
use volcast::smc::{PmmhConfig, SmcConfig, SvPrior};
use volcast::volmodels::ModelSpec;

use crate::CliError;

pub const SEED_ENV: &str = "VOLCAST_SEED";

/// Keys that must be present after merging the file, the environment and
/// flags, named as `section.key`.
const REQUIRED: &[&str] = &["seed", "data.series", "models.roster"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub models: ModelsSection,
    #[serde(default)]
    pub backtest: BacktestSection,
    #[serde(default)]
    pub grid: ScoringGrid,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub smc: SmcSection,
    #[serde(default)]
    pub pmmh: PmmhSection,
    #[serde(default)]
    pub forecast: ForecastConfig,
    #[serde(default)]
    pub dm: DmOptions,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default)]
    pub series: Vec<PathBuf>,
    /// `returns` (default) or `prices`.
    pub kind: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsSection {
    /// Model ids, optionally labelled as `label=model-id`.
    #[serde(default)]
    pub roster: Vec<String>,
    pub benchmark: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    pub window: usize,
    pub refit_every: usize,
    pub horizons: Vec<usize>,
    pub weights: Vec<WeightKind>,
}

impl Default for BacktestSection {
    fn default() -> Self {
        let plan = BacktestPlan::default();
        Self {
            window: plan.window,
            refit_every: plan.refit_every,
            horizons: plan.horizons,
            weights: plan.weights,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmcSection {
    pub n_particles: usize,
}

impl Default for SmcSection {
    fn default() -> Self {
        Self {
            n_particles: SmcConfig::default().n_particles,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmmhSection {
    pub n_iter: usize,
    pub burn_in: usize,
    pub proposal_scales: [f64; 4],
    pub adapt: bool,
    pub target_acceptance: f64,
    pub prior: SvPrior,
}

impl Default for PmmhSection {
    fn default() -> Self {
        let d = PmmhConfig::default();
        Self {
            n_iter: d.n_iter,
            burn_in: d.burn_in,
            proposal_scales: d.proposal_scales,
            adapt: d.adapt,
            target_acceptance: d.target_acceptance,
            prior: d.prior,
        }
    }
}

impl PmmhSection {
    pub fn to_config(&self, seed: u64) -> PmmhConfig {
        PmmhConfig {
            n_iter: self.n_iter,
            burn_in: self.burn_in,
            proposal_scales: self.proposal_scales,
            adapt: self.adapt,
            target_acceptance: self.target_acceptance,
            prior: self.prior,
            seed,
            init: None,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            output: None,
            workers: 0,
            data: DataSection::default(),
            models: ModelsSection::default(),
            backtest: BacktestSection::default(),
            grid: ScoringGrid::default(),
            optimizer: BacktestPlan::default().optimizer,
            smc: SmcSection::default(),
            pmmh: PmmhSection::default(),
            forecast: ForecastConfig::default(),
            dm: DmOptions::default(),
        }
    }
}

/// A parsed configuration plus where it came from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    /// Directory relative paths are resolved against.
    pub base: PathBuf,
}

/// Reads a config file, or starts from defaults when there is none.
pub fn load(path: Option<&Path>) -> Result<Loaded, CliError> {
    let Some(path) = path else {
        return Ok(Loaded {
            config: RunConfig::default(),
            base: PathBuf::from("."),
        });
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let config: RunConfig =
        toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {}", path.display(), e.message())))?;
    Ok(Loaded {
        config,
        base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

/// Applies the seed precedence: file < `VOLCAST_SEED` < `--seed`.
pub fn resolve_seed(config: &mut RunConfig, flag: Option<u64>) -> Result<(), CliError> {
    if let Ok(v) = std::env::var(SEED_ENV) {
        let seed = v
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?;
        config.seed = Some(seed);
    }
    if flag.is_some() {
        config.seed = flag;
    }
    Ok(())
}

/// Names the first required key that is still missing.
pub fn check_required(config: &RunConfig) -> Result<(), CliError> {
    for key in REQUIRED {
        let present = match *key {
            "seed" => config.seed.is_some(),
            "data.series" => !config.data.series.is_empty(),
            "models.roster" => !config.models.roster.is_empty(),
            _ => true,
        };
        if !present {
            return Err(CliError::usage(format!("missing config key `{key}`")));
        }
    }
    Ok(())
}

pub fn parse_kind(kind: Option<&str>) -> Result<ValueKind, CliError> {
    kind.unwrap_or("returns").parse().map_err(CliError::from)
}

/// Parses `model-id` or `label=model-id`.
pub fn parse_roster_entry(s: &str) -> Result<RosterEntry, CliError> {
    match s.split_once('=') {
        Some((label, id)) => {
            let label = label.trim();
            if label.is_empty() || label.contains([',', '/', '\\']) {
                return Err(CliError::usage(format!("invalid roster label `{label}`")));
            }
            Ok(RosterEntry {
                label: label.to_owned(),
                spec: id.parse::<ModelSpec>()?,
            })
        }
        None => Ok(RosterEntry::new(s.parse::<ModelSpec>()?)),
    }
}

impl Loaded {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Loads every data series; ids are file stems.
    pub fn load_series(&self) -> Result<Vec<ReturnSeries>, CliError> {
        let kind = parse_kind(self.config.data.kind.as_deref())?;
        self.config
            .data
            .series
            .iter()
            .map(|p| {
                let path = self.resolve(p);
                if !path.exists() {
                    return Err(CliError::usage(format!("data file {} does not exist", path.display())));
                }
                Ok(load_series(&path, kind)?.series)
            })
            .collect()
    }

    pub fn roster(&self) -> Result<Vec<RosterEntry>, CliError> {
        self.config
            .models
            .roster
            .iter()
            .map(|s| parse_roster_entry(s))
            .collect()
    }

    pub fn plan(&self) -> Result<BacktestPlan, CliError> {
        let c = &self.config;
        let seed = c.seed.ok_or_else(|| CliError::usage("missing config key `seed`"))?;
        Ok(BacktestPlan {
            window: c.backtest.window,
            refit_every: c.backtest.refit_every,
            horizons: c.backtest.horizons.clone(),
            weights: c.backtest.weights.clone(),
            grid: c.grid,
            roster: self.roster()?,
            seed,
            optimizer: c.optimizer,
            smc: SmcConfig {
                n_particles: c.smc.n_particles,
                seed,
            },
            pmmh: c.pmmh.to_config(seed),
            forecast: c.forecast,
            workers: c.workers,
        })
    }

    /// SHA-256 over everything that determines results: the settings (not
    /// the output location or worker count) and the bytes of every data file.
    pub fn hash(&self) -> Result<String, CliError> {
        let mut canonical = self.config.clone();
        canonical.output = None;
        canonical.workers = 0;
        let text = toml::to_string(&canonical).map_err(|e| CliError::runtime(format!("config hash: {e}")))?;
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        for p in &self.config.data.series {
            let bytes = std::fs::read(self.resolve(p))
                .map_err(|e| CliError::usage(format!("cannot read {}: {e}", p.display())))?;
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
        Ok(hex(&h.finalize()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_defaults() {
        let c: RunConfig = toml::from_str(
            r#"
            seed = 7
            [data]
            series = ["a.csv"]
            [models]
            roster = ["tegarch", "copy=tegarch-nl"]
            [backtest]
            window = 200
            weights = ["uniform", "tail_l"]
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.backtest.window, 200);
        assert_eq!(c.backtest.refit_every, 40);
        assert_eq!(c.backtest.weights, vec![WeightKind::Uniform, WeightKind::TailLeft]);
        let loaded = Loaded {
            config: c,
            base: PathBuf::new(),
        };
        let roster = loaded.roster().unwrap();
        assert_eq!(roster[1].label, "copy");
        assert!(!roster[1].spec.leverage);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("seed = 1\n[backtest]\nwindoww = 3\n").is_err());
    }

    #[test]
    fn missing_keys_are_named() {
        let c = RunConfig::default();
        let err = check_required(&c).unwrap_err();
        assert!(err.message.contains("`seed`"), "{}", err.message);
        let c = RunConfig {
            seed: Some(1),
            ..RunConfig::default()
        };
        assert!(check_required(&c).unwrap_err().message.contains("`data.series`"));
    }
}
