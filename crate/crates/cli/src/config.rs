//! Run configuration: defaults, the flat key-value config file, and the
//! flag > file > default precedence chain.
//!
//! File format: one `key = value` pair per line, `#` starts a comment.
//! Unknown keys are rejected so typos fail loudly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use folio_core::agent::AgentConfig;
use folio_core::strategies::StrategyParams;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // training and data-access hyperparameters
    pub batch_size: usize,
    pub window_size: usize,
    pub number_of_coins: usize,
    /// Trading period in seconds.
    pub trading_period: u64,
    pub fake_decay_rate: f64,
    pub keep_probability: f64,
    pub total_steps: usize,
    pub regularization_rate: f64,
    pub learning_rate: f64,
    /// Years of history the experiment uses; longer datasets are trimmed to
    /// the most recent span. Zero disables trimming.
    pub global_time_span: f64,
    pub training_set_portion: f64,
    pub cross_validation_set_portion: f64,
    pub test_set_portion: f64,
    pub volume_average_days: usize,
    pub commission_fee: f64,
    // network topology
    pub conv_filters: usize,
    pub kernel_width: usize,
    pub dense_units: usize,
    // run control
    pub quote_asset: String,
    pub seeds: Vec<u64>,
    pub desk_scale: bool,
    pub strategies: Option<Vec<String>>,
    // strategy parameters
    pub pamr_epsilon: f64,
    pub ons_eta: f64,
    pub ons_beta: f64,
    pub ons_delta: f64,
    pub up_samples: usize,
    pub up_seed: u64,
    // synthetic generator
    pub synth_seed: u64,
    pub synth_assets: usize,
    pub synth_periods: usize,
    pub synth_drift: Vec<f64>,
    pub synth_volatility: Vec<f64>,
    pub synth_mean_reversion: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            batch_size: 50,
            window_size: 50,
            number_of_coins: 12,
            trading_period: 1800,
            fake_decay_rate: 0.01,
            keep_probability: 0.3,
            total_steps: 900_000,
            regularization_rate: 1e-8,
            learning_rate: 1e-5,
            global_time_span: 1.0,
            training_set_portion: 0.7,
            cross_validation_set_portion: 0.15,
            test_set_portion: 0.15,
            volume_average_days: 30,
            commission_fee: 0.0025,
            conv_filters: 12,
            kernel_width: 4,
            dense_units: 500,
            quote_asset: "BTC".to_string(),
            seeds: (0..8).collect(),
            desk_scale: false,
            strategies: None,
            pamr_epsilon: 0.5,
            ons_eta: 0.0,
            ons_beta: 1.0,
            ons_delta: 0.125,
            up_samples: 100_000,
            up_seed: 0,
            synth_seed: 0,
            synth_assets: 12,
            synth_periods: 17_520,
            synth_drift: vec![0.0],
            synth_volatility: vec![0.01],
            synth_mean_reversion: 0.0,
        }
    }
}

/// Small-scale preset: a narrow topology and a short, hot training run.
/// Explicit config keys and flags still override these values.
fn apply_desk_preset(config: &mut RunConfig) {
    config.window_size = 20;
    config.conv_filters = 4;
    config.kernel_width = 3;
    config.dense_units = 32;
    config.total_steps = 20_000;
    config.learning_rate = 1e-3;
    config.seeds = vec![0, 1, 2];
}

/// Flag-level overrides collected from the command line.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub seeds: Option<Vec<u64>>,
    pub desk_scale: bool,
    pub strategies: Option<Vec<String>>,
}

impl RunConfig {
    /// Resolve the three layers: paper defaults, then the desk preset when
    /// requested, then the config file, then command-line flags.
    pub fn resolve(path: Option<&Path>, overrides: &CliOverrides) -> Result<Self, CliError> {
        let file_pairs = match path {
            Some(p) => parse_file(p)?,
            None => BTreeMap::new(),
        };
        let desk_from_file = file_pairs
            .get("desk_scale")
            .map(|(line, v)| parse_bool(v, "desk_scale", *line))
            .transpose()?
            .unwrap_or(false);

        let mut config = RunConfig::default();
        if overrides.desk_scale || desk_from_file {
            apply_desk_preset(&mut config);
            config.desk_scale = true;
        }
        for (key, (line, value)) in &file_pairs {
            config.apply(key, value, *line)?;
        }
        if let Some(seeds) = &overrides.seeds {
            config.seeds = seeds.clone();
        }
        if let Some(strategies) = &overrides.strategies {
            config.strategies = Some(strategies.clone());
        }
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<(), CliError> {
        match key {
            "batch_size" => self.batch_size = parse_num(value, key, line)?,
            "window_size" => self.window_size = parse_num(value, key, line)?,
            "number_of_coins" => self.number_of_coins = parse_num(value, key, line)?,
            "trading_period" => self.trading_period = parse_num(value, key, line)?,
            "fake_decay_rate" => self.fake_decay_rate = parse_num(value, key, line)?,
            "keep_probability" => self.keep_probability = parse_num(value, key, line)?,
            "total_steps" => self.total_steps = parse_num(value, key, line)?,
            "regularization_rate" => self.regularization_rate = parse_num(value, key, line)?,
            "learning_rate" => self.learning_rate = parse_num(value, key, line)?,
            "global_time_span" => self.global_time_span = parse_num(value, key, line)?,
            "training_set_portion" => self.training_set_portion = parse_num(value, key, line)?,
            "cross_validation_set_portion" => {
                self.cross_validation_set_portion = parse_num(value, key, line)?
            }
            "test_set_portion" => self.test_set_portion = parse_num(value, key, line)?,
            "volume_average_days" => self.volume_average_days = parse_num(value, key, line)?,
            "commission_fee" => self.commission_fee = parse_num(value, key, line)?,
            "conv_filters" => self.conv_filters = parse_num(value, key, line)?,
            "kernel_width" => self.kernel_width = parse_num(value, key, line)?,
            "dense_units" => self.dense_units = parse_num(value, key, line)?,
            "quote_asset" => self.quote_asset = value.to_string(),
            "seeds" => self.seeds = parse_list(value, key, line)?,
            "desk_scale" => self.desk_scale = parse_bool(value, key, line)?,
            "strategies" => {
                self.strategies =
                    Some(value.split(',').map(|s| s.trim().to_string()).collect())
            }
            "pamr_epsilon" => self.pamr_epsilon = parse_num(value, key, line)?,
            "ons_eta" => self.ons_eta = parse_num(value, key, line)?,
            "ons_beta" => self.ons_beta = parse_num(value, key, line)?,
            "ons_delta" => self.ons_delta = parse_num(value, key, line)?,
            "up_samples" => self.up_samples = parse_num(value, key, line)?,
            "up_seed" => self.up_seed = parse_num(value, key, line)?,
            "synth_seed" => self.synth_seed = parse_num(value, key, line)?,
            "synth_assets" => self.synth_assets = parse_num(value, key, line)?,
            "synth_periods" => self.synth_periods = parse_num(value, key, line)?,
            "synth_drift" => self.synth_drift = parse_list(value, key, line)?,
            "synth_volatility" => self.synth_volatility = parse_list(value, key, line)?,
            "synth_mean_reversion" => self.synth_mean_reversion = parse_num(value, key, line)?,
            other => {
                return Err(CliError::Config(format!(
                    "line {line}: unknown config key \"{other}\""
                )))
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        let portions = self.training_set_portion
            + self.cross_validation_set_portion
            + self.test_set_portion;
        if (portions - 1.0).abs() > 1e-9 {
            return Err(CliError::Config(format!(
                "set portions sum to {portions}, expected 1"
            )));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("seed list is empty".into()));
        }
        if !(0.0..1.0).contains(&self.commission_fee) {
            return Err(CliError::Config(format!(
                "commission fee {} outside [0, 1)",
                self.commission_fee
            )));
        }
        if self.trading_period == 0 {
            return Err(CliError::Config("trading period must be positive".into()));
        }
        Ok(())
    }

    pub fn portions(&self) -> (f64, f64, f64) {
        (
            self.training_set_portion,
            self.cross_validation_set_portion,
            self.test_set_portion,
        )
    }

    pub fn agent_config(&self, assets: usize) -> AgentConfig {
        AgentConfig {
            assets,
            window_size: self.window_size,
            conv_filters: self.conv_filters,
            kernel_width: self.kernel_width,
            dense_units: self.dense_units,
            keep_probability: self.keep_probability,
            l2_lambda: self.regularization_rate,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            total_steps: self.total_steps,
            seeds: self.seeds.clone(),
        }
    }

    pub fn strategy_params(&self) -> StrategyParams {
        StrategyParams {
            pamr_epsilon: self.pamr_epsilon,
            ons_eta: self.ons_eta,
            ons_beta: self.ons_beta,
            ons_delta: self.ons_delta,
            up_samples: self.up_samples,
            up_seed: self.up_seed,
        }
    }

    /// Number of periods the configured global time span covers.
    pub fn span_periods(&self) -> Option<usize> {
        if self.global_time_span <= 0.0 {
            return None;
        }
        let seconds = self.global_time_span * 365.0 * 86_400.0;
        Some((seconds / self.trading_period as f64).floor() as usize)
    }

    /// Deterministic echo of the resolved configuration.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("batch_size", self.batch_size.to_string());
        kv("window_size", self.window_size.to_string());
        kv("number_of_coins", self.number_of_coins.to_string());
        kv("trading_period", self.trading_period.to_string());
        kv("fake_decay_rate", self.fake_decay_rate.to_string());
        kv("keep_probability", self.keep_probability.to_string());
        kv("total_steps", self.total_steps.to_string());
        kv("regularization_rate", self.regularization_rate.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("global_time_span", self.global_time_span.to_string());
        kv("training_set_portion", self.training_set_portion.to_string());
        kv(
            "cross_validation_set_portion",
            self.cross_validation_set_portion.to_string(),
        );
        kv("test_set_portion", self.test_set_portion.to_string());
        kv("volume_average_days", self.volume_average_days.to_string());
        kv("commission_fee", self.commission_fee.to_string());
        kv("conv_filters", self.conv_filters.to_string());
        kv("kernel_width", self.kernel_width.to_string());
        kv("dense_units", self.dense_units.to_string());
        kv("quote_asset", self.quote_asset.clone());
        kv("seeds", join(&self.seeds));
        kv("desk_scale", self.desk_scale.to_string());
        if let Some(strategies) = &self.strategies {
            kv("strategies", strategies.join(","));
        }
        kv("pamr_epsilon", self.pamr_epsilon.to_string());
        kv("ons_eta", self.ons_eta.to_string());
        kv("ons_beta", self.ons_beta.to_string());
        kv("ons_delta", self.ons_delta.to_string());
        kv("up_samples", self.up_samples.to_string());
        kv("up_seed", self.up_seed.to_string());
        kv("synth_seed", self.synth_seed.to_string());
        kv("synth_assets", self.synth_assets.to_string());
        kv("synth_periods", self.synth_periods.to_string());
        kv("synth_drift", join(&self.synth_drift));
        kv("synth_volatility", join(&self.synth_volatility));
        kv("synth_mean_reversion", self.synth_mean_reversion.to_string());
        out
    }
}

fn join<T: ToString>(values: &[T]) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

type FilePairs = BTreeMap<String, (usize, String)>;

fn parse_file(path: &Path) -> Result<FilePairs, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    let mut pairs = FilePairs::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {line}: expected \"key = value\", got \"{raw}\""))
        })?;
        let key = key.trim().to_string();
        if pairs
            .insert(key.clone(), (line, value.trim().to_string()))
            .is_some()
        {
            return Err(CliError::Config(format!(
                "line {line}: duplicate config key \"{key}\""
            )));
        }
    }
    Ok(pairs)
}

fn parse_num<T: std::str::FromStr>(value: &str, key: &str, line: usize) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| {
        CliError::Config(format!("line {line}: bad value \"{value}\" for {key}"))
    })
}

fn parse_bool(value: &str, key: &str, line: usize) -> Result<bool, CliError> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(CliError::Config(format!(
            "line {line}: bad boolean \"{other}\" for {key}"
        ))),
    }
}

fn parse_list<T: std::str::FromStr>(
    value: &str,
    key: &str,
    line: usize,
) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .map(|item| parse_num(item, key, line))
        .collect()
}

pub fn parse_seed_list(raw: &str) -> Result<Vec<u64>, CliError> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Config(format!("bad seed \"{s}\"")))
        })
        .collect()
}
