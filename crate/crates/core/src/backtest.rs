//! Commission-aware trading simulation and the performance measures used to
//! compare policies.
//!
//! Two standing assumptions: orders fill immediately at the recorded price
//! (liquidity), and the simulated capital never moves the market (zero
//! impact). Prices fed to policies are therefore independent of their
//! actions; only the account value reflects them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{self, AgentConfig, AgentError};
use crate::market::{GlobalPriceMatrix, MarketError, PeriodRange, PriceChangeVector, PriceWindow};
use crate::policy::{Policy, PolicyError};
use crate::portfolio::PortfolioVector;
use crate::strategies::{build_strategy, StrategyError, StrategyKind, StrategyParams};

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("period {period}: policy \"{policy}\" violated its contract: {message}")]
    ContractViolation { period: usize, policy: String, message: String },
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("configuration error: {0}")]
    Config(String),
}

/// Knobs of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// Commission per unit traded, applied to the total variation between
    /// consecutive target portfolios.
    pub commission_rate: f64,
    pub test_range: PeriodRange,
    pub window_size: usize,
    /// Holdings before the first decision; all capital in the riskless
    /// asset unless configured otherwise.
    pub initial_portfolio: PortfolioVector,
}

impl BacktestConfig {
    pub fn new(test_range: PeriodRange, window_size: usize, assets: usize) -> Self {
        Self {
            commission_rate: 0.0025,
            test_range,
            window_size,
            initial_portfolio: PortfolioVector::basis(assets, 0),
        }
    }

    pub fn with_commission(mut self, rate: f64) -> Self {
        self.commission_rate = rate;
        self
    }

    fn validate(&self, data: &GlobalPriceMatrix) -> Result<(), BacktestError> {
        if !(0.0..1.0).contains(&self.commission_rate) {
            return Err(BacktestError::Config(format!(
                "commission rate {} outside [0, 1)",
                self.commission_rate
            )));
        }
        if self.initial_portfolio.len() != data.asset_count() {
            return Err(BacktestError::Dimension(format!(
                "initial portfolio has {} weights for {} assets",
                self.initial_portfolio.len(),
                data.asset_count()
            )));
        }
        let r = self.test_range;
        if r.len() < 2 || r.end > data.period_count() {
            return Err(BacktestError::InvalidRange(format!(
                "test range {}..{} cannot host a trade within {} periods",
                r.start,
                r.end,
                data.period_count()
            )));
        }
        if r.start + 1 < self.window_size {
            return Err(BacktestError::InvalidRange(format!(
                "test range starts at {} but the window needs {} periods of history",
                r.start, self.window_size
            )));
        }
        Ok(())
    }
}

/// Everything a simulation produced: the capital trajectory, the played
/// weights, per-period net returns and the summary measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub policy: String,
    /// Portfolio values, normalized to 1 before the first trade; one entry
    /// more than the number of traded periods.
    pub capital_curve: Vec<f64>,
    pub weights_log: Vec<PortfolioVector>,
    /// Net simple return per traded period: `r_t (1 - mu_t) - 1`.
    pub period_returns: Vec<f64>,
    pub final_value: f64,
    /// None when fewer than two periods traded or returns have zero spread.
    pub sharpe: Option<f64>,
    pub max_drawdown: f64,
    /// Sample standard deviation of the per-period returns.
    pub return_std: f64,
    /// Fee-adjusted geometric mean growth per period.
    pub geometric_mean_return: f64,
}

/// Simulate one policy over the test range.
///
/// Each period `t`: the policy sees the window ending at `t` and commits a
/// portfolio; the capital compounds by `r_t (1 - mu_t)` where `r_t` is the
/// realized capital change rate and `mu_t` the commission on the total
/// variation against the previous target; the realized change vector is then
/// revealed to the policy. The first period pays commission for moving out
/// of the initial holdings.
pub fn run(
    policy: &mut dyn Policy,
    data: &GlobalPriceMatrix,
    config: &BacktestConfig,
) -> Result<BacktestReport, BacktestError> {
    config.validate(data)?;
    if policy.asset_count() != data.asset_count() {
        return Err(BacktestError::Dimension(format!(
            "policy \"{}\" allocates over {} assets, data has {}",
            policy.name(),
            policy.asset_count(),
            data.asset_count()
        )));
    }
    let traded = PeriodRange::new(config.test_range.start, config.test_range.end - 1);
    let mut capital = 1.0;
    let mut capital_curve = vec![1.0];
    let mut weights_log = Vec::with_capacity(traded.len());
    let mut period_returns = Vec::with_capacity(traded.len());
    let mut previous = config.initial_portfolio.clone();
    for t in traded.iter() {
        let window = data.window(t, config.window_size)?;
        let target = policy
            .decide(&window)
            .map_err(|e| BacktestError::ContractViolation {
                period: t,
                policy: policy.name().to_string(),
                message: e.to_string(),
            })?;
        validate_portfolio(&target, data.asset_count(), t, policy.name())?;
        let change = data.price_change_vector(t)?;
        let rate = target.dot(change.values());
        let fee = config.commission_rate * previous.turnover(&target);
        capital *= rate * (1.0 - fee);
        capital_curve.push(capital);
        period_returns.push(rate * (1.0 - fee) - 1.0);
        weights_log.push(target.clone());
        previous = target;
        policy.observe(&change);
    }
    let final_value = capital;
    let periods = period_returns.len() as f64;
    Ok(BacktestReport {
        policy: policy.name().to_string(),
        final_value,
        sharpe: sharpe(&period_returns, 0.0),
        max_drawdown: max_drawdown(&capital_curve),
        return_std: sample_std(&period_returns).unwrap_or(0.0),
        geometric_mean_return: final_value.powf(1.0 / periods),
        capital_curve,
        weights_log,
        period_returns,
    })
}

fn validate_portfolio(
    target: &PortfolioVector,
    assets: usize,
    period: usize,
    policy: &str,
) -> Result<(), BacktestError> {
    let violation = |message: String| BacktestError::ContractViolation {
        period,
        policy: policy.to_string(),
        message,
    };
    if target.len() != assets {
        return Err(violation(format!(
            "{} weights for {} assets",
            target.len(),
            assets
        )));
    }
    // PortfolioVector enforces nonnegativity and normalization on
    // construction; re-check here to catch corrupted custom policies.
    if let Err(e) = PortfolioVector::new(target.weights().to_vec()) {
        return Err(violation(e.to_string()));
    }
    Ok(())
}

/// Risk-adjusted return: mean excess per-period return over the sample
/// standard deviation of per-period returns. Undefined (None) when fewer
/// than two returns exist or their spread is zero.
pub fn sharpe(period_returns: &[f64], risk_free: f64) -> Option<f64> {
    let std = sample_std(period_returns)?;
    if std == 0.0 {
        return None;
    }
    let mean = period_returns.iter().sum::<f64>() / period_returns.len() as f64;
    Some((mean - risk_free) / std)
}

fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Some(var.sqrt())
}

/// Largest relative drop from a running peak to a later trough.
pub fn max_drawdown(capital_curve: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &value in capital_curve {
        peak = peak.max(value);
        worst = worst.max((peak - value) / peak);
    }
    worst
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub final_value: f64,
    pub sharpe: Option<f64>,
    pub max_drawdown: f64,
    pub return_std: f64,
}

impl SummaryRow {
    pub fn from_report(report: &BacktestReport) -> Self {
        Self {
            name: report.policy.clone(),
            final_value: report.final_value,
            sharpe: report.sharpe,
            max_drawdown: report.max_drawdown,
            return_std: report.return_std,
        }
    }
}

/// CSV summary, one row per policy, mirroring the comparison-table columns.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("name,final_value,sharpe,max_drawdown,return_std\n");
    for row in rows {
        let sharpe = row
            .sharpe
            .map(|s| s.to_string())
            .unwrap_or_else(|| "undefined".to_string());
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.name, row.final_value, sharpe, row.max_drawdown, row.return_std
        ));
    }
    out
}

/// Replays a fixed schedule of portfolios; handy for accounting checks and
/// what-if analyses of recorded weight logs.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    schedule: Vec<PortfolioVector>,
    cursor: usize,
}

impl ScriptedPolicy {
    pub fn new(schedule: Vec<PortfolioVector>) -> Self {
        Self { schedule, cursor: 0 }
    }
}

impl Policy for ScriptedPolicy {
    fn name(&self) -> &str {
        "scripted"
    }

    fn asset_count(&self) -> usize {
        self.schedule.first().map_or(0, PortfolioVector::len)
    }

    fn decide(&mut self, _window: &PriceWindow) -> Result<PortfolioVector, PolicyError> {
        let next = self
            .schedule
            .get(self.cursor)
            .cloned()
            .ok_or_else(|| PolicyError::Shape("schedule exhausted".into()))?;
        self.cursor += 1;
        Ok(next)
    }
}

/// Comparison experiment configuration shared by every span of
/// [`rolling_backtests`].
#[derive(Debug, Clone)]
pub struct RollingConfig {
    pub ratios: (f64, f64, f64),
    pub window_size: usize,
    pub commission_rate: f64,
    /// Volume-based asset selection applied per span; None trades the full
    /// asset set.
    pub selection: Option<AssetSelection>,
    /// Train and include the policy network when present.
    pub agent: Option<AgentConfig>,
    pub strategies: Vec<StrategyKind>,
    pub strategy_params: StrategyParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssetSelection {
    pub count: usize,
    pub lookback_days: usize,
}

/// Comparison table for one time span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub span: PeriodRange,
    pub rows: Vec<SummaryRow>,
}

/// Re-run the whole experiment (selection, training, simulation) over each
/// time span and emit one comparison table per span. Every policy in a span
/// trades the identical test range and price stream.
pub fn rolling_backtests(
    data: &GlobalPriceMatrix,
    spans: &[PeriodRange],
    config: &RollingConfig,
) -> Result<Vec<ComparisonTable>, BacktestError> {
    if spans.is_empty() {
        return Err(BacktestError::Config("no spans given".into()));
    }
    // validate every span before any expensive work starts
    for span in spans {
        if span.is_empty() || span.end > data.period_count() {
            return Err(BacktestError::Config(format!(
                "span {}..{} does not fit {} periods",
                span.start,
                span.end,
                data.period_count()
            )));
        }
        if span.len() < 3 * (config.window_size + 1) {
            return Err(BacktestError::Config(format!(
                "span {}..{} is too short to split around window {}",
                span.start, span.end, config.window_size
            )));
        }
    }
    spans
        .iter()
        .map(|&span| run_span(data, span, config))
        .collect()
}

fn run_span(
    data: &GlobalPriceMatrix,
    span: PeriodRange,
    config: &RollingConfig,
) -> Result<ComparisonTable, BacktestError> {
    let mut view = data.slice_periods(span)?;
    let split = view.split(config.ratios, config.window_size)?;
    if let Some(selection) = &config.selection {
        // volume ranking anchored at the start of the evaluation span
        let chosen = view.select_assets(selection.count, split.test.start, selection.lookback_days)?;
        view = view.restrict(&chosen)?;
    }
    let assets = view.asset_count();
    let backtest_config = BacktestConfig::new(split.test, config.window_size, assets)
        .with_commission(config.commission_rate);

    let hindsight: Vec<PriceChangeVector> = (split.test.start..split.test.end - 1)
        .map(|t| view.price_change_vector(t))
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for kind in &config.strategies {
        let mut policy = build_strategy(*kind, assets, &config.strategy_params, &hindsight)?;
        let report = run(policy.as_mut(), &view, &backtest_config)?;
        rows.push(SummaryRow::from_report(&report));
    }
    if let Some(agent_config) = &config.agent {
        let mut agent_config = agent_config.clone();
        // the harness feeds every policy the same window
        agent_config.assets = assets;
        agent_config.window_size = config.window_size;
        let selection = agent::model_select(&view, &split, &agent_config)?;
        let mut best = selection.best().clone();
        let report = run(&mut best, &view, &backtest_config)?;
        rows.push(SummaryRow::from_report(&report));
    }
    Ok(ComparisonTable { span, rows })
}
