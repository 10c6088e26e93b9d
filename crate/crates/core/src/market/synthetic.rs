//! Seeded synthetic market generator for offline experiments and tests.

use super::{AssetId, GlobalPriceMatrix, MarketError};
use crate::rng;

/// Configuration of the synthetic price process.
///
/// Non-riskless log prices follow a geometric random walk with per-period
/// drift `ln(1 + growth)` and standard deviation `volatility`, optionally
/// pulled back toward the drifting trend line with strength `mean_reversion`
/// (an Ornstein-Uhlenbeck discretization; positive values make consecutive
/// returns negatively correlated).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    /// Total asset count, including the riskless asset at index 0.
    pub assets: usize,
    pub periods: usize,
    pub period_seconds: u64,
    pub start_timestamp: i64,
    /// Per-period fractional growth per asset (0.01 = +1% per period).
    /// One entry per asset (entry 0 ignored) or a single broadcast value.
    pub growth: Vec<f64>,
    /// Per-period log-return standard deviation; same broadcasting rule.
    pub volatility: Vec<f64>,
    /// Pull strength toward the trend line, in [0, 1).
    pub mean_reversion: f64,
    /// Scale of the generated volumes; asset `i` trades around
    /// `base_volume / i` so volume ranking is stable by construction.
    pub base_volume: f64,
}

impl SyntheticConfig {
    pub fn new(seed: u64, assets: usize, periods: usize) -> Self {
        Self {
            seed,
            assets,
            periods,
            period_seconds: 1800,
            start_timestamp: 0,
            growth: vec![0.0],
            volatility: vec![0.01],
            mean_reversion: 0.0,
            base_volume: 1000.0,
        }
    }

    pub fn with_growth(mut self, growth: Vec<f64>) -> Self {
        self.growth = growth;
        self
    }

    pub fn with_volatility(mut self, volatility: Vec<f64>) -> Self {
        self.volatility = volatility;
        self
    }

    pub fn with_mean_reversion(mut self, strength: f64) -> Self {
        self.mean_reversion = strength;
        self
    }

    fn per_asset(&self, values: &[f64], i: usize) -> Result<f64, MarketError> {
        match values.len() {
            1 => Ok(values[0]),
            l if l == self.assets => Ok(values[i]),
            l => Err(MarketError::Parameter(format!(
                "expected 1 or {} per-asset values, got {l}",
                self.assets
            ))),
        }
    }
}

/// Generate a complete, gap-free market from the configured process.
/// Deterministic: the same config always produces the same matrix.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<GlobalPriceMatrix, MarketError> {
    if config.assets < 2 {
        return Err(MarketError::Parameter("need at least two assets".into()));
    }
    if config.periods < 2 {
        return Err(MarketError::Parameter("need at least two periods".into()));
    }
    if !(0.0..1.0).contains(&config.mean_reversion) {
        return Err(MarketError::Parameter(format!(
            "mean reversion {} outside [0, 1)",
            config.mean_reversion
        )));
    }
    let m = config.assets;
    let n = config.periods;
    let mut prices = vec![1.0; m * n];
    let mut volumes = vec![0.0; m * n];

    for i in 1..m {
        let growth = config.per_asset(&config.growth, i)?;
        if growth <= -1.0 {
            return Err(MarketError::Parameter(format!(
                "growth {growth} would drive prices nonpositive"
            )));
        }
        let sigma = config.per_asset(&config.volatility, i)?;
        if sigma < 0.0 {
            return Err(MarketError::Parameter(format!("negative volatility {sigma}")));
        }
        let drift = growth.ln_1p();
        let mut stream = rng::seeded(rng::derive_seed(config.seed, i as u64));
        let mut log_price = 0.0;
        let mut trend = 0.0;
        for t in 0..n {
            if t > 0 {
                let shock = sigma * rng::standard_normal(&mut stream);
                log_price += drift + config.mean_reversion * (trend - log_price) + shock;
                trend += drift;
            }
            prices[i * n + t] = log_price.exp();
            // lognormal noise around a per-asset base keeps rankings stable
            let vol_noise = 0.1 * rng::standard_normal(&mut stream);
            volumes[i * n + t] = config.base_volume / i as f64 * vol_noise.exp();
        }
    }

    let timestamps: Vec<i64> = (0..n)
        .map(|k| config.start_timestamp + (k as u64 * config.period_seconds) as i64)
        .collect();
    let assets: Vec<AssetId> = (0..m)
        .map(|i| {
            if i == 0 {
                AssetId::new("BTC")
            } else {
                AssetId::new(format!("SYN{i:02}"))
            }
        })
        .collect::<Result<_, _>>()?;
    GlobalPriceMatrix::from_parts(assets, timestamps, config.period_seconds, prices, volumes)
}
