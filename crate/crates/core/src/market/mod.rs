//! Market data: the global price matrix, asset selection, gap repair,
//! dataset splitting and the normalized window / price-change views that
//! feed training and backtesting.
//!
//! The global price matrix holds one row per asset and one column per
//! trading period; row 0 is the riskless quote asset whose price is
//! identically 1. Cells that were never observed are stored as NaN until
//! [`GlobalPriceMatrix::fill_missing_history`] repairs them.

mod ingest;
mod synthetic;

pub use ingest::ingest_csv;
pub use synthetic::{generate_synthetic, SyntheticConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SECONDS_PER_DAY: u64 = 86_400;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("timestamp lattice violation: {0}")]
    Lattice(String),
    #[error("duplicate observation for {symbol} at timestamp {timestamp}")]
    Conflict { symbol: String, timestamp: i64 },
    #[error("quote asset {0} not present in the input")]
    MissingQuoteAsset(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("asset {0} has no observed price and cannot be repaired")]
    UnusableAsset(String),
    #[error("price for asset {symbol} at period {period} is absent")]
    AbsentPrice { symbol: String, period: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Symbol naming a tradable asset, e.g. "BTC".
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssetId(String);

impl AssetId {
    pub fn new(symbol: impl Into<String>) -> Result<Self, MarketError> {
        let symbol = symbol.into();
        if symbol.trim().is_empty() {
            return Err(MarketError::Parameter("empty asset symbol".into()));
        }
        Ok(Self(symbol))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for AssetId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Half-open interval of period indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodRange {
    pub start: usize,
    pub end: usize,
}

impl PeriodRange {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, t: usize) -> bool {
        t >= self.start && t < self.end
    }

    pub fn iter(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

/// Contiguous train / cross-validation / test partition of the period axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: PeriodRange,
    pub cv: PeriodRange,
    pub test: PeriodRange,
}

/// Normalized price window: every entry is the asset's price divided by the
/// asset's price in the window's last column, so the last column is exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceWindow {
    data: Vec<f64>, // assets x width, row-major
    assets: usize,
    width: usize,
    period_index: usize,
}

impl PriceWindow {
    pub fn assets(&self) -> usize {
        self.assets
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Index of the window's last column in the global matrix.
    pub fn period_index(&self) -> usize {
        self.period_index
    }

    pub fn get(&self, asset: usize, column: usize) -> f64 {
        self.data[asset * self.width + column]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Test-only constructor for synthetic windows.
    pub fn from_raw(data: Vec<f64>, assets: usize, width: usize, period_index: usize) -> Self {
        assert_eq!(data.len(), assets * width);
        Self { data, assets, width, period_index }
    }
}

/// Element-wise ratio of next-period prices to current prices.
/// The first element (riskless asset) is exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceChangeVector(Vec<f64>);

impl PriceChangeVector {
    pub fn new(values: Vec<f64>) -> Result<Self, MarketError> {
        if values.is_empty() {
            return Err(MarketError::Dimension("empty price change vector".into()));
        }
        if values[0] != 1.0 {
            return Err(MarketError::Parameter(format!(
                "riskless change must be 1.0, got {}",
                values[0]
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v <= 0.0) {
            return Err(MarketError::Parameter(format!(
                "price change {bad} is not positive and finite"
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Price and volume history for a fixed asset set on a constant-spacing
/// timestamp lattice. Immutable once constructed; all views are pure.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalPriceMatrix {
    assets: Vec<AssetId>,
    timestamps: Vec<i64>,
    period_seconds: u64,
    prices: Vec<f64>,  // assets x periods, row-major; NaN = absent
    volumes: Vec<f64>, // assets x periods, row-major; NaN = absent
}

impl GlobalPriceMatrix {
    /// Build a matrix from raw parts, enforcing the structural invariants.
    ///
    /// The riskless row (row 0) is overwritten with exact 1.0 regardless of
    /// the input values. Prices must be positive or NaN (absent); volumes
    /// must be nonnegative or NaN.
    pub fn from_parts(
        assets: Vec<AssetId>,
        timestamps: Vec<i64>,
        period_seconds: u64,
        mut prices: Vec<f64>,
        mut volumes: Vec<f64>,
    ) -> Result<Self, MarketError> {
        let m = assets.len();
        let n = timestamps.len();
        if m < 1 || n < 1 {
            return Err(MarketError::Dimension("matrix needs at least one asset and one period".into()));
        }
        if period_seconds == 0 {
            return Err(MarketError::Parameter("period_seconds must be positive".into()));
        }
        if prices.len() != m * n || volumes.len() != m * n {
            return Err(MarketError::Dimension(format!(
                "grid size {}x{} does not match prices ({}) / volumes ({})",
                m,
                n,
                prices.len(),
                volumes.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for a in &assets {
            if !seen.insert(a.as_str()) {
                return Err(MarketError::Parameter(format!("duplicate asset {a}")));
            }
        }
        for pair in timestamps.windows(2) {
            if pair[1] - pair[0] != period_seconds as i64 {
                return Err(MarketError::Lattice(format!(
                    "timestamps {} -> {} are not spaced by {}",
                    pair[0], pair[1], period_seconds
                )));
            }
        }
        for (i, p) in prices.iter().enumerate() {
            if !p.is_nan() && (!p.is_finite() || *p <= 0.0) {
                return Err(MarketError::Parameter(format!(
                    "price {} at flat index {} is not positive",
                    p, i
                )));
            }
        }
        for (i, v) in volumes.iter().enumerate() {
            if !v.is_nan() && (!v.is_finite() || *v < 0.0) {
                return Err(MarketError::Parameter(format!(
                    "volume {} at flat index {} is negative",
                    v, i
                )));
            }
        }
        // Riskless asset trades 1:1 with itself by definition.
        for t in 0..n {
            prices[t] = 1.0;
            if volumes[t].is_nan() {
                volumes[t] = 0.0;
            }
        }
        Ok(Self { assets, timestamps, period_seconds, prices, volumes })
    }

    pub fn asset_count(&self) -> usize {
        self.assets.len()
    }

    pub fn period_count(&self) -> usize {
        self.timestamps.len()
    }

    pub fn assets(&self) -> &[AssetId] {
        &self.assets
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn period_seconds(&self) -> u64 {
        self.period_seconds
    }

    pub fn price(&self, asset: usize, period: usize) -> f64 {
        self.prices[asset * self.period_count() + period]
    }

    pub fn volume(&self, asset: usize, period: usize) -> f64 {
        self.volumes[asset * self.period_count() + period]
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// True when no cell is absent.
    pub fn is_filled(&self) -> bool {
        self.prices.iter().all(|p| !p.is_nan()) && self.volumes.iter().all(|v| !v.is_nan())
    }

    fn asset_index(&self, asset: &AssetId) -> Option<usize> {
        self.assets.iter().position(|a| a == asset)
    }

    /// Rank assets by mean volume and return the tradable set:
    /// the riskless asset first, then the `count - 1` largest mean volumes
    /// over the `lookback_days` window ending at `anchor_period` (exclusive).
    ///
    /// Only data strictly before `anchor_period` enters the ranking, so the
    /// selection cannot leak information from the evaluation span. Equal
    /// means rank by ascending symbol. Absent volume cells count as zero.
    pub fn select_assets(
        &self,
        count: usize,
        anchor_period: usize,
        lookback_days: usize,
    ) -> Result<Vec<AssetId>, MarketError> {
        if count < 1 {
            return Err(MarketError::Parameter("count must be at least 1".into()));
        }
        let lookback = (lookback_days as u64 * SECONDS_PER_DAY / self.period_seconds) as usize;
        if lookback == 0 {
            return Err(MarketError::Parameter(format!(
                "lookback of {lookback_days} days is shorter than one trading period"
            )));
        }
        if anchor_period > self.period_count() {
            return Err(MarketError::Range(format!(
                "anchor period {} beyond {} periods",
                anchor_period,
                self.period_count()
            )));
        }
        if anchor_period < lookback {
            return Err(MarketError::Range(format!(
                "anchor period {anchor_period} leaves fewer than {lookback} periods of volume history"
            )));
        }
        let window = anchor_period - lookback..anchor_period;
        let mut ranked: Vec<(f64, &AssetId)> = self
            .assets
            .iter()
            .enumerate()
            .skip(1) // the riskless asset is always included, never ranked
            .map(|(i, a)| {
                let sum: f64 = window
                    .clone()
                    .map(|t| {
                        let v = self.volume(i, t);
                        if v.is_nan() {
                            0.0
                        } else {
                            v
                        }
                    })
                    .sum();
                (sum / lookback as f64, a)
            })
            .collect();
        let with_volume = ranked.iter().filter(|(mean, _)| *mean > 0.0).count();
        if count - 1 > with_volume {
            return Err(MarketError::Range(format!(
                "requested {} assets but only {} traded any volume in the lookback",
                count,
                with_volume + 1
            )));
        }
        ranked.sort_by(|(va, aa), (vb, ab)| {
            vb.partial_cmp(va)
                .expect("volume means are finite")
                .then_with(|| aa.as_str().cmp(ab.as_str()))
        });
        let mut selected = Vec::with_capacity(count);
        selected.push(self.assets[0].clone());
        selected.extend(ranked.iter().take(count - 1).map(|(_, a)| (*a).clone()));
        Ok(selected)
    }

    /// New matrix containing only the given assets, in the given order.
    /// The first requested asset must be the riskless one.
    pub fn restrict(&self, assets: &[AssetId]) -> Result<Self, MarketError> {
        if assets.is_empty() {
            return Err(MarketError::Parameter("cannot restrict to zero assets".into()));
        }
        if assets[0] != self.assets[0] {
            return Err(MarketError::Parameter(format!(
                "restriction must keep the riskless asset {} first",
                self.assets[0]
            )));
        }
        let n = self.period_count();
        let mut prices = Vec::with_capacity(assets.len() * n);
        let mut volumes = Vec::with_capacity(assets.len() * n);
        for asset in assets {
            let i = self
                .asset_index(asset)
                .ok_or_else(|| MarketError::Parameter(format!("unknown asset {asset}")))?;
            prices.extend_from_slice(&self.prices[i * n..(i + 1) * n]);
            volumes.extend_from_slice(&self.volumes[i * n..(i + 1) * n]);
        }
        Self::from_parts(
            assets.to_vec(),
            self.timestamps.clone(),
            self.period_seconds,
            prices,
            volumes,
        )
    }

    /// New matrix covering only the given period range.
    pub fn slice_periods(&self, range: PeriodRange) -> Result<Self, MarketError> {
        if range.is_empty() || range.end > self.period_count() {
            return Err(MarketError::Range(format!(
                "period slice {}..{} invalid for {} periods",
                range.start,
                range.end,
                self.period_count()
            )));
        }
        let n = self.period_count();
        let mut prices = Vec::with_capacity(self.assets.len() * range.len());
        let mut volumes = Vec::with_capacity(self.assets.len() * range.len());
        for i in 0..self.assets.len() {
            prices.extend_from_slice(&self.prices[i * n + range.start..i * n + range.end]);
            volumes.extend_from_slice(&self.volumes[i * n + range.start..i * n + range.end]);
        }
        Self::from_parts(
            self.assets.clone(),
            self.timestamps[range.start..range.end].to_vec(),
            self.period_seconds,
            prices,
            volumes,
        )
    }

    /// Repair absent history.
    ///
    /// Cells before an asset's first observation are filled with a price
    /// series that decreases forward in time at `decay_rate` per period and
    /// lands on the first real price: the cell `k` steps before the first
    /// price `p0` becomes `p0 / (1 - decay_rate)^k`. Holding such an asset
    /// loses `decay_rate` per period, which keeps the policy away from
    /// not-yet-launched assets. Gaps after the first observation carry the
    /// last real price forward. Absent volumes become zero.
    pub fn fill_missing_history(&self, decay_rate: f64) -> Result<Self, MarketError> {
        if !(decay_rate > 0.0 && decay_rate < 0.05) {
            return Err(MarketError::Parameter(format!(
                "decay rate {decay_rate} outside (0, 0.05)"
            )));
        }
        let n = self.period_count();
        let mut prices = self.prices.clone();
        let mut volumes = self.volumes.clone();
        for (i, asset) in self.assets.iter().enumerate() {
            let row = &mut prices[i * n..(i + 1) * n];
            let first = row
                .iter()
                .position(|p| !p.is_nan())
                .ok_or_else(|| MarketError::UnusableAsset(asset.as_str().to_string()))?;
            let p0 = row[first];
            for t in 0..first {
                let k = (first - t) as i32;
                row[t] = p0 / (1.0 - decay_rate).powi(k);
            }
            let mut last = p0;
            for cell in row.iter_mut().skip(first) {
                if cell.is_nan() {
                    *cell = last;
                } else {
                    last = *cell;
                }
            }
        }
        for v in &mut volumes {
            if v.is_nan() {
                *v = 0.0;
            }
        }
        Self::from_parts(
            self.assets.clone(),
            self.timestamps.clone(),
            self.period_seconds,
            prices,
            volumes,
        )
    }

    /// Partition the period axis by cumulative ratio, flooring boundary
    /// indices; leftover periods land in the test range so nothing extra
    /// ever leaks into training. Each range must be able to host a full
    /// window of `window_size` periods plus one look-ahead period.
    pub fn split(
        &self,
        ratios: (f64, f64, f64),
        window_size: usize,
    ) -> Result<DatasetSplit, MarketError> {
        let (r1, r2, r3) = ratios;
        if !(r1 > 0.0 && r2 > 0.0 && r3 > 0.0) {
            return Err(MarketError::Parameter("split ratios must be positive".into()));
        }
        let sum = r1 + r2 + r3;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MarketError::Parameter(format!(
                "split ratios sum to {sum}, expected 1"
            )));
        }
        let n = self.period_count();
        let b1 = ratio_floor(n, r1);
        let b2 = ratio_floor(n, r1 + r2);
        let split = DatasetSplit {
            train: PeriodRange::new(0, b1),
            cv: PeriodRange::new(b1, b2),
            test: PeriodRange::new(b2, n),
        };
        for (name, range) in [
            ("train", split.train),
            ("cv", split.cv),
            ("test", split.test),
        ] {
            if range.len() < window_size + 1 {
                return Err(MarketError::Range(format!(
                    "{name} range of {} periods cannot host a window of {window_size} plus look-ahead",
                    range.len()
                )));
            }
        }
        Ok(split)
    }

    /// Normalized window of width `w` whose last column is period `t`.
    pub fn window(&self, t: usize, w: usize) -> Result<PriceWindow, MarketError> {
        if w < 1 {
            return Err(MarketError::Parameter("window width must be positive".into()));
        }
        if t >= self.period_count() || t + 1 < w {
            return Err(MarketError::Range(format!(
                "window of width {w} ending at period {t} out of range"
            )));
        }
        let m = self.asset_count();
        let mut data = vec![0.0; m * w];
        for i in 0..m {
            let current = self.checked_price(i, t)?;
            for j in 0..w {
                let period = t + 1 - w + j;
                data[i * w + j] = self.checked_price(i, period)? / current;
            }
            data[i * w + w - 1] = 1.0;
        }
        Ok(PriceWindow { data, assets: m, width: w, period_index: t })
    }

    /// Price change vector of period `t`: next-period prices over current.
    pub fn price_change_vector(&self, t: usize) -> Result<PriceChangeVector, MarketError> {
        if t + 1 >= self.period_count() {
            return Err(MarketError::Range(format!(
                "no period follows {t}, cannot form a change vector"
            )));
        }
        let mut values = Vec::with_capacity(self.asset_count());
        for i in 0..self.asset_count() {
            values.push(self.checked_price(i, t + 1)? / self.checked_price(i, t)?);
        }
        values[0] = 1.0;
        PriceChangeVector::new(values)
    }

    fn checked_price(&self, asset: usize, period: usize) -> Result<f64, MarketError> {
        let p = self.price(asset, period);
        if p.is_nan() {
            return Err(MarketError::AbsentPrice {
                symbol: self.assets[asset].as_str().to_string(),
                period,
            });
        }
        Ok(p)
    }
}

/// floor(n * ratio), snapping to the nearest integer when the product is
/// within 1e-9 of it so that ratios like 0.7 hit exact boundaries.
fn ratio_floor(n: usize, ratio: f64) -> usize {
    let x = n as f64 * ratio;
    let nearest = x.round();
    if (x - nearest).abs() < 1e-9 {
        nearest as usize
    } else {
        x.floor() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn matrix(
        symbols: &[&str],
        period_seconds: u64,
        prices: Vec<f64>,
        volumes: Vec<f64>,
    ) -> GlobalPriceMatrix {
        let assets: Vec<AssetId> = symbols.iter().map(|s| AssetId::new(*s).unwrap()).collect();
        let n = prices.len() / assets.len();
        let timestamps: Vec<i64> = (0..n).map(|k| (k as u64 * period_seconds) as i64).collect();
        GlobalPriceMatrix::from_parts(assets, timestamps, period_seconds, prices, volumes).unwrap()
    }

    fn constant_volumes(m: usize, n: usize) -> Vec<f64> {
        vec![1.0; m * n]
    }

    #[test]
    fn riskless_row_is_forced_to_one() {
        let g = matrix(
            &["BTC", "ETH"],
            1800,
            vec![2.0, 3.0, 4.0, 0.1, 0.2, 0.3],
            constant_volumes(2, 3),
        );
        assert_eq!(&g.prices()[0..3], &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn from_parts_rejects_bad_lattice_and_dims() {
        let assets = vec![AssetId::new("BTC").unwrap()];
        let err = GlobalPriceMatrix::from_parts(
            assets.clone(),
            vec![0, 1800, 3000],
            1800,
            vec![1.0; 3],
            vec![0.0; 3],
        )
        .unwrap_err();
        assert!(matches!(err, MarketError::Lattice(_)));
        let err = GlobalPriceMatrix::from_parts(assets, vec![0, 1800], 1800, vec![1.0; 3], vec![0.0; 3])
            .unwrap_err();
        assert!(matches!(err, MarketError::Dimension(_)));
    }

    #[test]
    fn window_of_constant_prices_is_all_ones() {
        let mut prices = vec![1.0; 4];
        prices.extend(vec![5.0; 4]); // constant but different level per asset
        let g = matrix(&["BTC", "ETH"], 1800, prices, constant_volumes(2, 4));
        let w = g.window(3, 3).unwrap();
        assert!(w.data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn window_normalizes_by_last_column() {
        // asset 1 prices (2, 4) at periods (t-1, t)
        let g = matrix(
            &["BTC", "ETH"],
            1800,
            vec![1.0, 1.0, 2.0, 4.0],
            constant_volumes(2, 2),
        );
        let w = g.window(1, 2).unwrap();
        assert_eq!(w.get(1, 0), 0.5);
        assert_eq!(w.get(1, 1), 1.0);
        assert_eq!(w.get(0, 0), 1.0);
    }

    #[test]
    fn window_shape_matches_request() {
        let n = 60;
        let mut prices = Vec::new();
        for i in 0..12 {
            for t in 0..n {
                prices.push(1.0 + i as f64 + t as f64 * 0.01);
            }
        }
        let g = matrix(
            &["BTC", "A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K"],
            1800,
            prices,
            constant_volumes(12, n),
        );
        let w = g.window(55, 50).unwrap();
        assert_eq!((w.assets(), w.width()), (12, 50));
        for i in 0..12 {
            assert_eq!(w.get(i, 49), 1.0);
        }
    }

    #[test]
    fn window_out_of_range_errors() {
        let g = matrix(&["BTC"], 1800, vec![1.0; 5], constant_volumes(1, 5));
        assert!(matches!(g.window(1, 3), Err(MarketError::Range(_))));
        assert!(matches!(g.window(9, 3), Err(MarketError::Range(_))));
    }

    #[test]
    fn price_change_vector_divides_consecutive_prices() {
        let g = matrix(
            &["BTC", "ETH"],
            1800,
            vec![1.0, 1.0, 1.0, 2.0],
            constant_volumes(2, 2),
        );
        let y = g.price_change_vector(0).unwrap();
        assert_eq!(y.values(), &[1.0, 2.0]);
        assert!(matches!(g.price_change_vector(1), Err(MarketError::Range(_))));
    }

    #[test]
    fn price_changes_telescope_to_total_growth() {
        let n = 40;
        let mut prices = vec![1.0; n];
        let mut p = 3.0;
        for _ in 0..n {
            prices.push(p);
            p *= 1.013;
        }
        let g = matrix(&["BTC", "ETH"], 1800, prices, constant_volumes(2, n));
        let product: f64 = (0..n - 1)
            .map(|t| g.price_change_vector(t).unwrap().values()[1])
            .product();
        let direct = g.price(1, n - 1) / g.price(1, 0);
        assert!((product / direct - 1.0).abs() < 1e-9, "{product} vs {direct}");
    }

    #[test]
    fn fill_prefix_uses_decay_closed_form() {
        let mut prices = vec![1.0; 8];
        prices.extend([f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN, 1.0, 1.1, 1.2]);
        let g = matrix(&["BTC", "XMR"], 1800, prices, vec![1.0; 16]);
        let filled = g.fill_missing_history(0.01).unwrap();
        // one step before the first real price at period 5
        assert!((filled.price(1, 4) - 1.0 / 0.99).abs() < 1e-12);
        // change factor into the first real price is exactly the decay
        let y = filled.price(1, 5) / filled.price(1, 4);
        assert!((y - 0.99).abs() < 1e-12);
        // k steps back follows p0 / (1-d)^k
        for k in 1..=5usize {
            let expected = 1.0 / 0.99f64.powi(k as i32);
            assert!((filled.price(1, 5 - k) - expected).abs() < 1e-12);
        }
        assert!(filled.is_filled());
    }

    #[test]
    fn fill_leaves_complete_assets_unchanged_and_is_idempotent() {
        let prices = vec![1.0, 1.0, 1.0, 2.0, f64::NAN, 2.2];
        let g = matrix(&["BTC", "ETH"], 1800, prices, vec![1.0; 6]);
        let once = g.fill_missing_history(0.01).unwrap();
        assert_eq!(once.price(1, 0), 2.0);
        assert_eq!(once.price(1, 1), 2.0, "interior gap carries forward");
        assert_eq!(once.price(1, 2), 2.2);
        let twice = once.fill_missing_history(0.01).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn fill_rejects_out_of_range_decay_and_empty_assets() {
        let g = matrix(&["BTC", "ETH"], 1800, vec![1.0, 1.0, 2.0, 2.0], vec![1.0; 4]);
        assert!(matches!(
            g.fill_missing_history(0.06),
            Err(MarketError::Parameter(_))
        ));
        assert!(matches!(
            g.fill_missing_history(0.0),
            Err(MarketError::Parameter(_))
        ));
        let empty = matrix(
            &["BTC", "DOA"],
            1800,
            vec![1.0, 1.0, f64::NAN, f64::NAN],
            vec![1.0; 4],
        );
        assert!(matches!(
            empty.fill_missing_history(0.01),
            Err(MarketError::UnusableAsset(s)) if s == "DOA"
        ));
    }

    #[test]
    fn split_floors_cumulative_boundaries() {
        let n = 17_520;
        let g = matrix(
            &["BTC"],
            1800,
            vec![1.0; n],
            vec![1.0; n],
        );
        let s = g.split((0.7, 0.15, 0.15), 50).unwrap();
        assert_eq!(s.train.len(), 12_264);
        assert_eq!(s.cv.len(), 2_628);
        assert_eq!(s.test.len(), 2_628);
        assert_eq!(s.train.end, s.cv.start);
        assert_eq!(s.cv.end, s.test.start);
        assert_eq!(s.test.end, n);
    }

    #[test]
    fn split_exact_division() {
        let g = matrix(&["BTC"], 1800, vec![1.0; 100], vec![1.0; 100]);
        let s = g.split((0.7, 0.15, 0.15), 10).unwrap();
        assert_eq!((s.train.len(), s.cv.len(), s.test.len()), (70, 15, 15));
    }

    #[test]
    fn split_rejects_bad_ratios_and_short_ranges() {
        let g = matrix(&["BTC"], 1800, vec![1.0; 100], vec![1.0; 100]);
        assert!(matches!(
            g.split((0.5, 0.5, 0.5), 10),
            Err(MarketError::Parameter(_))
        ));
        assert!(matches!(
            g.split((0.7, 0.15, 0.15), 20),
            Err(MarketError::Range(_))
        ));
    }

    #[test]
    fn select_assets_ranks_by_mean_volume() {
        // asset B dominates volume; count=2 keeps riskless + B
        let g = matrix(
            &["BTC", "A", "B"],
            SECONDS_PER_DAY,
            vec![1.0; 9],
            vec![
                0.0, 0.0, 0.0, // BTC
                1.0, 1.0, 1.0, // A
                9.0, 9.0, 9.0, // B
            ],
        );
        let sel = g.select_assets(2, 2, 2).unwrap();
        let names: Vec<&str> = sel.iter().map(|a| a.as_str()).collect();
        assert_eq!(names, vec!["BTC", "B"]);
    }

    #[test]
    fn select_assets_breaks_ties_by_symbol() {
        let g = matrix(
            &["BTC", "ZEC", "ETH"],
            SECONDS_PER_DAY,
            vec![1.0; 9],
            vec![0.0, 0.0, 0.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0],
        );
        let sel = g.select_assets(2, 2, 2).unwrap();
        assert_eq!(sel[1].as_str(), "ETH");
    }

    #[test]
    fn select_assets_uses_only_history_before_anchor() {
        let volumes = vec![
            0.0, 0.0, 0.0, 0.0, //
            1.0, 1.0, 7.0, 7.0, // A: wins only if post-anchor data leaks
            2.0, 2.0, 0.0, 0.0, // B
        ];
        let g = matrix(&["BTC", "A", "B"], SECONDS_PER_DAY, vec![1.0; 12], volumes.clone());
        let sel = g.select_assets(2, 2, 2).unwrap();
        assert_eq!(sel[1].as_str(), "B");

        // mutate everything at or after the anchor: selection must not move
        let mut mutated = volumes;
        for i in 0..3 {
            mutated[i * 4 + 2] = 99.0;
            mutated[i * 4 + 3] = 99.0;
        }
        let g2 = matrix(&["BTC", "A", "B"], SECONDS_PER_DAY, vec![1.0; 12], mutated);
        assert_eq!(g2.select_assets(2, 2, 2).unwrap(), sel);
    }

    #[test]
    fn select_assets_rejects_short_history() {
        let g = matrix(&["BTC", "A"], SECONDS_PER_DAY, vec![1.0; 4], vec![1.0; 4]);
        assert!(matches!(
            g.select_assets(2, 1, 30),
            Err(MarketError::Range(_))
        ));
    }

    #[test]
    fn restrict_reorders_rows() {
        let g = matrix(
            &["BTC", "A", "B"],
            1800,
            vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0],
            vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0],
        );
        let r = g
            .restrict(&[AssetId::new("BTC").unwrap(), AssetId::new("B").unwrap()])
            .unwrap();
        assert_eq!(r.asset_count(), 2);
        assert_eq!(r.price(1, 0), 3.0);
        assert!(g
            .restrict(&[AssetId::new("A").unwrap(), AssetId::new("B").unwrap()])
            .is_err());
    }

    #[test]
    fn slice_periods_takes_a_contiguous_view() {
        let g = matrix(
            &["BTC", "A"],
            1800,
            vec![1.0, 1.0, 1.0, 2.0, 3.0, 4.0],
            vec![1.0; 6],
        );
        let s = g.slice_periods(PeriodRange::new(1, 3)).unwrap();
        assert_eq!(s.period_count(), 2);
        assert_eq!(s.price(1, 0), 3.0);
        assert_eq!(s.timestamps()[0], 1800);
    }
}
