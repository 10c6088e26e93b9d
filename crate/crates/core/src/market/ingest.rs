//! CSV ingestion onto the common timestamp lattice.
//!
//! Expected format, one observation per row with a header:
//!
//! ```text
//! timestamp_unix_seconds,asset_symbol,price_in_quote,volume_in_quote
//! 1451606400,ETH,0.00213,1520.5
//! ```
//!
//! Prices are quoted in the riskless asset named by `quote_asset`. Cells not
//! present in the file stay absent (NaN) for `fill_missing_history` to repair.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use super::{AssetId, GlobalPriceMatrix, MarketError};

const EXPECTED_HEADER: [&str; 4] = [
    "timestamp_unix_seconds",
    "asset_symbol",
    "price_in_quote",
    "volume_in_quote",
];

// Guards against a typo'd timestamp expanding the lattice into the billions.
const MAX_PERIODS: usize = 10_000_000;

struct Row {
    line: usize,
    timestamp: i64,
    symbol: String,
    price: f64,
    volume: f64,
}

/// Read a CSV file into a [`GlobalPriceMatrix`].
///
/// All observed timestamps must fall on a lattice with `period_seconds`
/// spacing; the matrix covers every lattice point between the first and the
/// last observation. The riskless row is forced to 1.0 over the whole span.
pub fn ingest_csv(
    path: impl AsRef<Path>,
    period_seconds: u64,
    quote_asset: &str,
) -> Result<GlobalPriceMatrix, MarketError> {
    if period_seconds == 0 {
        return Err(MarketError::Parameter("period_seconds must be positive".into()));
    }
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| MarketError::Parse { line: 1, message: "empty file".into() })?;
    let header_fields: Vec<&str> = header.split(',').map(str::trim).collect();
    if header_fields != EXPECTED_HEADER {
        return Err(MarketError::Parse {
            line: 1,
            message: format!(
                "header must be \"{}\", got \"{}\"",
                EXPECTED_HEADER.join(","),
                header.trim()
            ),
        });
    }

    let mut rows = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        rows.push(parse_row(line, raw)?);
    }
    if rows.is_empty() {
        return Err(MarketError::Parse { line: 2, message: "no data rows".into() });
    }

    let t0 = rows.iter().map(|r| r.timestamp).min().expect("nonempty");
    let t_last = rows.iter().map(|r| r.timestamp).max().expect("nonempty");
    let period = period_seconds as i64;
    for row in &rows {
        if (row.timestamp - t0).rem_euclid(period) != 0 {
            return Err(MarketError::Lattice(format!(
                "line {}: timestamp {} is not {} seconds from the first observation at {}",
                row.line,
                row.timestamp,
                period_seconds,
                t0
            )));
        }
    }
    let n = ((t_last - t0) / period) as usize + 1;
    if n > MAX_PERIODS {
        return Err(MarketError::Lattice(format!(
            "timestamp span requires {n} periods, above the {MAX_PERIODS} limit"
        )));
    }

    let symbols: BTreeSet<&str> = rows.iter().map(|r| r.symbol.as_str()).collect();
    if !symbols.contains(quote_asset) {
        return Err(MarketError::MissingQuoteAsset(quote_asset.to_string()));
    }
    // Riskless asset first, the rest in symbol order, independent of row order.
    let mut assets = vec![AssetId::new(quote_asset)?];
    assets.extend(
        symbols
            .iter()
            .filter(|s| **s != quote_asset)
            .map(|s| AssetId::new(*s).expect("validated nonempty")),
    );
    let index_of: HashMap<&str, usize> = assets
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i))
        .collect();

    let m = assets.len();
    let mut prices = vec![f64::NAN; m * n];
    let mut volumes = vec![f64::NAN; m * n];
    for row in &rows {
        let i = index_of[row.symbol.as_str()];
        let t = ((row.timestamp - t0) / period) as usize;
        let cell = i * n + t;
        if !prices[cell].is_nan() {
            return Err(MarketError::Conflict {
                symbol: row.symbol.clone(),
                timestamp: row.timestamp,
            });
        }
        prices[cell] = row.price;
        volumes[cell] = row.volume;
    }

    let timestamps: Vec<i64> = (0..n).map(|k| t0 + k as i64 * period).collect();
    GlobalPriceMatrix::from_parts(assets, timestamps, period_seconds, prices, volumes)
}

fn parse_row(line: usize, raw: &str) -> Result<Row, MarketError> {
    let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(MarketError::Parse {
            line,
            message: format!("expected 4 fields, got {}", fields.len()),
        });
    }
    let timestamp: i64 = fields[0].parse().map_err(|_| MarketError::Parse {
        line,
        message: format!("bad timestamp \"{}\"", fields[0]),
    })?;
    if fields[1].is_empty() {
        return Err(MarketError::Parse { line, message: "empty asset symbol".into() });
    }
    let price: f64 = fields[2].parse().map_err(|_| MarketError::Parse {
        line,
        message: format!("bad price \"{}\"", fields[2]),
    })?;
    if !price.is_finite() || price <= 0.0 {
        return Err(MarketError::Parse {
            line,
            message: format!("price {price} must be positive"),
        });
    }
    let volume: f64 = fields[3].parse().map_err(|_| MarketError::Parse {
        line,
        message: format!("bad volume \"{}\"", fields[3]),
    })?;
    if !volume.is_finite() || volume < 0.0 {
        return Err(MarketError::Parse {
            line,
            message: format!("volume {volume} must be nonnegative"),
        });
    }
    Ok(Row { line, timestamp, symbol: fields[1].to_string(), price, volume })
}
