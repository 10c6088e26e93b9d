//! Portfolio management research toolkit.
//!
//! The crate trains a small convolutional policy network that maps a
//! normalized price-history window directly to portfolio weights, by gradient
//! ascent on the average logarithmic return. Around the policy sit the pieces
//! needed to evaluate it honestly: market-data ingestion and repair, a seeded
//! synthetic market generator, six classic portfolio-selection baselines, and
//! a commission-aware backtester with the usual risk measures.
//!
//! Determinism is a design rule throughout: every random draw is seeded, so
//! identical inputs and seeds reproduce identical parameters, trades and
//! reports.

pub mod agent;
pub mod backtest;
pub mod market;
pub mod nn;
pub mod policy;
mod portfolio;
pub mod rng;
pub mod strategies;

pub use market::{
    AssetId, DatasetSplit, GlobalPriceMatrix, MarketError, PeriodRange, PriceChangeVector,
    PriceWindow,
};
pub use portfolio::{PortfolioError, PortfolioVector, WEIGHT_SUM_TOLERANCE};
