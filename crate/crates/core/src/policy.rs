//! Common decision interface the backtester drives.
//!
//! Every policy sees the same stream: at period `t` it is offered the
//! normalized price window ending at `t` and must produce a portfolio for
//! the coming period; after the period resolves it observes the realized
//! price change vector. Window-based policies use the former, streaming
//! strategies the latter; neither ever sees data past `t`.

use thiserror::Error;

use crate::market::{PriceChangeVector, PriceWindow};
use crate::portfolio::PortfolioVector;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

pub trait Policy {
    /// Stable identifier used in reports, e.g. "pamr" or "agent".
    fn name(&self) -> &str;

    /// Number of assets the policy allocates over.
    fn asset_count(&self) -> usize;

    /// Portfolio for the period whose window ends at `window.period_index()`.
    fn decide(&mut self, window: &PriceWindow) -> Result<PortfolioVector, PolicyError>;

    /// Realized change of the period just traded. Default: stateless policy.
    fn observe(&mut self, change: &PriceChangeVector) {
        let _ = change;
    }
}
