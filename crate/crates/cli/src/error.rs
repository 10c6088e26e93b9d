//! CLI error taxonomy and the exit-code contract.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
//! divergence (every seed failed), 5 policy contract violation during a
//! backtest.

use folio_core::agent::AgentError;
use folio_core::backtest::BacktestError;
use folio_core::market::MarketError;
use folio_core::strategies::StrategyError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::Contract(_) => 5,
        }
    }
}

impl From<MarketError> for CliError {
    fn from(e: MarketError) -> Self {
        match e {
            // values that come from configuration, not from the data itself
            MarketError::Parameter(_) | MarketError::MissingQuoteAsset(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Diverged { .. } | AgentError::AllSeedsFailed(_) => {
                CliError::Divergence(e.to_string())
            }
            AgentError::Config(_) => CliError::Config(e.to_string()),
            AgentError::Market(inner) => inner.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<BacktestError> for CliError {
    fn from(e: BacktestError) -> Self {
        match e {
            BacktestError::ContractViolation { .. } => CliError::Contract(e.to_string()),
            BacktestError::Config(_) | BacktestError::InvalidRange(_) | BacktestError::Dimension(_) => {
                CliError::Config(e.to_string())
            }
            BacktestError::Market(inner) => inner.into(),
            BacktestError::Agent(inner) => inner.into(),
            BacktestError::Strategy(inner) => inner.into(),
        }
    }
}

impl From<StrategyError> for CliError {
    fn from(e: StrategyError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Data("x".into()).exit_code(), 3);
        assert_eq!(CliError::Divergence("x".into()).exit_code(), 4);
        assert_eq!(CliError::Contract("x".into()).exit_code(), 5);
    }

    #[test]
    fn market_errors_split_between_config_and_data() {
        let config: CliError = MarketError::MissingQuoteAsset("BTC".into()).into();
        assert_eq!(config.exit_code(), 2);
        let data: CliError = MarketError::Lattice("gap".into()).into();
        assert_eq!(data.exit_code(), 3);
    }
}
