//! Portfolio weight vectors and their validity rules.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the sum-to-one constraint.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PortfolioError {
    #[error("weight vector is empty")]
    Empty,
    #[error("weight {value} at index {index} is negative or not finite")]
    InvalidWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, expected 1 within {WEIGHT_SUM_TOLERANCE}")]
    NotNormalized { sum: f64 },
}

/// Fraction of total capital held in each asset for one trading period.
///
/// Every weight is nonnegative and the weights sum to one, so the vector is a
/// point on the probability simplex. Index 0 is the riskless (quote) asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PortfolioVector(Vec<f64>);

impl PortfolioVector {
    pub fn new(weights: Vec<f64>) -> Result<Self, PortfolioError> {
        if weights.is_empty() {
            return Err(PortfolioError::Empty);
        }
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(PortfolioError::InvalidWeight { index, value });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(PortfolioError::NotNormalized { sum });
        }
        Ok(Self(weights))
    }

    /// Equal weight on every asset.
    pub fn uniform(assets: usize) -> Self {
        assert!(assets > 0, "portfolio needs at least one asset");
        Self(vec![1.0 / assets as f64; assets])
    }

    /// All capital in a single asset.
    pub fn basis(assets: usize, index: usize) -> Self {
        assert!(index < assets, "basis index out of range");
        let mut weights = vec![0.0; assets];
        weights[index] = 1.0;
        Self(weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Dot product with a raw vector, e.g. a price change vector.
    pub fn dot(&self, values: &[f64]) -> f64 {
        assert_eq!(self.0.len(), values.len(), "dimension mismatch in dot");
        self.0.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Total variation against another portfolio: sum of |delta| per asset.
    pub fn turnover(&self, other: &Self) -> f64 {
        assert_eq!(self.0.len(), other.0.len(), "dimension mismatch in turnover");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}
