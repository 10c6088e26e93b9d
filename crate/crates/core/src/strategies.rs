//! Comparison policies: three benchmarks (uniform buy-and-hold, best stock in
//! hindsight, uniform constant rebalancing) and three online
//! portfolio-selection algorithms (universal portfolio, online Newton step,
//! passive-aggressive mean reversion), all behind the common [`Policy`]
//! streaming interface.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{PriceChangeVector, PriceWindow};
use crate::policy::{Policy, PolicyError};
use crate::portfolio::PortfolioVector;
use crate::rng;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("unknown strategy \"{0}\"")]
    Unknown(String),
    #[error("parameter error: {0}")]
    Parameter(String),
}

/// Euclidean projection onto the probability simplex.
///
/// Sort descending, find the largest k with `u_k - (sum_{j<=k} u_j - 1)/k > 0`,
/// subtract that threshold and clamp at zero. Input must be finite.
pub fn project_simplex(v: &[f64]) -> PortfolioVector {
    assert!(!v.is_empty(), "cannot project an empty vector");
    assert!(
        v.iter().all(|x| x.is_finite()),
        "cannot project a non-finite vector"
    );
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            threshold = candidate;
        }
    }
    let weights: Vec<f64> = v.iter().map(|x| (x - threshold).max(0.0)).collect();
    // renormalize away the last few ulps so downstream validation never trips
    let sum: f64 = weights.iter().sum();
    PortfolioVector::new(weights.into_iter().map(|w| w / sum).collect())
        .expect("projection lands on the simplex")
}

/// Index of the asset with the greatest total growth over the span
/// (hindsight benchmark). Ties go to the smallest index.
pub fn best_stock(changes: &[PriceChangeVector]) -> usize {
    assert!(!changes.is_empty(), "best stock needs a nonempty span");
    let m = changes[0].len();
    let mut growth = vec![1.0; m];
    for y in changes {
        for (g, v) in growth.iter_mut().zip(y.values()) {
            *g *= v;
        }
    }
    let mut best = 0;
    for (i, &g) in growth.iter().enumerate() {
        if g > growth[best] {
            best = i;
        }
    }
    best
}

/// Passive-aggressive mean-reversion step (PAMR-0).
///
/// When the realized return `w . y` exceeds `epsilon` the portfolio moves
/// against the direction of the price change (mean reversion), with step
/// size `tau = loss / ||y - mean(y)||^2`, then projects back to the simplex.
pub fn pamr_update(current: &PortfolioVector, y: &[f64], epsilon: f64) -> PortfolioVector {
    debug_assert!(epsilon >= 0.0);
    let loss = (current.dot(y) - epsilon).max(0.0);
    if loss == 0.0 {
        return current.clone();
    }
    let m = y.len() as f64;
    let mean = y.iter().sum::<f64>() / m;
    let centered: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let denom: f64 = centered.iter().map(|c| c * c).sum();
    if denom == 0.0 {
        // constant price change carries no reversion signal
        return current.clone();
    }
    let tau = loss / denom;
    let moved: Vec<f64> = current
        .weights()
        .iter()
        .zip(&centered)
        .map(|(w, c)| w - tau * c)
        .collect();
    project_simplex(&moved)
}

/// Online-Newton-step state and update.
///
/// Accumulates `A = I + sum g g'` and `b = (1 + 1/beta) sum g` with
/// `g = y / (w . y)`, then plays the projection of `delta * A^-1 b` mixed
/// with the uniform portfolio by `eta`. The projection is Euclidean rather
/// than A-norm weighted; see the crate docs for this approximation.
#[derive(Debug, Clone)]
pub struct OnsState {
    matrix: Vec<f64>, // m x m, row-major
    vector: Vec<f64>,
    current: PortfolioVector,
    eta: f64,
    beta: f64,
    delta: f64,
}

impl OnsState {
    pub fn new(assets: usize, eta: f64, beta: f64, delta: f64) -> Result<Self, StrategyError> {
        if beta <= 0.0 {
            return Err(StrategyError::Parameter("ons beta must be positive".into()));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(StrategyError::Parameter("ons eta must sit in [0, 1]".into()));
        }
        let mut matrix = vec![0.0; assets * assets];
        for i in 0..assets {
            matrix[i * assets + i] = 1.0;
        }
        Ok(Self {
            matrix,
            vector: vec![0.0; assets],
            current: PortfolioVector::uniform(assets),
            eta,
            beta,
            delta,
        })
    }

    pub fn current(&self) -> &PortfolioVector {
        &self.current
    }

    pub fn update(&mut self, y: &[f64]) -> Result<(), PolicyError> {
        let m = self.current.len();
        let rate = self.current.dot(y);
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(PolicyError::Numeric(format!(
                "capital change rate {rate} is not positive"
            )));
        }
        let grad: Vec<f64> = y.iter().map(|v| v / rate).collect();
        for i in 0..m {
            for j in 0..m {
                self.matrix[i * m + j] += grad[i] * grad[j];
            }
        }
        let scale = 1.0 + 1.0 / self.beta;
        for (bv, g) in self.vector.iter_mut().zip(&grad) {
            *bv += scale * g;
        }
        let target: Vec<f64> = solve_spd(&self.matrix, &self.vector, m)?
            .into_iter()
            .map(|x| self.delta * x)
            .collect();
        let projected = project_simplex(&target);
        let uniform = 1.0 / m as f64;
        let mixed: Vec<f64> = projected
            .weights()
            .iter()
            .map(|w| (1.0 - self.eta) * w + self.eta * uniform)
            .collect();
        self.current = PortfolioVector::new(mixed)
            .map_err(|e| PolicyError::Numeric(e.to_string()))?;
        Ok(())
    }
}

/// Solve `A x = b` for symmetric positive-definite `A` by Gaussian
/// elimination with partial pivoting. `A` stays untouched.
fn solve_spd(a: &[f64], b: &[f64], m: usize) -> Result<Vec<f64>, PolicyError> {
    let mut lhs = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..m {
        let pivot_row = (col..m)
            .max_by(|&r, &s| {
                lhs[r * m + col]
                    .abs()
                    .partial_cmp(&lhs[s * m + col].abs())
                    .expect("finite matrix")
            })
            .expect("nonempty column");
        if lhs[pivot_row * m + col].abs() < 1e-12 {
            return Err(PolicyError::Numeric("singular Newton system".into()));
        }
        if pivot_row != col {
            for j in 0..m {
                lhs.swap(col * m + j, pivot_row * m + j);
            }
            rhs.swap(col, pivot_row);
        }
        let pivot = lhs[col * m + col];
        for row in col + 1..m {
            let factor = lhs[row * m + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..m {
                lhs[row * m + j] -= factor * lhs[col * m + j];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let mut acc = rhs[row];
        for j in row + 1..m {
            acc -= lhs[row * m + j] * x[j];
        }
        x[row] = acc / lhs[row * m + row];
    }
    Ok(x)
}

/// Uniform buy and hold: invest uniformly once, never rebalance; the played
/// weights drift with cumulative price changes.
#[derive(Debug, Clone)]
pub struct Ubah {
    wealth: Vec<f64>,
}

impl Ubah {
    pub fn new(assets: usize) -> Self {
        Self { wealth: vec![1.0 / assets as f64; assets] }
    }
}

impl Policy for Ubah {
    fn name(&self) -> &str {
        "ubah"
    }

    fn asset_count(&self) -> usize {
        self.wealth.len()
    }

    fn decide(&mut self, _window: &PriceWindow) -> Result<PortfolioVector, PolicyError> {
        let total: f64 = self.wealth.iter().sum();
        PortfolioVector::new(self.wealth.iter().map(|w| w / total).collect())
            .map_err(|e| PolicyError::Numeric(e.to_string()))
    }

    fn observe(&mut self, change: &PriceChangeVector) {
        for (w, y) in self.wealth.iter_mut().zip(change.values()) {
            *w *= y;
        }
    }
}

/// Uniform constant rebalanced portfolio: restore equal weights every period.
#[derive(Debug, Clone)]
pub struct Ucrp {
    assets: usize,
}

impl Ucrp {
    pub fn new(assets: usize) -> Self {
        Self { assets }
    }
}

impl Policy for Ucrp {
    fn name(&self) -> &str {
        "ucrp"
    }

    fn asset_count(&self) -> usize {
        self.assets
    }

    fn decide(&mut self, _window: &PriceWindow) -> Result<PortfolioVector, PolicyError> {
        Ok(PortfolioVector::uniform(self.assets))
    }
}

/// Best single asset of the evaluation span, held throughout. A hindsight
/// benchmark: it must be constructed from the span it will be judged on.
#[derive(Debug, Clone)]
pub struct BestStock {
    target: PortfolioVector,
}

impl BestStock {
    pub fn from_changes(changes: &[PriceChangeVector]) -> Self {
        let index = best_stock(changes);
        Self { target: PortfolioVector::basis(changes[0].len(), index) }
    }

    pub fn target_index(&self) -> usize {
        self.target
            .weights()
            .iter()
            .position(|&w| w == 1.0)
            .expect("basis vector")
    }
}

impl Policy for BestStock {
    fn name(&self) -> &str {
        "beststock"
    }

    fn asset_count(&self) -> usize {
        self.target.len()
    }

    fn decide(&mut self, _window: &PriceWindow) -> Result<PortfolioVector, PolicyError> {
        Ok(self.target.clone())
    }
}

/// Cover's universal portfolio, approximated by Monte Carlo: a fixed set of
/// constant-rebalanced portfolios drawn uniformly from the simplex, averaged
/// with weights proportional to each CRP's running wealth.
#[derive(Debug, Clone)]
pub struct UniversalPortfolio {
    portfolios: Vec<Vec<f64>>,
    wealth: Vec<f64>,
    assets: usize,
}

impl UniversalPortfolio {
    pub fn new(assets: usize, sample_count: usize, seed: u64) -> Result<Self, StrategyError> {
        if sample_count == 0 {
            return Err(StrategyError::Parameter(
                "universal portfolio needs at least one sample".into(),
            ));
        }
        let mut stream = rng::seeded(seed);
        let portfolios: Vec<Vec<f64>> = (0..sample_count)
            .map(|_| rng::uniform_simplex(&mut stream, assets))
            .collect();
        Ok(Self { portfolios, wealth: vec![1.0; sample_count], assets })
    }
}

impl Policy for UniversalPortfolio {
    fn name(&self) -> &str {
        "up"
    }

    fn asset_count(&self) -> usize {
        self.assets
    }

    fn decide(&mut self, _window: &PriceWindow) -> Result<PortfolioVector, PolicyError> {
        let mut mixed = vec![0.0; self.assets];
        for (crp, &wealth) in self.portfolios.iter().zip(&self.wealth) {
            for (m, w) in mixed.iter_mut().zip(crp) {
                *m += wealth * w;
            }
        }
        let total: f64 = mixed.iter().sum();
        PortfolioVector::new(mixed.into_iter().map(|m| m / total).collect())
            .map_err(|e| PolicyError::Numeric(e.to_string()))
    }

    fn observe(&mut self, change: &PriceChangeVector) {
        for (wealth, crp) in self.wealth.iter_mut().zip(&self.portfolios) {
            let rate: f64 = crp.iter().zip(change.values()).map(|(w, y)| w * y).sum();
            *wealth *= rate;
        }
    }
}

/// Online Newton step behind the streaming interface.
#[derive(Debug, Clone)]
pub struct OnlineNewtonStep {
    state: OnsState,
    failed: Option<String>,
}

impl OnlineNewtonStep {
    pub fn new(assets: usize, eta: f64, beta: f64, delta: f64) -> Result<Self, StrategyError> {
        Ok(Self { state: OnsState::new(assets, eta, beta, delta)?, failed: None })
    }
}

impl Policy for OnlineNewtonStep {
    fn name(&self) -> &str {
        "ons"
    }

    fn asset_count(&self) -> usize {
        self.state.current().len()
    }

    fn decide(&mut self, _window: &PriceWindow) -> Result<PortfolioVector, PolicyError> {
        match &self.failed {
            Some(reason) => Err(PolicyError::Numeric(reason.clone())),
            None => Ok(self.state.current().clone()),
        }
    }

    fn observe(&mut self, change: &PriceChangeVector) {
        if self.failed.is_none() {
            if let Err(e) = self.state.update(change.values()) {
                self.failed = Some(e.to_string());
            }
        }
    }
}

/// Passive-aggressive mean reversion behind the streaming interface.
#[derive(Debug, Clone)]
pub struct Pamr {
    current: PortfolioVector,
    epsilon: f64,
}

impl Pamr {
    pub fn new(assets: usize, epsilon: f64) -> Result<Self, StrategyError> {
        if epsilon < 0.0 {
            return Err(StrategyError::Parameter("pamr epsilon must be nonnegative".into()));
        }
        Ok(Self { current: PortfolioVector::uniform(assets), epsilon })
    }
}

impl Policy for Pamr {
    fn name(&self) -> &str {
        "pamr"
    }

    fn asset_count(&self) -> usize {
        self.current.len()
    }

    fn decide(&mut self, _window: &PriceWindow) -> Result<PortfolioVector, PolicyError> {
        Ok(self.current.clone())
    }

    fn observe(&mut self, change: &PriceChangeVector) {
        self.current = pamr_update(&self.current, change.values(), self.epsilon);
    }
}

/// Which comparison strategy to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Ubah,
    BestStock,
    Ucrp,
    Up,
    Ons,
    Pamr,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Ubah,
        StrategyKind::BestStock,
        StrategyKind::Ucrp,
        StrategyKind::Up,
        StrategyKind::Ons,
        StrategyKind::Pamr,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Ubah => "ubah",
            StrategyKind::BestStock => "beststock",
            StrategyKind::Ucrp => "ucrp",
            StrategyKind::Up => "up",
            StrategyKind::Ons => "ons",
            StrategyKind::Pamr => "pamr",
        }
    }
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ubah" => Ok(StrategyKind::Ubah),
            "beststock" | "best_stock" => Ok(StrategyKind::BestStock),
            "ucrp" => Ok(StrategyKind::Ucrp),
            "up" => Ok(StrategyKind::Up),
            "ons" => Ok(StrategyKind::Ons),
            "pamr" => Ok(StrategyKind::Pamr),
            other => Err(StrategyError::Unknown(other.to_string())),
        }
    }
}

/// Tunables for the online strategies; the benchmarks need none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    pub pamr_epsilon: f64,
    pub ons_eta: f64,
    pub ons_beta: f64,
    pub ons_delta: f64,
    pub up_samples: usize,
    pub up_seed: u64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self {
            pamr_epsilon: 0.5,
            ons_eta: 0.0,
            ons_beta: 1.0,
            ons_delta: 0.125,
            up_samples: 100_000,
            up_seed: 0,
        }
    }
}

/// Instantiate a strategy for an `assets`-wide market. Best stock needs the
/// evaluation span's change vectors (it is a hindsight benchmark).
pub fn build_strategy(
    kind: StrategyKind,
    assets: usize,
    params: &StrategyParams,
    hindsight: &[PriceChangeVector],
) -> Result<Box<dyn Policy>, StrategyError> {
    Ok(match kind {
        StrategyKind::Ubah => Box::new(Ubah::new(assets)),
        StrategyKind::Ucrp => Box::new(Ucrp::new(assets)),
        StrategyKind::BestStock => {
            if hindsight.is_empty() {
                return Err(StrategyError::Parameter(
                    "best stock needs the evaluation span's changes".into(),
                ));
            }
            Box::new(BestStock::from_changes(hindsight))
        }
        StrategyKind::Up => {
            Box::new(UniversalPortfolio::new(assets, params.up_samples, params.up_seed)?)
        }
        StrategyKind::Ons => Box::new(OnlineNewtonStep::new(
            assets,
            params.ons_eta,
            params.ons_beta,
            params.ons_delta,
        )?),
        StrategyKind::Pamr => Box::new(Pamr::new(assets, params.pamr_epsilon)?),
    })
}
