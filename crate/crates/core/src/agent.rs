//! The convolutional policy agent: topology assembly, the average-log-return
//! reward, mini-batch training by direct gradient ascent, and model selection
//! across initialization seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{DatasetSplit, GlobalPriceMatrix, MarketError, PeriodRange, PriceChangeVector, PriceWindow};
use crate::nn::{self, AdamState, LayerParams, LayerSpec, Mode, NetworkCheckpoint, NetworkParams, NnError, Tensor};
use crate::policy::{Policy, PolicyError};
use crate::portfolio::{PortfolioError, PortfolioVector};
use crate::rng;

/// Training aborts when the batch reward leaves this band; rewards are mean
/// log returns, so anything near it means the optimization blew up.
pub const DIVERGENCE_REWARD_BOUND: f64 = 1e3;

const PARAM_CHECK_INTERVAL: usize = 200;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("training diverged at step {step}")]
    Diverged { step: usize },
    #[error("every seed failed: {0}")]
    AllSeedsFailed(String),
}

/// Hyperparameters of the policy network and its training run.
///
/// `paper(m)` carries the published defaults; `desk(m)` is a small-scale
/// preset (fewer steps, larger learning rate, narrow topology) for tests and
/// quick experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Asset count, including the riskless asset.
    pub assets: usize,
    pub window_size: usize,
    pub conv_filters: usize,
    pub kernel_width: usize,
    pub dense_units: usize,
    pub keep_probability: f64,
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    pub seeds: Vec<u64>,
}

impl AgentConfig {
    pub fn paper(assets: usize) -> Self {
        Self {
            assets,
            window_size: 50,
            conv_filters: 12,
            kernel_width: 4,
            dense_units: 500,
            keep_probability: 0.3,
            l2_lambda: 1e-8,
            learning_rate: 1e-5,
            batch_size: 50,
            total_steps: 900_000,
            seeds: (0..8).collect(),
        }
    }

    pub fn desk(assets: usize) -> Self {
        Self {
            assets,
            window_size: 20,
            conv_filters: 4,
            kernel_width: 3,
            dense_units: 32,
            keep_probability: 0.3,
            l2_lambda: 1e-8,
            learning_rate: 1e-3,
            batch_size: 50,
            total_steps: 20_000,
            seeds: vec![0, 1, 2],
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let positive = [
            ("assets", self.assets),
            ("window_size", self.window_size),
            ("conv_filters", self.conv_filters),
            ("kernel_width", self.kernel_width),
            ("dense_units", self.dense_units),
            ("batch_size", self.batch_size),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(AgentError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.keep_probability > 0.0 && self.keep_probability <= 1.0) {
            return Err(AgentError::Config(format!(
                "keep probability {} outside (0, 1]",
                self.keep_probability
            )));
        }
        if self.l2_lambda < 0.0 {
            return Err(AgentError::Config("l2_lambda must be nonnegative".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(AgentError::Config("learning rate must be positive".into()));
        }
        if self.window_size <= self.kernel_width {
            return Err(AgentError::Config(format!(
                "window size {} must exceed kernel width {}",
                self.window_size, self.kernel_width
            )));
        }
        Ok(())
    }
}

/// The layer chain of the policy network: one full-height convolution over
/// the window, a dense hidden layer with dropout on its output, and a
/// softmax head emitting the portfolio weights.
pub fn build_topology(config: &AgentConfig) -> Result<Vec<LayerSpec>, AgentError> {
    config.validate()?;
    let conv_out_len = config.window_size - config.kernel_width + 1;
    Ok(vec![
        LayerSpec::Conv1d {
            in_channels: config.assets,
            out_channels: config.conv_filters,
            kernel_width: config.kernel_width,
        },
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::Dense {
            in_dim: config.conv_filters * conv_out_len,
            out_dim: config.dense_units,
        },
        LayerSpec::Relu,
        LayerSpec::Dropout { keep_probability: config.keep_probability },
        LayerSpec::Dense { in_dim: config.dense_units, out_dim: config.assets },
        LayerSpec::Softmax,
    ])
}

/// One supervised pair: the window ending at period `t` and the price change
/// covering `t -> t+1`.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub window: PriceWindow,
    pub next_change: PriceChangeVector,
}

/// All samples whose window ends inside `range` and whose label stays inside
/// it too (the label of period `t` is the change into `t + 1`), so no sample
/// ever reads past the range end.
pub fn training_samples(
    data: &GlobalPriceMatrix,
    range: PeriodRange,
    window_size: usize,
) -> Result<Vec<TrainingSample>, AgentError> {
    let first = range.start.max(window_size.saturating_sub(1));
    let mut samples = Vec::new();
    for t in first..range.end.saturating_sub(1) {
        samples.push(TrainingSample {
            window: data.window(t, window_size)?,
            next_change: data.price_change_vector(t)?,
        });
    }
    if samples.is_empty() {
        return Err(AgentError::Config(format!(
            "range {}..{} holds no usable ({window_size}-window, look-ahead) samples",
            range.start, range.end
        )));
    }
    Ok(samples)
}

/// Average logarithmic return of a weight/change trajectory (the training
/// reward): `mean over t of ln(w_t . y_t)`. Transaction costs are excluded
/// by design; the backtester reports them separately.
pub fn batch_reward(
    weights: &[PortfolioVector],
    changes: &[PriceChangeVector],
) -> Result<f64, AgentError> {
    if weights.is_empty() || weights.len() != changes.len() {
        return Err(AgentError::Config(format!(
            "reward needs equal nonempty lists, got {} weights and {} changes",
            weights.len(),
            changes.len()
        )));
    }
    let mut sum = 0.0;
    for (w, y) in weights.iter().zip(changes) {
        let rate = w.dot(y.values());
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(AgentError::Numeric(format!(
                "capital change rate {rate} is not positive"
            )));
        }
        sum += rate.ln();
    }
    Ok(sum / weights.len() as f64)
}

/// A trained policy network with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedAgent {
    pub params: NetworkParams,
    pub config: AgentConfig,
    pub train_range: PeriodRange,
    pub cv_reward: f64,
}

impl TrainedAgent {
    pub fn specs(&self) -> Vec<LayerSpec> {
        build_topology(&self.config).expect("config validated at construction")
    }

    /// Evaluate the policy on one window (dropout off).
    pub fn act(&self, window: &PriceWindow) -> Result<PortfolioVector, AgentError> {
        if window.assets() != self.config.assets || window.width() != self.config.window_size {
            return Err(AgentError::Config(format!(
                "window {}x{} does not match the {}x{} policy input",
                window.assets(),
                window.width(),
                self.config.assets,
                self.config.window_size
            )));
        }
        let input = window_tensor(window);
        let (out, _) = nn::forward(&self.specs(), &self.params, &input, Mode::Eval, 0)?;
        Ok(PortfolioVector::new(out.data().to_vec())?)
    }
}

impl Policy for TrainedAgent {
    fn name(&self) -> &str {
        "agent"
    }

    fn asset_count(&self) -> usize {
        self.config.assets
    }

    fn decide(&mut self, window: &PriceWindow) -> Result<PortfolioVector, PolicyError> {
        self.act(window).map_err(|e| PolicyError::Shape(e.to_string()))
    }
}

fn window_tensor(window: &PriceWindow) -> Tensor {
    Tensor::new(vec![window.assets(), window.width()], window.data().to_vec())
        .expect("window data is rectangular")
}

/// One row of the training log stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRecord {
    pub step: usize,
    pub batch_reward: f64,
    pub l2_penalty: f64,
    /// Reward on the cross-validation range, evaluated at checkpoints only.
    pub cv_reward: Option<f64>,
}

/// Logging cadence for [`train_logged`]; zero disables a stream.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    pub log_every: usize,
    pub cv_every: usize,
}

/// Train one network by Adam ascent on `batch_reward - l2_penalty`.
///
/// Samples are grouped into consecutive mini-batches (time adjacency kept);
/// each epoch shuffles only the order in which batches are visited. Dropout
/// stays active throughout; the returned `cv_reward` is evaluated in eval
/// mode on the cross-validation range.
pub fn train(
    data: &GlobalPriceMatrix,
    split: &DatasetSplit,
    config: &AgentConfig,
    seed: u64,
) -> Result<TrainedAgent, AgentError> {
    train_logged(data, split, config, seed, TrainOptions::default()).map(|(agent, _)| agent)
}

pub fn train_logged(
    data: &GlobalPriceMatrix,
    split: &DatasetSplit,
    config: &AgentConfig,
    seed: u64,
    options: TrainOptions,
) -> Result<(TrainedAgent, Vec<TrainLogRecord>), AgentError> {
    config.validate()?;
    if config.assets != data.asset_count() {
        return Err(AgentError::Config(format!(
            "config expects {} assets, data has {}",
            config.assets,
            data.asset_count()
        )));
    }
    let specs = build_topology(config)?;
    let samples = training_samples(data, split.train, config.window_size)?;
    let batch_count = samples.len() / config.batch_size;
    if batch_count == 0 {
        return Err(AgentError::Config(format!(
            "training range provides {} samples, fewer than one batch of {}",
            samples.len(),
            config.batch_size
        )));
    }

    let mut params = nn::init_params(&specs, seed)?;
    let mut adam = AdamState::new(&params, config.learning_rate);
    let mut shuffle_stream = rng::seeded(rng::derive_seed(seed, u64::from_le_bytes(*b"shuffle\0")));
    let dropout_base = rng::derive_seed(seed, u64::from_le_bytes(*b"dropout\0"));

    let mut log = Vec::new();
    let mut step = 0usize;
    'training: while step < config.total_steps {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..batch_count).collect();
        order.shuffle(&mut shuffle_stream);
        for batch_idx in order {
            if step >= config.total_steps {
                break 'training;
            }
            let batch =
                &samples[batch_idx * config.batch_size..(batch_idx + 1) * config.batch_size];
            let (reward, gradients) =
                batch_step(&specs, &params, batch, config, dropout_base, step).map_err(|e| {
                    match e {
                        // a numeric failure mid-training is a divergence
                        AgentError::Numeric(_) => AgentError::Diverged { step },
                        other => other,
                    }
                })?;
            if !reward.is_finite() || reward.abs() > DIVERGENCE_REWARD_BOUND {
                return Err(AgentError::Diverged { step });
            }
            adam.apply(&mut params, &gradients)
                .map_err(|e| match e {
                    NnError::Numeric(_) => AgentError::Diverged { step },
                    other => AgentError::Nn(other),
                })?;
            step += 1;
            if step % PARAM_CHECK_INTERVAL == 0 && !params.all_finite() {
                return Err(AgentError::Diverged { step });
            }
            let want_log = options.log_every > 0 && step % options.log_every == 0;
            let want_cv = options.cv_every > 0 && step % options.cv_every == 0;
            if want_log || want_cv {
                let cv = if want_cv {
                    Some(evaluate_reward(&specs, &params, data, split.cv, config.window_size)?)
                } else {
                    None
                };
                log.push(TrainLogRecord {
                    step,
                    batch_reward: reward,
                    l2_penalty: nn::l2_penalty(&params, config.l2_lambda),
                    cv_reward: cv,
                });
            }
        }
    }
    if !params.all_finite() {
        return Err(AgentError::Diverged { step });
    }

    let cv_reward = evaluate_reward(&specs, &params, data, split.cv, config.window_size)?;
    let agent = TrainedAgent {
        params,
        config: config.clone(),
        train_range: split.train,
        cv_reward,
    };
    Ok((agent, log))
}

/// Forward/backward over one mini-batch. Returns the batch reward and the
/// descent-direction gradient of `-(reward - l2_penalty)`.
fn batch_step(
    specs: &[LayerSpec],
    params: &NetworkParams,
    batch: &[TrainingSample],
    config: &AgentConfig,
    dropout_base: u64,
    step: usize,
) -> Result<(f64, Vec<LayerParams>), AgentError> {
    let inv_batch = 1.0 / batch.len() as f64;
    let mut ascent = params.zeros_like();
    let mut reward_sum = 0.0;
    for (sample_idx, sample) in batch.iter().enumerate() {
        let input = window_tensor(&sample.window);
        let dropout_seed =
            rng::derive_seed(dropout_base, (step * config.batch_size + sample_idx) as u64);
        let (out, tape) = nn::forward(specs, params, &input, Mode::Train, dropout_seed)?;
        let y = sample.next_change.values();
        let rate: f64 = out.data().iter().zip(y).map(|(w, yv)| w * yv).sum();
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(AgentError::Numeric(format!(
                "capital change rate {rate} at step {step} is not positive"
            )));
        }
        reward_sum += rate.ln();
        // d reward / d output_i = y_i / (batch * (w . y))
        let out_grad = Tensor::new(
            vec![y.len()],
            y.iter().map(|yv| inv_batch * yv / rate).collect(),
        )?;
        let sample_grads = nn::backward(specs, params, &tape, &out_grad)?;
        for (acc, g) in ascent.iter_mut().zip(&sample_grads) {
            add_assign(&mut acc.weights, &g.weights);
            add_assign(&mut acc.biases, &g.biases);
        }
    }
    // descend on -(reward - penalty): flip the reward gradient, add 2*lambda*w
    let mut descent = ascent;
    for (layer_idx, layer) in descent.iter_mut().enumerate() {
        let weights = params.layers[layer_idx].weights.data();
        for (i, g) in layer.weights.data_mut().iter_mut().enumerate() {
            *g = -*g + 2.0 * config.l2_lambda * weights[i];
        }
        for g in layer.biases.data_mut() {
            *g = -*g;
        }
    }
    Ok((reward_sum * inv_batch, descent))
}

fn add_assign(target: &mut Tensor, source: &Tensor) {
    for (t, s) in target.data_mut().iter_mut().zip(source.data()) {
        *t += s;
    }
}

/// Fee-free reward of the greedy policy over a range, in eval mode.
pub fn evaluate_reward(
    specs: &[LayerSpec],
    params: &NetworkParams,
    data: &GlobalPriceMatrix,
    range: PeriodRange,
    window_size: usize,
) -> Result<f64, AgentError> {
    let samples = training_samples(data, range, window_size)?;
    let mut weights = Vec::with_capacity(samples.len());
    let mut changes = Vec::with_capacity(samples.len());
    for sample in &samples {
        let input = window_tensor(&sample.window);
        let (out, _) = nn::forward(specs, params, &input, Mode::Eval, 0)?;
        weights.push(PortfolioVector::new(out.data().to_vec())?);
        changes.push(sample.next_change.clone());
    }
    batch_reward(&weights, &changes)
}

/// Result of one seed's training run inside [`model_select`].
#[derive(Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub outcome: Result<TrainedAgent, AgentError>,
}

impl SeedRun {
    pub fn cv_reward(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|a| a.cv_reward)
    }
}

/// All per-seed runs plus the index of the selected one.
#[derive(Debug)]
pub struct SelectionOutcome {
    pub runs: Vec<SeedRun>,
    best: usize,
}

impl SelectionOutcome {
    pub fn best(&self) -> &TrainedAgent {
        self.runs[self.best]
            .outcome
            .as_ref()
            .expect("selection picked a successful run")
    }

    pub fn best_seed(&self) -> u64 {
        self.runs[self.best].seed
    }
}

/// Train one network per seed and keep the one with the highest reward on
/// the cross-validation range. Runs are independent and executed in
/// parallel; ties break toward the smallest seed, so the outcome does not
/// depend on the order of the seed list.
pub fn model_select(
    data: &GlobalPriceMatrix,
    split: &DatasetSplit,
    config: &AgentConfig,
) -> Result<SelectionOutcome, AgentError> {
    model_select_logged(data, split, config, TrainOptions::default()).map(|(sel, _)| sel)
}

/// Per-seed training log stream, keyed by seed.
pub type SeedLog = (u64, Vec<TrainLogRecord>);

pub fn model_select_logged(
    data: &GlobalPriceMatrix,
    split: &DatasetSplit,
    config: &AgentConfig,
    options: TrainOptions,
) -> Result<(SelectionOutcome, Vec<SeedLog>), AgentError> {
    if config.seeds.is_empty() {
        return Err(AgentError::Config("seed list is empty".into()));
    }
    let mut seeds = config.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let outcomes: Vec<(SeedRun, Vec<TrainLogRecord>)> = seeds
        .par_iter()
        .map(|&seed| match train_logged(data, split, config, seed, options) {
            Ok((agent, log)) => (SeedRun { seed, outcome: Ok(agent) }, log),
            Err(e) => (SeedRun { seed, outcome: Err(e) }, Vec::new()),
        })
        .collect();
    let mut runs = Vec::with_capacity(outcomes.len());
    let mut logs = Vec::with_capacity(outcomes.len());
    for (run, log) in outcomes {
        logs.push((run.seed, log));
        runs.push(run);
    }
    let mut best: Option<usize> = None;
    for (idx, run) in runs.iter().enumerate() {
        if let Some(reward) = run.cv_reward() {
            let better = match best {
                None => true,
                Some(current) => reward > runs[current].cv_reward().expect("successful run"),
            };
            if better {
                best = Some(idx);
            }
        }
    }
    match best {
        Some(best) => Ok((SelectionOutcome { runs, best }, logs)),
        None => {
            let reasons: Vec<String> = runs
                .iter()
                .map(|r| match &r.outcome {
                    Err(e) => format!("seed {}: {e}", r.seed),
                    Ok(_) => unreachable!("successful run would have been selected"),
                })
                .collect();
            Err(AgentError::AllSeedsFailed(reasons.join("; ")))
        }
    }
}

/// Checkpoint of a trained agent: the network checkpoint plus the agent
/// configuration, asset list and selection provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub version: u32,
    pub config: AgentConfig,
    pub seed: u64,
    pub cv_reward: f64,
    pub train_range: PeriodRange,
    pub assets: Vec<String>,
    pub network: NetworkCheckpoint,
}

impl AgentCheckpoint {
    pub fn from_agent(agent: &TrainedAgent, assets: Vec<String>) -> Self {
        Self {
            version: nn::CHECKPOINT_VERSION,
            config: agent.config.clone(),
            seed: agent.params.seed,
            cv_reward: agent.cv_reward,
            train_range: agent.train_range,
            assets,
            network: NetworkCheckpoint::new(agent.specs(), agent.params.clone()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        let ckpt: Self = serde_json::from_str(text)
            .map_err(|e| AgentError::Config(format!("checkpoint parse failure: {e}")))?;
        // revalidate through the network checkpoint's own rules
        let network = NetworkCheckpoint::from_json(
            &serde_json::to_string(&ckpt.network).expect("reserialize"),
        )?;
        let expected = build_topology(&ckpt.config)?;
        if network.specs != expected {
            return Err(AgentError::Config(
                "checkpoint layer chain does not match its agent config".into(),
            ));
        }
        Ok(ckpt)
    }

    pub fn into_agent(self) -> TrainedAgent {
        TrainedAgent {
            params: self.network.params,
            config: self.config,
            train_range: self.train_range,
            cv_reward: self.cv_reward,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{generate_synthetic, SyntheticConfig};

    fn toy_config() -> AgentConfig {
        AgentConfig {
            assets: 3,
            window_size: 8,
            conv_filters: 2,
            kernel_width: 3,
            dense_units: 10,
            keep_probability: 0.5,
            l2_lambda: 1e-8,
            learning_rate: 1e-3,
            batch_size: 10,
            total_steps: 0,
            seeds: vec![0],
        }
    }

    fn dominant_market(n: usize) -> GlobalPriceMatrix {
        let cfg = SyntheticConfig::new(7, 3, n)
            .with_growth(vec![0.0, 0.0, 0.01])
            .with_volatility(vec![0.0]);
        generate_synthetic(&cfg).unwrap()
    }

    #[test]
    fn paper_topology_has_twelve_outputs_and_dense_564() {
        let specs = build_topology(&AgentConfig::paper(12)).unwrap();
        match &specs[3] {
            LayerSpec::Dense { in_dim, out_dim } => {
                assert_eq!(*in_dim, 12 * 47);
                assert_eq!(*in_dim, 564);
                assert_eq!(*out_dim, 500);
            }
            other => panic!("expected dense layer, got {other:?}"),
        }
        match &specs[6] {
            LayerSpec::Dense { out_dim, .. } => assert_eq!(*out_dim, 12),
            other => panic!("expected output dense layer, got {other:?}"),
        }
        assert!(matches!(specs[7], LayerSpec::Softmax));
    }

    #[test]
    fn topology_rejects_window_not_exceeding_kernel() {
        let mut cfg = toy_config();
        cfg.window_size = 3;
        cfg.kernel_width = 3;
        assert!(matches!(build_topology(&cfg), Err(AgentError::Config(_))));
    }

    #[test]
    fn untrained_act_is_a_valid_distribution() {
        let cfg = toy_config();
        let data = dominant_market(80);
        let split = data.split((0.7, 0.15, 0.15), cfg.window_size).unwrap();
        let agent = train(&data, &split, &cfg, 0).unwrap();
        let w = data.window(12, cfg.window_size).unwrap();
        let p = agent.act(&w).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // determinism in eval mode
        assert_eq!(p, agent.act(&w).unwrap());
    }

    #[test]
    fn act_rejects_mismatched_windows() {
        let cfg = toy_config();
        let data = dominant_market(80);
        let split = data.split((0.7, 0.15, 0.15), cfg.window_size).unwrap();
        let agent = train(&data, &split, &cfg, 0).unwrap();
        let wrong = data.window(12, 5).unwrap();
        assert!(matches!(agent.act(&wrong), Err(AgentError::Config(_))));
    }

    #[test]
    fn batch_reward_frozen_values() {
        // all capital in the riskless asset earns exactly zero log return
        let w = vec![PortfolioVector::basis(2, 0)];
        let y = vec![PriceChangeVector::new(vec![1.0, 1.7]).unwrap()];
        assert_eq!(batch_reward(&w, &y).unwrap(), 0.0);

        // half/half split of a doubling asset: ln(1.5)
        let w = vec![PortfolioVector::new(vec![0.5, 0.5]).unwrap()];
        let y = vec![PriceChangeVector::new(vec![1.0, 2.0]).unwrap()];
        let r = batch_reward(&w, &y).unwrap();
        assert!((r - 0.405_465_108_108_164_4).abs() < 1e-15, "{r}");

        // uniform weights, flat prices
        let w = vec![PortfolioVector::uniform(2)];
        let y = vec![PriceChangeVector::new(vec![1.0, 1.0]).unwrap()];
        assert_eq!(batch_reward(&w, &y).unwrap(), 0.0);
    }

    #[test]
    fn batch_reward_rejects_mismatch() {
        let w = vec![PortfolioVector::uniform(2)];
        assert!(batch_reward(&w, &[]).is_err());
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let cfg = toy_config();
        let data = dominant_market(80);
        let split = data.split((0.7, 0.15, 0.15), cfg.window_size).unwrap();
        let agent = train(&data, &split, &cfg, 3).unwrap();
        let specs = build_topology(&cfg).unwrap();
        let init = nn::init_params(&specs, 3).unwrap();
        assert_eq!(agent.params, init);
        let cv = evaluate_reward(&specs, &init, &data, split.cv, cfg.window_size).unwrap();
        assert_eq!(agent.cv_reward, cv);
    }

    #[test]
    fn training_is_deterministic() {
        let mut cfg = toy_config();
        cfg.total_steps = 40;
        let data = dominant_market(80);
        let split = data.split((0.7, 0.15, 0.15), cfg.window_size).unwrap();
        let a = train(&data, &split, &cfg, 9).unwrap();
        let b = train(&data, &split, &cfg, 9).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.cv_reward, b.cv_reward);
    }

    #[test]
    fn training_improves_reward_on_dominant_market() {
        let mut cfg = toy_config();
        cfg.total_steps = 2_000;
        let data = dominant_market(200);
        let split = data.split((0.7, 0.15, 0.15), cfg.window_size).unwrap();
        let specs = build_topology(&cfg).unwrap();
        for seed in [0, 1, 2] {
            let init = nn::init_params(&specs, seed).unwrap();
            let before =
                evaluate_reward(&specs, &init, &data, split.train, cfg.window_size).unwrap();
            let agent = train(&data, &split, &cfg, seed).unwrap();
            let after =
                evaluate_reward(&specs, &agent.params, &data, split.train, cfg.window_size)
                    .unwrap();
            assert!(
                after > before,
                "seed {seed}: training reward fell from {before} to {after}"
            );
        }
    }

    #[test]
    fn trained_agent_loads_on_the_dominant_asset() {
        // one asset gains 1% per period; the ascent direction points at it
        let mut cfg = toy_config();
        cfg.total_steps = 2_000;
        let data = dominant_market(200);
        let split = data.split((0.7, 0.15, 0.15), cfg.window_size).unwrap();
        let agent = train(&data, &split, &cfg, 1).unwrap();
        let samples = training_samples(&data, split.cv, cfg.window_size).unwrap();
        let mean_weight: f64 = samples
            .iter()
            .map(|s| agent.act(&s.window).unwrap().weights()[2])
            .sum::<f64>()
            / samples.len() as f64;
        assert!(mean_weight > 0.8, "mean dominant weight {mean_weight}");
    }

    #[test]
    fn divergent_learning_rate_is_reported_with_step() {
        // a step this size overflows the next forward pass to inf - inf
        let mut cfg = toy_config();
        cfg.total_steps = 500;
        cfg.learning_rate = 1e300;
        let data = dominant_market(80);
        let split = data.split((0.7, 0.15, 0.15), cfg.window_size).unwrap();
        match train(&data, &split, &cfg, 0) {
            Err(AgentError::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn model_select_takes_highest_cv_reward_and_ignores_order() {
        let mut cfg = toy_config();
        cfg.total_steps = 50;
        cfg.seeds = vec![2, 0, 1];
        let data = dominant_market(80);
        let split = data.split((0.7, 0.15, 0.15), cfg.window_size).unwrap();
        let fwd = model_select(&data, &split, &cfg).unwrap();
        cfg.seeds = vec![1, 2, 0];
        let rev = model_select(&data, &split, &cfg).unwrap();
        assert_eq!(fwd.best_seed(), rev.best_seed());
        assert_eq!(fwd.best().params, rev.best().params);
        let expected = fwd
            .runs
            .iter()
            .filter_map(|r| r.cv_reward().map(|c| (r.seed, c)))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert_eq!(fwd.best_seed(), expected.0);
    }

    #[test]
    fn single_seed_selection_is_that_seed() {
        let mut cfg = toy_config();
        cfg.total_steps = 10;
        cfg.seeds = vec![5];
        let data = dominant_market(80);
        let split = data.split((0.7, 0.15, 0.15), cfg.window_size).unwrap();
        let sel = model_select(&data, &split, &cfg).unwrap();
        assert_eq!(sel.best_seed(), 5);
        assert_eq!(sel.runs.len(), 1);
    }

    #[test]
    fn permuting_input_rows_and_parameters_permutes_the_output() {
        // swapping two asset channels while swapping the matching conv input
        // slices and output-head rows must swap the output weights
        let cfg = toy_config();
        let specs = build_topology(&cfg).unwrap();
        let params = nn::init_params(&specs, 6).unwrap();
        let data = dominant_market(40);
        let window = data.window(12, cfg.window_size).unwrap();
        let input = window_tensor(&window);
        let (base, _) = nn::forward(&specs, &params, &input, Mode::Eval, 0).unwrap();

        let (a, b) = (1usize, 2usize);
        let w = cfg.window_size;
        let mut swapped_input = input.clone();
        for j in 0..w {
            let (ia, ib) = (a * w + j, b * w + j);
            swapped_input.data_mut().swap(ia, ib);
        }
        let mut permuted = params.clone();
        // conv weights [out, in, k]: swap input-channel slices a and b
        if let LayerSpec::Conv1d { in_channels, kernel_width, out_channels } = specs[0] {
            let wdata = permuted.layers[0].weights.data_mut();
            for f in 0..out_channels {
                for k in 0..kernel_width {
                    let ia = (f * in_channels + a) * kernel_width + k;
                    let ib = (f * in_channels + b) * kernel_width + k;
                    wdata.swap(ia, ib);
                }
            }
        }
        // output head [m, dense]: swap rows a and b plus their biases
        let dense = cfg.dense_units;
        {
            let head = permuted.layers[6].weights.data_mut();
            for c in 0..dense {
                head.swap(a * dense + c, b * dense + c);
            }
            permuted.layers[6].biases.data_mut().swap(a, b);
        }
        let (swapped, _) = nn::forward(&specs, &permuted, &swapped_input, Mode::Eval, 0).unwrap();
        let expect = [base.data()[0], base.data()[2], base.data()[1]];
        for (got, want) in swapped.data().iter().zip(&expect) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_the_agent() {
        let cfg = toy_config();
        let data = dominant_market(80);
        let split = data.split((0.7, 0.15, 0.15), cfg.window_size).unwrap();
        let agent = train(&data, &split, &cfg, 4).unwrap();
        let ckpt = AgentCheckpoint::from_agent(&agent, vec!["BTC".into(), "SYN01".into(), "SYN02".into()]);
        let json = ckpt.to_json();
        let back = AgentCheckpoint::from_json(&json).unwrap();
        assert_eq!(back, ckpt);
        let restored = back.into_agent();
        assert_eq!(restored.params, agent.params);
        assert_eq!(restored.cv_reward, agent.cv_reward);
    }
}
