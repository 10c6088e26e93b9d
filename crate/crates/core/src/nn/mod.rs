//! Minimal neural-network kernel: a fixed chain of layers with reverse-mode
//! gradients, enough for a convolutional policy head and its variants.
//!
//! The kernel is deliberately small: valid 1-D convolution over asset
//! channels, dense layers, ReLU, inverted dropout, softmax, an Adam
//! optimizer and L2 regularization, all in 64-bit floats with explicit
//! seeding everywhere.

mod graph;
mod tensor;

pub use graph::{backward, forward, Mode, Tape};
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("tape error: {0}")]
    Tape(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Standard deviation of the normal initializer.
pub const INIT_STD: f64 = 0.1;

/// One layer of the fixed chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Valid (no padding) stride-1 convolution along the time axis, with one
    /// input channel per asset. Weight shape `[out, in, kernel_width]`.
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel_width: usize,
    },
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Relu,
    Softmax,
    /// Inverted dropout: in train mode activations are zeroed with
    /// probability `1 - keep_probability` and survivors are scaled by
    /// `1 / keep_probability`; in eval mode the layer is the identity.
    Dropout {
        keep_probability: f64,
    },
    Flatten,
}

impl LayerSpec {
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match self {
            LayerSpec::Conv1d { in_channels, out_channels, kernel_width } => {
                Some(vec![*out_channels, *in_channels, *kernel_width])
            }
            LayerSpec::Dense { in_dim, out_dim } => Some(vec![*out_dim, *in_dim]),
            _ => None,
        }
    }

    pub fn bias_shape(&self) -> Option<Vec<usize>> {
        match self {
            LayerSpec::Conv1d { out_channels, .. } => Some(vec![*out_channels]),
            LayerSpec::Dense { out_dim, .. } => Some(vec![*out_dim]),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), NnError> {
        match self {
            LayerSpec::Conv1d { in_channels, out_channels, kernel_width } => {
                if *in_channels == 0 || *out_channels == 0 || *kernel_width == 0 {
                    return Err(NnError::Shape("conv1d dimensions must be positive".into()));
                }
            }
            LayerSpec::Dense { in_dim, out_dim } => {
                if *in_dim == 0 || *out_dim == 0 {
                    return Err(NnError::Shape("dense dimensions must be positive".into()));
                }
            }
            LayerSpec::Dropout { keep_probability } => {
                if !(*keep_probability > 0.0 && *keep_probability <= 1.0) {
                    return Err(NnError::Shape(format!(
                        "keep probability {keep_probability} outside (0, 1]"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Walk the chain symbolically and return the output shape for an input
/// shape, rejecting inconsistent chains.
pub fn output_shape(specs: &[LayerSpec], input_shape: &[usize]) -> Result<Vec<usize>, NnError> {
    let mut shape = input_shape.to_vec();
    for (idx, spec) in specs.iter().enumerate() {
        spec.validate()?;
        shape = match spec {
            LayerSpec::Conv1d { in_channels, out_channels, kernel_width } => {
                if shape.len() != 2 || shape[0] != *in_channels {
                    return Err(NnError::Shape(format!(
                        "layer {idx}: conv1d expects [{in_channels}, len], got {shape:?}"
                    )));
                }
                if shape[1] < *kernel_width {
                    return Err(NnError::Shape(format!(
                        "layer {idx}: input length {} shorter than kernel {kernel_width}",
                        shape[1]
                    )));
                }
                vec![*out_channels, shape[1] - kernel_width + 1]
            }
            LayerSpec::Dense { in_dim, out_dim } => {
                if shape.len() != 1 || shape[0] != *in_dim {
                    return Err(NnError::Shape(format!(
                        "layer {idx}: dense expects [{in_dim}], got {shape:?}"
                    )));
                }
                vec![*out_dim]
            }
            LayerSpec::Flatten => vec![shape.iter().product()],
            LayerSpec::Relu | LayerSpec::Softmax | LayerSpec::Dropout { .. } => shape,
        };
    }
    Ok(shape)
}

/// Weights and biases of one layer; empty tensors for parameter-free layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Tensor,
    pub biases: Tensor,
}

impl LayerParams {
    pub fn empty() -> Self {
        Self { weights: Tensor::empty(), biases: Tensor::empty() }
    }

    fn zeros_like(other: &LayerParams) -> Self {
        Self {
            weights: Tensor::zeros(other.weights.shape().to_vec()),
            biases: Tensor::zeros(other.biases.shape().to_vec()),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// All parameters of a layer chain plus the seed they were drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
    pub seed: u64,
}

impl NetworkParams {
    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerParams::parameter_count).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.all_finite() && l.biases.all_finite())
    }

    /// Zero-filled gradient/accumulator buffers with matching shapes.
    pub fn zeros_like(&self) -> Vec<LayerParams> {
        self.layers.iter().map(LayerParams::zeros_like).collect()
    }
}

/// Draw all weights and biases i.i.d. from N(0, 0.1^2), deterministically in
/// `seed`. Layers are initialized in chain order, weights before biases.
pub fn init_params(specs: &[LayerSpec], seed: u64) -> Result<NetworkParams, NnError> {
    for spec in specs {
        spec.validate()?;
    }
    let mut stream = rng::seeded(seed);
    let mut draw = |shape: Vec<usize>| -> Tensor {
        let len = shape.iter().product();
        let data = (0..len)
            .map(|_| INIT_STD * rng::standard_normal(&mut stream))
            .collect();
        Tensor::new(shape, data).expect("shape/data constructed together")
    };
    let layers = specs
        .iter()
        .map(|spec| match (spec.weight_shape(), spec.bias_shape()) {
            (Some(w), Some(b)) => LayerParams { weights: draw(w), biases: draw(b) },
            _ => LayerParams::empty(),
        })
        .collect();
    Ok(NetworkParams { layers, seed })
}

/// L2 penalty `lambda * sum(weights^2)`. Biases are not penalized.
pub fn l2_penalty(params: &NetworkParams, lambda: f64) -> f64 {
    debug_assert!(lambda >= 0.0);
    lambda
        * params
            .layers
            .iter()
            .flat_map(|l| l.weights.data())
            .map(|w| w * w)
            .sum::<f64>()
}

/// Gradient of [`l2_penalty`]: `2 * lambda * w` on weights, zero on biases.
pub fn l2_gradient(params: &NetworkParams, lambda: f64) -> Vec<LayerParams> {
    params
        .layers
        .iter()
        .map(|l| LayerParams {
            weights: Tensor::new(
                l.weights.shape().to_vec(),
                l.weights.data().iter().map(|w| 2.0 * lambda * w).collect(),
            )
            .expect("same shape"),
            biases: Tensor::zeros(l.biases.shape().to_vec()),
        })
        .collect()
}

/// Adam optimizer state: first/second moment accumulators per parameter.
///
/// `apply` performs the standard descent update with bias correction; a
/// caller maximizing an objective passes the negated gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    first_moment: Vec<LayerParams>,
    second_moment: Vec<LayerParams>,
    step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(template: &NetworkParams, learning_rate: f64) -> Self {
        Self {
            first_moment: template.zeros_like(),
            second_moment: template.zeros_like(),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn apply(
        &mut self,
        params: &mut NetworkParams,
        gradients: &[LayerParams],
    ) -> Result<(), NnError> {
        if gradients.len() != params.layers.len() {
            return Err(NnError::Shape(format!(
                "{} gradient layers for {} parameter layers",
                gradients.len(),
                params.layers.len()
            )));
        }
        for g in gradients {
            if !g.weights.all_finite() || !g.biases.all_finite() {
                return Err(NnError::Numeric("non-finite gradient".into()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let correction = (1.0 - self.beta1.powi(t), 1.0 - self.beta2.powi(t));
        for (layer_idx, grad) in gradients.iter().enumerate() {
            let layer = &mut params.layers[layer_idx];
            let m = &mut self.first_moment[layer_idx];
            let v = &mut self.second_moment[layer_idx];
            self::adam_update_tensor(
                &mut layer.weights,
                &grad.weights,
                &mut m.weights,
                &mut v.weights,
                (self.learning_rate, self.beta1, self.beta2, self.epsilon),
                correction,
                layer_idx,
            )?;
            self::adam_update_tensor(
                &mut layer.biases,
                &grad.biases,
                &mut m.biases,
                &mut v.biases,
                (self.learning_rate, self.beta1, self.beta2, self.epsilon),
                correction,
                layer_idx,
            )?;
        }
        Ok(())
    }
}

fn adam_update_tensor(
    target: &mut Tensor,
    grad: &Tensor,
    m: &mut Tensor,
    v: &mut Tensor,
    (lr, beta1, beta2, epsilon): (f64, f64, f64, f64),
    (m_corr, v_corr): (f64, f64),
    layer_idx: usize,
) -> Result<(), NnError> {
    if grad.len() != target.len() {
        return Err(NnError::Shape(format!(
            "gradient length {} vs parameter length {} in layer {layer_idx}",
            grad.len(),
            target.len()
        )));
    }
    let p = target.data_mut();
    let m = m.data_mut();
    let v = v.data_mut();
    for i in 0..p.len() {
        let g = grad.data()[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / m_corr;
        let v_hat = v[i] / v_corr;
        p[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

/// Versioned weight checkpoint: layer chain, flat parameter arrays and the
/// init seed, serialized as JSON. The format is stable; `version` guards
/// against silent drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCheckpoint {
    pub version: u32,
    pub specs: Vec<LayerSpec>,
    pub params: NetworkParams,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl NetworkCheckpoint {
    pub fn new(specs: Vec<LayerSpec>, params: NetworkParams) -> Self {
        Self { version: CHECKPOINT_VERSION, specs, params }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        let ckpt: Self = serde_json::from_str(text)
            .map_err(|e| NnError::Checkpoint(format!("parse failure: {e}")))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        for (spec, layer) in ckpt.specs.iter().zip(&ckpt.params.layers) {
            let w_ok = spec.weight_shape().unwrap_or_else(|| vec![0]) == layer.weights.shape();
            let b_ok = spec.bias_shape().unwrap_or_else(|| vec![0]) == layer.biases.shape();
            if !w_ok || !b_ok {
                return Err(NnError::Checkpoint(format!(
                    "parameters do not match layer spec {spec:?}"
                )));
            }
        }
        if ckpt.specs.len() != ckpt.params.layers.len() {
            return Err(NnError::Checkpoint("layer count mismatch".into()));
        }
        if !ckpt.params.all_finite() {
            return Err(NnError::Checkpoint("non-finite parameters".into()));
        }
        Ok(ckpt)
    }
}
