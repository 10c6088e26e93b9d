//! Forward evaluation and reverse-mode gradients for the layer chain.

use super::{LayerParams, LayerSpec, NetworkParams, NnError, Tensor};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active; masks are drawn from the forward call's seed.
    Train,
    /// Deterministic evaluation; dropout layers are the identity.
    Eval,
}

/// Cached activations from one forward pass, sufficient to run [`backward`].
///
/// `inputs[i]` is the tensor that entered layer `i`; dropout masks store the
/// applied multiplier (0 or 1/keep) so the backward pass reuses the exact
/// mask from the forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Tensor>,
    masks: Vec<Option<Vec<f64>>>,
    output_len: usize,
}

/// Run the chain on `input`. Returns the final activation and the tape.
///
/// In train mode each dropout layer draws its mask from `dropout_seed`
/// combined with the layer position, so one seed fixes the whole pass.
pub fn forward(
    specs: &[LayerSpec],
    params: &NetworkParams,
    input: &Tensor,
    mode: Mode,
    dropout_seed: u64,
) -> Result<(Tensor, Tape), NnError> {
    if specs.len() != params.layers.len() {
        return Err(NnError::Shape(format!(
            "{} specs vs {} parameter layers",
            specs.len(),
            params.layers.len()
        )));
    }
    let mut inputs = Vec::with_capacity(specs.len());
    let mut masks = vec![None; specs.len()];
    let mut current = input.clone();
    for (idx, spec) in specs.iter().enumerate() {
        let layer = &params.layers[idx];
        let next = match spec {
            LayerSpec::Conv1d { in_channels, out_channels, kernel_width } => conv1d_forward(
                &current,
                layer,
                *in_channels,
                *out_channels,
                *kernel_width,
                idx,
            )?,
            LayerSpec::Dense { in_dim, out_dim } => {
                dense_forward(&current, layer, *in_dim, *out_dim, idx)?
            }
            LayerSpec::Relu => relu_forward(&current),
            LayerSpec::Softmax => softmax_forward(&current, idx)?,
            LayerSpec::Dropout { keep_probability } => match mode {
                Mode::Eval => current.clone(),
                Mode::Train => {
                    let mask = draw_mask(
                        current.len(),
                        *keep_probability,
                        rng::derive_seed(dropout_seed, idx as u64),
                    );
                    let data = current
                        .data()
                        .iter()
                        .zip(&mask)
                        .map(|(x, m)| x * m)
                        .collect();
                    masks[idx] = Some(mask);
                    Tensor::new(current.shape().to_vec(), data)?
                }
            },
            LayerSpec::Flatten => current.clone().reshaped(vec![current.len()])?,
        };
        inputs.push(current);
        current = next;
    }
    let tape = Tape { inputs, masks, output_len: current.len() };
    Ok((current, tape))
}

/// Accumulate d(objective)/d(parameter) for every layer by walking the tape
/// backwards from `output_gradient` (= d objective / d network output).
pub fn backward(
    specs: &[LayerSpec],
    params: &NetworkParams,
    tape: &Tape,
    output_gradient: &Tensor,
) -> Result<Vec<LayerParams>, NnError> {
    if tape.inputs.len() != specs.len() || specs.len() != params.layers.len() {
        return Err(NnError::Tape(format!(
            "tape covers {} layers, chain has {}",
            tape.inputs.len(),
            specs.len()
        )));
    }
    if output_gradient.len() != tape.output_len {
        return Err(NnError::Tape(format!(
            "output gradient length {} vs recorded output length {}",
            output_gradient.len(),
            tape.output_len
        )));
    }
    let mut grads: Vec<LayerParams> = params.zeros_like();
    let mut upstream = output_gradient.data().to_vec();
    for idx in (0..specs.len()).rev() {
        let input = &tape.inputs[idx];
        let layer = &params.layers[idx];
        upstream = match &specs[idx] {
            LayerSpec::Conv1d { in_channels, out_channels, kernel_width } => conv1d_backward(
                input,
                layer,
                &upstream,
                &mut grads[idx],
                *in_channels,
                *out_channels,
                *kernel_width,
                idx,
            )?,
            LayerSpec::Dense { in_dim, out_dim } => {
                dense_backward(input, layer, &upstream, &mut grads[idx], *in_dim, *out_dim, idx)?
            }
            LayerSpec::Relu => input
                .data()
                .iter()
                .zip(&upstream)
                .map(|(x, g)| if *x > 0.0 { *g } else { 0.0 })
                .collect(),
            LayerSpec::Softmax => {
                let output = stable_softmax(input.data());
                let weighted: f64 = upstream.iter().zip(&output).map(|(g, y)| g * y).sum();
                output
                    .iter()
                    .zip(&upstream)
                    .map(|(y, g)| y * (g - weighted))
                    .collect()
            }
            LayerSpec::Dropout { .. } => {
                match &tape.masks[idx] {
                    // mask recorded by the forward pass is reused verbatim
                    Some(mask) => upstream.iter().zip(mask).map(|(g, m)| g * m).collect(),
                    None => upstream,
                }
            }
            LayerSpec::Flatten => upstream,
        };
        if upstream.len() != input.len() {
            return Err(NnError::Tape(format!(
                "gradient length {} does not match layer {idx} input {}",
                upstream.len(),
                input.len()
            )));
        }
    }
    Ok(grads)
}

fn conv1d_forward(
    input: &Tensor,
    layer: &LayerParams,
    channels: usize,
    filters: usize,
    kernel: usize,
    idx: usize,
) -> Result<Tensor, NnError> {
    let shape = input.shape();
    if shape.len() != 2 || shape[0] != channels {
        return Err(NnError::Shape(format!(
            "layer {idx}: conv1d expects [{channels}, len], got {shape:?}"
        )));
    }
    let len = shape[1];
    if len < kernel {
        return Err(NnError::Shape(format!(
            "layer {idx}: input length {len} shorter than kernel {kernel}"
        )));
    }
    let out_len = len - kernel + 1;
    let x = input.data();
    let w = layer.weights.data();
    let b = layer.biases.data();
    let mut out = vec![0.0; filters * out_len];
    for f in 0..filters {
        let out_row = &mut out[f * out_len..(f + 1) * out_len];
        out_row.fill(b[f]);
        for c in 0..channels {
            let x_row = &x[c * len..(c + 1) * len];
            let w_row = &w[(f * channels + c) * kernel..(f * channels + c + 1) * kernel];
            for (j, out_v) in out_row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for k in 0..kernel {
                    acc += w_row[k] * x_row[j + k];
                }
                *out_v += acc;
            }
        }
    }
    Tensor::new(vec![filters, out_len], out)
}

#[allow(clippy::too_many_arguments)]
fn conv1d_backward(
    input: &Tensor,
    layer: &LayerParams,
    upstream: &[f64],
    grad: &mut LayerParams,
    channels: usize,
    filters: usize,
    kernel: usize,
    idx: usize,
) -> Result<Vec<f64>, NnError> {
    let len = input.shape()[1];
    let out_len = len - kernel + 1;
    if upstream.len() != filters * out_len {
        return Err(NnError::Tape(format!(
            "layer {idx}: upstream gradient length {} vs conv output {}",
            upstream.len(),
            filters * out_len
        )));
    }
    let x = input.data();
    let w = layer.weights.data();
    let dw = grad.weights.data_mut();
    let db = grad.biases.data_mut();
    let mut dx = vec![0.0; channels * len];
    for f in 0..filters {
        let g_row = &upstream[f * out_len..(f + 1) * out_len];
        db[f] += g_row.iter().sum::<f64>();
        for c in 0..channels {
            let x_row = &x[c * len..(c + 1) * len];
            let w_row = &w[(f * channels + c) * kernel..(f * channels + c + 1) * kernel];
            let dw_row = &mut dw[(f * channels + c) * kernel..(f * channels + c + 1) * kernel];
            let dx_row = &mut dx[c * len..(c + 1) * len];
            for (j, g) in g_row.iter().enumerate() {
                for k in 0..kernel {
                    dw_row[k] += g * x_row[j + k];
                    dx_row[j + k] += g * w_row[k];
                }
            }
        }
    }
    Ok(dx)
}

fn dense_forward(
    input: &Tensor,
    layer: &LayerParams,
    in_dim: usize,
    out_dim: usize,
    idx: usize,
) -> Result<Tensor, NnError> {
    if input.shape() != [in_dim] {
        return Err(NnError::Shape(format!(
            "layer {idx}: dense expects [{in_dim}], got {:?}",
            input.shape()
        )));
    }
    let x = input.data();
    let w = layer.weights.data();
    let b = layer.biases.data();
    let mut out = vec![0.0; out_dim];
    for (r, out_v) in out.iter_mut().enumerate() {
        let row = &w[r * in_dim..(r + 1) * in_dim];
        let mut acc = b[r];
        for (wv, xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        *out_v = acc;
    }
    Tensor::new(vec![out_dim], out)
}

fn dense_backward(
    input: &Tensor,
    layer: &LayerParams,
    upstream: &[f64],
    grad: &mut LayerParams,
    in_dim: usize,
    out_dim: usize,
    idx: usize,
) -> Result<Vec<f64>, NnError> {
    if upstream.len() != out_dim {
        return Err(NnError::Tape(format!(
            "layer {idx}: upstream gradient length {} vs dense output {out_dim}",
            upstream.len()
        )));
    }
    let x = input.data();
    let w = layer.weights.data();
    let dw = grad.weights.data_mut();
    let db = grad.biases.data_mut();
    let mut dx = vec![0.0; in_dim];
    for (r, g) in upstream.iter().enumerate() {
        db[r] += g;
        let w_row = &w[r * in_dim..(r + 1) * in_dim];
        let dw_row = &mut dw[r * in_dim..(r + 1) * in_dim];
        for c in 0..in_dim {
            dw_row[c] += g * x[c];
            dx[c] += g * w_row[c];
        }
    }
    Ok(dx)
}

fn relu_forward(input: &Tensor) -> Tensor {
    Tensor::new(
        input.shape().to_vec(),
        input.data().iter().map(|x| x.max(0.0)).collect(),
    )
    .expect("same shape")
}

fn softmax_forward(input: &Tensor, idx: usize) -> Result<Tensor, NnError> {
    if input.shape().len() != 1 {
        return Err(NnError::Shape(format!(
            "layer {idx}: softmax expects a vector, got {:?}",
            input.shape()
        )));
    }
    Tensor::new(input.shape().to_vec(), stable_softmax(input.data()))
}

fn stable_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn draw_mask(len: usize, keep_probability: f64, seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut stream = rng::seeded(seed);
    let scale = 1.0 / keep_probability;
    (0..len)
        .map(|_| {
            if stream.gen::<f64>() < keep_probability {
                scale
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_params;

    fn toy_specs() -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv1d { in_channels: 3, out_channels: 2, kernel_width: 3 },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense { in_dim: 12, out_dim: 5 },
            LayerSpec::Relu,
            LayerSpec::Dropout { keep_probability: 0.6 },
            LayerSpec::Dense { in_dim: 5, out_dim: 3 },
            LayerSpec::Softmax,
        ]
    }

    fn toy_input() -> Tensor {
        let data: Vec<f64> = (0..24).map(|i| 0.8 + 0.02 * i as f64).collect();
        Tensor::new(vec![3, 8], data).unwrap()
    }

    #[test]
    fn zero_logits_softmax_is_uniform() {
        let specs = vec![LayerSpec::Softmax];
        let params = NetworkParams { layers: vec![LayerParams::empty()], seed: 0 };
        let input = Tensor::zeros(vec![12]);
        let (out, _) = forward(&specs, &params, &input, Mode::Eval, 0).unwrap();
        for &y in out.data() {
            assert!((y - 1.0 / 12.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_output_is_a_distribution() {
        let specs = vec![LayerSpec::Softmax];
        let params = NetworkParams { layers: vec![LayerParams::empty()], seed: 0 };
        let input = Tensor::new(vec![4], vec![3.0, -250.0, 0.5, 100.0]).unwrap();
        let (out, _) = forward(&specs, &params, &input, Mode::Eval, 0).unwrap();
        let sum: f64 = out.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(out.data().iter().all(|&y| y >= 0.0 && y <= 1.0));
    }

    #[test]
    fn conv_output_length_is_valid_convolution() {
        let specs = vec![LayerSpec::Conv1d { in_channels: 12, out_channels: 12, kernel_width: 4 }];
        let params = init_params(&specs, 0).unwrap();
        let input = Tensor::zeros(vec![12, 50]);
        let (out, _) = forward(&specs, &params, &input, Mode::Eval, 0).unwrap();
        assert_eq!(out.shape(), &[12, 47]);
    }

    #[test]
    fn conv_matches_hand_computation() {
        let specs = vec![LayerSpec::Conv1d { in_channels: 1, out_channels: 1, kernel_width: 2 }];
        let mut params = init_params(&specs, 0).unwrap();
        params.layers[0].weights.data_mut().copy_from_slice(&[2.0, -1.0]);
        params.layers[0].biases.data_mut().copy_from_slice(&[0.5]);
        let input = Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, _) = forward(&specs, &params, &input, Mode::Eval, 0).unwrap();
        // out[j] = 0.5 + 2*x[j] - x[j+1]
        assert_eq!(out.data(), &[0.5, 1.5, 2.5]);
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let specs = toy_specs();
        let params = init_params(&specs, 2).unwrap();
        let (a, _) = forward(&specs, &params, &toy_input(), Mode::Eval, 1).unwrap();
        let (b, _) = forward(&specs, &params, &toy_input(), Mode::Eval, 999).unwrap();
        assert_eq!(a, b, "dropout seed must be ignored in eval mode");
    }

    #[test]
    fn train_mode_masks_depend_on_seed_only() {
        let specs = toy_specs();
        let params = init_params(&specs, 2).unwrap();
        let (a, _) = forward(&specs, &params, &toy_input(), Mode::Train, 7).unwrap();
        let (b, _) = forward(&specs, &params, &toy_input(), Mode::Train, 7).unwrap();
        let (c, _) = forward(&specs, &params, &toy_input(), Mode::Train, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn dropout_zeroing_fraction_matches_keep_probability() {
        let keep = 0.3;
        let n = 100_000;
        let mask = draw_mask(n, keep, 42);
        let zeroed = mask.iter().filter(|&&m| m == 0.0).count() as f64 / n as f64;
        // 3 standard errors of a Bernoulli(1 - keep) mean over 1e5 draws
        let tolerance = 3.0 * (keep * (1.0 - keep) / n as f64).sqrt();
        assert!(
            (zeroed - (1.0 - keep)).abs() < tolerance,
            "zeroed fraction {zeroed} vs expected {}",
            1.0 - keep
        );
        // survivors carry inverted scaling
        assert!(mask.iter().all(|&m| m == 0.0 || (m - 1.0 / keep).abs() < 1e-15));
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradients() {
        let specs = toy_specs();
        let params = init_params(&specs, 3).unwrap();
        let (out, tape) = forward(&specs, &params, &toy_input(), Mode::Train, 5).unwrap();
        let zero = Tensor::zeros(out.shape().to_vec());
        let grads = backward(&specs, &params, &tape, &zero).unwrap();
        for layer in &grads {
            assert!(layer.weights.data().iter().all(|&g| g == 0.0));
            assert!(layer.biases.data().iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn backward_rejects_mismatched_tape() {
        let specs = toy_specs();
        let params = init_params(&specs, 3).unwrap();
        let (_, tape) = forward(&specs, &params, &toy_input(), Mode::Eval, 0).unwrap();
        let bad_grad = Tensor::zeros(vec![7]);
        assert!(matches!(
            backward(&specs, &params, &tape, &bad_grad),
            Err(NnError::Tape(_))
        ));
        let short_specs = &specs[..4];
        let good_grad = Tensor::zeros(vec![3]);
        assert!(matches!(
            backward(short_specs, &params, &tape, &good_grad),
            Err(NnError::Tape(_)) | Err(NnError::Shape(_))
        ));
    }

    /// Central finite differences on a scalar objective sum(out * direction)
    /// for a toy 3-asset network; the analytic reverse-mode gradients must
    /// agree to the tolerance used throughout the crate.
    #[test]
    fn gradients_match_finite_differences() {
        let specs = toy_specs();
        let params = init_params(&specs, 4).unwrap();
        let input = toy_input();
        let direction = [0.3, -1.0, 0.7];
        let dropout_seed = 11; // fixed mask, so the objective is differentiable

        let objective = |p: &NetworkParams| -> f64 {
            let (out, _) = forward(&specs, p, &input, Mode::Train, dropout_seed).unwrap();
            out.data().iter().zip(&direction).map(|(y, d)| y * d).sum()
        };

        let (out, tape) = forward(&specs, &params, &input, Mode::Train, dropout_seed).unwrap();
        let grad_out = Tensor::new(out.shape().to_vec(), direction.to_vec()).unwrap();
        let analytic = backward(&specs, &params, &tape, &grad_out).unwrap();

        let h = 1e-4;
        let mut checked = 0usize;
        let mut max_rel = 0.0f64;
        for layer_idx in 0..specs.len() {
            for which in 0..2 {
                let len = if which == 0 {
                    params.layers[layer_idx].weights.len()
                } else {
                    params.layers[layer_idx].biases.len()
                };
                for i in 0..len {
                    let mut plus = params.clone();
                    let mut minus = params.clone();
                    {
                        let (p, m) = if which == 0 {
                            (
                                &mut plus.layers[layer_idx].weights,
                                &mut minus.layers[layer_idx].weights,
                            )
                        } else {
                            (
                                &mut plus.layers[layer_idx].biases,
                                &mut minus.layers[layer_idx].biases,
                            )
                        };
                        p.data_mut()[i] += h;
                        m.data_mut()[i] -= h;
                    }
                    let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                    let ad = if which == 0 {
                        analytic[layer_idx].weights.data()[i]
                    } else {
                        analytic[layer_idx].biases.data()[i]
                    };
                    let rel = (ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-6);
                    max_rel = max_rel.max(rel);
                    checked += 1;
                }
            }
        }
        assert!(checked > 50);
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
    }
}
