//! Central-difference gradient check. The numeric side runs through a
//! separate, per-sample f64 implementation of the forward pass so it shares
//! no code with the batched f32 kernels it checks.

use super::network::Network;
use super::spec::LayerSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Upper bound on checked parameters; each costs two forward passes.
pub const MAX_CHECK_PARAMS: usize = 10_000;

/// Gradients smaller than this are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCheck {
    pub layer: usize,
    pub kind: &'static str,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub layers: Vec<LayerCheck>,
    pub epsilon: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() <= self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

type Params64 = Vec<Option<(Vec<f64>, Vec<f64>)>>;

fn params_f64(net: &Network) -> Params64 {
    net.all_params()
        .iter()
        .map(|p| {
            p.as_ref().map(|p| {
                (
                    p.weights
                        .weights()
                        .data()
                        .iter()
                        .map(|&v| v as f64)
                        .collect(),
                    p.bias.iter().map(|&v| v as f64).collect(),
                )
            })
        })
        .collect()
}

/// Mean cross-entropy evaluated one sample at a time in f64.
pub fn reference_loss(
    net: &Network,
    params: &[Option<(Vec<f64>, Vec<f64>)>],
    input: &Tensor,
    labels: &[usize],
) -> f64 {
    let per_sample = input.row_len();
    let mut total = 0.0;
    for (b, &y) in labels.iter().enumerate() {
        let x: Vec<f64> = input.data()[b * per_sample..(b + 1) * per_sample]
            .iter()
            .map(|&v| v as f64)
            .collect();
        let logits = reference_forward(net, params, x);
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln() + m;
        total += lse - logits[y];
    }
    total / labels.len() as f64
}

/// Single-sample f64 forward pass; returns the logits.
pub fn reference_forward(
    net: &Network,
    params: &[Option<(Vec<f64>, Vec<f64>)>],
    mut x: Vec<f64>,
) -> Vec<f64> {
    let shapes = net.shapes();
    for (i, layer) in net.spec().layers.iter().enumerate() {
        let inp = &shapes[i];
        x = match *layer {
            LayerSpec::Dense { inputs, outputs } => {
                let (w, b) = params[i].as_ref().expect("dense params");
                (0..outputs)
                    .map(|o| b[o] + (0..inputs).map(|j| w[o * inputs + j] * x[j]).sum::<f64>())
                    .collect()
            }
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let (w, b) = params[i].as_ref().expect("conv params");
                let (h, wd) = (inp[1] as isize, inp[2] as isize);
                let out = &shapes[i + 1];
                let mut y = Vec::with_capacity(out.iter().product());
                for o in 0..out_channels {
                    for oy in 0..out[1] {
                        for ox in 0..out[2] {
                            let mut acc = b[o];
                            for c in 0..in_channels {
                                for ky in 0..kernel {
                                    for kx in 0..kernel {
                                        let iy = (oy * stride + ky) as isize - padding as isize;
                                        let ix = (ox * stride + kx) as isize - padding as isize;
                                        if iy < 0 || ix < 0 || iy >= h || ix >= wd {
                                            continue;
                                        }
                                        let xv =
                                            x[(c * inp[1] + iy as usize) * inp[2] + ix as usize];
                                        acc += w
                                            [((o * in_channels + c) * kernel + ky) * kernel + kx]
                                            * xv;
                                    }
                                }
                            }
                            y.push(acc);
                        }
                    }
                }
                y
            }
            LayerSpec::Relu => x.into_iter().map(|v| v.max(0.0)).collect(),
            LayerSpec::Maxpool { size } => {
                let out = &shapes[i + 1];
                let mut y = Vec::with_capacity(out.iter().product());
                for c in 0..out[0] {
                    for oy in 0..out[1] {
                        for ox in 0..out[2] {
                            let mut m = f64::NEG_INFINITY;
                            for dy in 0..size {
                                for dx in 0..size {
                                    m = m.max(
                                        x[(c * inp[1] + oy * size + dy) * inp[2] + ox * size + dx],
                                    );
                                }
                            }
                            y.push(m);
                        }
                    }
                }
                y
            }
            LayerSpec::Flatten | LayerSpec::SoftmaxCrossEntropy => x,
        };
    }
    x
}

/// Compare analytic gradients against central differences on every
/// unmasked weight and every bias.
pub fn finite_difference_check(
    net: &Network,
    input: &Tensor,
    labels: &[usize],
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let checked_total: usize = net
        .all_params()
        .iter()
        .flatten()
        .map(|p| p.weights.mask_nnz() + p.bias.len())
        .sum();
    if checked_total > MAX_CHECK_PARAMS {
        return Err(Error::invalid(format!(
            "{checked_total} parameters exceed the gradient-check limit of {MAX_CHECK_PARAMS}"
        )));
    }
    let cache = net.forward(input)?;
    let (_, grads) = net.backward(&cache, labels)?;
    let mut params = params_f64(net);
    let mut layers = Vec::new();

    for i in net.trainable_layers() {
        let p = net.params(i).expect("trainable");
        let g = grads.layers[i].as_ref().expect("trainable gradient");
        let mut worst = 0.0f64;
        let mut checked = 0;
        let mask = p.weights.mask().to_vec();
        for (idx, &m) in mask.iter().enumerate() {
            if m == 0 {
                continue;
            }
            let numeric = central_difference(
                net,
                &mut params,
                input,
                labels,
                epsilon,
                i,
                Slot::Weight(idx),
            );
            worst = worst.max(relative_error(g.weights.data()[idx] as f64, numeric));
            checked += 1;
        }
        for idx in 0..p.bias.len() {
            let numeric =
                central_difference(net, &mut params, input, labels, epsilon, i, Slot::Bias(idx));
            worst = worst.max(relative_error(g.bias[idx] as f64, numeric));
            checked += 1;
        }
        layers.push(LayerCheck {
            layer: i,
            kind: net.spec().layers[i].kind(),
            checked,
            max_rel_error: worst,
        });
    }
    Ok(GradCheckReport {
        layers,
        epsilon,
        tolerance,
    })
}

#[derive(Clone, Copy)]
enum Slot {
    Weight(usize),
    Bias(usize),
}

fn central_difference(
    net: &Network,
    params: &mut Params64,
    input: &Tensor,
    labels: &[usize],
    eps: f64,
    layer: usize,
    slot: Slot,
) -> f64 {
    let original = {
        let (w, b) = params[layer].as_ref().expect("trainable");
        match slot {
            Slot::Weight(i) => w[i],
            Slot::Bias(i) => b[i],
        }
    };
    set(params, layer, slot, original + eps);
    let plus = reference_loss(net, params, input, labels);
    set(params, layer, slot, original - eps);
    let minus = reference_loss(net, params, input, labels);
    set(params, layer, slot, original);
    (plus - minus) / (2.0 * eps)
}

fn set(params: &mut Params64, layer: usize, slot: Slot, value: f64) {
    let (w, b) = params[layer].as_mut().expect("trainable");
    match slot {
        Slot::Weight(i) => w[i] = value,
        Slot::Bias(i) => b[i] = value,
    }
}
