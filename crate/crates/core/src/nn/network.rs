use rand::Rng as _;

use super::kernels::{self, ConvDims};
use super::spec::{LayerSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};
use crate::tensor::{apply_mask, MaskedTensor, Tensor};

/// Masked weights plus an unmasked bias for one trainable layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: MaskedTensor,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    shapes: Vec<Vec<usize>>,
    params: Vec<Option<LayerParams>>,
}

/// Activations retained by [`Network::forward`]. `activations[0]` is the
/// input and `activations[i + 1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub activations: Vec<Tensor>,
    pool_argmax: Vec<Option<Vec<u32>>>,
}

impl ForwardCache {
    pub fn logits(&self) -> &Tensor {
        self.activations
            .last()
            .expect("cache holds the input at least")
    }

    pub fn batch(&self) -> usize {
        self.activations[0].rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Tensor,
    pub bias: Vec<f32>,
}

/// Per-layer gradients, `None` for layers without parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<LayerGrad>>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .flatten()
            .all(|g| g.weights.is_finite() && g.bias.iter().all(|b| b.is_finite()))
    }
}

/// Glorot-uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(layer: &LayerSpec) -> Option<f32> {
    let (fan_in, fan_out) = match *layer {
        LayerSpec::Dense { inputs, outputs } => (inputs, outputs),
        LayerSpec::Conv {
            in_channels,
            out_channels,
            kernel,
            ..
        } => (
            in_channels * kernel * kernel,
            out_channels * kernel * kernel,
        ),
        _ => return None,
    };
    Some((6.0 / (fan_in + fan_out) as f64).sqrt() as f32)
}

impl Network {
    /// Glorot-uniform weights, zero biases, all-ones masks.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = seeded(seed);
        Self::init_with(spec, &mut rng)
    }

    pub fn init_with(spec: NetworkSpec, rng: &mut Rng) -> Result<Self> {
        let shapes = spec.shapes()?;
        let params = spec
            .layers
            .iter()
            .map(|layer| {
                let dims = layer.weight_dims()?;
                let bound = glorot_bound(layer).expect("trainable layer");
                let len: usize = dims.iter().product();
                let data = (0..len).map(|_| rng.random_range(-bound..=bound)).collect();
                let weights = Tensor::new(dims, data).expect("dims are positive");
                Some(LayerParams {
                    weights: MaskedTensor::dense(weights),
                    bias: vec![0.0; layer.bias_len().expect("trainable layer")],
                })
            })
            .collect();
        Ok(Self {
            spec,
            shapes,
            params,
        })
    }

    /// Assemble from explicit parameters (one entry per layer).
    pub fn from_params(spec: NetworkSpec, params: Vec<Option<LayerParams>>) -> Result<Self> {
        let shapes = spec.shapes()?;
        if params.len() != spec.layers.len() {
            return Err(Error::shape(format!(
                "{} parameter slots for {} layers",
                params.len(),
                spec.layers.len()
            )));
        }
        for (i, (layer, p)) in spec.layers.iter().zip(&params).enumerate() {
            match (layer.weight_dims(), p) {
                (None, None) => {}
                (Some(dims), Some(p)) => {
                    if p.weights.dims() != dims.as_slice() {
                        return Err(Error::shape(format!(
                            "layer {i}: weights {:?}, expected {dims:?}",
                            p.weights.dims()
                        )));
                    }
                    if Some(p.bias.len()) != layer.bias_len() {
                        return Err(Error::shape(format!(
                            "layer {i}: bias length {}",
                            p.bias.len()
                        )));
                    }
                }
                _ => return Err(Error::shape(format!("layer {i}: parameter slot mismatch"))),
            }
        }
        Ok(Self {
            spec,
            shapes,
            params,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Per-sample shapes; index 0 is the input.
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn class_count(&self) -> usize {
        self.shapes.last().expect("nonempty")[0]
    }

    pub fn trainable_layers(&self) -> Vec<usize> {
        self.spec.trainable_layers()
    }

    pub fn params(&self, layer: usize) -> Option<&LayerParams> {
        self.params.get(layer).and_then(Option::as_ref)
    }

    pub fn params_mut(&mut self, layer: usize) -> Option<&mut LayerParams> {
        self.params.get_mut(layer).and_then(Option::as_mut)
    }

    pub fn all_params(&self) -> &[Option<LayerParams>] {
        &self.params
    }

    pub fn total_weights(&self) -> usize {
        self.params.iter().flatten().map(|p| p.weights.len()).sum()
    }

    pub fn kept_weights(&self) -> usize {
        self.params
            .iter()
            .flatten()
            .map(|p| p.weights.mask_nnz())
            .sum()
    }

    pub fn satisfies_constraint(&self) -> bool {
        self.params
            .iter()
            .flatten()
            .all(|p| p.weights.satisfies_constraint())
    }

    pub fn forward(&self, input: &Tensor) -> Result<ForwardCache> {
        let dims = input.dims();
        if dims.len() < 2 || dims[1..] != self.shapes[0][..] {
            return Err(Error::shape(format!(
                "input {dims:?} does not match [batch, {:?}]",
                self.shapes[0]
            )));
        }
        let batch = dims[0];
        let mut activations = Vec::with_capacity(self.spec.layers.len() + 1);
        let mut pool_argmax = Vec::with_capacity(self.spec.layers.len());
        activations.push(input.clone());
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let x = activations.last().expect("nonempty");
            let out_shape = &self.shapes[i + 1];
            let mut out_dims = vec![batch];
            out_dims.extend_from_slice(out_shape);
            let mut argmax = None;
            let data = match *layer {
                LayerSpec::Dense { inputs, outputs } => {
                    let p = self.params[i].as_ref().expect("dense params");
                    kernels::dense_forward(
                        x.data(),
                        p.weights.weights().data(),
                        &p.bias,
                        batch,
                        inputs,
                        outputs,
                    )
                }
                LayerSpec::Conv { .. } => {
                    let p = self.params[i].as_ref().expect("conv params");
                    kernels::conv_forward(
                        x.data(),
                        p.weights.weights().data(),
                        &p.bias,
                        self.conv_dims(i, batch),
                    )
                }
                LayerSpec::Relu => x.data().iter().map(|&v| v.max(0.0)).collect(),
                LayerSpec::Maxpool { size } => {
                    let s = &self.shapes[i];
                    let (vals, arg) =
                        kernels::maxpool_forward(x.data(), batch * s[0], s[1], s[2], size);
                    argmax = Some(arg);
                    vals
                }
                LayerSpec::Flatten | LayerSpec::SoftmaxCrossEntropy => x.data().to_vec(),
            };
            activations.push(Tensor::new(out_dims, data)?);
            pool_argmax.push(argmax);
        }
        Ok(ForwardCache {
            activations,
            pool_argmax,
        })
    }

    fn conv_dims(&self, layer: usize, batch: usize) -> ConvDims {
        let LayerSpec::Conv {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } = self.spec.layers[layer]
        else {
            unreachable!("conv_dims on a non-conv layer")
        };
        let (inp, out) = (&self.shapes[layer], &self.shapes[layer + 1]);
        ConvDims {
            batch,
            in_c: in_channels,
            in_h: inp[1],
            in_w: inp[2],
            out_c: out_channels,
            out_h: out[1],
            out_w: out[2],
            kernel,
            stride,
            padding,
        }
    }

    /// Mean cross-entropy loss of a forward pass.
    pub fn loss(&self, cache: &ForwardCache, labels: &[usize]) -> Result<f32> {
        self.check_labels(cache, labels)?;
        Ok(kernels::softmax_cross_entropy(cache.logits().data(), labels, self.class_count()).0)
    }

    fn check_labels(&self, cache: &ForwardCache, labels: &[usize]) -> Result<()> {
        if labels.len() != cache.batch() {
            return Err(Error::shape(format!(
                "{} labels for a batch of {}",
                labels.len(),
                cache.batch()
            )));
        }
        let classes = self.class_count();
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::shape(format!(
                "label {bad} outside {classes} classes"
            )));
        }
        Ok(())
    }

    /// Gradients of the mean cross-entropy; masked weight positions get an
    /// exact zero. Also returns the loss.
    pub fn backward(&self, cache: &ForwardCache, labels: &[usize]) -> Result<(f32, Gradients)> {
        self.check_labels(cache, labels)?;
        let batch = cache.batch();
        let (loss, mut grad) =
            kernels::softmax_cross_entropy(cache.logits().data(), labels, self.class_count());
        let mut layers: Vec<Option<LayerGrad>> = vec![None; self.spec.layers.len()];
        let first_trainable = self.trainable_layers().first().copied().unwrap_or(0);

        for i in (0..self.spec.layers.len()).rev() {
            let x = &cache.activations[i];
            let need_dx = i > first_trainable;
            match self.spec.layers[i] {
                LayerSpec::Dense { inputs, outputs } => {
                    let p = self.params[i].as_ref().expect("dense params");
                    let (mut dw, db, dx) = kernels::dense_backward(
                        x.data(),
                        p.weights.weights().data(),
                        &grad,
                        batch,
                        inputs,
                        outputs,
                        need_dx,
                    );
                    apply_mask(&mut dw, p.weights.mask());
                    layers[i] = Some(LayerGrad {
                        weights: Tensor::new(p.weights.dims().to_vec(), dw)?,
                        bias: db,
                    });
                    grad = dx.unwrap_or_default();
                }
                LayerSpec::Conv { .. } => {
                    let p = self.params[i].as_ref().expect("conv params");
                    let (mut dw, db, dx) = kernels::conv_backward(
                        x.data(),
                        p.weights.weights().data(),
                        &grad,
                        self.conv_dims(i, batch),
                        need_dx,
                    );
                    apply_mask(&mut dw, p.weights.mask());
                    layers[i] = Some(LayerGrad {
                        weights: Tensor::new(p.weights.dims().to_vec(), dw)?,
                        bias: db,
                    });
                    grad = dx.unwrap_or_default();
                }
                LayerSpec::Relu => {
                    let out = cache.activations[i + 1].data();
                    for (g, &o) in grad.iter_mut().zip(out) {
                        if o <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
                LayerSpec::Maxpool { .. } => {
                    let arg = cache.pool_argmax[i].as_ref().expect("pool argmax cached");
                    grad = kernels::maxpool_backward(&grad, arg, x.len());
                }
                LayerSpec::Flatten | LayerSpec::SoftmaxCrossEntropy => {}
            }
            if !need_dx && self.spec.layers[i].is_trainable() {
                break;
            }
        }
        Ok((loss, Gradients { layers }))
    }

    /// `w ← w − lr·g`, mask re-applied. Nothing is updated when any
    /// gradient is non-finite.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f32) -> Result<()> {
        if grads.layers.len() != self.params.len() {
            return Err(Error::shape("gradient list does not match the network"));
        }
        if !grads.is_finite() {
            return Err(Error::TrainingDiverged("non-finite gradient".into()));
        }
        for (i, (p, g)) in self.params.iter_mut().zip(&grads.layers).enumerate() {
            match (p, g) {
                (Some(p), Some(g)) => {
                    if g.weights.dims() != p.weights.dims() || g.bias.len() != p.bias.len() {
                        return Err(Error::shape(format!("layer {i}: gradient shape mismatch")));
                    }
                    p.weights.update(|w| {
                        for (wi, &gi) in w.iter_mut().zip(g.weights.data()) {
                            *wi -= lr * gi;
                        }
                    });
                    for (b, &gb) in p.bias.iter_mut().zip(&g.bias) {
                        *b -= lr * gb;
                    }
                }
                (Some(_), None) | (None, None) => {}
                (None, Some(_)) => {
                    return Err(Error::shape(format!(
                        "layer {i}: gradient for a parameter-free layer"
                    )))
                }
            }
        }
        Ok(())
    }

    /// Logits for a batch.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        let mut cache = self.forward(input)?;
        Ok(cache.activations.pop().expect("nonempty"))
    }
}
