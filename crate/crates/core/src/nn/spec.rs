use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Relu,
    Maxpool {
        size: usize,
    },
    Flatten,
    SoftmaxCrossEntropy,
}

impl LayerSpec {
    pub fn is_trainable(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv { .. })
    }

    /// Weight tensor dims: `[out, in]` for dense, `[out, in, k, k]` for conv.
    pub fn weight_dims(&self) -> Option<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => Some(vec![outputs, inputs]),
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some(vec![out_channels, in_channels, kernel, kernel]),
            _ => None,
        }
    }

    pub fn bias_len(&self) -> Option<usize> {
        match *self {
            LayerSpec::Dense { outputs, .. } => Some(outputs),
            LayerSpec::Conv { out_channels, .. } => Some(out_channels),
            _ => None,
        }
    }

    /// 2D view used for masking: rows are output units (channels).
    pub fn mask_shape(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => Some((outputs, inputs)),
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((out_channels, in_channels * kernel * kernel)),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Relu => "relu",
            LayerSpec::Maxpool { .. } => "maxpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::SoftmaxCrossEntropy => "softmax_cross_entropy",
        }
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                if input != [inputs] {
                    return Err(Error::shape(format!(
                        "dense expects [{inputs}], got {input:?}"
                    )));
                }
                if outputs == 0 {
                    return Err(Error::shape("dense layer with zero outputs"));
                }
                Ok(vec![outputs])
            }
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let &[c, h, w] = input else {
                    return Err(Error::shape(format!(
                        "conv expects [C, H, W], got {input:?}"
                    )));
                };
                if c != in_channels {
                    return Err(Error::shape(format!(
                        "conv expects {in_channels} input channels, got {c}"
                    )));
                }
                if out_channels == 0 || kernel == 0 || stride == 0 {
                    return Err(Error::shape("conv extents must be positive"));
                }
                let (hp, wp) = (h + 2 * padding, w + 2 * padding);
                if hp < kernel || wp < kernel {
                    return Err(Error::shape(format!(
                        "kernel {kernel} larger than padded input {hp}x{wp}"
                    )));
                }
                Ok(vec![
                    out_channels,
                    (hp - kernel) / stride + 1,
                    (wp - kernel) / stride + 1,
                ])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Maxpool { size } => {
                let &[c, h, w] = input else {
                    return Err(Error::shape(format!(
                        "maxpool expects [C, H, W], got {input:?}"
                    )));
                };
                if size == 0 || h < size || w < size {
                    return Err(Error::shape(format!(
                        "pool size {size} does not fit {h}x{w}"
                    )));
                }
                Ok(vec![c, h / size, w / size])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::SoftmaxCrossEntropy => {
                if input.len() != 1 {
                    return Err(Error::shape(format!(
                        "loss head expects a flat input, got {input:?}"
                    )));
                }
                Ok(input.to_vec())
            }
        }
    }
}

/// Ordered layer list plus the per-sample input shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Per-sample shape after each layer; index 0 is the input shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input.is_empty() || self.input.contains(&0) {
            return Err(Error::shape(format!("bad input shape {:?}", self.input)));
        }
        let heads = self
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::SoftmaxCrossEntropy))
            .count();
        if heads != 1 || !matches!(self.layers.last(), Some(LayerSpec::SoftmaxCrossEntropy)) {
            return Err(Error::shape(
                "exactly one softmax_cross_entropy head, placed last",
            ));
        }
        let mut shapes = vec![self.input.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer
                .output_shape(shapes.last().expect("nonempty"))
                .map_err(|e| Error::shape(format!("layer {i} ({}): {e}", layer.kind())))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    pub fn trainable_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_trainable())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn class_count(&self) -> Result<usize> {
        Ok(self.shapes()?.last().expect("nonempty")[0])
    }

    /// Multilayer perceptron `sizes[0] - sizes[1] - … - sizes[n]` with ReLU
    /// between dense layers.
    pub fn mlp(sizes: &[usize]) -> Self {
        let mut layers = Vec::new();
        for (i, w) in sizes.windows(2).enumerate() {
            if i > 0 {
                layers.push(LayerSpec::Relu);
            }
            layers.push(LayerSpec::Dense {
                inputs: w[0],
                outputs: w[1],
            });
        }
        layers.push(LayerSpec::SoftmaxCrossEntropy);
        Self {
            input: vec![sizes[0]],
            layers,
        }
    }

    /// LeNet-5 as used in the pruning literature: 20 and 50 5x5 filters,
    /// a 500-unit hidden layer, 431K parameters on 28x28 inputs.
    pub fn lenet5() -> Self {
        Self {
            input: vec![1, 28, 28],
            layers: vec![
                LayerSpec::Conv {
                    in_channels: 1,
                    out_channels: 20,
                    kernel: 5,
                    stride: 1,
                    padding: 0,
                },
                LayerSpec::Relu,
                LayerSpec::Maxpool { size: 2 },
                LayerSpec::Conv {
                    in_channels: 20,
                    out_channels: 50,
                    kernel: 5,
                    stride: 1,
                    padding: 0,
                },
                LayerSpec::Relu,
                LayerSpec::Maxpool { size: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 800,
                    outputs: 500,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    inputs: 500,
                    outputs: 10,
                },
                LayerSpec::SoftmaxCrossEntropy,
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_shapes() {
        let spec = NetworkSpec::mlp(&[784, 128, 10]);
        let shapes = spec.shapes().unwrap();
        assert_eq!(shapes.last().unwrap(), &vec![10]);
        assert_eq!(spec.trainable_layers(), vec![0, 2]);
    }

    #[test]
    fn lenet_shapes_and_size() {
        let spec = NetworkSpec::lenet5();
        let shapes = spec.shapes().unwrap();
        assert_eq!(shapes[1], vec![20, 24, 24]);
        assert_eq!(shapes[6], vec![50, 4, 4]);
        let weights: usize = spec
            .layers
            .iter()
            .filter_map(|l| l.weight_dims())
            .map(|d| d.iter().product::<usize>())
            .sum();
        let biases: usize = spec.layers.iter().filter_map(|l| l.bias_len()).sum();
        assert_eq!(weights, 430_500);
        assert_eq!(weights + biases, 431_080);
    }

    #[test]
    fn rejects_mismatch_and_missing_head() {
        let mut spec = NetworkSpec::mlp(&[4, 3, 2]);
        spec.layers[2] = LayerSpec::Dense {
            inputs: 5,
            outputs: 2,
        };
        assert!(spec.validate().is_err());

        let mut spec = NetworkSpec::mlp(&[4, 2]);
        spec.layers.pop();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn json_form() {
        let text = r#"{"input":[1,8,8],"layers":[
            {"conv":{"in_channels":1,"out_channels":2,"kernel":3}},
            "relu",{"maxpool":{"size":2}},"flatten",
            {"dense":{"inputs":18,"outputs":3}},"softmax_cross_entropy"]}"#;
        let spec: NetworkSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.shapes().unwrap().last().unwrap(), &vec![3]);
        let bad = r#"{"input":[2],"layers":["softmax_cross_entropy"],"extra":1}"#;
        assert!(serde_json::from_str::<NetworkSpec>(bad).is_err());
    }
}
