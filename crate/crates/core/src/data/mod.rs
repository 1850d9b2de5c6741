//! Datasets and checkpoint persistence.

mod checkpoint;
mod cifar;
mod mnist;
mod synthetic;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_atomic, write_checkpoint, Checkpoint,
    NamedTensor, TensorPayload, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use cifar::{load_cifar10_bin, parse_cifar10, CIFAR_RECORD_BYTES};
pub use mnist::{
    load_mnist_idx, parse_idx_images, parse_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use synthetic::synthetic_blobs;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Samples `[n, ...dims]` with values in `[0, 1]` and labels in
/// `0..class_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Tensor,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(samples: Tensor, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if samples.dims().len() < 2 || samples.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} labels for samples {:?}",
                labels.len(),
                samples.dims()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::invalid(format!(
                "label {bad} outside {class_count} classes"
            )));
        }
        Ok(Self {
            samples,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn samples(&self) -> &Tensor {
        &self.samples
    }

    /// Per-sample dims (without the leading count).
    pub fn sample_dims(&self) -> &[usize] {
        &self.samples.dims()[1..]
    }

    /// Gather rows into a batch tensor.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let w = self.samples.row_len();
        let mut data = Vec::with_capacity(indices.len() * w);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!("sample {i} out of {}", self.len())));
            }
            data.extend_from_slice(self.samples.row(i));
            labels.push(self.labels[i]);
        }
        let mut dims = vec![indices.len()];
        dims.extend_from_slice(self.sample_dims());
        Ok((Tensor::new(dims, data)?, labels))
    }

    /// First `n` samples (or all of them).
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        let (samples, labels) = self.batch(&idx).expect("indices in range");
        Self {
            samples,
            labels,
            class_count: self.class_count,
        }
    }

    /// Same samples with a different per-sample shape (e.g. 784 -> 1x28x28).
    pub fn reshaped(self, sample_dims: &[usize]) -> Result<Self> {
        let mut dims = vec![self.len()];
        dims.extend_from_slice(sample_dims);
        Ok(Self {
            samples: self.samples.reshape(dims)?,
            ..self
        })
    }
}
