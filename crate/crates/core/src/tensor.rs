use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f32` tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if dims.contains(&0) {
            return Err(Error::shape(format!("zero extent in dims {dims:?}")));
        }
        if expected != data.len() {
            return Err(Error::shape(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        Self {
            dims,
            data: vec![0.0; len],
        }
    }

    pub fn filled(dims: Vec<usize>, value: f32) -> Self {
        let len = dims.iter().product();
        Self {
            dims,
            data: vec![value; len],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn reshape(mut self, dims: Vec<usize>) -> Result<Self> {
        if dims.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {dims:?}",
                self.dims
            )));
        }
        self.dims = dims;
        Ok(self)
    }

    /// Leading extent (batch size for activation tensors).
    pub fn rows(&self) -> usize {
        self.dims[0]
    }

    /// Number of values per leading index.
    pub fn row_len(&self) -> usize {
        self.data.len() / self.dims[0]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Weight tensor paired with a same-shape 0/1 mask. Masked positions hold
/// exactly zero after every mutation made through this type.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedTensor {
    weights: Tensor,
    mask: Vec<u8>,
}

impl MaskedTensor {
    pub fn new(mut weights: Tensor, mask: Vec<u8>) -> Result<Self> {
        if mask.len() != weights.len() {
            return Err(Error::shape(format!(
                "mask has {} entries, weights {}",
                mask.len(),
                weights.len()
            )));
        }
        if let Some(bad) = mask.iter().find(|&&m| m > 1) {
            return Err(Error::invalid(format!("mask entry {bad} is not 0 or 1")));
        }
        apply_mask(weights.data_mut(), &mask);
        Ok(Self { weights, mask })
    }

    /// All-ones mask.
    pub fn dense(weights: Tensor) -> Self {
        let mask = vec![1; weights.len()];
        Self { weights, mask }
    }

    /// Like [`MaskedTensor::new`] but fails instead of zeroing when a masked
    /// position carries a nonzero weight.
    pub fn checked(weights: Tensor, mask: Vec<u8>) -> Result<Self> {
        let out = Self::new(weights.clone(), mask)?;
        if out.weights != weights {
            let idx = weights
                .data()
                .iter()
                .zip(&out.mask)
                .position(|(&w, &m)| m == 0 && w != 0.0)
                .unwrap_or(0);
            return Err(Error::Constraint(format!(
                "nonzero weight at masked position {idx}"
            )));
        }
        Ok(out)
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn dims(&self) -> &[usize] {
        self.weights.dims()
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn mask_nnz(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn weight_nnz(&self) -> usize {
        self.weights.nnz()
    }

    /// Replace the mask, zeroing weights it removes.
    pub fn set_mask(&mut self, mask: Vec<u8>) -> Result<()> {
        *self = Self::new(self.weights.clone(), mask)?;
        Ok(())
    }

    /// Replace the weights, re-applying the current mask.
    pub fn set_weights(&mut self, weights: Tensor) -> Result<()> {
        if weights.dims() != self.weights.dims() {
            return Err(Error::shape(format!(
                "weights {:?} do not match {:?}",
                weights.dims(),
                self.weights.dims()
            )));
        }
        self.weights = weights;
        apply_mask(self.weights.data_mut(), &self.mask);
        Ok(())
    }

    /// Run `f` on the raw weight buffer, then re-apply the mask.
    pub fn update(&mut self, f: impl FnOnce(&mut [f32])) {
        f(self.weights.data_mut());
        apply_mask(self.weights.data_mut(), &self.mask);
    }

    /// Weight support ⊆ mask support.
    pub fn satisfies_constraint(&self) -> bool {
        self.weights
            .data()
            .iter()
            .zip(&self.mask)
            .all(|(&w, &m)| m == 1 || w == 0.0)
    }
}

pub(crate) fn apply_mask(values: &mut [f32], mask: &[u8]) {
    for (v, &m) in values.iter_mut().zip(mask) {
        if m == 0 {
            *v = 0.0;
        }
    }
}
