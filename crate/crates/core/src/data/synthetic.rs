use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::tensor::Tensor;

/// Gaussian clusters around uniform random centres in `[0.2, 0.8]^dims`,
/// clamped to `[0, 1]`. Sample `i` belongs to class `i % classes`.
pub fn synthetic_blobs(
    classes: usize,
    dims: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if classes == 0 || dims == 0 || per_class == 0 {
        return Err(Error::invalid(
            "classes, dims and per_class must be positive",
        ));
    }
    if spread.is_nan() || spread < 0.0 {
        return Err(Error::invalid(format!(
            "spread {spread} must be non-negative"
        )));
    }
    let mut rng = seeded(seed);
    let centres: Vec<Vec<f32>> = (0..classes)
        .map(|_| (0..dims).map(|_| rng.random_range(0.2f32..0.8)).collect())
        .collect();
    let n = classes * per_class;
    let mut data = Vec::with_capacity(n * dims);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        for &mu in &centres[c] {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push((mu as f64 + spread * z).clamp(0.0, 1.0) as f32);
        }
        labels.push(c);
    }
    LabeledDataset::new(Tensor::new(vec![n, dims], data)?, labels, classes)
}
