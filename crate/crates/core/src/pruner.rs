//! Small-world structuring of a layer before training.
//!
//! For one layer the pipeline is:
//!
//! 1. removal / addition probabilities `pa = (N-1)/(N+M-1)·p`,
//!    `pb = M/(N+M-1)·p` from the layer geometry (`N` source nodes,
//!    degree `M`);
//! 2. divide factor `df = M/(N+M)·p`, which fixes the width of the
//!    long-range region `Δb` around a circular diagonal band `Δa`;
//! 3. `randvar = Δa∘Binomial(M, pa)/M + Δb∘Binomial(M, pb)/M`;
//! 4. randomizer `Γ = W + randvar + 2·W∘randvar` and `W_sw = W∘Γ`;
//! 5. magnitude cut on `|W_sw|` keeping `round((1-θ)·size)` entries.
//!
//! Every step is elementwise and deterministic given the master seed and the
//! layer's ordinal among trainable layers.

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Network};
use crate::rng::{derive_seed_path, seeded, streams, Rng};
use crate::tensor::Tensor;

/// Sparsity θ, either one value for every layer or one per trainable layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Theta {
    Global(f64),
    PerLayer(Vec<f64>),
}

impl Theta {
    pub fn for_layer(&self, ordinal: usize) -> Result<f64> {
        match self {
            Theta::Global(t) => Ok(*t),
            Theta::PerLayer(ts) => ts.get(ordinal).copied().ok_or_else(|| {
                Error::Config(format!(
                    "per-layer theta lists {} values, trainable layer {ordinal} has none",
                    ts.len()
                ))
            }),
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            Theta::Global(t) => vec![*t],
            Theta::PerLayer(ts) => ts.clone(),
        }
    }
}

impl Default for Theta {
    fn default() -> Self {
        Theta::Global(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallWorldConfig {
    /// Rewiring probability.
    pub p: f64,
    pub theta: Theta,
    pub seed: u64,
    /// Free-form label for named θ profiles ("accurate", "aggressive").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
}

impl SmallWorldConfig {
    pub fn new(p: f64, theta: f64, seed: u64) -> Self {
        Self {
            p,
            theta: Theta::Global(theta),
            seed,
            profile: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!("p = {} outside [0, 1]", self.p)));
        }
        for t in self.theta.values() {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("theta = {t} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// θ implied by a target parameter count: `1 - kept / total`.
pub fn theta_for_target(kept: f64, total: f64) -> f64 {
    1.0 - kept / total
}

/// Named θ profiles for LeNet-5, derived from target kept counts
/// (9.9K and 8.48K kept out of 431K).
pub mod profiles {
    pub const LENET5_TOTAL: f64 = 431_000.0;
    pub const LENET5_ACCURATE_KEPT: f64 = 9_900.0;
    pub const LENET5_AGGRESSIVE_KEPT: f64 = 8_480.0;

    pub fn lenet5_accurate() -> f64 {
        super::theta_for_target(LENET5_ACCURATE_KEPT, LENET5_TOTAL)
    }

    pub fn lenet5_aggressive() -> f64 {
        super::theta_for_target(LENET5_AGGRESSIVE_KEPT, LENET5_TOTAL)
    }
}

/// Node count `N + M`, degree `M`, and the 2D masking shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerGeometry {
    pub nodes: usize,
    pub degree: usize,
    pub rows: usize,
    pub cols: usize,
}

impl LayerGeometry {
    /// Source node count `N = nodes - M`.
    pub fn sources(&self) -> usize {
        self.nodes - self.degree
    }

    pub fn size(&self) -> usize {
        self.rows * self.cols
    }
}

/// Dense layer: `N` inputs, degree `M` outputs, masked as `(M, N)`.
pub fn fc_geometry(inputs: usize, outputs: usize) -> Result<LayerGeometry> {
    if inputs == 0 || outputs == 0 {
        return Err(Error::DegenerateLayer(format!(
            "{inputs}x{outputs} dense layer"
        )));
    }
    Ok(LayerGeometry {
        nodes: inputs + outputs,
        degree: outputs,
        rows: outputs,
        cols: inputs,
    })
}

/// Conv layer: degree `op·a²`, nodes `op·ip·a²`, masked as `(op, ip·a²)`.
pub fn conv_geometry(
    out_channels: usize,
    in_channels: usize,
    kernel: usize,
) -> Result<LayerGeometry> {
    if out_channels == 0 || in_channels == 0 || kernel == 0 {
        return Err(Error::DegenerateLayer(format!(
            "conv {out_channels}x{in_channels}x{kernel}x{kernel}"
        )));
    }
    let area = kernel * kernel;
    Ok(LayerGeometry {
        nodes: out_channels * in_channels * area,
        degree: out_channels * area,
        rows: out_channels,
        cols: in_channels * area,
    })
}

pub fn layer_geometry(layer: &LayerSpec) -> Result<LayerGeometry> {
    match *layer {
        LayerSpec::Dense { inputs, outputs } => fc_geometry(inputs, outputs),
        LayerSpec::Conv {
            in_channels,
            out_channels,
            kernel,
            ..
        } => conv_geometry(out_channels, in_channels, kernel),
        _ => Err(Error::DegenerateLayer(format!(
            "{} has no weights",
            layer.kind()
        ))),
    }
}

/// `(pa, pb)`. A geometry with no source nodes beyond the degree (a conv
/// layer with one input channel) puts all of `p` on addition.
pub fn rewiring_probabilities(geom: &LayerGeometry, p: f64) -> Result<(f64, f64)> {
    let total = geom.nodes;
    if total < 2 {
        return Err(Error::DegenerateLayer(format!("N + M = {total} < 2")));
    }
    if geom.sources() == 0 {
        return Ok((0.0, p));
    }
    let denom = (total - 1) as f64;
    let pa = (total - geom.degree - 1) as f64 / denom * p;
    let pb = geom.degree as f64 / denom * p;
    Ok((pa, pb))
}

pub fn divide_factor(geom: &LayerGeometry, p: f64) -> f64 {
    geom.degree as f64 / geom.nodes as f64 * p
}

/// Complementary 0/1 regions over a `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionPartition {
    pub rows: usize,
    pub cols: usize,
    long_range: Vec<u8>,
}

impl RegionPartition {
    /// Δa, the regular band.
    pub fn delta_a(&self) -> Vec<u8> {
        self.long_range.iter().map(|&b| 1 - b).collect()
    }

    /// Δb, the long-range region.
    pub fn delta_b(&self) -> &[u8] {
        &self.long_range
    }

    pub fn is_long_range(&self, flat: usize) -> bool {
        self.long_range[flat] == 1
    }

    pub fn long_range_count(&self) -> usize {
        self.long_range.iter().filter(|&&b| b == 1).count()
    }
}

/// Per row `i` the band is centred on column `round(i·cols/rows) mod cols`;
/// the `ceil(df·cols)` columns circularly farthest from it (ties to the
/// lower column) form Δb.
pub fn partition_regions(rows: usize, cols: usize, df: f64) -> Result<RegionPartition> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!("partition shape {rows}x{cols}")));
    }
    if !(0.0..=1.0).contains(&df) {
        return Err(Error::invalid(format!("divide factor {df} outside [0, 1]")));
    }
    let width = ((df * cols as f64).ceil() as usize).min(cols);
    let mut long_range = vec![0u8; rows * cols];
    let mut order: Vec<usize> = (0..cols).collect();
    for i in 0..rows {
        let anchor = ((i as f64 * cols as f64 / rows as f64).round() as usize) % cols;
        let dist = |j: usize| {
            let d = j.abs_diff(anchor);
            d.min(cols - d)
        };
        order.sort_by(|&a, &b| dist(b).cmp(&dist(a)).then(a.cmp(&b)));
        for &j in &order[..width] {
            long_range[i * cols + j] = 1;
        }
    }
    Ok(RegionPartition {
        rows,
        cols,
        long_range,
    })
}

/// Normalised binomial draws, one per position in row-major order:
/// `Binomial(M, pa)/M` on Δa and `Binomial(M, pb)/M` on Δb.
pub fn sample_randvar(
    partition: &RegionPartition,
    degree: usize,
    pa: f64,
    pb: f64,
    rng: &mut Rng,
) -> Result<Tensor> {
    if degree == 0 {
        return Err(Error::DegenerateLayer("degree 0".into()));
    }
    let binom = |prob: f64| {
        Binomial::new(degree as u64, prob)
            .map_err(|e| Error::invalid(format!("binomial({degree}, {prob}): {e}")))
    };
    let (da, db) = (binom(pa)?, binom(pb)?);
    let m = degree as f64;
    let data = (0..partition.rows * partition.cols)
        .map(|i| {
            let draw = if partition.is_long_range(i) {
                if pb == 0.0 {
                    0
                } else {
                    db.sample(rng)
                }
            } else if pa == 0.0 {
                0
            } else {
                da.sample(rng)
            };
            (draw as f64 / m) as f32
        })
        .collect();
    Tensor::new(vec![partition.rows, partition.cols], data)
}

/// `Γ = W + r + 2·W∘r` and `W_sw = W∘Γ`, elementwise in f32.
pub fn apply_randomizer(w: &Tensor, randvar: &Tensor) -> Result<(Tensor, Tensor)> {
    if w.len() != randvar.len() {
        return Err(Error::shape(format!(
            "weights have {} entries, randvar {}",
            w.len(),
            randvar.len()
        )));
    }
    if !w.is_finite() || !randvar.is_finite() {
        return Err(Error::Numeric("non-finite input to the randomizer".into()));
    }
    let gamma: Vec<f32> = w
        .data()
        .iter()
        .zip(randvar.data())
        .map(|(&wi, &ri)| wi + ri + 2.0 * wi * ri)
        .collect();
    let w_sw: Vec<f32> = w
        .data()
        .iter()
        .zip(&gamma)
        .map(|(&wi, &g)| wi * g)
        .collect();
    if w_sw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("randomizer overflowed".into()));
    }
    Ok((
        Tensor::new(w.dims().to_vec(), gamma)?,
        Tensor::new(w.dims().to_vec(), w_sw)?,
    ))
}

/// `round((1-θ)·size)` with halves rounded away from zero.
pub fn kept_count(size: usize, theta: f64) -> usize {
    (((1.0 - theta) * size as f64).round() as usize).min(size)
}

/// Keep the `kept_count(len, θ)` largest magnitudes; equal magnitudes are
/// kept in flat-index order.
pub fn magnitude_mask(values: &[f32], theta: f64) -> Vec<u8> {
    let keep = kept_count(values.len(), theta);
    let mut mask = vec![0u8; values.len()];
    for idx in magnitude_order(values).into_iter().take(keep) {
        mask[idx] = 1;
    }
    mask
}

/// Flat indices by descending magnitude, ties by ascending index.
pub fn magnitude_order(values: &[f32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredLayer {
    pub geometry: LayerGeometry,
    pub theta: f64,
    pub pa: f64,
    pub pb: f64,
    pub divide_factor: f64,
    pub randvar: Tensor,
    pub gamma: Tensor,
    pub w_sw: Tensor,
    pub mask: Vec<u8>,
}

impl StructuredLayer {
    pub fn kept(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    /// Mask for another θ cut from the same `W_sw`; nested in θ.
    pub fn mask_at(&self, theta: f64) -> Vec<u8> {
        magnitude_mask(self.w_sw.data(), theta)
    }
}

/// Seed of the structuring stream for a trainable layer.
pub fn layer_seed(master_seed: u64, layer_ordinal: usize) -> u64 {
    derive_seed_path(master_seed, &[streams::STRUCTURE, layer_ordinal as u64])
}

pub fn structure_layer(
    w: &Tensor,
    geom: &LayerGeometry,
    config: &SmallWorldConfig,
    layer_ordinal: usize,
) -> Result<StructuredLayer> {
    config.validate()?;
    if w.len() != geom.size() {
        return Err(Error::shape(format!(
            "weights have {} entries, geometry {}x{}",
            w.len(),
            geom.rows,
            geom.cols
        )));
    }
    let theta = config.theta.for_layer(layer_ordinal)?;
    let (pa, pb) = rewiring_probabilities(geom, config.p)?;
    let df = divide_factor(geom, config.p);
    let partition = partition_regions(geom.rows, geom.cols, df)?;
    let mut rng = seeded(layer_seed(config.seed, layer_ordinal));
    let randvar = sample_randvar(&partition, geom.degree, pa, pb, &mut rng)?;
    let flat_w = w.clone().reshape(vec![geom.rows, geom.cols])?;
    let (gamma, w_sw) = apply_randomizer(&flat_w, &randvar)?;
    let mask = magnitude_mask(w_sw.data(), theta);
    Ok(StructuredLayer {
        geometry: *geom,
        theta,
        pa,
        pb,
        divide_factor: df,
        randvar,
        gamma,
        w_sw,
        mask,
    })
}

/// Structure every trainable layer of `net` (in parallel; each layer owns
/// its seeded stream). Returns `(layer index, result)` in layer order.
pub fn structure_network(
    net: &Network,
    config: &SmallWorldConfig,
) -> Result<Vec<(usize, StructuredLayer)>> {
    config.validate()?;
    let layers = net.trainable_layers();
    layers
        .par_iter()
        .enumerate()
        .map(|(ordinal, &li)| {
            let spec = &net.spec().layers[li];
            let geom = layer_geometry(spec)?;
            let w = net.params(li).expect("trainable").weights.weights();
            Ok((li, structure_layer(w, &geom, config, ordinal)?))
        })
        .collect()
}

/// Install structured masks into `net`, keeping the original weights at
/// the surviving positions.
pub fn apply_structure(net: &mut Network, structured: &[(usize, StructuredLayer)]) -> Result<()> {
    for (li, s) in structured {
        let p = net
            .params_mut(*li)
            .ok_or_else(|| Error::shape(format!("layer {li} has no parameters")))?;
        p.weights.set_mask(s.mask.clone())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_example() {
        let g = fc_geometry(100, 10).unwrap();
        let (pa, pb) = rewiring_probabilities(&g, 0.001).unwrap();
        // independent scalar evaluation
        assert!((pa - 99.0 / 109.0 * 0.001).abs() < 1e-18);
        assert!((pb - 10.0 / 109.0 * 0.001).abs() < 1e-18);
        assert!((pa - 9.0826e-4).abs() < 1e-8);
        assert!((pb - 9.1743e-5).abs() < 1e-9);
        assert_eq!(rewiring_probabilities(&g, 0.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn degenerate_geometry_errors() {
        let g = LayerGeometry {
            nodes: 1,
            degree: 1,
            rows: 1,
            cols: 1,
        };
        assert!(matches!(
            rewiring_probabilities(&g, 0.1),
            Err(Error::DegenerateLayer(_))
        ));
    }

    #[test]
    fn single_input_channel_conv_puts_p_on_addition() {
        let g = conv_geometry(20, 1, 5).unwrap();
        assert_eq!(g.sources(), 0);
        assert_eq!(rewiring_probabilities(&g, 0.01).unwrap(), (0.0, 0.01));
    }

    #[test]
    fn divide_factor_examples() {
        let g = fc_geometry(100, 10).unwrap();
        assert!((divide_factor(&g, 0.001) - 10.0 / 110.0 * 0.001).abs() < 1e-18);
        assert!((divide_factor(&g, 0.001) - 9.0909e-5).abs() < 1e-9);
        assert_eq!(divide_factor(&g, 0.0), 0.0);
        let sym = fc_geometry(7, 7).unwrap();
        assert_eq!(divide_factor(&sym, 0.3), 0.15);
    }

    #[test]
    fn conv_geometry_examples() {
        let g = conv_geometry(6, 3, 5).unwrap();
        assert_eq!((g.degree, g.nodes), (150, 450));
        let g = conv_geometry(1, 1, 1).unwrap();
        assert_eq!((g.degree, g.nodes), (1, 1));
        let g = conv_geometry(2, 2, 3).unwrap();
        assert_eq!((g.degree, g.nodes, g.rows, g.cols), (18, 36, 2, 18));
    }

    #[test]
    fn partition_examples() {
        let p = partition_regions(3, 5, 0.0).unwrap();
        assert_eq!(p.long_range_count(), 0);
        assert!(p.delta_a().iter().all(|&a| a == 1));
        let p = partition_regions(3, 5, 1.0).unwrap();
        assert!(p.delta_b().iter().all(|&b| b == 1));
        let p = partition_regions(2, 4, 0.25).unwrap();
        assert_eq!(p.long_range_count(), 2);
        // row 0 anchored at column 0: farthest column is 2
        assert_eq!(&p.delta_b()[..4], &[0, 0, 1, 0]);
        // row 1 anchored at column 2: farthest column is 0
        assert_eq!(&p.delta_b()[4..], &[1, 0, 0, 0]);
    }

    #[test]
    fn randvar_edge_cases() {
        let part = partition_regions(4, 6, 0.2).unwrap();
        let r = sample_randvar(&part, 10, 0.0, 0.0, &mut seeded(1)).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.0));
        let r = sample_randvar(&part, 10, 1.0, 0.0, &mut seeded(1)).unwrap();
        for (i, &v) in r.data().iter().enumerate() {
            assert_eq!(v, if part.is_long_range(i) { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn randomizer_examples() {
        let w = Tensor::new(vec![1, 3], vec![0.5, -0.2, 0.0]).unwrap();
        let zero = Tensor::zeros(vec![1, 3]);
        let (g, sw) = apply_randomizer(&w, &zero).unwrap();
        assert_eq!(g, w);
        assert_eq!(sw.data(), &[0.25, 0.040000003, 0.0]);

        let w = Tensor::new(vec![1, 2], vec![0.5, 0.0]).unwrap();
        let r = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let (g, sw) = apply_randomizer(&w, &r).unwrap();
        assert_eq!(g.data(), &[2.5, 1.0]);
        assert_eq!(sw.data(), &[1.25, 0.0]);

        let bad = Tensor::new(vec![1, 2], vec![f32::NAN, 0.0]).unwrap();
        assert!(matches!(apply_randomizer(&bad, &r), Err(Error::Numeric(_))));
    }

    #[test]
    fn magnitude_mask_examples() {
        let v = [0.1, -0.5, 0.3, -0.2];
        assert_eq!(magnitude_mask(&v, 0.0), vec![1; 4]);
        assert_eq!(magnitude_mask(&v, 1.0), vec![0; 4]);
        assert_eq!(magnitude_mask(&v, 0.5), vec![0, 1, 1, 0]);
        // ties keep the lower index
        assert_eq!(magnitude_mask(&[1.0, -1.0, 1.0], 0.5), vec![1, 1, 0]);
    }

    #[test]
    fn kept_count_rounds_half_away() {
        assert_eq!(kept_count(3, 0.5), 2);
        assert_eq!(kept_count(10, 0.95), 1);
        assert_eq!(kept_count(10, 0.0), 10);
        assert_eq!(kept_count(10, 1.0), 0);
    }

    #[test]
    fn theta_profiles() {
        assert!((profiles::lenet5_accurate() - 0.977).abs() < 1e-4);
        assert!((profiles::lenet5_aggressive() - 0.9803).abs() < 1e-4);
    }

    #[test]
    fn per_layer_theta_lookup() {
        let t = Theta::PerLayer(vec![0.5, 0.9]);
        assert_eq!(t.for_layer(1).unwrap(), 0.9);
        assert!(t.for_layer(2).is_err());
        let cfg: SmallWorldConfig =
            serde_json::from_str(r#"{"p":0.001,"theta":[0.5,0.9],"seed":3}"#).unwrap();
        assert_eq!(cfg.theta, t);
        let cfg: SmallWorldConfig =
            serde_json::from_str(r#"{"p":0.001,"theta":0.9,"seed":3}"#).unwrap();
        assert_eq!(cfg.theta, Theta::Global(0.9));
    }
}
