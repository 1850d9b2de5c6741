//! L and C for network layers.
//!
//! A layer's units relate to output classes through a 0/1 contribution
//! relation. For dense layers the relation is reachability over the masked
//! connections down to the output; for conv layers it comes from a μ ± σ
//! window over per-feature-map activation scores. Then
//!
//! * `L = mean over classes of (units contributing to the class) / units`
//! * `C = mean over units of (classes the unit contributes to) / classes`

use std::io::Write;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::fmt::sig10;
use crate::nn::{LayerSpec, Network};

/// Calibration samples per class for conv activation statistics.
pub const DEFAULT_CALIBRATION_PER_CLASS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Reachability,
    ActivationWindow,
}

/// Binary `units × classes` matrix, unit-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContributionRelation {
    units: usize,
    classes: usize,
    bits: Vec<u8>,
    pub provenance: Provenance,
}

impl ContributionRelation {
    pub fn new(
        units: usize,
        classes: usize,
        bits: Vec<u8>,
        provenance: Provenance,
    ) -> Result<Self> {
        if bits.len() != units * classes {
            return Err(Error::shape(format!(
                "{} relation entries for {units} units x {classes} classes",
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::invalid("relation entries must be 0 or 1"));
        }
        Ok(Self {
            units,
            classes,
            bits,
            provenance,
        })
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn contributes(&self, unit: usize, class: usize) -> bool {
        self.bits[unit * self.classes + class] == 1
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.units == other.units
            && self.classes == other.classes
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| a <= b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcReport {
    pub layer: usize,
    pub l: f64,
    pub c: f64,
    pub per_class_counts: Vec<usize>,
    pub per_unit_class_counts: Vec<usize>,
    pub unit_total: usize,
    pub class_total: usize,
}

impl LcReport {
    /// Σ over classes of contributing units (equal to Σ over units of classes).
    pub fn connections(&self) -> usize {
        self.per_class_counts.iter().sum()
    }

    /// Per-class L values, `count_c / units`.
    pub fn per_class_l(&self) -> Vec<f64> {
        self.per_class_counts
            .iter()
            .map(|&n| n as f64 / self.unit_total as f64)
            .collect()
    }
}

/// Masked dense connectivity as `(rows = outputs, cols = inputs)`.
#[derive(Debug, Clone, Copy)]
pub struct MaskView<'a> {
    pub rows: usize,
    pub cols: usize,
    pub mask: &'a [u8],
}

/// Reachability through a chain of dense masks, first mask nearest the
/// units. Unit `u` (an input of `masks[0]`) relates to class `c` iff a path
/// of mask-1 connections leads from `u` to output `c` of the last mask.
pub fn reachability_from_masks(masks: &[MaskView<'_>]) -> Result<ContributionRelation> {
    let last = masks
        .last()
        .ok_or_else(|| Error::invalid("no dense layers to trace"))?;
    for w in masks.windows(2) {
        if w[0].rows != w[1].cols {
            return Err(Error::shape(format!(
                "mask chain breaks: {} outputs feed {} inputs",
                w[0].rows, w[1].cols
            )));
        }
    }
    for m in masks {
        if m.mask.len() != m.rows * m.cols {
            return Err(Error::shape("mask length does not match its shape"));
        }
    }
    let classes = last.rows;
    let words = classes.div_ceil(64);
    // reach[j] = classes reachable from output j of the current layer
    let mut reach: Vec<Vec<u64>> = (0..classes)
        .map(|c| {
            let mut w = vec![0u64; words];
            w[c / 64] |= 1 << (c % 64);
            w
        })
        .collect();
    for m in masks.iter().rev() {
        let mut next = vec![vec![0u64; words]; m.cols];
        for (o, reach_o) in reach.iter().enumerate() {
            if reach_o.iter().all(|&w| w == 0) {
                continue;
            }
            let row = &m.mask[o * m.cols..(o + 1) * m.cols];
            for (i, &bit) in row.iter().enumerate() {
                if bit == 1 {
                    for (dst, &src) in next[i].iter_mut().zip(reach_o) {
                        *dst |= src;
                    }
                }
            }
        }
        reach = next;
    }
    let units = masks[0].cols;
    let mut bits = vec![0u8; units * classes];
    for (u, r) in reach.iter().enumerate() {
        for c in 0..classes {
            if r[c / 64] >> (c % 64) & 1 == 1 {
                bits[u * classes + c] = 1;
            }
        }
    }
    ContributionRelation::new(units, classes, bits, Provenance::Reachability)
}

/// Reachability relation for the inputs of dense layer `layer`.
pub fn fc_reachability(net: &Network, layer: usize) -> Result<ContributionRelation> {
    let layers = &net.spec().layers;
    if !matches!(layers.get(layer), Some(LayerSpec::Dense { .. })) {
        return Err(Error::invalid(format!("layer {layer} is not dense")));
    }
    let mut views = Vec::new();
    for (i, spec) in layers.iter().enumerate().skip(layer) {
        match *spec {
            LayerSpec::Dense { inputs, outputs } => views.push(MaskView {
                rows: outputs,
                cols: inputs,
                mask: net.params(i).expect("dense params").weights.mask(),
            }),
            LayerSpec::Relu | LayerSpec::SoftmaxCrossEntropy => {}
            other => {
                return Err(Error::invalid(format!(
                    "layer {i} ({}) between dense layer {layer} and the output",
                    other.kind()
                )))
            }
        }
    }
    reachability_from_masks(&views)
}

pub fn fc_lc(relation: &ContributionRelation, layer: usize) -> Result<LcReport> {
    let (units, classes) = (relation.units(), relation.classes());
    if units == 0 || classes == 0 {
        return Err(Error::Degenerate(format!(
            "{units} units, {classes} classes"
        )));
    }
    let per_class_counts: Vec<usize> = (0..classes)
        .map(|c| (0..units).filter(|&u| relation.contributes(u, c)).count())
        .collect();
    let per_unit_class_counts: Vec<usize> = (0..units)
        .map(|u| (0..classes).filter(|&c| relation.contributes(u, c)).count())
        .collect();
    let l = per_class_counts
        .iter()
        .map(|&n| n as f64 / units as f64)
        .sum::<f64>()
        / classes as f64;
    let c = per_unit_class_counts
        .iter()
        .map(|&n| n as f64 / classes as f64)
        .sum::<f64>()
        / units as f64;
    Ok(LcReport {
        layer,
        l,
        c,
        per_class_counts,
        per_unit_class_counts,
        unit_total: units,
        class_total: classes,
    })
}

/// `scores[c][f]` is the activation score of feature map `f` for class `c`.
/// Map `f` contributes to `c` iff it lies in the closed window `μ ± σ` of
/// that class's scores (population σ).
pub fn conv_contribution(scores: &[Vec<f64>]) -> Result<ContributionRelation> {
    let classes = scores.len();
    if classes == 0 {
        return Err(Error::Degenerate("no classes".into()));
    }
    if let Some(c) = scores.iter().position(Vec::is_empty) {
        return Err(Error::EmptyCalibrationClass(c));
    }
    let maps = scores[0].len();
    if scores.iter().any(|s| s.len() != maps) {
        return Err(Error::shape("classes report different feature-map counts"));
    }
    let mut bits = vec![0u8; maps * classes];
    for (c, s) in scores.iter().enumerate() {
        let (lo, hi) = activation_window(s);
        for (f, &v) in s.iter().enumerate() {
            if lo <= v && v <= hi {
                bits[f * classes + c] = 1;
            }
        }
    }
    ContributionRelation::new(maps, classes, bits, Provenance::ActivationWindow)
}

/// `(μ - σ, μ + σ)` with the population standard deviation.
pub fn activation_window(scores: &[f64]) -> (f64, f64) {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean - sd, mean + sd)
}

pub fn conv_lc(relation: &ContributionRelation, layer: usize) -> Result<LcReport> {
    fc_lc(relation, layer)
}

/// Per-class activation scores for conv layer `layer`: for each map, the sum
/// of absolute post-nonlinearity activations, averaged over the first
/// `per_class` samples of the class.
pub fn conv_map_scores(
    net: &Network,
    layer: usize,
    data: &LabeledDataset,
    per_class: usize,
) -> Result<Vec<Vec<f64>>> {
    let layers = &net.spec().layers;
    if !matches!(layers.get(layer), Some(LayerSpec::Conv { .. })) {
        return Err(Error::invalid(format!("layer {layer} is not a conv layer")));
    }
    if per_class == 0 {
        return Err(Error::invalid(
            "per-class calibration count must be positive",
        ));
    }
    let tap = if matches!(layers.get(layer + 1), Some(LayerSpec::Relu)) {
        layer + 2
    } else {
        layer + 1
    };
    let classes = net.class_count();
    let out_shape = &net.shapes()[layer + 1];
    let (maps, plane) = (out_shape[0], out_shape[1] * out_shape[2]);
    let mut scores = Vec::with_capacity(classes);
    for class in 0..classes {
        let idx: Vec<usize> = data
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, &y)| y == class)
            .map(|(i, _)| i)
            .take(per_class)
            .collect();
        if idx.is_empty() {
            return Err(Error::EmptyCalibrationClass(class));
        }
        let (x, _) = data.batch(&idx)?;
        let cache = net.forward(&x)?;
        let act = cache.activations[tap].data();
        let mut s = vec![0.0f64; maps];
        for sample in act.chunks_exact(maps * plane) {
            for (f, chunk) in sample.chunks_exact(plane).enumerate() {
                s[f] += chunk.iter().map(|v| v.abs() as f64).sum::<f64>();
            }
        }
        s.iter_mut().for_each(|v| *v /= idx.len() as f64);
        scores.push(s);
    }
    Ok(scores)
}

/// L/C of one trainable layer; conv layers need calibration data.
pub fn layer_lc(
    net: &Network,
    layer: usize,
    calibration: Option<&LabeledDataset>,
    per_class: usize,
) -> Result<LcReport> {
    match net.spec().layers.get(layer) {
        Some(LayerSpec::Dense { .. }) => fc_lc(&fc_reachability(net, layer)?, layer),
        Some(LayerSpec::Conv { .. }) => {
            let data =
                calibration.ok_or_else(|| Error::invalid("conv L/C needs calibration data"))?;
            conv_lc(
                &conv_contribution(&conv_map_scores(net, layer, data, per_class)?)?,
                layer,
            )
        }
        _ => Err(Error::invalid(format!("layer {layer} has no weights"))),
    }
}

/// One CSV row of an L/C-versus-θ curve.
#[derive(Debug, Clone, PartialEq)]
pub struct LcRow {
    pub theta: f64,
    pub p: f64,
    pub report: LcReport,
}

/// Masks for one θ: `(layer index, mask)` per trainable layer.
pub type MaskSet = Vec<(usize, Vec<u8>)>;

/// L/C of every trainable layer of `net` under each θ's masks.
pub fn lc_vs_sparsity(
    net: &Network,
    masks_by_theta: &[(f64, MaskSet)],
    p: f64,
    calibration: Option<&LabeledDataset>,
) -> Result<Vec<LcRow>> {
    let mut rows = Vec::new();
    for (theta, masks) in masks_by_theta {
        let mut masked = net.clone();
        for (li, mask) in masks {
            masked
                .params_mut(*li)
                .ok_or_else(|| Error::invalid(format!("layer {li} has no weights")))?
                .weights
                .set_mask(mask.clone())?;
        }
        for li in masked.trainable_layers() {
            let report = layer_lc(&masked, li, calibration, DEFAULT_CALIBRATION_PER_CLASS)?;
            rows.push(LcRow {
                theta: *theta,
                p,
                report,
            });
        }
    }
    Ok(rows)
}

pub const LC_ROWS_HEADER: &str =
    "layer,theta,p,L,C,unit_total,class_total,connections,per_class_counts";

pub fn write_lc_rows<W: Write>(mut out: W, rows: &[LcRow]) -> std::io::Result<()> {
    writeln!(out, "{LC_ROWS_HEADER}")?;
    for r in rows {
        let counts: Vec<String> = r
            .report
            .per_class_counts
            .iter()
            .map(usize::to_string)
            .collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.report.layer,
            sig10(r.theta),
            sig10(r.p),
            sig10(r.report.l),
            sig10(r.report.c),
            r.report.unit_total,
            r.report.class_total,
            r.report.connections(),
            counts.join(";")
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 13 units, 2 classes: units 0..7 reach class 0, units 0 and 6..13
    /// reach class 1 (units 0 and 6 contribute to both).
    fn two_cluster_relation() -> ContributionRelation {
        let mut bits = vec![0u8; 26];
        for u in 0..7 {
            bits[u * 2] = 1;
        }
        bits[1] = 1;
        for u in 6..13 {
            bits[u * 2 + 1] = 1;
        }
        ContributionRelation::new(13, 2, bits, Provenance::Reachability).unwrap()
    }

    #[test]
    fn two_cluster_values() {
        let r = fc_lc(&two_cluster_relation(), 0).unwrap();
        assert_eq!(r.per_class_counts, vec![7, 8]);
        assert_eq!(r.per_class_l(), vec![7.0 / 13.0, 8.0 / 13.0]);
        assert!((r.l - 15.0 / 26.0).abs() < 1e-15);
        assert_eq!(
            r.connections(),
            r.per_unit_class_counts.iter().sum::<usize>()
        );
    }

    #[test]
    fn full_and_empty_relations() {
        let full = ContributionRelation::new(3, 2, vec![1; 6], Provenance::Reachability).unwrap();
        let r = fc_lc(&full, 0).unwrap();
        assert_eq!((r.l, r.c), (1.0, 1.0));
        let empty =
            ContributionRelation::new(3, 2, vec![0; 6], Provenance::ActivationWindow).unwrap();
        let r = conv_lc(&empty, 0).unwrap();
        assert_eq!((r.l, r.c), (0.0, 0.0));
    }

    #[test]
    fn neuron_in_both_classes_has_unit_c() {
        let rel = ContributionRelation::new(1, 2, vec![1, 1], Provenance::Reachability).unwrap();
        let r = fc_lc(&rel, 0).unwrap();
        assert_eq!(r.per_unit_class_counts, vec![2]);
        assert_eq!(r.c, 1.0);
    }

    #[test]
    fn degenerate_relation_errors() {
        let rel = ContributionRelation::new(0, 2, vec![], Provenance::Reachability).unwrap();
        assert!(matches!(fc_lc(&rel, 0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn window_example() {
        let s = [10.0, 12.0, 11.0, 50.0];
        let (lo, hi) = activation_window(&s);
        // μ = 20.75, σ² = (10.75² + 8.75² + 9.75² + 29.25²) / 4
        let sd = ((10.75f64.powi(2) + 8.75f64.powi(2) + 9.75f64.powi(2) + 29.25f64.powi(2)) / 4.0)
            .sqrt();
        assert!((sd - 16.902).abs() < 1e-3);
        assert!((lo - (20.75 - sd)).abs() < 1e-12);
        assert!((hi - (20.75 + sd)).abs() < 1e-12);
        let rel = conv_contribution(&[s.to_vec(), s.to_vec()]).unwrap();
        for f in 0..3 {
            assert!(rel.contributes(f, 0) && rel.contributes(f, 1));
        }
        assert!(!rel.contributes(3, 0));
        let r = conv_lc(&rel, 0).unwrap();
        assert_eq!(r.l, 0.75);
        assert_eq!(r.c, 0.75);
    }

    #[test]
    fn flat_scores_all_contribute() {
        let rel = conv_contribution(&[vec![3.0; 5]]).unwrap();
        assert!(rel.bits().iter().all(|&b| b == 1));
        let rel = conv_contribution(&[vec![7.0]]).unwrap();
        assert!(rel.contributes(0, 0));
    }

    #[test]
    fn empty_calibration_class_errors() {
        assert!(matches!(
            conv_contribution(&[vec![1.0], vec![]]),
            Err(Error::EmptyCalibrationClass(1))
        ));
    }

    #[test]
    fn reachability_full_and_empty() {
        let full = vec![1u8; 12];
        let rel = reachability_from_masks(&[
            MaskView {
                rows: 3,
                cols: 4,
                mask: &full,
            },
            MaskView {
                rows: 2,
                cols: 3,
                mask: &full[..6],
            },
        ])
        .unwrap();
        assert!(rel.bits().iter().all(|&b| b == 1));
        let none = vec![0u8; 12];
        let rel = reachability_from_masks(&[
            MaskView {
                rows: 3,
                cols: 4,
                mask: &none,
            },
            MaskView {
                rows: 2,
                cols: 3,
                mask: &full[..6],
            },
        ])
        .unwrap();
        assert!(rel.bits().iter().all(|&b| b == 0));
    }
}
