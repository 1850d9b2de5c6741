use std::io::Write;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::{train, History, Splits, TrainConfig};
use crate::data::Checkpoint;
use crate::error::{Error, Result};
use crate::fmt::sig10;
use crate::metrics::{layer_lc, DEFAULT_CALIBRATION_PER_CLASS};
use crate::nn::{Network, NetworkSpec};
use crate::pruner::{apply_structure, structure_network, SmallWorldConfig, StructuredLayer, Theta};
use crate::rng::{derive_seed, streams};

/// Glorot-initialised network seeded from the training seed. Dense
/// baselines and structured runs with the same seed start from the same W.
pub fn init_network(spec: &NetworkSpec, train: &TrainConfig) -> Result<Network> {
    Network::init(spec.clone(), derive_seed(train.seed, streams::INIT))
}

/// Checkpoint meta blob for a pipeline stage: the small-world and resolved
/// training configs.
pub fn run_meta(
    stage: &str,
    sw: &SmallWorldConfig,
    train: &TrainConfig,
    spec: &NetworkSpec,
) -> Result<Value> {
    Ok(json!({
        "stage": stage,
        "sw": serde_json::to_value(sw)?,
        "train": serde_json::to_value(train.resolved(spec))?,
    }))
}

/// Checkpoint of a structured (masked, untrained) network with each
/// layer's `W_sw` alongside.
pub fn structured_checkpoint(
    net: &Network,
    structured: &[(usize, StructuredLayer)],
    meta: Value,
) -> Result<Checkpoint> {
    let mut ck = Checkpoint::from_network(net, meta)?;
    for (li, s) in structured {
        ck.push_w_sw(*li, s.w_sw.clone());
    }
    Ok(ck)
}

/// Structuring results as `(layer index, result)` in layer order.
pub type StructuredLayers = Vec<(usize, StructuredLayer)>;

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub structured: Checkpoint,
    pub trained: Checkpoint,
    pub network: Network,
    pub layers: Vec<(usize, StructuredLayer)>,
    pub history: History,
}

/// Initialise and structure without training: the masked network (weights
/// `W∘mask`), the per-layer structuring results, and their checkpoint.
pub fn structure_initial(
    spec: &NetworkSpec,
    sw: &SmallWorldConfig,
    train_config: &TrainConfig,
) -> Result<(Network, StructuredLayers, Checkpoint)> {
    sw.validate()?;
    train_config.validate()?;
    let mut net = init_network(spec, train_config)?;
    let layers = structure_network(&net, sw)?;
    apply_structure(&mut net, &layers)?;
    let ck = structured_checkpoint(
        &net,
        &layers,
        run_meta("structured", sw, train_config, spec)?,
    )?;
    Ok((net, layers, ck))
}

/// Structure every dense/conv layer, then train from `W∘mask` with the
/// masks held fixed.
pub fn run_pipeline(
    spec: &NetworkSpec,
    sw: &SmallWorldConfig,
    train_config: &TrainConfig,
    splits: &Splits,
) -> Result<PipelineOutcome> {
    let (mut net, layers, structured) = structure_initial(spec, sw, train_config)?;
    let history = train(&mut net, &splits.train, Some(&splits.test), train_config)?;
    let trained = Checkpoint::from_network(&net, run_meta("trained", sw, train_config, spec)?)?;
    Ok(PipelineOutcome {
        structured,
        trained,
        network: net,
        layers,
        history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSweepRow {
    pub layer: usize,
    pub kind: &'static str,
    pub l: f64,
    pub c: f64,
    pub kept: usize,
    pub total: usize,
}

/// One trained sweep point with network totals and per-layer L/C.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub p: f64,
    pub theta: Theta,
    pub accuracy: f64,
    pub kept: usize,
    pub total: usize,
    pub layers: Vec<LayerSweepRow>,
    pub history: History,
}

impl SweepPoint {
    pub fn mean_l(&self) -> f64 {
        self.layers.iter().map(|r| r.l).sum::<f64>() / self.layers.len() as f64
    }

    pub fn mean_c(&self) -> f64 {
        self.layers.iter().map(|r| r.c).sum::<f64>() / self.layers.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

fn summarize(
    net: &Network,
    splits: &Splits,
    p: f64,
    theta: Theta,
    history: History,
) -> Result<SweepPoint> {
    let mut layers = Vec::new();
    for li in net.trainable_layers() {
        let report = layer_lc(net, li, Some(&splits.train), DEFAULT_CALIBRATION_PER_CLASS)?;
        let w = &net.params(li).expect("trainable").weights;
        layers.push(LayerSweepRow {
            layer: li,
            kind: net.spec().layers[li].kind(),
            l: report.l,
            c: report.c,
            kept: w.mask_nnz(),
            total: w.len(),
        });
    }
    Ok(SweepPoint {
        p,
        theta,
        accuracy: history
            .final_accuracy()
            .ok_or_else(|| Error::invalid("training recorded no accuracy"))?,
        kept: net.kept_weights(),
        total: net.total_weights(),
        layers,
        history,
    })
}

fn sorted(values: &[f64], what: &str) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Config(format!("{what} list is empty")));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Config(format!("{what} = {v} outside [0, 1]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// One full pipeline per p at fixed θ; points sorted by p.
pub fn sweep_p(
    spec: &NetworkSpec,
    p_values: &[f64],
    theta: &Theta,
    sw_seed: u64,
    train_config: &TrainConfig,
    splits: &Splits,
) -> Result<SweepResult> {
    let ps = sorted(p_values, "p")?;
    let points = ps
        .par_iter()
        .map(|&p| {
            let sw = SmallWorldConfig {
                p,
                theta: theta.clone(),
                seed: sw_seed,
                profile: None,
            };
            let out = run_pipeline(spec, &sw, train_config, splits)?;
            summarize(&out.network, splits, p, theta.clone(), out.history)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { points })
}

/// Structure once at `p`, cut nested masks for every θ from the same
/// `W_sw`, and train each θ independently from the same initial weights.
pub fn sweep_theta(
    spec: &NetworkSpec,
    theta_values: &[f64],
    p: f64,
    sw_seed: u64,
    train_config: &TrainConfig,
    splits: &Splits,
) -> Result<SweepResult> {
    let thetas = sorted(theta_values, "theta")?;
    train_config.validate()?;
    let init = init_network(spec, train_config)?;
    let structured = structure_network(&init, &SmallWorldConfig::new(p, thetas[0], sw_seed))?;
    let points = thetas
        .par_iter()
        .map(|&theta| {
            let mut net = init.clone();
            for (li, s) in &structured {
                net.params_mut(*li)
                    .expect("trainable")
                    .weights
                    .set_mask(s.mask_at(theta))?;
            }
            let history = train(&mut net, &splits.train, Some(&splits.test), train_config)?;
            summarize(&net, splits, p, Theta::Global(theta), history)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { points })
}

/// Largest p whose accuracy is within `delta` of the best.
pub fn choose_p(sweep: &SweepResult, delta: f64) -> Result<f64> {
    let best = sweep
        .points
        .iter()
        .map(|pt| pt.accuracy)
        .max_by(f64::total_cmp)
        .ok_or_else(|| Error::invalid("empty sweep"))?;
    Ok(sweep
        .points
        .iter()
        .filter(|pt| pt.accuracy >= best - delta)
        .map(|pt| pt.p)
        .max_by(f64::total_cmp)
        .expect("the best point qualifies"))
}

fn theta_cell(theta: &Theta) -> String {
    match theta {
        Theta::Global(t) => sig10(*t),
        Theta::PerLayer(ts) => ts.iter().map(|t| sig10(*t)).collect::<Vec<_>>().join(";"),
    }
}

pub const SWEEP_HEADER: &str = "p,theta,accuracy,kept_params,total_params,mean_L,mean_C";
pub const SWEEP_LAYERS_HEADER: &str = "p,theta,layer,kind,L,C,accuracy,kept_params,total_params";

/// One row per sweep point.
pub fn write_sweep_csv<W: Write>(mut out: W, sweep: &SweepResult) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for pt in &sweep.points {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            sig10(pt.p),
            theta_cell(&pt.theta),
            sig10(pt.accuracy),
            pt.kept,
            pt.total,
            sig10(pt.mean_l()),
            sig10(pt.mean_c())
        )?;
    }
    Ok(())
}

/// One row per (sweep point, trainable layer).
pub fn write_sweep_layers_csv<W: Write>(mut out: W, sweep: &SweepResult) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_LAYERS_HEADER}")?;
    for pt in &sweep.points {
        for r in &pt.layers {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                sig10(pt.p),
                theta_cell(&pt.theta),
                r.layer,
                r.kind,
                sig10(r.l),
                sig10(r.c),
                sig10(pt.accuracy),
                r.kept,
                r.total
            )?;
        }
    }
    Ok(())
}
