//! Experiment workflow: structure before training, train under fixed
//! masks, evaluate, sweep p and θ, and report densities and heat maps.

mod manifest;
mod pipeline;
mod report;

pub use manifest::{configure_threads, git_blob_sha1, hash_file, Manifest, THREADS_ENV};
pub use pipeline::{
    choose_p, init_network, run_meta, run_pipeline, structure_initial, structured_checkpoint,
    sweep_p, sweep_theta, write_sweep_csv, write_sweep_layers_csv, LayerSweepRow, PipelineOutcome,
    StructuredLayers, SweepPoint, SweepResult, SWEEP_HEADER, SWEEP_LAYERS_HEADER,
};
pub use report::{
    density_report, heatmap_export, heatmap_pgm, parse_pgm_header, write_density_csv, DensityRow,
    PgmHeader, DENSITY_HEADER,
};

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{load_cifar10_bin, load_mnist_idx, synthetic_blobs, LabeledDataset};
use crate::error::{Error, Result};
use crate::fmt::sig10;
use crate::nn::{LayerSpec, Network, NetworkSpec};
use crate::rng::{derive_seed_path, seeded, streams};

pub const DEFAULT_LR_DENSE: f64 = 0.1;
pub const DEFAULT_LR_CONV: f64 = 0.05;

fn default_epochs() -> usize {
    5
}

fn default_batch() -> usize {
    64
}

fn one() -> usize {
    1
}

/// Plain minibatch SGD settings. `learning_rate` left unset resolves to
/// 0.1 for dense-only nets and 0.05 for nets with a conv layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Evaluate on the test split every this many epochs (and after the last).
    #[serde(default = "one")]
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: None,
            seed: 0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config(
                "epochs, batch_size and eval_every must be positive".into(),
            ));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!(
                    "learning_rate {lr} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Copy with the learning rate filled in for `spec`.
    pub fn resolved(&self, spec: &NetworkSpec) -> Self {
        let has_conv = spec
            .layers
            .iter()
            .any(|l| matches!(l, LayerSpec::Conv { .. }));
        let default = if has_conv {
            DEFAULT_LR_CONV
        } else {
            DEFAULT_LR_DENSE
        };
        Self {
            learning_rate: Some(self.learning_rate.unwrap_or(default)),
            ..self.clone()
        }
    }

    pub fn lr(&self, spec: &NetworkSpec) -> f64 {
        self.resolved(spec).learning_rate.expect("resolved")
    }
}

/// Where the train/test splits come from. Relative paths resolve against
/// the directory passed to [`DatasetSpec::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_limit: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_limit: Option<usize>,
    },
    Cifar10 {
        train: Vec<PathBuf>,
        test: Vec<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_limit: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_limit: Option<usize>,
    },
    Synthetic {
        classes: usize,
        dims: usize,
        per_class: usize,
        test_per_class: usize,
        spread: f64,
        seed: u64,
    },
}

/// Train and test splits.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

impl DatasetSpec {
    pub fn input_paths(&self) -> Vec<PathBuf> {
        match self {
            DatasetSpec::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => vec![
                train_images.clone(),
                train_labels.clone(),
                test_images.clone(),
                test_labels.clone(),
            ],
            DatasetSpec::Cifar10 { train, test, .. } => train.iter().chain(test).cloned().collect(),
            DatasetSpec::Synthetic { .. } => Vec::new(),
        }
    }

    /// Same spec with every path joined onto `base`.
    pub fn rebased(&self, base: &Path) -> Self {
        let j = |p: &PathBuf| base.join(p);
        match self {
            DatasetSpec::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
                train_limit,
                test_limit,
            } => DatasetSpec::Mnist {
                train_images: j(train_images),
                train_labels: j(train_labels),
                test_images: j(test_images),
                test_labels: j(test_labels),
                train_limit: *train_limit,
                test_limit: *test_limit,
            },
            DatasetSpec::Cifar10 {
                train,
                test,
                train_limit,
                test_limit,
            } => DatasetSpec::Cifar10 {
                train: train.iter().map(j).collect(),
                test: test.iter().map(j).collect(),
                train_limit: *train_limit,
                test_limit: *test_limit,
            },
            s @ DatasetSpec::Synthetic { .. } => s.clone(),
        }
    }

    /// Load both splits, reshaping samples to `input` when the element
    /// counts agree (flat MNIST rows feed a `[1, 28, 28]` conv input).
    pub fn load(&self, input: &[usize]) -> Result<Splits> {
        let limit = |ds: LabeledDataset, n: Option<usize>| match n {
            Some(n) => ds.take(n),
            None => ds,
        };
        let (train, test) = match self {
            DatasetSpec::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
                train_limit,
                test_limit,
            } => (
                limit(load_mnist_idx(train_images, train_labels)?, *train_limit),
                limit(load_mnist_idx(test_images, test_labels)?, *test_limit),
            ),
            DatasetSpec::Cifar10 {
                train,
                test,
                train_limit,
                test_limit,
            } => (
                limit(load_cifar10_bin(train)?, *train_limit),
                limit(load_cifar10_bin(test)?, *test_limit),
            ),
            &DatasetSpec::Synthetic {
                classes,
                dims,
                per_class,
                test_per_class,
                spread,
                seed,
            } => {
                if test_per_class == 0 {
                    return Err(Error::Config(
                        "synthetic test_per_class must be positive".into(),
                    ));
                }
                let all = synthetic_blobs(classes, dims, per_class + test_per_class, spread, seed)?;
                let cut = classes * per_class;
                let train_idx: Vec<usize> = (0..cut).collect();
                let test_idx: Vec<usize> = (cut..all.len()).collect();
                let (xs, ys) = all.batch(&train_idx)?;
                let (xt, yt) = all.batch(&test_idx)?;
                (
                    LabeledDataset::new(xs, ys, classes)?,
                    LabeledDataset::new(xt, yt, classes)?,
                )
            }
        };
        let fit = |ds: LabeledDataset| -> Result<LabeledDataset> {
            if ds.sample_dims() == input {
                return Ok(ds);
            }
            let have: usize = ds.sample_dims().iter().product();
            let want: usize = input.iter().product();
            if have != want {
                return Err(Error::Config(format!(
                    "dataset samples {:?} do not fit network input {input:?}",
                    ds.sample_dims()
                )));
            }
            ds.reshaped(input)
        };
        Ok(Splits {
            train: fit(train)?,
            test: fit(test)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's minibatches, weighted by batch size.
    pub loss: f64,
    pub test_accuracy: Option<f64>,
    /// Mask nnz per trainable layer after the epoch.
    pub mask_nnz: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

pub const HISTORY_HEADER: &str = "epoch,loss,test_accuracy";

impl History {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.iter().rev().find_map(|e| e.test_accuracy)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{HISTORY_HEADER}")?;
        for e in &self.epochs {
            let acc = e.test_accuracy.map(sig10).unwrap_or_default();
            writeln!(out, "{},{},{}", e.epoch, sig10(e.loss), acc)?;
        }
        Ok(())
    }
}

fn mask_counts(net: &Network) -> Vec<usize> {
    net.trainable_layers()
        .iter()
        .map(|&li| net.params(li).expect("trainable").weights.mask_nnz())
        .collect()
}

/// Minibatch SGD with a per-epoch seeded shuffle. After every epoch the
/// masks must be unchanged and every weight outside its mask zero.
pub fn train(
    net: &mut Network,
    data: &LabeledDataset,
    test: Option<&LabeledDataset>,
    config: &TrainConfig,
) -> Result<History> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let lr = config.lr(net.spec()) as f32;
    let before = mask_counts(net);
    let mut history = History::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut seeded(derive_seed_path(
            config.seed,
            &[streams::SHUFFLE, epoch as u64],
        )));
        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(config.batch_size) {
            let (x, y) = data.batch(chunk)?;
            let cache = net.forward(&x)?;
            let (loss, grads) = net.backward(&cache, &y)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged(format!(
                    "loss {loss} in epoch {epoch}"
                )));
            }
            net.sgd_step(&grads, lr)?;
            loss_sum += loss as f64 * chunk.len() as f64;
        }
        let nnz = mask_counts(net);
        if nnz != before || !net.satisfies_constraint() {
            return Err(Error::Constraint(format!(
                "mask constraint broken after epoch {epoch}"
            )));
        }
        let last = epoch + 1 == config.epochs;
        let test_accuracy = match test {
            Some(t) if last || (epoch + 1) % config.eval_every == 0 => Some(evaluate(net, t)?),
            _ => None,
        };
        history.epochs.push(EpochRecord {
            epoch,
            loss: loss_sum / data.len() as f64,
            test_accuracy,
            mask_nnz: nnz,
        });
    }
    Ok(history)
}

pub const EVAL_BATCH: usize = 500;

/// Fraction of samples whose arg-max logit (first on ties) is the label.
pub fn evaluate(net: &Network, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let classes = net.class_count();
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let (x, y) = data.batch(chunk)?;
        let logits = net.predict(&x)?;
        for (row, &label) in logits.data().chunks(classes).zip(&y) {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            correct += (best == label) as usize;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
