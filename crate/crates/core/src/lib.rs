//! Small-world structural pruning.
//!
//! Watts–Strogatz reference graphs, a masked dense/conv network trainer,
//! the small-world pruner that fixes each layer's mask before training,
//! the layer-connectivity (L) and clustering (C) metrics, dataset and
//! checkpoint I/O, and the experiment pipelines built on top of them.

pub mod data;
pub mod error;
pub mod fmt;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod pruner;
pub mod rng;
pub mod tensor;

pub use data::{Checkpoint, LabeledDataset};
pub use error::{Error, Result};
pub use graph::{LcPoint, UndirectedGraph};
pub use metrics::{ContributionRelation, LcReport};
pub use nn::{LayerSpec, Network, NetworkSpec};
pub use pruner::{SmallWorldConfig, StructuredLayer, Theta};
pub use tensor::{MaskedTensor, Tensor};
