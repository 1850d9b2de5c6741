//! Minimal trainable network core: dense and convolutional layers whose
//! weights carry binary masks enforced at every forward, backward, and
//! update step.

mod gradcheck;
mod kernels;
mod network;
mod spec;

pub use gradcheck::{
    finite_difference_check, reference_forward, reference_loss, relative_error, GradCheckReport,
    LayerCheck, MAX_CHECK_PARAMS, RELATIVE_FLOOR,
};
pub use network::{glorot_bound, ForwardCache, Gradients, LayerGrad, LayerParams, Network};
pub use spec::{LayerSpec, NetworkSpec};
