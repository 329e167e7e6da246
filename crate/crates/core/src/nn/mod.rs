//! Minimal dense-tensor engine with reverse-mode automatic differentiation
//! and the layer/loss inventory the assessment model needs.
//!
//! Tensors are `ndarray::ArrayD<f64>` in standard row-major layout. A
//! [`Tape`] records the forward graph; [`Tape::backward`] propagates exact
//! gradients to every recorded node. Parameters live in a [`ParamSet`] and
//! are bound onto a tape per forward pass.

mod blocks;
mod gradcheck;
mod layers;
mod losses;
mod ops;
mod optim;
mod params;
mod tape;

pub use blocks::{nonlocal_attention, NonLocalVars, INSTANCE_EPS};
pub use gradcheck::{check_coords, max_rel_error, numeric_grad, rel_err, CheckReport};
pub use losses::{
    combined_pretrain_loss, detection_loss, mse_loss, squared_feature_distance,
    triplet_intensity_loss,
};
pub use optim::{Adam, AdamConfig};
pub use params::{he_fan_in, zeros, BoundParams, Param, ParamSet};
pub use tape::{BackwardArgs, Gradients, Tape, Var};

use thiserror::Error;

/// Dense row-major tensor of f64 values.
pub type Tensor = ndarray::ArrayD<f64>;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("row {row} has norm {norm}; features must be L2-normalized within 1e-6")]
    NotNormalized { row: usize, norm: f64 },
    #[error("channel count {0} must be even for the attention bottleneck")]
    OddChannels(usize),
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("unknown parameter '{0}'")]
    UnknownParam(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
