//! Desk-scale artistic-image aesthetics pipeline.
//!
//! The crate is organized around five subsystems:
//!
//! - [`imageops`]: the degradation operation table (noise, blur, exposure,
//!   rotation, cropping, stylization, convex bulge, pencil sketch, cutmix,
//!   quantization, identity) as pure seeded functions;
//! - [`curate`]: vote-to-score curation, splits, and CSV schemas;
//! - [`metrics`]: SRCC / PCC / accuracy / RMSE / EMD;
//! - [`nn`]: a dense-tensor engine with reverse-mode autodiff and the layer
//!   and loss inventory the model needs;
//! - [`model`]: the two-branch assessment network with AdaIN fusion, a
//!   non-local block, the self-supervised pretraining scheme, fine-tuning,
//!   evaluation, and ablation variants.
//!
//! [`toy`] provides deterministic synthetic corpora so every stage runs
//! without external data.

pub mod curate;
pub mod imageops;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod raster;
pub mod rng;
pub mod toy;

pub use imageops::{DistortionKind, DistortionSpec};
pub use metrics::{MetricReport, PairedScores, ScoreDistribution};
pub use model::{ModelConfig, SaanModel, TrainConfig};
pub use raster::Image;
