//! Model assembly, the two-phase training protocol, evaluation, and the
//! ablation harness.

pub mod ablation;
pub mod config;
mod encoders;
pub mod pretext;
mod saan;
mod train;

pub use ablation::{run_ablations, run_pipeline, AblationRow, AblationVariant};
pub use config::{
    lr_at_epoch, AblationConfig, ConfigError, FinetuneConfig, ModelConfig, OperationList,
    PretrainConfig, TrainConfig,
};
pub use encoders::stage_channels;
pub use pretext::{make_pretext_batch, image_batch_tensor, OpTable, PretextSample};
pub use saan::{EvalMetrics, SaanModel};
pub use train::{
    finetune, pretext_classification_accuracy, pretrain, sibling_ordering_fraction,
    write_finetune_log, write_pretrain_log, FinetuneEpochLog, PretrainEpochLog, PretrainModel,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("batch mixes image sizes; resize inputs first")]
    MixedImageSizes,
    #[error("at least one branch must be enabled")]
    NoBranches,
    #[error("bad model config: {0}")]
    BadModelConfig(String),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Ops(#[from] crate::imageops::OpsError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}
