//! The five ablation variants and the end-to-end pipeline runner.

use serde::Serialize;

use super::config::{OperationList, TrainConfig};
use super::saan::{EvalMetrics, SaanModel};
use super::train::{finetune, pretrain};
use super::TrainError;
use crate::raster::Image;

/// Paper-style ablation toggles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationVariant {
    /// Generic branch only.
    NoStyleBranch,
    /// Style-specific branch only.
    NoGenericBranch,
    /// Pretrain with the pre-extension operation list.
    LegacyOperations,
    /// Drop each kind's middle parameter set during pretraining.
    TwoLevel,
    /// Replace the non-local block with the identity.
    NoFusion,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 5] = [
        AblationVariant::NoStyleBranch,
        AblationVariant::NoGenericBranch,
        AblationVariant::LegacyOperations,
        AblationVariant::TwoLevel,
        AblationVariant::NoFusion,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AblationVariant::NoStyleBranch => "no-style-branch",
            AblationVariant::NoGenericBranch => "no-generic-branch",
            AblationVariant::LegacyOperations => "legacy-operations",
            AblationVariant::TwoLevel => "two-level",
            AblationVariant::NoFusion => "no-fusion",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|v| v.name() == name)
    }

    /// Derive the variant's config from a base config.
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        match self {
            AblationVariant::NoStyleBranch => cfg.model.use_sab = false,
            AblationVariant::NoGenericBranch => cfg.model.use_gab = false,
            AblationVariant::LegacyOperations => {
                cfg.pretrain.operation_list = OperationList::Legacy
            }
            AblationVariant::TwoLevel => cfg.pretrain.levels = 2,
            AblationVariant::NoFusion => cfg.model.use_fusion = false,
        }
        cfg
    }
}

/// One row of the ablation table.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub srcc: f64,
    pub pcc: f64,
    pub accuracy: f64,
}

/// Pretrain, assemble, fine-tune, and evaluate under one config.
pub fn run_pipeline(
    pretrain_images: &[Image],
    train: &[(Image, f64)],
    test: &[(Image, f64)],
    cfg: &TrainConfig,
) -> Result<(SaanModel, EvalMetrics), TrainError> {
    let (pm, _) = pretrain(pretrain_images, &cfg.model, &cfg.pretrain)?;
    let mut model = SaanModel::init(&cfg.model, cfg.finetune.seed)?;
    model.load_pretrained_trunk(&pm.params, cfg.finetune.init_aes_from_pretrained);
    finetune(&mut model, train, &cfg.finetune)?;
    let metrics = model.evaluate(test)?;
    Ok((model, metrics))
}

/// Run the requested variants (all five when the list is empty) and emit
/// one table row each.
pub fn run_ablations(
    pretrain_images: &[Image],
    train: &[(Image, f64)],
    test: &[(Image, f64)],
    base: &TrainConfig,
    variants: &[AblationVariant],
) -> Result<Vec<AblationRow>, TrainError> {
    let list: Vec<AblationVariant> = if variants.is_empty() {
        AblationVariant::ALL.to_vec()
    } else {
        variants.to_vec()
    };
    let mut rows = Vec::with_capacity(list.len());
    for v in list {
        let cfg = v.apply(base);
        let (_, m) = run_pipeline(pretrain_images, train, test, &cfg)?;
        rows.push(AblationRow {
            variant: v.name().to_string(),
            srcc: m.srcc,
            pcc: m.pcc,
            accuracy: m.accuracy,
        });
    }
    Ok(rows)
}

/// Serialize ablation rows as the table CSV: variant, srcc, pcc, accuracy.
pub fn write_ablation_table(rows: &[AblationRow], mut w: impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "variant,srcc,pcc,accuracy")?;
    for r in rows {
        writeln!(w, "{},{:.6},{:.6},{:.6}", r.variant, r.srcc, r.pcc, r.accuracy)?;
    }
    Ok(())
}
