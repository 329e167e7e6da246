//! Training configuration: typed sections, TOML parsing that reports every
//! offending key, and the learning-rate schedule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imageops::DistortionKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Architecture switches and sizes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ModelConfig {
    /// Input resolution; images are resized to `input_res x input_res`.
    pub input_res: usize,
    /// Channel width of every encoder's final stage.
    pub channels: usize,
    /// The two hidden-layer widths of the scoring head.
    pub mlp_hidden: Vec<usize>,
    /// Style-specific branch enabled.
    pub use_sab: bool,
    /// Generic aesthetic branch enabled.
    pub use_gab: bool,
    /// Non-local spatial fusion enabled (identity otherwise).
    pub use_fusion: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_res: 224,
            channels: 64,
            mlp_hidden: vec![256, 64],
            use_sab: true,
            use_gab: true,
            use_fusion: true,
        }
    }
}

/// Which portion of the operation table a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperationList {
    /// All eleven kinds.
    Full,
    /// Noise, quantization, blur, exposure, rotation, and identity only.
    Legacy,
}

/// Self-supervised pretraining settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    /// Weight on the intensity-detection loss once it activates.
    pub lambda: f64,
    /// First epoch (0-based) at which the detection loss is active.
    pub lambda_activation_epoch: usize,
    pub weight_decay: f64,
    pub seed: u64,
    /// 3 uses the full level lists; 2 drops the middle parameter set.
    pub levels: u8,
    pub operation_list: OperationList,
    /// Restrict sampling to these kinds (names as in the CLI); None = all.
    pub enabled_kinds: Option<Vec<String>>,
    /// Distinct kinds drawn per image per epoch.
    pub kinds_per_image: usize,
    /// Width of the L2-normalized feature head used by the detection loss.
    pub embed_dim: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 64,
            learning_rate: 1e-3,
            lr_decay_every: 10,
            lr_decay_factor: 0.1,
            lambda: 0.1,
            lambda_activation_epoch: 30,
            weight_decay: 5e-4,
            seed: 0,
            levels: 3,
            operation_list: OperationList::Full,
            enabled_kinds: None,
            kinds_per_image: 3,
            embed_dim: 128,
        }
    }
}

impl PretrainConfig {
    /// Resolve `enabled_kinds` names to kinds (None = every kind).
    pub fn enabled(&self) -> Result<Option<Vec<DistortionKind>>, ConfigError> {
        match &self.enabled_kinds {
            None => Ok(None),
            Some(names) => {
                let mut kinds = Vec::with_capacity(names.len());
                for n in names {
                    kinds.push(n.parse::<DistortionKind>().map_err(|e| {
                        ConfigError::Invalid(vec![format!("pretrain.enabled_kinds: {e}")])
                    })?);
                }
                Ok(Some(kinds))
            }
        }
    }
}

/// Supervised fine-tuning settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    /// Decay stops compounding past this epoch.
    pub lr_decay_cap_epochs: Option<usize>,
    pub weight_decay: f64,
    pub seed: u64,
    /// Initialize the trainable aesthetic encoder from the pretrained trunk.
    pub init_aes_from_pretrained: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 64,
            learning_rate: 1e-5,
            lr_decay_every: 10,
            lr_decay_factor: 0.1,
            lr_decay_cap_epochs: Some(40),
            weight_decay: 5e-4,
            seed: 0,
            init_aes_from_pretrained: true,
        }
    }
}

/// Which ablation variants a sweep runs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default)]
pub struct AblationConfig {
    /// Variant names; empty means all five.
    pub variants: Vec<String>,
}

/// The full config file: `[model]`, `[pretrain]`, `[finetune]`, `[ablation]`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub ablation: AblationConfig,
}

const MODEL_KEYS: &[&str] = &[
    "input_res",
    "channels",
    "mlp_hidden",
    "use_sab",
    "use_gab",
    "use_fusion",
];
const PRETRAIN_KEYS: &[&str] = &[
    "epochs",
    "batch_size",
    "learning_rate",
    "lr_decay_every",
    "lr_decay_factor",
    "lambda",
    "lambda_activation_epoch",
    "weight_decay",
    "seed",
    "levels",
    "operation_list",
    "enabled_kinds",
    "kinds_per_image",
    "embed_dim",
];
const FINETUNE_KEYS: &[&str] = &[
    "epochs",
    "batch_size",
    "learning_rate",
    "lr_decay_every",
    "lr_decay_factor",
    "lr_decay_cap_epochs",
    "weight_decay",
    "seed",
    "init_aes_from_pretrained",
];
const ABLATION_KEYS: &[&str] = &["variants"];

fn unknown_keys(value: &toml::Value) -> Vec<String> {
    let mut issues = Vec::new();
    let Some(table) = value.as_table() else {
        return vec!["top level must be a table".to_string()];
    };
    let sections: &[(&str, &[&str])] = &[
        ("model", MODEL_KEYS),
        ("pretrain", PRETRAIN_KEYS),
        ("finetune", FINETUNE_KEYS),
        ("ablation", ABLATION_KEYS),
    ];
    for (key, sub) in table {
        match sections.iter().find(|(name, _)| name == key) {
            None => issues.push(format!("unknown section '{key}'")),
            Some((name, allowed)) => {
                if let Some(subtable) = sub.as_table() {
                    for k in subtable.keys() {
                        if !allowed.contains(&k.as_str()) {
                            issues.push(format!("unknown key '{name}.{k}'"));
                        }
                    }
                } else {
                    issues.push(format!("section '{name}' must be a table"));
                }
            }
        }
    }
    issues
}

impl TrainConfig {
    /// Parse and fully validate a TOML config. Unknown keys and semantic
    /// violations are all collected before returning.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let value: toml::Value = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let issues = unknown_keys(&value);
        if !issues.is_empty() {
            return Err(ConfigError::Invalid(issues));
        }
        let cfg: TrainConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Collects every violated constraint.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        let m = &self.model;
        if m.input_res < 16 || m.input_res % 16 != 0 {
            issues.push(format!(
                "model.input_res: {} must be a positive multiple of 16",
                m.input_res
            ));
        }
        if m.channels < 2 || m.channels % 2 != 0 {
            issues.push(format!("model.channels: {} must be even and >= 2", m.channels));
        }
        if m.mlp_hidden.len() != 2 || m.mlp_hidden.iter().any(|&h| h == 0) {
            issues.push(format!(
                "model.mlp_hidden: {:?} must be two nonzero widths",
                m.mlp_hidden
            ));
        }
        if !m.use_sab && !m.use_gab {
            issues.push("model: at least one of use_sab/use_gab must be enabled".to_string());
        }
        let p = &self.pretrain;
        if p.levels != 2 && p.levels != 3 {
            issues.push(format!("pretrain.levels: {} must be 2 or 3", p.levels));
        }
        if p.batch_size == 0 || p.kinds_per_image == 0 || p.embed_dim == 0 {
            issues.push("pretrain: batch_size, kinds_per_image, embed_dim must be nonzero".into());
        }
        if p.lambda < 0.0 {
            issues.push(format!("pretrain.lambda: {} must be nonnegative", p.lambda));
        }
        if p.lr_decay_every == 0 {
            issues.push("pretrain.lr_decay_every must be nonzero".into());
        }
        if let Some(names) = &p.enabled_kinds {
            for n in names {
                if n.parse::<DistortionKind>().is_err() {
                    issues.push(format!("pretrain.enabled_kinds: unknown kind '{n}'"));
                }
            }
        }
        let f = &self.finetune;
        if f.batch_size == 0 {
            issues.push("finetune.batch_size must be nonzero".into());
        }
        if f.lr_decay_every == 0 {
            issues.push("finetune.lr_decay_every must be nonzero".into());
        }
        for v in &self.ablation.variants {
            if !crate::model::ablation::AblationVariant::ALL
                .iter()
                .any(|a| a.name() == v)
            {
                issues.push(format!("ablation.variants: unknown variant '{v}'"));
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }
}

/// Step-decay schedule: the base rate is multiplied by `factor` once per
/// `every` epochs, with decay frozen past `cap` when given.
pub fn lr_at_epoch(base: f64, epoch: usize, every: usize, factor: f64, cap: Option<usize>) -> f64 {
    let effective = cap.map_or(epoch, |c| epoch.min(c));
    base * factor.powi((effective / every) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_all_reported() {
        let text = r#"
[model]
channels = 16
typo_one = 1
typo_two = 2

[pretrain]
third_typo = 3
"#;
        let err = TrainConfig::from_toml(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("model.typo_one"));
        assert!(msg.contains("model.typo_two"));
        assert!(msg.contains("pretrain.third_typo"));
    }

    #[test]
    fn semantic_violations_are_collected() {
        let text = r#"
[model]
channels = 7
use_sab = false
use_gab = false

[pretrain]
levels = 5
"#;
        let err = TrainConfig::from_toml(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("channels"));
        assert!(msg.contains("use_sab"));
        assert!(msg.contains("levels"));
    }

    #[test]
    fn lr_schedule_steps_and_caps() {
        assert_eq!(lr_at_epoch(1e-3, 0, 10, 0.1, None), 1e-3);
        assert_eq!(lr_at_epoch(1e-3, 9, 10, 0.1, None), 1e-3);
        assert!((lr_at_epoch(1e-3, 10, 10, 0.1, None) - 1e-4).abs() < 1e-18);
        assert!((lr_at_epoch(1e-3, 35, 10, 0.1, None) - 1e-6).abs() < 1e-18);
        // Capped at 40: epochs past the cap keep the epoch-40 rate.
        let capped = lr_at_epoch(1e-5, 55, 10, 0.1, Some(40));
        assert!((capped - 1e-9).abs() < 1e-22);
    }

    #[test]
    fn roundtrip_partial_config() {
        let text = r#"
[model]
input_res = 32
channels = 16
mlp_hidden = [32, 16]

[pretrain]
epochs = 5
enabled_kinds = ["gaussian-noise", "exposure", "none"]
"#;
        let cfg = TrainConfig::from_toml(text).unwrap();
        assert_eq!(cfg.model.input_res, 32);
        assert_eq!(cfg.pretrain.epochs, 5);
        assert_eq!(cfg.finetune.epochs, 40);
        let kinds = cfg.pretrain.enabled().unwrap().unwrap();
        assert_eq!(kinds.len(), 3);
    }
}
