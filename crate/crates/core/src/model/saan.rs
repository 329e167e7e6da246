//! The assembled assessment network: style-specific branch (AdaIN of
//! aesthetic features with style statistics), generic aesthetic branch,
//! channel concatenation, non-local fusion, and the scoring MLP.

use serde::Serialize;

use super::config::ModelConfig;
use super::encoders::{
    init_plain_encoder, init_residual_encoder, plain_encoder_forward, residual_encoder_forward,
};
use super::pretext::image_batch_tensor;
use super::TrainError;
use crate::imageops::resize_bilinear;
use crate::metrics::{self, PairedScores};
use crate::nn::{he_fan_in, zeros, BoundParams, NonLocalVars, ParamSet, Tape, Var};
use crate::raster::Image;
use crate::rng::{chacha, mix};

/// Parameter container for the full model. Branch toggles come from the
/// config; disabled branches have no parameters at all.
#[derive(Debug, Clone)]
pub struct SaanModel {
    pub config: ModelConfig,
    pub params: ParamSet,
}

/// Metrics reported by [`SaanModel::evaluate`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EvalMetrics {
    pub srcc: f64,
    pub pcc: f64,
    pub accuracy: f64,
}

impl SaanModel {
    /// Channel count entering the fusion stage.
    pub fn fused_channels(&self) -> usize {
        match (self.config.use_sab, self.config.use_gab) {
            (true, true) => 2 * self.config.channels,
            _ => self.config.channels,
        }
    }

    /// He-initialized model; the non-local output projection and the final
    /// scoring layer start at zero, so a fresh model scores every input
    /// with the final bias.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, TrainError> {
        config_check(config)?;
        let mut params = ParamSet::new();
        let c = config.channels;
        if config.use_sab {
            let mut rng = chacha(mix(seed, &[0x57]));
            init_plain_encoder(&mut params, &mut rng, "style", c);
            let mut rng = chacha(mix(seed, &[0xae5]));
            init_residual_encoder(&mut params, &mut rng, "aes", c);
        }
        if config.use_gab {
            let mut rng = chacha(mix(seed, &[0x6e4]));
            init_residual_encoder(&mut params, &mut rng, "gen", c);
        }
        let fused = match (config.use_sab, config.use_gab) {
            (true, true) => 2 * c,
            _ => c,
        };
        if config.use_fusion {
            let mut rng = chacha(mix(seed, &[0x41b]));
            let c2 = fused / 2;
            params.insert("nlb.theta.w", he_fan_in(&mut rng, &[c2, fused], fused), true);
            params.insert("nlb.phi.w", he_fan_in(&mut rng, &[c2, fused], fused), true);
            params.insert("nlb.g.w", he_fan_in(&mut rng, &[c2, fused], fused), true);
            params.insert("nlb.z.w", zeros(&[fused, c2]), true);
        }
        let mut rng = chacha(mix(seed, &[0x313]));
        let (h1, h2) = (config.mlp_hidden[0], config.mlp_hidden[1]);
        params.insert("mlp.fc1.w", he_fan_in(&mut rng, &[fused, h1], fused), true);
        params.insert("mlp.fc1.b", zeros(&[h1]), true);
        params.insert("mlp.fc2.w", he_fan_in(&mut rng, &[h1, h2], h1), true);
        params.insert("mlp.fc2.b", zeros(&[h2]), true);
        params.insert("mlp.out.w", zeros(&[h2, 1]), true);
        params.insert("mlp.out.b", zeros(&[1]), true);
        Ok(Self {
            config: config.clone(),
            params,
        })
    }

    /// Copy a pretrained trunk into the generic encoder and, when asked,
    /// into the style branch's aesthetic encoder too.
    pub fn load_pretrained_trunk(&mut self, pretrained: &ParamSet, into_aes: bool) {
        if self.config.use_gab {
            self.params
                .adopt_values(pretrained, |n| n.starts_with("gen.").then(|| n.to_string()));
        }
        if into_aes && self.config.use_sab {
            self.params.adopt_values(pretrained, |n| {
                n.strip_prefix("gen.").map(|rest| format!("aes.{rest}"))
            });
        }
    }

    /// Fine-tuning freeze protocol: the style encoder and the pretrained
    /// generic encoder stay fixed; the aesthetic encoder, fusion block, and
    /// scoring head train.
    pub fn apply_finetune_freeze(&mut self) {
        self.params.set_trainable_prefix("style.", false);
        self.params.set_trainable_prefix("gen.", false);
        self.params.set_trainable_prefix("aes.", true);
        self.params.set_trainable_prefix("nlb.", true);
        self.params.set_trainable_prefix("mlp.", true);
    }

    /// Forward over a bound tape: `content` and `style` are `[N,3,R,R]`
    /// leaves; the result is `[N]` unbounded scores. `style` feeds only the
    /// style feature extractor; the aesthetic branches always read
    /// `content`.
    pub fn forward_batch(
        &self,
        tape: &Tape,
        bp: &BoundParams,
        content: Var,
        style: Var,
    ) -> Result<Var, TrainError> {
        let c = self.config.channels;
        let style_branch = if self.config.use_sab {
            let f_sty = plain_encoder_forward(tape, bp, "style", style, c)?;
            let f_aes = residual_encoder_forward(tape, bp, "aes", content, c)?;
            Some(tape.adain(f_aes, f_sty)?)
        } else {
            None
        };
        let generic_branch = if self.config.use_gab {
            Some(residual_encoder_forward(tape, bp, "gen", content, c)?)
        } else {
            None
        };
        let fused = match (style_branch, generic_branch) {
            (Some(a), Some(g)) => {
                let sa = tape.shape(a);
                let sg = tape.shape(g);
                let g = if sa[2] != sg[2] || sa[3] != sg[3] {
                    tape.bilinear_resize(g, sa[2], sa[3])?
                } else {
                    g
                };
                tape.concat_channels(a, g)?
            }
            (Some(a), None) => a,
            (None, Some(g)) => g,
            (None, None) => unreachable!("config validation requires a branch"),
        };
        let fused = if self.config.use_fusion {
            let vars = NonLocalVars {
                theta: bp.var("nlb.theta.w")?,
                phi: bp.var("nlb.phi.w")?,
                g: bp.var("nlb.g.w")?,
                z: bp.var("nlb.z.w")?,
            };
            tape.nonlocal_block(fused, &vars)?
        } else {
            fused
        };
        let pooled = tape.global_avg_pool(fused)?;
        let h1 = tape.linear(pooled, bp.var("mlp.fc1.w")?, bp.var("mlp.fc1.b")?)?;
        let h1 = tape.relu(h1);
        let h2 = tape.linear(h1, bp.var("mlp.fc2.w")?, bp.var("mlp.fc2.b")?)?;
        let h2 = tape.relu(h2);
        let out = tape.linear(h2, bp.var("mlp.out.w")?, bp.var("mlp.out.b")?)?;
        let n = tape.shape(out)[0];
        Ok(tape.reshape(out, &[n])?)
    }

    fn prepare(&self, img: &Image) -> Image {
        resize_bilinear(img, self.config.input_res, self.config.input_res)
    }

    /// Score one image (unbounded head output).
    pub fn predict(&self, img: &Image) -> Result<f64, TrainError> {
        self.predict_style_swap(img, img)
    }

    /// Score `content` while the style feature extractor reads `style_img`.
    /// With `style_img = content` this is exactly [`SaanModel::predict`].
    pub fn predict_style_swap(&self, content: &Image, style_img: &Image) -> Result<f64, TrainError> {
        let tape = Tape::new();
        let bp = self.params.bind(&tape);
        let content_t = image_batch_tensor(&[&self.prepare(content)])?;
        let style_t = image_batch_tensor(&[&self.prepare(style_img)])?;
        let c = tape.leaf(content_t);
        let s = tape.leaf(style_t);
        let scores = self.forward_batch(&tape, &bp, c, s)?;
        Ok(tape.value(scores)[[0]])
    }

    /// Batch predictions (unbounded).
    pub fn predict_batch(&self, images: &[Image]) -> Result<Vec<f64>, TrainError> {
        let mut out = Vec::with_capacity(images.len());
        // Bounded batch size keeps tape memory flat.
        for chunk in images.chunks(16) {
            let prepared: Vec<Image> = chunk.iter().map(|i| self.prepare(i)).collect();
            let refs: Vec<&Image> = prepared.iter().collect();
            let tape = Tape::new();
            let bp = self.params.bind(&tape);
            let x = tape.leaf(image_batch_tensor(&refs)?);
            let scores = self.forward_batch(&tape, &bp, x, x)?;
            out.extend(tape.value(scores).iter().copied());
        }
        Ok(out)
    }

    /// Run the model over a scored test set and report rank metrics; the
    /// predictions are clamped into [0, 10] at this reporting boundary.
    pub fn evaluate(&self, test: &[(Image, f64)]) -> Result<EvalMetrics, TrainError> {
        if test.is_empty() {
            return Err(TrainError::EmptyCorpus);
        }
        let images: Vec<Image> = test.iter().map(|(i, _)| i.clone()).collect();
        let truth: Vec<f64> = test.iter().map(|(_, s)| *s).collect();
        let predicted: Vec<f64> = self
            .predict_batch(&images)?
            .into_iter()
            .map(|s| s.clamp(0.0, 10.0))
            .collect();
        let paired = PairedScores::new(predicted, truth)?;
        Ok(EvalMetrics {
            srcc: metrics::srcc(&paired)?,
            pcc: metrics::pcc(&paired)?,
            accuracy: metrics::accuracy(&paired, metrics::DEFAULT_THRESHOLD),
        })
    }
}

fn config_check(config: &ModelConfig) -> Result<(), TrainError> {
    if !config.use_sab && !config.use_gab {
        return Err(TrainError::NoBranches);
    }
    if config.mlp_hidden.len() != 2 {
        return Err(TrainError::BadModelConfig(format!(
            "mlp_hidden must have two entries, got {:?}",
            config.mlp_hidden
        )));
    }
    if config.input_res % 16 != 0 || config.input_res == 0 {
        return Err(TrainError::BadModelConfig(format!(
            "input_res {} must be a positive multiple of 16",
            config.input_res
        )));
    }
    if config.channels % 2 != 0 || config.channels < 2 {
        return Err(TrainError::BadModelConfig(format!(
            "channels {} must be even",
            config.channels
        )));
    }
    Ok(())
}
