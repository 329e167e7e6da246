//! Training loops: self-supervised pretraining of the generic trunk with
//! the distortion-classification and intensity-detection pretext tasks,
//! then MSE fine-tuning of the assembled model.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;

use super::config::{lr_at_epoch, FinetuneConfig, ModelConfig, PretrainConfig};
use super::encoders::{init_residual_encoder, residual_encoder_forward};
use super::pretext::{image_batch_tensor, make_pretext_batch, OpTable, PretextSample};
use super::saan::SaanModel;
use super::TrainError;
use crate::nn::{he_fan_in, zeros, Adam, AdamConfig, BoundParams, ParamSet, Tape, Tensor, Var};
use crate::raster::Image;
use crate::rng::{chacha, mix};

/// Trunk plus the two pretext heads (classification and the L2-normalized
/// detection feature).
#[derive(Debug, Clone)]
pub struct PretrainModel {
    pub params: ParamSet,
    pub model: ModelConfig,
    pub table: OpTable,
    pub embed_dim: usize,
}

impl PretrainModel {
    pub fn init(mcfg: &ModelConfig, pcfg: &PretrainConfig) -> Result<Self, TrainError> {
        let table = OpTable::build(
            pcfg.operation_list,
            pcfg.levels,
            pcfg.enabled()?.as_deref(),
        );
        let mut params = ParamSet::new();
        let mut rng = chacha(mix(pcfg.seed, &[0x6e4]));
        init_residual_encoder(&mut params, &mut rng, "gen", mcfg.channels);
        let k = table.class_count();
        let c = mcfg.channels;
        let mut rng = chacha(mix(pcfg.seed, &[0xc15]));
        params.insert("cls.w", he_fan_in(&mut rng, &[c, k], c), true);
        params.insert("cls.b", zeros(&[k]), true);
        let mut rng = chacha(mix(pcfg.seed, &[0xe0b]));
        params.insert("emb.w", he_fan_in(&mut rng, &[c, pcfg.embed_dim], c), true);
        params.insert("emb.b", zeros(&[pcfg.embed_dim]), true);
        Ok(Self {
            params,
            model: mcfg.clone(),
            table,
            embed_dim: pcfg.embed_dim,
        })
    }

    fn trunk_pooled(&self, tape: &Tape, bp: &BoundParams, x: Var) -> Result<Var, TrainError> {
        let features = residual_encoder_forward(tape, bp, "gen", x, self.model.channels)?;
        Ok(tape.global_avg_pool(features)?)
    }

    /// Classification logits `[N, K]`.
    pub fn logits(&self, tape: &Tape, bp: &BoundParams, x: Var) -> Result<Var, TrainError> {
        let pooled = self.trunk_pooled(tape, bp, x)?;
        Ok(tape.linear(pooled, bp.var("cls.w")?, bp.var("cls.b")?)?)
    }

    /// L2-normalized detection features `[N, E]`.
    pub fn embeddings(&self, tape: &Tape, bp: &BoundParams, x: Var) -> Result<Var, TrainError> {
        let pooled = self.trunk_pooled(tape, bp, x)?;
        let raw = tape.linear(pooled, bp.var("emb.w")?, bp.var("emb.b")?)?;
        Ok(tape.l2_normalize_rows(raw)?)
    }
}

/// Per-epoch pretraining log line.
#[derive(Debug, Clone, Copy)]
pub struct PretrainEpochLog {
    pub epoch: usize,
    pub loss_cls: f64,
    /// None while the detection loss is inactive.
    pub loss_det: Option<f64>,
    pub lambda: f64,
    pub lr: f64,
}

/// Collect gradients for every trainable parameter that participated.
fn collect_grads(
    params: &ParamSet,
    bp: &BoundParams,
    grads: &crate::nn::Gradients,
) -> BTreeMap<String, Tensor> {
    let mut out = BTreeMap::new();
    for (name, var) in bp.iter() {
        let Some(p) = params.get(name) else { continue };
        if !p.trainable {
            continue;
        }
        if let Some(g) = grads.wrt(*var) {
            out.insert(name.clone(), g.clone());
        }
    }
    out
}

/// Detection-loss term over the det-eligible samples of one batch, or None
/// when the batch has none. Three-level schemes use the two adjacent hinges
/// minus one; two-level schemes degenerate to the single hinge.
fn detection_term(
    pm: &PretrainModel,
    tape: &Tape,
    bp: &BoundParams,
    samples: &[&PretextSample],
) -> Result<Option<Var>, TrainError> {
    let triples: Vec<&&PretextSample> = samples
        .iter()
        .filter(|s| pm.table.det_eligible(s.kind))
        .collect();
    if triples.is_empty() {
        return Ok(None);
    }
    let levels = triples[0].siblings.len();
    debug_assert!(triples.iter().all(|s| s.siblings.len() == levels));
    let anchors: Vec<&Image> = triples.iter().map(|s| &s.anchor).collect();
    let anchor_emb = {
        let x = tape.leaf(image_batch_tensor(&anchors)?);
        pm.embeddings(tape, bp, x)?
    };
    let mut dists = Vec::with_capacity(levels);
    for li in 0..levels {
        let sibs: Vec<&Image> = triples.iter().map(|s| &s.siblings[li]).collect();
        let x = tape.leaf(image_batch_tensor(&sibs)?);
        let emb = pm.embeddings(tape, bp, x)?;
        dists.push(tape.rowwise_squared_distance(anchor_emb, emb)?);
    }
    let loss_vec = if levels >= 3 {
        let h12 = tape.hinge_pair(dists[0], dists[1])?;
        let h23 = tape.hinge_pair(dists[1], dists[2])?;
        let sum = tape.add(h12, h23)?;
        tape.add_scalar(sum, -1.0)
    } else {
        tape.hinge_pair(dists[0], dists[1])?
    };
    Ok(Some(tape.mean_all(loss_vec)))
}

/// Run the two-phase pretraining schedule: classification only until the
/// activation epoch, then classification plus `lambda` times the detection
/// loss. When the weight is zero the detection graph is not even built, so
/// the parameter trajectory is bitwise the classification-only one.
pub fn pretrain(
    images: &[Image],
    mcfg: &ModelConfig,
    pcfg: &PretrainConfig,
) -> Result<(PretrainModel, Vec<PretrainEpochLog>), TrainError> {
    if images.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut pm = PretrainModel::init(mcfg, pcfg)?;
    let mut opt = Adam::new(AdamConfig {
        weight_decay: pcfg.weight_decay,
        ..AdamConfig::default()
    });
    let mut logs = Vec::with_capacity(pcfg.epochs);
    for epoch in 0..pcfg.epochs {
        let lr = lr_at_epoch(
            pcfg.learning_rate,
            epoch,
            pcfg.lr_decay_every,
            pcfg.lr_decay_factor,
            None,
        );
        let lambda = if epoch < pcfg.lambda_activation_epoch {
            0.0
        } else {
            pcfg.lambda
        };
        let samples = make_pretext_batch(
            images,
            &pm.table,
            mcfg.input_res,
            pcfg.kinds_per_image,
            mix(pcfg.seed, &[0xba7c, epoch as u64]),
        )?;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut chacha(mix(pcfg.seed, &[0x0d3a, epoch as u64])));

        let mut cls_sum = 0.0;
        let mut det_sum = 0.0;
        let mut det_batches = 0usize;
        let mut batches = 0usize;
        for chunk in order.chunks(pcfg.batch_size) {
            let batch: Vec<&PretextSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let tape = Tape::new();
            let bp = pm.params.bind(&tape);

            let cls_inputs: Vec<&Image> = batch.iter().map(|s| s.label_image()).collect();
            let labels: Vec<usize> = batch.iter().map(|s| s.class_index).collect();
            let x = tape.leaf(image_batch_tensor(&cls_inputs)?);
            let logits = pm.logits(&tape, &bp, x)?;
            let l_cls = tape.softmax_cross_entropy(logits, &labels)?;

            let total = if lambda > 0.0 {
                match detection_term(&pm, &tape, &bp, &batch)? {
                    Some(l_det) => {
                        det_sum += tape.scalar(l_det);
                        det_batches += 1;
                        let weighted = tape.scale(l_det, lambda);
                        tape.add(l_cls, weighted)?
                    }
                    None => l_cls,
                }
            } else {
                l_cls
            };

            let loss_value = tape.scalar(total);
            if !loss_value.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    loss: loss_value,
                });
            }
            cls_sum += tape.scalar(l_cls);
            batches += 1;
            let grads = tape.backward(total)?;
            let grad_map = collect_grads(&pm.params, &bp, &grads);
            opt.step(&mut pm.params, &grad_map, lr);
        }
        logs.push(PretrainEpochLog {
            epoch,
            loss_cls: cls_sum / batches.max(1) as f64,
            loss_det: (det_batches > 0).then(|| det_sum / det_batches as f64),
            lambda,
            lr,
        });
    }
    Ok((pm, logs))
}

/// Distortion-classification accuracy over a held-out image set, with
/// fresh seeded pretext samples.
pub fn pretext_classification_accuracy(
    pm: &PretrainModel,
    images: &[Image],
    kinds_per_image: usize,
    seed: u64,
) -> Result<f64, TrainError> {
    let samples = make_pretext_batch(
        images,
        &pm.table,
        pm.model.input_res,
        kinds_per_image,
        mix(seed, &[0xe7a1]),
    )?;
    let mut correct = 0usize;
    for chunk in samples.chunks(32) {
        let tape = Tape::new();
        let bp = pm.params.bind(&tape);
        let inputs: Vec<&Image> = chunk.iter().map(|s| s.label_image()).collect();
        let x = tape.leaf(image_batch_tensor(&inputs)?);
        let logits = tape.value(pm.logits(&tape, &bp, x)?);
        let k = pm.table.class_count();
        let flat = logits.as_slice().expect("standard layout");
        for (r, s) in chunk.iter().enumerate() {
            let row = &flat[r * k..(r + 1) * k];
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                .map(|(i, _)| i)
                .expect("nonempty row");
            if argmax == s.class_index {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Fraction of held-out detection-eligible samples whose lightest-level
/// distance is strictly below the heaviest-level distance.
pub fn sibling_ordering_fraction(
    pm: &PretrainModel,
    images: &[Image],
    kinds_per_image: usize,
    seed: u64,
) -> Result<f64, TrainError> {
    let samples = make_pretext_batch(
        images,
        &pm.table,
        pm.model.input_res,
        kinds_per_image,
        mix(seed, &[0x04d3]),
    )?;
    let eligible: Vec<&PretextSample> = samples
        .iter()
        .filter(|s| pm.table.det_eligible(s.kind))
        .collect();
    if eligible.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut ordered = 0usize;
    for chunk in eligible.chunks(32) {
        let tape = Tape::new();
        let bp = pm.params.bind(&tape);
        let anchors: Vec<&Image> = chunk.iter().map(|s| &s.anchor).collect();
        let lights: Vec<&Image> = chunk.iter().map(|s| &s.siblings[0]).collect();
        let heavies: Vec<&Image> = chunk
            .iter()
            .map(|s| s.siblings.last().expect("eligible samples have siblings"))
            .collect();
        let a = pm.embeddings(&tape, &bp, tape.leaf(image_batch_tensor(&anchors)?))?;
        let l = pm.embeddings(&tape, &bp, tape.leaf(image_batch_tensor(&lights)?))?;
        let h = pm.embeddings(&tape, &bp, tape.leaf(image_batch_tensor(&heavies)?))?;
        let d_light = tape.value(tape.rowwise_squared_distance(a, l)?);
        let d_heavy = tape.value(tape.rowwise_squared_distance(a, h)?);
        for (dl, dh) in d_light.iter().zip(d_heavy.iter()) {
            if dl < dh {
                ordered += 1;
            }
        }
    }
    Ok(ordered as f64 / eligible.len() as f64)
}

/// Per-epoch fine-tuning log line.
#[derive(Debug, Clone, Copy)]
pub struct FinetuneEpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
}

/// MSE fine-tuning of the assembled model on (image, score) pairs. Applies
/// the freeze protocol, initializes the final bias to the training-set mean
/// score, and guards against divergence.
pub fn finetune(
    model: &mut SaanModel,
    train: &[(Image, f64)],
    fcfg: &FinetuneConfig,
) -> Result<Vec<FinetuneEpochLog>, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    model.apply_finetune_freeze();
    let mean_score = train.iter().map(|(_, s)| *s).sum::<f64>() / train.len() as f64;
    model
        .params
        .get_mut("mlp.out.b")
        .expect("scoring head exists")
        .value[[0]] = mean_score;

    let res = model.config.input_res;
    let prepared: Vec<(Image, f64)> = train
        .iter()
        .map(|(img, s)| (crate::imageops::resize_bilinear(img, res, res), *s))
        .collect();

    let mut opt = Adam::new(AdamConfig {
        weight_decay: fcfg.weight_decay,
        ..AdamConfig::default()
    });
    let mut logs = Vec::with_capacity(fcfg.epochs);
    for epoch in 0..fcfg.epochs {
        let lr = lr_at_epoch(
            fcfg.learning_rate,
            epoch,
            fcfg.lr_decay_every,
            fcfg.lr_decay_factor,
            fcfg.lr_decay_cap_epochs,
        );
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        order.shuffle(&mut chacha(mix(fcfg.seed, &[0xf17e, epoch as u64])));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(fcfg.batch_size) {
            let imgs: Vec<&Image> = chunk.iter().map(|&i| &prepared[i].0).collect();
            let truth: Vec<f64> = chunk.iter().map(|&i| prepared[i].1).collect();
            let tape = Tape::new();
            let bp = model.params.bind(&tape);
            let x = tape.leaf(image_batch_tensor(&imgs)?);
            let scores = model.forward_batch(&tape, &bp, x, x)?;
            let loss = tape.mse(scores, &truth)?;
            let loss_value = tape.scalar(loss);
            if !loss_value.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    loss: loss_value,
                });
            }
            loss_sum += loss_value;
            batches += 1;
            let grads = tape.backward(loss)?;
            let grad_map = collect_grads(&model.params, &bp, &grads);
            opt.step(&mut model.params, &grad_map, lr);
        }
        logs.push(FinetuneEpochLog {
            epoch,
            loss: loss_sum / batches.max(1) as f64,
            lr,
        });
    }
    Ok(logs)
}

/// Write pretraining logs as CSV: epoch, loss terms, lambda, lr.
pub fn write_pretrain_log(logs: &[PretrainEpochLog], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "epoch,loss_cls,loss_det,lambda,lr")?;
    for l in logs {
        let det = l
            .loss_det
            .map(|d| format!("{d:.6}"))
            .unwrap_or_default();
        writeln!(w, "{},{:.6},{},{},{}", l.epoch, l.loss_cls, det, l.lambda, l.lr)?;
    }
    Ok(())
}

/// Write fine-tuning logs as CSV: epoch, loss, lr.
pub fn write_finetune_log(logs: &[FinetuneEpochLog], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "epoch,loss,lr")?;
    for l in logs {
        writeln!(w, "{},{:.6},{}", l.epoch, l.loss, l.lr)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::OperationList;
    use crate::toy::{toy_corpus, toy_scored_corpus};

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            input_res: 16,
            channels: 8,
            mlp_hidden: vec![16, 8],
            use_sab: true,
            use_gab: true,
            use_fusion: true,
        }
    }

    fn tiny_pretrain(epochs: usize, lambda_activation: usize) -> PretrainConfig {
        PretrainConfig {
            epochs,
            batch_size: 8,
            learning_rate: 1e-3,
            lambda_activation_epoch: lambda_activation,
            seed: 42,
            operation_list: OperationList::Full,
            enabled_kinds: Some(vec![
                "gaussian-noise".into(),
                "exposure".into(),
                "none".into(),
            ]),
            kinds_per_image: 2,
            embed_dim: 16,
            ..PretrainConfig::default()
        }
    }

    #[test]
    fn pretrain_runs_and_logs() {
        let images = toy_corpus(1, 6, 16);
        let (pm, logs) = pretrain(&images, &tiny_model(), &tiny_pretrain(2, 30)).unwrap();
        assert_eq!(logs.len(), 2);
        assert!(logs.iter().all(|l| l.loss_det.is_none()), "lambda inactive");
        assert!(logs[0].loss_cls.is_finite());
        let acc = pretext_classification_accuracy(&pm, &images, 2, 7).unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }

    #[test]
    fn detection_phase_produces_det_losses() {
        let images = toy_corpus(2, 6, 16);
        let (_, logs) = pretrain(&images, &tiny_model(), &tiny_pretrain(2, 0)).unwrap();
        assert!(logs.iter().all(|l| l.loss_det.is_some()));
    }

    #[test]
    fn lambda_zero_trajectory_is_bitwise_cls_only() {
        let images = toy_corpus(3, 6, 16);
        // Active lambda but activation beyond the horizon vs lambda = 0.
        let a_cfg = tiny_pretrain(3, 30);
        let b_cfg = PretrainConfig {
            lambda: 0.0,
            lambda_activation_epoch: 0,
            ..tiny_pretrain(3, 0)
        };
        let (pa, _) = pretrain(&images, &tiny_model(), &a_cfg).unwrap();
        let (pb, _) = pretrain(&images, &tiny_model(), &b_cfg).unwrap();
        assert_eq!(pa.params.content_hash(""), pb.params.content_hash(""));
    }

    #[test]
    fn finetune_freezes_the_frozen() {
        let scored = toy_scored_corpus(4, 6, 16);
        let mut model = SaanModel::init(&tiny_model(), 1).unwrap();
        let style_hash = model.params.content_hash("style.");
        let gen_hash = model.params.content_hash("gen.");
        let fcfg = FinetuneConfig {
            epochs: 2,
            batch_size: 4,
            learning_rate: 1e-3,
            seed: 5,
            ..FinetuneConfig::default()
        };
        let logs = finetune(&mut model, &scored, &fcfg).unwrap();
        assert_eq!(logs.len(), 2);
        assert_eq!(model.params.content_hash("style."), style_hash);
        assert_eq!(model.params.content_hash("gen."), gen_hash);
        // The trainable head moved off its bias-only initialization.
        assert_ne!(model.params.content_hash("mlp."), {
            let mut fresh = SaanModel::init(&tiny_model(), 1).unwrap();
            fresh.params.get_mut("mlp.out.b").unwrap().value[[0]] =
                scored.iter().map(|(_, s)| *s).sum::<f64>() / scored.len() as f64;
            fresh.params.content_hash("mlp.")
        });
    }

    #[test]
    fn trunk_adoption_reaches_both_encoders() {
        let images = toy_corpus(5, 4, 16);
        let (pm, _) = pretrain(&images, &tiny_model(), &tiny_pretrain(1, 30)).unwrap();
        let mut model = SaanModel::init(&tiny_model(), 2).unwrap();
        model.load_pretrained_trunk(&pm.params, true);
        assert_eq!(
            model.params.value("gen.s0.conv.w").unwrap(),
            pm.params.value("gen.s0.conv.w").unwrap()
        );
        assert_eq!(
            model.params.value("aes.s0.conv.w").unwrap(),
            pm.params.value("gen.s0.conv.w").unwrap()
        );
    }
}
