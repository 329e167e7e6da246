//! Pretext-batch construction for the self-supervised pretraining scheme:
//! per image, a seeded choice of distortion kinds, each applied at every
//! level of the active operation table to the full image, then resized to
//! the input resolution.

use ndarray::IxDyn;
use rand::seq::SliceRandom;
use rand::Rng;

use super::config::OperationList;
use super::TrainError;
use crate::imageops::{apply, resize_bilinear, DistortionKind, DistortionSpec};
use crate::nn::Tensor;
use crate::raster::Image;
use crate::rng::{chacha, mix};
use crate::toy::toy_image;

/// The active classification table: a subset of the full operation table
/// (kind filtering, legacy list, two-level scheme) with its own contiguous
/// class indexing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpTable {
    entries: Vec<DistortionSpec>,
}

/// Kinds in the legacy (pre-extension) operation list.
pub const LEGACY_KINDS: [DistortionKind; 6] = [
    DistortionKind::GaussianNoise,
    DistortionKind::Quantization,
    DistortionKind::GaussianBlur,
    DistortionKind::Exposure,
    DistortionKind::Rotation,
    DistortionKind::None,
];

impl OpTable {
    /// Assemble the table for an operation list, level scheme, and optional
    /// kind restriction. Two-level runs drop each three-level kind's middle
    /// parameter set; rotation and the identity keep their levels.
    pub fn build(
        list: OperationList,
        levels: u8,
        enabled: Option<&[DistortionKind]>,
    ) -> OpTable {
        assert!(levels == 2 || levels == 3, "level scheme is 2 or 3");
        let mut entries = Vec::new();
        for kind in DistortionKind::ALL {
            if list == OperationList::Legacy && !LEGACY_KINDS.contains(&kind) {
                continue;
            }
            if let Some(enabled) = enabled {
                if !enabled.contains(&kind) {
                    continue;
                }
            }
            let table_levels: Vec<usize> = if kind.level_count() == 3 && levels == 2 {
                vec![0, 2]
            } else {
                (0..kind.level_count()).collect()
            };
            for l in table_levels {
                entries.push(DistortionSpec::new(kind, l).expect("level from table"));
            }
        }
        OpTable { entries }
    }

    pub fn full() -> OpTable {
        Self::build(OperationList::Full, 3, None)
    }

    pub fn class_count(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[DistortionSpec] {
        &self.entries
    }

    pub fn class_of(&self, spec: &DistortionSpec) -> Option<usize> {
        self.entries.iter().position(|e| e == spec)
    }

    /// Distinct kinds with their active table levels, in table order.
    pub fn kinds(&self) -> Vec<(DistortionKind, Vec<usize>)> {
        let mut out: Vec<(DistortionKind, Vec<usize>)> = Vec::new();
        for e in &self.entries {
            match out.last_mut() {
                Some((k, levels)) if *k == e.kind() => levels.push(e.level()),
                _ => out.push((e.kind(), vec![e.level()])),
            }
        }
        out
    }

    /// True when a kind's samples feed the intensity-detection loss: it
    /// must carry an intensity-ordered level list (rotation's two angles
    /// and the identity are classification-only).
    pub fn det_eligible(&self, kind: DistortionKind) -> bool {
        if kind == DistortionKind::Rotation || kind == DistortionKind::None {
            return false;
        }
        self.kinds()
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, levels)| levels.len() >= 2)
            .unwrap_or(false)
    }
}

/// One pretext sample: the anchor patch, its distorted siblings at every
/// active level of one kind (ascending), and the level chosen as the
/// classification target.
#[derive(Debug, Clone)]
pub struct PretextSample {
    pub anchor: Image,
    pub kind: DistortionKind,
    /// Table level indices, ascending.
    pub sibling_levels: Vec<usize>,
    pub siblings: Vec<Image>,
    /// Index into `siblings` of the classification sample.
    pub label_pos: usize,
    /// Class index in the active table for (kind, sibling_levels[label_pos]).
    pub class_index: usize,
}

impl PretextSample {
    pub fn label_spec(&self) -> DistortionSpec {
        DistortionSpec::new(self.kind, self.sibling_levels[self.label_pos])
            .expect("levels from table")
    }

    pub fn label_image(&self) -> &Image {
        &self.siblings[self.label_pos]
    }
}

/// Build the pretext samples for a corpus: per image, `kinds_per_image`
/// seed-chosen distinct kinds, each expanded to all of its active levels.
/// CutMix donors come from same-shaped images in the corpus, falling back
/// to a seeded synthetic donor when alone.
pub fn make_pretext_batch(
    images: &[Image],
    table: &OpTable,
    input_res: usize,
    kinds_per_image: usize,
    seed: u64,
) -> Result<Vec<PretextSample>, TrainError> {
    if images.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let kinds = table.kinds();
    let picks = kinds_per_image.min(kinds.len());
    let mut samples = Vec::with_capacity(images.len() * picks);
    for (i, img) in images.iter().enumerate() {
        let mut rng = chacha(mix(seed, &[i as u64, 0x5e1ec7]));
        let mut kind_order: Vec<usize> = (0..kinds.len()).collect();
        kind_order.shuffle(&mut rng);
        let anchor = resize_bilinear(img, input_res, input_res);
        for (slot, &ki) in kind_order[..picks].iter().enumerate() {
            let (kind, levels) = &kinds[ki];
            let mut siblings = Vec::with_capacity(levels.len());
            for (li, &level) in levels.iter().enumerate() {
                let spec = DistortionSpec::new(*kind, level).expect("table level");
                let op_seed = mix(seed, &[i as u64, slot as u64, li as u64, 0xd15]);
                let donor_storage;
                let donor = if kind.needs_donor() {
                    donor_storage = pick_donor(images, i, img, op_seed);
                    Some(&donor_storage)
                } else {
                    None
                };
                let distorted = apply(&spec, img, donor, op_seed)?;
                siblings.push(resize_bilinear(&distorted, input_res, input_res));
            }
            let label_pos = rng.random_range(0..levels.len());
            let label_spec = DistortionSpec::new(*kind, levels[label_pos]).expect("table level");
            let class_index = table
                .class_of(&label_spec)
                .expect("spec comes from this table");
            samples.push(PretextSample {
                anchor: anchor.clone(),
                kind: *kind,
                sibling_levels: levels.clone(),
                siblings,
                label_pos,
                class_index,
            });
        }
    }
    Ok(samples)
}

fn pick_donor(images: &[Image], own_index: usize, img: &Image, seed: u64) -> Image {
    let candidates: Vec<usize> = (0..images.len())
        .filter(|&j| {
            j != own_index
                && images[j].height() == img.height()
                && images[j].width() == img.width()
                && images[j].channels() == img.channels()
        })
        .collect();
    let mut rng = chacha(mix(seed, &[0xd0_0d]));
    if candidates.is_empty() {
        // Seeded synthetic fallback donor with matching dimensions.
        let synth = toy_image(mix(seed, &[0xfa11]), img.height().max(img.width()).max(8));
        let resized = resize_bilinear(&synth, img.height(), img.width());
        if img.channels() == 1 {
            Image::from_fn(img.height(), img.width(), 1, |y, x, _| resized.get(y, x, 0))
        } else {
            resized
        }
    } else {
        let j = candidates[rng.random_range(0..candidates.len())];
        images[j].clone()
    }
}

/// Stack images into an `[N, 3, H, W]` tensor; single-channel images are
/// broadcast across the three channels.
pub fn image_batch_tensor(images: &[&Image]) -> Result<Tensor, TrainError> {
    let first = images.first().ok_or(TrainError::EmptyCorpus)?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if img.height() != h || img.width() != w {
            return Err(TrainError::MixedImageSizes);
        }
        for c in 0..3 {
            let src_c = if img.channels() == 3 { c } else { 0 };
            for y in 0..h {
                for x in 0..w {
                    data.push(img.get(y, x, src_c));
                }
            }
        }
    }
    Ok(Tensor::from_shape_vec(IxDyn(&[images.len(), 3, h, w]), data).expect("sized above"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::toy_corpus;

    #[test]
    fn full_table_has_30_classes() {
        assert_eq!(OpTable::full().class_count(), 30);
    }

    #[test]
    fn legacy_table_counts_non_extension_rows() {
        // Four 3-level kinds + rotation's 2 + identity = 15.
        let t = OpTable::build(OperationList::Legacy, 3, None);
        assert_eq!(t.class_count(), 15);
    }

    #[test]
    fn two_level_scheme_drops_middle_sets() {
        let t = OpTable::build(OperationList::Full, 2, None);
        // Nine 3-level kinds shrink to 2 levels; rotation 2; identity 1.
        assert_eq!(t.class_count(), 9 * 2 + 2 + 1);
        let blur = t
            .kinds()
            .into_iter()
            .find(|(k, _)| *k == DistortionKind::GaussianBlur)
            .unwrap();
        assert_eq!(blur.1, vec![0, 2]);
    }

    #[test]
    fn det_eligibility_rules() {
        let t = OpTable::full();
        assert!(t.det_eligible(DistortionKind::GaussianBlur));
        assert!(!t.det_eligible(DistortionKind::Rotation));
        assert!(!t.det_eligible(DistortionKind::None));
        let two = OpTable::build(OperationList::Full, 2, None);
        assert!(two.det_eligible(DistortionKind::Exposure));
    }

    #[test]
    fn batch_is_deterministic_and_ascending() {
        let images = toy_corpus(5, 4, 32);
        let table = OpTable::full();
        let a = make_pretext_batch(&images, &table, 32, 3, 99).unwrap();
        let b = make_pretext_batch(&images, &table, 32, 3, 99).unwrap();
        assert_eq!(a.len(), b.len());
        assert_eq!(a.len(), 4 * 3);
        for (sa, sb) in a.iter().zip(&b) {
            assert_eq!(sa.kind, sb.kind);
            assert_eq!(sa.label_pos, sb.label_pos);
            assert_eq!(sa.siblings, sb.siblings);
            let mut sorted = sa.sibling_levels.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, sa.sibling_levels, "levels must ascend");
            assert_eq!(sa.siblings.len(), sa.sibling_levels.len());
            assert_eq!(sa.anchor.height(), 32);
        }
    }

    #[test]
    fn rotation_samples_are_pairs() {
        let images = toy_corpus(6, 6, 32);
        let table = OpTable::build(OperationList::Full, 3, Some(&[DistortionKind::Rotation]));
        let batch = make_pretext_batch(&images, &table, 32, 3, 1).unwrap();
        for s in &batch {
            assert_eq!(s.kind, DistortionKind::Rotation);
            assert_eq!(s.siblings.len(), 2);
        }
    }

    #[test]
    fn lone_image_cutmix_uses_synthetic_donor() {
        let images = toy_corpus(7, 1, 32);
        let table = OpTable::build(OperationList::Full, 3, Some(&[DistortionKind::CutMix]));
        let batch = make_pretext_batch(&images, &table, 32, 1, 2).unwrap();
        assert_eq!(batch.len(), 1);
        // The distorted sibling differs from the anchor (donor filled in).
        assert_ne!(batch[0].siblings[2], batch[0].anchor);
    }

    #[test]
    fn batch_tensor_layout() {
        let images = toy_corpus(8, 2, 16);
        let refs: Vec<&Image> = images.iter().collect();
        let t = image_batch_tensor(&refs).unwrap();
        assert_eq!(t.shape(), &[2, 3, 16, 16]);
        assert_eq!(t[[1, 2, 0, 0]], images[1].get(0, 0, 2));
    }
}
