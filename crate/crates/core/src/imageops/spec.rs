//! The degradation operation table: kinds, per-kind parameter levels, and
//! the flat class enumeration used by the distortion-classification task.

use std::fmt;
use std::str::FromStr;

use super::OpsError;

/// One degradation family. Level parameters are ordered lightest to
/// heaviest; each (kind, level) pair is a distinct classification class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DistortionKind {
    GaussianNoise,
    Quantization,
    GaussianBlur,
    Exposure,
    Rotation,
    Cropping,
    Stylization,
    Convex,
    PencilSketch,
    CutMix,
    None,
}

const NOISE: [&[f64]; 3] = [&[0.2], &[0.4], &[0.8]];
const QUANT: [&[f64]; 3] = [&[64.0], &[32.0], &[8.0]];
const BLUR: [&[f64]; 3] = [&[0.4], &[0.8], &[2.0]];
const EXPOSURE: [&[f64]; 3] = [&[1.5], &[2.0], &[2.5]];
const ROTATION: [&[f64]; 2] = [&[45.0], &[-45.0]];
const CROP: [&[f64]; 3] = [&[0.75], &[2.0 / 3.0], &[0.5]];
const STYLIZE: [&[f64]; 3] = [&[50.0, 0.6], &[50.0, 0.3], &[50.0, 0.1]];
const CONVEX: [&[f64]; 3] = [&[0.125], &[0.25], &[0.5]];
const PENCIL: [&[f64]; 3] = [
    &[100.0, 0.1, 0.02],
    &[100.0, 0.4, 0.02],
    &[100.0, 0.6, 0.02],
];
const CUTMIX: [&[f64]; 3] = [&[32.0], &[64.0], &[128.0]];
const NONE: [&[f64]; 1] = [&[]];

impl DistortionKind {
    /// Table order; also the class enumeration order.
    pub const ALL: [DistortionKind; 11] = [
        DistortionKind::GaussianNoise,
        DistortionKind::Quantization,
        DistortionKind::GaussianBlur,
        DistortionKind::Exposure,
        DistortionKind::Rotation,
        DistortionKind::Cropping,
        DistortionKind::Stylization,
        DistortionKind::Convex,
        DistortionKind::PencilSketch,
        DistortionKind::CutMix,
        DistortionKind::None,
    ];

    /// Parameter rows for this kind, lightest level first.
    pub fn levels(self) -> &'static [&'static [f64]] {
        match self {
            DistortionKind::GaussianNoise => &NOISE,
            DistortionKind::Quantization => &QUANT,
            DistortionKind::GaussianBlur => &BLUR,
            DistortionKind::Exposure => &EXPOSURE,
            DistortionKind::Rotation => &ROTATION,
            DistortionKind::Cropping => &CROP,
            DistortionKind::Stylization => &STYLIZE,
            DistortionKind::Convex => &CONVEX,
            DistortionKind::PencilSketch => &PENCIL,
            DistortionKind::CutMix => &CUTMIX,
            DistortionKind::None => &NONE,
        }
    }

    pub fn level_count(self) -> usize {
        self.levels().len()
    }

    /// Stable kebab-case name used by the CLI and config files.
    pub fn name(self) -> &'static str {
        match self {
            DistortionKind::GaussianNoise => "gaussian-noise",
            DistortionKind::Quantization => "quantization",
            DistortionKind::GaussianBlur => "gaussian-blur",
            DistortionKind::Exposure => "exposure",
            DistortionKind::Rotation => "rotation",
            DistortionKind::Cropping => "cropping",
            DistortionKind::Stylization => "stylization",
            DistortionKind::Convex => "convex",
            DistortionKind::PencilSketch => "pencil-sketch",
            DistortionKind::CutMix => "cutmix",
            DistortionKind::None => "none",
        }
    }

    /// True when a donor image is required.
    pub fn needs_donor(self) -> bool {
        self == DistortionKind::CutMix
    }
}

impl fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistortionKind {
    type Err = OpsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DistortionKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| OpsError::UnknownKind(s.to_string()))
    }
}

/// A concrete (kind, level) pair; `params()` resolves the table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DistortionSpec {
    kind: DistortionKind,
    level: usize,
}

impl DistortionSpec {
    pub fn new(kind: DistortionKind, level: usize) -> Result<Self, OpsError> {
        if level >= kind.level_count() {
            return Err(OpsError::InvalidLevel {
                kind,
                level,
                max: kind.level_count(),
            });
        }
        Ok(Self { kind, level })
    }

    pub fn kind(&self) -> DistortionKind {
        self.kind
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn params(&self) -> &'static [f64] {
        self.kind.levels()[self.level]
    }

    /// Flat index of this (kind, level) pair in the full table enumeration.
    pub fn class_index(&self) -> usize {
        let mut offset = 0;
        for k in DistortionKind::ALL {
            if k == self.kind {
                return offset + self.level;
            }
            offset += k.level_count();
        }
        unreachable!("kind is always in the table")
    }

    pub fn from_class_index(index: usize) -> Result<Self, OpsError> {
        let mut offset = 0;
        for k in DistortionKind::ALL {
            if index < offset + k.level_count() {
                return DistortionSpec::new(k, index - offset);
            }
            offset += k.level_count();
        }
        Err(OpsError::InvalidClassIndex {
            index,
            max: Self::class_count(),
        })
    }

    /// Total number of distinct (kind, level) classes in the full table.
    pub fn class_count() -> usize {
        DistortionKind::ALL.iter().map(|k| k.level_count()).sum()
    }

    /// Every (kind, level) pair in enumeration order.
    pub fn all_classes() -> Vec<DistortionSpec> {
        (0..Self::class_count())
            .map(|i| Self::from_class_index(i).expect("index in range"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_has_exactly_30_classes() {
        assert_eq!(DistortionSpec::class_count(), 30);
        assert_eq!(DistortionSpec::all_classes().len(), 30);
    }

    #[test]
    fn class_index_roundtrips() {
        for (i, spec) in DistortionSpec::all_classes().iter().enumerate() {
            assert_eq!(spec.class_index(), i);
            assert_eq!(DistortionSpec::from_class_index(i).unwrap(), *spec);
        }
        assert!(DistortionSpec::from_class_index(30).is_err());
    }

    #[test]
    fn rotation_has_two_levels_none_has_one() {
        assert_eq!(DistortionKind::Rotation.level_count(), 2);
        assert_eq!(DistortionKind::None.level_count(), 1);
        assert!(DistortionSpec::new(DistortionKind::Rotation, 2).is_err());
        assert!(DistortionSpec::new(DistortionKind::None, 0).unwrap().params().is_empty());
    }

    #[test]
    fn exposure_level_1_carries_gain_2() {
        let spec = DistortionSpec::new(DistortionKind::Exposure, 1).unwrap();
        assert_eq!(spec.params(), &[2.0]);
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in DistortionKind::ALL {
            assert_eq!(k.name().parse::<DistortionKind>().unwrap(), k);
        }
        assert!("sepia".parse::<DistortionKind>().is_err());
    }
}
