//! The eleven aesthetic degradation operations (ten manipulations plus the
//! identity), each at its listed parameter levels, as pure deterministic
//! functions of the inputs and an explicit seed.
//!
//! Invariants shared by every operation:
//! - output intensities lie in `[0, 1]`;
//! - output shape equals input shape (crop resizes back, rotation pads);
//! - identical `(inputs, spec, seed)` produce bit-identical outputs.

mod cutmix;
mod filters;
mod geometry;
mod spec;
mod stylize;

pub use cutmix::cutmix;
pub use filters::{exposure, gaussian_blur, gaussian_kernel_1d, gaussian_noise, quantize};
pub use geometry::{convex, crop, crop_at, crop_window_dims, resize_bilinear, rotate};
pub use spec::{DistortionKind, DistortionSpec};
pub use stylize::{pencil_sketch, stylize};

use thiserror::Error;

use crate::raster::Image;

#[derive(Debug, Error)]
pub enum OpsError {
    #[error("unknown distortion kind '{0}'")]
    UnknownKind(String),
    #[error("{kind} has {max} levels, level {level} requested")]
    InvalidLevel {
        kind: DistortionKind,
        level: usize,
        max: usize,
    },
    #[error("class index {index} out of range (< {max})")]
    InvalidClassIndex { index: usize, max: usize },
    #[error("image too small for cropping: {height}x{width} (need at least 2x2)")]
    TooSmall { height: usize, width: usize },
    #[error("crop window exceeds image bounds")]
    WindowOutOfBounds,
    #[error("cutmix donor shape {donor:?} does not match image shape {img:?}")]
    DonorShapeMismatch {
        img: (usize, usize, usize),
        donor: (usize, usize, usize),
    },
    #[error("cutmix requires a donor image")]
    MissingDonor,
    #[error("{0} does not take a donor image")]
    UnexpectedDonor(DistortionKind),
}

/// Dispatch a distortion spec onto the matching operation. A donor image
/// must be supplied exactly when the kind is CutMix.
pub fn apply(
    spec: &DistortionSpec,
    img: &Image,
    donor: Option<&Image>,
    seed: u64,
) -> Result<Image, OpsError> {
    if donor.is_some() && !spec.kind().needs_donor() {
        return Err(OpsError::UnexpectedDonor(spec.kind()));
    }
    let p = spec.params();
    match spec.kind() {
        DistortionKind::GaussianNoise => Ok(gaussian_noise(img, p[0], seed)),
        DistortionKind::Quantization => Ok(quantize(img, p[0] as u32)),
        DistortionKind::GaussianBlur => Ok(gaussian_blur(img, p[0])),
        DistortionKind::Exposure => Ok(exposure(img, p[0])),
        DistortionKind::Rotation => Ok(rotate(img, p[0])),
        DistortionKind::Cropping => crop(img, p[0], seed),
        DistortionKind::Stylization => Ok(stylize(img, p[0], p[1])),
        DistortionKind::Convex => Ok(convex(img, p[0])),
        DistortionKind::PencilSketch => Ok(pencil_sketch(img, p[0], p[1], p[2])),
        DistortionKind::CutMix => {
            let donor = donor.ok_or(OpsError::MissingDonor)?;
            cutmix(img, donor, p[0] as usize, seed)
        }
        DistortionKind::None => Ok(img.clone()),
    }
}
