//! CutMix degradation: paste a co-located square window from a donor image.

use rand::Rng;

use super::OpsError;
use crate::raster::Image;
use crate::rng::chacha;

/// Replace a seed-placed `side x side` window of `img` with the co-located
/// window of `donor`. `patch_side` is clamped to `min(H, W)`.
pub fn cutmix(img: &Image, donor: &Image, patch_side: usize, seed: u64) -> Result<Image, OpsError> {
    if donor.height() != img.height()
        || donor.width() != img.width()
        || donor.channels() != img.channels()
    {
        return Err(OpsError::DonorShapeMismatch {
            img: (img.height(), img.width(), img.channels()),
            donor: (donor.height(), donor.width(), donor.channels()),
        });
    }
    let side = patch_side.min(img.height()).min(img.width()).max(1);
    let mut rng = chacha(seed);
    let oy = rng.random_range(0..=img.height() - side);
    let ox = rng.random_range(0..=img.width() - side);
    let mut out = img.clone();
    for y in oy..oy + side {
        for x in ox..ox + side {
            for c in 0..img.channels() {
                out.set(y, x, c, donor.get(y, x, c));
            }
        }
    }
    Ok(out)
}
