//! Pointwise and convolutional degradations: noise, quantization, blur,
//! exposure.

use rand_distr::{Distribution, Normal};

use crate::raster::Image;
use crate::rng::chacha;

/// Additive i.i.d. Gaussian noise, clamped back into `[0, 1]`.
/// `sigma = 0` is an exact identity.
pub fn gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Image {
    assert!(sigma >= 0.0, "noise sigma must be nonnegative");
    if sigma == 0.0 {
        return img.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated above");
    let mut rng = chacha(seed);
    img.map(|v| v + normal.sample(&mut rng))
}

/// Uniform quantization: `v -> min(floor(v * levels), levels - 1) / (levels - 1)`.
pub fn quantize(img: &Image, levels: u32) -> Image {
    assert!(levels >= 2, "quantization needs at least two levels");
    let l = levels as f64;
    img.map(|v| ((v * l).floor()).min(l - 1.0) / (l - 1.0))
}

/// Multiplicative exposure gain with clamping.
pub fn exposure(img: &Image, gain: f64) -> Image {
    assert!(gain > 0.0, "exposure gain must be positive");
    img.map(|v| gain * v)
}

/// Normalized 1-D Gaussian kernel of radius `ceil(3 sigma)`.
pub fn gaussian_kernel_1d(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "blur sigma must be positive");
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for w in &mut k {
        *w /= sum;
    }
    k
}

/// Mirror an index into `[0, n)` with edge repetition (…,1,0,0,1,…).
#[inline]
pub(crate) fn mirror(mut i: i64, n: usize) -> usize {
    let n = n as i64;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Gaussian blur: separable convolution with the normalized product kernel,
/// mirror-padded at the borders. Identical to convolving with the 2-D
/// product kernel because mirroring is applied per axis.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let k = gaussian_kernel_1d(sigma);
    let radius = (k.len() / 2) as i64;
    let (h, w, c) = (img.height(), img.width(), img.channels());

    // Horizontal pass.
    let mut tmp = vec![0.0f64; h * w * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (j, &kw) in k.iter().enumerate() {
                    let sx = mirror(x as i64 + j as i64 - radius, w);
                    acc += kw * img.get(y, sx, ch);
                }
                tmp[(y * w + x) * c + ch] = acc;
            }
        }
    }
    // Vertical pass.
    Image::from_fn(h, w, c, |y, x, ch| {
        let mut acc = 0.0;
        for (j, &kw) in k.iter().enumerate() {
            let sy = mirror(y as i64 + j as i64 - radius, h);
            acc += kw * tmp[(sy * w + x) * c + ch];
        }
        acc
    })
}

/// Blur a single-channel plane (used by the sketch operator).
pub(crate) fn blur_plane(plane: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel_1d(sigma);
    let radius = (k.len() / 2) as i64;
    let mut tmp = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, &kw) in k.iter().enumerate() {
                let sx = mirror(x as i64 + j as i64 - radius, w);
                acc += kw * plane[y * w + sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, &kw) in k.iter().enumerate() {
                let sy = mirror(y as i64 + j as i64 - radius, h);
                acc += kw * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_noise_is_identity() {
        let img = Image::from_fn(8, 8, 3, |y, x, c| (y + x + c) as f64 / 20.0);
        assert_eq!(gaussian_noise(&img, 0.0, 7), img);
    }

    #[test]
    fn noise_sample_mean_stays_near_input_mean() {
        // Monte-Carlo oracle over 10 seeds: clamping at 0.5 +/- noise is
        // symmetric, so the mean survives.
        let img = Image::constant(64, 64, 1, 0.5);
        for seed in 0..10 {
            let out = gaussian_noise(&img, 0.4, seed);
            let mean: f64 = out.data().iter().sum::<f64>() / out.data().len() as f64;
            assert!((mean - 0.5).abs() < 0.02, "seed {seed}: mean {mean}");
        }
    }

    #[test]
    fn heavy_noise_on_black_clamps_negatives() {
        for seed in 0..10 {
            let img = Image::constant(64, 64, 1, 0.0);
            let out = gaussian_noise(&img, 0.8, seed);
            assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            let positive = out.data().iter().filter(|&&v| v > 0.0).count() as f64
                / out.data().len() as f64;
            assert!((positive - 0.5).abs() < 0.05, "seed {seed}: {positive}");
        }
    }

    #[test]
    fn quantize_bin_formula() {
        let img = Image::constant(1, 1, 1, 0.5);
        let out = quantize(&img, 8);
        assert!((out.get(0, 0, 0) - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn quantize_endpoints_fixed() {
        for levels in [64, 32, 8] {
            assert_eq!(quantize(&Image::constant(1, 1, 1, 0.0), levels).get(0, 0, 0), 0.0);
            assert_eq!(quantize(&Image::constant(1, 1, 1, 1.0), levels).get(0, 0, 0), 1.0);
        }
    }

    #[test]
    fn quantize_is_idempotent() {
        let img = Image::from_fn(16, 16, 3, |y, x, c| ((y * 31 + x * 7 + c) % 97) as f64 / 96.0);
        let once = quantize(&img, 64);
        let twice = quantize(&once, 64);
        assert_eq!(once, twice);
    }

    #[test]
    fn quantize_bounds_distinct_values() {
        let img = Image::from_fn(32, 32, 1, |y, x, _| (y * 32 + x) as f64 / 1023.0);
        let out = quantize(&img, 8);
        let mut values: Vec<u64> = out.data().iter().map(|v| v.to_bits()).collect();
        values.sort_unstable();
        values.dedup();
        assert!(values.len() <= 8);
    }

    #[test]
    fn exposure_examples() {
        let img = Image::constant(2, 2, 1, 0.3);
        assert_eq!(exposure(&img, 1.0), img);
        assert!((exposure(&img, 2.0).get(0, 0, 0) - 0.6).abs() < 1e-15);
        let bright = Image::constant(2, 2, 1, 0.5);
        assert_eq!(exposure(&bright, 2.5).get(0, 0, 0), 1.0);
    }

    #[test]
    fn kernel_sums_to_one() {
        for sigma in [0.4, 0.8, 2.0] {
            let k = gaussian_kernel_1d(sigma);
            let sum: f64 = k.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            // 2-D product kernel inherits normalization.
            let sum2: f64 = k.iter().flat_map(|a| k.iter().map(move |b| a * b)).sum();
            assert!((sum2 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn blur_preserves_constants() {
        let img = Image::constant(9, 9, 3, 0.37);
        let out = gaussian_blur(&img, 2.0);
        for (&a, &b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_center_of_impulse_equals_kernel_center_weight() {
        // Explicit kernel-evaluation oracle: the white pixel sits at the
        // center of a 9x9 black image; mirrored out-of-range taps never land
        // back on the center, so the output center is k(0,0) exactly.
        let mut img = Image::constant(9, 9, 1, 0.0);
        img.set(4, 4, 0, 1.0);
        let sigma = 2.0;
        let k = gaussian_kernel_1d(sigma);
        let center_weight = k[k.len() / 2] * k[k.len() / 2];
        let out = gaussian_blur(&img, sigma);
        assert!((out.get(4, 4, 0) - center_weight).abs() < 1e-12);
    }
}
