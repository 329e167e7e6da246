//! Geometric degradations: rotation, cropping with resize-back, and the
//! radial convex bulge. Shared bilinear samplers live here too.

use rand::Rng;

use super::OpsError;
use crate::raster::Image;
use crate::rng::chacha;

/// Bilinear sample with zero fill outside the image.
pub(crate) fn sample_zero(img: &Image, y: f64, x: f64, c: usize) -> f64 {
    let h = img.height() as f64;
    let w = img.width() as f64;
    if y <= -1.0 || x <= -1.0 || y >= h || x >= w {
        return 0.0;
    }
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let tap = |yy: f64, xx: f64| -> f64 {
        if yy < 0.0 || xx < 0.0 || yy >= h || xx >= w {
            0.0
        } else {
            img.get(yy as usize, xx as usize, c)
        }
    };
    let v00 = tap(y0, x0);
    let v01 = tap(y0, x0 + 1.0);
    let v10 = tap(y0 + 1.0, x0);
    let v11 = tap(y0 + 1.0, x0 + 1.0);
    v00 * (1.0 - fy) * (1.0 - fx) + v01 * (1.0 - fy) * fx + v10 * fy * (1.0 - fx) + v11 * fy * fx
}

/// Bilinear sample with coordinates clamped to the image rectangle.
pub(crate) fn sample_clamp(img: &Image, y: f64, x: f64, c: usize) -> f64 {
    let y = y.clamp(0.0, (img.height() - 1) as f64);
    let x = x.clamp(0.0, (img.width() - 1) as f64);
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let y1 = (y0 + 1.0).min((img.height() - 1) as f64);
    let x1 = (x0 + 1.0).min((img.width() - 1) as f64);
    let v00 = img.get(y0 as usize, x0 as usize, c);
    let v01 = img.get(y0 as usize, x1 as usize, c);
    let v10 = img.get(y1 as usize, x0 as usize, c);
    let v11 = img.get(y1 as usize, x1 as usize, c);
    v00 * (1.0 - fy) * (1.0 - fx) + v01 * (1.0 - fy) * fx + v10 * fy * (1.0 - fx) + v11 * fy * fx
}

/// Bilinear resize with half-pixel centers and clamped border taps.
/// Constants are preserved exactly up to rounding.
pub fn resize_bilinear(img: &Image, out_h: usize, out_w: usize) -> Image {
    assert!(out_h > 0 && out_w > 0);
    if out_h == img.height() && out_w == img.width() {
        return img.clone();
    }
    let sy = img.height() as f64 / out_h as f64;
    let sx = img.width() as f64 / out_w as f64;
    Image::from_fn(out_h, out_w, img.channels(), |y, x, c| {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        let src_x = (x as f64 + 0.5) * sx - 0.5;
        sample_clamp(img, src_y, src_x, c)
    })
}

/// Rotate about the image center with bilinear resampling; out-of-frame
/// samples are filled with 0 and the output keeps the input dimensions.
pub fn rotate(img: &Image, degrees: f64) -> Image {
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cy = (img.height() - 1) as f64 / 2.0;
    let cx = (img.width() - 1) as f64 / 2.0;
    Image::from_fn(img.height(), img.width(), img.channels(), |y, x, c| {
        let dy = y as f64 - cy;
        let dx = x as f64 - cx;
        // Inverse rotation of the output grid point into source coordinates.
        let src_y = cy + (cos * dy + sin * dx);
        let src_x = cx + (-sin * dy + cos * dx);
        sample_zero(img, src_y, src_x, c)
    })
}

/// Side lengths of the retained crop window: `floor(fraction * side)`.
pub fn crop_window_dims(height: usize, width: usize, fraction: f64) -> (usize, usize) {
    (
        ((fraction * height as f64).floor() as usize).max(1),
        ((fraction * width as f64).floor() as usize).max(1),
    )
}

/// Crop a window at an explicit offset, then resize back to the input shape.
pub fn crop_at(
    img: &Image,
    fraction: f64,
    offset_y: usize,
    offset_x: usize,
) -> Result<Image, OpsError> {
    if img.height() < 2 || img.width() < 2 {
        return Err(OpsError::TooSmall {
            height: img.height(),
            width: img.width(),
        });
    }
    assert!(fraction > 0.0 && fraction <= 1.0, "crop fraction in (0, 1]");
    let (wh, ww) = crop_window_dims(img.height(), img.width(), fraction);
    if offset_y + wh > img.height() || offset_x + ww > img.width() {
        return Err(OpsError::WindowOutOfBounds);
    }
    let window = Image::from_fn(wh, ww, img.channels(), |y, x, c| {
        img.get(offset_y + y, offset_x + x, c)
    });
    Ok(resize_bilinear(&window, img.height(), img.width()))
}

/// Seeded crop: retains a `floor(fraction * side)` window at a
/// seed-determined offset and resizes back to the original resolution.
pub fn crop(img: &Image, fraction: f64, seed: u64) -> Result<Image, OpsError> {
    if img.height() < 2 || img.width() < 2 {
        return Err(OpsError::TooSmall {
            height: img.height(),
            width: img.width(),
        });
    }
    let (wh, ww) = crop_window_dims(img.height(), img.width(), fraction);
    let mut rng = chacha(seed);
    let oy = rng.random_range(0..=img.height() - wh);
    let ox = rng.random_range(0..=img.width() - ww);
    crop_at(img, fraction, oy, ox)
}

/// Radial bulge: inside radius `R = radius_fraction * min(H, W) / 2` the
/// source coordinate is pulled toward the center by factor `r / R`
/// (quadratic displacement), leaving the boundary and the outside untouched.
pub fn convex(img: &Image, radius_fraction: f64) -> Image {
    assert!(radius_fraction > 0.0 && radius_fraction <= 1.0);
    let cy = (img.height() - 1) as f64 / 2.0;
    let cx = (img.width() - 1) as f64 / 2.0;
    let radius = radius_fraction * img.height().min(img.width()) as f64 / 2.0;
    Image::from_fn(img.height(), img.width(), img.channels(), |y, x, c| {
        let dy = y as f64 - cy;
        let dx = x as f64 - cx;
        let r = (dy * dy + dx * dx).sqrt();
        if r > radius || radius == 0.0 {
            img.get(y, x, c)
        } else {
            let t = r / radius;
            sample_clamp(img, cy + dy * t, cx + dx * t, c)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth_gradient(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, 3, |y, x, c| {
            0.25 + 0.4 * y as f64 / h as f64 + 0.3 * x as f64 / w as f64 + 0.01 * c as f64
        })
    }

    #[test]
    fn rotate_roundtrip_restores_central_disk() {
        let img = smooth_gradient(33, 33);
        let back = rotate(&rotate(&img, 45.0), -45.0);
        let cy = 16.0;
        let cx = 16.0;
        let r = 33.0f64.min(33.0) / 4.0;
        for y in 0..33 {
            for x in 0..33 {
                let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
                if d <= r {
                    for c in 0..3 {
                        let err = (back.get(y, x, c) - img.get(y, x, c)).abs();
                        assert!(err < 0.06, "pixel ({y},{x},{c}) err {err}");
                    }
                }
            }
        }
    }

    #[test]
    fn rotate_constant_inside_inscribed_disk() {
        let img = Image::constant(21, 21, 1, 0.6);
        let out = rotate(&img, 45.0);
        let c = 10.0;
        for y in 0..21 {
            for x in 0..21 {
                let d = ((y as f64 - c).powi(2) + (x as f64 - c).powi(2)).sqrt();
                if d < 9.0 {
                    assert!((out.get(y, x, 0) - 0.6).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn rotate_1x1_is_identity() {
        let img = Image::constant(1, 1, 3, 0.42);
        assert_eq!(rotate(&img, 45.0), img);
        assert_eq!(rotate(&img, -45.0), img);
    }

    #[test]
    fn crop_window_geometry() {
        assert_eq!(crop_window_dims(64, 64, 0.5), (32, 32));
        assert_eq!(crop_window_dims(64, 64, 2.0 / 3.0), (42, 42));
        assert_eq!(crop_window_dims(64, 64, 0.75), (48, 48));
    }

    #[test]
    fn crop_constant_stays_constant() {
        let img = Image::constant(32, 32, 3, 0.3);
        let out = crop(&img, 0.5, 9).unwrap();
        assert_eq!(out.height(), 32);
        assert!(out.data().iter().all(|&v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn crop_left_half_of_split_image_is_black() {
        let img = Image::from_fn(64, 64, 1, |_, x, _| if x < 32 { 0.0 } else { 1.0 });
        let out = crop_at(&img, 0.5, 0, 0).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn crop_rejects_tiny_images() {
        let img = Image::constant(1, 4, 1, 0.5);
        assert!(matches!(crop(&img, 0.5, 0), Err(OpsError::TooSmall { .. })));
    }

    #[test]
    fn crop_shape_preserved() {
        let img = smooth_gradient(30, 50);
        let out = crop(&img, 2.0 / 3.0, 3).unwrap();
        assert_eq!((out.height(), out.width(), out.channels()), (30, 50, 3));
    }

    #[test]
    fn convex_outside_radius_is_bit_identical() {
        let img = smooth_gradient(41, 41);
        let out = convex(&img, 0.25);
        let radius = 0.25 * 41.0 / 2.0;
        let c = 20.0;
        for y in 0..41 {
            for x in 0..41 {
                let r = ((y as f64 - c).powi(2) + (x as f64 - c).powi(2)).sqrt();
                if r > radius {
                    for ch in 0..3 {
                        assert_eq!(out.get(y, x, ch).to_bits(), img.get(y, x, ch).to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn convex_constant_stays_constant() {
        let img = Image::constant(33, 33, 3, 0.55);
        let out = convex(&img, 0.5);
        assert!(out.data().iter().all(|&v| (v - 0.55).abs() < 1e-12));
    }

    #[test]
    fn convex_center_pixel_maps_from_itself() {
        // Displacement-field oracle: at r = 0 the pulled source coordinate
        // is the center itself, whatever the radius.
        let img = Image::from_fn(33, 33, 1, |y, x, _| {
            let d = ((y as f64 - 16.0).powi(2) + (x as f64 - 16.0).powi(2)).sqrt();
            (d / 32.0).min(1.0)
        });
        for rf in [0.125, 0.25, 0.5] {
            let out = convex(&img, rf);
            assert_eq!(out.get(16, 16, 0).to_bits(), img.get(16, 16, 0).to_bits());
        }
    }

    #[test]
    fn resize_preserves_constants() {
        let img = Image::constant(13, 29, 3, 0.77);
        let out = resize_bilinear(&img, 32, 32);
        assert!(out.data().iter().all(|&v| (v - 0.77).abs() < 1e-12));
    }
}
