//! Synthetic toy images and scored corpora.
//!
//! Every pipeline stage is runnable without any external dataset: the
//! generator produces deterministic gradient/texture compositions with
//! enough structure for the degradation classes to be distinguishable
//! (a consistent vertical luminance ramp for orientation, mid-frequency
//! value noise for blur levels, per-pixel micro-noise for the light blur
//! levels, and shapes for edges).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::raster::Image;
use crate::rng::{chacha, mix};

/// Bilinear value noise over a seeded lattice with `cell`-pixel spacing.
fn value_noise(rng: &mut ChaCha8Rng, res: usize, cell: usize) -> Vec<f64> {
    let nodes = res / cell + 2;
    let lattice: Vec<f64> = (0..nodes * nodes).map(|_| rng.random::<f64>()).collect();
    let mut out = vec![0.0f64; res * res];
    for y in 0..res {
        for x in 0..res {
            let fy = y as f64 / cell as f64;
            let fx = x as f64 / cell as f64;
            let y0 = fy.floor() as usize;
            let x0 = fx.floor() as usize;
            let ty = fy - y0 as f64;
            let tx = fx - x0 as f64;
            let v00 = lattice[y0 * nodes + x0];
            let v01 = lattice[y0 * nodes + x0 + 1];
            let v10 = lattice[(y0 + 1) * nodes + x0];
            let v11 = lattice[(y0 + 1) * nodes + x0 + 1];
            out[y * res + x] = v00 * (1.0 - ty) * (1.0 - tx)
                + v01 * (1.0 - ty) * tx
                + v10 * ty * (1.0 - tx)
                + v11 * ty * tx;
        }
    }
    out
}

/// Deterministic synthetic artwork: gradient + texture + shapes.
pub fn toy_image(seed: u64, res: usize) -> Image {
    assert!(res >= 8, "toy images need at least 8 pixels per side");
    let mut rng = chacha(mix(seed, &[0x70f]));
    let tint: [f64; 3] = [
        0.8 + 0.2 * rng.random::<f64>(),
        0.8 + 0.2 * rng.random::<f64>(),
        0.8 + 0.2 * rng.random::<f64>(),
    ];
    let coarse = value_noise(&mut rng, res, (res / 4).max(2));
    let fine = value_noise(&mut rng, res, (res / 12).max(2));

    // A few random rectangles and one disk for hard edges.
    let n_shapes = 2 + (rng.random::<u32>() % 2) as usize;
    struct Shape {
        y0: f64,
        x0: f64,
        y1: f64,
        x1: f64,
        disk: bool,
        color: [f64; 3],
    }
    let mut shapes = Vec::with_capacity(n_shapes);
    for s in 0..n_shapes {
        let cy = rng.random::<f64>() * res as f64;
        let cx = rng.random::<f64>() * res as f64;
        let hh = (0.08 + 0.17 * rng.random::<f64>()) * res as f64;
        let ww = (0.08 + 0.17 * rng.random::<f64>()) * res as f64;
        shapes.push(Shape {
            y0: cy - hh,
            x0: cx - ww,
            y1: cy + hh,
            x1: cx + ww,
            disk: s == 0,
            color: [rng.random(), rng.random(), rng.random()],
        });
    }

    let micro_seed = mix(seed, &[0x1117]);
    let mut micro_rng = chacha(micro_seed);
    let micro: Vec<f64> = (0..res * res * 3)
        .map(|_| (micro_rng.random::<f64>() - 0.5) * 0.12)
        .collect();

    Image::from_fn(res, res, 3, |y, x, c| {
        // Canonical vertical ramp shared by all toy images.
        let ramp = 0.2 + 0.5 * y as f64 / (res - 1) as f64;
        let mut v = 0.45 * ramp + 0.3 * coarse[y * res + x] + 0.2 * fine[y * res + x];
        v *= tint[c];
        for sh in &shapes {
            let inside = if sh.disk {
                let ry = (sh.y0 + sh.y1) / 2.0 - y as f64;
                let rx = (sh.x0 + sh.x1) / 2.0 - x as f64;
                let r = ((sh.y1 - sh.y0) / 2.0).min((sh.x1 - sh.x0) / 2.0);
                ry * ry + rx * rx <= r * r
            } else {
                (y as f64) >= sh.y0 && (y as f64) <= sh.y1 && (x as f64) >= sh.x0 && (x as f64) <= sh.x1
            };
            if inside {
                v = 0.55 * v + 0.45 * sh.color[c];
            }
        }
        v + micro[(y * res + x) * 3 + c]
    })
}

/// Content-dependent latent aesthetic score in the open interval (0, 10).
pub fn toy_score(img: &Image) -> f64 {
    let luma = img.luma();
    let (h, w) = (img.height(), img.width());
    let mean: f64 = luma.iter().sum::<f64>() / luma.len() as f64;
    // Mean absolute deviation from the 4-neighborhood: a texture energy.
    let mut texture = 0.0;
    let mut count = 0usize;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let nb = (luma[(y - 1) * w + x]
                + luma[(y + 1) * w + x]
                + luma[y * w + x - 1]
                + luma[y * w + x + 1])
                / 4.0;
            texture += (luma[y * w + x] - nb).abs();
            count += 1;
        }
    }
    texture /= count.max(1) as f64;
    let z = 6.0 * (2.0 * texture + 0.8 * mean - 0.55);
    10.0 / (1.0 + (-z).exp())
}

/// `count` deterministic toy images derived from one seed.
pub fn toy_corpus(seed: u64, count: usize, res: usize) -> Vec<Image> {
    (0..count).map(|i| toy_image(mix(seed, &[i as u64]), res)).collect()
}

/// Toy images paired with their latent scores.
pub fn toy_scored_corpus(seed: u64, count: usize, res: usize) -> Vec<(Image, f64)> {
    toy_corpus(seed, count, res)
        .into_iter()
        .map(|img| {
            let s = toy_score(&img);
            (img, s)
        })
        .collect()
}
