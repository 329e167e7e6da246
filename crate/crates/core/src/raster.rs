//! Dense raster images with unit-interval intensities.
//!
//! All degradation operators and model preprocessing work on [`Image`]:
//! a row-major H x W x C buffer of `f64` values in `[0, 1]`, with 1 or 3
//! channels. PNG is the external interchange format; a raw little-endian
//! f32 container is provided for lossless test fixtures.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("image dimensions must be nonzero (got {height}x{width})")]
    EmptyDimensions { height: usize, width: usize },
    #[error("channel count must be 1 or 3 (got {0})")]
    UnsupportedChannels(usize),
    #[error("data length {got} does not match {height}x{width}x{channels}")]
    DataLength {
        got: usize,
        height: usize,
        width: usize,
        channels: usize,
    },
    #[error("intensity {value} at index {index} outside [0, 1]")]
    IntensityOutOfRange { index: usize, value: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("png error: {0}")]
    Png(String),
    #[error("bad raw image header")]
    BadHeader,
}

/// Row-major H x W x C raster of intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Validating constructor: every intensity must lie in `[0, 1]` and the
    /// buffer length must equal `height * width * channels`.
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, RasterError> {
        if height == 0 || width == 0 {
            return Err(RasterError::EmptyDimensions { height, width });
        }
        if channels != 1 && channels != 3 {
            return Err(RasterError::UnsupportedChannels(channels));
        }
        if data.len() != height * width * channels {
            return Err(RasterError::DataLength {
                got: data.len(),
                height,
                width,
                channels,
            });
        }
        for (index, &value) in data.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(RasterError::IntensityOutOfRange { index, value });
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Constant-valued image.
    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self::new(height, width, channels, vec![value; height * width * channels])
            .expect("constant image parameters must be valid")
    }

    /// Build from a per-pixel closure; the result is clamped into `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c).clamp(0.0, 1.0));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn idx(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.idx(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.idx(y, x, c);
        self.data[i] = v;
    }

    /// Apply `f` to every intensity, clamping the result into `[0, 1]`.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
        }
    }

    /// Per-channel minimum intensity.
    pub fn channel_min(&self, c: usize) -> f64 {
        (0..self.height * self.width)
            .map(|i| self.data[i * self.channels + c])
            .fold(f64::INFINITY, f64::min)
    }

    /// Per-channel maximum intensity.
    pub fn channel_max(&self, c: usize) -> f64 {
        (0..self.height * self.width)
            .map(|i| self.data[i * self.channels + c])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Rec.601 luma for 3-channel images, identity for single-channel.
    pub fn luma(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.height * self.width);
        for p in 0..self.height * self.width {
            let base = p * self.channels;
            let v = if self.channels == 3 {
                0.299 * self.data[base] + 0.587 * self.data[base + 1] + 0.114 * self.data[base + 2]
            } else {
                self.data[base]
            };
            out.push(v);
        }
        out
    }

    /// Decode a PNG file; the result always has 3 channels.
    pub fn read_png(path: &Path) -> Result<Self, RasterError> {
        let dynimg = image::open(path).map_err(|e| RasterError::Png(e.to_string()))?;
        let rgb = dynimg.to_rgb8();
        let (w, h) = rgb.dimensions();
        let data = rgb.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
        Self::new(h as usize, w as usize, 3, data)
    }

    /// Encode as 8-bit PNG with `v -> round(255 v)`.
    pub fn write_png(&self, path: &Path) -> Result<(), RasterError> {
        let to_byte = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
        match self.channels {
            3 => {
                let buf: Vec<u8> = self.data.iter().map(|&v| to_byte(v)).collect();
                let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, buf)
                    .expect("buffer length matches dimensions");
                img.save(path).map_err(|e| RasterError::Png(e.to_string()))
            }
            1 => {
                let buf: Vec<u8> = self.data.iter().map(|&v| to_byte(v)).collect();
                let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
                    .expect("buffer length matches dimensions");
                img.save(path).map_err(|e| RasterError::Png(e.to_string()))
            }
            c => Err(RasterError::UnsupportedChannels(c)),
        }
    }

    /// Lossless fixture format: three u32-LE dims followed by f32-LE samples.
    pub fn write_raw(&self, mut w: impl Write) -> Result<(), RasterError> {
        w.write_all(&(self.height as u32).to_le_bytes())?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.channels as u32).to_le_bytes())?;
        for &v in &self.data {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    /// Read the fixture format written by [`Image::write_raw`].
    pub fn read_raw(mut r: impl Read) -> Result<Self, RasterError> {
        let mut u32buf = [0u8; 4];
        let mut read_u32 = |r: &mut dyn Read| -> Result<u32, RasterError> {
            r.read_exact(&mut u32buf)?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let height = read_u32(&mut r)? as usize;
        let width = read_u32(&mut r)? as usize;
        let channels = read_u32(&mut r)? as usize;
        if height == 0 || width == 0 || (channels != 1 && channels != 3) {
            return Err(RasterError::BadHeader);
        }
        let n = height * width * channels;
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Self::new(height, width, channels, data)
    }
}
