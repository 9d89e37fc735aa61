use std::path::Path;

use csdm_core::tensor::rng::RngStream;
use rand::Rng;

use crate::error::{CliError, CliResult};

/// IDX magic for unsigned-byte data with three dimensions.
pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;

/// Grayscale images flattened row-major, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageDataset {
    pub images: Vec<Vec<f64>>,
    pub width: usize,
    pub height: usize,
}

impl ImageDataset {
    pub fn new(images: Vec<Vec<f64>>, width: usize, height: usize) -> Result<Self, String> {
        if width == 0 || height == 0 {
            return Err("image dimensions must be positive".into());
        }
        if let Some(i) = images.iter().position(|im| im.len() != width * height) {
            return Err(format!("image {i} has {} pixels, expected {}", images[i].len(), width * height));
        }
        if images.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err("pixel values must lie in [0, 1]".into());
        }
        Ok(ImageDataset { images, width, height })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Fraction of pixels below `0.05`.
    pub fn near_zero_fraction(&self) -> f64 {
        let total = self.len() * self.width * self.height;
        if total == 0 {
            return 0.0;
        }
        self.images.iter().flatten().filter(|&&v| v < 0.05).count() as f64 / total as f64
    }
}

/// Parses an IDX image file: magic, then count, rows and columns as
/// big-endian `u32`, then one byte per pixel.
pub fn parse_idx_images(bytes: &[u8]) -> Result<ImageDataset, String> {
    if bytes.len() < 16 {
        return Err(format!("header needs 16 bytes, file has {}", bytes.len()));
    }
    let word = |i: usize| u32::from_be_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let magic = word(0);
    if magic != IDX_IMAGE_MAGIC {
        return Err(format!("bad magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}"));
    }
    let (n, rows, cols) = (word(4) as usize, word(8) as usize, word(12) as usize);
    if rows == 0 || cols == 0 {
        return Err(format!("image dimensions {rows}x{cols} must be positive"));
    }
    let expected = 16 + n * rows * cols;
    if bytes.len() != expected {
        return Err(format!("expected {expected} bytes for {n} images of {rows}x{cols}, found {}", bytes.len()));
    }
    let images = bytes[16..]
        .chunks(rows * cols)
        .take(n)
        .map(|px| px.iter().map(|&b| b as f64 / 255.0).collect())
        .collect();
    ImageDataset::new(images, cols, rows)
}

pub fn load_idx_images(path: &Path) -> CliResult<ImageDataset> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    parse_idx_images(&bytes).map_err(|m| CliError::data(path, m))
}

/// Inverse of [`parse_idx_images`]; pixels are rounded to the nearest byte.
pub fn write_idx_images(ds: &ImageDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + ds.len() * ds.width * ds.height);
    for v in [IDX_IMAGE_MAGIC, ds.len() as u32, ds.height as u32, ds.width as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for im in &ds.images {
        out.extend(im.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    out
}

/// Nearest-neighbour resampling to a size at least as large in both axes.
pub fn upscale_nearest(ds: &ImageDataset, new_w: usize, new_h: usize) -> Result<ImageDataset, String> {
    if new_w < ds.width || new_h < ds.height {
        return Err(format!(
            "cannot downscale {}x{} to {new_w}x{new_h}",
            ds.width, ds.height
        ));
    }
    let src_x: Vec<usize> = (0..new_w).map(|x| x * ds.width / new_w).collect();
    let src_y: Vec<usize> = (0..new_h).map(|y| y * ds.height / new_h).collect();
    let images = ds
        .images
        .iter()
        .map(|im| {
            let mut out = Vec::with_capacity(new_w * new_h);
            for &sy in &src_y {
                out.extend(src_x.iter().map(|&sx| im[sy * ds.width + sx]));
            }
            out
        })
        .collect();
    Ok(ImageDataset {
        images,
        width: new_w,
        height: new_h,
    })
}

/// Stroke images resembling handwritten digits: a few thick random line
/// segments with soft edges on a dark background.
pub fn synthetic_digits(n: usize, size: usize, seed: u64) -> ImageDataset {
    let root = RngStream::new(seed);
    let images = (0..n)
        .map(|i| {
            let mut g = root.substream(i as u64).generator();
            let mut im = vec![0.0; size * size];
            let lo = size as f64 * 0.2;
            let hi = size as f64 * 0.8;
            let strokes = g.random_range(2..=4);
            for _ in 0..strokes {
                let (x0, y0) = (g.random_range(lo..hi), g.random_range(lo..hi));
                let (x1, y1) = (g.random_range(lo..hi), g.random_range(lo..hi));
                let width = size as f64 * 0.06;
                for py in 0..size {
                    for px in 0..size {
                        let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
                        let (dx, dy) = (x1 - x0, y1 - y0);
                        let len2 = (dx * dx + dy * dy).max(1e-12);
                        let t = (((x - x0) * dx + (y - y0) * dy) / len2).clamp(0.0, 1.0);
                        let dist = ((x - x0 - t * dx).powi(2) + (y - y0 - t * dy).powi(2)).sqrt();
                        let v = (1.5 - dist / width).clamp(0.0, 1.0);
                        let cell = &mut im[py * size + px];
                        *cell = f64::max(*cell, (v * 255.0).round() / 255.0);
                    }
                }
            }
            im
        })
        .collect();
    ImageDataset {
        images,
        width: size,
        height: size,
    }
}
