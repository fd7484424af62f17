//! Grayscale rendering with the dark-is-important convention.

use std::path::Path;

use crate::dataset::encode_pgm;
use crate::error::{Error, Result};

use super::ig::AttributionMap;
use super::occlusion::Heatmap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderMode {
    /// Absolute values: any strong attribution is dark.
    Magnitude,
    /// Raw signed values: most positive is darkest.
    Signed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn to_pgm(&self) -> Vec<u8> {
        encode_pgm(self.width, self.height, &self.pixels).expect("pixel count matches dimensions")
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

/// Anything that can be laid out as one importance value per image pixel.
pub trait AttributionGrid {
    /// `(width, height, row-major values)`.
    fn pixel_values(&self, mode: RenderMode) -> (usize, usize, Vec<f64>);
}

impl AttributionGrid for AttributionMap {
    /// Channels are collapsed by summing (absolute values in magnitude mode).
    fn pixel_values(&self, mode: RenderMode) -> (usize, usize, Vec<f64>) {
        let s = self.values.shape();
        let (c, h, w) = (s[0], s[1], s[2]);
        let plane = h * w;
        let mut out = vec![0.0; plane];
        for ch in 0..c {
            for (o, &v) in out.iter_mut().zip(&self.values.data()[ch * plane..(ch + 1) * plane]) {
                *o += match mode {
                    RenderMode::Magnitude => v.abs(),
                    RenderMode::Signed => v,
                };
            }
        }
        (w, h, out)
    }
}

impl AttributionGrid for Heatmap {
    /// Nearest-neighbour upsampling of the window grid to image size.
    fn pixel_values(&self, mode: RenderMode) -> (usize, usize, Vec<f64>) {
        let (h, w) = (self.image_height, self.image_width);
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h {
            let r = (y * self.rows / h).min(self.rows - 1);
            for x in 0..w {
                let q = (x * self.cols / w).min(self.cols - 1);
                let v = self.drop_at(r, q);
                out.push(match mode {
                    RenderMode::Magnitude => v.abs(),
                    RenderMode::Signed => v,
                });
            }
        }
        (w, h, out)
    }
}

/// Min-max normalizes to [0,255] and inverts so the highest value is black.
/// A constant map renders uniform 128.
pub fn render_heatmap(map: &impl AttributionGrid, mode: RenderMode) -> GrayImage {
    let (width, height, values) = map.pixel_values(mode);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let pixels = values
        .iter()
        .map(|&v| {
            if !(range > 0.0) {
                128
            } else {
                (255.0 * (1.0 - (v - min) / range)).round() as u8
            }
        })
        .collect();
    GrayImage {
        width,
        height,
        pixels,
    }
}

/// Binary view: pixels whose magnitude is in the top `fraction` are black (0), the rest white.
pub fn threshold_mask(map: &impl AttributionGrid, fraction: f64) -> Result<GrayImage> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("mask fraction must be in (0,1], got {fraction}")));
    }
    let (width, height, values) = map.pixel_values(RenderMode::Magnitude);
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let keep = ((fraction * values.len() as f64).ceil() as usize).clamp(1, values.len());
    let cutoff = sorted[keep - 1];
    let pixels = values.iter().map(|&v| if v >= cutoff { 0 } else { 255 }).collect();
    Ok(GrayImage {
        width,
        height,
        pixels,
    })
}
