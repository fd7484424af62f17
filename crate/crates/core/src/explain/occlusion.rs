use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{check_image, TargetScore};

const CHUNK: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct OcclusionConfig {
    pub patch: usize,
    pub stride: usize,
    /// Per-channel value written into the occluded patch (normalized space).
    pub fill: [f64; 3],
    pub target: usize,
}

impl OcclusionConfig {
    pub fn new(target: usize) -> Self {
        OcclusionConfig {
            patch: 8,
            stride: 4,
            fill: [0.0; 3],
            target,
        }
    }
}

/// Score drop per occlusion window, row-major over window positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    pub patch: usize,
    pub stride: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub target: usize,
    pub base_score: f64,
    pub drops: Vec<f64>,
}

impl Heatmap {
    pub fn drop_at(&self, row: usize, col: usize) -> f64 {
        self.drops[row * self.cols + col]
    }

    /// Pixel rectangle `(y0, x0, y1, x1)` (exclusive ends) of a window.
    pub fn window(&self, row: usize, col: usize) -> (usize, usize, usize, usize) {
        let (y, x) = (row * self.stride, col * self.stride);
        (y, x, y + self.patch, x + self.patch)
    }

    /// `(row, col, drop)` of the largest drop; ties go to the first in row-major order.
    pub fn max_drop(&self) -> (usize, usize, f64) {
        let best = crate::model::argmax(&self.drops);
        (best / self.cols, best % self.cols, self.drops[best])
    }
}

/// Slides a `patch × patch` fill-valued square over the image and records
/// `F(original) − F(occluded)` at each position.
pub fn occlusion_map(model: &impl TargetScore, image: &Tensor, cfg: &OcclusionConfig) -> Result<Heatmap> {
    check_image(model, image, cfg.target)?;
    let &[c, h, w] = image.shape() else { unreachable!() };
    if cfg.patch == 0 || cfg.stride == 0 || cfg.stride > cfg.patch {
        return Err(Error::invalid(format!(
            "occlusion needs 1 <= stride <= patch, got stride {} patch {}",
            cfg.stride, cfg.patch
        )));
    }
    if cfg.patch > h.min(w) {
        return Err(Error::invalid(format!(
            "occlusion patch {} larger than image {h}x{w}",
            cfg.patch
        )));
    }
    let (rows, cols) = ((h - cfg.patch) / cfg.stride + 1, (w - cfg.patch) / cfg.stride + 1);
    let base_score = model.scores(&Tensor::stack(std::slice::from_ref(image))?, cfg.target)?[0];

    let positions: Vec<(usize, usize)> = (0..rows).flat_map(|r| (0..cols).map(move |q| (r, q))).collect();
    let mut drops = Vec::with_capacity(positions.len());
    for chunk in positions.chunks(CHUNK) {
        let occluded: Vec<Tensor> = chunk
            .iter()
            .map(|&(r, q)| {
                let mut img = image.clone();
                let (y0, x0) = (r * cfg.stride, q * cfg.stride);
                let data = img.data_mut();
                for ch in 0..c {
                    for y in y0..y0 + cfg.patch {
                        let row = ch * h * w + y * w;
                        data[row + x0..row + x0 + cfg.patch].fill(cfg.fill[ch.min(2)]);
                    }
                }
                img
            })
            .collect();
        let scores = model.scores(&Tensor::stack(&occluded)?, cfg.target)?;
        drops.extend(scores.into_iter().map(|s| base_score - s));
    }
    Ok(Heatmap {
        rows,
        cols,
        patch: cfg.patch,
        stride: cfg.stride,
        image_height: h,
        image_width: w,
        target: cfg.target,
        base_score,
        drops,
    })
}
