//! Rotation → zoom → normalize, with bilinear resampling and edge fill.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::Normalization;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    /// Whether rotation and zoom are applied at all; normalization always is.
    pub enabled: bool,
    /// Degrees, counter-clockwise positive.
    pub rotation_deg: (f64, f64),
    pub zoom: (f64, f64),
    pub normalization: Normalization,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enabled: true,
            rotation_deg: (0.0, 20.0),
            zoom: (0.9, 1.1),
            normalization: Normalization::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub angle_deg: f64,
    pub zoom: f64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        angle_deg: 0.0,
        zoom: 1.0,
    };
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

impl AugmentConfig {
    pub fn sample(&self, rng: &mut impl Rng) -> AugmentParams {
        if !self.enabled {
            return AugmentParams::IDENTITY;
        }
        AugmentParams {
            angle_deg: uniform(rng, self.rotation_deg),
            zoom: uniform(rng, self.zoom),
        }
    }

    /// Applies explicit parameters, then normalization.
    pub fn apply(&self, image: &Tensor, params: AugmentParams) -> Result<Tensor> {
        let rotated = rotate(image, params.angle_deg)?;
        let zoomed = zoom(&rotated, params.zoom)?;
        self.normalization.apply(&zoomed)
    }
}

/// Samples rotation/zoom from `cfg` and applies them. Output shape equals input shape.
pub fn augment(image: &Tensor, cfg: &AugmentConfig, rng: &mut impl Rng) -> Result<Tensor> {
    let params = cfg.sample(rng);
    cfg.apply(image, params)
}

fn chw(image: &Tensor) -> Result<(usize, usize, usize)> {
    match *image.shape() {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(Error::invalid(format!("expected [C,H,W] image, got {s:?}"))),
    }
}

/// Bilinear sample with coordinates clamped to the image (edge-value fill).
fn bilinear(plane: &[f64], h: usize, w: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
    let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Resamples every channel through `source(x, y)`, the inverse map from an
/// output pixel to its source coordinate.
fn resample(image: &Tensor, source: impl Fn(f64, f64) -> (f64, f64)) -> Result<Tensor> {
    let (c, h, w) = chw(image)?;
    let plane = h * w;
    let mut out = Vec::with_capacity(c * plane);
    for ch in 0..c {
        let src = &image.data()[ch * plane..(ch + 1) * plane];
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = source(x as f64, y as f64);
                out.push(bilinear(src, h, w, sx, sy));
            }
        }
    }
    Ok(Tensor::from_parts(image.shape().to_vec(), out))
}

/// Rotates content counter-clockwise (as displayed, y down) about the centre.
pub fn rotate(image: &Tensor, angle_deg: f64) -> Result<Tensor> {
    let (_, h, w) = chw(image)?;
    if angle_deg == 0.0 {
        return Ok(image.clone());
    }
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    resample(image, |x, y| {
        let (dx, dy) = (x - cx, y - cy);
        (cx + dx * cos - dy * sin, cy + dx * sin + dy * cos)
    })
}

/// Scales content about the centre; `factor > 1` zooms in.
pub fn zoom(image: &Tensor, factor: f64) -> Result<Tensor> {
    let (_, h, w) = chw(image)?;
    if !(factor > 0.0) {
        return Err(Error::invalid(format!("zoom factor must be positive, got {factor}")));
    }
    if factor == 1.0 {
        return Ok(image.clone());
    }
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    resample(image, |x, y| (cx + (x - cx) / factor, cy + (y - cy) / factor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn image(seed: u64, h: usize, w: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(vec![3, h, w], (0..3 * h * w).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    #[test]
    fn identity_params_only_normalize() {
        let cfg = AugmentConfig::default();
        let img = image(1, 9, 7);
        let out = cfg.apply(&img, AugmentParams::IDENTITY).unwrap();
        assert_eq!(out, cfg.normalization.apply(&img).unwrap());
    }

    #[test]
    fn constant_image_stays_constant() {
        let cfg = AugmentConfig::default();
        let img = Tensor::full(vec![3, 16, 16], 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let out = augment(&img, &cfg, &mut rng).unwrap();
            for v in out.data() {
                assert!((v - (0.3 - 0.5) / 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quarter_turn_is_counter_clockwise() {
        // A bright pixel right of centre moves above centre.
        let mut img = Tensor::zeros(vec![3, 5, 5]).unwrap();
        img.data_mut()[2 * 5 + 4] = 1.0;
        let out = rotate(&img, 90.0).unwrap();
        assert!((out.data()[2] - 1.0).abs() < 1e-12, "{:?}", &out.data()[..25]);
    }

    #[test]
    fn zoom_matches_direct_inverse_map() {
        // Independent resampler: explicit 4-neighbour weights per output pixel.
        let (h, w) = (11, 11);
        let mut img = Tensor::zeros(vec![3, h, w]).unwrap();
        for c in 0..3 {
            for (y, x) in [(5, 5), (5, 6), (4, 5), (6, 6)] {
                img.data_mut()[c * h * w + y * w + x] = 1.0 + c as f64;
            }
        }
        let factor = 1.1;
        let out = zoom(&img, factor).unwrap();
        let centre = 5.0;
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    let sx = (centre + (x as f64 - centre) / factor).max(0.0).min(10.0);
                    let sy = (centre + (y as f64 - centre) / factor).max(0.0).min(10.0);
                    let (x0, y0) = (sx as usize, sy as usize);
                    let mut expected = 0.0;
                    for (yy, wy) in [(y0, 1.0 - (sy - y0 as f64)), ((y0 + 1).min(10), sy - y0 as f64)] {
                        for (xx, wx) in [(x0, 1.0 - (sx - x0 as f64)), ((x0 + 1).min(10), sx - x0 as f64)] {
                            expected += wy * wx * img.data()[c * h * w + yy * w + xx];
                        }
                    }
                    let got = out.data()[c * h * w + y * w + x];
                    assert!((got - expected).abs() <= 1e-9, "({c},{y},{x}) {got} vs {expected}");
                }
            }
        }
        // Zooming in spreads the dot outward: mass at the rim grows.
        let rim = |t: &Tensor| t.data()[7 * w + 7] + t.data()[3 * w + 3];
        assert!(rim(&out) >= rim(&img));
    }

    #[test]
    fn sampled_ranges_and_means() {
        let cfg = AugmentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let (mut sa, mut sz) = (0.0, 0.0);
        for _ in 0..n {
            let p = cfg.sample(&mut rng);
            assert!((0.0..=20.0).contains(&p.angle_deg));
            assert!((0.9..=1.1).contains(&p.zoom));
            sa += p.angle_deg;
            sz += p.zoom;
        }
        let (ma, mz) = (sa / n as f64, sz / n as f64);
        // Uniform[a,b] has σ = (b−a)/√12; the mean of n draws has σ/√n.
        let sigma_a = 20.0 / 12f64.sqrt() / (n as f64).sqrt();
        let sigma_z = 0.2 / 12f64.sqrt() / (n as f64).sqrt();
        assert!((ma - 10.0).abs() <= 3.0 * sigma_a, "{ma}");
        assert!((mz - 1.0).abs() <= 3.0 * sigma_z, "{mz}");
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = AugmentConfig::default();
        let img = image(3, 8, 8);
        let a = augment(&img, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = augment(&img, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }
}
