//! Synthetic glyph images: a separable stand-in for real gesture photos.
//!
//! Class `c` is drawn as a fixed geometric glyph at a jittered position and
//! scale, in a random bright tint over a dim noisy background. The class
//! mapped to `none` renders background only.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::manifest::{Manifest, Record};
use super::pnm::{save_image, RgbImage};
use super::vocab::{ClassVocab, NUM_CLASSES};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 5,
            per_class: 200,
            size: 32,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Glyph {
    HBar,
    VBar,
    Diagonal,
    Disc,
    Cross,
    AntiDiagonal,
    Ring,
    SquareOutline,
    Saltire,
    TwoHBars,
    TwoVBars,
    Ell,
    Tee,
    Triangle,
    FourDots,
    Block,
    Blank,
}

const SHAPES: [Glyph; 16] = [
    Glyph::HBar,
    Glyph::VBar,
    Glyph::Diagonal,
    Glyph::Disc,
    Glyph::Cross,
    Glyph::AntiDiagonal,
    Glyph::Ring,
    Glyph::SquareOutline,
    Glyph::Saltire,
    Glyph::TwoHBars,
    Glyph::TwoVBars,
    Glyph::Ell,
    Glyph::Tee,
    Glyph::Triangle,
    Glyph::FourDots,
    Glyph::Block,
];

fn glyph_for(class: usize, vocab: &ClassVocab) -> Glyph {
    let none = vocab.index_of("none").unwrap_or(NUM_CLASSES);
    match class.cmp(&none) {
        std::cmp::Ordering::Less => SHAPES[class],
        std::cmp::Ordering::Equal => Glyph::Blank,
        std::cmp::Ordering::Greater => SHAPES[class - 1],
    }
}

impl Glyph {
    /// Coverage test in glyph-local coordinates (unit radius, y down).
    fn covers(self, u: f64, v: f64) -> bool {
        const T: f64 = 0.2;
        let bar = |a: f64, b: f64| a.abs() < T && b.abs() < 0.9;
        let diag = |a: f64, b: f64| ((a - b) / 2f64.sqrt()).abs() < T && ((a + b) / 2f64.sqrt()).abs() < 1.0;
        let r = (u * u + v * v).sqrt();
        match self {
            Glyph::HBar => bar(v, u),
            Glyph::VBar => bar(u, v),
            Glyph::Diagonal => diag(u, v),
            Glyph::AntiDiagonal => diag(u, -v),
            Glyph::Disc => r < 0.6,
            Glyph::Cross => bar(u, v) || bar(v, u),
            Glyph::Ring => r > 0.5 && r < 0.85,
            Glyph::SquareOutline => {
                let m = u.abs().max(v.abs());
                m > 0.55 && m < 0.8
            }
            Glyph::Saltire => diag(u, v) || diag(u, -v),
            Glyph::TwoHBars => bar(v - 0.5, u) || bar(v + 0.5, u),
            Glyph::TwoVBars => bar(u - 0.5, v) || bar(u + 0.5, v),
            Glyph::Ell => bar(u + 0.6, v) || ((v - 0.7).abs() < T && u > -0.8 && u < 0.8),
            Glyph::Tee => ((v + 0.7).abs() < T && u.abs() < 0.8) || (u.abs() < T && v > -0.8 && v < 0.9),
            Glyph::Triangle => v > -0.7 && v < 0.6 && u.abs() < (v + 0.7) * 0.65,
            Glyph::FourDots => [(-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5)]
                .iter()
                .any(|(a, b)| ((u - a).powi(2) + (v - b).powi(2)).sqrt() < 0.28),
            Glyph::Block => u.abs() < 0.45 && v.abs() < 0.45,
            Glyph::Blank => false,
        }
    }
}

/// Draws one sample of `class` using `rng` for jitter, tint and noise.
pub fn render_glyph(class: usize, size: usize, vocab: &ClassVocab, rng: &mut impl Rng) -> RgbImage {
    let glyph = glyph_for(class, vocab);
    let s = size as f64;
    let cx = (s - 1.0) / 2.0 + rng.gen_range(-0.12..0.12) * s;
    let cy = (s - 1.0) / 2.0 + rng.gen_range(-0.12..0.12) * s;
    let radius = s * 0.36 * rng.gen_range(0.8..1.1);
    let fg: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.65..1.0));
    let bg: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.05..0.3));
    let mut pixels = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let (u, v) = ((x as f64 - cx) / radius, (y as f64 - cy) / radius);
            let on = glyph.covers(u, v);
            for c in 0..3 {
                let base = if on { fg[c] } else { bg[c] };
                let value = base + rng.gen_range(-0.08..0.08);
                pixels.push((value.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    RgbImage {
        width: size,
        height: size,
        pixels,
    }
}

fn check(spec: &SyntheticSpec) -> Result<()> {
    if spec.classes == 0 || spec.classes > NUM_CLASSES {
        return Err(Error::invalid(format!(
            "synthetic class count must be 1..={NUM_CLASSES}, got {}",
            spec.classes
        )));
    }
    if spec.per_class == 0 || spec.size < 8 {
        return Err(Error::invalid("synthetic spec needs per_class >= 1 and size >= 8"));
    }
    Ok(())
}

/// In-memory generation, class-major order. Classes use the first
/// `spec.classes` vocabulary entries.
pub fn generate_images(spec: &SyntheticSpec, vocab: &ClassVocab) -> Result<Vec<(RgbImage, usize)>> {
    check(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.classes * spec.per_class);
    for class in 0..spec.classes {
        for _ in 0..spec.per_class {
            out.push((render_glyph(class, spec.size, vocab, &mut rng), class));
        }
    }
    Ok(out)
}

/// Writes `images/<label>_<nnnnn>.ppm` plus `manifest.csv` into `out_dir`.
pub fn synth_generate(spec: &SyntheticSpec, vocab: &ClassVocab, out_dir: &Path) -> Result<Manifest> {
    let images = generate_images(spec, vocab)?;
    let img_dir = out_dir.join("images");
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let mut records = Vec::with_capacity(images.len());
    for (i, (img, label)) in images.iter().enumerate() {
        let name = vocab.name(*label).expect("label within vocabulary");
        let rel = format!("images/{name}_{i:05}.ppm");
        save_image(&out_dir.join(&rel), img)?;
        records.push(Record {
            path: rel,
            label: *label,
        });
    }
    let manifest = Manifest::new(out_dir, vocab.clone(), records);
    manifest.write_csv(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
