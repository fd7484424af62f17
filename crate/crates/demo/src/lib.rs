//! wasm-bindgen surface for `www/index.html`.
//!
//! The page trains a small residual network on 16×16 synthetic glyphs in the
//! browser, then lets the user explore occlusion maps, Integrated Gradients
//! and rolling-average smoothing of a flickering frame stream.

use divesight::dataset::{generate_images, ClassVocab, RgbImage, SyntheticSpec};
use divesight::explain::{
    integrated_gradients, occlusion_map, render_heatmap, GrayImage, IgConfig, OcclusionConfig, RenderMode,
};
use divesight::model::{ModelConfig, ModelGraph};
use divesight::stream::{count_switches, flicker_frames, smooth, FrameProbs};
use divesight::train::{evaluate, train, StepLrSchedule, TrainConfig};
use divesight::{kernels, Tensor};
use wasm_bindgen::prelude::*;

const SIZE: usize = 16;
const CLASSES: usize = 3;

const MODEL: &str = "input size=16
conv name=stem out=8
bn name=stem.bn
relu
maxpool
residual name=stage1 out=8
residual name=stage2 out=16 stride=2
bn name=head.bn
relu
gap
dense name=head.fc out=17
";

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[wasm_bindgen]
pub struct Demo {
    seed: u64,
    model: ModelGraph,
    train_set: Vec<(Tensor, usize)>,
    samples: Vec<(RgbImage, usize)>,
    frames: Vec<RgbImage>,
    frame_probs: Vec<FrameProbs>,
    epochs_done: usize,
}

/// A rendered heatmap plus a one-line description.
#[wasm_bindgen]
pub struct Explanation {
    image: GrayImage,
    summary: String,
}

#[wasm_bindgen]
impl Explanation {
    pub fn width(&self) -> usize {
        self.image.width
    }

    pub fn height(&self) -> usize {
        self.image.height
    }

    /// Grayscale bytes, row-major; dark = important.
    pub fn pixels(&self) -> Vec<u8> {
        self.image.pixels.clone()
    }

    pub fn summary(&self) -> String {
        self.summary.clone()
    }
}

/// Smoothed labels of the flicker stream for one window size.
#[wasm_bindgen]
pub struct StreamResult {
    raw: Vec<u32>,
    smoothed: Vec<u32>,
    switches: usize,
    raw_switches: usize,
}

#[wasm_bindgen]
impl StreamResult {
    pub fn raw(&self) -> Vec<u32> {
        self.raw.clone()
    }

    pub fn smoothed(&self) -> Vec<u32> {
        self.smoothed.clone()
    }

    pub fn switches(&self) -> usize {
        self.switches
    }

    pub fn raw_switches(&self) -> usize {
        self.raw_switches
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> Result<Demo, String> {
        let vocab = ClassVocab::default();
        let data = |per_class, seed| {
            generate_images(
                &SyntheticSpec {
                    classes: CLASSES,
                    per_class,
                    size: SIZE,
                    seed,
                },
                &vocab,
            )
        };
        let train_set = data(80, seed)
            .map_err(err)?
            .into_iter()
            .map(|(img, c)| (img.to_tensor(), c))
            .collect();
        let samples = data(4, seed.wrapping_add(1)).map_err(err)?;
        let frames = flicker_frames(CLASSES, SIZE, seed.wrapping_add(2), &vocab)
            .map_err(err)?
            .into_iter()
            .map(|(img, _)| img)
            .collect();
        let config = ModelConfig::parse(MODEL).map_err(err)?;
        let model = ModelGraph::build(&config, seed).map_err(err)?;
        Ok(Demo {
            seed,
            model,
            train_set,
            samples,
            frames,
            frame_probs: Vec::new(),
            epochs_done: 0,
        })
    }

    pub fn size(&self) -> usize {
        SIZE
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn class_name(&self, index: usize) -> String {
        self.model.vocab().name(index).unwrap_or("?").to_string()
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn sample_label(&self, index: usize) -> String {
        self.samples
            .get(index)
            .map(|(_, c)| self.class_name(*c))
            .unwrap_or_default()
    }

    /// RGBA bytes of a held-out sample, ready for `ImageData`.
    pub fn sample_rgba(&self, index: usize) -> Vec<u8> {
        self.samples.get(index).map(|(img, _)| rgba(img)).unwrap_or_default()
    }

    /// Trains `epochs` more epochs; returns held-out accuracy in percent.
    pub fn train(&mut self, epochs: usize) -> Result<f64, String> {
        let cfg = TrainConfig {
            epochs,
            batch_size: 16,
            // Every call restarts the schedule; a larger base rate makes
            // short bursts of training visible in the page.
            schedule: StepLrSchedule {
                base_lr: 0.003,
                ..StepLrSchedule::default()
            },
            seed: self.seed.wrapping_add(self.epochs_done as u64),
            ..TrainConfig::default()
        };
        train(&mut self.model, &self.train_set, None, &cfg).map_err(err)?;
        self.epochs_done += epochs;
        self.frame_probs.clear();
        let held_out: Vec<(Tensor, usize)> = self.samples.iter().map(|(img, c)| (img.to_tensor(), *c)).collect();
        Ok(100.0 * evaluate(&self.model, &held_out).map_err(err)?.accuracy())
    }

    fn normalized(&self, index: usize) -> Result<Tensor, String> {
        let (img, _) = self.samples.get(index).ok_or("no such sample")?;
        self.model.normalization.apply(&img.to_tensor()).map_err(err)
    }

    /// Occlusion map for the predicted class of sample `index`.
    pub fn occlusion(&self, index: usize, patch: usize, stride: usize) -> Result<Explanation, String> {
        let x = self.normalized(index)?;
        let pred = self.model.predict(&x).map_err(err)?;
        let cfg = OcclusionConfig {
            patch,
            stride,
            ..OcclusionConfig::new(pred.index)
        };
        let map = occlusion_map(&self.model, &x, &cfg).map_err(err)?;
        let (r, c, drop) = map.max_drop();
        Ok(Explanation {
            image: render_heatmap(&map, RenderMode::Magnitude),
            summary: format!(
                "predicted {} ({:.1}%); {}x{} grid, largest drop {:.4} at row {r}, col {c}",
                pred.name,
                100.0 * pred.confidence,
                map.rows,
                map.cols,
                drop
            ),
        })
    }

    /// Integrated Gradients for the predicted class of sample `index`.
    pub fn integrated_gradients(&self, index: usize, steps: usize) -> Result<Explanation, String> {
        let x = self.normalized(index)?;
        let pred = self.model.predict(&x).map_err(err)?;
        let cfg = IgConfig {
            steps,
            ..IgConfig::new(pred.index)
        };
        let map = integrated_gradients(&self.model, &x, &cfg).map_err(err)?;
        let delta = map.score_input - map.score_baseline;
        Ok(Explanation {
            image: render_heatmap(&map, RenderMode::Magnitude),
            summary: format!(
                "predicted {} ({:.1}%); {steps} steps, completeness gap {:.2e} ({:.3}% of F(x)-F(baseline) = {:.4})",
                pred.name,
                100.0 * pred.confidence,
                map.completeness_gap,
                100.0 * map.completeness_gap / delta.abs().max(f64::MIN_POSITIVE),
                delta
            ),
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frame_rgba(&self, index: usize) -> Vec<u8> {
        self.frames.get(index).map(rgba).unwrap_or_default()
    }

    /// Classifies the flicker stream (cached per trained model) and smooths
    /// it with window `q`.
    pub fn stream(&mut self, q: usize) -> Result<StreamResult, String> {
        if self.frame_probs.is_empty() {
            let k = self.model.num_classes();
            for (start, chunk) in self.frames.chunks(32).enumerate() {
                let batch = chunk
                    .iter()
                    .map(|f| self.model.normalization.apply(&f.to_tensor()))
                    .collect::<divesight::Result<Vec<_>>>()
                    .map_err(err)?;
                let logits = self.model.forward(&Tensor::stack(&batch).map_err(err)?).map_err(err)?;
                let probs = kernels::softmax(&logits).map_err(err)?;
                for (i, row) in probs.data().chunks_exact(k).enumerate() {
                    self.frame_probs.push(FrameProbs {
                        frame_index: start * 32 + i,
                        file: String::new(),
                        probs: row.to_vec(),
                    });
                }
            }
        }
        let vocab = self.model.vocab();
        let smoothed = smooth(&self.frame_probs, q, vocab).map_err(err)?;
        let raw = smooth(&self.frame_probs, 1, vocab).map_err(err)?;
        Ok(StreamResult {
            raw: raw.iter().map(|f| f.raw_index as u32).collect(),
            smoothed: smoothed.iter().map(|f| f.smoothed_index as u32).collect(),
            switches: count_switches(&smoothed),
            raw_switches: count_switches(&raw),
        })
    }
}

fn rgba(img: &RgbImage) -> Vec<u8> {
    img.pixels
        .chunks_exact(3)
        .flat_map(|p| [p[0], p[1], p[2], 255])
        .collect()
}
