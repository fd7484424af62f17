//! Frame-sequence classification with rolling-average smoothing.
//!
//! A "stream" is an ordered list of image files: either every `.ppm` in a
//! directory (lexicographic order) or the paths listed in a text file.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{load_image, render_glyph, save_image, ClassVocab, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::kernels;
use crate::model::{argmax, ModelGraph};
use crate::tensor::Tensor;

pub const DEFAULT_WINDOW: usize = 5;
const INFER_BATCH: usize = 32;

/// Holds the last `capacity` probability vectors and their running sum.
#[derive(Clone, Debug)]
pub struct RollingWindow {
    capacity: usize,
    queue: VecDeque<Vec<f64>>,
    sum: Vec<f64>,
}

impl RollingWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("window size must be at least 1"));
        }
        Ok(RollingWindow {
            capacity,
            queue: VecDeque::with_capacity(capacity),
            sum: vec![0.0; NUM_CLASSES],
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn running_sum(&self) -> &[f64] {
        &self.sum
    }

    /// Element-wise mean of the queued vectors.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.queue.len().max(1) as f64;
        self.sum.iter().map(|s| s / n).collect()
    }

    /// Appends one probability vector and returns the smoothed
    /// `(label, confidence)`, confidence being the max of the mean vector.
    pub fn push_frame(&mut self, probs: &[f64]) -> Result<(usize, f64)> {
        if probs.len() != NUM_CLASSES {
            return Err(Error::invalid(format!(
                "probability vector has {} entries, expected {NUM_CLASSES}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("probability vector has negative or non-finite entries"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("probability vector sums to {total}, not 1")));
        }
        if self.queue.len() == self.capacity {
            self.queue.pop_front();
            // Re-summing avoids drift from repeated subtract/add.
            self.sum.iter_mut().for_each(|s| *s = 0.0);
            for v in &self.queue {
                for (s, p) in self.sum.iter_mut().zip(v) {
                    *s += p;
                }
            }
        }
        for (s, p) in self.sum.iter_mut().zip(probs) {
            *s += p;
        }
        self.queue.push_back(probs.to_vec());
        let mean = self.mean();
        let label = argmax(&mean);
        Ok((label, mean[label]))
    }
}

/// Where frames come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FrameSource {
    /// Every `.ppm` file in the directory, sorted by file name.
    Directory(PathBuf),
    /// One path per line, relative paths resolved against the list's directory.
    /// Blank lines and lines starting with `#` are ignored.
    List(PathBuf),
}

impl FrameSource {
    /// Directory if `path` is one, list file otherwise.
    pub fn from_path(path: &Path) -> Self {
        if path.is_dir() {
            FrameSource::Directory(path.to_path_buf())
        } else {
            FrameSource::List(path.to_path_buf())
        }
    }

    pub fn frame_paths(&self) -> Result<Vec<PathBuf>> {
        let paths = match self {
            FrameSource::Directory(dir) => {
                let mut paths = Vec::new();
                for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
                    let path = entry.map_err(|e| Error::io(dir, e))?.path();
                    if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")) {
                        paths.push(path);
                    }
                }
                paths.sort();
                paths
            }
            FrameSource::List(file) => {
                let text = std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
                let base = file.parent().unwrap_or(Path::new("."));
                text.lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                    .map(|l| base.join(l))
                    .collect()
            }
        };
        if paths.is_empty() {
            return Err(Error::invalid("frame source contains no frames"));
        }
        Ok(paths)
    }
}

/// Per-frame model output before smoothing.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameProbs {
    /// Position in the frame source (skipped frames leave gaps).
    pub frame_index: usize,
    pub file: String,
    pub probs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedFrame {
    pub frame_index: usize,
    pub file: String,
    pub raw_index: usize,
    pub raw_label: String,
    pub smoothed_index: usize,
    pub smoothed_label: String,
    /// 100 × max of the smoothed mean vector.
    pub confidence_pct: f64,
}

/// Runs the model over every frame. Unreadable frames are skipped with a
/// warning, or abort the run when `strict`.
pub fn infer_frames(model: &ModelGraph, source: &FrameSource, strict: bool) -> Result<Vec<FrameProbs>> {
    let paths = source.frame_paths()?;
    let mut loaded = Vec::with_capacity(paths.len());
    for (i, path) in paths.iter().enumerate() {
        match load_image(path).and_then(|img| model.normalization.apply(&img)) {
            Ok(img) => loaded.push((i, path, img)),
            Err(e) if !strict => log::warn!("skipping frame {i} ({}): {e}", path.display()),
            Err(e) => return Err(e),
        }
    }
    if loaded.is_empty() {
        return Err(Error::invalid("no readable frames in the stream"));
    }
    let k = model.num_classes();
    let mut out = Vec::with_capacity(loaded.len());
    for chunk in loaded.chunks(INFER_BATCH) {
        let batch = Tensor::stack(&chunk.iter().map(|(_, _, t)| t.clone()).collect::<Vec<_>>())?;
        let probs = kernels::softmax(&model.forward(&batch)?)?;
        for ((i, path, _), row) in chunk.iter().zip(probs.data().chunks_exact(k)) {
            out.push(FrameProbs {
                frame_index: *i,
                file: path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                probs: row.to_vec(),
            });
        }
    }
    Ok(out)
}

/// Feeds per-frame probabilities through a window of size `q`, in order.
pub fn smooth(frames: &[FrameProbs], q: usize, vocab: &ClassVocab) -> Result<Vec<AnnotatedFrame>> {
    let mut window = RollingWindow::new(q)?;
    let name = |i: usize| vocab.name(i).unwrap_or("?").to_string();
    frames
        .iter()
        .map(|f| {
            let (label, conf) = window.push_frame(&f.probs)?;
            let raw = argmax(&f.probs);
            Ok(AnnotatedFrame {
                frame_index: f.frame_index,
                file: f.file.clone(),
                raw_index: raw,
                raw_label: name(raw),
                smoothed_index: label,
                smoothed_label: name(label),
                confidence_pct: 100.0 * conf,
            })
        })
        .collect()
}

pub fn classify_stream(model: &ModelGraph, source: &FrameSource, q: usize, strict: bool) -> Result<Vec<AnnotatedFrame>> {
    smooth(&infer_frames(model, source, strict)?, q, model.vocab())
}

/// Number of positions where the smoothed label differs from the previous one.
pub fn count_switches(frames: &[AnnotatedFrame]) -> usize {
    frames
        .windows(2)
        .filter(|w| w[0].smoothed_index != w[1].smoothed_index)
        .count()
}

/// `annotations.csv`: frame_index, file, raw_label, smoothed_label, confidence_pct.
pub fn annotations_csv(frames: &[AnnotatedFrame]) -> String {
    let mut out = String::from("frame_index,file,raw_label,smoothed_label,confidence_pct\n");
    for f in frames {
        out.push_str(&format!(
            "{},{},{},{},{:.2}\n",
            f.frame_index, f.file, f.raw_label, f.smoothed_label, f.confidence_pct
        ));
    }
    out
}

pub fn write_annotations(path: &Path, frames: &[AnnotatedFrame]) -> Result<()> {
    std::fs::write(path, annotations_csv(frames)).map_err(|e| Error::io(path, e))
}

pub const FLICKER_FRAMES: usize = 200;
const FLICKER_SEGMENT: usize = 50;

/// Frames and their intended labels for the flicker fixture.
///
/// The stream walks through `classes` glyph classes in segments of 50
/// frames; every third frame shows a different (distractor) class, so a
/// per-frame classifier flickers while the segment's class dominates any
/// window of three or more frames.
pub fn flicker_frames(classes: usize, size: usize, seed: u64, vocab: &ClassVocab) -> Result<Vec<(crate::dataset::RgbImage, usize)>> {
    if classes < 2 || classes > vocab.len() {
        return Err(Error::invalid(format!("flicker fixture needs 2..={} classes", vocab.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(FLICKER_FRAMES);
    for i in 0..FLICKER_FRAMES {
        let segment = (i / FLICKER_SEGMENT) % classes;
        let class = if i % 3 == 2 {
            let offset = rng.gen_range(1..classes);
            (segment + offset) % classes
        } else {
            segment
        };
        frames.push((render_glyph(class, size, vocab, &mut rng), class));
    }
    Ok(frames)
}

/// Writes the flicker fixture as `frame_NNNN.ppm` files plus `frames.txt`.
pub fn write_flicker_fixture(classes: usize, size: usize, seed: u64, vocab: &ClassVocab, dir: &Path) -> Result<Vec<usize>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let frames = flicker_frames(classes, size, seed, vocab)?;
    let mut list = String::new();
    for (i, (img, _)) in frames.iter().enumerate() {
        let name = format!("frame_{i:04}.ppm");
        save_image(&dir.join(&name), img)?;
        list.push_str(&name);
        list.push('\n');
    }
    let list_path = dir.join("frames.txt");
    std::fs::write(&list_path, list).map_err(|e| Error::io(&list_path, e))?;
    Ok(frames.into_iter().map(|(_, c)| c).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn padded(head: &[f64]) -> Vec<f64> {
        let mut v = head.to_vec();
        v.resize(NUM_CLASSES, 0.0);
        v
    }

    fn frames(vectors: &[Vec<f64>]) -> Vec<FrameProbs> {
        vectors
            .iter()
            .enumerate()
            .map(|(i, p)| FrameProbs {
                frame_index: i,
                file: format!("f{i}.ppm"),
                probs: p.clone(),
            })
            .collect()
    }

    #[test]
    fn hand_averaged_example() {
        let mut w = RollingWindow::new(3).unwrap();
        w.push_frame(&padded(&[0.6, 0.4])).unwrap();
        w.push_frame(&padded(&[0.4, 0.6])).unwrap();
        let (label, conf) = w.push_frame(&padded(&[0.45, 0.55])).unwrap();
        assert_eq!(label, 1);
        assert!((conf - 1.55 / 3.0).abs() < 1e-12);
        let out = smooth(
            &frames(&[padded(&[0.6, 0.4]), padded(&[0.4, 0.6]), padded(&[0.45, 0.55])]),
            3,
            &ClassVocab::default(),
        )
        .unwrap();
        assert!(annotations_csv(&out).ends_with(",51.67\n"));
    }

    #[test]
    fn window_of_one_is_per_frame_argmax() {
        let vs = vec![padded(&[0.2, 0.8]), padded(&[0.9, 0.1]), padded(&[0.5, 0.5])];
        let out = smooth(&frames(&vs), 1, &ClassVocab::default()).unwrap();
        let labels: Vec<_> = out.iter().map(|f| f.smoothed_index).collect();
        assert_eq!(labels, vec![1, 0, 0]);
        assert!(out.iter().all(|f| f.smoothed_index == f.raw_index));
    }

    #[test]
    fn constant_input_is_constant_output() {
        let v = padded(&[0.1, 0.3, 0.6]);
        for q in [1, 3, 5, 20] {
            let out = smooth(&frames(&vec![v.clone(); 10]), q, &ClassVocab::default()).unwrap();
            for f in &out {
                assert_eq!(f.smoothed_index, 2);
                assert!((f.confidence_pct - 60.0).abs() < 1e-9);
            }
            assert_eq!(count_switches(&out), 0);
        }
    }

    #[test]
    fn malformed_vectors_rejected() {
        let mut w = RollingWindow::new(2).unwrap();
        assert!(w.push_frame(&[0.5, 0.5]).is_err());
        assert!(w.push_frame(&padded(&[0.5, 0.4])).is_err());
        assert!(w.push_frame(&padded(&[1.5, -0.5])).is_err());
        assert!(w.push_frame(&padded(&[f64::NAN, 1.0])).is_err());
        assert!(w.is_empty());
        assert!(RollingWindow::new(0).is_err());
    }

    #[test]
    fn switch_counting() {
        let mk = |labels: &[usize]| -> Vec<AnnotatedFrame> {
            labels
                .iter()
                .enumerate()
                .map(|(i, &l)| AnnotatedFrame {
                    frame_index: i,
                    file: String::new(),
                    raw_index: l,
                    raw_label: String::new(),
                    smoothed_index: l,
                    smoothed_label: String::new(),
                    confidence_pct: 0.0,
                })
                .collect()
        };
        assert_eq!(count_switches(&mk(&[4, 4, 4])), 0);
        assert_eq!(count_switches(&mk(&[0, 1, 0, 1])), 3);
        assert_eq!(count_switches(&[]), 0);
    }

    fn simplex(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..NUM_CLASSES).map(|_| rng.gen::<f64>()).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|x| x / s).collect()
    }

    proptest! {
        #[test]
        fn window_invariants(q in 1usize..8, seeds in prop::collection::vec(any::<u64>(), 1..30)) {
            let mut w = RollingWindow::new(q).unwrap();
            let vs: Vec<_> = seeds.iter().map(|&s| simplex(s)).collect();
            for (t, v) in vs.iter().enumerate() {
                w.push_frame(v).unwrap();
                prop_assert!(w.len() <= q);
                let start = (t + 1).saturating_sub(q);
                for c in 0..NUM_CLASSES {
                    let direct: f64 = vs[start..=t].iter().map(|v| v[c]).sum();
                    prop_assert!((w.running_sum()[c] - direct).abs() <= 1e-12);
                }
                prop_assert!((w.mean().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }

        #[test]
        fn switches_match_pairwise_scan(labels in prop::collection::vec(0usize..4, 0..40)) {
            let fs: Vec<_> = labels.iter().map(|&l| padded(&{
                let mut h = vec![0.0; 4];
                h[l] = 1.0;
                h
            })).collect();
            let out = smooth(&frames(&fs), 1, &ClassVocab::default()).unwrap();
            let mut naive = 0;
            for i in 1..labels.len() {
                if labels[i] != labels[i - 1] {
                    naive += 1;
                }
            }
            prop_assert_eq!(count_switches(&out), naive);
        }

        #[test]
        fn first_frame_independent_of_window(seed in any::<u64>(), q in 1usize..10) {
            let v = simplex(seed);
            let a = smooth(&frames(std::slice::from_ref(&v)), 1, &ClassVocab::default()).unwrap();
            let b = smooth(&frames(std::slice::from_ref(&v)), q, &ClassVocab::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn fixture_layout() {
        let vocab = ClassVocab::default();
        let frames = flicker_frames(5, 16, 3, &vocab).unwrap();
        assert_eq!(frames.len(), FLICKER_FRAMES);
        for (i, (_, c)) in frames.iter().enumerate() {
            let segment = (i / FLICKER_SEGMENT) % 5;
            assert_eq!(*c == segment, i % 3 != 2, "frame {i}");
        }
        assert_eq!(flicker_frames(5, 16, 3, &vocab).unwrap(), frames);
    }

    #[test]
    fn frame_sources() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = ClassVocab::default();
        write_flicker_fixture(3, 8, 1, &vocab, dir.path()).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let from_dir = FrameSource::from_path(dir.path()).frame_paths().unwrap();
        assert_eq!(from_dir.len(), FLICKER_FRAMES);
        assert!(from_dir.windows(2).all(|w| w[0] < w[1]));
        let from_list = FrameSource::from_path(&dir.path().join("frames.txt")).frame_paths().unwrap();
        assert_eq!(from_list, from_dir);

        let empty = tempfile::tempdir().unwrap();
        assert!(FrameSource::Directory(empty.path().into()).frame_paths().is_err());
    }
}
