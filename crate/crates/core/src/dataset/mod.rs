//! Labelled image data: vocabulary, manifests, raster codecs, splits, and
//! the synthetic glyph dataset used for desk-scale runs.

mod manifest;
mod pnm;
mod split;
mod synth;
mod vocab;

pub use manifest::{load_manifest, Manifest, Record};
pub use pnm::{decode_pgm, decode_ppm, encode_pgm, encode_ppm, load_image, save_image, RgbImage};
pub use split::split;
pub use synth::{generate_images, render_glyph, synth_generate, SyntheticSpec};
pub use vocab::{ClassVocab, CLASS_NAMES, NUM_CLASSES};
