use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::dataset::{ClassVocab, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::Tensor;

use super::config::{LayerSpec, ModelConfig};

/// Per-channel `(x − mean) / std` applied to `[0,1]` images before the network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            mean: [0.5; 3],
            std: [0.5; 3],
        }
    }
}

impl Normalization {
    /// Normalizes a `[3,H,W]` image.
    pub fn apply(&self, image: &Tensor) -> Result<Tensor> {
        let &[3, h, w] = image.shape() else {
            return Err(Error::invalid(format!("expected [3,H,W] image, got {:?}", image.shape())));
        };
        let plane = h * w;
        let data = image
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = i / plane;
                (v - self.mean[c]) / self.std[c]
            })
            .collect();
        Ok(Tensor::from_parts(image.shape().to_vec(), data))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreezeMode {
    /// Every convolutional / block parameter frozen; only dense layers train.
    FeatureExtraction,
    FineTuning,
    AllFrozen,
}

impl std::str::FromStr for FreezeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feature-extraction" => Ok(FreezeMode::FeatureExtraction),
            "fine-tuning" => Ok(FreezeMode::FineTuning),
            "all-frozen" => Ok(FreezeMode::AllFrozen),
            other => Err(Error::invalid(format!(
                "unknown freeze mode '{other}' (feature-extraction, fine-tuning, all-frozen)"
            ))),
        }
    }
}

impl std::fmt::Display for FreezeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FreezeMode::FeatureExtraction => "feature-extraction",
            FreezeMode::FineTuning => "fine-tuning",
            FreezeMode::AllFrozen => "all-frozen",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub frozen: bool,
    /// Belongs to a dense (fully connected) layer.
    pub dense: bool,
}

#[derive(Clone, Debug)]
struct BlockParams {
    bn1: (usize, usize),
    conv1: usize,
    bn2: (usize, usize),
    conv2: usize,
    projection: Option<usize>,
    stride: usize,
}

#[derive(Clone, Debug)]
enum Layer {
    Conv { weight: usize, stride: usize, padding: usize },
    BatchNormLite { scale: usize, shift: usize },
    Relu,
    MaxPool { window: usize, stride: usize },
    GlobalAvgPool,
    Dense { weight: usize, bias: usize },
    Residual(BlockParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    Spatial(usize, usize, usize),
    Flat(usize),
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shape::Spatial(c, h, w) => write!(f, "{c}x{h}x{w}"),
            Shape::Flat(n) => write!(f, "{n} features"),
        }
    }
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

struct Builder<'a> {
    rng: &'a mut ChaCha8Rng,
    params: Vec<Parameter>,
}

impl Builder<'_> {
    fn add(&mut self, name: String, value: Tensor, dense: bool) -> Result<usize> {
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::Build(format!("duplicate parameter name '{name}'")));
        }
        self.params.push(Parameter {
            name,
            value,
            frozen: false,
            dense,
        });
        Ok(self.params.len() - 1)
    }

    fn he(&mut self, shape: Vec<usize>, fan_in: usize) -> Tensor {
        let std = (2.0 / fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| std * standard_normal(self.rng)).collect();
        Tensor::from_parts(shape, data)
    }

    fn conv(&mut self, name: String, cout: usize, cin: usize, k: usize, zero: bool) -> Result<usize> {
        let shape = vec![cout, cin, k, k];
        let value = if zero {
            Tensor::from_parts(shape, vec![0.0; cout * cin * k * k])
        } else {
            self.he(shape, cin * k * k)
        };
        self.add(name, value, false)
    }

    fn bn(&mut self, name: &str, channels: usize) -> Result<(usize, usize)> {
        let scale = self.add(format!("{name}.scale"), Tensor::from_parts(vec![channels], vec![1.0; channels]), false)?;
        let shift = self.add(format!("{name}.shift"), Tensor::from_parts(vec![channels], vec![0.0; channels]), false)?;
        Ok((scale, shift))
    }
}

/// A built network: resolved layers, named parameters with freeze flags, and
/// the class vocabulary of its 17-way head.
#[derive(Clone, Debug)]
pub struct ModelGraph {
    config: ModelConfig,
    layers: Vec<Layer>,
    params: Vec<Parameter>,
    vocab: ClassVocab,
    pub normalization: Normalization,
    seed: u64,
}

/// Result of a recorded forward pass.
pub struct ForwardPass {
    pub tape: Tape,
    pub input: Var,
    pub logits: Var,
    /// One leaf per parameter, in [`ModelGraph::params`] order.
    pub params: Vec<Var>,
    /// Output of every configured layer, in order.
    pub layer_outputs: Vec<Var>,
}

impl ModelGraph {
    /// Validates shape chaining and initializes parameters from `seed`.
    ///
    /// Conv and dense weights get He fan-in scaling; biases, batch-norm-lite
    /// shifts and the last convolution of each residual branch start at zero.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        if config.in_channels != 3 {
            return Err(Error::Build(format!(
                "input must have 3 channels, config says {}",
                config.in_channels
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            rng: &mut rng,
            params: Vec::new(),
        };
        let mut shape = Shape::Spatial(config.in_channels, config.height, config.width);
        let mut prev = "layer 0 (input)".to_string();
        let mut layers = Vec::with_capacity(config.layers.len());

        for (i, spec) in config.layers.iter().enumerate() {
            let here = format!("layer {} ({})", i + 1, spec.label());
            let spatial = |s: Shape| match s {
                Shape::Spatial(c, h, w) => Ok((c, h, w)),
                Shape::Flat(_) => Err(Error::Build(format!(
                    "{here} needs a spatial input but {prev} produces {s}"
                ))),
            };
            let (layer, next) = match spec {
                LayerSpec::Conv { name, out_channels, kernel, stride, padding, in_channels } => {
                    let (c, h, w) = spatial(shape)?;
                    if let Some(expect) = in_channels.filter(|&e| e != c) {
                        return Err(Error::Build(format!(
                            "{here} expects {expect} input channels but {prev} produces {c}"
                        )));
                    }
                    if *kernel > h + 2 * padding || *kernel > w + 2 * padding {
                        return Err(Error::Build(format!(
                            "{here} kernel {kernel} does not fit the {c}x{h}x{w} output of {prev}"
                        )));
                    }
                    let weight = b.conv(format!("{name}.weight"), *out_channels, c, *kernel, false)?;
                    let (oh, ow) = ((h + 2 * padding - kernel) / stride + 1, (w + 2 * padding - kernel) / stride + 1);
                    (
                        Layer::Conv { weight, stride: *stride, padding: *padding },
                        Shape::Spatial(*out_channels, oh, ow),
                    )
                }
                LayerSpec::BatchNormLite { name } => {
                    let (c, _, _) = spatial(shape)?;
                    let (scale, shift) = b.bn(name, c)?;
                    (Layer::BatchNormLite { scale, shift }, shape)
                }
                LayerSpec::Relu => (Layer::Relu, shape),
                LayerSpec::MaxPool { window, stride } => {
                    let (c, h, w) = spatial(shape)?;
                    if window > &h || window > &w {
                        return Err(Error::Build(format!(
                            "{here} window {window} exceeds the {c}x{h}x{w} output of {prev}"
                        )));
                    }
                    (
                        Layer::MaxPool { window: *window, stride: *stride },
                        Shape::Spatial(c, (h - window) / stride + 1, (w - window) / stride + 1),
                    )
                }
                LayerSpec::GlobalAvgPool => {
                    let (c, _, _) = spatial(shape)?;
                    (Layer::GlobalAvgPool, Shape::Spatial(c, 1, 1))
                }
                LayerSpec::Dense { name, out_features, in_features } => {
                    let n = match shape {
                        Shape::Spatial(c, h, w) => c * h * w,
                        Shape::Flat(n) => n,
                    };
                    if let Some(expect) = in_features.filter(|&e| e != n) {
                        return Err(Error::Build(format!(
                            "{here} expects {expect} inputs but {prev} produces {n}"
                        )));
                    }
                    let weight = b.he(vec![*out_features, n], n);
                    let weight = b.add(format!("{name}.weight"), weight, true)?;
                    let bias = b.add(
                        format!("{name}.bias"),
                        Tensor::from_parts(vec![*out_features], vec![0.0; *out_features]),
                        true,
                    )?;
                    (Layer::Dense { weight, bias }, Shape::Flat(*out_features))
                }
                LayerSpec::Residual(r) => {
                    let (c, h, w) = spatial(shape)?;
                    let needs_projection = r.stride != 1 || r.out_channels != c;
                    if needs_projection && r.projection == Some(false) {
                        return Err(Error::Build(format!(
                            "{here} changes {c}x{h}x{w} to {} channels / stride {} but project=false",
                            r.out_channels, r.stride
                        )));
                    }
                    let name = &r.name;
                    let bn1 = b.bn(&format!("{name}.bn1"), c)?;
                    let conv1 = b.conv(format!("{name}.conv1.weight"), r.out_channels, c, 3, false)?;
                    let bn2 = b.bn(&format!("{name}.bn2"), r.out_channels)?;
                    let conv2 = b.conv(format!("{name}.conv2.weight"), r.out_channels, r.out_channels, 3, true)?;
                    let projection = if r.projection.unwrap_or(needs_projection) {
                        Some(b.conv(format!("{name}.proj.weight"), r.out_channels, c, 1, false)?)
                    } else {
                        None
                    };
                    (
                        Layer::Residual(BlockParams { bn1, conv1, bn2, conv2, projection, stride: r.stride }),
                        Shape::Spatial(r.out_channels, (h - 1) / r.stride + 1, (w - 1) / r.stride + 1),
                    )
                }
            };
            layers.push(layer);
            shape = next;
            prev = here;
        }

        match (config.layers.last(), shape) {
            (Some(LayerSpec::Dense { .. }), Shape::Flat(NUM_CLASSES)) => {}
            _ => {
                return Err(Error::Build(format!(
                    "final layer must be dense with {NUM_CLASSES} outputs, {prev} produces {shape}"
                )))
            }
        }

        let params = b.params;
        Ok(ModelGraph {
            config: config.clone(),
            layers,
            params,
            vocab: ClassVocab::default(),
            normalization: Normalization::default(),
            seed,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &ClassVocab {
        &self.vocab
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_classes(&self) -> usize {
        NUM_CLASSES
    }

    /// `[C,H,W]` expected per image.
    pub fn input_shape(&self) -> [usize; 3] {
        [self.config.in_channels, self.config.height, self.config.width]
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    /// Replaces a parameter value; the shape must match.
    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<()> {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::invalid(format!("no parameter named '{name}'")))?;
        if p.value.shape() != value.shape() {
            return Err(Error::shape(
                "set_param",
                format!("'{name}' is {:?}, got {:?}", p.value.shape(), value.shape()),
            ));
        }
        p.value = value;
        Ok(())
    }

    pub fn freeze_mask(&self) -> BTreeMap<String, bool> {
        self.params.iter().map(|p| (p.name.clone(), p.frozen)).collect()
    }

    pub fn apply_freeze(&mut self, mode: FreezeMode) {
        for p in &mut self.params {
            p.frozen = match mode {
                FreezeMode::FeatureExtraction => !p.dense,
                FreezeMode::FineTuning => false,
                FreezeMode::AllFrozen => true,
            };
        }
    }

    pub fn frozen_names(&self) -> Vec<&str> {
        self.params.iter().filter(|p| p.frozen).map(|p| p.name.as_str()).collect()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        let [c, h, w] = self.input_shape();
        match batch.shape() {
            &[_, bc, bh, bw] if (bc, bh, bw) == (c, h, w) => Ok(()),
            s => Err(Error::invalid(format!(
                "model expects input [B,{c},{h},{w}], got {s:?}"
            ))),
        }
    }

    /// Records a forward pass. Gradients are available for the input when
    /// `input_grad` is set, and for unfrozen parameters when `param_grad` is set.
    pub fn forward_tape(&self, batch: &Tensor, input_grad: bool, param_grad: bool) -> Result<ForwardPass> {
        self.check_batch(batch)?;
        let mut tape = Tape::new();
        let input = tape.leaf(batch.clone(), input_grad);
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), param_grad && !p.frozen))
            .collect();
        let mut x = input;
        let mut layer_outputs = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            x = match layer {
                Layer::Conv { weight, stride, padding } => tape.conv2d(x, params[*weight], *stride, *padding)?,
                Layer::BatchNormLite { scale, shift } => tape.scale_shift(x, params[*scale], params[*shift])?,
                Layer::Relu => tape.relu(x),
                Layer::MaxPool { window, stride } => tape.max_pool(x, *window, *stride)?,
                Layer::GlobalAvgPool => tape.global_avg_pool(x)?,
                Layer::Dense { weight, bias } => {
                    let shape = tape.value(x).shape().to_vec();
                    if shape.len() != 2 {
                        let features = shape[1..].iter().product();
                        x = tape.reshape(x, vec![shape[0], features])?;
                    }
                    tape.dense(x, params[*weight], params[*bias])?
                }
                Layer::Residual(bp) => {
                    let h = tape.scale_shift(x, params[bp.bn1.0], params[bp.bn1.1])?;
                    let h = tape.relu(h);
                    let h = tape.conv2d(h, params[bp.conv1], bp.stride, 1)?;
                    let h = tape.scale_shift(h, params[bp.bn2.0], params[bp.bn2.1])?;
                    let h = tape.relu(h);
                    let delta = tape.conv2d(h, params[bp.conv2], 1, 1)?;
                    let skip = match bp.projection {
                        Some(p) => tape.conv2d(x, params[p], bp.stride, 0)?,
                        None => x,
                    };
                    tape.add(skip, delta)?
                }
            };
            layer_outputs.push(x);
        }
        Ok(ForwardPass {
            tape,
            input,
            logits: x,
            params,
            layer_outputs,
        })
    }

    /// Logits `[B,17]` for a normalized `[B,3,H,W]` batch.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let pass = self.forward_tape(batch, false, false)?;
        Ok(pass.tape.value(pass.logits).clone())
    }

    pub fn probabilities(&self, batch: &Tensor) -> Result<Tensor> {
        kernels::softmax(&self.forward(batch)?)
    }

    /// Classifies one normalized `[3,H,W]` image.
    pub fn predict(&self, image: &Tensor) -> Result<Prediction> {
        let batch = Tensor::stack(std::slice::from_ref(image))?;
        let probs = self.probabilities(&batch)?;
        Ok(Prediction::from_probabilities(probs.data(), &self.vocab))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub index: usize,
    pub name: String,
    /// Maximum softmax probability, in [0,1].
    pub confidence: f64,
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Prediction {
    pub fn from_probabilities(probs: &[f64], vocab: &ClassVocab) -> Self {
        let index = argmax(probs);
        Prediction {
            index,
            name: vocab.name(index).unwrap_or("?").to_string(),
            confidence: probs[index],
        }
    }
}
