//! Line-oriented model description: `kind key=value ...`, `#` comments.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Bundled desk-scale residual network: 32×32 input, two stages of two
/// residual blocks (widths 16 and 32), 17-way dense head.
pub const TINY_RESNET: &str = include_str!("../../configs/tiny-resnet.cfg");

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Conv {
        name: String,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        in_channels: Option<usize>,
    },
    /// Per-channel learned scale and shift, no running statistics.
    BatchNormLite { name: String },
    Relu,
    MaxPool { window: usize, stride: usize },
    GlobalAvgPool,
    Dense {
        name: String,
        out_features: usize,
        in_features: Option<usize>,
    },
    Residual(ResidualBlockSpec),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResidualBlockSpec {
    pub name: String,
    pub out_channels: usize,
    pub stride: usize,
    /// `None` → project only when the skip path changes shape.
    pub projection: Option<bool>,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::BatchNormLite { .. } => "bn",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::GlobalAvgPool => "gap",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Residual(_) => "residual",
        }
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            LayerSpec::Conv { name, .. }
            | LayerSpec::BatchNormLite { name }
            | LayerSpec::Dense { name, .. } => Some(name),
            LayerSpec::Residual(r) => Some(&r.name),
            _ => None,
        }
    }

    /// `kind 'name'` or just `kind`, for diagnostics.
    pub fn label(&self) -> String {
        match self.name() {
            Some(n) => format!("{} '{n}'", self.kind()),
            None => self.kind().to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub layers: Vec<LayerSpec>,
    /// Whitespace- and comment-normalized source, the basis of [`Self::digest`].
    canonical: String,
}

struct Line<'a> {
    number: usize,
    kind: &'a str,
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> Line<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::ConfigParse {
            line: self.number,
            msg: msg.into(),
        }
    }

    fn get(&self, key: &str) -> Option<&'a str> {
        self.pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    fn usize_opt(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| self.err(format!("{key}={v} is not a non-negative integer")))
            })
            .transpose()
    }

    fn positive(&self, key: &str, default: Option<usize>) -> Result<usize> {
        let v = match (self.usize_opt(key)?, default) {
            (Some(v), _) => v,
            (None, Some(d)) => d,
            (None, None) => return Err(self.err(format!("{} requires {key}=", self.kind))),
        };
        if v == 0 {
            return Err(self.err(format!("{key} must be positive")));
        }
        Ok(v)
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.pairs {
            if !allowed.contains(k) {
                return Err(self.err(format!("unknown key '{k}' for {}", self.kind)));
            }
        }
        Ok(())
    }

    fn name(&self, index: usize) -> String {
        self.get("name")
            .map(str::to_string)
            .unwrap_or_else(|| format!("{}{index}", self.kind))
    }
}

impl ModelConfig {
    pub fn tiny_resnet() -> Self {
        Self::parse(TINY_RESNET).expect("bundled config parses")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut input = None;
        let mut layers = Vec::new();
        let mut canonical = String::new();
        for (i, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut tokens = content.split_whitespace();
            let kind = tokens.next().unwrap();
            let mut line = Line {
                number: i + 1,
                kind,
                pairs: Vec::new(),
            };
            for tok in tokens {
                let (k, v) = tok
                    .split_once('=')
                    .ok_or_else(|| line.err(format!("expected key=value, got '{tok}'")))?;
                if line.get(k).is_some() {
                    return Err(line.err(format!("duplicate key '{k}'")));
                }
                line.pairs.push((k, v));
            }
            canonical.push_str(&content.split_whitespace().collect::<Vec<_>>().join(" "));
            canonical.push('\n');

            let index = layers.len();
            let spec = match kind {
                "input" => {
                    line.check_keys(&["channels", "height", "width", "size"])?;
                    if input.is_some() || !layers.is_empty() {
                        return Err(line.err("input must be the first and only input line"));
                    }
                    let size = line.usize_opt("size")?;
                    input = Some((
                        line.positive("channels", Some(3))?,
                        line.positive("height", size.or(Some(32)))?,
                        line.positive("width", size.or(Some(32)))?,
                    ));
                    continue;
                }
                "conv" => {
                    line.check_keys(&["name", "out", "kernel", "stride", "pad", "in"])?;
                    let kernel = line.positive("kernel", Some(3))?;
                    LayerSpec::Conv {
                        name: line.name(index),
                        out_channels: line.positive("out", None)?,
                        kernel,
                        stride: line.positive("stride", Some(1))?,
                        padding: line.usize_opt("pad")?.unwrap_or(kernel / 2),
                        in_channels: line.usize_opt("in")?,
                    }
                }
                "bn" | "batch-norm-lite" => {
                    line.check_keys(&["name"])?;
                    LayerSpec::BatchNormLite {
                        name: line.name(index),
                    }
                }
                "relu" => {
                    line.check_keys(&[])?;
                    LayerSpec::Relu
                }
                "maxpool" => {
                    line.check_keys(&["window", "stride"])?;
                    let window = line.positive("window", Some(2))?;
                    LayerSpec::MaxPool {
                        window,
                        stride: line.positive("stride", Some(window))?,
                    }
                }
                "gap" | "global-avg-pool" => {
                    line.check_keys(&[])?;
                    LayerSpec::GlobalAvgPool
                }
                "dense" => {
                    line.check_keys(&["name", "out", "in"])?;
                    LayerSpec::Dense {
                        name: line.name(index),
                        out_features: line.positive("out", None)?,
                        in_features: line.usize_opt("in")?,
                    }
                }
                "residual" | "residual-block" => {
                    line.check_keys(&["name", "out", "stride", "project"])?;
                    let projection = match line.get("project") {
                        None => None,
                        Some("true") => Some(true),
                        Some("false") => Some(false),
                        Some(v) => return Err(line.err(format!("project={v} must be true or false"))),
                    };
                    LayerSpec::Residual(ResidualBlockSpec {
                        name: line.name(index),
                        out_channels: line.positive("out", None)?,
                        stride: line.positive("stride", Some(1))?,
                        projection,
                    })
                }
                other => return Err(line.err(format!("unknown layer kind '{other}'"))),
            };
            layers.push(spec);
        }
        if layers.is_empty() {
            return Err(Error::ConfigParse {
                line: 0,
                msg: "config has no layers".into(),
            });
        }
        let (in_channels, height, width) = input.unwrap_or((3, 32, 32));
        Ok(ModelConfig {
            in_channels,
            height,
            width,
            layers,
            canonical,
        })
    }

    /// Hex SHA-256 of the normalized config text.
    pub fn digest(&self) -> String {
        Sha256::digest(self.canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn canonical_text(&self) -> &str {
        &self.canonical
    }
}
