//! On-disk checkpoint: a directory holding `config.digest`, `config.cfg`,
//! `meta` (key=value lines) and one `<param>.gten` per parameter.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::config::ModelConfig;
use super::graph::{ModelGraph, Normalization};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub lr: f64,
    pub seed: u64,
}

fn join3(v: &[f64; 3]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn parse3(key: &str, s: &str) -> Result<[f64; 3]> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Checkpoint(format!("meta {key}={s} is not a float list")))?;
    vals.try_into()
        .map_err(|_| Error::Checkpoint(format!("meta {key} needs 3 values")))
}

pub fn save_checkpoint(model: &ModelGraph, meta: &CheckpointMeta, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: &[u8]| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(p, e))
    };
    write("config.digest", format!("{}\n", model.config().digest()).as_bytes())?;
    write("config.cfg", model.config().canonical_text().as_bytes())?;
    let mut m = String::new();
    let n = &model.normalization;
    writeln!(m, "epoch={}", meta.epoch).unwrap();
    writeln!(m, "lr={}", meta.lr).unwrap();
    writeln!(m, "seed={}", meta.seed).unwrap();
    writeln!(m, "norm_mean={}", join3(&n.mean)).unwrap();
    writeln!(m, "norm_std={}", join3(&n.std)).unwrap();
    write("meta", m.as_bytes())?;
    for p in model.params() {
        p.value.save_gten(&dir.join(format!("{}.gten", p.name)))?;
    }
    Ok(())
}

/// Rebuilds the model stored in `dir`. When `expected` is given its digest
/// must match the checkpoint's.
pub fn load_checkpoint(dir: &Path, expected: Option<&ModelConfig>) -> Result<(ModelGraph, CheckpointMeta)> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read_to_string(&p).map_err(|e| Error::io(p, e))
    };
    let digest = read("config.digest")?.trim().to_string();
    let config = ModelConfig::parse(&read("config.cfg")?)?;
    if config.digest() != digest {
        return Err(Error::Checkpoint(format!(
            "config.cfg digest {} does not match config.digest {digest}",
            config.digest()
        )));
    }
    if let Some(exp) = expected {
        if exp.digest() != digest {
            return Err(Error::Checkpoint(format!(
                "config digest mismatch: checkpoint {digest}, supplied config {}",
                exp.digest()
            )));
        }
    }

    let mut epoch = None;
    let mut lr = None;
    let mut seed = None;
    let mut norm = Normalization::default();
    for line in read("meta")?.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Checkpoint(format!("bad meta line '{line}'")))?;
        let bad = || Error::Checkpoint(format!("bad meta value {k}={v}"));
        match k.trim() {
            "epoch" => epoch = Some(v.trim().parse().map_err(|_| bad())?),
            "lr" => lr = Some(v.trim().parse().map_err(|_| bad())?),
            "seed" => seed = Some(v.trim().parse().map_err(|_| bad())?),
            "norm_mean" => norm.mean = parse3(k, v)?,
            "norm_std" => norm.std = parse3(k, v)?,
            _ => log::warn!("ignoring unknown checkpoint meta key '{k}'"),
        }
    }
    let missing = |k: &str| Error::Checkpoint(format!("meta lacks {k}"));
    let meta = CheckpointMeta {
        epoch: epoch.ok_or_else(|| missing("epoch"))?,
        lr: lr.ok_or_else(|| missing("lr"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
    };

    let mut model = ModelGraph::build(&config, meta.seed)?;
    model.normalization = norm;
    let names: Vec<String> = model.params().iter().map(|p| p.name.clone()).collect();
    for name in names {
        let t = Tensor::load_gten(&dir.join(format!("{name}.gten")))?;
        model
            .set_param(&name, t)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    Ok((model, meta))
}
