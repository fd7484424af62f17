use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::pnm::load_image;
use super::vocab::ClassVocab;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Record {
    /// Path relative to the manifest root.
    pub path: String,
    pub label: usize,
}

/// Labelled image list. `root` is the directory relative paths resolve against.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub vocab: ClassVocab,
    pub records: Vec<Record>,
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>, vocab: ClassVocab, records: Vec<Record>) -> Self {
        Manifest {
            root: root.into(),
            vocab,
            records,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn image_path(&self, record: &Record) -> PathBuf {
        self.root.join(&record.path)
    }

    /// Per-class record counts keyed by vocabulary index (classes with no records omitted).
    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.label).or_default() += 1;
        }
        counts
    }

    /// Decodes every image, in record order.
    pub fn load_images(&self) -> Result<Vec<(Tensor, usize)>> {
        self.records
            .iter()
            .map(|r| Ok((load_image(&self.image_path(r))?, r.label)))
            .collect()
    }

    /// Writes `path,label` CSV with LF line endings.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::Manifest {
            path: path.to_path_buf(),
            msg: e.to_string(),
        };
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(io)?;
        w.write_record(["path", "label"]).map_err(io)?;
        for r in &self.records {
            let name = self.vocab.name(r.label).ok_or_else(|| Error::Manifest {
                path: path.to_path_buf(),
                msg: format!("label index {} outside vocabulary", r.label),
            })?;
            w.write_record([r.path.as_str(), name]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Parses a `path,label` manifest; relative paths resolve against the file's directory.
pub fn load_manifest(csv_path: &Path, vocab: &ClassVocab) -> Result<Manifest> {
    let fail = |msg: String| Error::Manifest {
        path: csv_path.to_path_buf(),
        msg,
    };
    let file = std::fs::File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers().map_err(|e| fail(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["path", "label"] {
        return Err(fail(format!("expected header 'path,label', got '{}'", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| fail(e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let (path, label) = (&row[0], &row[1]);
        if path.is_empty() {
            return Err(fail(format!("row {line}: empty path")));
        }
        let label = vocab
            .index_of(label)
            .ok_or_else(|| fail(format!("row {line}: unknown label '{label}'")))?;
        records.push(Record {
            path: path.to_string(),
            label,
        });
    }
    if records.is_empty() {
        return Err(Error::invalid(format!("manifest {} has no records", csv_path.display())));
    }
    let root = csv_path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Manifest::new(root, vocab.clone(), records))
}
