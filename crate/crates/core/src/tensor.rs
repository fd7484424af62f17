//! Dense row-major `f64` tensors and the GTEN binary format.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAX_RANK: usize = 4;

const GTEN_MAGIC: &[u8; 4] = b"GTEN";
const GTEN_VERSION: u8 = 1;

/// Immutable-by-convention dense array. Images use BCHW (or CHW) layout.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::invalid(format!(
            "tensor rank must be 1..={MAX_RANK}, got {}",
            shape.len()
        )));
    }
    if let Some(axis) = shape.iter().position(|&d| d == 0) {
        return Err(Error::invalid(format!("dimension {axis} of {shape:?} is zero")));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let numel = check_shape(&shape)?;
        if numel != data.len() {
            return Err(Error::invalid(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Constructor for internally computed results whose shape is known valid.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Result<Self> {
        let shape = shape.into();
        let numel = check_shape(&shape)?;
        Ok(Tensor {
            shape,
            data: vec![value; numel],
        })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Tensor {
            shape: other.shape.clone(),
            data: vec![0.0; other.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("cannot stack zero tensors"))?;
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        let mut data = Vec::with_capacity(first.numel() * items.len());
        for (i, t) in items.iter().enumerate() {
            if t.shape != first.shape {
                return Err(Error::shape(
                    "stack",
                    format!("item {i} has shape {:?}, expected {:?}", t.shape, first.shape),
                ));
            }
            data.extend_from_slice(&t.data);
        }
        Tensor::new(shape, data)
    }

    /// Slice `index` along the leading axis, dropping that axis.
    pub fn index_outer(&self, index: usize) -> Result<Self> {
        if self.rank() < 2 || index >= self.shape[0] {
            return Err(Error::invalid(format!(
                "outer index {index} out of range for shape {:?}",
                self.shape
            )));
        }
        let inner: usize = self.shape[1..].iter().product();
        Ok(Tensor {
            shape: self.shape[1..].to_vec(),
            data: self.data[index * inner..(index + 1) * inner].to_vec(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Serializes to the GTEN layout: magic, version, rank, u32 dims, f64 values (all LE).
    pub fn to_gten_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 4 * self.rank() + 8 * self.numel());
        out.extend_from_slice(GTEN_MAGIC);
        out.push(GTEN_VERSION);
        out.push(self.rank() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_gten_bytes(bytes: &[u8]) -> Result<Self> {
        let decode = |offset: usize, msg: &str| Error::Decode {
            offset,
            msg: msg.to_string(),
        };
        if bytes.len() < 6 {
            return Err(decode(bytes.len(), "truncated GTEN header"));
        }
        if &bytes[..4] != GTEN_MAGIC {
            return Err(decode(0, "bad magic, expected GTEN"));
        }
        if bytes[4] != GTEN_VERSION {
            return Err(decode(4, "unsupported GTEN version"));
        }
        let rank = bytes[5] as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(decode(5, "rank out of range"));
        }
        let mut offset = 6;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let chunk = bytes
                .get(offset..offset + 4)
                .ok_or_else(|| decode(bytes.len(), "truncated dimension list"))?;
            let d = u32::from_le_bytes(chunk.try_into().unwrap()) as usize;
            if d == 0 {
                return Err(decode(offset, "zero dimension"));
            }
            shape.push(d);
            offset += 4;
        }
        let numel: usize = shape.iter().product();
        let payload = bytes
            .get(offset..offset + 8 * numel)
            .ok_or_else(|| decode(bytes.len(), "truncated value payload"))?;
        if bytes.len() != offset + 8 * numel {
            return Err(decode(offset + 8 * numel, "trailing bytes after payload"));
        }
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Tensor { shape, data })
    }

    pub fn save_gten(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_gten_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load_gten(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_gten_bytes(&bytes)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor{:?} ", self.shape)?;
        if self.data.len() <= PREVIEW {
            write!(f, "{:?}", self.data)
        } else {
            write!(f, "{:?}..", &self.data[..PREVIEW])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![1, 1, 1, 1, 1], vec![1.0]).is_err());
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
        assert!(Tensor::new(Vec::<usize>::new(), vec![1.0]).is_err());
    }

    #[test]
    fn gten_layout_is_exact() {
        let t = Tensor::new(vec![2], vec![1.0, -2.5]).unwrap();
        let bytes = t.to_gten_bytes();
        let mut expected = b"GTEN".to_vec();
        expected.extend_from_slice(&[1, 1, 2, 0, 0, 0]);
        expected.extend_from_slice(&1.0f64.to_le_bytes());
        expected.extend_from_slice(&(-2.5f64).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn gten_rejects_truncation_and_magic() {
        let t = Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let bytes = t.to_gten_bytes();
        for cut in [0, 3, 7, bytes.len() - 1] {
            assert!(Tensor::from_gten_bytes(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        match Tensor::from_gten_bytes(&bad) {
            Err(Error::Decode { offset: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn gten_round_trip_is_bit_exact(
            shape in prop::collection::vec(1usize..4, 1..=4),
            seed in any::<u64>(),
        ) {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n)
                .map(|i| f64::from_bits(seed.wrapping_mul(i as u64 + 1) >> 2))
                .collect();
            let t = Tensor::new(shape, data).unwrap();
            let back = Tensor::from_gten_bytes(&t.to_gten_bytes()).unwrap();
            prop_assert_eq!(
                t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            prop_assert_eq!(t.shape(), back.shape());
        }
    }
}
