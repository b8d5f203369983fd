//! IDX tensors (the MNIST distribution format) and image preprocessing.
//!
//! Layout: a big-endian `u32` magic `0x0000TTNN` where `TT = 0x08` marks
//! unsigned bytes and `NN` is the number of dimensions, then `NN` big-endian
//! `u32` sizes, then the payload in row-major order.

use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::data::{rescale_columns, Dataset};
use crate::error::{NtkError, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
const UBYTE: u8 = 0x08;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad magic 0x{found:08x} at byte {offset}, expected 0x{expected:08x}")]
    BadMagic { offset: usize, found: u32, expected: u32 },
    #[error("truncated at byte {offset}: needed {needed} more bytes, {available} available")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("dimension sizes starting at byte {offset} overflow the addressable payload")]
    DimensionOverflow { offset: usize },
    #[error("{extra} unexpected bytes after the payload ending at byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },
}

/// A parsed unsigned-byte tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn read_u32(bytes: &[u8], offset: usize) -> std::result::Result<u32, IdxError> {
    let word = bytes.get(offset..offset + 4).ok_or(IdxError::Truncated {
        offset,
        needed: 4,
        available: bytes.len().saturating_sub(offset),
    })?;
    Ok(u32::from_be_bytes(word.try_into().expect("four bytes")))
}

/// Parses a tensor whose magic must equal `expected`.
pub fn parse_idx(bytes: &[u8], expected: u32) -> std::result::Result<IdxTensor, IdxError> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected || (magic >> 8) as u8 != UBYTE || magic >> 16 != 0 {
        return Err(IdxError::BadMagic { offset: 0, found: magic, expected });
    }
    let ndim = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(ndim);
    for k in 0..ndim {
        dims.push(read_u32(bytes, 4 + 4 * k)? as usize);
    }
    let header = 4 + 4 * ndim;
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n.checked_add(header).is_some())
        .ok_or(IdxError::DimensionOverflow { offset: 4 })?;
    let available = bytes.len() - header;
    if available < len {
        return Err(IdxError::Truncated { offset: header, needed: len, available });
    }
    if available > len {
        return Err(IdxError::TrailingBytes { offset: header + len, extra: available - len });
    }
    Ok(IdxTensor { dims, data: bytes[header..].to_vec() })
}

/// Serializes an unsigned-byte tensor with `dims.len()` dimensions.
pub fn write_idx(dims: &[usize], data: &[u8]) -> Result<Vec<u8>> {
    if dims.len() > 255 || dims.iter().any(|&d| d > u32::MAX as usize) {
        return Err(NtkError::InvalidArgument("dimensions do not fit the IDX header".into()));
    }
    let len: usize = dims.iter().product();
    if len != data.len() {
        return Err(NtkError::DimensionMismatch { expected: len, got: data.len() });
    }
    let mut out = Vec::with_capacity(4 + 4 * dims.len() + data.len());
    out.extend_from_slice(&(((UBYTE as u32) << 8) | dims.len() as u32).to_be_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    Ok(out)
}

/// How the raw pixels were turned into training vectors.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Preprocessing {
    /// Each image had its own pixel mean subtracted.
    pub mean_subtracted: bool,
    /// Target column norm.
    pub r: f64,
}

/// Images as columns of length `rows · cols`.
#[derive(Debug, Clone)]
pub struct MnistBatch {
    pub images: DMatrix<f64>,
    /// Index of each column in the source file.
    pub source_index: Vec<usize>,
    pub preprocessing: Preprocessing,
}

impl MnistBatch {
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::new(self.images.clone())
    }

    pub fn len(&self) -> usize {
        self.images.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.images.ncols() == 0
    }
}

/// Mean-subtracts each of the selected images and rescales it to norm `r`.
pub fn preprocess(t: &IdxTensor, r: f64, offset: usize, count: usize) -> Result<MnistBatch> {
    if t.dims.len() != 3 {
        return Err(NtkError::InvalidArgument(format!("image tensor must be 3-D, got {:?}", t.dims)));
    }
    let (total, pixels) = (t.dims[0], t.dims[1] * t.dims[2]);
    if count == 0 || offset.checked_add(count).is_none_or(|end| end > total) {
        return Err(NtkError::InvalidArgument(format!(
            "images {offset}..{} out of range (file has {total})",
            offset + count
        )));
    }
    let mut images = DMatrix::zeros(pixels, count);
    for (j, idx) in (offset..offset + count).enumerate() {
        let raw = &t.data[idx * pixels..(idx + 1) * pixels];
        let mean = raw.iter().map(|&v| v as f64).sum::<f64>() / pixels as f64;
        for (i, &v) in raw.iter().enumerate() {
            images[(i, j)] = v as f64 - mean;
        }
        if images.column(j).norm() == 0.0 {
            return Err(NtkError::Degenerate(format!("image {idx} is constant")));
        }
    }
    rescale_columns(&mut images, r)?;
    Ok(MnistBatch {
        images,
        source_index: (offset..offset + count).collect(),
        preprocessing: Preprocessing { mean_subtracted: true, r },
    })
}

/// Reads `count` images starting at `offset` from an IDX image file.
pub fn read_idx(path: impl AsRef<Path>, r: f64, offset: usize, count: usize) -> Result<MnistBatch> {
    let bytes = std::fs::read(path)?;
    let t = parse_idx(&bytes, IMAGE_MAGIC)?;
    preprocess(&t, r, offset, count)
}

/// Reads an IDX label file.
pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path)?;
    Ok(parse_idx(&bytes, LABEL_MAGIC)?.data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n: usize) -> Vec<u8> {
        let data: Vec<u8> = (0..n * 784).map(|k| ((k * 37 + k / 784 * 11) % 256) as u8).collect();
        write_idx(&[n, 28, 28], &data).unwrap()
    }

    #[test]
    fn header_arithmetic() {
        let bytes = synthetic(4);
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        assert_eq!(bytes.len(), 16 + 3136);
        let t = parse_idx(&bytes, IMAGE_MAGIC).unwrap();
        assert_eq!(t.dims, vec![4, 28, 28]);
        let b = preprocess(&t, 1.0, 0, 4).unwrap();
        assert_eq!(b.images.shape(), (784, 4));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let bytes = synthetic(4);
        let t = parse_idx(&bytes, IMAGE_MAGIC).unwrap();
        assert_eq!(write_idx(&t.dims, &t.data).unwrap(), bytes);
    }

    #[test]
    fn label_magic_rejected_by_image_reader() {
        let bytes = write_idx(&[3], &[1, 2, 3]).unwrap();
        assert_eq!(&bytes[..4], &[0, 0, 8, 1]);
        assert!(matches!(parse_idx(&bytes, IMAGE_MAGIC), Err(IdxError::BadMagic { offset: 0, found: 0x801, .. })));
        assert_eq!(parse_idx(&bytes, LABEL_MAGIC).unwrap().data, vec![1, 2, 3]);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = synthetic(2);
        let cut = &bytes[..bytes.len() - 5];
        assert_eq!(parse_idx(cut, IMAGE_MAGIC), Err(IdxError::Truncated { offset: 16, needed: 1568, available: 1563 }));
        assert!(matches!(parse_idx(&bytes[..10], IMAGE_MAGIC), Err(IdxError::Truncated { offset: 8, .. })));
        assert!(matches!(parse_idx(&bytes[..2], IMAGE_MAGIC), Err(IdxError::Truncated { offset: 0, .. })));
    }

    #[test]
    fn overflowing_dimensions() {
        let mut bytes = vec![0, 0, 8, 3];
        for _ in 0..3 {
            bytes.extend_from_slice(&u32::MAX.to_be_bytes());
        }
        assert_eq!(parse_idx(&bytes, IMAGE_MAGIC), Err(IdxError::DimensionOverflow { offset: 4 }));
    }

    #[test]
    fn preprocessing_norms() {
        let t = parse_idx(&synthetic(5), IMAGE_MAGIC).unwrap();
        let b = preprocess(&t, 1000.0, 1, 3).unwrap();
        assert_eq!(b.source_index, vec![1, 2, 3]);
        for col in b.images.column_iter() {
            assert!((col.norm() - 1000.0).abs() < 1e-5);
            assert!(col.sum().abs() < 1e-8);
        }
        assert!(preprocess(&t, 1.0, 4, 2).is_err());
    }

    #[test]
    fn constant_image_rejected() {
        let bytes = write_idx(&[1, 2, 2], &[7, 7, 7, 7]).unwrap();
        let t = parse_idx(&bytes, IMAGE_MAGIC).unwrap();
        assert!(matches!(preprocess(&t, 1.0, 0, 1), Err(NtkError::Degenerate(_))));
    }
}
