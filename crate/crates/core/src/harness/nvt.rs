//! NVT tensor files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes        | field                           |
//! |--------------|---------------------------------|
//! | 4            | magic `NVT1`                    |
//! | 1            | dtype code (0 = f32)            |
//! | 1            | ndim                            |
//! | 4 · ndim     | dims, u32 each                  |
//! | 4 · Π dims   | payload, f32 row-major          |
//!
//! Values are carried as raw bit patterns, so `save(load(f))` reproduces
//! `f` byte for byte.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensorops::FeatureMap;

pub const MAGIC: &[u8; 4] = b"NVT1";
pub const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct NvtTensor {
    dims: Vec<u32>,
    data: Vec<f32>,
}

impl NvtTensor {
    pub fn new(dims: Vec<u32>, data: Vec<f32>) -> Result<Self> {
        if dims.len() > u8::MAX as usize {
            return Err(Error::format("nvt", format!("{} dims exceed 255", dims.len())));
        }
        let n = element_count(&dims)?;
        if n != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} hold {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn from_feature_map(map: &FeatureMap) -> Self {
        let (c, h, w) = map.shape();
        Self {
            dims: vec![c as u32, h as u32, w as u32],
            data: map.data().to_vec(),
        }
    }

    pub fn into_feature_map(self) -> Result<FeatureMap> {
        match self.dims[..] {
            [c, h, w] => FeatureMap::new(c as usize, h as usize, w as usize, self.data),
            _ => Err(Error::Shape(format!(
                "feature map needs 3 dims, file has {:?}",
                self.dims
            ))),
        }
    }

    /// Packs equal-length rows into an `N × D` tensor.
    pub fn from_rows(rows: &[Vec<f32>], dim: usize) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::Shape(format!("row of length {} in {dim}-dim stack", r.len())));
        }
        Self::new(vec![rows.len() as u32, dim as u32], rows.concat())
    }

    /// Splits an `N × D` tensor into rows; a 1-D tensor is a single row.
    pub fn to_rows(&self) -> Result<Vec<Vec<f32>>> {
        match self.dims[..] {
            [_] => Ok(vec![self.data.clone()]),
            [_, d] if d > 0 => Ok(self.data.chunks(d as usize).map(<[f32]>::to_vec).collect()),
            [n, _] => Ok(vec![Vec::new(); n as usize]),
            _ => Err(Error::Shape(format!("expected 1 or 2 dims, got {:?}", self.dims))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: String| Error::format("nvt", reason);
        if bytes.len() < 6 {
            return Err(bad(format!("header truncated at {} bytes", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad(format!("bad magic {:?}", &bytes[..4])));
        }
        if bytes[4] != DTYPE_F32 {
            return Err(bad(format!("unsupported dtype code {}", bytes[4])));
        }
        let ndim = bytes[5] as usize;
        let header = 6 + 4 * ndim;
        if bytes.len() < header {
            return Err(bad("dims truncated".into()));
        }
        let dims: Vec<u32> = bytes[6..header]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let n = element_count(&dims)?;
        let payload = &bytes[header..];
        if payload.len() != 4 * n {
            return Err(bad(format!(
                "payload is {} bytes, header promises {}",
                payload.len(),
                4 * n
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dims, data })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn element_count(dims: &[u32]) -> Result<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize)).ok_or_else(|| {
        Error::format("nvt", format!("dims {dims:?} overflow"))
    })
}
