//! Binary checkpoint of [`ModelParams`].
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "SYNCCKPT"
//! version    u32      1
//! flags      u32      bit 0 set when the input transform is present
//! count      u32      number of tensors (4 with transform, else 2)
//! per tensor:
//!   rows     u64
//!   cols     u64
//!   payload  rows*cols f64, row-major
//! ```
//!
//! Tensor order is `W_a, W_b, W_1, W_2` (transform first when present).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::tigae::{ModelParams, Transform};

pub const MAGIC: &[u8; 8] = b"SYNCCKPT";
pub const VERSION: u32 = 1;
const FLAG_TRANSFORM: u32 = 1;

pub fn to_bytes(params: &ModelParams) -> Vec<u8> {
    let tensors = params.tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let flags = if params.transform.is_some() { FLAG_TRANSFORM } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let len = rows
            .checked_mul(cols)
            .filter(|l| l.checked_mul(8).is_some_and(|b| b <= self.buf.len()))
            .ok_or_else(|| Error::Checkpoint(format!("tensor {rows}x{cols} exceeds file size")))?;
        let data = self
            .take(len * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Matrix::new(rows, cols, data)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { buf: bytes };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let flags = r.u32()?;
    let count = r.u32()?;
    let has_transform = flags & FLAG_TRANSFORM != 0;
    let expected = if has_transform { 4 } else { 2 };
    if count != expected {
        return Err(Error::Checkpoint(format!("expected {expected} tensors, found {count}")));
    }
    let transform = if has_transform {
        Some(Transform {
            weight: r.matrix()?,
            bias: r.matrix()?,
        })
    } else {
        None
    };
    let w1 = r.matrix()?;
    let w2 = r.matrix()?;
    if !r.buf.is_empty() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(ModelParams { transform, w1, w2 })
}

pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&to_bytes(params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}
