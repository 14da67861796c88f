//! Model file format: magic, version, architecture descriptor, little-endian
//! `f64` parameter blob (trainable parameters in canonical order, then the
//! running normalization statistics), and a SHA-256 checksum over everything
//! before it.

use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{CnnModel, Norm, CONV_KERNEL, GROUP_CHANNELS};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GSTEGCNN";
const VERSION: u32 = 1;

impl CnnModel {
    /// Serializes the model; the inverse of [`CnnModel::from_bytes`].
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.input_side as u32).to_le_bytes());
        for c in GROUP_CHANNELS {
            out.extend_from_slice(&(c as u32).to_le_bytes());
        }
        out.extend_from_slice(&(CONV_KERNEL as u32).to_le_bytes());
        out.extend_from_slice(&self.norm1.eps.to_le_bytes());

        let blob = self.value_blob();
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        for v in blob {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    fn value_blob(&self) -> Vec<f64> {
        let mut blob: Vec<f64> = self
            .param_slices()
            .into_iter()
            .flat_map(|s| s.iter().copied())
            .collect();
        for norm in [&self.norm1, &self.norm2, &self.norm3] {
            blob.extend_from_slice(&norm.running_mean);
            blob.extend_from_slice(&norm.running_var);
        }
        blob
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<CnnModel> {
        let mut reader = Reader { bytes, pos: 0 };
        let magic = reader.take(8)?;
        if magic != MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = reader.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "model version {version} not supported (expected {VERSION})"
            )));
        }
        let input_side = reader.u32()? as usize;
        let mut channels = [0usize; 3];
        for c in &mut channels {
            *c = reader.u32()? as usize;
        }
        let kernel = reader.u32()? as usize;
        if channels != GROUP_CHANNELS || kernel != CONV_KERNEL {
            return Err(Error::Format(format!(
                "architecture descriptor {channels:?}/k{kernel} does not match this build"
            )));
        }
        let eps = reader.f64()?;
        let count = reader.u64()? as usize;
        let mut blob = Vec::with_capacity(count);
        for _ in 0..count {
            blob.push(reader.f64()?);
        }
        let payload_end = reader.pos;
        let checksum = reader.take(32)?;
        if Sha256::digest(&bytes[..payload_end])[..] != *checksum {
            return Err(Error::Io(io::Error::new(
                io::ErrorKind::InvalidData,
                "model payload corrupt (checksum mismatch)",
            )));
        }

        let mut model = CnnModel::new(input_side, 0)?;
        for norm in [&mut model.norm1, &mut model.norm2, &mut model.norm3] {
            norm.eps = eps;
        }
        let expected = model.value_blob().len();
        if count != expected {
            return Err(Error::Format(format!(
                "parameter blob holds {count} values, architecture needs {expected}"
            )));
        }
        let mut it = blob.into_iter();
        for slice in model.param_slices_mut() {
            for v in slice.iter_mut() {
                *v = it.next().expect("length checked");
            }
        }
        fn fill(norm: &mut Norm, it: &mut impl Iterator<Item = f64>) {
            for v in norm.running_mean.iter_mut().chain(norm.running_var.iter_mut()) {
                *v = it.next().expect("length checked");
            }
        }
        fill(&mut model.norm1, &mut it);
        fill(&mut model.norm2, &mut it);
        fill(&mut model.norm3, &mut it);
        Ok(model)
    }

    /// Writes the model file. Non-finite parameters are refused.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        if self.value_blob().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("refusing to save non-finite parameters".into()));
        }
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<CnnModel> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Io(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "model file truncated",
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
