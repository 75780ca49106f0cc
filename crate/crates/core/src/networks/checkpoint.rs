//! Checkpoint container. All integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "SVSCKPT\0"
//! version      u32      currently 1
//! config_len   u32
//! config       config_len bytes of UTF-8 key = value text
//! config_hash  32 bytes SHA-256 of the config bytes
//! count        u32      number of tensors
//! per tensor, in name order:
//!   name_len   u32
//!   name       name_len bytes UTF-8
//!   rank       u32
//!   dims       rank × u64
//!   data       product(dims) × f64
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::ParamStore;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CKPT_MAGIC: &[u8; 8] = b"SVSCKPT\0";
pub const CKPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub tensors: Vec<(String, Vec<usize>, Vec<f64>)>,
}

pub fn config_hash(config: &str) -> [u8; 32] {
    Sha256::digest(config.as_bytes()).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn new(config: String) -> Self {
        Self { config, tensors: Vec::new() }
    }

    /// Appends every tensor of `store` under `prefix.`.
    pub fn add_params<S: Scalar>(&mut self, prefix: &str, store: &ParamStore<S>) {
        for (name, t) in store.iter() {
            self.tensors.push((
                format!("{prefix}.{name}"),
                t.shape().to_vec(),
                t.data().iter().map(|v| v.as_f64()).collect(),
            ));
        }
    }

    /// Tensors under `prefix.` as trainable parameters.
    pub fn params<S: Scalar>(&self, prefix: &str) -> Result<ParamStore<S>> {
        let head = format!("{prefix}.");
        let mut store = ParamStore::new();
        for (name, shape, data) in &self.tensors {
            if let Some(rest) = name.strip_prefix(&head) {
                store.insert(rest, Tensor::param(data.iter().map(|&v| S::lit(v)).collect(), shape)?);
            }
        }
        Ok(store)
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        let head = format!("{prefix}.");
        self.tensors.iter().any(|(n, _, _)| n.starts_with(&head))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out.extend_from_slice(&config_hash(&self.config));
        let mut tensors: Vec<_> = self.tensors.iter().collect();
        tensors.sort_by(|a, b| a.0.cmp(&b.0));
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, shape, data) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CKPT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CKPT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let n = r.u32()? as usize;
        let config = String::from_utf8(r.take(n)?.to_vec())
            .map_err(|_| Error::Format("checkpoint config is not UTF-8".into()))?;
        if r.take(32)? != config_hash(&config) {
            return Err(Error::Format("checkpoint config hash mismatch".into()));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = String::from_utf8(r.take(n)?.to_vec())
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("tensor `{name}` holds non-finite values")));
            }
            tensors.push((name, shape, data));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Self { config, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Format(format!("checkpoint not found: {}", path.display())));
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
