//! Binary checkpoint format.
//!
//! ```text
//! magic "QARANK01" | u32 version | u32 len, config text (key = value)
//! u32 tensor count | per tensor: u32 len, name, u64 rows, u64 cols
//! raw little-endian f64 values of every tensor, in table order
//! 32-byte SHA-256 of everything before it
//! ```
//!
//! The same model always serializes to the same bytes.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Init, Model, ModelConfig};
use crate::config::KeyValues;
use crate::error::{CheckpointError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"QARANK01";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

impl Model {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let mut kv = KeyValues::new();
        self.config.write_kv(&mut kv);
        write_str(&mut out, &kv.to_string());
        let tensors = self.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t, _) in &tensors {
            write_str(&mut out, name);
            out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
        }
        for (_, t, _) in &tensors {
            for v in t.to_vec() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    /// Parses a checkpoint. If `expected` is given, the stored configuration
    /// must match it.
    pub fn from_bytes(bytes: &[u8], expected: Option<&ModelConfig>) -> Result<Model> {
        if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic.into());
        }
        if bytes.len() < 12 + DIGEST_LEN {
            return Err(corrupt("truncated header"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version).into());
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch"));
        }
        let text = r.string()?;
        let kv = KeyValues::parse(&text).map_err(|e| corrupt(&format!("config: {e}")))?;
        let config = ModelConfig::from_kv(&kv, ModelConfig::new(super::Architecture::II, 1))
            .map_err(|e| corrupt(&format!("config: {e}")))?;
        if let Some(exp) = expected {
            if *exp != config {
                return Err(CheckpointError::ShapeMismatch(format!(
                    "checkpoint holds {}, expected {}",
                    describe(&config),
                    describe(exp)
                ))
                .into());
            }
        }
        let model =
            Model::build(config, Init::Uniform, 0).map_err(|e| corrupt(&format!("config: {e}")))?;
        let tensors = model.tensors();
        let count = r.u32()? as usize;
        if count != tensors.len() {
            return Err(CheckpointError::ShapeMismatch(format!(
                "{count} tensors stored, configuration has {}",
                tensors.len()
            ))
            .into());
        }
        for (name, t, _) in &tensors {
            let stored = r.string()?;
            let (rows, cols) = (r.u64()? as usize, r.u64()? as usize);
            if stored != *name || rows != t.rows() || cols != t.cols() {
                return Err(CheckpointError::ShapeMismatch(format!(
                    "tensor {stored} {rows}x{cols} does not match {name} {}x{}",
                    t.rows(),
                    t.cols()
                ))
                .into());
            }
        }
        for (_, t, _) in &tensors {
            let values = (0..t.len()).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            t.copy_from(&values);
        }
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(model)
    }
}

fn describe(c: &ModelConfig) -> String {
    let mut kv = KeyValues::new();
    c.write_kv(&mut kv);
    kv.keys()
        .map(|k| {
            format!(
                "{}={}",
                k.trim_start_matches("model."),
                kv.get(k).unwrap_or("")
            )
        })
        .collect::<Vec<_>>()
        .join(",")
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, model.to_bytes()).map_err(|e| CheckpointError::Io(e).into())
}

pub fn load(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(CheckpointError::Io)?;
    Model::from_bytes(&bytes, None)
}

pub fn load_with_config(path: &Path, expected: &ModelConfig) -> Result<Model> {
    let bytes = fs::read(path).map_err(CheckpointError::Io)?;
    Model::from_bytes(&bytes, Some(expected))
}

fn corrupt(msg: &str) -> crate::error::Error {
    CheckpointError::Corrupt(msg.to_string()).into()
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
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

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid utf-8"))
    }
}
