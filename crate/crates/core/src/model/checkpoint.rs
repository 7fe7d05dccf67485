//! Binary checkpoint: `LSIMCKPT`, u32 version, u32-length JSON header
//! (config, objective, seed), u32 tensor count, then per tensor its name,
//! rank, dims and little-endian f32 values. All integers little-endian u32.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::{ModelConfig, ModelParams, Objective};
use super::real::Real;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"LSIMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    objective: Objective,
    seed: u64,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

impl<T: Real> ModelParams<T> {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            objective: self.objective,
            seed: self.seed,
        })
        .expect("header serializes");
        put_u32(&mut out, header.len());
        out.extend_from_slice(&header);
        let tensors = self.tensors();
        put_u32(&mut out, tensors.len());
        for (name, dims, data) in tensors {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, dims.len());
            for d in dims {
                put_u32(&mut out, d);
            }
            for v in data {
                out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
        out
    }

    /// SHA-256 of the checkpoint bytes, hex encoded.
    pub fn model_id(&self) -> String {
        Sha256::digest(self.to_checkpoint_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn from_checkpoint_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let mut r = Reader {
            bytes,
            pos: 0,
            origin,
        };
        if r.take(8)? != MAGIC {
            return Err(r.error("not a langsim checkpoint"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(r.error(&format!("unsupported checkpoint version {version}")));
        }
        let len = r.u32()? as usize;
        let header: Header =
            serde_json::from_slice(r.take(len)?).map_err(|e| r.error(&e.to_string()))?;
        let mut params = ModelParams::<T>::zeros(header.config)?;
        params.objective = header.objective;
        params.seed = header.seed;
        let expected: Vec<(String, Vec<usize>)> = params
            .tensors()
            .into_iter()
            .map(|(n, d, _)| (n, d))
            .collect();
        let count = r.u32()? as usize;
        if count != expected.len() {
            return Err(r.error(&format!("{count} tensors, expected {}", expected.len())));
        }
        for ((name, dims), dst) in expected.into_iter().zip(params.tensors_mut()) {
            let n = r.u32()? as usize;
            let got_name = std::str::from_utf8(r.take(n)?)
                .map_err(|e| r.error(&e.to_string()))?
                .to_string();
            let rank = r.u32()? as usize;
            let got_dims = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if got_name != name || got_dims != dims {
                return Err(r.error(&format!(
                    "tensor {got_name} {got_dims:?} does not match {name} {dims:?}"
                )));
            }
            for v in dst.iter_mut() {
                let x = f32::from_le_bytes(r.take(4)?.try_into().unwrap());
                *v = T::of(f64::from(x));
            }
        }
        if r.pos != bytes.len() {
            return Err(r.error("trailing bytes after last tensor"));
        }
        if !params.all_finite() {
            return Err(Error::Validation(format!(
                "{origin}: checkpoint contains non-finite weights"
            )));
        }
        Ok(params)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Reader<'a> {
    fn error(&self, msg: &str) -> Error {
        Error::parse(format!("{}@{}", self.origin, self.pos), msg)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.error("truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ModelParams<f32>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, params.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelParams::from_checkpoint_bytes(&bytes, &path.display().to_string())
}
