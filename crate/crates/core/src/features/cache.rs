use std::fs;
use std::path::Path;

use super::{MelSpectrogram, N_MELS};
use crate::{Error, Result};

pub const FEATURE_CACHE_MAGIC: u32 = u32::from_le_bytes(*b"LMEL");
pub const FEATURE_CACHE_VERSION: u32 = 1;

/// Header of four little-endian u32 (magic, version, channels, frames)
/// followed by row-major little-endian f32 values.
pub fn feature_cache_bytes(spec: &MelSpectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * spec.data().len());
    for v in [
        FEATURE_CACHE_MAGIC,
        FEATURE_CACHE_VERSION,
        spec.channels() as u32,
        spec.frames() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in spec.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_feature_cache(path: impl AsRef<Path>, spec: &MelSpectrogram) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, feature_cache_bytes(spec)).map_err(|e| Error::io(path, e))
}

pub fn read_feature_cache(path: impl AsRef<Path>, source_id: &str) -> Result<MelSpectrogram> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::parse(path.display().to_string(), msg);
    if bytes.len() < 16 {
        return Err(bad("truncated feature header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    if word(0) != FEATURE_CACHE_MAGIC {
        return Err(bad("bad feature cache magic"));
    }
    if word(1) != FEATURE_CACHE_VERSION {
        return Err(bad(&format!(
            "unsupported feature cache version {}",
            word(1)
        )));
    }
    let (channels, frames) = (word(2) as usize, word(3) as usize);
    if channels != N_MELS {
        return Err(bad(&format!("{channels} channels, expected {N_MELS}")));
    }
    let body = &bytes[16..];
    if body.len() != 4 * channels * frames {
        return Err(bad("feature body length does not match header"));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    MelSpectrogram::new(data, frames, source_id)
}
