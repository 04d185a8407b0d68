//! One-file-per-clip feature cache: `b"LMS1"`, `t: u32`, `f: u32`, then
//! `t·f` little-endian f32 values in row-major order.

use std::path::Path;

use amn_tensor::Tensor;

use super::MelSpectrogram;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"LMS1";
const HEADER: usize = 12;

pub fn encode_feature_cache(mel: &MelSpectrogram) -> Vec<u8> {
    let (t, f) = (mel.frames_len(), mel.bands());
    let mut out = Vec::with_capacity(HEADER + 4 * t * f);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&(f as u32).to_le_bytes());
    for v in mel.frames.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_feature_cache(bytes: &[u8]) -> Result<MelSpectrogram> {
    if bytes.len() < HEADER {
        return Err(Error::Truncated {
            what: "feature cache",
            detail: format!("{} byte header", bytes.len()),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Malformed {
            what: "feature cache",
            msg: "bad magic".into(),
        });
    }
    let t = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let f = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if t == 0 || f == 0 {
        return Err(Error::Malformed {
            what: "feature cache",
            msg: format!("empty shape {t}x{f}"),
        });
    }
    let needed = t
        .checked_mul(f)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Malformed {
            what: "feature cache",
            msg: "shape overflows".into(),
        })?;
    let body = &bytes[HEADER..];
    if body.len() != needed {
        return Err(Error::Truncated {
            what: "feature cache",
            detail: format!("needed {needed} data bytes, found {}", body.len()),
        });
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(MelSpectrogram {
        frames: Tensor::new([t, f], data)?,
    })
}

pub fn write_feature_cache(path: impl AsRef<Path>, mel: &MelSpectrogram) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_feature_cache(mel)).map_err(|e| Error::io(path, e))
}

pub fn read_feature_cache(path: impl AsRef<Path>) -> Result<MelSpectrogram> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature_cache(&bytes)
}
