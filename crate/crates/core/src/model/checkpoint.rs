//! Binary checkpoint: `b"AMN1"`, format version, JSON model config, JSON
//! metadata, then named f32 little-endian tensor records. Lengths and
//! extents are little-endian u32.

use std::path::Path;

use amn_tensor::{Real, RunningStats, Tensor};

use super::{Model, ModelConfig, ParamSet};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"AMN1";
pub const FORMAT_VERSION: u32 = 1;

/// A model snapshot plus free-form metadata (training config, epoch, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub meta: serde_json::Value,
    pub params: ParamSet<f32>,
}

impl Checkpoint {
    pub fn from_model<T: Real>(model: &Model<T>, meta: serde_json::Value) -> Self {
        Self {
            config: model.config.clone(),
            meta,
            params: model.params.cast(),
        }
    }

    pub fn into_model<T: Real>(self) -> Result<Model<T>> {
        Model::from_parts(self.config, self.params.cast())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_record(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    put_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len());
    for &e in shape {
        put_u32(out, e);
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(&ck.config).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let meta = serde_json::to_vec(&ck.meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION as usize);
    put_u32(&mut out, config.len());
    out.extend_from_slice(&config);
    put_u32(&mut out, meta.len());
    out.extend_from_slice(&meta);
    let p = &ck.params;
    put_u32(&mut out, p.tensors.len() + 2 * p.bn_stats.len());
    for (name, t) in p.names.iter().zip(&p.tensors) {
        put_record(&mut out, name, t.shape(), t.data());
    }
    for (i, s) in p.bn_stats.iter().enumerate() {
        put_record(
            &mut out,
            &format!("block{i}.bn.running_mean"),
            &[s.channels()],
            &s.mean,
        );
        put_record(
            &mut out,
            &format!("block{i}.bn.running_var"),
            &[s.channels()],
            &s.var,
        );
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated {
                what: "checkpoint",
                detail: format!("{what} needs {n} bytes at offset {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION as usize {
        return Err(bad(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let len = r.u32("config length")?;
    let config: ModelConfig =
        serde_json::from_slice(r.take(len, "config")?).map_err(|e| bad(format!("config: {e}")))?;
    config.validate()?;
    let len = r.u32("metadata length")?;
    let meta: serde_json::Value = serde_json::from_slice(r.take(len, "metadata")?)
        .map_err(|e| bad(format!("metadata: {e}")))?;
    let count = r.u32("record count")?;
    // every record needs at least 8 header bytes
    if count > r.remaining() / 8 {
        return Err(Error::Truncated {
            what: "checkpoint",
            detail: format!("{count} records cannot fit in {} bytes", r.remaining()),
        });
    }
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32("name length")?;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| bad("record name is not UTF-8"))?
            .to_owned();
        let rank = r.u32("rank")?;
        if rank > 8 {
            return Err(bad(format!("record {name} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("extent")?);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &e| a.checked_mul(e))
            .filter(|&n| n > 0 && n <= r.remaining() / 4)
            .ok_or_else(|| Error::Truncated {
                what: "checkpoint",
                detail: format!("record {name} shape {shape:?} exceeds remaining data"),
            })?;
        let data: Vec<f32> = r
            .take(4 * numel, "data")?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push((name, Tensor::new(shape, data)?));
    }
    if r.remaining() != 0 {
        return Err(bad(format!("{} trailing bytes", r.remaining())));
    }

    let blocks = config.blocks();
    if records.len() < 2 * blocks {
        return Err(bad("missing batch-norm statistics"));
    }
    let stat_records = records.split_off(records.len() - 2 * blocks);
    let mut bn_stats = Vec::with_capacity(blocks);
    for (i, pair) in stat_records.chunks(2).enumerate() {
        let (mn, vn) = (&pair[0].0, &pair[1].0);
        if *mn != format!("block{i}.bn.running_mean") || *vn != format!("block{i}.bn.running_var") {
            return Err(bad(format!("unexpected statistics records {mn}, {vn}")));
        }
        if pair[0].1.rank() != 1 || pair[0].1.shape() != pair[1].1.shape() {
            return Err(bad(format!(
                "statistics for block {i} have mismatched shapes"
            )));
        }
        bn_stats.push(RunningStats::from_parts(
            pair[0].1.data().to_vec(),
            pair[1].1.data().to_vec(),
        ));
    }
    let (names, tensors) = records.into_iter().unzip();
    let params = ParamSet {
        names,
        tensors,
        bn_stats,
    };
    params.check(&config)?;
    Ok(Checkpoint {
        config,
        meta,
        params,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(ck)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
