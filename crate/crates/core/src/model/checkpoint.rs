//! Binary checkpoint format.
//!
//! All integers little-endian:
//!
//! ```text
//! magic "MMSCKPT\0" | version u32
//! S u32 | f_max i32 | chunk u32
//! hidden u32 | policy_hidden u32 | embed_dim u32 | max_steps u32
//! epoch u64
//! blocks u32, then per block: name_len u32, name, ndim u32, dims u32 × ndim
//! weights u64, then f64 × weights
//! ```

use std::path::Path;

use super::network::{Architecture, ModelParams};
use super::tokenizer::TokenizerConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MMSCKPT\0";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    /// Last completed training epoch.
    pub epoch: usize,
}

pub fn write_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let p = &ckpt.params;
    let a = p.arch();
    let mut out = Vec::with_capacity(64 + 8 * p.weights().len());
    let u32le = |out: &mut Vec<u8>, x: usize| out.extend_from_slice(&(x as u32).to_le_bytes());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    u32le(&mut out, a.tokenizer.size);
    out.extend_from_slice(&a.tokenizer.f_max.to_le_bytes());
    u32le(&mut out, a.tokenizer.chunk);
    for x in [a.hidden, a.policy_hidden, a.embed_dim, a.max_steps] {
        u32le(&mut out, x);
    }
    out.extend_from_slice(&(ckpt.epoch as u64).to_le_bytes());
    let blocks = p.layout().blocks();
    u32le(&mut out, blocks.len());
    for b in blocks {
        u32le(&mut out, b.name.len());
        out.extend_from_slice(b.name.as_bytes());
        u32le(&mut out, b.shape.len());
        for &d in &b.shape {
            u32le(&mut out, d);
        }
    }
    out.extend_from_slice(&(p.weights().len() as u64).to_le_bytes());
    for w in p.weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated checkpoint at byte {}", self.pos)))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn usize32(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses a checkpoint. With `expected_size`, a model for a different `S`
/// is an [`Error::Incompatible`].
pub fn read_checkpoint(data: &[u8], expected_size: Option<usize>) -> Result<Checkpoint> {
    let mut r = Reader { data, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let size = r.usize32()?;
    let f_max = r.u32()? as i32;
    let chunk = r.usize32()?;
    let tokenizer =
        TokenizerConfig::new(size, f_max, chunk).map_err(|e| Error::Format(format!("bad tokenizer header: {e}")))?;
    let arch = Architecture {
        tokenizer,
        hidden: r.usize32()?,
        policy_hidden: r.usize32()?,
        embed_dim: r.usize32()?,
        max_steps: r.usize32()?,
    };
    arch.validate()
        .map_err(|e| Error::Format(format!("bad architecture header: {e}")))?;
    let epoch = r.u64()? as usize;
    let n_blocks = r.usize32()?;
    let mut manifest = Vec::new();
    for _ in 0..n_blocks {
        let len = r.usize32()?;
        let name =
            String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Format("block name is not UTF-8".into()))?;
        let ndim = r.usize32()?;
        let dims = (0..ndim).map(|_| r.usize32()).collect::<Result<Vec<_>>>()?;
        manifest.push((name, dims));
    }
    let n = r.u64()? as usize;
    let bytes = r.take(
        n.checked_mul(8)
            .ok_or_else(|| Error::Format("weight count overflows".into()))?,
    )?;
    if r.pos != data.len() {
        return Err(Error::Format(format!("{} trailing bytes", data.len() - r.pos)));
    }
    let weights: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    if let Some(s) = expected_size {
        if s != size {
            return Err(Error::Incompatible(format!(
                "checkpoint is for S={size}, requested S={s}"
            )));
        }
    }
    let params = ModelParams::from_weights(arch, weights)?;
    let expected: Vec<(String, Vec<usize>)> = params
        .layout()
        .blocks()
        .iter()
        .map(|b| (b.name.clone(), b.shape.clone()))
        .collect();
    if manifest != expected {
        return Err(Error::Format("shape manifest does not match the architecture".into()));
    }
    if !params.is_finite() {
        return Err(Error::Format("checkpoint holds non-finite weights".into()));
    }
    Ok(Checkpoint { params, epoch })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, write_checkpoint(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, expected_size: Option<usize>) -> Result<Checkpoint> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&data, expected_size)
}
