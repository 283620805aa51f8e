//! Bit-exact model persistence.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "TRIM" magic
//! u32  format version (currently 1)
//! u32  vocab_size, d_model, n_heads, d_ffn, n_blocks, max_seq_len
//! u64  seed
//! u8 * (2 * n_blocks)   unit mask, block-major, MHA before MLP, 1 = alive
//! per live tensor, slot order:
//!   u32 name_len, name bytes (utf-8)
//!   u32 rank, u32 * rank dims
//!   f32 * numel raw values
//! u64  FNV-1a checksum of every preceding byte
//! ```
//!
//! A checksum mismatch rejects the file; load(save(m)) reproduces forward
//! outputs bit-identically.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, TrimModel, UnitId};
use crate::rng::fnv1a64;

pub const MAGIC: &[u8; 4] = b"TRIM";
pub const VERSION: u32 = 1;

pub fn save(model: &TrimModel<f32>, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(model.param_count() * 4 + 1024);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let c = model.config();
    for v in [c.vocab_size, c.d_model, c.n_heads, c.d_ffn, c.n_blocks, c.max_seq_len] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.extend_from_slice(&c.seed.to_le_bytes());
    buf.extend_from_slice(&mask_bytes(model));
    for (name, tensor) in model.params_iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let checksum = fnv1a64(&buf);
    buf.extend_from_slice(&checksum.to_le_bytes());
    fs::write(path, buf)?;
    Ok(())
}

fn mask_bytes(model: &TrimModel<f32>) -> Vec<u8> {
    (0..model.unit_count())
        .map(|i| model.mask().is_alive(UnitId::from_index(i)) as u8)
        .collect()
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.buf.len() {
            return Err(Error::Format(format!(
                "truncated checkpoint: wanted {n} bytes at offset {}",
                self.at
            )));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.at
    }
}

pub fn load(path: &Path) -> Result<TrimModel<f32>> {
    let raw = fs::read(path)?;
    if raw.len() < MAGIC.len() + 4 + 8 {
        return Err(Error::Format("file too short for a checkpoint".to_string()));
    }
    let (body, tail) = raw.split_at(raw.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let actual = fnv1a64(body);
    if stored != actual {
        return Err(Error::Format(format!(
            "checksum mismatch: stored {stored:016x}, computed {actual:016x}"
        )));
    }

    let mut r = Reader { buf: body, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, not a checkpoint".to_string()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let config = ModelConfig {
        vocab_size: r.u32()? as usize,
        d_model: r.u32()? as usize,
        n_heads: r.u32()? as usize,
        d_ffn: r.u32()? as usize,
        n_blocks: r.u32()? as usize,
        max_seq_len: r.u32()? as usize,
        seed: r.u64()?,
    };
    config.validate()?;

    let n_units = config.unit_count();
    let mask_raw = r.take(n_units)?.to_vec();
    let mut model = TrimModel::<f32>::build(config)?;
    for (i, &b) in mask_raw.iter().enumerate() {
        match b {
            1 => {}
            0 => {
                model.drop_unit(UnitId::from_index(i))?;
            }
            other => return Err(Error::Format(format!("bad mask byte {other}"))),
        }
    }

    let mut expected: Vec<String> =
        model.params_iter().map(|(name, _)| name.to_string()).collect();
    while r.remaining() > 0 {
        let name_len = r.u32()? as usize;
        if name_len > 4096 {
            return Err(Error::Format(format!("implausible name length {name_len}")));
        }
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Format("non-utf8 tensor name".to_string()))?
            .to_string();
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(Error::Format(format!("implausible tensor rank {rank}")));
        }
        let mut numel = 1usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = r.u32()? as usize;
            dims.push(d);
            numel = numel.saturating_mul(d);
        }
        let bytes = r.take(numel * 4)?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let pos = expected.iter().position(|n| *n == name).ok_or_else(|| {
            Error::Format(format!("unexpected or duplicate tensor {name}"))
        })?;
        let want_shape = model.param_by_name(&name).expect("live param").shape().to_vec();
        if want_shape != dims {
            return Err(Error::Format(format!(
                "tensor {name}: shape {dims:?} does not match expected {want_shape:?}"
            )));
        }
        model.set_param_data(&name, data)?;
        expected.remove(pos);
    }
    if !expected.is_empty() {
        return Err(Error::Format(format!(
            "checkpoint missing {} tensors (first: {})",
            expected.len(),
            expected[0]
        )));
    }
    Ok(model)
}
