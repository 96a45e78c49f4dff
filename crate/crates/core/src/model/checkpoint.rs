//! Binary parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "CECTCKPT"
//! version  u32      1
//! digest   32 bytes SHA-256 of the canonical model config
//! count    u32      number of records
//! record*  u32 name length, name bytes (UTF-8), u32 rank,
//!          rank × u64 extents, product(extents) × f32 payload
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::config::CectConfig;
use crate::error::{CectError, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"CECTCKPT";
pub const VERSION: u32 = 1;

/// Decoded container contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub digest: [u8; 32],
    pub records: BTreeMap<String, Tensor>,
}

pub fn encode<'a>(digest: &[u8; 32], records: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<u8> {
    let records: Vec<_> = records.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(digest);
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for (name, t) in records {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
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
            .ok_or_else(|| CectError::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(CectError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CectError::Checkpoint(format!("unsupported version {version}")));
    }
    let digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let count = r.u32()?;
    let mut records = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| CectError::Checkpoint("record name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            shape.push(
                usize::try_from(r.u64()?).map_err(|_| CectError::Checkpoint(format!("{name}: extent overflow")))?,
            );
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &e| a.checked_mul(e))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| CectError::Checkpoint(format!("{name}: payload size overflow")))?;
        let data = r
            .take(numel)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if records.insert(name.clone(), Tensor::new(shape, data)?).is_some() {
            return Err(CectError::Checkpoint(format!("duplicate record {name}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(CectError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint { digest, records })
}

pub fn save<'a>(path: &Path, cfg: &CectConfig, records: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<()> {
    let bytes = encode(&cfg.digest(), records);
    std::fs::write(path, bytes).map_err(|e| CectError::io(path, e))
}

/// Reads a container and checks that it was written for `cfg`.
pub fn load(path: &Path, cfg: &CectConfig) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| CectError::io(path, e))?;
    let ck = decode(&bytes)?;
    if ck.digest != cfg.digest() {
        return Err(CectError::Checkpoint(format!(
            "{} was written for a different model configuration",
            path.display()
        )));
    }
    Ok(ck)
}
