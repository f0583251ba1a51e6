//! `CGT1` parameter blobs.
//!
//! Layout: the 4-byte magic `CGT1`, then records until end of input. Each
//! record is a `u32` name length, the UTF-8 name, a `u32` rank, `rank`
//! `u32` dims and `prod(dims)` little-endian `f32` values. Writers always
//! emit rank 4 (NCHW); readers accept ranks 0 through 4 and left-pad
//! missing dims with 1.

use crate::error::{AutogradError, Result};
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"CGT1";

/// A named tensor as stored in a blob.
pub type Record = (String, Tensor<f32>);

pub fn encode(records: &[Record]) -> Vec<u8> {
    let payload: usize = records.iter().map(|(n, t)| 24 + n.len() + 4 * t.len()).sum();
    let mut out = Vec::with_capacity(4 + payload);
    out.extend_from_slice(MAGIC);
    for (name, tensor) in records {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&4u32.to_le_bytes());
        for d in tensor.shape().dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| AutogradError::Blob(format!("truncated {what} at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Record>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(AutogradError::Blob("missing CGT1 magic".into()));
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let mut records = Vec::new();
    while r.pos < bytes.len() {
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| AutogradError::Blob(format!("record {} name is not UTF-8", records.len())))?
            .to_owned();
        let rank = r.u32("rank")? as usize;
        if rank > 4 {
            return Err(AutogradError::Blob(format!("tensor {name:?} has rank {rank}, at most 4 supported")));
        }
        let mut dims = [1usize; 4];
        for slot in dims.iter_mut().skip(4 - rank) {
            *slot = r.u32("dims")? as usize;
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| AutogradError::Blob(format!("tensor {name:?} dims overflow")))?;
        let raw = r.take(count, "payload")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        records.push((name, Tensor::from_vec(shape, data)?));
    }
    Ok(records)
}
