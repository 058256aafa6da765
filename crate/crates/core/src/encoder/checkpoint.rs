//! Binary checkpoint: fixed header followed by little-endian `f64` parameters.
//!
//! ```text
//! magic     8 bytes  "WBAGCKPT"
//! version   u32
//! dims      6 x u32  features, hidden, classes, kernel, stride, depth
//! seed      u64
//! count     u64      number of parameters
//! payload   count x f64
//! ```

use std::path::Path;

use super::{EncoderDims, EncoderParams};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"WBAGCKPT";
const HEADER_LEN: usize = 8 + 4 + 6 * 4 + 8 + 8;

pub fn encode_checkpoint(params: &EncoderParams) -> Vec<u8> {
    let d = params.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [d.features, d.hidden, d.classes, d.kernel, d.stride, d.depth] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&params.seed().to_le_bytes());
    out.extend_from_slice(&(params.param_count() as u64).to_le_bytes());
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Checkpoint(format!("truncated {what}")));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<EncoderParams> {
    let mut r = Reader { buf: bytes };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 6];
    for (slot, name) in dims
        .iter_mut()
        .zip(["features", "hidden", "classes", "kernel", "stride", "depth"])
    {
        *slot = r.u32(name)? as usize;
    }
    let dims = EncoderDims {
        features: dims[0],
        hidden: dims[1],
        classes: dims[2],
        kernel: dims[3],
        stride: dims[4],
        depth: dims[5],
    };
    dims.validate()
        .map_err(|e| Error::Checkpoint(format!("dims: {e}")))?;
    let seed = r.u64("seed")?;
    let count = r.u64("count")?;
    if count != dims.param_count() as u64 {
        return Err(Error::Checkpoint(format!(
            "parameter count {count} does not match dims ({})",
            dims.param_count()
        )));
    }
    if !r.buf.len().is_multiple_of(8) || (r.buf.len() / 8) as u64 != count {
        return Err(Error::Checkpoint(format!(
            "payload is {} bytes, expected {}",
            r.buf.len(),
            count.saturating_mul(8)
        )));
    }
    let mut values = Vec::with_capacity(count as usize);
    for chunk in r.buf.chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        values.push(v);
    }
    EncoderParams::from_parts(dims, seed, values)
}

pub fn save_checkpoint(params: &EncoderParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<EncoderParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
