//! Little-endian checkpoint container.
//!
//! ```text
//! "PCSC"                  magic
//! u32                     format version
//! u32 + bytes             architecture config block (opaque to this module)
//! u32                     parameter count
//! per parameter:
//!   u32 + bytes           name (UTF-8)
//!   u32                   rank (always 5)
//!   u32 x rank            dims
//!   f32 x prod(dims)      values
//! ```

use std::io::{Read, Write};

use super::{numel, ParamStore};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PCSC";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn len_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Checkpoint(format!("{what} too large")))
}

pub fn save_checkpoint(w: &mut impl Write, config: &[u8], params: &ParamStore<f32>) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION)?;
    put_u32(w, len_u32(config.len(), "config block")?)?;
    w.write_all(config)?;
    put_u32(w, len_u32(params.len(), "parameter count")?)?;
    for p in params.params() {
        put_u32(w, len_u32(p.name.len(), "name")?)?;
        w.write_all(p.name.as_bytes())?;
        put_u32(w, p.shape.len() as u32)?;
        for &d in &p.shape {
            put_u32(w, len_u32(d, "dimension")?)?;
        }
        let mut buf = Vec::with_capacity(p.values.len() * 4);
        for v in &p.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => {
                Error::Checkpoint(format!("truncated while reading {what} at byte {}", self.offset))
            }
            _ => Error::Io(e),
        })?;
        self.offset += n as u64;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.bytes(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

/// Returns the config block and the parameters.
pub fn load_checkpoint(r: &mut impl Read) -> Result<(Vec<u8>, ParamStore<f32>)> {
    let mut c = Cursor { inner: r, offset: 0 };
    if c.bytes(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = c.u32("config length")? as usize;
    let config = c.bytes(n, "config block")?;
    let count = c.u32("parameter count")?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let n = c.u32("name length")? as usize;
        let name = String::from_utf8(c.bytes(n, "name")?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
        let rank = c.u32("rank")?;
        if rank != 5 {
            return Err(Error::Checkpoint(format!("parameter {name} has rank {rank}")));
        }
        let mut shape = [0usize; 5];
        for d in &mut shape {
            *d = c.u32("dimension")? as usize;
        }
        let len = numel(&shape);
        let raw = c.bytes(len * 4, "values")?;
        let values = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        store
            .push(name, shape, values)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    Ok((config, store))
}
