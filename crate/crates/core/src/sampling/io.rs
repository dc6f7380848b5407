//! Pool file format.
//!
//! Little-endian layout:
//!
//! | field        | type                         |
//! |--------------|------------------------------|
//! | magic        | `b"DSMPPOOL"`                |
//! | version      | `u32` (= 1)                  |
//! | dim          | `u64`                        |
//! | count        | `u64`                        |
//! | meta_len     | `u32`                        |
//! | provenance   | `meta_len` bytes of JSON     |
//! | samples      | `count · dim` × `f64`, row-major |

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use super::{Provenance, SamplePool};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"DSMPPOOL";
const VERSION: u32 = 1;
// Refuse absurd headers before allocating.
const MAX_ENTRIES: u64 = 1 << 32;

pub fn save_pool(pool: &SamplePool, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let meta = serde_json::to_vec(pool.provenance()).expect("provenance serializes");
    let mut buf = Vec::with_capacity(40 + meta.len() + 8 * pool.dim() * pool.count());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(pool.dim() as u64).to_le_bytes());
    buf.extend_from_slice(&(pool.count() as u64).to_le_bytes());
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta);
    for row in pool.samples().row_iter() {
        for v in row.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::PoolFormat {
                field,
                reason: format!(
                    "truncated: need {n} bytes at offset {}, {} remain",
                    self.pos,
                    self.bytes.len() - self.pos
                ),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }
}

pub fn load_pool(path: impl AsRef<Path>) -> Result<SamplePool> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pool(&bytes)
}

pub(crate) fn parse_pool(bytes: &[u8]) -> Result<SamplePool> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::PoolFormat {
            field: "magic",
            reason: "not a pool file".into(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::PoolFormat {
            field: "version",
            reason: format!("unsupported version {version}"),
        });
    }
    let dim = r.u64("dim")?;
    let count = r.u64("count")?;
    if dim == 0 {
        return Err(Error::PoolFormat {
            field: "dim",
            reason: "must be positive".into(),
        });
    }
    if count == 0 {
        return Err(Error::PoolFormat {
            field: "count",
            reason: "must be positive".into(),
        });
    }
    if dim.saturating_mul(count) > MAX_ENTRIES {
        return Err(Error::PoolFormat {
            field: "count",
            reason: format!("{count} × {dim} entries exceeds the supported size"),
        });
    }
    let meta_len = r.u32("meta_len")? as usize;
    let provenance: Provenance =
        serde_json::from_slice(r.take(meta_len, "provenance")?).map_err(|e| Error::PoolFormat {
            field: "provenance",
            reason: e.to_string(),
        })?;
    let (dim, count) = (dim as usize, count as usize);
    let body = r.take(8 * dim * count, "samples")?;
    if r.pos != bytes.len() {
        return Err(Error::PoolFormat {
            field: "samples",
            reason: format!("{} trailing bytes: dimension mismatch", bytes.len() - r.pos),
        });
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::PoolFormat {
            field: "samples",
            reason: format!("non-finite value at row {}, column {}", i / dim, i % dim),
        });
    }
    SamplePool::new(DMatrix::from_row_slice(count, dim, &values), provenance)
}

/// Plain-text export: one sample per line, comma separated.
pub fn export_text(pool: &SamplePool, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for row in pool.samples().row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(",")).expect("write to vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
