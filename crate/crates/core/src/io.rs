//! Line-delimited JSON helpers and the binary artifact container.
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! magic[4] | version u32 | header_len u64 | header (UTF-8 JSON)
//!          | n_arrays u64 | { len u64 | f64 * len }*
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so save -> load -> save is
//! byte-identical.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Reads a JSONL file, returning `(line_number, parsed)` for every non-blank
/// line. Parse failures are returned per line so callers can decide between
/// strict rejection and skipping.
pub fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
) -> Result<Vec<(usize, std::result::Result<T, String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((i + 1, serde_json::from_str(&line).map_err(|e| e.to_string())));
    }
    Ok(out)
}

/// Strict variant of [`read_jsonl`]: the first malformed line is an error.
pub fn read_jsonl_strict<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_jsonl(path)?
        .into_iter()
        .map(|(line, r)| r.map_err(|message| Error::Record { line, message }))
        .collect()
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("records serialize"));
        s.push('\n');
    }
    s
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    write_bytes(path, to_jsonl(records).as_bytes())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub magic: [u8; 4],
    pub version: u32,
    pub header: String,
    pub arrays: Vec<Vec<f64>>,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self.arrays.iter().map(|a| 8 + 8 * a.len()).sum();
        let mut buf = Vec::with_capacity(24 + self.header.len() + payload);
        buf.extend_from_slice(&self.magic);
        buf.extend_from_slice(&self.version.to_le_bytes());
        buf.extend_from_slice(&(self.header.len() as u64).to_le_bytes());
        buf.extend_from_slice(self.header.as_bytes());
        buf.extend_from_slice(&(self.arrays.len() as u64).to_le_bytes());
        for a in &self.arrays {
            buf.extend_from_slice(&(a.len() as u64).to_le_bytes());
            for x in a {
                buf.extend_from_slice(&x.to_bits().to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8], magic: [u8; 4], version: u32) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let found_magic = cur.take(4)?;
        if found_magic != magic {
            return Err(Error::Artifact(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(found_magic),
                String::from_utf8_lossy(&magic)
            )));
        }
        let found_version = cur.u32()?;
        if found_version != version {
            return Err(Error::Version {
                expected: version,
                found: found_version,
            });
        }
        let header_len = cur.u64()? as usize;
        let header = std::str::from_utf8(cur.take(header_len)?)
            .map_err(|e| Error::Artifact(format!("header is not UTF-8: {e}")))?
            .to_string();
        let n = cur.u64()? as usize;
        let mut arrays = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let len = cur.u64()? as usize;
            let raw = cur.take(len.checked_mul(8).ok_or_else(truncated)?)?;
            arrays.push(
                raw.chunks_exact(8)
                    .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
                    .collect(),
            );
        }
        if cur.pos != bytes.len() {
            return Err(Error::Artifact("trailing bytes after last array".into()));
        }
        Ok(Container {
            magic,
            version,
            header,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes())
    }

    pub fn load(path: &Path, magic: [u8; 4], version: u32) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, magic, version)
    }
}

fn truncated() -> Error {
    Error::Artifact("truncated container".into())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or_else(truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
