//! Little-endian binary framing shared by the on-disk formats.
//!
//! Every file starts with a four byte magic followed by a `u32` version.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub const EMBEDDING_MAGIC: [u8; 4] = *b"VLME";
pub const LABEL_MAGIC: [u8; 4] = *b"VLML";
pub const PCA_MAGIC: [u8; 4] = *b"VLMP";
pub const DICTIONARY_MAGIC: [u8; 4] = *b"VLMD";

#[derive(Debug, Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn with_header(magic: [u8; 4]) -> Self {
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(&magic);
        w.u32(FORMAT_VERSION);
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32s(&mut self, vs: &[f32]) {
        self.buf.reserve(vs.len() * 4);
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn f64s(&mut self, vs: impl IntoIterator<Item = f64>) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    what: &'static str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic and version and positions the cursor after them.
    pub fn open(what: &'static str, bytes: &'a [u8], magic: [u8; 4]) -> Result<Self> {
        let mut r = Reader {
            what,
            bytes,
            pos: 0,
        };
        let found: [u8; 4] = r.take(4)?.try_into().unwrap();
        if found != magic {
            return Err(Error::MagicMismatch {
                what,
                expected: magic,
                found,
            });
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion { what, version });
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Malformed {
                what: self.what,
                detail: format!("need {n} bytes at offset {}", self.pos),
            });
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A `u64` count that must fit in memory.
    pub fn count(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Malformed {
            what: self.what,
            detail: format!("count {v} does not fit in usize"),
        })
    }

    fn payload_len(&self, n: usize, width: usize) -> Result<usize> {
        n.checked_mul(width).ok_or_else(|| Error::Malformed {
            what: self.what,
            detail: format!("element count {n} overflows"),
        })
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let len = self.payload_len(n, 4)?;
        let raw = self.take(len)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        let len = self.payload_len(n, 4)?;
        let raw = self.take(len)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = self.payload_len(n, 8)?;
        let raw = self.take(len)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Malformed {
                what: self.what,
                detail: format!("{} trailing bytes", self.bytes.len() - self.pos),
            });
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reader_rejects_wrong_magic_and_version() {
        let mut w = Writer::with_header(*b"VLME");
        w.u64(3);
        let bytes = w.into_bytes();
        assert!(matches!(
            Reader::open("x", &bytes, *b"VLML"),
            Err(Error::MagicMismatch { .. })
        ));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            Reader::open("x", &bad, *b"VLME"),
            Err(Error::UnsupportedVersion { version: 9, .. })
        ));
    }

    #[test]
    fn reader_detects_truncation_and_trailing_bytes() {
        let mut w = Writer::with_header(*b"VLMP");
        w.u64(2);
        let bytes = w.into_bytes();
        let mut r = Reader::open("x", &bytes, *b"VLMP").unwrap();
        assert_eq!(r.count().unwrap(), 2);
        assert!(r.f64s(2).is_err());

        let mut r = Reader::open("x", &bytes, *b"VLMP").unwrap();
        assert!(r.u32().is_ok());
        assert!(r.finish().is_err());
    }
}
