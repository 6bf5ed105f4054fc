//! Shared layout for the binary files: 8-byte magic, little-endian `u64`
//! length, JSON header of that length, then raw little-endian `f64` payload.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub(crate) fn encode<H: Serialize>(magic: &[u8; 8], header: &H, payload: &[&[f64]]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header).map_err(|e| Error::Data(e.to_string()))?;
    let floats: usize = payload.iter().map(|p| p.len()).sum();
    let mut out = Vec::with_capacity(16 + json.len() + 8 * floats);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for part in payload {
        for x in *part {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub(crate) struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: PathBuf,
}

impl<'a> Decoder<'a> {
    /// Checks the magic. `family` is the 6-byte prefix shared by every
    /// version of the format, `kind` a human name for error messages.
    pub fn open(bytes: &'a [u8], path: &Path, magic: &[u8; 8], kind: &str) -> Result<Self> {
        let mut dec = Self {
            bytes,
            pos: 0,
            path: path.to_path_buf(),
        };
        let found = dec.take(8).map_err(|_| dec.err(format!("not a {kind} file")))?;
        if found != magic {
            if found[..6] == magic[..6] {
                let version = String::from_utf8_lossy(&found[6..]).into_owned();
                let expected = String::from_utf8_lossy(&magic[6..]).into_owned();
                return Err(dec.err(format!(
                    "unsupported {kind} version {version} (expected {expected})"
                )));
            }
            return Err(dec.err(format!("not a {kind} file")));
        }
        Ok(dec)
    }

    pub fn err(&self, message: impl Into<String>) -> Error {
        Error::format(self.path.clone(), message)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err("unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn header<H: DeserializeOwned>(&mut self) -> Result<H> {
        let len = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        let len = usize::try_from(len).map_err(|_| self.err("header length overflows"))?;
        let raw = self.take(len)?;
        serde_json::from_slice(raw).map_err(|e| self.err(format!("bad header: {e}")))
    }

    pub fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| self.err("payload too large"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err(format!(
                "{} trailing bytes after payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}
