//! Little-endian binary helpers and JSONL utilities shared by the file formats.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::{Error, Result};

pub(crate) struct BinWriter<W: Write> {
    inner: W,
    path: PathBuf,
}

impl<W: Write> BinWriter<W> {
    pub fn new(inner: W, path: &Path) -> Self {
        BinWriter { inner, path: path.to_owned() }
    }

    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.inner.write_all(bytes).map_err(|e| Error::io(&self.path, e))
    }

    pub fn magic(&mut self, m: &[u8; 4]) -> Result<()> {
        self.put(m)
    }

    pub fn u8(&mut self, x: u8) -> Result<()> {
        self.put(&[x])
    }

    pub fn u32(&mut self, x: u32) -> Result<()> {
        self.put(&x.to_le_bytes())
    }

    pub fn u64(&mut self, x: u64) -> Result<()> {
        self.put(&x.to_le_bytes())
    }

    pub fn f64(&mut self, x: f64) -> Result<()> {
        self.put(&x.to_le_bytes())
    }

    pub fn f64s(&mut self, xs: impl IntoIterator<Item = f64>) -> Result<()> {
        for x in xs {
            self.f64(x)?;
        }
        Ok(())
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.u64(b.len() as u64)?;
        self.put(b)
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.inner)
    }
}

pub(crate) struct BinReader<R: Read> {
    inner: R,
    path: PathBuf,
}

impl<R: Read> BinReader<R> {
    pub fn new(inner: R, path: &Path) -> Self {
        BinReader { inner, path: path.to_owned() }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::format(&self.path, "file is truncated")
            } else {
                Error::io(&self.path, e)
            }
        })?;
        Ok(buf)
    }

    pub fn expect_magic(&mut self, m: &[u8; 4], what: &str) -> Result<()> {
        let got = self.take::<4>()?;
        if &got != m {
            return Err(Error::format(&self.path, format!("not a {what} file")));
        }
        Ok(())
    }

    pub fn expect_version(&mut self, want: u32) -> Result<()> {
        let got = self.u32()?;
        if got != want {
            return Err(Error::format(&self.path, format!("unsupported version {got} (expected {want})")));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn bytes(&mut self, max: usize) -> Result<Vec<u8>> {
        let n = self.u64()? as usize;
        if n > max {
            return Err(Error::format(&self.path, format!("block of {n} bytes exceeds limit")));
        }
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|_| Error::format(&self.path, "file is truncated"))?;
        Ok(buf)
    }

    pub fn format_err(&self, msg: impl Into<String>) -> Error {
        Error::format(&self.path, msg)
    }

    pub fn expect_eof(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::format(&self.path, "trailing bytes after payload")),
            Err(e) => Err(Error::io(&self.path, e)),
        }
    }
}

pub(crate) fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Reads up to `limit` non-empty lines of a JSONL file.
pub(crate) fn read_jsonl_lines(path: &Path, limit: Option<usize>) -> Result<Vec<String>> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        if limit.is_some_and(|n| out.len() >= n) {
            break;
        }
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(line);
        }
    }
    Ok(out)
}
