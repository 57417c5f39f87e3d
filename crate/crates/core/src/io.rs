//! Little-endian binary encoding shared by the dataset and compressed
//! dataset files.

use std::io::{Read, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("format error at byte offset {offset}: {message}")]
    Corrupt { offset: u64, message: String },
}

impl FormatError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Appends little-endian values to a sink.
pub struct ByteWriter<W: Write> {
    inner: W,
    written: u64,
}

impl<W: Write> ByteWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner, written: 0 }
    }

    pub fn bytes(&mut self, b: &[u8]) -> std::io::Result<()> {
        self.inner.write_all(b)?;
        self.written += b.len() as u64;
        Ok(())
    }

    pub fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn len_u32(&mut self, n: usize) -> std::io::Result<()> {
        let v = u32::try_from(n).map_err(|_| std::io::Error::other(format!("length {n} exceeds u32")))?;
        self.u32(v)
    }

    pub fn str(&mut self, s: &str) -> std::io::Result<()> {
        self.len_u32(s.len())?;
        self.bytes(s.as_bytes())
    }

    pub fn f64s(&mut self, v: &[f64]) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(8 * v.len());
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        self.bytes(&buf)
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

/// Reads little-endian values, tracking the byte offset for error messages.
pub struct ByteReader<R: Read> {
    inner: R,
    offset: u64,
}

impl<R: Read> ByteReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn corrupt(&self, message: impl Into<String>) -> FormatError {
        FormatError::Corrupt {
            offset: self.offset,
            message: message.into(),
        }
    }

    pub fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<(), FormatError> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(self.corrupt(format!(
                "file truncated while reading {what} ({} bytes needed)",
                buf.len()
            ))),
            Err(e) => Err(self.corrupt(format!("read error in {what}: {e}"))),
        }
    }

    pub fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        let mut b = [0u8; 4];
        self.fill(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64, FormatError> {
        let mut b = [0u8; 8];
        self.fill(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    pub fn f64(&mut self, what: &str) -> Result<f64, FormatError> {
        let mut b = [0u8; 8];
        self.fill(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }

    /// A `u32` length prefix, rejected above `limit`.
    pub fn len(&mut self, what: &str, limit: usize) -> Result<usize, FormatError> {
        let at = self.offset;
        let n = self.u32(what)? as usize;
        if n > limit {
            return Err(FormatError::Corrupt {
                offset: at,
                message: format!("{what} = {n} exceeds limit {limit}"),
            });
        }
        Ok(n)
    }

    pub fn str(&mut self, what: &str) -> Result<String, FormatError> {
        let n = self.len(what, 1 << 24)?;
        let mut b = vec![0u8; n];
        self.fill(&mut b, what)?;
        String::from_utf8(b).map_err(|_| self.corrupt(format!("{what} is not valid UTF-8")))
    }

    pub fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, FormatError> {
        let mut b = vec![0u8; 8 * n];
        self.fill(&mut b, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<(), FormatError> {
        let mut b = [0u8; 4];
        self.fill(&mut b, "magic")?;
        if &b != expected {
            return Err(FormatError::Corrupt {
                offset: 0,
                message: format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(&b),
                    String::from_utf8_lossy(expected)
                ),
            });
        }
        Ok(())
    }

    /// Fails unless the stream is exhausted.
    pub fn finish(&mut self) -> Result<(), FormatError> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b) {
            Ok(0) => Ok(()),
            Ok(_) => Err(self.corrupt("trailing bytes after payload")),
            Err(e) => Err(self.corrupt(format!("read error: {e}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_values() {
        let mut w = ByteWriter::new(Vec::new());
        w.bytes(b"TEST").unwrap();
        w.u32(7).unwrap();
        w.u64(u64::MAX - 3).unwrap();
        w.f64(-0.0).unwrap();
        w.str("héllo").unwrap();
        w.f64s(&[1.5, f64::MIN_POSITIVE, -2.0]).unwrap();
        let n = w.written();
        let buf = w.into_inner();
        assert_eq!(n as usize, buf.len());

        let mut r = ByteReader::new(&buf[..]);
        r.magic(b"TEST").unwrap();
        assert_eq!(r.u32("a").unwrap(), 7);
        assert_eq!(r.u64("b").unwrap(), u64::MAX - 3);
        assert_eq!(r.f64("c").unwrap().to_bits(), (-0.0f64).to_bits());
        assert_eq!(r.str("d").unwrap(), "héllo");
        assert_eq!(r.f64s(3, "e").unwrap(), vec![1.5, f64::MIN_POSITIVE, -2.0]);
        r.finish().unwrap();
    }

    #[test]
    fn truncation_reports_offset() {
        let mut w = ByteWriter::new(Vec::new());
        w.u32(1).unwrap();
        w.f64s(&[1.0, 2.0]).unwrap();
        let buf = w.into_inner();
        let mut r = ByteReader::new(&buf[..buf.len() - 3]);
        r.u32("count").unwrap();
        match r.f64s(2, "payload") {
            Err(FormatError::Corrupt { offset, message }) => {
                assert_eq!(offset, 4);
                assert!(message.contains("payload"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic() {
        let mut r = ByteReader::new(&b"NOPE"[..]);
        assert!(matches!(r.magic(b"REEL"), Err(FormatError::Corrupt { offset: 0, .. })));
    }
}
