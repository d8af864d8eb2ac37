use std::fs;
use std::io::Write;
use std::path::Path;

use super::Frame;
use crate::error::{Error, Result};

/// Reads a binary PPM (P6, maxval 255). `expected` is an optional `(width, height)`.
pub fn load_frame(path: impl AsRef<Path>, expected: Option<(usize, usize)>) -> Result<Frame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let frame = parse_ppm(&bytes, path)?;
    if let Some((w, h)) = expected {
        frame.check_dims(w, h)?;
    }
    Ok(frame)
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> &[u8] {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        &self.bytes[start..self.pos]
    }

    fn number(&mut self, what: &str, path: &Path) -> Result<usize> {
        let tok = self.token();
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::PpmHeader {
                path: path.to_path_buf(),
                reason: format!("bad {what} {:?}", String::from_utf8_lossy(tok)),
            })
    }
}

/// Decodes an in-memory P6 image. `path` is only used in error messages.
pub fn parse_ppm(bytes: &[u8], path: &Path) -> Result<Frame> {
    let mut hdr = Header { bytes, pos: 0 };
    let magic = hdr.token();
    if magic != b"P6" {
        return Err(Error::UnsupportedPpm {
            path: path.to_path_buf(),
            magic: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let width = hdr.number("width", path)?;
    let height = hdr.number("height", path)?;
    let maxval = hdr.number("maxval", path)?;
    if maxval != 255 {
        return Err(Error::PpmHeader {
            path: path.to_path_buf(),
            reason: format!("maxval {maxval} is not 255"),
        });
    }
    if width == 0 || height == 0 {
        return Err(Error::PpmHeader {
            path: path.to_path_buf(),
            reason: format!("zero dimension {width}x{height}"),
        });
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(hdr.pos) {
        Some(c) if c.is_ascii_whitespace() => hdr.pos += 1,
        _ => {
            return Err(Error::TruncatedPixels {
                path: path.to_path_buf(),
                expected: width * height * 3,
                found: 0,
            })
        }
    }
    let expected = width * height * 3;
    let data = &bytes[hdr.pos..];
    if data.len() < expected {
        return Err(Error::TruncatedPixels {
            path: path.to_path_buf(),
            expected,
            found: data.len(),
        });
    }
    Frame::new(width, height, data[..expected].to_vec(), 0)
}

pub fn write_ppm(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(frame.pixels().len() + 32);
    write!(buf, "P6\n{} {}\n255\n", frame.width(), frame.height()).expect("write to Vec");
    buf.extend_from_slice(frame.pixels());
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}
