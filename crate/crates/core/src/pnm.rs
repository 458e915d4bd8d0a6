//! PGM/PPM image files: P2/P3 (ASCII) and P5/P6 (binary) readers, P5/P6
//! writers.
//!
//! Loading scales samples by the header maxval into `[0, 1]`. Saving
//! clamps to `[0, 1]` and quantizes to 8 bits, so one round trip moves a
//! pixel by at most `1 / (2 * 255)`.

use std::path::Path;

use crate::error::Error;
use crate::image::Image;
use crate::scalar::Real;
use crate::Result;

/// Parses PGM (P2/P5) or PPM (P3/P6) bytes.
pub fn parse_pnm<T: Real>(bytes: &[u8]) -> Result<Image<T>> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.magic()?;
    let (channels, ascii) = match magic {
        b'2' => (1, true),
        b'3' => (3, true),
        b'5' => (1, false),
        b'6' => (3, false),
        other => {
            return Err(Error::UnsupportedMagic {
                offset: 0,
                found: format!("P{}", char::from(other)),
            })
        }
    };
    let width = cur.ascii_uint("width")?;
    let height = cur.ascii_uint("height")?;
    let maxval = cur.ascii_uint("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader {
            offset: cur.pos,
            reason: format!("dimensions must be positive, got {width}x{height}"),
        });
    }
    if maxval == 0 || maxval > 65_535 {
        return Err(Error::MalformedHeader {
            offset: cur.pos,
            reason: format!("maxval must lie in 1..=65535, got {maxval}"),
        });
    }
    let samples = width * height * channels;
    let scale = 1.0 / maxval as f64;
    let mut data = Vec::with_capacity(samples);
    if ascii {
        for _ in 0..samples {
            let v = match cur.try_ascii_uint()? {
                Some(v) => v,
                None => {
                    return Err(Error::TruncatedPayload {
                        offset: cur.pos,
                        expected: samples,
                        found: data.len(),
                    })
                }
            };
            if v > maxval {
                return Err(Error::MalformedHeader {
                    offset: cur.pos,
                    reason: format!("sample value {v} exceeds maxval {maxval}"),
                });
            }
            data.push(T::from64(v as f64 * scale));
        }
    } else {
        // Exactly one whitespace byte separates the header from the payload.
        cur.single_whitespace()?;
        let bytes_per_sample = if maxval > 255 { 2 } else { 1 };
        let expected = samples * bytes_per_sample;
        let available = cur.bytes.len() - cur.pos;
        if available < expected {
            return Err(Error::TruncatedPayload {
                offset: cur.bytes.len(),
                expected,
                found: available,
            });
        }
        for _ in 0..samples {
            let v = if bytes_per_sample == 2 {
                // Big-endian sample pairs, per the format for maxval > 255.
                let hi = cur.bytes[cur.pos] as usize;
                let lo = cur.bytes[cur.pos + 1] as usize;
                cur.pos += 2;
                (hi << 8) | lo
            } else {
                let v = cur.bytes[cur.pos] as usize;
                cur.pos += 1;
                v
            };
            data.push(T::from64(v as f64 * scale));
        }
    }
    Image::new(height, width, channels, data)
}

/// Loads a PGM/PPM file.
pub fn load_pnm<T: Real>(path: impl AsRef<Path>) -> Result<Image<T>> {
    parse_pnm(&std::fs::read(path)?)
}

/// Encodes as binary PGM (1 channel) or PPM (3 channels) with maxval 255,
/// clamping intensities into `[0, 1]` first.
pub fn encode_pnm<T: Real>(image: &Image<T>) -> Vec<u8> {
    let magic = if image.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|&v| {
        let clamped = v.into64().clamp(0.0, 1.0);
        (clamped * 255.0).round() as u8
    }));
    out
}

/// Writes a binary PGM/PPM file.
pub fn save_pnm<T: Real>(path: impl AsRef<Path>, image: &Image<T>) -> Result<()> {
    std::fs::write(path, encode_pnm(image))?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn magic(&mut self) -> Result<u8> {
        if self.bytes.len() < 2 || self.bytes[0] != b'P' {
            return Err(Error::UnsupportedMagic {
                offset: 0,
                found: String::from_utf8_lossy(&self.bytes[..self.bytes.len().min(2)]).into_owned(),
            });
        }
        self.pos = 2;
        Ok(self.bytes[1])
    }

    /// Skips whitespace and `#` comments.
    fn skip_filler(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    /// Next ASCII unsigned integer, or `None` at end of input.
    fn try_ascii_uint(&mut self) -> Result<Option<usize>> {
        self.skip_filler();
        if self.pos >= self.bytes.len() {
            return Ok(None);
        }
        let start = self.pos;
        let mut value = 0usize;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((self.bytes[self.pos] - b'0') as usize))
                .ok_or(Error::MalformedHeader {
                    offset: start,
                    reason: "integer overflows".into(),
                })?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::MalformedHeader {
                offset: self.pos,
                reason: format!("expected digit, found byte {:#04x}", self.bytes[self.pos]),
            });
        }
        Ok(Some(value))
    }

    fn ascii_uint(&mut self, field: &str) -> Result<usize> {
        self.try_ascii_uint()?.ok_or(Error::MalformedHeader {
            offset: self.pos,
            reason: format!("missing {field}"),
        })
    }

    fn single_whitespace(&mut self) -> Result<()> {
        if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::MalformedHeader {
                offset: self.pos,
                reason: "expected single whitespace byte before payload".into(),
            })
        }
    }
}
