//! Decoders for NetPBM (P2, P3, P5, P6) and the raw `RAW8` format.
//!
//! `RAW8` layout, all integers little-endian:
//!
//! ```text
//! offset 0   4 bytes  ASCII "RAW8"
//! offset 4   u32      width
//! offset 8   u32      height
//! offset 12  u8       channels, 1 (gray) or 3 (RGB)
//! offset 13  width·height·channels bytes, rows top to bottom, pixels left
//!            to right, channels interleaved
//! ```
//!
//! No trailing bytes are allowed.

use std::path::Path;

use crate::error::{CectError, Result};

pub const RAW_MAGIC: &[u8; 4] = b"RAW8";

/// Decoded pixels scaled to `[0, 1]`, interleaved row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// 1 or 3.
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn pixel(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

fn bad(path: &Path, detail: impl Into<String>) -> CectError {
    CectError::Ingestion {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Decodes by magic bytes. `path` is only used in error messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Image> {
    if bytes.starts_with(RAW_MAGIC) {
        return decode_raw(bytes, path);
    }
    match bytes.get(..2) {
        Some(b"P2") => decode_pnm(bytes, path, 1, false),
        Some(b"P3") => decode_pnm(bytes, path, 3, false),
        Some(b"P5") => decode_pnm(bytes, path, 1, true),
        Some(b"P6") => decode_pnm(bytes, path, 3, true),
        _ => Err(bad(path, "unrecognized image format (expected P2, P3, P5, P6 or RAW8)")),
    }
}

pub fn read(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| CectError::io(path, e))?;
    decode(&bytes, path)
}

fn decode_raw(bytes: &[u8], path: &Path) -> Result<Image> {
    if bytes.len() < 13 {
        return Err(bad(path, "truncated RAW8 header"));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let channels = bytes[12] as usize;
    if channels != 1 && channels != 3 {
        return Err(bad(path, format!("RAW8 channel count {channels} is not 1 or 3")));
    }
    if width == 0 || height == 0 {
        return Err(bad(path, "zero image extent"));
    }
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| bad(path, "image extent overflow"))?;
    let body = &bytes[13..];
    if body.len() != n {
        return Err(bad(
            path,
            format!("RAW8 payload has {} bytes, expected {n}", body.len()),
        ));
    }
    Ok(Image {
        width,
        height,
        channels,
        data: body.iter().map(|&b| f32::from(b) / 255.0).collect(),
    })
}

/// Reads whitespace-separated header tokens, skipping `#` comments.
struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Tokens<'_> {
    fn next(&mut self) -> Option<&[u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.bytes.get(self.pos) == Some(&b'#') {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, path: &Path, what: &str) -> Result<usize> {
        let tok = self.next().ok_or_else(|| bad(path, format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(path, format!("invalid {what} `{}`", String::from_utf8_lossy(tok))))
    }
}

fn decode_pnm(bytes: &[u8], path: &Path, channels: usize, binary: bool) -> Result<Image> {
    let mut t = Tokens { bytes, pos: 2 };
    let width = t.number(path, "width")?;
    let height = t.number(path, "height")?;
    let maxval = t.number(path, "maxval")?;
    if width == 0 || height == 0 {
        return Err(bad(path, "zero image extent"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(bad(path, format!("maxval {maxval} outside 1..=65535")));
    }
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| bad(path, "image extent overflow"))?;
    let mut data = Vec::with_capacity(n);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let start = t.pos + 1;
        let wide = maxval > 255;
        let need = if wide { 2 * n } else { n };
        let body = bytes.get(start..).unwrap_or(&[]);
        if body.len() < need {
            return Err(bad(path, format!("raster has {} bytes, expected {need}", body.len())));
        }
        if wide {
            data.extend(
                body[..need]
                    .chunks_exact(2)
                    .map(|c| f32::from(u16::from_be_bytes([c[0], c[1]]))),
            );
        } else {
            data.extend(body[..need].iter().map(|&b| f32::from(b)));
        }
    } else {
        for i in 0..n {
            let v = t.number(path, &format!("sample {i}"))?;
            data.push(v as f32);
        }
    }
    if let Some(i) = data.iter().position(|&v| v > maxval as f32) {
        return Err(bad(path, format!("sample {i} exceeds maxval {maxval}")));
    }
    let maxval = maxval as f32;
    data.iter_mut().for_each(|v| *v /= maxval);
    Ok(Image {
        width,
        height,
        channels,
        data,
    })
}

/// Binary PGM (`channels == 1`) or PPM (`channels == 3`), maxval 255.
pub fn encode_pnm(width: usize, height: usize, channels: usize, pixels: &[u8]) -> Vec<u8> {
    assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
    assert_eq!(pixels.len(), width * height * channels, "pixel buffer size");
    let magic = if channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn encode_raw(width: usize, height: usize, channels: usize, pixels: &[u8]) -> Vec<u8> {
    assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
    assert_eq!(pixels.len(), width * height * channels, "pixel buffer size");
    let mut out = RAW_MAGIC.to_vec();
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    out.push(channels as u8);
    out.extend_from_slice(pixels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn ascii_formats_with_comments() {
        let pgm = b"P2\n# comment\n3 1\n# another\n4\n0 2 4\n";
        let img = decode(pgm, p()).unwrap();
        assert_eq!((img.width, img.height, img.channels), (3, 1, 1));
        assert_eq!(img.data, vec![0.0, 0.5, 1.0]);
        let ppm = b"P3 1 1 255 255 0 51";
        let img = decode(ppm, p()).unwrap();
        assert_eq!(img.data, vec![1.0, 0.0, 51.0 / 255.0]);
    }

    #[test]
    fn binary_formats_round_trip() {
        let px: Vec<u8> = (0..12).map(|i| i * 20).collect();
        let a = decode(&encode_pnm(2, 2, 3, &px), p()).unwrap();
        let b = decode(&encode_raw(2, 2, 3, &px), p()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pixel(1, 1, 2), 220.0 / 255.0);
        let g = decode(&encode_pnm(4, 3, 1, &px), p()).unwrap();
        assert_eq!((g.width, g.height, g.channels), (4, 3, 1));
    }

    #[test]
    fn sixteen_bit_pgm() {
        let mut bytes = b"P5 2 1 65535\n".to_vec();
        bytes.extend_from_slice(&[0xff, 0xff, 0x00, 0x00]);
        assert_eq!(decode(&bytes, p()).unwrap().data, vec![1.0, 0.0]);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        assert!(decode(b"P5 2 2 255\n\x00\x01", p()).is_err());
        assert!(decode(b"P2 2 1 3 1 9", p()).is_err());
        assert!(decode(b"GIF89a", p()).is_err());
        let mut raw = encode_raw(1, 1, 1, &[7]);
        raw.push(0);
        assert!(decode(&raw, p()).is_err());
        let mut raw = encode_raw(1, 1, 1, &[7]);
        raw[12] = 2;
        let err = decode(&raw, Path::new("x.raw")).unwrap_err().to_string();
        assert!(err.contains("x.raw"), "{err}");
    }
}
