//! 8-bit grayscale images and the PGM (netpbm P2/P5) format.
//!
//! Other formats can be converted beforehand, e.g.
//! `convert in.jpg -colorspace Gray -depth 8 out.pgm` (ImageMagick).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Divisor mapping 8-bit pixels to `[0, 1]` network inputs.
pub const PIXEL_SCALE: f32 = 255.0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::input(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, v: u8) -> Self {
        GrayImage {
            width,
            height,
            data: vec![v; width * height],
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// `(1, 1, h, w)` tensor with pixels divided by [`PIXEL_SCALE`].
    pub fn to_tensor(&self) -> Tensor4 {
        let data = self.data.iter().map(|&v| v as f32 / PIXEL_SCALE).collect();
        Tensor4::new([1, 1, self.height, self.width], data).expect("image dims are non-zero")
    }

    /// Zero-pad on the right and bottom to `height × width` (no-op if already larger).
    pub fn pad_to(&self, height: usize, width: usize) -> GrayImage {
        let (h, w) = (height.max(self.height), width.max(self.width));
        if (h, w) == (self.height, self.width) {
            return self.clone();
        }
        let mut out = GrayImage::filled(w, h, 0);
        for y in 0..self.height {
            out.data[y * w..y * w + self.width]
                .copy_from_slice(&self.data[y * self.width..(y + 1) * self.width]);
        }
        out
    }

    pub fn crop(&self, top: usize, left: usize, rows: usize, cols: usize) -> GrayImage {
        let mut out = GrayImage::filled(cols, rows, 0);
        for r in 0..rows.min(self.height.saturating_sub(top)) {
            let n = cols.min(self.width.saturating_sub(left));
            let src = (top + r) * self.width + left;
            out.data[r * cols..r * cols + n].copy_from_slice(&self.data[src..src + n]);
        }
        out
    }

    pub fn flip_horizontal(&self) -> GrayImage {
        let mut out = self.clone();
        for row in out.data.chunks_mut(self.width) {
            row.reverse();
        }
        out
    }
}

struct Header {
    binary: bool,
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(Error::input("not a PGM file (expected P2 or P5 magic)")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::input("PGM header is truncated")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::input("PGM header has a malformed number"))?;
    }
    // Exactly one whitespace byte separates the header from binary data.
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::input("PGM header is truncated"));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::input(format!(
            "unsupported PGM geometry {width}x{height} maxval {maxval}"
        )));
    }
    Ok(Header {
        binary,
        width,
        height,
        maxval,
        data_start: pos + 1,
    })
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let h = parse_header(bytes)?;
    let n = h.width * h.height;
    let raw: Vec<usize> = if h.binary {
        let body = &bytes[h.data_start..];
        if h.maxval < 256 {
            body.get(..n)
                .ok_or_else(|| Error::input("PGM pixel data is truncated"))?
                .iter()
                .map(|&b| b as usize)
                .collect()
        } else {
            body.get(..2 * n)
                .ok_or_else(|| Error::input("PGM pixel data is truncated"))?
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as usize)
                .collect()
        }
    } else {
        let text = std::str::from_utf8(&bytes[h.data_start..])
            .map_err(|_| Error::input("ASCII PGM contains non-text data"))?;
        let vals = text
            .split_ascii_whitespace()
            .take(n)
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::input(format!("bad PGM sample '{t}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        if vals.len() < n {
            return Err(Error::input("PGM pixel data is truncated"));
        }
        vals
    };
    let data = raw
        .into_iter()
        .map(|v| ((v.min(h.maxval) * 255 + h.maxval / 2) / h.maxval) as u8)
        .collect();
    GrayImage::new(h.width, h.height, data)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    decode_pgm(&fs::read(path)?).map_err(|e| match e {
        Error::Input(m) => Error::Input(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Dimensions only, without decoding pixels.
pub fn pgm_dims(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let h = parse_header(&fs::read(path)?)?;
    Ok((h.height, h.width))
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}
