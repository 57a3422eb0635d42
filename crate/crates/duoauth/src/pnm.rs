//! Binary PGM (P5) and PPM (P6) images.

use duoauth_core::face::Image;

use crate::error::{Error, Result};

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad PNM {what}")))
    }
}

pub fn parse_pnm(bytes: &[u8]) -> Result<Image> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some([b'P', b'1'..=b'4' | b'7']) => {
            return Err(Error::Unsupported("only binary P5/P6 images are accepted".into()));
        }
        _ => return Err(Error::Format("not a PNM image".into())),
    };
    let mut c = Cursor { bytes, pos: 2 };
    let width = c.number("width")?;
    let height = c.number("height")?;
    let maxval = c.number("maxval")?;
    if width == 0 || height == 0 || !(1..=65535).contains(&maxval) {
        return Err(Error::Format(format!("bad PNM header {width}×{height}, maxval {maxval}")));
    }
    if !bytes.get(c.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("PNM header not followed by whitespace".into()));
    }
    let data = &bytes[c.pos + 1..];
    let per_sample = if maxval > 255 { 2 } else { 1 };
    let n = width * height * channels;
    if data.len() < n * per_sample {
        return Err(Error::Format(format!("PNM raster holds {} bytes, need {}", data.len(), n * per_sample)));
    }
    let scale = maxval as f64;
    let pixels = if per_sample == 1 {
        data[..n].iter().map(|&v| v as f64 / scale).collect()
    } else {
        data[..2 * n].chunks_exact(2).map(|p| u16::from_be_bytes([p[0], p[1]]) as f64 / scale).collect()
    };
    Ok(Image::new(height, width, channels, pixels)?)
}

/// 8-bit P6 (or P5 for single-channel images).
pub fn write_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.channels() == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}
