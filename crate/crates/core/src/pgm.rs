//! Binary 8-bit PGM (P5) images and column-stacked plaintext vectors.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major samples.
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, maxval: u16, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::Format(format!(
                "{width}x{height} image needs {} samples, got {}",
                width * height,
                pixels.len()
            )));
        }
        if maxval == 0 || maxval > 255 {
            return Err(Error::Format(format!("only 8-bit PGM is supported, maxval {maxval}")));
        }
        if pixels.iter().any(|&p| p as u16 > maxval) {
            return Err(Error::Format("sample exceeds maxval".into()));
        }
        Ok(Self {
            width,
            height,
            maxval,
            pixels,
        })
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut fields = [0usize; 3];
        if bytes.len() < 2 || &bytes[..2] != b"P5" {
            return Err(Error::Format("not a binary PGM (missing P5)".into()));
        }
        pos += 2;
        for field in fields.iter_mut() {
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                            pos += 1;
                        }
                    }
                    _ => break,
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                pos += 1;
            }
            *field = std::str::from_utf8(&bytes[start..pos])
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format("malformed PGM header".into()))?;
        }
        if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(Error::Format("malformed PGM header".into()));
        }
        pos += 1;
        let [width, height, maxval] = fields;
        if maxval > 255 {
            return Err(Error::Format(format!("only 8-bit PGM is supported, maxval {maxval}")));
        }
        let len = width * height;
        if bytes.len() < pos + len {
            return Err(Error::Format(format!(
                "PGM data truncated: need {len} samples, have {}",
                bytes.len() - pos
            )));
        }
        Self::new(width, height, maxval as u16, bytes[pos..pos + len].to_vec())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Stack the columns: `x[c * height + r] = pixel(r, c)`.
    pub fn to_column_stacked(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.width * self.height];
        for r in 0..self.height {
            for c in 0..self.width {
                x[c * self.height + r] = self.pixels[r * self.width + c] as f64;
            }
        }
        x
    }

    /// Inverse of [`to_column_stacked`](Self::to_column_stacked), rounding and clamping to `0..=maxval`.
    pub fn from_column_stacked(x: &[f64], width: usize, height: usize, maxval: u16) -> Result<Self> {
        if x.len() != width * height {
            return Err(Error::Argument(format!(
                "vector of length {} cannot fill {width}x{height}",
                x.len()
            )));
        }
        let mut pixels = vec![0u8; width * height];
        for r in 0..height {
            for c in 0..width {
                pixels[r * width + c] = quantize(x[c * height + r], maxval);
            }
        }
        Self::new(width, height, maxval, pixels)
    }
}

/// Round to the nearest level in `0..=maxval`.
pub fn quantize(v: f64, maxval: u16) -> u8 {
    if v.is_nan() {
        return 0;
    }
    v.round().clamp(0.0, maxval as f64) as u8
}

/// Linear rescale of arbitrary values onto `0..=255`, for display only.
pub fn visualize(values: &[f64], width: usize, height: usize) -> Result<GrayImage> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels = values.iter().map(|v| quantize((v - lo) / span * 255.0, 255)).collect();
    GrayImage::new(width, height, 255, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let img = GrayImage::new(3, 2, 200, vec![0, 1, 2, 3, 4, 200]).unwrap();
        let bytes = img.to_bytes();
        assert!(bytes.starts_with(b"P5\n3 2\n200\n"));
        assert_eq!(GrayImage::parse(&bytes).unwrap(), img);
    }

    #[test]
    fn parses_comments() {
        let mut bytes = b"P5 # made by hand\n2 # w\n2\n255\n".to_vec();
        bytes.extend_from_slice(&[9, 8, 7, 6]);
        let img = GrayImage::parse(&bytes).unwrap();
        assert_eq!((img.width, img.height, img.pixels[3]), (2, 2, 6));
    }

    #[test]
    fn rejects_malformed() {
        assert!(GrayImage::parse(b"P2\n1 1\n255\n0").is_err());
        assert!(GrayImage::parse(b"P5\n2 2\n255\n\x00").is_err());
        assert!(GrayImage::parse(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }

    #[test]
    fn column_stacking() {
        let img = GrayImage::new(2, 3, 255, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let x = img.to_column_stacked();
        assert_eq!(x, vec![1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
        assert_eq!(GrayImage::from_column_stacked(&x, 2, 3, 255).unwrap(), img);
        let noisy: Vec<f64> = x.iter().map(|v| v + 0.3).collect();
        assert_eq!(GrayImage::from_column_stacked(&noisy, 2, 3, 255).unwrap(), img);
        assert_eq!(quantize(-4.0, 255), 0);
        assert_eq!(quantize(300.0, 255), 255);
    }
}
