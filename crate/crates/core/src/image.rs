//! 8-bit grayscale images and binary PGM (P5) I/O.

use std::io::{self, BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image buffer has {actual} bytes, expected {width}x{height}")]
    SizeMismatch {
        width: usize,
        height: usize,
        actual: usize,
    },
    #[error("not a binary PGM: {0}")]
    BadHeader(String),
    #[error("unsupported PGM maxval {0} (only 255 is supported)")]
    UnsupportedMaxval(u32),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if pixels.len() != width * height {
            return Err(ImageError::SizeMismatch {
                width,
                height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        if self.pixels.is_empty() {
            return 0.0;
        }
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }

    /// Encodes as `P5\n<w> <h>\n255\n` followed by raw bytes.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.pixels)
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() + 16);
        self.write_pgm(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Parses a binary PGM. Comment lines (`#`) in the header are skipped.
    pub fn read_pgm<R: BufRead>(mut r: R) -> Result<Self, ImageError> {
        let magic = next_token(&mut r)?;
        if magic != "P5" {
            return Err(ImageError::BadHeader(format!("magic {magic:?}")));
        }
        let width = parse_header_number(&next_token(&mut r)?)?;
        let height = parse_header_number(&next_token(&mut r)?)?;
        let maxval = parse_header_number(&next_token(&mut r)?)?;
        if maxval != 255 {
            return Err(ImageError::UnsupportedMaxval(maxval as u32));
        }
        let mut pixels = vec![0u8; width * height];
        r.read_exact(&mut pixels)?;
        Self::new(width, height, pixels)
    }

    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Self, ImageError> {
        Self::read_pgm(bytes)
    }
}

fn parse_header_number(tok: &str) -> Result<usize, ImageError> {
    tok.parse()
        .map_err(|_| ImageError::BadHeader(format!("expected a number, got {tok:?}")))
}

// Reads one whitespace-delimited header token and consumes exactly one
// trailing whitespace byte, which is what separates maxval from the raster.
fn next_token<R: BufRead>(r: &mut R) -> Result<String, ImageError> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(ImageError::BadHeader("unexpected end of header".into()));
        }
        let b = byte[0];
        if b == b'#' && tok.is_empty() {
            let mut discard = Vec::new();
            r.read_until(b'\n', &mut discard)?;
            continue;
        }
        if b.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(b);
        if tok.len() > 16 {
            return Err(ImageError::BadHeader("header token too long".into()));
        }
    }
    String::from_utf8(tok).map_err(|_| ImageError::BadHeader("non-ASCII header".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_is_canonical() {
        let img = GrayImage::filled(160, 120, 7);
        let bytes = img.to_pgm_bytes();
        assert!(bytes.starts_with(b"P5\n160 120\n255\n"));
        assert_eq!(bytes.len(), 15 + 160 * 120);
    }

    #[test]
    fn pgm_round_trip_with_comment() {
        let img = GrayImage::from_fn(5, 3, |x, y| (x * 10 + y) as u8);
        let mut bytes = b"P5\n# made by hand\n5 3\n255\n".to_vec();
        bytes.extend_from_slice(img.pixels());
        assert_eq!(GrayImage::from_pgm_bytes(&bytes).unwrap(), img);
        assert_eq!(GrayImage::from_pgm_bytes(&img.to_pgm_bytes()).unwrap(), img);
    }

    #[test]
    fn raster_starting_with_whitespace_byte_is_preserved() {
        let img = GrayImage::new(2, 1, vec![b'\n', b' ']).unwrap();
        assert_eq!(GrayImage::from_pgm_bytes(&img.to_pgm_bytes()).unwrap(), img);
    }

    #[test]
    fn rejects_ascii_pgm_and_16_bit() {
        assert!(matches!(
            GrayImage::from_pgm_bytes(b"P2\n1 1\n255\n0"),
            Err(ImageError::BadHeader(_))
        ));
        assert!(matches!(
            GrayImage::from_pgm_bytes(b"P5\n1 1\n65535\n\0\0"),
            Err(ImageError::UnsupportedMaxval(65535))
        ));
    }

    #[test]
    fn truncated_raster_is_io_error() {
        assert!(matches!(
            GrayImage::from_pgm_bytes(b"P5\n4 4\n255\nabc"),
            Err(ImageError::Io(_))
        ));
    }
}
