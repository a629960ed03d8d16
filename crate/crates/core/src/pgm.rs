//! Binary PGM (`P5`) images: 16-bit output, 8- or 16-bit input.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Encode an `[H,W]` image in [0,1] as 16-bit big-endian P5 (`round(v·65535)`,
/// values clamped to [0,1]).
pub fn encode_pgm16(image: &Tensor) -> Result<Vec<u8>> {
    let &[h, w] = image.shape() else {
        return Err(Error::Shape(format!(
            "PGM needs an [H,W] image, got {:?}",
            image.shape()
        )));
    };
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    out.reserve(2 * h * w);
    for &v in image.data() {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    Ok(out)
}

pub fn write_pgm16(path: impl AsRef<Path>, image: &Tensor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm16(image)?).map_err(|e| Error::io(path, e))
}

/// Decoded raw samples with their maxval.
#[derive(Clone, Debug, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl Pgm {
    /// Samples divided by maxval, as `[H,W]`.
    pub fn to_unit(&self) -> Tensor {
        let m = self.maxval as f64;
        Tensor::new(
            &[self.height, self.width],
            self.samples.iter().map(|&s| s as f64 / m).collect(),
        )
        .unwrap()
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Pgm> {
    let bad = |what: &str| Error::Format(format!("PGM: {what}"));
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(bad("only binary P5 is supported"));
    }
    let mut num =
        || -> Result<usize> { token()?.parse().map_err(|_| bad("malformed header number")) };
    let (width, height, maxval) = (num()?, num()?, num()?);
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(bad("invalid geometry or maxval"));
    }
    let data = bytes.get(pos + 1..).ok_or_else(|| bad("missing raster"))?;
    let n = width * height;
    let samples: Vec<u16> = if maxval < 256 {
        if data.len() != n {
            return Err(bad("raster length mismatch"));
        }
        data.iter().map(|&b| b as u16).collect()
    } else {
        if data.len() != 2 * n {
            return Err(bad("raster length mismatch"));
        }
        data.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Pgm> {
    let path = path.as_ref();
    decode_pgm(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_bit_round_trip() {
        let img = Tensor::new(&[2, 3], vec![0.0, 0.25, 0.5, 1.0, 1.5, -0.2]).unwrap();
        let bytes = encode_pgm16(&img).unwrap();
        assert!(bytes.starts_with(b"P5\n3 2\n65535\n"));
        let p = decode_pgm(&bytes).unwrap();
        assert_eq!(p.samples, vec![0, 16384, 32768, 65535, 65535, 0]);
        assert_eq!(p.to_unit().shape(), &[2, 3]);
    }

    #[test]
    fn eight_bit_with_comment() {
        let mut bytes = b"P5\n# roi\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 7, 0]);
        let p = decode_pgm(&bytes).unwrap();
        assert_eq!((p.width, p.height, p.maxval), (2, 2, 255));
        assert_eq!(p.samples, vec![0, 255, 7, 0]);
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
    }
}
