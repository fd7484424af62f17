//! Binary PPM (`P6`) and PGM (`P5`) with maxval 255.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Interleaved 8-bit RGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(RgbImage {
            width,
            height,
            pixels,
        })
    }

    /// Channel-planar `[3,H,W]` tensor with values `byte / 255`.
    pub fn to_tensor(&self) -> Tensor {
        let plane = self.width * self.height;
        let mut data = vec![0.0; 3 * plane];
        for (i, px) in self.pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + i] = f64::from(px[c]) / 255.0;
            }
        }
        Tensor::from_parts(vec![3, self.height, self.width], data)
    }

    /// Inverse of [`Self::to_tensor`]; values are clamped to [0,1] and rounded.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let &[3, height, width] = t.shape() else {
            return Err(Error::shape("from_tensor", format!("expected [3,H,W], got {:?}", t.shape())));
        };
        let plane = width * height;
        let mut pixels = Vec::with_capacity(3 * plane);
        for i in 0..plane {
            for c in 0..3 {
                let v = t.data()[c * plane + i].clamp(0.0, 1.0);
                pixels.push((v * 255.0).round() as u8);
            }
        }
        Ok(RgbImage {
            width,
            height,
            pixels,
        })
    }
}

struct Header {
    width: usize,
    height: usize,
    data_offset: usize,
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<Header> {
    let err = |offset: usize, msg: &str| Error::Decode {
        offset,
        msg: msg.to_string(),
    };
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(err(0, &format!("expected magic {}", String::from_utf8_lossy(magic))));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments between tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(err(pos, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(err(pos, "expected decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| err(start, "header field out of range"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(err(pos, "missing whitespace after maxval")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(err(2, "zero image dimension"));
    }
    if maxval != 255 {
        return Err(err(pos - 1, "only maxval 255 is supported"));
    }
    Ok(Header {
        width,
        height,
        data_offset: pos,
    })
}

fn payload<'a>(bytes: &'a [u8], h: &Header, channels: usize) -> Result<&'a [u8]> {
    let need = h.width * h.height * channels;
    let available = bytes.len() - h.data_offset;
    if available < need {
        return Err(Error::Decode {
            offset: bytes.len(),
            msg: format!("truncated payload: {need} bytes expected, {available} present"),
        });
    }
    Ok(&bytes[h.data_offset..h.data_offset + need])
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let h = parse_header(bytes, b"P6")?;
    let pixels = payload(bytes, &h, 3)?.to_vec();
    RgbImage::new(h.width, h.height, pixels)
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6 {} {} 255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

/// Returns `(width, height, gray bytes)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let h = parse_header(bytes, b"P5")?;
    Ok((h.width, h.height, payload(bytes, &h, 1)?.to_vec()))
}

pub fn encode_pgm(width: usize, height: usize, gray: &[u8]) -> Result<Vec<u8>> {
    if gray.len() != width * height {
        return Err(Error::invalid(format!(
            "{width}x{height} PGM needs {} bytes, got {}",
            width * height,
            gray.len()
        )));
    }
    let mut out = format!("P5 {width} {height} 255\n").into_bytes();
    out.extend_from_slice(gray);
    Ok(out)
}

/// Reads a `P6` file into a `[3,H,W]` tensor in [0,1].
pub fn load_image(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_ppm(&bytes)?.to_tensor())
}

pub fn save_image(path: &Path, img: &RgbImage) -> Result<()> {
    std::fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn red_pixel() {
        let t = decode_ppm(b"P6 1 1 255\n\xff\x00\x00").unwrap().to_tensor();
        assert_eq!(t.shape(), &[3, 1, 1]);
        assert_eq!(t.data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn header_comments_and_newlines() {
        let img = decode_ppm(b"P6\n# made by hand\n2 1\n255\n\x01\x02\x03\x04\x05\x06").unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.pixels, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn truncated_payload_reports_offset() {
        match decode_ppm(b"P6 2 2 255\n\x00\x00\x00") {
            Err(Error::Decode { offset, msg }) => {
                assert_eq!(offset, 14);
                assert!(msg.contains("truncated"));
            }
            other => panic!("expected decode error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_magic() {
        assert!(matches!(
            decode_ppm(b"P3 1 1 255\n0 0 0"),
            Err(Error::Decode { offset: 0, .. })
        ));
        assert!(decode_ppm(b"P6 1 1 65535\n\0\0\0\0\0\0").is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let bytes = encode_pgm(3, 1, &[0, 128, 255]).unwrap();
        assert!(bytes.starts_with(b"P5 3 1 255\n"));
        assert_eq!(decode_pgm(&bytes).unwrap(), (3, 1, vec![0, 128, 255]));
    }

    proptest! {
        #[test]
        fn ppm_and_tensor_round_trip(w in 1usize..9, h in 1usize..9, seed in any::<u64>()) {
            let pixels: Vec<u8> = (0..w * h * 3)
                .map(|i| (seed.wrapping_mul(6364136223846793005).wrapping_add((i as u64).wrapping_mul(1442695040888963407)) >> 56) as u8)
                .collect();
            let img = RgbImage::new(w, h, pixels).unwrap();
            let decoded = decode_ppm(&encode_ppm(&img)).unwrap();
            prop_assert_eq!(&decoded, &img);
            prop_assert_eq!(RgbImage::from_tensor(&decoded.to_tensor()).unwrap(), img);
        }
    }
}
