//! Binary PGM/PPM encoding.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Grayscale image with intensities in `[0, 1]`.
pub type GrayImage = Grid<f64>;
pub type RgbImage = Grid<[u8; 3]>;

/// 16-bit binary PGM (`P5`, maxval 65535, big-endian samples).
pub fn encode_pgm16(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    out.reserve(img.len() * 2);
    for &v in img.data() {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

/// 8-bit binary PGM.
pub fn encode_pgm8(img: &Grid<u8>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

/// 8-bit binary PPM (`P6`).
pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.reserve(img.len() * 3);
    for px in img.data() {
        out.extend_from_slice(px);
    }
    out
}

fn header_fields(bytes: &[u8]) -> Result<([usize; 3], &[u8], [u8; 2])> {
    let magic = [*bytes.first().unwrap_or(&0), *bytes.get(1).unwrap_or(&0)];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::parse(0, "truncated PNM header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(0, "invalid PNM header field"))?;
    }
    // Exactly one whitespace byte separates the header from the samples.
    Ok((fields, bytes.get(pos + 1..).unwrap_or(&[]), magic))
}

/// Decodes binary PGM (8/16-bit) or PPM (8-bit, converted to luma) into a
/// `[0, 1]` grayscale image.
pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage> {
    let ([w, h, maxval], body, magic) = header_fields(bytes)?;
    let channels = match &magic {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(Error::parse(0, "unsupported PNM type (expected P5 or P6)")),
    };
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(0, format!("invalid maxval {maxval}")));
    }
    let bps = if maxval > 255 { 2 } else { 1 };
    let need = w * h * channels * bps;
    if body.len() < need {
        return Err(Error::parse(0, format!("expected {need} sample bytes, found {}", body.len())));
    }
    let sample = |i: usize| -> f64 {
        let v = if bps == 2 {
            u16::from_be_bytes([body[2 * i], body[2 * i + 1]]) as f64
        } else {
            body[i] as f64
        };
        v / maxval as f64
    };
    let data = (0..w * h)
        .map(|p| {
            if channels == 1 {
                sample(p)
            } else {
                0.299 * sample(3 * p) + 0.587 * sample(3 * p + 1) + 0.114 * sample(3 * p + 2)
            }
        })
        .collect();
    Grid::from_vec(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm16_round_trip() {
        let img = Grid::from_fn(5, 3, |x, y| (x + 5 * y) as f64 / 14.0);
        let back = decode_gray(&encode_pgm16(&img)).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 65535.0);
        }
    }

    #[test]
    fn header_with_comment() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        let img = decode_gray(&bytes).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn rejects_truncated_and_unknown() {
        assert!(decode_gray(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_gray(b"P2\n1 1\n255\n0").is_err());
    }
}
