//! Image input: binary PPM (P6) decoding plus seeded synthetic images.
//!
//! Pixel values are mapped to [0, 1] by dividing by the PPM maxval.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

/// Decode a binary P6 PPM into an H x W x 3 tensor with values in [0, 1].
/// Only single-byte samples (maxval <= 255) are supported.
pub fn read_ppm(r: &mut impl Read) -> Result<Tensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0usize;

    let magic = take_token(&bytes, &mut pos).ok_or_else(|| format_err(1, "missing PPM magic"))?;
    if magic != b"P6" {
        return Err(format_err(
            1,
            format!(
                "expected magic P6, got {:?}",
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let width = parse_dim(&bytes, &mut pos, "width")?;
    let height = parse_dim(&bytes, &mut pos, "height")?;
    let maxval = parse_dim(&bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(format_err(1, format!("unsupported maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let want = width * height * 3;
    let raster = bytes
        .get(pos..pos + want)
        .ok_or_else(|| format_err(1, format!("raster truncated: want {want} bytes")))?;
    let scale = 1.0 / maxval as f64;
    let data: Vec<f64> = raster.iter().map(|&b| b as f64 * scale).collect();
    Tensor::new(vec![height, width, 3], data)
}

pub fn read_ppm_file(path: &Path) -> Result<Tensor> {
    let mut f = std::fs::File::open(path)?;
    read_ppm(&mut f)
}

/// Encode an H x W x 3 tensor with values in [0, 1] as binary P6,
/// maxval 255, rounding to nearest.
pub fn write_ppm(w: &mut impl std::io::Write, img: &Tensor) -> Result<()> {
    if img.rank() != 3 || img.shape()[2] != 3 {
        return Err(Error::InvalidDimensions {
            dims: img.shape().to_vec(),
            reason: "write_ppm expects H x W x 3".into(),
        });
    }
    let (h, ww) = (img.shape()[0], img.shape()[1]);
    write!(w, "P6\n{ww} {h}\n255\n")?;
    let raster: Vec<u8> = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    w.write_all(&raster)?;
    Ok(())
}

fn take_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    // Skip whitespace and `#` comments.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    if *pos >= bytes.len() {
        return None;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    Some(&bytes[start..*pos])
}

fn parse_dim(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = take_token(bytes, pos).ok_or_else(|| format_err(1, format!("missing {what}")))?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format_err(1, format!("bad {what}")))
}

fn format_err(line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        line,
        message: message.into(),
    }
}

/// Seeded noise image: uniform [0, 1) values drawn in row-major order.
pub fn synthetic_noise(side: usize, seed: u64) -> Tensor {
    let mut rng = Rng::derive(seed, "synthetic-noise");
    let data: Vec<f64> = (0..side * side * 3).map(|_| rng.next_f64()).collect();
    Tensor::new(vec![side, side, 3], data).expect("side >= 1")
}

/// Deterministic ramp image: value(y, x, c) = (y + x + c) / (2 (side-1) + 2).
pub fn synthetic_ramp(side: usize) -> Tensor {
    let denom = (2 * side.saturating_sub(1) + 2) as f64;
    Tensor::from_fn(vec![side, side, 3], |ix| {
        (ix[0] + ix[1] + ix[2]) as f64 / denom
    })
    .expect("side >= 1")
}
