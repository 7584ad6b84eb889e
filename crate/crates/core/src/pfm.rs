//! Portable float map (PFM) reading and writing.
//!
//! Only single-channel `Pf` maps are produced. Samples are 32-bit floats in
//! little-endian order (negative scale in the header), stored bottom row
//! first as the format requires. In-memory images are `[row, col]` with row 0
//! at the top. Invalid pixels are written as NaN.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Encode an image as a little-endian grayscale PFM byte buffer.
pub fn encode(image: &Array2<f64>) -> Vec<u8> {
    let (rows, cols) = image.dim();
    let mut out = format!("Pf\n{cols} {rows}\n-1.0\n").into_bytes();
    out.reserve(rows * cols * 4);
    for r in (0..rows).rev() {
        for c in 0..cols {
            out.extend_from_slice(&(image[[r, c]] as f32).to_le_bytes());
        }
    }
    out
}

/// Encode an image with invalid pixels replaced by NaN.
pub fn encode_masked(image: &Array2<f64>, valid: &Array2<bool>) -> Vec<u8> {
    let masked = ndarray::Zip::from(image)
        .and(valid)
        .map_collect(|&v, &ok| if ok { v } else { f64::NAN });
    encode(&masked)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

/// Decode a PFM buffer. Three-channel `PF` maps are reduced to their first channel.
pub fn decode(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut pos = 0;
    let header_err = |what: &str| Error::parse("PFM header", what.to_string());
    let magic = next_token(bytes, &mut pos).ok_or_else(|| header_err("missing magic"))?;
    let channels = match magic {
        b"Pf" => 1,
        b"PF" => 3,
        _ => return Err(header_err("magic must be `Pf` or `PF`")),
    };
    let mut number = |what: &str| -> Result<String> {
        let tok = next_token(bytes, &mut pos).ok_or_else(|| header_err(what))?;
        Ok(String::from_utf8_lossy(tok).into_owned())
    };
    let cols: usize = number("missing width")?
        .parse()
        .map_err(|_| header_err("bad width"))?;
    let rows: usize = number("missing height")?
        .parse()
        .map_err(|_| header_err("bad height"))?;
    let scale: f64 = number("missing scale")?
        .parse()
        .map_err(|_| header_err("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(header_err("scale must be nonzero"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let little = scale < 0.0;
    let need = rows * cols * channels * 4;
    let data = bytes.get(pos..pos + need).ok_or_else(|| {
        Error::parse(
            "PFM raster",
            format!("expected {need} bytes, found {}", bytes.len().saturating_sub(pos)),
        )
    })?;
    let mut image = Array2::zeros((rows, cols));
    for (i, chunk) in data.chunks_exact(4 * channels).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let r = rows - 1 - i / cols;
        image[[r, i % cols]] = f64::from(v);
    }
    Ok(image)
}

pub fn write(path: impl AsRef<Path>, image: &Array2<f64>) -> Result<()> {
    write_bytes(path.as_ref(), &encode(image))
}

pub fn write_masked(path: impl AsRef<Path>, image: &Array2<f64>, valid: &Array2<bool>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_masked(image, valid))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
