//! Portable float map codec.
//!
//! Layout: `PF` (RGB) or `Pf` (gray), whitespace, `width height`,
//! whitespace, a scale whose sign gives the byte order (negative: little
//! endian), one whitespace byte, then `width * height * channels` 32-bit
//! floats with the bottom row first.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::FluxImage;

/// Decoded image and the number of negative samples that were clamped to 0.
pub fn decode_pfm(bytes: &[u8]) -> Result<(FluxImage, usize)> {
    let mut pos = 0;
    let mut token = |what: &str| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos || start > 64 * 1024 {
            return Err(Error::Pfm(format!("missing {what}")));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let channels = match token("magic")?.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::Pfm(format!("bad magic {other:?}"))),
    };
    let dim = |s: String, what: &str| -> Result<usize> {
        match s.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::Pfm(format!("bad {what} {s:?}"))),
        }
    };
    let width = dim(token("width")?, "width")?;
    let height = dim(token("height")?, "height")?;
    let scale_text = token("scale")?;
    let scale: f64 = scale_text
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| Error::Pfm(format!("bad scale {scale_text:?}")))?;
    // exactly one whitespace byte separates the header from the payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Pfm("truncated header".into()));
    }
    let payload = &bytes[pos + 1..];
    let samples = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Pfm("dimensions overflow".into()))?;
    if payload.len() < samples * 4 {
        return Err(Error::Pfm(format!(
            "truncated payload: {} of {} bytes",
            payload.len(),
            samples * 4
        )));
    }
    let little = scale < 0.0;
    let row_len = width * channels;
    let mut data = vec![0.0f64; samples];
    let mut clamped = 0;
    for (i, chunk) in payload[..samples * 4].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        if !v.is_finite() {
            return Err(Error::Pfm(format!("non-finite sample at offset {i}")));
        }
        let file_row = i / row_len;
        let dst = (height - 1 - file_row) * row_len + i % row_len;
        data[dst] = if v < 0.0 {
            clamped += 1;
            0.0
        } else {
            v as f64
        };
    }
    Ok((FluxImage::new(width, height, channels, data)?, clamped))
}

/// Little-endian PFM (scale `-1.0`), top row of `img` written last.
pub fn encode_pfm<W: Write>(img: &FluxImage, mut out: W) -> std::io::Result<()> {
    let magic = if img.channels() == 3 { "PF" } else { "Pf" };
    write!(out, "{magic}\n{} {}\n-1.0\n", img.width(), img.height())?;
    let row_len = img.width() * img.channels();
    let mut buf = Vec::with_capacity(img.data().len() * 4);
    for row in img.data().chunks_exact(row_len).rev() {
        for &v in row {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)
}

/// Reads a PFM file. Negative samples become 0 and are reported with a warning.
pub fn load_flux_image(path: impl AsRef<Path>) -> Result<FluxImage> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let (img, clamped) = decode_pfm(&bytes)?;
    if clamped > 0 {
        log::warn!("{}: clamped {clamped} negative samples to 0", path.display());
    }
    Ok(img)
}

pub fn save_flux_image(img: &FluxImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    encode_pfm(img, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}
