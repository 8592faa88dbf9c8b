//! Binary greyscale PGM (P5, maxval 255) images and {0,255} masks.

use std::path::Path;

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, GrayImage};

pub fn encode(height: usize, width: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), height * width, "pixel count must match shape");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Parses a P5 file into `(height, width, pixels)`.
pub fn decode(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments before each header token
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(bad("expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("header field out of range"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    if width == 0 || height == 0 {
        return Err(bad("zero image dimension"));
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(bad("missing whitespace after maxval"));
    }
    pos += 1;
    let data = &bytes[pos..];
    if data.len() != width * height {
        return Err(bad(&format!(
            "expected {} pixel bytes, found {}",
            width * height,
            data.len()
        )));
    }
    Ok((height, width, data.to_vec()))
}

pub fn read(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn write(path: &Path, height: usize, width: usize, pixels: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode(height, width, pixels)).map_err(|e| Error::io(path, e))
}

pub fn image_to_bytes(img: &GrayImage) -> Vec<u8> {
    img.data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

pub fn write_image(path: &Path, img: &GrayImage) -> Result<()> {
    write(path, img.height(), img.width(), &image_to_bytes(img))
}

pub fn read_image(path: &Path) -> Result<GrayImage> {
    let (h, w, px) = read(path)?;
    GrayImage::new(h, w, px.into_iter().map(|b| b as f64 / 255.0).collect())
}

pub fn write_mask(path: &Path, m: &BinaryMask) -> Result<()> {
    let px: Vec<u8> = m.data().iter().map(|&b| b * 255).collect();
    write(path, m.height(), m.width(), &px)
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let (h, w, px) = read(path)?;
    let data = px
        .into_iter()
        .map(|b| match b {
            0 => Ok(0),
            255 => Ok(1),
            other => Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("mask pixel {other} is neither 0 nor 255"),
            }),
        })
        .collect::<Result<Vec<u8>>>()?;
    BinaryMask::new(h, w, data)
}
