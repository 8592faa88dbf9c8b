//! Parameter checkpoints: 16-byte header (`CSEGPARM`, version u32, count u32,
//! little-endian) followed by `count` little-endian f32 values.

use std::path::Path;

use super::Params;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CSEGPARM";
pub const VERSION: u32 = 1;

pub fn encode(params: &Params) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for &v in params.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Params> {
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing CSEGPARM header"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if bytes.len() != 16 + 4 * count {
        return Err(bad("payload length does not match count"));
    }
    Ok(Params(
        bytes[16..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    ))
}

pub fn save(params: &Params, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Params> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Rounds every parameter to f32, matching what a save/load cycle yields.
pub fn quantize(params: &Params) -> Params {
    Params(params.0.iter().map(|&v| v as f32 as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let bytes = encode(&Params(vec![1.0, -2.5]));
        assert_eq!(&bytes[..8], b"CSEGPARM");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 24);
    }

    #[test]
    fn decode_round_trips_and_rejects_garbage() {
        let p = Params(vec![0.125, -3.0, 7.5]);
        let path = Path::new("mem");
        assert_eq!(decode(&encode(&p), path).unwrap(), p);
        assert!(decode(b"NOTMAGIC\0\0\0\0\0\0\0\0", path).is_err());
        let mut truncated = encode(&p);
        truncated.pop();
        assert!(decode(&truncated, path).is_err());
    }
}
