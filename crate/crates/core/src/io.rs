//! File formats: the LF5D container, 8-bit PGM and raw little-endian f32.
//!
//! LF5D layout (little-endian):
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 4     | magic `LF5D`                              |
//! | 2     | version `u16` = 1                         |
//! | 20    | `u32` dims: n_u, n_v, n_x, n_y, n_t        |
//! | 4·N   | `f32` payload in `(t, v, u, y, x)` order  |

use crate::lf::{CodedImage, Dims, LightField5D};
use crate::{Error, Result};
use std::fs;
use std::path::Path;

pub const LF5D_MAGIC: [u8; 4] = *b"LF5D";
pub const LF5D_VERSION: u16 = 1;
const LF5D_HEADER: usize = 4 + 2 + 5 * 4;

pub fn encode_lf5d(lf: &LightField5D) -> Vec<u8> {
    let d = lf.dims();
    let mut out = Vec::with_capacity(LF5D_HEADER + 4 * d.len());
    out.extend_from_slice(&LF5D_MAGIC);
    out.extend_from_slice(&LF5D_VERSION.to_le_bytes());
    for n in [d.n_u, d.n_v, d.n_x, d.n_y, d.n_t] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for v in lf.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decoded field plus the number of samples outside `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lf5dRead {
    pub field: LightField5D,
    pub out_of_range: usize,
}

pub fn decode_lf5d(bytes: &[u8]) -> Result<Lf5dRead> {
    if bytes.len() < 4 {
        return Err(Error::Truncated { expected: LF5D_HEADER, found: bytes.len() });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != LF5D_MAGIC {
        return Err(Error::BadMagic { expected: LF5D_MAGIC, found: magic });
    }
    if bytes.len() < LF5D_HEADER {
        return Err(Error::Truncated { expected: LF5D_HEADER, found: bytes.len() });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != LF5D_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().unwrap()) as usize;
    let dims = Dims { n_u: dim(0), n_v: dim(1), n_x: dim(2), n_y: dim(3), n_t: dim(4) };
    dims.validate()?;
    let expected = LF5D_HEADER + 4 * dims.len();
    if bytes.len() < expected {
        return Err(Error::Truncated { expected, found: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(Error::DimensionMismatch(format!(
            "header dims {dims:?} account for {expected} bytes but file has {}",
            bytes.len()
        )));
    }
    let data: Vec<f32> = bytes[LF5D_HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let field = LightField5D::new(dims, data)?;
    let out_of_range = field.out_of_range_count();
    Ok(Lf5dRead { field, out_of_range })
}

pub fn write_lf5d(lf: &LightField5D, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_lf5d(lf))?;
    Ok(())
}

/// Reads an LF5D file. Values outside `[0, 1]` are kept; their count is
/// logged as a warning.
pub fn read_lf5d(path: impl AsRef<Path>) -> Result<LightField5D> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let read = decode_lf5d(&fs::read(path)?)?;
    if read.out_of_range > 0 {
        log::warn!("{}: {} samples outside [0, 1]", path.display(), read.out_of_range);
    }
    Ok(read.field)
}

/// Binary 8-bit greyscale PGM; values are clamped to `[0, 1]` and scaled by 255.
pub fn encode_pgm(width: usize, height: usize, data: &[f32]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, data: &[f32]) -> Result<()> {
    if data.len() != width * height {
        return Err(Error::DimensionMismatch(format!("{width}x{height} PGM from {} values", data.len())));
    }
    fs::write(path, encode_pgm(width, height, data))?;
    Ok(())
}

/// Parses a P5 PGM with maxval 255 into `(width, height, values in [0, 1])`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Truncated { expected: 4, found: fields.len() });
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        let mut found = [0u8; 4];
        for (d, s) in found.iter_mut().zip(fields[0].bytes()) {
            *d = s;
        }
        return Err(Error::BadMagic { expected: *b"P5\0\0", found });
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::InvalidArgument(format!("bad PGM header field {s:?}")));
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(Error::InvalidArgument(format!("only 8-bit PGM supported, maxval {maxval}")));
    }
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() < w * h {
        return Err(Error::Truncated { expected: w * h, found: payload.len() });
    }
    Ok((w, h, payload[..w * h].iter().map(|&b| b as f32 / 255.0).collect()))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f32>)> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    decode_pgm(&fs::read(path)?)
}

pub fn write_raw_f32(path: impl AsRef<Path>, data: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_raw_f32(path: impl AsRef<Path>) -> Result<Vec<f32>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Truncated { expected: bytes.len().div_ceil(4) * 4, found: bytes.len() });
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Writes an image scaled by `gain` (difference maps use ×3).
pub fn write_image_pgm(path: impl AsRef<Path>, img: &CodedImage, gain: f32) -> Result<()> {
    let data: Vec<f32> = img.data.iter().map(|v| v * gain).collect();
    write_pgm(path, img.n_x, img.n_y, &data)
}
