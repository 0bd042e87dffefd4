//! FGRID container: `FGRD\n`, a one-line JSON header, `\n`, then
//! `h*w*d` little-endian `f32` values in `(y, x, channel)` order.
//!
//! Values are computed in `f64` and narrowed to `f32` on write.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{FeatureGrid, GridError};

pub const MAGIC: &[u8; 4] = b"FGRD";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("missing FGRD magic")]
    BadMagic,
    #[error("header: {0}")]
    HeaderParse(String),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    PayloadTruncated { expected: usize, found: usize },
    #[error("{0} unexpected bytes after payload")]
    TrailingData(usize),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    h: usize,
    w: usize,
    d: usize,
    dtype: String,
}

pub fn write_fgrid(grid: &FeatureGrid) -> Vec<u8> {
    let header = Header {
        h: grid.height(),
        w: grid.width(),
        d: grid.channels(),
        dtype: "f32".into(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(MAGIC.len() + json.len() + 2 + grid.data().len() * 4);
    out.extend_from_slice(MAGIC);
    out.push(b'\n');
    out.extend_from_slice(&json);
    out.push(b'\n');
    for &v in grid.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn read_fgrid(bytes: &[u8]) -> Result<FeatureGrid, FormatError> {
    let rest = bytes
        .strip_prefix(MAGIC.as_slice())
        .and_then(|r| r.strip_prefix(b"\n"))
        .ok_or(FormatError::BadMagic)?;
    let line_end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| FormatError::HeaderParse("header line is not terminated".into()))?;
    let header: Header = serde_json::from_slice(&rest[..line_end])
        .map_err(|e| FormatError::HeaderParse(e.to_string()))?;
    if header.dtype != "f32" {
        return Err(FormatError::HeaderParse(format!(
            "unsupported dtype {:?}",
            header.dtype
        )));
    }
    if header.h == 0 || header.w == 0 || header.d == 0 {
        return Err(FormatError::HeaderParse(format!(
            "dimensions must be positive, got {}x{}x{}",
            header.h, header.w, header.d
        )));
    }
    let expected = header
        .h
        .checked_mul(header.w)
        .and_then(|n| n.checked_mul(header.d))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| FormatError::HeaderParse("dimensions overflow".into()))?;
    let payload = &rest[line_end + 1..];
    if payload.len() < expected {
        return Err(FormatError::PayloadTruncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(FormatError::TrailingData(payload.len() - expected));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(FeatureGrid::new(header.h, header.w, header.d, data)?)
}
