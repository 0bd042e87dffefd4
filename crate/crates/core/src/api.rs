//! Request and response bodies for the HTTP warp service.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::grid::Mask;
use crate::imageio::{mask_from_png, ImageError};
use crate::params::{DragSpec, PcddOverrides, PcddParams};
use crate::pipeline::Landing;
use crate::projection::Diagnostics;

const DATA_URL_PREFIX: &str = "data:image/png;base64,";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarpRequest {
    pub id: String,
    pub drags: DragSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PcddOverrides>,
}

impl WarpRequest {
    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    /// Defaults, then the spec's overrides, then the request's.
    pub fn effective_params(&self) -> PcddParams {
        let base = self.drags.params.apply(PcddParams::default());
        match &self.params {
            Some(o) => o.apply(base),
            None => base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpResponse {
    /// Base64 PNG.
    pub image_png: String,
    pub drags: Vec<Landing>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: String,
    pub h: usize,
    pub w: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

impl ErrorBody {
    pub fn new(error: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            error: error.into(),
            detail: detail.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MaskFieldError {
    #[error("mask is not valid base64: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Decodes an inline mask: base64 PNG, optionally as a `data:` URL.
pub fn decode_inline_mask(field: &str) -> Result<Mask, MaskFieldError> {
    let payload = field.strip_prefix(DATA_URL_PREFIX).unwrap_or(field);
    let bytes = STANDARD.decode(payload.trim())?;
    Ok(mask_from_png(&bytes)?)
}

pub fn encode_base64(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn decode_base64(text: &str) -> Result<Vec<u8>, base64::DecodeError> {
    STANDARD.decode(text)
}
