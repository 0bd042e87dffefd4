//! Drag parameters and the DragSpec JSON document.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::DragPair;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamsError {
    #[error("invalid parameter {name}: {detail}")]
    Invalid { name: &'static str, detail: String },
    #[error("drag spec: {0}")]
    Json(String),
}

fn invalid(name: &'static str, detail: impl Into<String>) -> ParamsError {
    ParamsError::Invalid {
        name,
        detail: detail.into(),
    }
}

/// Multiquadric shape parameter: a fixed value or derived from the control
/// point spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuSetting {
    Fixed(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl MuSetting {
    pub const AUTO: MuSetting = MuSetting::Auto(AutoTag::Auto);

    /// Resolves `auto` to the reciprocal of the mean pairwise distance among
    /// the control points, or 1 for a single point.
    pub fn resolve(&self, control_points: &[[f64; 3]]) -> f64 {
        match *self {
            MuSetting::Fixed(mu) => mu,
            MuSetting::Auto(_) => {
                let n = control_points.len();
                if n < 2 {
                    return 1.0;
                }
                let mut total = 0.0;
                let mut pairs = 0usize;
                for i in 0..n {
                    for j in i + 1..n {
                        let [a, b] = [control_points[i], control_points[j]];
                        total += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
                            + (a[2] - b[2]).powi(2))
                        .sqrt();
                        pairs += 1;
                    }
                }
                let mean = total / pairs as f64;
                if mean > 0.0 {
                    1.0 / mean
                } else {
                    1.0
                }
            }
        }
    }
}

/// Tunables of the depth-aware drag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcddParams {
    pub dp_min: f64,
    pub dp_max: f64,
    #[serde(rename = "d_O")]
    pub d_o: f64,
    pub d_shield: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mu: MuSetting,
    pub fixed_point_count: usize,
}

impl Default for PcddParams {
    fn default() -> Self {
        Self {
            dp_min: 0.0,
            dp_max: 63.0,
            d_o: 20.0,
            d_shield: 30.0,
            alpha: 0.7,
            beta: 0.7,
            mu: MuSetting::AUTO,
            fixed_point_count: 4,
        }
    }
}

impl PcddParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        if !(self.dp_min.is_finite() && self.dp_max.is_finite() && self.dp_max > self.dp_min) {
            return Err(invalid("dp_max", "dp_max must exceed dp_min"));
        }
        if !(self.d_shield >= 0.0) {
            return Err(invalid("d_shield", "must be non-negative"));
        }
        if !(self.d_o >= 0.0 && self.d_o.is_finite()) {
            return Err(invalid("d_O", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid("alpha", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(invalid("beta", "must lie in [0, 1]"));
        }
        if let MuSetting::Fixed(mu) = self.mu {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(invalid("mu", "must be positive or \"auto\""));
            }
        }
        Ok(())
    }
}

/// Partial parameter set; present fields replace the defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcddOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dp_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dp_max: Option<f64>,
    #[serde(rename = "d_O", skip_serializing_if = "Option::is_none")]
    pub d_o: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_shield: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<MuSetting>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_point_count: Option<usize>,
}

impl PcddOverrides {
    pub fn apply(&self, base: PcddParams) -> PcddParams {
        PcddParams {
            dp_min: self.dp_min.unwrap_or(base.dp_min),
            dp_max: self.dp_max.unwrap_or(base.dp_max),
            d_o: self.d_o.unwrap_or(base.d_o),
            d_shield: self.d_shield.unwrap_or(base.d_shield),
            alpha: self.alpha.unwrap_or(base.alpha),
            beta: self.beta.unwrap_or(base.beta),
            mu: self.mu.unwrap_or(base.mu),
            fixed_point_count: self.fixed_point_count.unwrap_or(base.fixed_point_count),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairJson {
    handle: [f64; 2],
    target: [f64; 2],
}

/// `{"pairs":[{"handle":[x,y],"target":[x,y]},...], "mask": "...", "params": {...}}`
///
/// The meaning of `mask` depends on the transport: a file path for the CLI,
/// base64 PNG data for the HTTP API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct DragSpec {
    pub pairs: Vec<DragPair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    pub params: PcddOverrides,
}

impl DragSpec {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ParamsError> {
        serde_json::from_slice(bytes).map_err(|e| ParamsError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    /// Structural checks that do not depend on the grid.
    pub fn check(&self) -> Result<(), ParamsError> {
        if self.pairs.is_empty() {
            return Err(invalid("pairs", "at least one drag pair is required"));
        }
        for p in &self.pairs {
            if !p.handle.iter().chain(&p.target).all(|v| v.is_finite()) {
                return Err(invalid("pairs", "coordinates must be finite"));
            }
        }
        self.params.apply(PcddParams::default()).validate()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    pairs: Vec<PairJson>,
    #[serde(default)]
    mask: Option<String>,
    #[serde(default)]
    params: PcddOverrides,
}

impl TryFrom<RawSpec> for DragSpec {
    type Error = ParamsError;

    fn try_from(raw: RawSpec) -> Result<Self, Self::Error> {
        let spec = DragSpec {
            pairs: raw
                .pairs
                .into_iter()
                .map(|p| DragPair::new(p.handle, p.target))
                .collect(),
            mask: raw.mask,
            params: raw.params,
        };
        spec.check()?;
        Ok(spec)
    }
}
