use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::schedule::{build_schedule, effective_steps, EtaSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("invalid value for `{name}`: {detail}")]
    Invalid { name: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CfgScales {
    pub src: f64,
    #[serde(rename = "ref")]
    pub reference: f64,
    pub tgt: f64,
}

impl Default for CfgScales {
    fn default() -> Self {
        Self {
            src: 1.0,
            reference: 2.0,
            tgt: 2.0,
        }
    }
}

impl CfgScales {
    pub fn uniform(scale: f64) -> Self {
        Self {
            src: scale,
            reference: scale,
            tgt: scale,
        }
    }
}

/// Sampler settings. `t_c`, `t_s` and `fuse_steps` count denoising
/// iterations from the first one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    #[serde(rename = "T")]
    pub total_steps: usize,
    pub strength: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub eta: EtaSchedule,
    pub t_c: usize,
    pub t_s: usize,
    pub fuse_steps: usize,
    pub cfg: CfgScales,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            total_steps: 15,
            strength: 0.7,
            beta_start: 1e-4,
            beta_end: 0.02,
            eta: EtaSchedule::default(),
            t_c: 3,
            t_s: 5,
            fuse_steps: 4,
            cfg: CfgScales::default(),
            seed: 0,
        }
    }
}

const TOP_KEYS: &[&str] = &[
    "T",
    "strength",
    "beta_start",
    "beta_end",
    "eta",
    "t_c",
    "t_s",
    "fuse_steps",
    "cfg",
    "seed",
];
const ETA_KEYS: &[&str] = &["lo", "hi", "ramp_start", "ramp_end"];
const CFG_KEYS: &[&str] = &["src", "ref", "tgt"];

fn find_unknown(value: &Value) -> Option<String> {
    let top = value.as_object()?;
    for (k, v) in top {
        if !TOP_KEYS.contains(&k.as_str()) {
            return Some(k.clone());
        }
        let nested = match k.as_str() {
            "eta" => ETA_KEYS,
            "cfg" => CFG_KEYS,
            _ => continue,
        };
        if let Some(obj) = v.as_object() {
            if let Some(inner) = obj.keys().find(|ik| !nested.contains(&ik.as_str())) {
                return Some(format!("{k}.{inner}"));
            }
        }
    }
    None
}

impl SamplerConfig {
    /// Missing keys take defaults; unknown keys are reported with their path.
    pub fn from_json(bytes: &[u8]) -> Result<Self, ConfigError> {
        let value: Value =
            serde_json::from_slice(bytes).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        if !value.is_object() {
            return Err(ConfigError::Malformed("expected a JSON object".into()));
        }
        if let Some(key) = find_unknown(&value) {
            return Err(ConfigError::UnknownKey(key));
        }
        let cfg: Self =
            serde_json::from_value(value).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |name: &str, detail: String| ConfigError::Invalid {
            name: name.into(),
            detail,
        };
        build_schedule(self.total_steps, self.beta_start, self.beta_end)
            .map_err(|e| invalid("T/beta", e.to_string()))?;
        if !(self.strength > 0.0 && self.strength <= 1.0) {
            return Err(invalid("strength", format!("{} not in (0, 1]", self.strength)));
        }
        self.eta.validate().map_err(|e| invalid("eta", e.to_string()))?;
        for (name, v) in [
            ("cfg.src", self.cfg.src),
            ("cfg.ref", self.cfg.reference),
            ("cfg.tgt", self.cfg.tgt),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, format!("{v} is not finite")));
            }
        }
        Ok(())
    }

    pub fn start_step(&self) -> usize {
        effective_steps(self.total_steps, self.strength)
    }

    /// Timestep threshold for a gate that stays open for the first `count`
    /// iterations of a loop starting at `start`: open while `t >= threshold`.
    pub fn gate_threshold(start: usize, count: usize) -> usize {
        (start + 1).saturating_sub(count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_keys() {
        let c = SamplerConfig::from_json(br#"{"seed": 9, "eta": {"hi": 0.95}}"#).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.eta.hi, 0.95);
        assert_eq!(c.eta.lo, 0.5);
        assert_eq!(c.total_steps, 15);
    }

    #[test]
    fn unknown_keys_reported_with_path() {
        assert_eq!(
            SamplerConfig::from_json(br#"{"steps": 3}"#),
            Err(ConfigError::UnknownKey("steps".into()))
        );
        assert_eq!(
            SamplerConfig::from_json(br#"{"cfg": {"source": 1.0}}"#),
            Err(ConfigError::UnknownKey("cfg.source".into()))
        );
    }

    #[test]
    fn malformed_and_invalid() {
        assert!(matches!(
            SamplerConfig::from_json(b"[1]"),
            Err(ConfigError::Malformed(_))
        ));
        assert!(matches!(
            SamplerConfig::from_json(br#"{"T": "x"}"#),
            Err(ConfigError::Malformed(_))
        ));
        assert!(matches!(
            SamplerConfig::from_json(br#"{"strength": 0}"#),
            Err(ConfigError::Invalid { .. })
        ));
        assert!(matches!(
            SamplerConfig::from_json(br#"{"eta": {"lo": 0.9, "hi": 0.5}}"#),
            Err(ConfigError::Invalid { .. })
        ));
    }

    #[test]
    fn round_trip() {
        let c = SamplerConfig::default();
        assert_eq!(SamplerConfig::from_json(c.to_json_pretty().as_bytes()).unwrap(), c);
    }

    #[test]
    fn gates_cover_first_iterations() {
        // start 10: iterations 1..=3 run at t = 10, 9, 8
        assert_eq!(SamplerConfig::gate_threshold(10, 3), 8);
        assert_eq!(SamplerConfig::gate_threshold(10, 0), 11);
        assert_eq!(SamplerConfig::gate_threshold(2, 5), 0);
    }
}
