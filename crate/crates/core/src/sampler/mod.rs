//! Noise schedule, guided sampling steps and the three-branch loop.

mod config;
mod predictor;
mod schedule;
mod step;
mod three_branch;

pub use config::{CfgScales, ConfigError, SamplerConfig};
pub use predictor::{LinearToyPredictor, NoisePredictor, ZeroPredictor};
pub use schedule::{
    build_schedule, consistency_noise, effective_steps, eta_at, forward_noise, forward_noise_with,
    EtaSchedule, NoiseSchedule,
};
pub use step::{cfg_combine, ddcm_coefficients, ddcm_step, DdcmCoefficients};
pub use three_branch::{
    prepare, run_three_branch, Prepared, Prompts, RunOptions, SampleOutput, StepTrace,
};

use thiserror::Error;

use crate::attention::AttentionError;
use crate::grid::GridError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("bad schedule parameters: {0}")]
    BadScheduleParams(String),
    #[error("alpha_bar {0} out of range")]
    AlphaOutOfRange(f64),
    #[error("eta {0} out of range")]
    EtaOutOfRange(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid sampler input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Attention(#[from] AttentionError),
    #[error(transparent)]
    Grid(#[from] GridError),
}
