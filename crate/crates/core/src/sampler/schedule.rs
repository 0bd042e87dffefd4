use serde::{Deserialize, Serialize};

use crate::grid::FeatureGrid;
use crate::rng::{Branch, NoiseStream, Purpose};

use super::SamplerError;

/// Cumulative products `alpha_bar[t]` for `t = 0..=T`, with `alpha_bar[0] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn total_steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }
}

/// Linear betas from `beta_start` to `beta_end`; a single step uses `beta_end`.
pub fn build_schedule(
    total_steps: usize,
    beta_start: f64,
    beta_end: f64,
) -> Result<NoiseSchedule, SamplerError> {
    if total_steps == 0 {
        return Err(SamplerError::BadScheduleParams("T must be at least 1".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(SamplerError::BadScheduleParams(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )));
    }
    let mut alpha_bar = Vec::with_capacity(total_steps + 1);
    alpha_bar.push(1.0);
    let mut acc = 1.0;
    for s in 0..total_steps {
        let beta = if total_steps == 1 {
            beta_end
        } else {
            beta_start + (beta_end - beta_start) * s as f64 / (total_steps - 1) as f64
        };
        acc *= 1.0 - beta;
        alpha_bar.push(acc);
    }
    Ok(NoiseSchedule { alpha_bar })
}

/// `floor(T * strength)`, tolerant of products like `10 * 0.3` landing a
/// hair under an integer.
pub fn effective_steps(total_steps: usize, strength: f64) -> usize {
    ((total_steps as f64 * strength) + 1e-9).floor() as usize
}

/// `sqrt(alpha_bar[start]) z0 + sqrt(1 - alpha_bar[start]) eps`.
pub fn forward_noise_with(
    z0: &FeatureGrid,
    schedule: &NoiseSchedule,
    start: usize,
    eps: &FeatureGrid,
) -> Result<FeatureGrid, SamplerError> {
    if start > schedule.total_steps() {
        return Err(SamplerError::Invalid(format!(
            "start {start} beyond T = {}",
            schedule.total_steps()
        )));
    }
    let a = schedule.alpha_bar(start);
    Ok(z0.axpby(a.sqrt(), eps, (1.0 - a).sqrt())?)
}

/// Noises `z0` to step `floor(T * strength)` with a standard-normal draw
/// from `seed`. Returns the noised grid, the start step and the noise.
pub fn forward_noise(
    z0: &FeatureGrid,
    schedule: &NoiseSchedule,
    strength: f64,
    seed: u64,
) -> Result<(FeatureGrid, usize, FeatureGrid), SamplerError> {
    if !(strength > 0.0 && strength <= 1.0) {
        return Err(SamplerError::Invalid(format!("strength {strength} not in (0, 1]")));
    }
    let start = effective_steps(schedule.total_steps(), strength);
    let eps = NoiseStream::for_purpose(seed, Purpose::ForwardNoise, 0, Branch::None).normal_grid(
        z0.height(),
        z0.width(),
        z0.channels(),
    )?;
    let z = forward_noise_with(z0, schedule, start, &eps)?;
    Ok((z, start, eps))
}

/// `(z_src_t - sqrt(alpha_bar_t) z0) / sqrt(1 - alpha_bar_t)`.
pub fn consistency_noise(
    z_src_t: &FeatureGrid,
    z0: &FeatureGrid,
    alpha_bar_t: f64,
) -> Result<FeatureGrid, SamplerError> {
    if !(alpha_bar_t > 0.0 && alpha_bar_t < 1.0) {
        return Err(SamplerError::AlphaOutOfRange(alpha_bar_t));
    }
    let inv = 1.0 / (1.0 - alpha_bar_t).sqrt();
    Ok(z_src_t.axpby(inv, z0, -alpha_bar_t.sqrt() * inv)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EtaSchedule {
    pub lo: f64,
    pub hi: f64,
    pub ramp_start: f64,
    pub ramp_end: f64,
}

impl Default for EtaSchedule {
    fn default() -> Self {
        Self {
            lo: 0.5,
            hi: 0.9,
            ramp_start: 0.3,
            ramp_end: 0.7,
        }
    }
}

impl EtaSchedule {
    pub fn constant(eta: f64) -> Self {
        Self {
            lo: eta,
            hi: eta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let ok = 0.0 <= self.lo
            && self.lo <= self.hi
            && self.hi <= 1.0
            && 0.0 <= self.ramp_start
            && self.ramp_start < self.ramp_end
            && self.ramp_end <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(SamplerError::Invalid(format!("bad eta schedule {self:?}")))
        }
    }
}

/// `lo` up to `ramp_start`, `hi` from `ramp_end`, linear in between.
pub fn eta_at(progress: f64, sched: &EtaSchedule) -> f64 {
    if progress <= sched.ramp_start {
        sched.lo
    } else if progress >= sched.ramp_end {
        sched.hi
    } else {
        let u = (progress - sched.ramp_start) / (sched.ramp_end - sched.ramp_start);
        sched.lo + (sched.hi - sched.lo) * u
    }
}
