use crate::grid::FeatureGrid;

use super::SamplerError;

/// `eps_uncond + scale * (eps_cond - eps_uncond)`.
pub fn cfg_combine(
    eps_cond: &FeatureGrid,
    eps_uncond: &FeatureGrid,
    scale: f64,
) -> Result<FeatureGrid, SamplerError> {
    if !eps_cond.same_dims(eps_uncond) {
        return Err(SamplerError::ShapeMismatch(format!(
            "conditional {:?}x{} vs unconditional {:?}x{}",
            eps_cond.shape(),
            eps_cond.channels(),
            eps_uncond.shape(),
            eps_uncond.channels()
        )));
    }
    let data = eps_cond
        .data()
        .iter()
        .zip(eps_uncond.data())
        .map(|(c, u)| u + scale * (c - u))
        .collect();
    Ok(eps_cond.with_data(data)?)
}

/// Coefficients of one step, `z_prev = x0 * pred + dir * eps + sigma * noise`
/// with `pred = (z_t - sqrt(1 - ab_t) eps) / sqrt(ab_t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdcmCoefficients {
    pub x0: f64,
    pub dir: f64,
    pub sigma: f64,
}

pub fn ddcm_coefficients(
    alpha_bar_t: f64,
    alpha_bar_prev: f64,
    eta: f64,
) -> Result<DdcmCoefficients, SamplerError> {
    for a in [alpha_bar_t, alpha_bar_prev] {
        if !(a > 0.0 && a <= 1.0) {
            return Err(SamplerError::AlphaOutOfRange(a));
        }
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(SamplerError::EtaOutOfRange(eta));
    }
    let rest = 1.0 - alpha_bar_prev;
    Ok(DdcmCoefficients {
        x0: alpha_bar_prev.sqrt(),
        dir: ((1.0 - eta * eta) * rest).sqrt(),
        sigma: eta * rest.sqrt(),
    })
}

/// One guided step. `eps` is the combined prediction supplied by the caller
/// and `noise` the random term; both must match `z_t`.
pub fn ddcm_step(
    z_t: &FeatureGrid,
    eps: &FeatureGrid,
    noise: &FeatureGrid,
    alpha_bar_t: f64,
    alpha_bar_prev: f64,
    eta: f64,
) -> Result<FeatureGrid, SamplerError> {
    let c = ddcm_coefficients(alpha_bar_t, alpha_bar_prev, eta)?;
    if !z_t.same_dims(eps) || !z_t.same_dims(noise) {
        return Err(SamplerError::ShapeMismatch("latent, eps and noise differ".into()));
    }
    let (sa, sb) = (alpha_bar_t.sqrt(), (1.0 - alpha_bar_t).sqrt());
    let data = z_t
        .data()
        .iter()
        .zip(eps.data())
        .zip(noise.data())
        .map(|((z, e), n)| {
            let pred = (z - sb * e) / sa;
            c.x0 * pred + c.dir * e + c.sigma * n
        })
        .collect();
    Ok(z_t.with_data(data)?)
}
