use crate::attention::{
    align_tokens, masked_fuse, replace_attention, route_qkv, AttentionMap, PromptTokens,
    ToyAttention,
};
use crate::grid::{FeatureGrid, Mask};

use super::config::SamplerConfig;
use super::predictor::NoisePredictor;
use super::schedule::{build_schedule, consistency_noise, eta_at, forward_noise, forward_noise_with, NoiseSchedule};
use super::step::{cfg_combine, ddcm_step};
use super::SamplerError;

#[derive(Debug, Clone, PartialEq)]
pub struct Prompts {
    pub source: PromptTokens,
    pub target: PromptTokens,
}

impl Prompts {
    pub fn new(source: &str, target: &str, dim: usize, seed: u64) -> Self {
        Self {
            source: PromptTokens::encode(source, dim, seed),
            target: PromptTokens::encode(target, dim, seed),
        }
    }
}

/// The noised starting point shared by all three branches.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub schedule: NoiseSchedule,
    pub start: usize,
    pub eps: FeatureGrid,
    pub z_start: FeatureGrid,
}

pub fn prepare(z0: &FeatureGrid, config: &SamplerConfig) -> Result<Prepared, SamplerError> {
    let schedule = build_schedule(config.total_steps, config.beta_start, config.beta_end)?;
    let (z_start, start, eps) = forward_noise(z0, &schedule, config.strength, config.seed)?;
    Ok(Prepared {
        schedule,
        start,
        eps,
        z_start,
    })
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions<'a> {
    /// Fusion mask; all cells when absent.
    pub mask: Option<&'a Mask>,
    /// Stop after this many iterations.
    pub max_steps: Option<usize>,
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub iteration: usize,
    pub t: usize,
    pub eta: f64,
    pub replace_open: bool,
    pub route_open: bool,
    pub fuse_open: bool,
    pub source_map: AttentionMap,
    /// Reference map before rows were replaced.
    pub reference_own_map: AttentionMap,
    pub reference_map: AttentionMap,
    pub target_map: AttentionMap,
    pub target_v_is_reference_v: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub z_tgt: FeatureGrid,
    pub z_ref: FeatureGrid,
    /// Source branch re-noised to the final step.
    pub z_src: FeatureGrid,
    pub start: usize,
    pub steps_run: usize,
    pub trace: Vec<StepTrace>,
}

fn sub_add(a: &FeatureGrid, b: &FeatureGrid, c: &FeatureGrid) -> Result<FeatureGrid, SamplerError> {
    Ok(a.axpby(1.0, b, -1.0)?.axpby(1.0, c, 1.0)?)
}

/// Runs source, reference and target branches from `prepared.start` down to
/// step 1.
///
/// The source branch is `z0` re-noised with the shared start noise at every
/// step. Reference and target start from `prepared.z_start` and
/// `z_tgt_start`; both step with their guided prediction minus the source
/// prediction plus the consistency noise, and both use the shared noise as
/// the random term. The reference always steps with `eta = 1`.
pub fn run_three_branch(
    z0: &FeatureGrid,
    z_tgt_start: &FeatureGrid,
    prepared: &Prepared,
    prompts: &Prompts,
    config: &SamplerConfig,
    predictor: &dyn NoisePredictor,
    options: &RunOptions<'_>,
) -> Result<SampleOutput, SamplerError> {
    if !z0.same_dims(z_tgt_start) || !z0.same_dims(&prepared.eps) {
        return Err(SamplerError::ShapeMismatch(format!(
            "z0 {:?}x{}, target start {:?}x{}",
            z0.shape(),
            z0.channels(),
            z_tgt_start.shape(),
            z_tgt_start.channels()
        )));
    }
    if prompts.source.dim() != prompts.target.dim() {
        return Err(SamplerError::ShapeMismatch("prompt embedding sizes differ".into()));
    }
    let full;
    let mask = match options.mask {
        Some(m) if m.shape() != z0.shape() => {
            return Err(SamplerError::ShapeMismatch(format!(
                "mask {:?} for latent {:?}",
                m.shape(),
                z0.shape()
            )))
        }
        Some(m) => m,
        None => {
            full = Mask::full(z0.height(), z0.width())?;
            &full
        }
    };

    let schedule = &prepared.schedule;
    let start = prepared.start;
    let eps = &prepared.eps;
    let steps = options.max_steps.map_or(start, |m| m.min(start));
    let toy = ToyAttention::new(z0.channels(), prompts.source.dim(), config.seed);
    let align = align_tokens(&prompts.source, &prompts.target);
    let replace_from = SamplerConfig::gate_threshold(start, config.t_c);
    let route_from = SamplerConfig::gate_threshold(start, config.t_s);

    let mut z_ref = forward_noise_with(z0, schedule, start, eps)?;
    let mut z_tgt = z_tgt_start.clone();
    let mut trace = Vec::new();

    for k in 1..=steps {
        let t = start - k + 1;
        let (ab_t, ab_prev) = (schedule.alpha_bar(t), schedule.alpha_bar(t - 1));
        let z_src = forward_noise_with(z0, schedule, t, eps)?;

        let s = toy.branch_state(&z_src)?;
        let r = toy.branch_state(&z_ref)?;
        let g = toy.branch_state(&z_tgt)?;
        let routed = route_qkv(&s, &r, &g, t, route_from)?;
        let target_v_is_reference_v = std::ptr::eq(routed.target.v, &r.v);

        let h_s = toy.self_attend(&z_src, routed.source)?;
        let h_r = toy.self_attend(&z_ref, routed.reference)?;
        let h_g = toy.self_attend(&z_tgt, routed.target)?;

        let m_s = toy.cross_map(&h_s, &prompts.source)?;
        let m_r_own = toy.cross_map(&h_r, &prompts.target)?;
        let m_r = replace_attention(&m_s, &m_r_own, &align, t, replace_from)?;
        let m_g = toy.cross_map(&h_g, &prompts.target)?;

        let guided = |h: &FeatureGrid, m: &AttentionMap, p: &PromptTokens, scale: f64| {
            let f = toy.cross_apply(h, m, p)?;
            let cond = predictor.predict(&f, t, Some(p))?;
            let uncond = predictor.predict(h, t, None)?;
            cfg_combine(&cond, &uncond, scale)
        };
        let eps_src = guided(&h_s, &m_s, &prompts.source, config.cfg.src)?;
        let eps_ref = guided(&h_r, &m_r, &prompts.target, config.cfg.reference)?;
        let eps_tgt = guided(&h_g, &m_g, &prompts.target, config.cfg.tgt)?;
        let eps_cons = consistency_noise(&z_src, z0, ab_t)?;

        let progress = if start > 1 {
            (k - 1) as f64 / (start - 1) as f64
        } else {
            0.0
        };
        let eta = eta_at(progress, &config.eta);
        z_ref = ddcm_step(&z_ref, &sub_add(&eps_ref, &eps_src, &eps_cons)?, eps, ab_t, ab_prev, 1.0)?;
        let stepped = ddcm_step(&z_tgt, &sub_add(&eps_tgt, &eps_src, &eps_cons)?, eps, ab_t, ab_prev, eta)?;
        z_tgt = masked_fuse(&stepped, &z_ref, mask, k, config.fuse_steps)?;

        if options.trace {
            trace.push(StepTrace {
                iteration: k,
                t,
                eta,
                replace_open: t >= replace_from,
                route_open: t >= route_from,
                fuse_open: k <= config.fuse_steps,
                source_map: m_s,
                reference_own_map: m_r_own,
                reference_map: m_r,
                target_map: m_g,
                target_v_is_reference_v,
            });
        }
    }

    Ok(SampleOutput {
        z_src: forward_noise_with(z0, schedule, start - steps, eps)?,
        z_tgt,
        z_ref,
        start,
        steps_run: steps,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::DEFAULT_EMBED_DIM;
    use crate::rng::NoiseStream;
    use crate::sampler::{CfgScales, EtaSchedule, LinearToyPredictor, ZeroPredictor};

    fn z0(seed: u64) -> FeatureGrid {
        NoiseStream::new(seed, 1).normal_grid(4, 4, 8).unwrap()
    }

    fn prompts(a: &str, b: &str) -> Prompts {
        Prompts::new(a, b, DEFAULT_EMBED_DIM, 0)
    }

    fn run(
        z: &FeatureGrid,
        config: &SamplerConfig,
        predictor: &dyn NoisePredictor,
        p: &Prompts,
        options: &RunOptions<'_>,
    ) -> SampleOutput {
        let prep = prepare(z, config).unwrap();
        run_three_branch(z, &prep.z_start, &prep, p, config, predictor, options).unwrap()
    }

    #[test]
    fn zero_predictor_deterministic_steps_telescope_to_z0() {
        let config = SamplerConfig {
            total_steps: 6,
            strength: 4.0 / 6.0,
            eta: EtaSchedule::constant(0.0),
            seed: 5,
            ..Default::default()
        };
        let z = z0(3);
        let prep = prepare(&z, &config).unwrap();
        assert_eq!(prep.start, 4);

        // independent telescoping: each step maps sqrt(ab_t) z0 + sqrt(1-ab_t) e
        // to sqrt(ab_prev) z0 + sqrt(1-ab_prev) e; at t = 0 that is z0 itself
        let sched = &prep.schedule;
        let mut expected = prep.z_start.clone();
        for t in (1..=4).rev() {
            let (a, b) = (sched.alpha_bar(t), sched.alpha_bar(t - 1));
            let data = expected
                .data()
                .iter()
                .zip(prep.eps.data())
                .map(|(x, e)| {
                    let x0 = (x - (1.0 - a).sqrt() * e) / a.sqrt();
                    b.sqrt() * x0 + (1.0 - b).sqrt() * e
                })
                .collect();
            expected = expected.with_data(data).unwrap();
        }
        let out = run(&z, &config, &ZeroPredictor, &prompts("a cat", "a dog"), &RunOptions::default());
        assert!(out.z_tgt.max_abs_diff(&expected).unwrap() < 1e-12);
        assert!(out.z_tgt.max_abs_diff(&z).unwrap() < 1e-12);
    }

    #[test]
    fn identical_branches_stay_together() {
        let z = z0(8);
        let p = prompts("a red box", "a red box");
        let predictor = LinearToyPredictor::new(8, DEFAULT_EMBED_DIM, 1);
        for eta in [0.0, 1.0] {
            let config = SamplerConfig {
                eta: EtaSchedule::constant(eta),
                cfg: CfgScales::uniform(1.0),
                seed: 77,
                ..Default::default()
            };
            let out = run(&z, &config, &predictor, &p, &RunOptions::default());
            assert!(out.z_tgt.max_abs_diff(&out.z_src).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn default_guidance_breaks_symmetry() {
        let z = z0(8);
        let p = prompts("a red box", "a red box");
        let predictor = LinearToyPredictor::new(8, DEFAULT_EMBED_DIM, 1);
        let out = run(&z, &SamplerConfig::default(), &predictor, &p, &RunOptions::default());
        assert!(out.z_tgt.max_abs_diff(&out.z_src).unwrap() > 1e-3);
    }

    #[test]
    fn loop_is_bit_reproducible() {
        let z = z0(2);
        let p = prompts("a red car", "a blue car");
        let predictor = LinearToyPredictor::new(8, DEFAULT_EMBED_DIM, 3);
        let config = SamplerConfig::default();
        let a = run(&z, &config, &predictor, &p, &RunOptions { trace: true, ..Default::default() });
        let b = run(&z, &config, &predictor, &p, &RunOptions { trace: true, ..Default::default() });
        assert_eq!(a, b);
    }

    #[test]
    fn gates_open_for_leading_iterations() {
        let z = z0(2);
        let p = prompts("a red car", "a blue car");
        let predictor = LinearToyPredictor::new(8, DEFAULT_EMBED_DIM, 3);
        let out = run(
            &z,
            &SamplerConfig::default(),
            &predictor,
            &p,
            &RunOptions { trace: true, ..Default::default() },
        );
        assert_eq!(out.trace.len(), 10);
        for step in &out.trace {
            assert_eq!(step.replace_open, step.iteration <= 3);
            assert_eq!(step.route_open, step.iteration <= 5);
            assert_eq!(step.fuse_open, step.iteration <= 4);
            assert!(step.target_v_is_reference_v);
            if !step.replace_open {
                assert_eq!(step.reference_map, step.reference_own_map);
            } else {
                // "a" and "car" rows come from the source map
                assert_eq!(step.reference_map.rows.row(0), step.source_map.rows.row(0));
                assert_eq!(step.reference_map.rows.row(2), step.source_map.rows.row(2));
            }
        }
        let etas: Vec<f64> = out.trace.iter().map(|s| s.eta).collect();
        assert_eq!(etas[0], 0.5);
        assert_eq!(etas[9], 0.9);
    }

    #[test]
    fn zero_steps_returns_start() {
        let z = z0(4);
        let config = SamplerConfig::default();
        let prep = prepare(&z, &config).unwrap();
        let out = run(
            &z,
            &config,
            &ZeroPredictor,
            &prompts("x", "x"),
            &RunOptions { max_steps: Some(0), ..Default::default() },
        );
        assert_eq!(out.z_tgt, prep.z_start);
        assert_eq!(out.steps_run, 0);
    }

    #[test]
    fn full_mask_makes_fusion_a_no_op() {
        let z = z0(6);
        let p = prompts("a red car", "a blue car");
        let predictor = LinearToyPredictor::new(8, DEFAULT_EMBED_DIM, 2);
        let mask = Mask::full(4, 4).unwrap();
        let options = RunOptions { mask: Some(&mask), ..Default::default() };
        let with = run(&z, &SamplerConfig::default(), &predictor, &p, &options);
        let without = run(
            &z,
            &SamplerConfig { fuse_steps: 0, ..Default::default() },
            &predictor,
            &p,
            &options,
        );
        assert_eq!(with.z_tgt, without.z_tgt);
    }

    #[test]
    fn empty_mask_pins_target_to_reference_inside_window() {
        let z = z0(6);
        let p = prompts("a", "b");
        let predictor = LinearToyPredictor::new(8, DEFAULT_EMBED_DIM, 2);
        let mask = Mask::new(4, 4, vec![false; 16]).unwrap();
        let out = run(
            &z,
            &SamplerConfig::default(),
            &predictor,
            &p,
            &RunOptions { mask: Some(&mask), max_steps: Some(2), ..Default::default() },
        );
        assert_eq!(out.z_tgt, out.z_ref);
    }

    #[test]
    fn mismatched_inputs_fail() {
        let z = z0(1);
        let config = SamplerConfig::default();
        let prep = prepare(&z, &config).unwrap();
        let other = FeatureGrid::zeros(4, 4, 3).unwrap();
        assert!(matches!(
            run_three_branch(&z, &other, &prep, &prompts("a", "a"), &config, &ZeroPredictor, &RunOptions::default()),
            Err(SamplerError::ShapeMismatch(_))
        ));
    }
}
