//! The `warp`, `sample`, `depth-rescale` and `schedule` subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;

use dragwarp_core::attention::DEFAULT_EMBED_DIM;
use dragwarp_core::geometry::{rescale_depth, GeometryError};
use dragwarp_core::grid::FeatureGrid;
use dragwarp_core::imageio::{depth_to_png, grid_to_png};
use dragwarp_core::params::PcddParams;
use dragwarp_core::pipeline::warp_grid;
use dragwarp_core::sampler::{
    build_schedule, eta_at, prepare, run_three_branch, ConfigError, LinearToyPredictor,
    NoisePredictor, Prompts, RunOptions, SamplerConfig, ZeroPredictor,
};

use crate::error::CliError;
use crate::inputs::{load_depth, load_depth_file, load_drags, load_grid, load_overrides, read_file, save_grid, write_file};

pub struct WarpArgs {
    pub image: PathBuf,
    pub depth: String,
    pub drags: PathBuf,
    pub params: Option<PathBuf>,
    pub out: PathBuf,
    pub preview: Option<PathBuf>,
}

fn preview_path(out: &Path, preview: &Option<PathBuf>) -> PathBuf {
    preview.clone().unwrap_or_else(|| out.with_extension("png"))
}

fn write_preview(path: &Path, grid: &FeatureGrid) -> Result<(), CliError> {
    let png = grid_to_png(grid).map_err(|e| CliError::internal("encode_failed", e))?;
    write_file(path, &png)
}

/// Returns the JSON printed on success.
pub fn cmd_warp(args: &WarpArgs) -> Result<String, CliError> {
    let image = load_grid(&args.image)?;
    let (spec, mask) = load_drags(&args.drags)?;
    let depth = load_depth(&args.depth, &image)?;
    let mut params = spec.params.apply(PcddParams::default());
    if let Some(p) = &args.params {
        params = load_overrides(p)?.apply(params);
    }
    let outcome = warp_grid(&image, &depth, mask.as_ref(), &spec.pairs, &params)?;
    save_grid(&args.out, &outcome.grid)?;
    write_preview(&preview_path(&args.out, &args.preview), &outcome.grid)?;
    Ok(json!({ "diagnostics": outcome.diagnostics, "drags": outcome.landings }).to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PredictorKind {
    Linear,
    Zero,
}

pub struct SampleArgs {
    pub config: Option<PathBuf>,
    pub z0: PathBuf,
    pub drags: Option<PathBuf>,
    pub depth: String,
    pub src_prompt: String,
    pub tgt_prompt: String,
    pub out: PathBuf,
    pub steps: Option<usize>,
    pub dump_attention: Option<PathBuf>,
    pub predictor: PredictorKind,
    pub preview: Option<PathBuf>,
}

pub fn load_config(path: Option<&Path>) -> Result<SamplerConfig, CliError> {
    let Some(path) = path else {
        return Ok(SamplerConfig::default());
    };
    let bytes = read_file(path, "config_not_found")?;
    SamplerConfig::from_json(&bytes).map_err(|e| match e {
        ConfigError::UnknownKey(_) => CliError::user("unknown_key", e),
        ConfigError::Malformed(_) => CliError::user("invalid_config", e),
        ConfigError::Invalid { .. } => CliError::user("invalid_config", e),
    })
}

pub fn cmd_sample(args: &SampleArgs) -> Result<String, CliError> {
    let config = load_config(args.config.as_deref())?;
    let z0 = load_grid(&args.z0)?;
    let prepared = prepare(&z0, &config).map_err(|e| CliError::internal("sampler_failed", e))?;

    let (z_tgt_start, mask) = match &args.drags {
        None => (prepared.z_start.clone(), None),
        Some(path) => {
            let (spec, mask) = load_drags(path)?;
            let depth = load_depth(&args.depth, &z0)?;
            let params = spec.params.apply(PcddParams::default());
            let warped = warp_grid(&prepared.z_start, &depth, mask.as_ref(), &spec.pairs, &params)?;
            (warped.grid, mask)
        }
    };

    let prompts = Prompts::new(&args.src_prompt, &args.tgt_prompt, DEFAULT_EMBED_DIM, config.seed);
    let linear;
    let predictor: &dyn NoisePredictor = match args.predictor {
        PredictorKind::Linear => {
            linear = LinearToyPredictor::new(z0.channels(), DEFAULT_EMBED_DIM, config.seed);
            &linear
        }
        PredictorKind::Zero => &ZeroPredictor,
    };
    let options = RunOptions {
        mask: mask.as_ref(),
        max_steps: args.steps,
        trace: args.dump_attention.is_some(),
    };
    let out = run_three_branch(&z0, &z_tgt_start, &prepared, &prompts, &config, predictor, &options)
        .map_err(|e| CliError::internal("sampler_failed", e))?;

    save_grid(&args.out, &out.z_tgt)?;
    if let Some(preview) = &args.preview {
        write_preview(preview, &out.z_tgt)?;
    }
    if let Some(dir) = &args.dump_attention {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::user("write_failed", format!("{}: {e}", dir.display())))?;
        for step in &out.trace {
            for (name, map) in [
                ("src", &step.source_map),
                ("ref", &step.reference_map),
                ("tgt", &step.target_map),
            ] {
                let grid = map.to_grid().map_err(|e| CliError::internal("dump_failed", e))?;
                save_grid(&dir.join(format!("step{:02}_{name}.fgrid", step.iteration)), &grid)?;
            }
        }
    }
    Ok(json!({
        "start": out.start,
        "steps_run": out.steps_run,
        "final_t": out.start - out.steps_run,
    })
    .to_string())
}

pub struct DepthRescaleArgs {
    pub depth: String,
    pub image: Option<PathBuf>,
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub dp_min: f64,
    pub dp_max: f64,
    pub out: PathBuf,
    pub preview: Option<PathBuf>,
}

pub fn cmd_depth_rescale(args: &DepthRescaleArgs) -> Result<String, CliError> {
    let image = match &args.image {
        Some(p) => Some(load_grid(p)?),
        None => None,
    };
    let depth = match (&image, args.depth.as_str()) {
        (Some(img), spec) => load_depth(spec, img)?,
        (None, "auto") => {
            return Err(CliError::user("depth_required", "`auto` depth needs --image"))
        }
        (None, spec) => load_depth_file(Path::new(spec))?,
    };
    let height = args.height.unwrap_or(depth.height());
    let width = args.width.unwrap_or(depth.width());
    if height == 0 || width == 0 {
        return Err(CliError::user("invalid_shape", "height and width must be positive"));
    }
    if !(args.dp_min < args.dp_max) {
        return Err(CliError::user("invalid_params", "dp-min must be below dp-max"));
    }
    let rescaled = rescale_depth(&depth, (height, width), args.dp_min, args.dp_max).map_err(|e| match e {
        GeometryError::DegenerateDepthRange(_) => CliError::user("degenerate_depth", e),
        other => CliError::internal("rescale_failed", other),
    })?;
    let (lo, hi) = rescaled.min_max();
    if let Some(p) = &args.preview {
        let png = depth_to_png(&rescaled).map_err(|e| CliError::internal("encode_failed", e))?;
        write_file(p, &png)?;
    }
    save_grid(&args.out, &rescaled.into_grid())?;
    Ok(json!({ "h": height, "w": width, "min": lo, "max": hi }).to_string())
}

/// Text table of the noise schedule and the per-iteration settings.
pub fn cmd_schedule(config: &SamplerConfig) -> Result<String, CliError> {
    let schedule = build_schedule(config.total_steps, config.beta_start, config.beta_end)
        .map_err(|e| CliError::user("invalid_config", e))?;
    let start = config.start_step();
    let mut s = String::new();
    let _ = writeln!(s, "T={} strength={} start={}", config.total_steps, config.strength, start);
    let _ = writeln!(s, "{:>4}  {:>14}", "t", "alpha_bar");
    for (t, ab) in schedule.alpha_bars().iter().enumerate() {
        let _ = writeln!(s, "{t:>4}  {ab:>14.10}");
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{:>4}  {:>4}  {:>8}  {:>7}  {:>5}  {:>4}", "iter", "t", "eta", "replace", "route", "fuse");
    let replace_from = SamplerConfig::gate_threshold(start, config.t_c);
    let route_from = SamplerConfig::gate_threshold(start, config.t_s);
    let flag = |b: bool| if b { "on" } else { "off" };
    for k in 1..=start {
        let t = start - k + 1;
        let progress = if start > 1 { (k - 1) as f64 / (start - 1) as f64 } else { 0.0 };
        let eta = eta_at(progress, &config.eta);
        let _ = writeln!(
            s,
            "{k:>4}  {t:>4}  {eta:>8.4}  {:>7}  {:>5}  {:>4}",
            flag(t >= replace_from),
            flag(t >= route_from),
            flag(k <= config.fuse_steps)
        );
    }
    Ok(s)
}
