use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use dragwarp::commands::{
    cmd_depth_rescale, cmd_sample, cmd_schedule, cmd_warp, load_config, DepthRescaleArgs,
    PredictorKind, SampleArgs, WarpArgs,
};
use dragwarp::server::{serve, ServerConfig};
use dragwarp::CliError;

#[derive(Parser)]
#[command(name = "dragwarp", version, about = "Depth-aware drag warping and toy three-branch sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Warp an image or feature grid by a drag spec.
    Warp(WarpCmd),
    /// Run the three-branch sampler with the toy predictor.
    Sample(SampleCmd),
    /// Resize a depth map and rescale its range.
    DepthRescale(DepthCmd),
    /// Print the noise schedule and per-iteration settings.
    Schedule(ScheduleCmd),
    /// Run the HTTP service.
    Serve(ServeCmd),
}

#[derive(Args)]
struct WarpCmd {
    #[arg(long)]
    image: PathBuf,
    /// Depth file (FGRID or grayscale PNG), or `auto` for image luminance.
    #[arg(long, default_value = "auto")]
    depth: String,
    #[arg(long)]
    drags: PathBuf,
    /// JSON file of parameter overrides.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// PNG preview path; defaults to the output path with a `.png` extension.
    #[arg(long)]
    preview: Option<PathBuf>,
}

#[derive(Args)]
struct SampleCmd {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    z0: PathBuf,
    #[arg(long)]
    drags: Option<PathBuf>,
    #[arg(long, default_value = "auto")]
    depth: String,
    #[arg(long, default_value = "")]
    src_prompt: String,
    #[arg(long, default_value = "")]
    tgt_prompt: String,
    #[arg(long)]
    out: PathBuf,
    /// Stop after this many denoising iterations.
    #[arg(long)]
    steps: Option<usize>,
    /// Directory for per-step attention maps.
    #[arg(long)]
    dump_attention: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "linear")]
    predictor: PredictorKind,
    #[arg(long)]
    preview: Option<PathBuf>,
}

#[derive(Args)]
struct DepthCmd {
    #[arg(long, default_value = "auto")]
    depth: String,
    /// Image whose luminance is used for `auto`.
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    dp_min: f64,
    #[arg(long, default_value_t = 63.0)]
    dp_max: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    preview: Option<PathBuf>,
}

#[derive(Args)]
struct ScheduleCmd {
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ServeCmd {
    #[arg(long, env = "DRAGWARP_BIND", default_value = "127.0.0.1:8080")]
    bind: String,
    /// Static UI directory served for non-API paths.
    #[arg(long)]
    assets: Option<PathBuf>,
    #[arg(long, env = "DRAGWARP_TTL_SECONDS", default_value_t = 1800)]
    ttl_seconds: u64,
    /// Concurrent warps; defaults to the number of hardware threads.
    #[arg(long, env = "DRAGWARP_WORKERS")]
    workers: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    warp_budget_seconds: f64,
}

fn run(command: Command) -> Result<Option<String>, CliError> {
    match command {
        Command::Warp(c) => cmd_warp(&WarpArgs {
            image: c.image,
            depth: c.depth,
            drags: c.drags,
            params: c.params,
            out: c.out,
            preview: c.preview,
        })
        .map(Some),
        Command::Sample(c) => cmd_sample(&SampleArgs {
            config: c.config,
            z0: c.z0,
            drags: c.drags,
            depth: c.depth,
            src_prompt: c.src_prompt,
            tgt_prompt: c.tgt_prompt,
            out: c.out,
            steps: c.steps,
            dump_attention: c.dump_attention,
            predictor: c.predictor,
            preview: c.preview,
        })
        .map(Some),
        Command::DepthRescale(c) => cmd_depth_rescale(&DepthRescaleArgs {
            depth: c.depth,
            image: c.image,
            height: c.height,
            width: c.width,
            dp_min: c.dp_min,
            dp_max: c.dp_max,
            out: c.out,
            preview: c.preview,
        })
        .map(Some),
        Command::Schedule(c) => {
            let config = load_config(c.config.as_deref())?;
            cmd_schedule(&config).map(|s| Some(s.trim_end().to_string()))
        }
        Command::Serve(c) => {
            let workers = c.workers.unwrap_or_else(|| ServerConfig::default().workers);
            if workers == 0 {
                return Err(CliError::user("invalid_args", "workers must be at least 1"));
            }
            if !(c.warp_budget_seconds.is_finite() && c.warp_budget_seconds > 0.0) {
                return Err(CliError::user("invalid_args", "warp budget must be positive"));
            }
            let config = ServerConfig {
                assets: c.assets,
                ttl: Duration::from_secs(c.ttl_seconds),
                workers,
                warp_budget: Duration::from_secs_f64(c.warp_budget_seconds),
            };
            let runtime = tokio::runtime::Runtime::new()
                .map_err(|e| CliError::internal("runtime", e))?;
            runtime
                .block_on(serve(&c.bind, config))
                .map_err(|e| CliError::internal("serve_failed", e))?;
            Ok(None)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::user("usage", e.to_string().trim_end());
            eprintln!("{}", err.to_json());
            return ExitCode::from(2);
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli.command) {
        Ok(Some(out)) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
