mod commands;
mod manifest;
mod output;

use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "lumistack", version, about = "Light field reconstruction from a focal stack")]
struct Cli {
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Overrides for the manifest's `[params]`.
#[derive(Args, Clone, Default)]
pub struct Tuning {
    /// Smoothness weight of the focus-map energy.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Radius of the median filter applied to the focus map.
    #[arg(long)]
    pub median_radius: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Weighting {
    /// Rows weighted by the inverse squared width of their interval in 1/D.
    Interval,
    Uniform,
    /// Uniform with the last row down-weighted to 0.25.
    LastRow,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the focus-parameter to distance curve from a calibration table.
    Calibrate {
        /// CSV with `focus_param,near_m,far_m` rows.
        #[arg(long)]
        table: PathBuf,
        /// Model file to write (JSON).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "interval")]
        weighting: Weighting,
    },
    /// Estimate the focus map; writes `focus.png` and `focus.json` into `--out`.
    Focusmap {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Convert a focus map to metric depth; writes `depth.png` (mm) and `depth.json`.
    Depthmap {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Calibration model from `calibrate`; overrides the manifest's table.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Precomputed focus map; estimated from the stack when absent.
        #[arg(long)]
        focus_map: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Write the all-in-focus image.
    Extended {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        focus_map: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Run the full pipeline and write the light field slab.
    Reconstruct {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        focus_map: Option<PathBuf>,
        /// Aperture samples (odd).
        #[arg(long)]
        u_samples: Option<usize>,
        /// Parallax of the nearest layer across the aperture, in pixels.
        #[arg(long)]
        max_parallax: Option<f64>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Render perspective views as numbered PNGs.
    Sweep {
        #[arg(long)]
        slab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        u_min: i32,
        #[arg(long, allow_hyphen_values = true)]
        u_max: i32,
        #[arg(long, default_value_t = 9)]
        frames: usize,
    },
    /// Refocus the slab at a depth or on the layer under a pixel.
    Refocus {
        #[arg(long)]
        slab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Focus distance in metres.
        #[arg(long, conflicts_with = "click")]
        depth: Option<f64>,
        /// Pixel `x,y` whose layer to focus on; needs `--focus-map`.
        #[arg(long, requires = "focus_map")]
        click: Option<String>,
        #[arg(long)]
        focus_map: Option<PathBuf>,
    },
    /// Serve the slab over HTTP.
    Serve {
        #[arg(long)]
        slab: PathBuf,
        #[arg(long)]
        focus_map: PathBuf,
        #[arg(long)]
        extended: Option<PathBuf>,
        /// Directory with the static viewer.
        #[arg(long)]
        viewer: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Write a synthetic three-layer stack with its manifest and ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 192)]
        height: usize,
        #[arg(long, default_value_t = 9)]
        u_samples: usize,
    },
}

/// Failure that is not the caller's fault; exits with status 2.
#[derive(Debug)]
pub struct Internal(pub String);

impl std::fmt::Display for Internal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Internal {}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            anyhow::bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Internal(format!("thread pool: {e}")))?;
    }
    use commands as c;
    match cli.command {
        Command::Calibrate { table, out, weighting } => c::calibrate(&table, &out, weighting),
        Command::Focusmap { manifest, out, tuning } => c::focusmap(&manifest, &out, &tuning),
        Command::Depthmap { manifest, out, model, focus_map, tuning } => {
            c::depthmap(&manifest, &out, model.as_deref(), focus_map.as_deref(), &tuning)
        }
        Command::Extended { manifest, out, focus_map, tuning } => {
            c::extended(&manifest, &out, focus_map.as_deref(), &tuning)
        }
        Command::Reconstruct { manifest, out, model, focus_map, u_samples, max_parallax, tuning } => c::reconstruct(
            &manifest,
            &out,
            c::ReconstructOptions { model, focus_map, u_samples, max_parallax, tuning },
        ),
        Command::Sweep { slab, out, u_min, u_max, frames } => c::sweep(&slab, &out, u_min, u_max, frames),
        Command::Refocus { slab, out, depth, click, focus_map } => {
            c::refocus(&slab, &out, depth, click.as_deref(), focus_map.as_deref())
        }
        Command::Serve { slab, focus_map, extended, viewer, host, port } => {
            c::serve(&slab, &focus_map, extended.as_deref(), viewer, host, port)
        }
        Command::Synth { out, width, height, u_samples } => c::synth(&out, width, height, u_samples),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<Internal>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
        Err(_) => ExitCode::from(2),
    }
}
