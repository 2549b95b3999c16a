use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bevdet_core::commands::{self, read_split, EXIT_CONFIG, WORKERS_ENV};
use bevdet_core::config::PipelineConfig;
use bevdet_core::post::NoiseSpec;
use bevdet_core::Error;

#[derive(Parser)]
#[command(name = "bevdet", version, about = "BEV LiDAR detection toolkit")]
struct Cli {
    /// Pipeline config (TOML). Defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Overrides `dataset.root` from the config.
    #[arg(long, global = true)]
    data_root: Option<PathBuf>,

    /// Worker threads for batch commands.
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize scans into BEV PNGs plus a manifest.
    Encode {
        /// Newline-separated frame ids.
        #[arg(long)]
        split: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run the oracle detector and rotated NMS, writing KITTI result files.
    Oracle {
        #[arg(long)]
        split: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Standard deviation applied to every target dimension.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Compute AP tables (BEV and 3D, 11- and 40-point).
    Eval {
        #[arg(long)]
        det_dir: PathBuf,
        /// Label directory; defaults to the dataset's.
        #[arg(long)]
        gt_dir: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        /// Directory for ap.txt / ap.csv.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Draw ground truth and detections over a frame's BEV image.
    Viz {
        #[arg(long)]
        frame: String,
        #[arg(long)]
        det_file: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Time encode, NMS and evaluation on synthetic frames.
    Bench {
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the effective config.
    Config,
}

fn run(cli: Cli) -> Result<i32, Error> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| match e {
            Error::Io { .. } => Error::Config(e.to_string()),
            other => other,
        })?,
        None => PipelineConfig::default(),
    };
    if let Some(root) = cli.data_root {
        cfg.dataset.root = root;
    }
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }

    match cli.command {
        Command::Encode { split, out } => {
            let ids = read_split(&split)?;
            let report = commands::cmd_encode(&cfg, &ids, &out)?;
            println!("encoded {} / {} frames", report.written.len(), ids.len());
            Ok(report.exit_code())
        }
        Command::Oracle {
            split,
            out,
            seed,
            noise,
        } => {
            if !(noise >= 0.0) {
                return Err(Error::InvalidArgument("noise must be non-negative".into()));
            }
            let ids = read_split(&split)?;
            let report = commands::cmd_oracle(&cfg, &ids, &NoiseSpec::uniform(noise), seed, &out)?;
            println!("wrote {} / {} result files", report.written.len(), ids.len());
            Ok(report.exit_code())
        }
        Command::Eval {
            det_dir,
            gt_dir,
            split,
            out,
        } => {
            let gt_dir = gt_dir.unwrap_or_else(|| cfg.dataset.root.join(&cfg.dataset.labels));
            let ids = split.map(read_split).transpose()?;
            let tables = commands::cmd_eval(&cfg, &det_dir, &gt_dir, ids.as_deref(), out.as_deref())?;
            for t in &tables {
                println!("{}", t.to_text());
            }
            Ok(0)
        }
        Command::Viz { frame, det_file, out } => {
            let r = commands::cmd_viz(&cfg, &frame, det_file.as_deref(), &out)?;
            println!("drew {} boxes ({} skipped)", r.drawn, r.skipped);
            Ok(0)
        }
        Command::Bench { frames, seed } => {
            print!("{}", commands::cmd_bench(&cfg, frames, seed).to_text());
            Ok(0)
        }
        Command::Config => {
            print!("{}", cfg.to_toml_string());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            let code = commands::exit_code(&e);
            ExitCode::from(if code == 0 { EXIT_CONFIG } else { code } as u8)
        }
    }
}
