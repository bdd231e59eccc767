use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use upstream_core::config::{EpisodesTarget, Overrides, RunConfig};
use upstream_core::market::Regime;
use upstream_core::{pipeline, Error, Result};

#[derive(Parser)]
#[command(
    name = "upstream",
    version,
    about = "Upstream investment game: calibrate, train, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run config (TOML), or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Training episodes for `train`, evaluation episodes for `evaluate`.
    #[arg(long)]
    episodes: Option<usize>,
    /// Number of firms.
    #[arg(long)]
    agents: Option<usize>,
    /// resilient | neutral | heat
    #[arg(long)]
    scenario: Option<String>,
    /// appendix-defaults | grid-search-2021 | desk
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the price process to a date,price CSV.
    Calibrate {
        #[arg(long)]
        prices: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train the Q-network.
    Train {
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop (with a checkpoint) after this many episodes in total.
        #[arg(long)]
        stop_after: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo evaluation against the ladder strategy.
    Evaluate {
        /// Trained checkpoint; a random policy is evaluated without one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common, target: EpisodesTarget) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let scenario = common
        .scenario
        .as_deref()
        .map(str::parse::<Regime>)
        .transpose()?;
    let overrides = Overrides {
        seed: common.seed,
        episodes: common.episodes,
        agents: common.agents,
        scenario,
        preset: common.preset.clone(),
        out: common.out.clone(),
        workers: common.workers,
    };
    cfg.apply_overrides(&overrides, target)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate { prices, common } => {
            let cfg = load_config(&common, EpisodesTarget::Evaluation)?;
            let p = pipeline::calibrate(&cfg, &prices)?;
            println!("kappa={} pbar={} sigma_p={}", p.kappa, p.pbar, p.sigma_p);
        }
        Command::Train {
            resume,
            stop_after,
            common,
        } => {
            let cfg = load_config(&common, EpisodesTarget::Training)?;
            let out = pipeline::train(&cfg, resume.as_deref(), stop_after)?;
            println!(
                "trained {} episodes{}; checkpoint {}",
                out.episodes_done,
                if out.finished { "" } else { " (stopped early)" },
                out.checkpoint.display()
            );
        }
        Command::Evaluate { checkpoint, common } => {
            let cfg = load_config(&common, EpisodesTarget::Evaluation)?;
            let out = pipeline::evaluate(&cfg, checkpoint.as_deref())?;
            let s = &out.summary;
            println!(
                "{} episodes ({} faults), {} vs {}",
                s.episodes,
                s.faults.len(),
                s.alt.short(),
                s.std.short()
            );
            if let (Some(m), Some(lo)) = (s.paired_npv_diff_mean, s.paired_npv_diff_lower90) {
                println!("paired NPV difference {m:.2} (90% lower bound {lo:.2})");
            }
            println!("outputs in {}", cfg.output_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Divergence {
                checkpoint: Some(p),
                ..
            } = &e
            {
                eprintln!("last good state saved to {}", p.display());
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
