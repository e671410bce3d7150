use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use stairclimb::config::Config;
use stairclimb::harness::ablation::DEFAULT_HEIGHTS;
use stairclimb::harness::{
    ablation_matrix, evaluate, record_velocity_profile, teleop_service, BoolMode, EvalSpec,
};
use stairclimb::ppo::train;
use stairclimb::terrain::TerrainSpec;

#[derive(Parser)]
#[command(
    name = "stairclimb",
    version,
    about = "Train and evaluate a planar wheeled-biped stair-climbing policy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy with PPO.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overrides `ppo.iterations`.
        #[arg(long)]
        iterations: Option<usize>,
        /// Overrides `train.out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint with mean actions.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// `flat`, `step:<height m>` or `<kind>:<level>`.
        #[arg(long)]
        terrain: TerrainSpec,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        /// Terrain boolean during evaluation: `on` or `off`.
        #[arg(long, default_value = "off")]
        mode: BoolMode,
        #[arg(long, default_value_t = 0.2)]
        radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Success-rate table for the bool-on, bool-off, no-bool and no-priv variants.
    Ablate {
        /// Four checkpoints in that order; `-` or a missing file gives an N/A row.
        #[arg(long, num_args = 4, required = true)]
        checkpoints: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Step heights in metres.
        #[arg(long, value_delimiter = ',')]
        heights: Option<Vec<f64>>,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long, default_value_t = 0.2)]
        radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Velocity profile of one successful step-up.
    Profile {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Step height in metres.
        #[arg(long)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve the policy for live remote control over a websocket.
    Play {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = "flat")]
        terrain: TerrainSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a terrain profile as an `x height` table.
    ExportTerrain {
        #[arg(long)]
        terrain: TerrainSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("checkpoint {} does not exist", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            seed,
            iterations,
            out,
        } => {
            let cfg = Config::from_file(&config)?;
            let out = out.unwrap_or_else(|| cfg.train.out_dir.clone());
            let start = Instant::now();
            let outcome = train(&cfg, seed, &out, iterations, |s| {
                eprintln!(
                    "[{:>7.1}s] iter {:>5}  episodes {:>4}  return {:>8.3}  success {:>5.3}  falls {:>5.3}  \
                     kl {:.4}  lr {:.1e}  stairs level {:.2}",
                    start.elapsed().as_secs_f64(),
                    s.iteration,
                    s.episodes,
                    s.mean_episode_reward,
                    s.success_fraction,
                    s.fall_fraction,
                    s.kl,
                    s.learning_rate,
                    s.stairs_level
                );
            })
            .with_context(|| format!("training into {}", out.display()))?;
            for c in &outcome.checkpoints {
                println!("checkpoint {}", c.display());
            }
            println!("stats {}", outcome.stats_path.display());
        }
        Command::Eval {
            checkpoint,
            terrain,
            trials,
            mode,
            radius,
            seed,
            out,
        } => {
            require_file(&checkpoint)?;
            let spec = EvalSpec {
                radius,
                seed,
                ..EvalSpec::new(checkpoint, terrain, trials, mode)
            };
            let report = evaluate(&spec)?;
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(out) = out {
                fs::write(&out, &json).with_context(|| format!("writing {}", out.display()))?;
            }
            println!("{json}");
        }
        Command::Ablate {
            checkpoints,
            out,
            heights,
            trials,
            radius,
            seed,
        } => {
            let paths: Vec<Option<PathBuf>> = checkpoints
                .iter()
                .map(|c| (c != "-").then(|| PathBuf::from(c)))
                .collect();
            let paths: [Option<PathBuf>; 4] = paths.try_into().expect("clap enforces four values");
            let heights = heights.unwrap_or_else(|| DEFAULT_HEIGHTS.to_vec());
            let table = ablation_matrix(&paths, &heights, trials, seed, radius)?;
            let mut f =
                fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            table.write_table(&mut f)?;
            table.write_table(std::io::stdout())?;
        }
        Command::Profile {
            checkpoint,
            step,
            out,
            radius,
            seed,
        } => {
            require_file(&checkpoint)?;
            let profile = record_velocity_profile(&checkpoint, step, seed, radius)?;
            let f =
                fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            profile.write_csv(std::io::BufWriter::new(f))?;
            println!("{} rows written to {}", profile.rows.len(), out.display());
            if let Some((min, peak)) = profile.deceleration() {
                println!("min velocity near step contact {min:.3} m/s, peak before {peak:.3} m/s");
            }
        }
        Command::Play {
            checkpoint,
            port,
            host,
            terrain,
            seed,
        } => {
            require_file(&checkpoint)?;
            let handle = teleop_service(&checkpoint, &host, port, terrain, seed)?;
            eprintln!("serving on ws://{host}:{}", handle.port());
            handle.wait();
        }
        Command::ExportTerrain { terrain, seed, out } => {
            let field = terrain.build(seed)?;
            match out {
                Some(path) => {
                    let f = fs::File::create(&path)
                        .with_context(|| format!("creating {}", path.display()))?;
                    field.write_table(std::io::BufWriter::new(f))?;
                }
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    field.write_table(&mut lock)?;
                    lock.flush()?;
                }
            }
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
