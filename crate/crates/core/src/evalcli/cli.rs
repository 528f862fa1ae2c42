//! `memq` subcommands: `gen-maps`, `train`, `eval`, `trace` and `render`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use super::{evaluate, export_trace, load_checkpoint, split_window, trace_lines, EvalOptions};
use crate::mapgen::{gen_task_maps, load_split, write_map_set};
use crate::numerics::Rng;
use crate::trainer::{train_on_maps, load_task_maps, TrainConfig};
use crate::worldsim::{render, to_ppm, Action, EpisodeState, MapSpec, Task};

#[derive(Debug, Parser)]
#[command(name = "memq", version, about = "Memory Q-networks in a first-person grid world")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train and evaluation map sets.
    GenMaps {
        /// Task name, or `all`.
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network; flags override values from `--config`.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        arch: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        maps: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        profile: Option<String>,
        /// Any config key, as `key=value`; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Evaluate a checkpoint on a map split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Root directory written by `gen-maps`.
        #[arg(long)]
        maps: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a per-step attention trace of one episode as JSON lines.
    Trace {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the view after a scripted action sequence as a PPM image.
    Render {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated action indices.
        #[arg(long, default_value = "")]
        actions: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_map(path: &Path) -> Result<MapSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    MapSpec::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn train_config(
    config: Option<&Path>,
    overrides: Vec<(String, String)>,
) -> Result<TrainConfig> {
    let mut pairs = match config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            TrainConfig::parse_pairs(&text)?
        }
        None => Vec::new(),
    };
    pairs.extend(overrides);
    Ok(TrainConfig::from_pairs(&pairs)?)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenMaps { task, seed, out } => {
            let tasks: Vec<Task> = if task == "all" {
                Task::ALL.to_vec()
            } else {
                vec![task.parse()?]
            };
            for t in tasks {
                let manifest = write_map_set(&gen_task_maps(t, seed)?, &out)?;
                for (split, n) in &manifest.counts {
                    println!("{t}/{split}: {n} maps");
                }
            }
        }
        Command::Train {
            config,
            task,
            arch,
            seed,
            maps,
            out,
            steps,
            profile,
            set,
        } => {
            let mut overrides: Vec<(String, String)> = Vec::new();
            let flags = [
                ("task", task),
                ("arch", arch),
                ("seed", seed.map(|s| s.to_string())),
                ("maps", maps.map(|p| p.display().to_string())),
                ("out", out.map(|p| p.display().to_string())),
                ("steps", steps.map(|s| s.to_string())),
                ("profile", profile),
            ];
            for (k, v) in flags {
                if let Some(v) = v {
                    overrides.push((k.to_string(), v));
                }
            }
            for kv in set {
                let Some((k, v)) = kv.split_once('=') else {
                    bail!("--set expects KEY=VALUE, got '{kv}'");
                };
                overrides.push((k.trim().to_string(), v.trim().to_string()));
            }
            let cfg = train_config(config.as_deref(), overrides)?;
            let Some(dir) = cfg.maps.clone() else {
                bail!("no map directory given (use --maps or a `maps` key)");
            };
            let train_maps = load_task_maps(&dir, &cfg)?;
            let outcome = train_on_maps(&cfg, train_maps, cfg.out.as_deref(), &mut |r| {
                println!(
                    "epoch {} step {} train reward {:.3} eval reward {:.3} eval success {:.3}",
                    r.epoch,
                    r.step,
                    r.stats.mean_reward(),
                    r.eval.reward,
                    r.eval.success
                );
            })?;
            println!("best epoch {}", outcome.best_epoch);
        }
        Command::Eval {
            checkpoint,
            maps,
            split,
            episodes,
            epsilon,
            seed,
            out,
        } => {
            let (manifest, net) = load_checkpoint(&checkpoint)?;
            let dir = maps.join(manifest.task.name()).join(&split);
            if !dir.is_dir() {
                bail!("map split {} does not exist", dir.display());
            }
            let split_maps = load_split(&dir)?;
            let (window, horizon) = split_window(manifest.task, manifest.arch.variant, &split);
            let opts = EvalOptions {
                horizon,
                window,
                ..EvalOptions::new(&split, episodes, epsilon, seed)
            };
            let report = evaluate(&net, &split_maps, &opts)?;
            write(&out.join("report.txt"), report.to_text())?;
            write(&out.join("sizes.csv"), report.sizes_csv())?;
            if manifest.task == Task::SingleInd {
                write(&out.join("distances.csv"), report.distances_csv())?;
            }
            print!("{}", report.to_text());
        }
        Command::Trace {
            checkpoint,
            map,
            seed,
            epsilon,
            out,
        } => {
            let (_, net) = load_checkpoint(&checkpoint)?;
            let steps = export_trace(&net, &read_map(&map)?, seed, epsilon)?;
            write(&out, trace_lines(&steps)?)?;
            println!("{} steps", steps.len());
        }
        Command::Render {
            map,
            seed,
            actions,
            out,
        } => {
            let map = read_map(&map)?;
            let mut state = EpisodeState::reset(&map, &mut Rng::new(seed).split("env"))?;
            for a in actions.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let i: usize = a.parse().with_context(|| format!("bad action '{a}'"))?;
                let Some(action) = Action::from_index(i) else {
                    bail!("action {i} out of range");
                };
                if state.terminal {
                    break;
                }
                state.step(action)?;
            }
            write(&out, to_ppm(&render(&state)))?;
        }
    }
    Ok(())
}

/// Parses `args` and runs the command. Usage errors print clap's message
/// and exit with status 2.
pub fn main_with(args: impl IntoIterator<Item = OsString>) -> Result<()> {
    let cli = Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
    run(cli)
}
