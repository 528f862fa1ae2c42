use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use super::learner::{EpochStats, GridEnv, Learner};
use super::{TrainConfig, TrainError};
use crate::agents::AgentNet;
use crate::evalcli::{evaluate, save_checkpoint, EvalOptions, EvalReport, Manifest};
use crate::mapgen::load_split;
use crate::numerics::Rng;
use crate::worldsim::MapSpec;

pub const METRICS_HEADER: &str =
    "epoch,step,episodes,train_reward,train_success,train_failure,updates,loss,eval_reward,eval_success,eval_failure";

/// Metrics of one epoch: the ε-greedy training episodes that finished in it
/// and an evaluation on the training maps at the evaluation ε.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: u64,
    pub step: u64,
    pub stats: EpochStats,
    pub eval: EvalReport,
}

impl EpochRecord {
    pub fn csv_line(&self) -> String {
        let s = &self.stats;
        let failure = if s.episodes == 0 {
            0.0
        } else {
            s.failures as f64 / s.episodes as f64
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.step,
            s.episodes,
            s.mean_reward(),
            s.success_rate(),
            failure,
            s.updates,
            s.mean_loss(),
            self.eval.reward,
            self.eval.success,
            self.eval.failure
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    /// Final online network.
    pub net: AgentNet,
    /// Online network at the epoch with the highest evaluation reward.
    pub best: AgentNet,
    pub best_epoch: u64,
}

impl TrainOutcome {
    pub fn metrics_log(&self) -> String {
        let mut s = format!("{METRICS_HEADER}\n");
        for r in &self.records {
            s.push_str(&r.csv_line());
            s.push('\n');
        }
        s
    }
}

/// Training maps of `<dir>/<task>/train`.
pub fn load_task_maps(dir: &Path, cfg: &TrainConfig) -> Result<Vec<MapSpec>, TrainError> {
    let split = dir.join(cfg.task.name()).join("train");
    if !split.is_dir() {
        return Err(TrainError::Config(format!("map directory {} does not exist", split.display())));
    }
    Ok(load_split(&split)?)
}

/// Runs a whole training job from a config: maps come from `cfg.maps`, and
/// outputs go to `cfg.out` when set.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let dir = cfg
        .maps
        .as_deref()
        .ok_or_else(|| TrainError::Config("no map directory given".into()))?;
    let maps = load_task_maps(dir, cfg)?;
    train_on_maps(cfg, maps, cfg.out.as_deref(), &mut |_| {})
}

fn io<'a>(path: &'a Path) -> impl FnOnce(std::io::Error) -> TrainError + 'a {
    move |source| TrainError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Trains on `maps` for `cfg.steps` steps. Every `epoch_steps` steps (and
/// after a final partial epoch) the online network is evaluated on the
/// training maps; with `out` set, `metrics.csv` gains a line, `latest.ckpt`
/// is replaced and `best.ckpt` tracks the best evaluation reward. A failing
/// update aborts the run and leaves the last checkpoints in place.
pub fn train_on_maps(
    cfg: &TrainConfig,
    maps: Vec<MapSpec>,
    out: Option<&Path>,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if let Some(m) = maps.iter().find(|m| m.task != cfg.task) {
        return Err(TrainError::Config(format!("{} map given to a {} run", m.task, cfg.task)));
    }
    let root = Rng::new(cfg.seed);
    let net = AgentNet::new(cfg.arch_config(), &mut root.split("init"))?;
    let mut learner = Learner::new(net, cfg, &root.split("learner"))?;
    let mut env = GridEnv::new(maps.clone())?;
    let mut metrics = match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io(dir))?;
            let cfg_path = dir.join("config.txt");
            fs::write(&cfg_path, cfg.to_text()).map_err(io(&cfg_path))?;
            let path = dir.join("metrics.csv");
            let mut f = File::create(&path).map_err(io(&path))?;
            writeln!(f, "{METRICS_HEADER}").map_err(io(&path))?;
            Some((f, path))
        }
        None => None,
    };
    let mut records = Vec::new();
    let mut best: Option<(f64, u64, AgentNet)> = None;
    let mut epoch = 0;
    while learner.step_count() < cfg.steps {
        let n = cfg.epoch_steps.min(cfg.steps - learner.step_count());
        learner.run(&mut env, n)?;
        epoch += 1;
        let opts = EvalOptions::new("train", cfg.eval_episodes, cfg.eval_epsilon, root.split_indexed("eval", epoch).seed());
        let eval = evaluate(learner.online(), &maps, &opts)?;
        let record = EpochRecord {
            epoch,
            step: learner.step_count(),
            stats: learner.take_stats(),
            eval,
        };
        let improved = best.as_ref().is_none_or(|(r, _, _)| record.eval.reward > *r);
        if improved {
            best = Some((record.eval.reward, epoch, learner.online().clone()));
        }
        if let (Some(dir), Some((f, path))) = (out, metrics.as_mut()) {
            writeln!(f, "{}", record.csv_line()).map_err(io(path))?;
            f.flush().map_err(io(path))?;
            let manifest = Manifest::for_net(learner.online(), cfg.task, cfg.seed, learner.step_count());
            save_checkpoint(learner.online(), &manifest, &dir.join("latest.ckpt"))?;
            if improved {
                save_checkpoint(learner.online(), &manifest, &dir.join("best.ckpt"))?;
            }
        }
        progress(&record);
        records.push(record);
    }
    let net = learner.online().clone();
    let (best_epoch, best) = match best {
        Some((_, e, b)) => (e, b),
        None => (0, net.clone()),
    };
    Ok(TrainOutcome {
        records,
        net,
        best,
        best_epoch,
    })
}
