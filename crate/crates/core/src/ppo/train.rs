use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::{
    collect_rollouts, compute_gae_finite_horizon, normalize_advantages, Learner, PpoError,
    RolloutBuffer,
};
use crate::config::Config;
use crate::net::{save_params, ActorCritic, CheckpointMeta};
use crate::task::{Termination, VecEnv, ACTION_DIM, OBS_DIM};
use crate::util::{derive_seed, rng_for};

/// One row of the stats log.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainStats {
    pub iteration: usize,
    pub episodes: usize,
    pub mean_episode_reward: f64,
    pub mean_episode_length: f64,
    pub fall_fraction: f64,
    /// Finished episodes that ended within the success radius.
    pub success_fraction: f64,
    pub surrogate_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub learning_rate: f64,
    pub pos_bias_active: bool,
    pub position_reward_mean: f64,
    /// Mean curriculum row over the stairs columns.
    pub stairs_level: f64,
    /// Mean curriculum row per column.
    pub levels: Vec<f64>,
    /// The update hit a non-finite loss and was undone.
    pub rolled_back: bool,
}

impl TrainStats {
    pub fn csv_header(columns: &[String]) -> String {
        let mut h = String::from(
            "iteration,episodes,mean_episode_reward,mean_episode_length,fall_fraction,success_fraction,\
             surrogate_loss,value_loss,entropy,kl,clip_fraction,learning_rate,pos_bias_active,\
             position_reward_mean,stairs_level",
        );
        for c in columns {
            h.push_str(",level_");
            h.push_str(c);
        }
        h.push_str(",rolled_back");
        h
    }

    pub fn csv_row(&self) -> String {
        let mut r = format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.episodes,
            self.mean_episode_reward,
            self.mean_episode_length,
            self.fall_fraction,
            self.success_fraction,
            self.surrogate_loss,
            self.value_loss,
            self.entropy,
            self.kl,
            self.clip_fraction,
            self.learning_rate,
            self.pos_bias_active as u8,
            self.position_reward_mean,
            self.stairs_level,
        );
        for l in &self.levels {
            r.push_str(&format!(",{l}"));
        }
        r.push_str(&format!(",{}", self.rolled_back as u8));
        r
    }
}

/// Training state that advances one iteration at a time.
pub struct Trainer {
    cfg: Config,
    seed: u64,
    envs: VecEnv,
    learner: Learner,
    buffer: RolloutBuffer,
    sample_rng: ChaCha8Rng,
    shuffle_rng: ChaCha8Rng,
    iteration: usize,
}

impl Trainer {
    pub fn new(cfg: &Config, seed: u64) -> Result<Self, PpoError> {
        cfg.validate()
            .map_err(|e| PpoError::Config(e.to_string()))?;
        let n = cfg.ppo.n_envs;
        let grid = cfg.curriculum.build(n, derive_seed(seed, &[0x7E]));
        let envs = VecEnv::new(
            Arc::new(cfg.robot.clone()),
            Arc::new(cfg.task.clone()),
            grid,
            cfg.net.critic_input,
            derive_seed(seed, &[0xE5]),
        );
        let model = ActorCritic::new(
            OBS_DIM,
            cfg.net.critic_input.dim(),
            ACTION_DIM,
            &cfg.net.actor_hidden,
            &cfg.net.critic_hidden,
            cfg.net.init_log_std,
            &mut rng_for(seed, &[0xA1]),
        );
        Ok(Self {
            buffer: RolloutBuffer::new(
                n,
                cfg.ppo.rollout_steps,
                OBS_DIM,
                envs.critic_dim(),
                ACTION_DIM,
            ),
            learner: Learner::new(model, cfg.ppo.learning_rate),
            envs,
            sample_rng: rng_for(seed, &[0xA2]),
            shuffle_rng: rng_for(seed, &[0xA3]),
            cfg: cfg.clone(),
            seed,
            iteration: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn model(&self) -> &ActorCritic {
        &self.learner.model
    }

    pub fn envs(&self) -> &VecEnv {
        &self.envs
    }

    pub fn buffer(&self) -> &RolloutBuffer {
        &self.buffer
    }

    pub fn column_names(&self) -> Vec<String> {
        self.envs
            .grid()
            .columns()
            .iter()
            .enumerate()
            .map(|(i, f)| format!("{i}_{}", f.name()))
            .collect()
    }

    /// Collect, estimate advantages, update.
    pub fn iterate(&mut self) -> Result<TrainStats, PpoError> {
        let ppo = &self.cfg.ppo;
        collect_rollouts(
            &mut self.envs,
            &self.learner.model,
            &mut self.buffer,
            &mut self.sample_rng,
        )?;
        let (mut adv, ret) = compute_gae_finite_horizon(
            &self.buffer.rewards,
            &self.buffer.values,
            &self.buffer.dones,
            &self.buffer.last_values,
            self.buffer.n_envs,
            ppo.gamma,
            ppo.lambda,
        );
        normalize_advantages(&mut adv);
        let update = self
            .learner
            .update(&self.buffer, &adv, &ret, ppo, &mut self.shuffle_rng);
        let (u, rolled_back) = match update {
            Ok(u) => (u, false),
            Err(PpoError::NonFiniteLoss) => (Default::default(), true),
            Err(e) => return Err(e),
        };
        self.iteration += 1;

        let finished = self.envs.drain_finished();
        self.envs.end_iteration();
        let episodes = finished.len();
        let denom = episodes.max(1) as f64;
        let radius = self.cfg.eval.radius;
        let grid = self.envs.grid();
        Ok(TrainStats {
            iteration: self.iteration,
            episodes,
            mean_episode_reward: finished.iter().map(|s| s.ret).sum::<f64>() / denom,
            mean_episode_length: finished.iter().map(|s| s.length as f64).sum::<f64>() / denom,
            fall_fraction: finished
                .iter()
                .filter(|s| s.termination != Termination::Timeout)
                .count() as f64
                / denom,
            success_fraction: finished
                .iter()
                .filter(|s| s.final_distance <= radius)
                .count() as f64
                / denom,
            surrogate_loss: u.surrogate_loss,
            value_loss: u.value_loss,
            entropy: u.entropy,
            kl: u.kl,
            clip_fraction: u.clip_fraction,
            learning_rate: self.learner.learning_rate,
            pos_bias_active: self.envs.pos_bias_active(),
            position_reward_mean: self.envs.position_reward_mean(),
            stairs_level: grid.mean_row_where(|f| f.is_stairs()).unwrap_or(0.0),
            levels: grid.mean_row_per_column(),
            rolled_back,
        })
    }

    pub fn save(&self, path: &Path) -> Result<CheckpointMeta, PpoError> {
        Ok(save_params(
            path,
            &self.learner.model,
            self.seed,
            self.iteration,
            self.cfg.to_json(),
        )?)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoints: Vec<PathBuf>,
    pub stats_path: PathBuf,
    pub last: Option<TrainStats>,
}

pub fn checkpoint_name(iteration: usize) -> String {
    format!("model_{iteration:05}.ckpt")
}

/// Runs `iterations` (or `cfg.ppo.iterations`) iterations into `out_dir`, writing
/// `stats.csv` and a checkpoint every `cfg.train.checkpoint_every` iterations plus one at the end.
pub fn train(
    cfg: &Config,
    seed: u64,
    out_dir: &Path,
    iterations: Option<usize>,
    mut progress: impl FnMut(&TrainStats),
) -> Result<TrainOutcome, PpoError> {
    let iterations = iterations.unwrap_or(cfg.ppo.iterations);
    let mut trainer = Trainer::new(cfg, seed)?;
    fs::create_dir_all(out_dir)?;
    let stats_path = out_dir.join("stats.csv");
    let mut log = std::io::BufWriter::new(fs::File::create(&stats_path)?);
    writeln!(log, "{}", TrainStats::csv_header(&trainer.column_names()))?;
    let mut checkpoints = Vec::new();
    let mut last = None;
    for _ in 0..iterations {
        let stats = trainer.iterate()?;
        writeln!(log, "{}", stats.csv_row())?;
        log.flush()?;
        progress(&stats);
        let it = stats.iteration;
        if it % cfg.train.checkpoint_every == 0 || it == iterations {
            let path = out_dir.join(checkpoint_name(it));
            trainer.save(&path)?;
            checkpoints.push(path);
        }
        last = Some(stats);
    }
    Ok(TrainOutcome {
        checkpoints,
        stats_path,
        last,
    })
}
