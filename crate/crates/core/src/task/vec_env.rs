use std::collections::VecDeque;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Env, EpisodeSummary, TaskConfig, Termination, ACTION_DIM, OBS_DIM, PRIV_DIM};
use crate::sim::RobotModel;
use crate::terrain::{curriculum_update, CurriculumGrid};
use crate::util::{derive_seed, rng_for};

/// What the critic is fed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticInput {
    /// Noise-free observation followed by the privileged vector.
    Privileged,
    /// The same noisy observation the actor gets.
    ActorObservation,
}

impl CriticInput {
    pub fn dim(self) -> usize {
        match self {
            CriticInput::Privileged => OBS_DIM + PRIV_DIM,
            CriticInput::ActorObservation => OBS_DIM,
        }
    }
}

/// A batch of environments sharing one curriculum.
pub struct VecEnv {
    envs: Vec<Env>,
    grid: CurriculumGrid,
    rng: ChaCha8Rng,
    critic_input: CriticInput,
    obs: Vec<f32>,
    critic_obs: Vec<f32>,
    pos_bias_active: bool,
    gate_history: VecDeque<f64>,
    iter_position: f64,
    iter_episodes: usize,
    finished: Vec<EpisodeSummary>,
}

impl VecEnv {
    pub fn new(
        model: Arc<RobotModel>,
        cfg: Arc<TaskConfig>,
        grid: CurriculumGrid,
        critic_input: CriticInput,
        seed: u64,
    ) -> Self {
        let n = grid.n_envs();
        let envs = (0..n)
            .map(|i| {
                Env::new(
                    model.clone(),
                    cfg.clone(),
                    derive_seed(seed, &[0xE0, i as u64]),
                )
            })
            .collect();
        let mut v = Self {
            envs,
            grid,
            rng: rng_for(seed, &[0xC0]),
            critic_input,
            obs: vec![0.0; n * OBS_DIM],
            critic_obs: vec![0.0; n * critic_input.dim()],
            pos_bias_active: true,
            gate_history: VecDeque::new(),
            iter_position: 0.0,
            iter_episodes: 0,
            finished: Vec::new(),
        };
        for i in 0..n {
            v.reset_env(i);
            v.write_observations(i);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn critic_input(&self) -> CriticInput {
        self.critic_input
    }

    pub fn critic_dim(&self) -> usize {
        self.critic_input.dim()
    }

    pub fn grid(&self) -> &CurriculumGrid {
        &self.grid
    }

    pub fn env(&self, i: usize) -> &Env {
        &self.envs[i]
    }

    pub fn pos_bias_active(&self) -> bool {
        self.pos_bias_active
    }

    /// Actor observations, row-major `n × OBS_DIM`.
    pub fn observations(&self) -> &[f32] {
        &self.obs
    }

    /// Critic inputs, row-major `n × critic_dim`.
    pub fn critic_observations(&self) -> &[f32] {
        &self.critic_obs
    }

    fn reset_env(&mut self, i: usize) {
        let cell = self.grid.cell(i);
        let terrain = self.grid.terrain(cell.0, cell.1).clone();
        self.envs[i].reset(&terrain, cell);
        self.envs[i].set_pos_bias_active(self.pos_bias_active);
    }

    fn write_observations(&mut self, i: usize) {
        let env = &mut self.envs[i];
        let o = env.observe();
        for (dst, src) in self.obs[i * OBS_DIM..(i + 1) * OBS_DIM].iter_mut().zip(o) {
            *dst = src as f32;
        }
        let cd = self.critic_input.dim();
        let row = &mut self.critic_obs[i * cd..(i + 1) * cd];
        match self.critic_input {
            CriticInput::Privileged => {
                let clean = env.observe_clean();
                let p = env.observe_privileged();
                for (dst, src) in row.iter_mut().zip(clean.iter().chain(p.iter())) {
                    *dst = *src as f32;
                }
            }
            CriticInput::ActorObservation => {
                for (dst, src) in row.iter_mut().zip(o) {
                    *dst = src as f32;
                }
            }
        }
    }

    /// Steps every environment with `actions` (`n × ACTION_DIM`), resetting the ones
    /// that finish. Fills `rewards` and `dones` and refreshes the observations.
    pub fn step(
        &mut self,
        actions: &[f32],
        rewards: &mut [f32],
        dones: &mut [Option<Termination>],
    ) {
        assert_eq!(actions.len(), self.len() * ACTION_DIM);
        for i in 0..self.len() {
            let a: [f64; ACTION_DIM] = std::array::from_fn(|k| actions[i * ACTION_DIM + k] as f64);
            let out = self.envs[i].step(&a);
            rewards[i] = out.reward as f32;
            dones[i] = out.done;
            if let Some(term) = out.done {
                let summary = self.envs[i].summary(term);
                self.iter_position += summary.position_reward;
                self.iter_episodes += 1;
                self.finished.push(summary);
                curriculum_update(&mut self.grid, i, summary.final_distance, &mut self.rng);
                self.reset_env(i);
            }
            self.write_observations(i);
        }
    }

    /// Episodes finished since the last call.
    pub fn drain_finished(&mut self) -> Vec<EpisodeSummary> {
        std::mem::take(&mut self.finished)
    }

    /// Updates the running mean behind the heading-bias cutoff. Once the cutoff
    /// trips it stays off.
    pub fn end_iteration(&mut self) {
        if self.iter_episodes > 0 {
            let cfg = self.envs[0].config();
            self.gate_history
                .push_back(self.iter_position / self.iter_episodes as f64);
            while self.gate_history.len() > cfg.pos_bias_window.max(1) {
                self.gate_history.pop_front();
            }
            let mean = self.gate_history.iter().sum::<f64>() / self.gate_history.len() as f64;
            if self.pos_bias_active
                && mean >= cfg.pos_bias_cutoff * cfg.max_episode_position_reward()
            {
                self.pos_bias_active = false;
                for e in &mut self.envs {
                    e.set_pos_bias_active(false);
                }
            }
        }
        self.iter_position = 0.0;
        self.iter_episodes = 0;
    }

    /// Running mean of the per-episode position reward behind the cutoff.
    pub fn position_reward_mean(&self) -> f64 {
        if self.gate_history.is_empty() {
            0.0
        } else {
            self.gate_history.iter().sum::<f64>() / self.gate_history.len() as f64
        }
    }
}
