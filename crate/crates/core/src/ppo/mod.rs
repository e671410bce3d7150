//! Clipped-surrogate PPO with an asymmetric critic and no bootstrapping at episode ends.

mod buffer;
mod gae;
mod train;
mod update;

use serde::{Deserialize, Serialize};

pub use buffer::{collect_rollouts, RolloutBuffer};
pub use gae::{compute_gae_finite_horizon, normalize_advantages};
pub use train::{checkpoint_name, train, TrainOutcome, TrainStats, Trainer};
pub use update::{
    adapt_learning_rate, clip_grad_norm, gaussian_kl, surrogate_grad, Learner, UpdateStats,
};

#[derive(Debug, thiserror::Error)]
pub enum PpoError {
    #[error("non-finite loss or gradient; update rolled back")]
    NonFiniteLoss,
    #[error(transparent)]
    Net(#[from] crate::net::NetError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub n_envs: usize,
    /// Control steps per environment per iteration.
    pub rollout_steps: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub learning_rate: f64,
    pub adaptive_lr: bool,
    pub kl_target: f64,
    pub lr_min: f64,
    pub lr_max: f64,
    pub max_grad_norm: f64,
    pub iterations: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            n_envs: 1024,
            rollout_steps: 48,
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            entropy_coef: 0.005,
            value_coef: 1.0,
            epochs: 5,
            minibatches: 4,
            learning_rate: 3e-4,
            adaptive_lr: true,
            kl_target: 0.01,
            lr_min: 1e-5,
            lr_max: 1e-2,
            max_grad_norm: 1.0,
            iterations: 5000,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (self.n_envs > 0, "n_envs must be > 0"),
            (self.rollout_steps > 0, "rollout_steps must be > 0"),
            (
                self.gamma > 0.0 && self.gamma <= 1.0,
                "gamma must be in (0, 1]",
            ),
            (
                (0.0..=1.0).contains(&self.lambda),
                "lambda must be in [0, 1]",
            ),
            (self.clip > 0.0, "clip must be > 0"),
            (self.epochs > 0, "epochs must be > 0"),
            (
                self.minibatches > 0 && self.minibatches <= self.n_envs * self.rollout_steps,
                "minibatches must be in 1..=n_envs*rollout_steps",
            ),
            (
                self.lr_min > 0.0
                    && self.lr_min <= self.learning_rate
                    && self.learning_rate <= self.lr_max,
                "learning_rate must lie in [lr_min, lr_max]",
            ),
            (self.max_grad_norm > 0.0, "max_grad_norm must be > 0"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(msg.to_string()),
            None => Ok(()),
        }
    }
}
