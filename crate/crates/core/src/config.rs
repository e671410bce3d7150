//! The TOML run configuration shared by training, evaluation and the teleop service.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ppo::PpoConfig;
use crate::sim::RobotModel;
use crate::task::{CriticInput, TaskConfig, ACTION_DIM, OBS_DIM};
use crate::terrain::CurriculumGrid;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Which terrains training runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurriculumLayout {
    /// All six terrain families with the promotion/demotion ladder.
    Standard,
    /// Flat ground only.
    Flat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub layout: CurriculumLayout,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            layout: CurriculumLayout::Standard,
        }
    }
}

impl CurriculumConfig {
    pub fn build(&self, n_envs: usize, seed: u64) -> CurriculumGrid {
        match self.layout {
            CurriculumLayout::Standard => CurriculumGrid::standard(n_envs, seed),
            CurriculumLayout::Flat => CurriculumGrid::flat(n_envs, seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub init_log_std: f32,
    pub critic_input: CriticInput,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            actor_hidden: vec![256, 128, 64],
            critic_hidden: vec![256, 128, 64],
            init_log_std: 0.0,
            critic_input: CriticInput::Privileged,
        }
    }
}

impl NetConfig {
    pub fn actor_sizes(&self) -> Vec<usize> {
        let mut s = vec![OBS_DIM];
        s.extend_from_slice(&self.actor_hidden);
        s.push(ACTION_DIM);
        s
    }

    pub fn critic_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.critic_input.dim()];
        s.extend_from_slice(&self.critic_hidden);
        s.push(1);
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Write a checkpoint every this many iterations (and after the last one).
    pub checkpoint_every: usize,
    pub out_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            checkpoint_every: 500,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub trials: usize,
    /// Success radius around the goal (m).
    pub radius: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            trials: 2000,
            radius: 0.2,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub robot: RobotModel,
    pub task: TaskConfig,
    pub curriculum: CurriculumConfig,
    pub net: NetConfig,
    pub ppo: PpoConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<string>"),
            source: Box::new(e),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Config = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            source: Box::new(e),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.robot
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("robot: {e}")))?;
        self.task
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("task: {e}")))?;
        self.ppo
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("ppo: {e}")))?;
        if self.train.checkpoint_every == 0 {
            return Err(ConfigError::Invalid(
                "train.checkpoint_every must be > 0".into(),
            ));
        }
        if self.eval.trials == 0 || self.eval.radius <= 0.0 {
            return Err(ConfigError::Invalid(
                "eval.trials and eval.radius must be > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, ConfigError> {
        serde_json::from_value(v.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml("[ppo]\nlamda = 0.9\n").is_err());
    }

    #[test]
    fn shipped_configs_parse() {
        for name in ["default.toml", "flat.toml", "no_priv.toml", "no_bool.toml"] {
            let path = Path::new(env!("CARGO_MANIFEST_DIR"))
                .join("../../configs")
                .join(name);
            Config::from_file(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn json_round_trip() {
        let mut c = Config::default();
        c.net.critic_input = CriticInput::ActorObservation;
        c.curriculum.layout = CurriculumLayout::Flat;
        assert_eq!(Config::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn network_sizes_follow_critic_input() {
        let mut c = NetConfig::default();
        assert_eq!(c.actor_sizes(), vec![23, 256, 128, 64, 6]);
        assert_eq!(c.critic_sizes(), vec![49, 256, 128, 64, 1]);
        c.critic_input = CriticInput::ActorObservation;
        assert_eq!(c.critic_sizes()[0], 23);
    }
}
