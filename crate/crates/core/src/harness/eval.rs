use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::config::Config;
use crate::net::{load_params, CheckpointMeta, GaussianPolicy};
use crate::task::{Env, TaskConfig, Termination, ACTION_DIM, OBS_DIM};
use crate::terrain::TerrainSpec;
use crate::util::{derive_seed, wilson_interval};

/// Value forced onto the terrain-boolean observation during evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoolMode {
    On,
    Off,
}

impl FromStr for BoolMode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "on" => Ok(BoolMode::On),
            "off" => Ok(BoolMode::Off),
            _ => Err(HarnessError::Invalid(format!(
                "mode must be 'on' or 'off', got '{s}'"
            ))),
        }
    }
}

impl fmt::Display for BoolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoolMode::On => "on",
            BoolMode::Off => "off",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub checkpoint: PathBuf,
    pub terrain: TerrainSpec,
    pub trials: usize,
    pub mode: BoolMode,
    /// Success radius around the goal (m).
    pub radius: f64,
    pub seed: u64,
    /// Keep `(t, forward velocity, x, z)` for every trial.
    pub record_traces: bool,
}

impl EvalSpec {
    pub fn new(
        checkpoint: impl Into<PathBuf>,
        terrain: TerrainSpec,
        trials: usize,
        mode: BoolMode,
    ) -> Self {
        Self {
            checkpoint: checkpoint.into(),
            terrain,
            trials,
            mode,
            radius: 0.2,
            seed: 0,
            record_traces: false,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 || !(self.radius > 0.0) {
            return Err(HarnessError::Invalid(
                "trials and radius must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// One row per control tick: `[t, forward velocity, base x, base z]`.
pub type Trace = Vec<[f64; 4]>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub termination: Termination,
    pub final_distance: f64,
    pub success: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Trace>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: String,
    pub terrain: String,
    pub mode: BoolMode,
    pub trials: usize,
    pub radius: f64,
    pub seed: u64,
    pub successes: usize,
    /// Percent.
    pub success_rate: f64,
    /// 95% Wilson interval on the success rate, percent.
    pub success_ci95: [f64; 2],
    pub mean_final_distance: f64,
    /// Percent of trials ending in a fall or divergence.
    pub fall_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub traces: Option<Vec<Trace>>,
}

/// A checkpoint's actor plus the task settings it was trained with.
#[derive(Clone, Debug)]
pub struct LoadedPolicy {
    pub policy: GaussianPolicy,
    pub config: Config,
    pub meta: CheckpointMeta,
}

pub fn load_policy(path: &Path) -> Result<LoadedPolicy, HarnessError> {
    let (model, meta) = load_params(path).map_err(|source| HarnessError::Checkpoint {
        path: path.to_path_buf(),
        source,
    })?;
    if model.actor.obs_dim() != OBS_DIM || model.actor.act_dim() != ACTION_DIM {
        return Err(HarnessError::Invalid(format!(
            "{}: actor maps {} -> {}, expected {OBS_DIM} -> {ACTION_DIM}",
            path.display(),
            model.actor.obs_dim(),
            model.actor.act_dim()
        )));
    }
    let config = if meta.config.is_null() {
        Config::default()
    } else {
        Config::from_json(&meta.config)?
    };
    Ok(LoadedPolicy {
        policy: model.actor,
        config,
        meta,
    })
}

/// Task settings used for evaluation: the training settings without pushes.
pub fn eval_task_config(cfg: &Config) -> TaskConfig {
    let mut t = cfg.task.clone();
    t.push.enabled = false;
    t
}

/// Runs one episode with mean actions, calling `on_tick` after every control tick.
/// Returns how it ended and the final distance to the goal.
pub fn run_episode(
    policy: &GaussianPolicy,
    cfg: &Config,
    terrain: &TerrainSpec,
    mode: BoolMode,
    seed: u64,
    mut on_tick: impl FnMut(&Env),
) -> Result<(Termination, f64), HarnessError> {
    let field = terrain.build(seed)?;
    let mut env = Env::new(
        Arc::new(cfg.robot.clone()),
        Arc::new(eval_task_config(cfg)),
        seed,
    );
    env.reset(&field, (0, 0));
    env.set_terrain_bool(mode == BoolMode::On);
    let mut obs = [0.0f32; OBS_DIM];
    loop {
        for (dst, src) in obs.iter_mut().zip(env.observe()) {
            *dst = src as f32;
        }
        let mean = policy.mean(&obs)?;
        let action: [f64; ACTION_DIM] = std::array::from_fn(|k| mean[k] as f64);
        let out = env.step(&action);
        on_tick(&env);
        if let Some(term) = out.done {
            return Ok((term, env.distance_to_goal()));
        }
    }
}

pub fn trace_row(env: &Env) -> [f64; 4] {
    let s = env.state();
    [env.episode().t, s.vx, s.x, s.z]
}

pub fn run_trial(
    policy: &GaussianPolicy,
    cfg: &Config,
    terrain: &TerrainSpec,
    mode: BoolMode,
    radius: f64,
    seed: u64,
    record: bool,
) -> Result<TrialResult, HarnessError> {
    let mut trace = record.then(Vec::new);
    let (termination, final_distance) = run_episode(policy, cfg, terrain, mode, seed, |env| {
        if let Some(tr) = trace.as_mut() {
            tr.push(trace_row(env));
        }
    })?;
    Ok(TrialResult {
        termination,
        final_distance,
        success: termination == Termination::Timeout && final_distance <= radius,
        trace,
    })
}

fn worker_count(trials: usize) -> usize {
    std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(trials)
        .max(1)
}

/// Runs `spec.trials` episodes (spread over threads; results do not depend on the thread count).
pub fn evaluate_policy(
    policy: &GaussianPolicy,
    cfg: &Config,
    spec: &EvalSpec,
) -> Result<EvalReport, HarnessError> {
    spec.validate()?;
    let workers = worker_count(spec.trials);
    let mut slots: Vec<Option<Result<TrialResult, HarnessError>>> =
        (0..spec.trials).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunk = spec.trials.div_ceil(workers);
        for (w, part) in slots.chunks_mut(chunk).enumerate() {
            scope.spawn(move || {
                for (k, slot) in part.iter_mut().enumerate() {
                    let trial = (w * chunk + k) as u64;
                    *slot = Some(run_trial(
                        policy,
                        cfg,
                        &spec.terrain,
                        spec.mode,
                        spec.radius,
                        derive_seed(spec.seed, &[trial]),
                        spec.record_traces,
                    ));
                }
            });
        }
    });
    let mut results = Vec::with_capacity(spec.trials);
    for slot in slots {
        results.push(slot.expect("every trial ran")?);
    }
    Ok(summarize(spec, results))
}

fn summarize(spec: &EvalSpec, results: Vec<TrialResult>) -> EvalReport {
    let n = results.len();
    let successes = results.iter().filter(|r| r.success).count();
    let falls = results
        .iter()
        .filter(|r| r.termination != Termination::Timeout)
        .count();
    let (lo, hi) = wilson_interval(successes, n, 1.96);
    let mean_final_distance = results.iter().map(|r| r.final_distance).sum::<f64>() / n as f64;
    let traces = spec.record_traces.then(|| {
        results
            .into_iter()
            .map(|r| r.trace.unwrap_or_default())
            .collect()
    });
    EvalReport {
        checkpoint: spec.checkpoint.display().to_string(),
        terrain: spec.terrain.to_string(),
        mode: spec.mode,
        trials: n,
        radius: spec.radius,
        seed: spec.seed,
        successes,
        success_rate: 100.0 * successes as f64 / n as f64,
        success_ci95: [100.0 * lo, 100.0 * hi],
        mean_final_distance,
        fall_rate: 100.0 * falls as f64 / n as f64,
        traces,
    }
}

/// Loads `spec.checkpoint` and evaluates it.
pub fn evaluate(spec: &EvalSpec) -> Result<EvalReport, HarnessError> {
    spec.validate()?;
    let loaded = load_policy(&spec.checkpoint)?;
    evaluate_policy(&loaded.policy, &loaded.config, spec)
}
