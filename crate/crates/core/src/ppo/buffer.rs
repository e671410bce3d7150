use rand::Rng;

use crate::net::{ActorCritic, ForwardCache};
use crate::task::{Termination, VecEnv};

/// One iteration of experience, row `t * n_envs + e`.
#[derive(Clone, Debug)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub steps: usize,
    pub obs_dim: usize,
    pub critic_dim: usize,
    pub act_dim: usize,
    pub obs: Vec<f32>,
    pub critic_obs: Vec<f32>,
    pub actions: Vec<f32>,
    /// Behaviour-policy log-probabilities.
    pub log_probs: Vec<f32>,
    /// Behaviour-policy means.
    pub means: Vec<f32>,
    /// Behaviour-policy log-std (constant over the rollout).
    pub log_std: Vec<f32>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Subset of `dones` that ended by reaching the horizon.
    pub timeouts: Vec<bool>,
    /// Critic value of the observation after the last step.
    pub last_values: Vec<f64>,
    actor_cache: ForwardCache<f32>,
    critic_cache: ForwardCache<f32>,
}

impl RolloutBuffer {
    pub fn new(
        n_envs: usize,
        steps: usize,
        obs_dim: usize,
        critic_dim: usize,
        act_dim: usize,
    ) -> Self {
        let len = n_envs * steps;
        Self {
            n_envs,
            steps,
            obs_dim,
            critic_dim,
            act_dim,
            obs: vec![0.0; len * obs_dim],
            critic_obs: vec![0.0; len * critic_dim],
            actions: vec![0.0; len * act_dim],
            log_probs: vec![0.0; len],
            means: vec![0.0; len * act_dim],
            log_std: vec![0.0; act_dim],
            rewards: vec![0.0; len],
            values: vec![0.0; len],
            dones: vec![false; len],
            timeouts: vec![false; len],
            last_values: vec![0.0; n_envs],
            actor_cache: ForwardCache::default(),
            critic_cache: ForwardCache::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.n_envs * self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Steps every environment `buffer.steps` times with actions sampled from the
/// actor, recording everything the update needs.
pub fn collect_rollouts<R: Rng + ?Sized>(
    envs: &mut VecEnv,
    model: &ActorCritic,
    buffer: &mut RolloutBuffer,
    rng: &mut R,
) -> Result<(), crate::net::NetError> {
    let n = buffer.n_envs;
    assert_eq!(envs.len(), n);
    let (od, cd, ad) = (buffer.obs_dim, buffer.critic_dim, buffer.act_dim);
    buffer.log_std.copy_from_slice(&model.actor.log_std);
    let mut rewards = vec![0.0f32; n];
    let mut dones: Vec<Option<Termination>> = vec![None; n];
    for t in 0..buffer.steps {
        let rows = t * n..(t + 1) * n;
        buffer.obs[rows.start * od..rows.end * od].copy_from_slice(envs.observations());
        buffer.critic_obs[rows.start * cd..rows.end * cd]
            .copy_from_slice(envs.critic_observations());

        let means = model.actor.mean_batch(
            &buffer.obs[rows.start * od..rows.end * od],
            n,
            &mut buffer.actor_cache,
        )?;
        buffer.means[rows.start * ad..rows.end * ad].copy_from_slice(means);
        model.actor.sample_from_means(
            &buffer.means[rows.start * ad..rows.end * ad],
            &mut buffer.actions[rows.start * ad..rows.end * ad],
            &mut buffer.log_probs[rows.clone()],
            rng,
        );
        let values = model.critic.forward_batch(
            &buffer.critic_obs[rows.start * cd..rows.end * cd],
            n,
            &mut buffer.critic_cache,
        )?;
        for (dst, &v) in buffer.values[rows.clone()].iter_mut().zip(values) {
            *dst = v as f64;
        }

        envs.step(
            &buffer.actions[rows.start * ad..rows.end * ad],
            &mut rewards,
            &mut dones,
        );
        for e in 0..n {
            let i = rows.start + e;
            buffer.rewards[i] = rewards[e] as f64;
            buffer.dones[i] = dones[e].is_some();
            buffer.timeouts[i] = dones[e] == Some(Termination::Timeout);
        }
    }
    let values =
        model
            .critic
            .forward_batch(envs.critic_observations(), n, &mut buffer.critic_cache)?;
    for (dst, &v) in buffer.last_values.iter_mut().zip(values) {
        *dst = v as f64;
    }
    Ok(())
}
