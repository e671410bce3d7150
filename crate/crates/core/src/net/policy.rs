use rand::Rng;
use rand_distr::StandardNormal;

use super::dense::{DenseNet, ForwardCache};
use super::NetError;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Log density of a diagonal Gaussian.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((&m, &ls), &a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| 0.5 + HALF_LN_2PI + ls).sum()
}

/// Diagonal Gaussian policy with a state-independent standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    pub net: DenseNet<f32>,
    pub log_std: Vec<f32>,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: &[usize],
        act_dim: usize,
        init_log_std: f32,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(act_dim);
        Self {
            net: DenseNet::new(&sizes, 0.01, rng),
            log_std: vec![init_log_std; act_dim],
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn log_std_f64(&self) -> Vec<f64> {
        self.log_std.iter().map(|&v| v as f64).collect()
    }

    /// Mean action for a single observation.
    pub fn mean(&self, obs: &[f32]) -> Result<Vec<f32>, NetError> {
        self.net.forward(obs)
    }

    /// Draws `mean + std ⊙ ε` for each row of `means` and writes the log-probabilities.
    pub fn sample_from_means<R: Rng + ?Sized>(
        &self,
        means: &[f32],
        actions: &mut [f32],
        log_probs: &mut [f32],
        rng: &mut R,
    ) {
        let d = self.act_dim();
        let log_std = self.log_std_f64();
        for (b, (mean, act)) in means
            .chunks_exact(d)
            .zip(actions.chunks_exact_mut(d))
            .enumerate()
        {
            let mut lp = 0.0;
            for k in 0..d {
                let eps: f64 = rng.sample(StandardNormal);
                act[k] = (mean[k] as f64 + log_std[k].exp() * eps) as f32;
                // density of the action actually stored (after rounding to f32)
                let z = (act[k] as f64 - mean[k] as f64) / log_std[k].exp();
                lp += -0.5 * z * z - log_std[k] - HALF_LN_2PI;
            }
            log_probs[b] = lp as f32;
        }
    }

    /// Samples one action and returns it with its log-probability.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        obs: &[f32],
        rng: &mut R,
    ) -> Result<(Vec<f32>, f64), NetError> {
        let mean = self.mean(obs)?;
        let mut action = vec![0.0; mean.len()];
        let mut lp = [0.0f32];
        self.sample_from_means(&mean, &mut action, &mut lp, rng);
        let exact = gaussian_log_prob(
            &mean.iter().map(|&v| v as f64).collect::<Vec<_>>(),
            &self.log_std_f64(),
            &action.iter().map(|&v| v as f64).collect::<Vec<_>>(),
        );
        Ok((action, exact))
    }

    pub fn entropy(&self) -> f64 {
        gaussian_entropy(&self.log_std_f64())
    }

    pub fn mean_batch<'c>(
        &self,
        obs: &[f32],
        batch: usize,
        cache: &'c mut ForwardCache<f32>,
    ) -> Result<&'c [f32], NetError> {
        self.net.forward_batch(obs, batch, cache)
    }
}

/// The trained pair: actor and critic.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorCritic {
    pub actor: GaussianPolicy,
    pub critic: DenseNet<f32>,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        critic_dim: usize,
        act_dim: usize,
        actor_hidden: &[usize],
        critic_hidden: &[usize],
        init_log_std: f32,
        rng: &mut R,
    ) -> Self {
        let actor = GaussianPolicy::new(obs_dim, actor_hidden, act_dim, init_log_std, rng);
        let mut sizes = vec![critic_dim];
        sizes.extend_from_slice(critic_hidden);
        sizes.push(1);
        Self {
            actor,
            critic: DenseNet::new(&sizes, 1.0, rng),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.actor.net.all_finite()
            && self.actor.log_std.iter().all(|v| v.is_finite())
            && self.critic.all_finite()
    }
}
