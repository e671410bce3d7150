use rand::seq::SliceRandom;
use rand::Rng;

use super::{PpoConfig, PpoError, RolloutBuffer};
use crate::net::{gaussian_entropy, gaussian_log_prob, ActorCritic, Adam, ForwardCache};

/// Clipped-surrogate loss `−min(r·A, clip(r, 1−ε, 1+ε)·A)` of one sample and its
/// gradient with respect to the mean and log-std. Returns `(loss, ratio)`.
#[allow(clippy::too_many_arguments)]
pub fn surrogate_grad(
    mean: &[f64],
    log_std: &[f64],
    action: &[f64],
    logp_old: f64,
    advantage: f64,
    clip: f64,
    grad_mean: &mut [f64],
    grad_log_std: &mut [f64],
) -> (f64, f64) {
    let logp = gaussian_log_prob(mean, log_std, action);
    let ratio = (logp - logp_old).exp();
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    let loss = -unclipped.min(clipped);
    // the clipped branch is flat in the parameters
    let dlogp = if unclipped <= clipped {
        -ratio * advantage
    } else {
        0.0
    };
    for k in 0..mean.len() {
        let std = log_std[k].exp();
        let z = (action[k] - mean[k]) / std;
        grad_mean[k] = dlogp * z / std;
        grad_log_std[k] = dlogp * (z * z - 1.0);
    }
    (loss, ratio)
}

/// KL(old ‖ new) between diagonal Gaussians.
pub fn gaussian_kl(
    mean_old: &[f64],
    log_std_old: &[f64],
    mean_new: &[f64],
    log_std_new: &[f64],
) -> f64 {
    (0..mean_old.len())
        .map(|k| {
            let var_old = (2.0 * log_std_old[k]).exp();
            let var_new = (2.0 * log_std_new[k]).exp();
            log_std_new[k] - log_std_old[k]
                + (var_old + (mean_old[k] - mean_new[k]).powi(2)) / (2.0 * var_new)
                - 0.5
        })
        .sum()
}

/// Halves the rate when `kl > 2·target`, grows it by 1.5 when `kl < target/2`.
pub fn adapt_learning_rate(lr: f64, kl: f64, cfg: &PpoConfig) -> f64 {
    let next = if kl > 2.0 * cfg.kl_target {
        lr / 2.0
    } else if kl < cfg.kl_target / 2.0 {
        lr * 1.5
    } else {
        lr
    };
    next.clamp(cfg.lr_min, cfg.lr_max)
}

/// Scales the concatenation of `parts` down to norm `max`; returns the norm before scaling.
pub fn clip_grad_norm(parts: &mut [&mut [f32]], max: f64) -> f64 {
    let norm = parts
        .iter()
        .flat_map(|p| p.iter())
        .map(|&g| (g as f64) * (g as f64))
        .sum::<f64>()
        .sqrt();
    if norm > max {
        let s = (max / (norm + 1e-6)) as f32;
        for p in parts.iter_mut() {
            for g in p.iter_mut() {
                *g *= s;
            }
        }
    }
    norm
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub surrogate_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub learning_rate: f64,
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
}

/// Owns the networks and their optimizers.
#[derive(Clone, Debug)]
pub struct Learner {
    pub model: ActorCritic,
    pub learning_rate: f64,
    actor_opt: Adam<f32>,
    log_std_opt: Adam<f32>,
    critic_opt: Adam<f32>,
}

#[derive(Default)]
struct Scratch {
    obs: Vec<f32>,
    critic_obs: Vec<f32>,
    grad_means: Vec<f32>,
    grad_values: Vec<f32>,
    actor_grads: Vec<f32>,
    critic_grads: Vec<f32>,
    actor_cache: ForwardCache<f32>,
    critic_cache: ForwardCache<f32>,
}

impl Learner {
    pub fn new(model: ActorCritic, learning_rate: f64) -> Self {
        Self {
            actor_opt: Adam::new(model.actor.net.params().len()),
            log_std_opt: Adam::new(model.actor.log_std.len()),
            critic_opt: Adam::new(model.critic.params().len()),
            model,
            learning_rate,
        }
    }

    /// Runs every epoch and minibatch over `buf`. `advantages` should already be
    /// normalized. On a non-finite loss the learner is left exactly as it was.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        buf: &RolloutBuffer,
        advantages: &[f64],
        returns: &[f64],
        cfg: &PpoConfig,
        rng: &mut R,
    ) -> Result<UpdateStats, PpoError> {
        let snapshot = self.clone();
        let result = self.run_epochs(buf, advantages, returns, cfg, rng);
        if result.is_err() {
            *self = snapshot;
        }
        result
    }

    fn run_epochs<R: Rng + ?Sized>(
        &mut self,
        buf: &RolloutBuffer,
        advantages: &[f64],
        returns: &[f64],
        cfg: &PpoConfig,
        rng: &mut R,
    ) -> Result<UpdateStats, PpoError> {
        let len = buf.len();
        assert_eq!(advantages.len(), len);
        assert_eq!(returns.len(), len);
        let (od, cd, ad) = (buf.obs_dim, buf.critic_dim, buf.act_dim);
        let mb_size = len.div_ceil(cfg.minibatches);
        let old_log_std: Vec<f64> = buf.log_std.iter().map(|&v| v as f64).collect();
        let mut perm: Vec<usize> = (0..len).collect();
        let mut s = Scratch::default();
        let mut stats = UpdateStats::default();
        let mut count = 0usize;
        let mut gm = vec![0.0; ad];
        let mut gl = vec![0.0; ad];
        let mut mean = vec![0.0; ad];
        let mut old_mean = vec![0.0; ad];
        let mut action = vec![0.0; ad];

        for _ in 0..cfg.epochs {
            perm.shuffle(rng);
            for idx in perm.chunks(mb_size) {
                let b = idx.len();
                s.obs.clear();
                s.critic_obs.clear();
                for &i in idx {
                    s.obs.extend_from_slice(&buf.obs[i * od..(i + 1) * od]);
                    s.critic_obs
                        .extend_from_slice(&buf.critic_obs[i * cd..(i + 1) * cd]);
                }
                let log_std = self.model.actor.log_std_f64();
                let means = self
                    .model
                    .actor
                    .mean_batch(&s.obs, b, &mut s.actor_cache)?
                    .to_vec();

                let mut kl = 0.0;
                for (r, &i) in idx.iter().enumerate() {
                    for k in 0..ad {
                        mean[k] = means[r * ad + k] as f64;
                        old_mean[k] = buf.means[i * ad + k] as f64;
                    }
                    kl += gaussian_kl(&old_mean, &old_log_std, &mean, &log_std);
                }
                kl /= b as f64;
                if cfg.adaptive_lr && kl.is_finite() {
                    self.learning_rate = adapt_learning_rate(self.learning_rate, kl, cfg);
                }

                s.grad_means.clear();
                s.grad_means.resize(b * ad, 0.0);
                let mut grad_log_std = vec![0.0f64; ad];
                let mut surrogate = 0.0;
                let mut clipped = 0usize;
                for (r, &i) in idx.iter().enumerate() {
                    for k in 0..ad {
                        mean[k] = means[r * ad + k] as f64;
                        action[k] = buf.actions[i * ad + k] as f64;
                    }
                    let (loss, ratio) = surrogate_grad(
                        &mean,
                        &log_std,
                        &action,
                        buf.log_probs[i] as f64,
                        advantages[i],
                        cfg.clip,
                        &mut gm,
                        &mut gl,
                    );
                    surrogate += loss;
                    if (ratio - 1.0).abs() > cfg.clip {
                        clipped += 1;
                    }
                    for k in 0..ad {
                        s.grad_means[r * ad + k] = (gm[k] / b as f64) as f32;
                        grad_log_std[k] += gl[k] / b as f64;
                    }
                }
                surrogate /= b as f64;
                let entropy = gaussian_entropy(&log_std);
                for g in grad_log_std.iter_mut() {
                    *g -= cfg.entropy_coef;
                }

                let values =
                    self.model
                        .critic
                        .forward_batch(&s.critic_obs, b, &mut s.critic_cache)?;
                s.grad_values.clear();
                let mut value_loss = 0.0;
                for (r, &i) in idx.iter().enumerate() {
                    let err = values[r] as f64 - returns[i];
                    value_loss += err * err;
                    s.grad_values
                        .push((cfg.value_coef * 2.0 * err / b as f64) as f32);
                }
                value_loss /= b as f64;

                if !(surrogate.is_finite() && value_loss.is_finite() && kl.is_finite()) {
                    return Err(PpoError::NonFiniteLoss);
                }

                s.actor_grads.clear();
                s.actor_grads
                    .resize(self.model.actor.net.params().len(), 0.0);
                self.model.actor.net.backward_batch(
                    &mut s.actor_cache,
                    &s.grad_means,
                    &mut s.actor_grads,
                    None,
                )?;
                s.critic_grads.clear();
                s.critic_grads.resize(self.model.critic.params().len(), 0.0);
                self.model.critic.backward_batch(
                    &mut s.critic_cache,
                    &s.grad_values,
                    &mut s.critic_grads,
                    None,
                )?;
                let mut ls_grads: Vec<f32> = grad_log_std.iter().map(|&g| g as f32).collect();

                let actor_norm =
                    clip_grad_norm(&mut [&mut s.actor_grads, &mut ls_grads], cfg.max_grad_norm);
                let critic_norm = clip_grad_norm(&mut [&mut s.critic_grads], cfg.max_grad_norm);
                if !(actor_norm.is_finite() && critic_norm.is_finite()) {
                    return Err(PpoError::NonFiniteLoss);
                }

                let lr = self.learning_rate;
                self.actor_opt
                    .step(self.model.actor.net.params_mut(), &s.actor_grads, lr);
                self.log_std_opt
                    .step(&mut self.model.actor.log_std, &ls_grads, lr);
                self.critic_opt
                    .step(self.model.critic.params_mut(), &s.critic_grads, lr);
                if !self.model.all_finite() {
                    return Err(PpoError::NonFiniteLoss);
                }

                stats.surrogate_loss += surrogate;
                stats.value_loss += value_loss;
                stats.entropy += entropy;
                stats.kl += kl;
                stats.clip_fraction += clipped as f64 / b as f64;
                stats.actor_grad_norm += actor_norm;
                stats.critic_grad_norm += critic_norm;
                count += 1;
            }
        }
        let c = count.max(1) as f64;
        stats.surrogate_loss /= c;
        stats.value_loss /= c;
        stats.entropy /= c;
        stats.kl /= c;
        stats.clip_fraction /= c;
        stats.actor_grad_norm /= c;
        stats.critic_grad_norm /= c;
        stats.learning_rate = self.learning_rate;
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_policies_give_unit_ratio() {
        let mean = [0.3, -0.1];
        let ls = [0.0, -0.5];
        let a = [0.5, 0.2];
        let lp = gaussian_log_prob(&mean, &ls, &a);
        let (mut gm, mut gl) = ([0.0; 2], [0.0; 2]);
        let (loss, ratio) = surrogate_grad(&mean, &ls, &a, lp, 1.3, 0.2, &mut gm, &mut gl);
        assert!((ratio - 1.0).abs() < 1e-15);
        assert!((loss + 1.3).abs() < 1e-12);
    }

    #[test]
    fn clipped_branch_has_no_gradient() {
        let mean = [0.0];
        let ls = [0.0];
        let a = [0.0];
        // logp_old far below logp so the ratio is large
        let lp = gaussian_log_prob(&mean, &ls, &a) - 1.0;
        let (mut gm, mut gl) = ([1.0], [1.0]);
        let (_, ratio) = surrogate_grad(&mean, &ls, &a, lp, 2.0, 0.2, &mut gm, &mut gl);
        assert!(ratio > 1.2);
        assert_eq!((gm[0], gl[0]), (0.0, 0.0));
    }

    #[test]
    fn kl_rule() {
        let cfg = PpoConfig::default();
        assert_eq!(adapt_learning_rate(1e-3, 0.05, &cfg), 5e-4);
        assert_eq!(adapt_learning_rate(1e-3, 0.001, &cfg), 1.5e-3);
        assert_eq!(adapt_learning_rate(1e-3, 0.01, &cfg), 1e-3);
        assert_eq!(adapt_learning_rate(1.5e-5, 0.05, &cfg), 1e-5);
        assert_eq!(adapt_learning_rate(9e-3, 0.0, &cfg), 1e-2);
    }

    #[test]
    fn kl_of_identical_gaussians_is_zero() {
        assert!(gaussian_kl(&[0.4, 1.0], &[0.1, -0.3], &[0.4, 1.0], &[0.1, -0.3]).abs() < 1e-15);
        assert!(gaussian_kl(&[0.0], &[0.0], &[1.0], &[0.0]) > 0.49);
    }

    #[test]
    fn grad_norm_clipping() {
        let mut a = vec![3.0f32, 0.0];
        let mut b = vec![4.0f32];
        let n = clip_grad_norm(&mut [&mut a, &mut b], 1.0);
        assert!((n - 5.0).abs() < 1e-9);
        let after = ((a[0] * a[0] + b[0] * b[0]) as f64).sqrt();
        assert!((after - 1.0).abs() < 1e-5);
    }
}
