/// Generalized advantage estimation over a `steps × n_envs` buffer (index `t * n_envs + e`).
///
/// Any finished episode (fall or timeout) contributes a terminal value of zero.
/// Only the cut at the end of the rollout bootstraps, from `last_values`.
/// Returns `(advantages, returns)`.
pub fn compute_gae_finite_horizon(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_values: &[f64],
    n_envs: usize,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let len = rewards.len();
    assert_eq!(values.len(), len);
    assert_eq!(dones.len(), len);
    assert_eq!(last_values.len(), n_envs);
    assert_eq!(len % n_envs.max(1), 0);
    let steps = len / n_envs.max(1);
    let mut adv = vec![0.0; len];
    let mut ret = vec![0.0; len];
    for e in 0..n_envs {
        let mut gae = 0.0;
        for t in (0..steps).rev() {
            let i = t * n_envs + e;
            let next_value = if t + 1 == steps {
                last_values[e]
            } else {
                values[i + n_envs]
            };
            let live = if dones[i] { 0.0 } else { 1.0 };
            let delta = rewards[i] + gamma * next_value * live - values[i];
            gae = delta + gamma * lambda * live * gae;
            adv[i] = gae;
            ret[i] = gae + values[i];
        }
    }
    (adv, ret)
}

/// Shifts and scales to zero mean and unit (population) standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = if std > 1e-12 {
            (*a - mean) / std
        } else {
            *a - mean
        };
    }
}
