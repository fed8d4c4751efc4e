/// GAE over a time-major batch (`index = t · n_envs + e`). `dones[i]` marks
/// the last step of an episode; `last_values` bootstraps the step after the
/// horizon. Returns `(advantages, returns)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_values: &[f64],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = last_values.len();
    assert!(n > 0 && rewards.len().is_multiple_of(n) && values.len() == rewards.len() && dones.len() == rewards.len());
    let steps = rewards.len() / n;
    let mut adv = vec![0.0; rewards.len()];
    for e in 0..n {
        let mut running = 0.0;
        for t in (0..steps).rev() {
            let i = t * n + e;
            let next_value = if t + 1 == steps { last_values[e] } else { values[i + n] };
            let live = if dones[i] { 0.0 } else { 1.0 };
            let delta = rewards[i] + gamma * next_value * live - values[i];
            running = delta + gamma * lambda * live * running;
            adv[i] = running;
        }
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shifts and scales to mean 0, std 1 (unchanged scale when the std vanishes).
pub fn normalize(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = if std > 1e-8 { 1.0 / std } else { 1.0 };
    for v in x.iter_mut() {
        *v = (*v - mean) * scale;
    }
}
