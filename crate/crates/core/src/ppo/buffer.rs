use crate::error::{Error, Result};
use crate::seeding::{derive_seed, rng_for};

use super::{Environment, PolicyNet, ValueNet};

/// Time-aligned rollout data. Observations are stored row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBuffer {
    pub obs_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// The episode terminated at this step.
    pub dones: Vec<bool>,
    /// Value of the observation following the last step, used when the
    /// buffer ends mid-episode.
    pub bootstrap_value: f64,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Total reward of every episode completed inside the buffer.
    pub episode_returns: Vec<f64>,
    /// Per-episode sums of the reward terms, when the environment reports them.
    pub episode_breakdowns: Vec<[f64; 8]>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn observation(&self, t: usize) -> &[f64] {
        &self.obs[t * self.obs_dim..(t + 1) * self.obs_dim]
    }

    /// Mean episode return and mean per-episode reward terms (zeros when
    /// no episode finished).
    pub fn episode_summary(&self) -> (f64, [f64; 8]) {
        let n = self.episode_returns.len();
        if n == 0 {
            return (0.0, [0.0; 8]);
        }
        let mean = self.episode_returns.iter().sum::<f64>() / n as f64;
        let mut terms = [0.0; 8];
        let m = self.episode_breakdowns.len().max(1) as f64;
        for b in &self.episode_breakdowns {
            for (t, v) in terms.iter_mut().zip(b) {
                *t += v / m;
            }
        }
        (mean, terms)
    }
}

/// Runs `policy` for exactly `n_steps` steps, resetting the environment
/// whenever an episode ends. Episode `k` uses seed `derive_seed(seed, [k])`.
pub fn collect_rollouts<E: Environment + ?Sized>(
    env: &mut E,
    policy: &PolicyNet,
    value: &ValueNet,
    n_steps: usize,
    seed: u64,
) -> Result<RolloutBuffer> {
    let obs_dim = env.observation_dim();
    if policy.obs_dim() != obs_dim || policy.action_count() != env.action_count() {
        return Err(Error::WidthMismatch { expected: obs_dim, got: policy.obs_dim() });
    }
    let mut buffer = RolloutBuffer { obs_dim, ..Default::default() };
    if n_steps == 0 {
        return Ok(buffer);
    }
    let mut rng = rng_for(seed, &[u64::MAX]);
    let mut episode = 0u64;
    let mut obs = env.reset(derive_seed(seed, &[episode]))?;
    let mut episode_return = 0.0;
    let mut episode_terms = [0.0; 8];
    let mut has_terms = false;
    for t in 0..n_steps {
        let (action, log_prob) = policy.sample(&obs, &mut rng)?;
        let v = value.value(&obs)?;
        let step = env
            .step(action)
            .map_err(|e| Error::InsufficientData(format!("environment failed in episode {episode} at step {t}: {e}")))?;
        buffer.obs.extend_from_slice(&obs);
        buffer.actions.push(action);
        buffer.log_probs.push(log_prob);
        buffer.rewards.push(step.reward);
        buffer.values.push(v);
        buffer.dones.push(step.done);
        episode_return += step.reward;
        if let Some(b) = step.breakdown {
            has_terms = true;
            for (acc, x) in episode_terms.iter_mut().zip(b.as_array()) {
                *acc += x;
            }
        }
        if step.done {
            buffer.episode_returns.push(episode_return);
            if has_terms {
                buffer.episode_breakdowns.push(episode_terms);
            }
            episode_return = 0.0;
            episode_terms = [0.0; 8];
            has_terms = false;
            episode += 1;
            if t + 1 < n_steps {
                obs = env.reset(derive_seed(seed, &[episode]))?;
            }
        } else {
            obs = step.obs;
        }
    }
    buffer.bootstrap_value = if buffer.dones[n_steps - 1] { 0.0 } else { value.value(&obs)? };
    Ok(buffer)
}

/// Generalized advantage estimation, in place.
pub fn compute_advantages(buffer: &mut RolloutBuffer, gamma: f64, lambda: f64) {
    let n = buffer.len();
    buffer.advantages = vec![0.0; n];
    buffer.returns = vec![0.0; n];
    let mut gae = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 == n { buffer.bootstrap_value } else { buffer.values[t + 1] };
        let live = if buffer.dones[t] { 0.0 } else { 1.0 };
        let delta = buffer.rewards[t] + gamma * next_value * live - buffer.values[t];
        gae = delta + gamma * lambda * live * gae;
        buffer.advantages[t] = gae;
        buffer.returns[t] = gae + buffer.values[t];
    }
}
