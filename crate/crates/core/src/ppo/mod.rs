//! Proximal policy optimization over discrete actions with generalized
//! advantage estimation.

mod buffer;
mod update;

pub use buffer::{collect_rollouts, compute_advantages, RolloutBuffer};
pub use update::{ppo_update, value_update, PpoStats};

use ndarray::ArrayView2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::RewardBreakdown;
use crate::error::{Error, Result};
use crate::nn::{log_softmax, sample_index, softmax, Activation, Adam, Checkpoint, LayerSpec, Mlp, Parameterized};

/// Outcome of one environment step as seen by a learner.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub breakdown: Option<RewardBreakdown>,
}

/// Discrete-action episodic environment.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_count(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: usize) -> Result<EnvStep>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub entropy_coef: f64,
    pub lr: f64,
    /// Learning rate of the separate value network.
    pub value_lr: f64,
    /// Remaining epochs are skipped once the approximate KL exceeds this.
    pub kl_ceiling: f64,
    pub normalize_advantages: bool,
    pub hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            epochs: 4,
            minibatch: 256,
            gamma: 0.99,
            lambda: 0.95,
            entropy_coef: 0.01,
            lr: 3e-4,
            value_lr: 1e-3,
            kl_ceiling: 0.05,
            normalize_advantages: true,
            hidden: vec![32, 32],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.clip) {
            return Err(Error::Config(format!("clip must lie in [0, 1), got {}", self.clip)));
        }
        for (name, v) in [("gamma", self.gamma), ("lambda", self.lambda)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if self.epochs == 0 || self.minibatch == 0 {
            return Err(Error::Config("epochs and minibatch must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.value_lr >= 0.0 && self.entropy_coef >= 0.0 && self.kl_ceiling > 0.0) {
            return Err(Error::Config("learning rates, entropy coefficient and KL ceiling must be non-negative".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

/// Categorical policy: tanh MLP producing action logits.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub net: Mlp,
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, actions: usize, hidden: &[usize], rng: &mut R) -> Self {
        Self { net: Mlp::new(&layer_sizes(obs_dim, hidden, actions), Activation::Tanh, Activation::Linear, rng) }
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn action_count(&self) -> usize {
        self.net.output_dim()
    }

    pub fn probabilities(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.net.predict_one(obs)?))
    }

    pub fn log_probabilities(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(log_softmax(&self.net.predict_one(obs)?))
    }

    /// Log-probabilities for a batch of observations.
    pub fn batch_log_probabilities(&self, obs: ArrayView2<'_, f64>) -> Result<Vec<Vec<f64>>> {
        let logits = self.net.predict(obs)?;
        Ok(logits.outer_iter().map(|r| log_softmax(&r.to_vec())).collect())
    }

    /// Samples an action; returns it with its log-probability.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(usize, f64)> {
        let lp = self.log_probabilities(obs)?;
        let probs: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
        let a = sample_index(&probs, rng);
        Ok((a, lp[a]))
    }

    /// Most probable action (lowest index on ties).
    pub fn greedy(&self, obs: &[f64]) -> Result<usize> {
        let logits = self.net.predict_one(obs)?;
        let mut best = 0;
        for (i, l) in logits.iter().enumerate() {
            if *l > logits[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

/// State-value estimator, sharing no parameters with the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub net: Mlp,
}

impl ValueNet {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        Self { net: Mlp::new(&layer_sizes(obs_dim, hidden, 1), Activation::Tanh, Activation::Linear, rng) }
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.net.predict_one(obs)?[0])
    }
}

/// Policy, value network and their optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub policy: PolicyNet,
    pub value: ValueNet,
    pub policy_opt: Adam,
    pub value_opt: Adam,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, actions: usize, config: &PpoConfig, rng: &mut R) -> Self {
        let policy = PolicyNet::new(obs_dim, actions, &config.hidden, rng);
        let value = ValueNet::new(obs_dim, &config.hidden, rng);
        let policy_opt = Adam::new(policy.net.param_count(), config.lr);
        let value_opt = Adam::new(value.net.param_count(), config.value_lr);
        Self { policy, value, policy_opt, value_opt }
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new();
        ck.insert("policy", &self.policy.net);
        ck.insert("value", &self.value.net);
        ck.insert_extra("policy_layers", &self.policy.net.layers())?;
        ck.insert_extra("value_layers", &self.value.net.layers())?;
        ck.insert_extra("policy_opt", &self.policy_opt)?;
        ck.insert_extra("value_opt", &self.value_opt)?;
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut policy = zeroed(ck.extra("policy_layers")?)?;
        let mut value = zeroed(ck.extra("value_layers")?)?;
        ck.restore("policy", &mut policy)?;
        ck.restore("value", &mut value)?;
        Ok(Self {
            policy: PolicyNet { net: policy },
            value: ValueNet { net: value },
            policy_opt: ck.extra("policy_opt")?,
            value_opt: ck.extra("value_opt")?,
        })
    }
}

fn zeroed(layers: Vec<LayerSpec>) -> Result<Mlp> {
    let count = layers.iter().map(|l| l.input * l.output + l.output).sum();
    Mlp::from_layers(layers, vec![0.0; count])
}

/// One row of a training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: usize,
    pub episodes: usize,
    pub mean_return: f64,
    /// Per-episode sums of each reward term, averaged over completed episodes.
    pub breakdown: [f64; 8],
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Alternates rollout collection and PPO updates until `total_steps`
/// environment steps have been collected.
pub fn train<E: Environment + ?Sized>(
    env: &mut E,
    model: &mut ActorCritic,
    config: &PpoConfig,
    total_steps: usize,
    rollout_steps: usize,
    seed: u64,
) -> Result<Vec<CurveRow>> {
    config.validate()?;
    if rollout_steps == 0 {
        return Err(Error::Config("rollout_steps must be positive".into()));
    }
    let mut curve = Vec::new();
    let mut step = 0;
    let mut iteration = 0u64;
    while step < total_steps {
        let n = rollout_steps.min(total_steps - step);
        let iter_seed = crate::seeding::derive_seed(seed, &[iteration]);
        let mut buffer = collect_rollouts(env, &model.policy, &model.value, n, iter_seed)?;
        compute_advantages(&mut buffer, config.gamma, config.lambda);
        let mut rng = crate::seeding::rng_for(iter_seed, &[1]);
        let stats = ppo_update(&buffer, &mut model.policy, &mut model.policy_opt, config, &mut rng)?;
        value_update(&buffer, &mut model.value, &mut model.value_opt, config, &mut rng)?;
        if !(stats.entropy.is_finite() && stats.approx_kl.is_finite()) {
            return Err(Error::Diverged(format!("non-finite PPO statistics at step {step}")));
        }
        step += n;
        iteration += 1;
        let (mean_return, breakdown) = buffer.episode_summary();
        curve.push(CurveRow {
            step,
            episodes: buffer.episode_returns.len(),
            mean_return,
            breakdown,
            entropy: stats.entropy,
            approx_kl: stats.approx_kl,
            clip_fraction: stats.clip_fraction,
        });
        log::debug!("ppo step {step}: return {mean_return:.2} entropy {:.3}", stats.entropy);
    }
    Ok(curve)
}
