//! Latent trait learning: a pooled recurrent context encoder trained
//! jointly with a latent-conditioned adversarial IRL reward and a
//! latent-conditioned generator policy.

mod generator;
mod losses;

pub use generator::{GeneratedTransition, GeneratorEnv};
pub use losses::{
    contrastive_pair, discriminator_losses, discriminator_param_count, discriminator_prob, unit_gaussian_kl,
    ExpertBatch, GeneratedBatch, LossGradients, LossReport, LossWeights, RewardNets,
};

use std::collections::BTreeMap;

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::actions::HumanAction;
use crate::dataset::{pooled_batches, Dataset, PooledBatch};
use crate::env::ScenarioConfig;
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, Checkpoint, ContextEncoder, LayerSpec, Mlp, Parameterized};
use crate::ppo::{collect_rollouts, compute_advantages, ppo_update, value_update, ActorCritic, PpoConfig, PpoStats};
use crate::seeding::{derive_seed, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupervisionMode {
    Unsupervised,
    DriverId,
    Preference,
}

impl SupervisionMode {
    /// Contrastive label of a pool under this mode.
    pub fn label(self, pool: &PooledBatch) -> Option<u32> {
        match self {
            SupervisionMode::Unsupervised => None,
            SupervisionMode::DriverId => pool.is_labeled().then_some(pool.driver_id),
            SupervisionMode::Preference => pool.preference_label.map(|l| l.as_label()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraitConfig {
    pub mode: SupervisionMode,
    pub latent_dim: usize,
    pub encoder_hidden: usize,
    pub g_hidden: Vec<usize>,
    pub h_hidden: Vec<usize>,
    pub gamma: f64,
    pub margin: f64,
    pub weights: LossWeights,
    pub discriminator_lr: f64,
    pub discriminator_updates: usize,
    /// Generator environment steps per round.
    pub generator_steps: usize,
    pub generator: PpoConfig,
    pub pool_size: usize,
    pub window_steps: usize,
    /// Expert pools per driver in each discriminator batch.
    pub pools_per_driver: usize,
    /// Generator environment-step budget.
    pub total_steps: usize,
}

impl Default for TraitConfig {
    fn default() -> Self {
        Self {
            mode: SupervisionMode::DriverId,
            latent_dim: 2,
            encoder_hidden: 128,
            g_hidden: vec![32, 32],
            h_hidden: vec![32],
            gamma: 0.99,
            margin: 1.0,
            weights: LossWeights::default(),
            discriminator_lr: 5e-4,
            discriminator_updates: 2,
            generator_steps: 500,
            generator: PpoConfig { lr: 1e-2, ..PpoConfig::default() },
            pool_size: 8,
            window_steps: 100,
            pools_per_driver: 2,
            total_steps: 100_000,
        }
    }
}

impl TraitConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        if self.latent_dim == 0 || self.encoder_hidden == 0 {
            return Err(Error::Config("latent and encoder widths must be positive".into()));
        }
        if self.pool_size == 0 || self.window_steps == 0 || self.pools_per_driver == 0 || self.generator_steps == 0 {
            return Err(Error::Config("pool size, window, pools per driver and generator steps must be positive".into()));
        }
        if !(self.margin > 0.0 && self.discriminator_lr >= 0.0 && self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config("margin must be positive, gamma in (0, 1], learning rate non-negative".into()));
        }
        Ok(())
    }
}

/// Width of the AIRL state: sensor view plus the previous applied action.
pub fn state_dim(sensor_dim: usize) -> usize {
    sensor_dim + HumanAction::COUNT
}

pub fn state_features(sensor: &[f64], previous: Option<HumanAction>) -> Vec<f64> {
    let mut s = sensor.to_vec();
    s.extend_from_slice(&HumanAction::one_hot(previous));
    s
}

/// Encoder input of one step: state followed by the applied action.
pub fn encoder_step(sensor: &[f64], previous: Option<HumanAction>, action: HumanAction) -> Vec<f64> {
    let mut s = state_features(sensor, previous);
    s.extend_from_slice(&HumanAction::one_hot(Some(action)));
    s
}

/// Encoder input for dataset segments, `T × segments × width`.
pub fn segment_sequences(dataset: &Dataset, segments: &[crate::dataset::Segment]) -> Result<Array3<f64>> {
    let len = segments.first().map(|s| s.len).ok_or(Error::EmptySequence)?;
    let width = state_dim(dataset.env_spec.sensor_obs_dim) + HumanAction::COUNT;
    let mut out = Array3::<f64>::zeros((len, segments.len(), width));
    for (b, seg) in segments.iter().enumerate() {
        if seg.len != len {
            return Err(Error::WidthMismatch { expected: len, got: seg.len });
        }
        let tr = &dataset.trajectories[seg.trajectory].transitions;
        for t in 0..len {
            let k = seg.start + t;
            let prev = (k > 0).then(|| tr[k - 1].applied);
            for (j, v) in encoder_step(&tr[k].sensor_obs, prev, tr[k].applied).into_iter().enumerate() {
                out[[t, b, j]] = v;
            }
        }
    }
    Ok(out)
}

/// Builds the expert side of a discriminator batch from pools.
pub fn expert_batch(dataset: &Dataset, pools: &[PooledBatch], mode: SupervisionMode) -> Result<ExpertBatch> {
    if pools.is_empty() {
        return Err(Error::InsufficientData("no expert pools".into()));
    }
    let pool_size = pools[0].segments.len();
    let segments: Vec<_> = pools.iter().flat_map(|p| p.segments.iter().copied()).collect();
    if pools.iter().any(|p| p.segments.len() != pool_size) {
        return Err(Error::InsufficientData("pools must be equally sized".into()));
    }
    let sequences = segment_sequences(dataset, &segments)?;
    let sd = state_dim(dataset.env_spec.sensor_obs_dim);
    let (mut state, mut action, mut next_state) = (Vec::new(), Vec::new(), Vec::new());
    let (mut action_index, mut pool_of) = (Vec::new(), Vec::new());
    for (p, pool) in pools.iter().enumerate() {
        for seg in &pool.segments {
            let tr = &dataset.trajectories[seg.trajectory].transitions;
            for k in seg.start..seg.start + seg.len {
                let prev = (k > 0).then(|| tr[k - 1].applied);
                state.extend(state_features(&tr[k].sensor_obs, prev));
                action.extend(HumanAction::one_hot(Some(tr[k].applied)));
                next_state.extend(state_features(&tr[k].next_sensor_obs, Some(tr[k].applied)));
                action_index.push(tr[k].applied.index());
                pool_of.push(p);
            }
        }
    }
    let n = action_index.len();
    let shape = |v: Vec<f64>, w: usize| Array2::from_shape_vec((n, w), v).expect("shape");
    Ok(ExpertBatch {
        sequences,
        pool_size,
        labels: pools.iter().map(|p| mode.label(p)).collect(),
        state: shape(state, sd),
        action: shape(action, HumanAction::COUNT),
        next_state: shape(next_state, sd),
        action_index,
        pool_of,
    })
}

/// Converts recorded generator transitions into a discriminator batch.
pub fn generated_batch(records: &[GeneratedTransition], latent: usize) -> Result<GeneratedBatch> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no generated transitions".into()));
    }
    let sd = records[0].state.len();
    let n = records.len();
    let mut state = Array2::<f64>::zeros((n, sd));
    let mut next_state = Array2::<f64>::zeros((n, sd));
    let mut action = Array2::<f64>::zeros((n, HumanAction::COUNT));
    let mut z = Array2::<f64>::zeros((n, latent));
    let mut action_index = Vec::with_capacity(n);
    for (i, r) in records.iter().enumerate() {
        state.row_mut(i).assign(&ndarray::ArrayView1::from(&r.state));
        next_state.row_mut(i).assign(&ndarray::ArrayView1::from(&r.next_state));
        action[[i, r.action.index()]] = 1.0;
        z.row_mut(i).assign(&ndarray::ArrayView1::from(&r.z));
        action_index.push(r.action.index());
    }
    let mut episodes = Vec::new();
    let mut start = 0;
    for i in 0..n {
        if i + 1 == n || records[i + 1].episode != records[i].episode {
            let len = i + 1 - start;
            let width = sd + HumanAction::COUNT;
            let mut seq = Array3::<f64>::zeros((len, 1, width));
            for t in 0..len {
                let r = &records[start + t];
                for (j, v) in r.state.iter().chain(&HumanAction::one_hot(Some(r.action))).enumerate() {
                    seq[[t, 0, j]] = *v;
                }
            }
            episodes.push((seq, records[start].z.clone()));
            start = i + 1;
        }
    }
    Ok(GeneratedBatch { state, action, next_state, z, action_index, episodes })
}

/// Encoder, reward networks, generator and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct TraitModel {
    pub config: TraitConfig,
    pub encoder: ContextEncoder,
    pub nets: RewardNets,
    pub generator: ActorCritic,
    pub encoder_opt: Adam,
    pub g_opt: Adam,
    pub h_opt: Adam,
    pub round: usize,
    pub steps: usize,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = vec![input];
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

fn zeroed_mlp(layers: Vec<LayerSpec>) -> Result<Mlp> {
    let count = layers.iter().map(|l| l.input * l.output + l.output).sum();
    Mlp::from_layers(layers, vec![0.0; count])
}

impl TraitModel {
    pub fn new(sensor_dim: usize, config: &TraitConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(seed, &[u64::MAX - 1]);
        let sd = state_dim(sensor_dim);
        let l = config.latent_dim;
        let encoder = ContextEncoder::new(sd + HumanAction::COUNT, config.encoder_hidden, l, &mut rng);
        let g = Mlp::new(&sizes(sd + HumanAction::COUNT + l, &config.g_hidden, 1), Activation::Tanh, Activation::Linear, &mut rng);
        let h = Mlp::new(&sizes(sd + l, &config.h_hidden, 1), Activation::Tanh, Activation::Linear, &mut rng);
        let generator = ActorCritic::new(sd + l, HumanAction::COUNT, &config.generator, &mut rng);
        Ok(Self {
            encoder_opt: Adam::new(encoder.param_count(), config.discriminator_lr),
            g_opt: Adam::new(g.param_count(), config.discriminator_lr),
            h_opt: Adam::new(h.param_count(), config.discriminator_lr),
            config: config.clone(),
            encoder,
            nets: RewardNets { g, h, gamma: config.gamma },
            generator,
            round: 0,
            steps: 0,
        })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = self.generator.to_checkpoint()?;
        ck.insert("encoder", &self.encoder);
        ck.insert("g", &self.nets.g);
        ck.insert("h", &self.nets.h);
        ck.insert_extra("trait_config", &self.config)?;
        ck.insert_extra(
            "encoder_dims",
            &[self.encoder.input_dim(), self.encoder.hidden_dim(), self.encoder.latent_dim()],
        )?;
        ck.insert_extra("g_layers", &self.nets.g.layers())?;
        ck.insert_extra("h_layers", &self.nets.h.layers())?;
        ck.insert_extra("encoder_opt", &self.encoder_opt)?;
        ck.insert_extra("g_opt", &self.g_opt)?;
        ck.insert_extra("h_opt", &self.h_opt)?;
        ck.insert_extra("round", &self.round)?;
        ck.insert_extra("steps", &self.steps)?;
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config: TraitConfig = ck.extra("trait_config")?;
        let [input, hidden, latent]: [usize; 3] = ck.extra("encoder_dims")?;
        let mut encoder = ContextEncoder::new(input, hidden, latent, &mut rng_for(0, &[]));
        ck.restore("encoder", &mut encoder)?;
        let mut g = zeroed_mlp(ck.extra("g_layers")?)?;
        let mut h = zeroed_mlp(ck.extra("h_layers")?)?;
        ck.restore("g", &mut g)?;
        ck.restore("h", &mut h)?;
        Ok(Self {
            nets: RewardNets { g, h, gamma: config.gamma },
            generator: ActorCritic::from_checkpoint(ck)?,
            encoder,
            encoder_opt: ck.extra("encoder_opt")?,
            g_opt: ck.extra("g_opt")?,
            h_opt: ck.extra("h_opt")?,
            round: ck.extra("round")?,
            steps: ck.extra("steps")?,
            config,
        })
    }
}

/// Diagnostics of one training round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub steps: usize,
    pub losses: LossReport,
    /// Mean shaped reward per generated step.
    pub generator_reward: f64,
    pub generator_entropy: f64,
    pub approx_kl: f64,
}

pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Up to `per_driver` pools of every driver, in driver order.
fn select_pools(pools: Vec<PooledBatch>, per_driver: usize) -> Vec<PooledBatch> {
    let mut by_driver: BTreeMap<u32, Vec<PooledBatch>> = BTreeMap::new();
    for p in pools {
        let entry = by_driver.entry(p.driver_id).or_default();
        if entry.len() < per_driver {
            entry.push(p);
        }
    }
    by_driver.into_values().flatten().collect()
}

/// One discriminator step (all four losses) on the given batches.
pub fn discriminator_update<R: Rng + ?Sized>(
    model: &mut TraitModel,
    expert: &ExpertBatch,
    generated: &GeneratedBatch,
    rng: &mut R,
) -> Result<LossReport> {
    let noise = standard_normal(expert.pools(), model.encoder.latent_dim(), rng);
    let (report, grads) = discriminator_losses(
        &model.encoder,
        &model.nets,
        &model.generator.policy,
        expert,
        generated,
        noise.view(),
        &model.config.weights,
        model.config.margin,
    )?;
    model.encoder_opt.update(&mut model.encoder, &grads.encoder)?;
    model.g_opt.update(&mut model.nets.g, &grads.g)?;
    model.h_opt.update(&mut model.nets.h, &grads.h)?;
    Ok(report)
}

/// Runs one full round: generator rollouts, discriminator updates, then a
/// PPO step of the generator on the refreshed shaped reward.
pub fn train_round(model: &mut TraitModel, dataset: &Dataset, scenario: &ScenarioConfig, seed: u64) -> Result<RoundStats> {
    let cfg = model.config.clone();
    let round_seed = derive_seed(seed, &[model.round as u64]);
    let mut rng = rng_for(round_seed, &[0]);
    let (pools, report) = pooled_batches(dataset, cfg.pool_size, cfg.window_steps, &mut rng);
    if !report.skipped.is_empty() {
        log::warn!("drivers skipped for lack of segments: {:?}", report.skipped);
    }
    let pools = select_pools(pools, cfg.pools_per_driver);
    if pools.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least two expert pools, got {}", pools.len())));
    }
    let expert = expert_batch(dataset, &pools, cfg.mode)?;

    let (encoded, _) = model.encoder.forward(expert.sequences.view(), expert.pool_size)?;
    let latents: Vec<(Vec<f64>, Vec<f64>)> = (0..expert.pools())
        .map(|p| (encoded.mean.row(p).to_vec(), encoded.log_std.row(p).to_vec()))
        .collect();
    let mut env = GeneratorEnv::new(scenario.clone(), latents)?;
    let mut buffer = collect_rollouts(
        &mut env,
        &model.generator.policy,
        &model.generator.value,
        cfg.generator_steps,
        derive_seed(round_seed, &[1]),
    )?;
    let records = env.take_records();
    let generated = generated_batch(&records, cfg.latent_dim)?;

    let mut losses = LossReport::default();
    for _ in 0..cfg.discriminator_updates {
        losses = discriminator_update(model, &expert, &generated, &mut rng)?;
    }

    buffer.rewards = model.nets.shaped_reward(
        generated.state.view(),
        generated.action.view(),
        generated.next_state.view(),
        generated.z.view(),
    )?;
    compute_advantages(&mut buffer, cfg.gamma, cfg.generator.lambda);
    let stats: PpoStats =
        ppo_update(&buffer, &mut model.generator.policy, &mut model.generator.policy_opt, &cfg.generator, &mut rng)?;
    value_update(&buffer, &mut model.generator.value, &mut model.generator.value_opt, &cfg.generator, &mut rng)?;
    if !(stats.entropy.is_finite() && stats.approx_kl.is_finite()) {
        return Err(Error::Diverged(format!("generator statistics non-finite in round {}", model.round)));
    }
    let generator_reward = buffer.rewards.iter().sum::<f64>() / buffer.rewards.len().max(1) as f64;
    model.round += 1;
    model.steps += cfg.generator_steps;
    Ok(RoundStats {
        round: model.round,
        steps: model.steps,
        losses,
        generator_reward,
        generator_entropy: stats.entropy,
        approx_kl: stats.approx_kl,
    })
}

/// Alternates rounds until the generator step budget is spent. `on_round`
/// sees the model after every round (for checkpointing) and may abort.
pub fn train(
    model: &mut TraitModel,
    dataset: &Dataset,
    scenario: &ScenarioConfig,
    seed: u64,
    mut on_round: impl FnMut(&TraitModel, &RoundStats) -> Result<()>,
) -> Result<Vec<RoundStats>> {
    let sensor = dataset.env_spec.sensor_obs_dim;
    if model.encoder.input_dim() != state_dim(sensor) + HumanAction::COUNT {
        return Err(Error::WidthMismatch { expected: model.encoder.input_dim(), got: state_dim(sensor) + HumanAction::COUNT });
    }
    let mut history = Vec::new();
    while model.steps < model.config.total_steps {
        let stats = train_round(model, dataset, scenario, seed)?;
        log::info!(
            "round {} steps {}: loss {:.4} (l1 {:.4} l2 {:.4} l3 {:.4} l4 {:.4})",
            stats.round,
            stats.steps,
            stats.losses.total,
            stats.losses.l1,
            stats.losses.l2,
            stats.losses.l3,
            stats.losses.l4
        );
        on_round(model, &stats)?;
        history.push(stats);
    }
    Ok(history)
}

/// Latent summary of one pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTrait {
    pub driver_id: u32,
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub sample: Vec<f64>,
}

/// Encodes `n_pools` pools of `driver_id`.
pub fn embed_driver(
    dataset: &Dataset,
    driver_id: u32,
    encoder: &ContextEncoder,
    n_pools: usize,
    pool_size: usize,
    window_steps: usize,
    seed: u64,
) -> Result<Vec<LatentTrait>> {
    let mut rng = rng_for(seed, &[u64::from(driver_id)]);
    let (pools, _) = pooled_batches(dataset, pool_size, window_steps, &mut rng);
    let pools: Vec<PooledBatch> = pools.into_iter().filter(|p| p.driver_id == driver_id).take(n_pools).collect();
    if pools.len() < n_pools || n_pools == 0 {
        return Err(Error::InsufficientData(format!(
            "driver {driver_id} has {} pools of {pool_size} x {window_steps} steps, {n_pools} requested",
            pools.len()
        )));
    }
    let segments: Vec<_> = pools.iter().flat_map(|p| p.segments.iter().copied()).collect();
    let seq = segment_sequences(dataset, &segments)?;
    let (enc, _) = encoder.forward(seq.view(), pool_size)?;
    let noise = standard_normal(n_pools, encoder.latent_dim(), &mut rng);
    Ok((0..n_pools)
        .map(|p| {
            let mean = enc.mean.row(p).to_vec();
            let log_std = enc.log_std.row(p).to_vec();
            let sample = mean.iter().zip(&log_std).zip(noise.row(p)).map(|((m, l), e)| m + l.exp() * e).collect();
            LatentTrait { driver_id, mean, log_std, sample }
        })
        .collect())
}
