use rand::Rng;
use rand_distr::StandardNormal;

use crate::actions::{AiAction, HumanAction};
use crate::cognitive::DriverProfile;
use crate::env::{HmiwayEnv, ScenarioConfig};
use crate::error::{Error, Result};
use crate::ppo::{EnvStep, Environment};
use crate::seeding::rng_for;

use super::{state_dim, state_features};

/// One generator transition in AIRL terms.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTransition {
    pub episode: usize,
    pub state: Vec<f64>,
    pub action: HumanAction,
    pub next_state: Vec<f64>,
    pub z: Vec<f64>,
}

/// Environment for the latent-conditioned generator: an attentive driver
/// whose actions apply directly. Each episode draws its latent from the
/// posterior of a random expert pool. Rewards are left at zero; the
/// trainer fills them from the shaped reward after recording.
pub struct GeneratorEnv {
    env: HmiwayEnv,
    latents: Vec<(Vec<f64>, Vec<f64>)>,
    z: Vec<f64>,
    state: Vec<f64>,
    episode: usize,
    records: Vec<GeneratedTransition>,
}

impl GeneratorEnv {
    /// `latents` holds the (mean, log-std) of every expert pool.
    pub fn new(scenario: ScenarioConfig, latents: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        if latents.is_empty() {
            return Err(Error::InsufficientData("generator needs at least one expert latent".into()));
        }
        let env = HmiwayEnv::new(scenario, DriverProfile::attentive(u32::MAX))?;
        Ok(Self { env, latents, z: Vec::new(), state: Vec::new(), episode: 0, records: Vec::new() })
    }

    pub fn latent_dim(&self) -> usize {
        self.latents[0].0.len()
    }

    pub fn take_records(&mut self) -> Vec<GeneratedTransition> {
        std::mem::take(&mut self.records)
    }

    fn observation(&self) -> Vec<f64> {
        let mut obs = self.state.clone();
        obs.extend_from_slice(&self.z);
        obs
    }
}

impl Environment for GeneratorEnv {
    fn observation_dim(&self) -> usize {
        state_dim(self.env.spec().sensor_obs_dim) + self.latent_dim()
    }

    fn action_count(&self) -> usize {
        HumanAction::COUNT
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let views = self.env.reset(seed)?;
        let mut rng = rng_for(seed, &[3]);
        let (mean, log_std) = &self.latents[rng.random_range(0..self.latents.len())];
        self.z = mean.iter().zip(log_std).map(|(m, l)| m + l.exp() * rng.sample::<f64, _>(StandardNormal)).collect();
        self.state = state_features(&views.sensor, None);
        if !self.records.is_empty() {
            self.episode += 1;
        }
        Ok(self.observation())
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        let a = HumanAction::from_index(action).ok_or(Error::WidthMismatch { expected: HumanAction::COUNT, got: action })?;
        let r = self.env.step(a, AiAction::NoAlert)?;
        let next_state = state_features(&r.views.sensor, Some(r.info.applied));
        self.records.push(GeneratedTransition {
            episode: self.episode,
            state: std::mem::replace(&mut self.state, next_state.clone()),
            action: r.info.applied,
            next_state,
            z: self.z.clone(),
        });
        Ok(EnvStep { obs: self.observation(), reward: 0.0, done: r.done, breakdown: None })
    }
}
