//! Demonstration generation, trajectory storage, label masking and
//! same-driver pooling.

mod io;
mod pool;

pub use io::{load, load_binary, load_text, save, save_binary, save_text, FORMAT_NAME, FORMAT_VERSION};
pub use pool::{pooled_batches, PoolReport, PooledBatch, Segment};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::actions::{AiAction, HumanAction};
use crate::cognitive::{CognitiveState, DriverProfile, Level};
use crate::driver::DriverBehavior;
use crate::env::{EnvSpec, HmiwayEnv, RewardBreakdown, ScenarioConfig};
use crate::error::{Error, Result};
use crate::seeding::{derive_seed, rng_for};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Driver view (inflated perception).
    pub obs: Vec<f64>,
    /// Uninflated sensor view.
    pub sensor_obs: Vec<f64>,
    pub human_action: HumanAction,
    pub ai_action: AiAction,
    pub applied: HumanAction,
    pub rewards: RewardBreakdown,
    /// Cognitive state after the step.
    pub cognitive: CognitiveState,
    pub next_obs: Vec<f64>,
    pub next_sensor_obs: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub driver_id: u32,
    pub trait_label: Option<Level>,
    pub preference_label: Option<Level>,
    pub seed: u64,
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.trait_label.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub env_spec: EnvSpec,
    pub profiles: Vec<DriverProfile>,
    pub labeled_fraction: f64,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn empty(env_spec: EnvSpec) -> Self {
        Self { env_spec, profiles: Vec::new(), labeled_fraction: 0.0, trajectories: Vec::new() }
    }

    pub fn transition_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// Trajectory indices grouped by driver id.
    pub fn by_driver(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut map: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, t) in self.trajectories.iter().enumerate() {
            map.entry(t.driver_id).or_default().push(i);
        }
        map
    }

    pub fn steps_per_driver(&self) -> BTreeMap<u32, usize> {
        let mut map = BTreeMap::new();
        for t in &self.trajectories {
            *map.entry(t.driver_id).or_insert(0) += t.len();
        }
        map
    }

    pub fn profile(&self, driver_id: u32) -> Option<&DriverProfile> {
        self.profiles.iter().find(|p| p.driver_id == driver_id)
    }

    pub fn labeled_count(&self) -> usize {
        self.trajectories.iter().filter(|t| t.is_labeled()).count()
    }

    /// Structural checks: nonempty trajectories with observation widths
    /// matching the recorded environment spec.
    pub fn validate(&self) -> Result<()> {
        let dim = self.env_spec.driver_obs_dim;
        for (i, t) in self.trajectories.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::Schema { line: 0, message: format!("trajectory {i} is empty") });
            }
            for tr in &t.transitions {
                for (name, v) in [
                    ("obs", &tr.obs),
                    ("sensor_obs", &tr.sensor_obs),
                    ("next_obs", &tr.next_obs),
                    ("next_sensor_obs", &tr.next_sensor_obs),
                ] {
                    if v.len() != dim {
                        return Err(Error::Schema {
                            line: 0,
                            message: format!("trajectory {i}: {name} has width {}, expected {dim}", v.len()),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Alerting during demonstration episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DemoAlerts {
    #[default]
    Never,
    Always,
    /// Alert independently with the given probability each step.
    Random(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub scenario: ScenarioConfig,
    pub steps_per_type: usize,
    pub labeled_fraction: f64,
    pub alerts: DemoAlerts,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            steps_per_type: 300_000,
            labeled_fraction: 0.2,
            alerts: DemoAlerts::Never,
            seed: 0,
        }
    }
}

/// Produces the behaviour driving a given profile's demonstrations.
pub type BehaviorSource<'a> = dyn FnMut(&DriverProfile) -> Result<Box<dyn DriverBehavior>> + 'a;

/// Records episodes for every profile until its step budget is met, then
/// masks labels down to the configured fraction.
pub fn generate_dataset(
    profiles: &[DriverProfile],
    config: &GenerationConfig,
    behavior: &mut BehaviorSource<'_>,
) -> Result<Dataset> {
    let episode_steps = config.scenario.episode_steps as usize;
    if config.steps_per_type < episode_steps {
        return Err(Error::InsufficientData(format!(
            "step budget {} is shorter than one episode ({episode_steps} steps)",
            config.steps_per_type
        )));
    }
    if !(0.0..=1.0).contains(&config.labeled_fraction) {
        return Err(Error::Config(format!("labeled_fraction must lie in [0, 1], got {}", config.labeled_fraction)));
    }
    if let DemoAlerts::Random(p) = config.alerts {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("alert probability must lie in [0, 1], got {p}")));
        }
    }

    let mut trajectories = Vec::new();
    let mut env_spec = None;
    for profile in profiles {
        let mut env = HmiwayEnv::new(config.scenario.clone(), profile.clone())?;
        env_spec.get_or_insert_with(|| env.spec());
        let mut policy = behavior(profile)?;
        let mut recorded = 0usize;
        let mut episode = 0u64;
        while recorded < config.steps_per_type {
            let seed = derive_seed(config.seed, &[u64::from(profile.driver_id), episode]);
            let t = record_episode(&mut env, policy.as_mut(), config.alerts, seed)?;
            recorded += t.len();
            trajectories.push(t);
            episode += 1;
        }
    }
    let env_spec = match env_spec {
        Some(s) => s,
        None => HmiwayEnv::new(config.scenario.clone(), DriverProfile::attentive(0))?.spec(),
    };

    let mut dataset = Dataset {
        env_spec,
        profiles: profiles.to_vec(),
        labeled_fraction: config.labeled_fraction,
        trajectories,
    };
    mask_labels(&mut dataset, config.labeled_fraction, derive_seed(config.seed, &[u64::MAX]));
    Ok(dataset)
}

/// Runs one episode of `policy` in `env`.
pub fn record_episode(
    env: &mut HmiwayEnv,
    policy: &mut dyn DriverBehavior,
    alerts: DemoAlerts,
    seed: u64,
) -> Result<Trajectory> {
    use rand::Rng;
    let mut rng = rng_for(seed, &[2]);
    let mut views = env.reset(seed)?;
    let mut transitions = Vec::with_capacity(env.config().episode_steps as usize);
    loop {
        let human_action = policy.act(&views.driver, &mut rng);
        let ai_action = match alerts {
            DemoAlerts::Never => AiAction::NoAlert,
            DemoAlerts::Always => AiAction::Alert,
            DemoAlerts::Random(p) => {
                if rng.random::<f64>() < p {
                    AiAction::Alert
                } else {
                    AiAction::NoAlert
                }
            }
        };
        let step = env.step(human_action, ai_action)?;
        transitions.push(Transition {
            obs: views.driver,
            sensor_obs: views.sensor,
            human_action,
            ai_action,
            applied: step.info.applied,
            rewards: step.rewards,
            cognitive: step.info.cognitive,
            next_obs: step.views.driver.clone(),
            next_sensor_obs: step.views.sensor.clone(),
            done: step.done,
        });
        views = step.views;
        if step.done {
            break;
        }
    }
    let profile = env.profile();
    Ok(Trajectory {
        driver_id: profile.driver_id,
        trait_label: Some(profile.distractibility),
        preference_label: Some(profile.preference),
        seed,
        transitions,
    })
}

/// Keeps labels on exactly `round(fraction · n)` trajectories chosen by a
/// seeded shuffle and clears the rest.
pub fn mask_labels(dataset: &mut Dataset, fraction: f64, seed: u64) {
    let n = dataset.trajectories.len();
    let keep = (fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[]));
    for &i in &order[keep.min(n)..] {
        let t = &mut dataset.trajectories[i];
        t.trait_label = None;
        t.preference_label = None;
    }
    dataset.labeled_fraction = fraction;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cognitive::population;
    use crate::driver::ScriptedDriver;

    fn small_config(steps: usize) -> GenerationConfig {
        GenerationConfig {
            scenario: ScenarioConfig { episode_steps: 100, ..ScenarioConfig::default() },
            steps_per_type: steps,
            labeled_fraction: 0.2,
            alerts: DemoAlerts::Never,
            seed: 3,
        }
    }

    fn scripted(cfg: &ScenarioConfig) -> impl FnMut(&DriverProfile) -> Result<Box<dyn DriverBehavior>> + '_ {
        move |_| Ok(Box::new(ScriptedDriver::new(cfg.lidar, cfg.kinematics.max_speed, cfg.geometry.lane_count)))
    }

    #[test]
    fn budget_below_one_episode_is_an_error() {
        let cfg = small_config(99);
        let err = generate_dataset(&population(), &cfg, &mut scripted(&cfg.scenario));
        assert!(matches!(err, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn budget_accounting_per_type() {
        let cfg = small_config(300);
        let ds = generate_dataset(&population(), &cfg, &mut scripted(&cfg.scenario)).unwrap();
        for (_, steps) in ds.steps_per_driver() {
            assert!((300..400).contains(&steps), "{steps}");
        }
        assert_eq!(ds.steps_per_driver().len(), 4);
        ds.validate().unwrap();
        assert!(ds.trajectories.iter().all(|t| t.transitions.iter().all(|x| x.ai_action == AiAction::NoAlert)));
    }

    #[test]
    fn masking_keeps_exact_fraction() {
        let spec = HmiwayEnv::new(ScenarioConfig::default(), DriverProfile::attentive(0)).unwrap().spec();
        let mut ds = Dataset::empty(spec);
        ds.trajectories = (0..100)
            .map(|i| Trajectory {
                driver_id: i % 4,
                trait_label: Some(Level::Low),
                preference_label: Some(Level::High),
                seed: u64::from(i),
                transitions: Vec::new(),
            })
            .collect();
        let mut other = ds.clone();
        mask_labels(&mut ds, 0.2, 9);
        assert_eq!(ds.labeled_count(), 20);
        mask_labels(&mut other, 0.2, 9);
        assert_eq!(ds, other);
    }
}
