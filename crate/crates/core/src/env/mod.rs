//! The joint driver/HMI environment: merge traffic, the cognitive model
//! and the per-term reward system.

mod config;
mod rewards;

pub use config::ScenarioConfig;
pub use rewards::{compute_rewards, RewardBreakdown, RewardCoefficients, RewardInputs};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actions::{AiAction, HumanAction};
use crate::cognitive::{step_cognitive, CognitiveState, DriverProfile};
use crate::error::{Error, Result};
use crate::traffic::{lidar_observe, spawn_traffic_around, LaneCommand, SpawnReport, VehicleState, World};

/// Width of the cognitive block of the HMI view: `d`, `i`, `c/N`.
pub const COGNITIVE_FEATURES: usize = 3;

/// Shapes of everything the environment exchanges with learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub driver_obs_dim: usize,
    pub sensor_obs_dim: usize,
    pub hmi_obs_dim: usize,
    pub context_dim: usize,
    pub human_actions: usize,
    pub ai_actions: usize,
    pub episode_steps: u32,
}

/// The three observation views produced each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Views {
    /// Lidar through the driver's inflated perception plus ego features.
    pub driver: Vec<f64>,
    /// Uninflated lidar plus ego features.
    pub sensor: Vec<f64>,
    /// Sensor view, cognitive fields and the HMI context features.
    pub hmi: Vec<f64>,
}

/// Auxiliary facts about a step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub step: u32,
    pub applied: HumanAction,
    pub cognitive: CognitiveState,
    pub distracted_prev: bool,
    pub crashed: bool,
    pub reached_end: bool,
    pub command_ignored: bool,
    pub ego_speed: f64,
    pub ego_lane: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub views: Views,
    pub rewards: RewardBreakdown,
    pub done: bool,
    pub info: StepInfo,
}

/// Snapshot of the full environment state.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub ego: VehicleState,
    pub others: Vec<VehicleState>,
    pub cognitive: CognitiveState,
    pub step: u32,
    pub done: bool,
    pub crashed: bool,
}

#[derive(Debug, Clone)]
pub struct HmiwayEnv {
    config: ScenarioConfig,
    profile: DriverProfile,
    context: Vec<f64>,
    world: Option<World>,
    cognitive: CognitiveState,
    step: u32,
    done: bool,
    crashed: bool,
    spawn_report: Option<SpawnReport>,
    cognitive_rng: ChaCha8Rng,
}

impl HmiwayEnv {
    /// Builds an environment whose HMI context is the driver's own profile features.
    pub fn new(config: ScenarioConfig, profile: DriverProfile) -> Result<Self> {
        let context = profile.features().to_vec();
        Self::with_context(config, profile, context)
    }

    /// Builds an environment whose HMI view carries `context` instead of
    /// the true profile features (e.g. a believed profile or a latent trait).
    pub fn with_context(config: ScenarioConfig, profile: DriverProfile, context: Vec<f64>) -> Result<Self> {
        config.validate()?;
        profile.validate()?;
        if context.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("HMI context features must be finite".into()));
        }
        Ok(Self {
            cognitive: CognitiveState::initial(config.initial_distracted),
            config,
            profile,
            context,
            world: None,
            step: 0,
            done: true,
            crashed: false,
            spawn_report: None,
            cognitive_rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn profile(&self) -> &DriverProfile {
        &self.profile
    }

    pub fn context(&self) -> &[f64] {
        &self.context
    }

    pub fn spec(&self) -> EnvSpec {
        let base = self.config.lidar.observation_dim();
        EnvSpec {
            driver_obs_dim: base,
            sensor_obs_dim: base,
            hmi_obs_dim: base + COGNITIVE_FEATURES + self.context.len(),
            context_dim: self.context.len(),
            human_actions: HumanAction::COUNT,
            ai_actions: AiAction::COUNT,
            episode_steps: self.config.episode_steps,
        }
    }

    pub fn spawn_report(&self) -> Option<&SpawnReport> {
        self.spawn_report.as_ref()
    }

    pub fn cognitive(&self) -> &CognitiveState {
        &self.cognitive
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn state(&self) -> Option<EnvState> {
        self.world.as_ref().map(|w| EnvState {
            ego: w.ego.clone(),
            others: w.others.clone(),
            cognitive: self.cognitive,
            step: self.step,
            done: self.done,
            crashed: self.crashed,
        })
    }

    /// Starts a new episode. Traffic and cognitive randomness use separate
    /// streams of the same seed.
    pub fn reset(&mut self, seed: u64) -> Result<Views> {
        let mut traffic_rng = ChaCha8Rng::seed_from_u64(seed);
        traffic_rng.set_stream(0);
        let mut cognitive_rng = ChaCha8Rng::seed_from_u64(seed);
        cognitive_rng.set_stream(1);

        let cfg = &self.config;
        let (lo, hi) = cfg.geometry.speed_limits;
        let speed = if hi > lo { traffic_rng.random_range(lo..=hi) } else { lo };
        let mut ego = VehicleState::new(cfg.ego_position, cfg.ego_spawn_lane(), speed);
        ego.is_ego = true;
        ego.desired_speed = hi.max(cfg.min_desired_speed).min(cfg.kinematics.max_speed);
        let (others, report) =
            spawn_traffic_around(&cfg.geometry, std::slice::from_ref(&ego), cfg.max_vehicles, &mut traffic_rng);
        if report.placed < report.requested {
            log::debug!("placed {} of {} ambient vehicles", report.placed, report.requested);
        }

        self.world = Some(World::new(cfg.geometry.clone(), cfg.kinematics, cfg.idm, cfg.dt, ego, others));
        self.spawn_report = Some(report);
        self.cognitive = CognitiveState::initial(cfg.initial_distracted);
        self.cognitive_rng = cognitive_rng;
        self.step = 0;
        self.done = false;
        self.crashed = false;
        Ok(self.views())
    }

    /// Advances one action step: cognitive update, then the applied action
    /// drives the ego for `ticks_per_action` simulator ticks.
    pub fn step(&mut self, human_action: HumanAction, ai_action: AiAction) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let world = self.world.as_mut().ok_or(Error::EpisodeDone)?;
        let cfg = &self.config;

        let distracted_prev = self.cognitive.distracted;
        let (cognitive, applied) = step_cognitive(
            &self.cognitive,
            ai_action,
            human_action,
            &self.profile,
            cfg.window,
            &mut self.cognitive_rng,
        );
        self.cognitive = cognitive;

        let ego = &mut world.ego;
        match applied {
            HumanAction::SpeedUp => {
                ego.desired_speed = (ego.desired_speed + cfg.desired_speed_step).min(cfg.kinematics.max_speed)
            }
            HumanAction::SlowDown => {
                ego.desired_speed = (ego.desired_speed - cfg.desired_speed_step).max(cfg.min_desired_speed)
            }
            _ => {}
        }
        let mut command = match applied {
            HumanAction::MoveLeft => LaneCommand::Left,
            HumanAction::MoveRight => LaneCommand::Right,
            _ => LaneCommand::Keep,
        };

        let mut crashed = false;
        let mut reached_end = false;
        let mut command_ignored = false;
        for _ in 0..cfg.ticks_per_action {
            let outcome = world.tick(command)?;
            if command != LaneCommand::Keep {
                command_ignored = outcome.ego_command_ignored;
                command = LaneCommand::Keep;
            }
            crashed |= outcome.crashed;
            reached_end |= outcome.ego_reached_end;
            if crashed || reached_end {
                break;
            }
        }

        self.step += 1;
        self.crashed = crashed;
        self.done = crashed || reached_end || self.step >= cfg.episode_steps;

        let ego = &world.ego;
        let inputs = RewardInputs {
            crashed,
            current_speed: ego.speed,
            in_right_lane: ego.lane == cfg.geometry.rightmost_through_lane(),
            in_merging_lane: cfg.geometry.merging[ego.lane],
            human_action,
            ai_action,
            distracted_prev,
            distracted_now: self.cognitive.distracted,
        };
        let rewards = compute_rewards(&inputs, cfg.max_speed, cfg.target_speed, &cfg.rewards);
        let info = StepInfo {
            step: self.step,
            applied,
            cognitive: self.cognitive,
            distracted_prev,
            crashed,
            reached_end,
            command_ignored,
            ego_speed: ego.speed,
            ego_lane: ego.lane,
        };
        Ok(StepResult { views: self.views(), rewards, done: self.done, info })
    }

    fn views(&self) -> Views {
        let world = self.world.as_ref().expect("views requested before reset");
        let cfg = &self.config;
        let observe = |inflation: f64| {
            lidar_observe(&world.ego, &world.others, inflation, &cfg.lidar, &cfg.geometry, &cfg.kinematics).to_vec()
        };
        let sensor = observe(1.0);
        let driver = observe(self.profile.inflation);
        let mut hmi = Vec::with_capacity(sensor.len() + COGNITIVE_FEATURES + self.context.len());
        hmi.extend_from_slice(&sensor);
        hmi.push(f64::from(u8::from(self.cognitive.distracted)));
        hmi.push(f64::from(u8::from(self.cognitive.accepted)));
        hmi.push(f64::from(self.cognitive.counter) / f64::from(cfg.window));
        hmi.extend_from_slice(&self.context);
        Views { driver, sensor, hmi }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cognitive::archetype_profile;

    fn free_road() -> ScenarioConfig {
        ScenarioConfig { max_vehicles: 0, ego_lane: Some(1), ..ScenarioConfig::default() }
    }

    #[test]
    fn reset_is_deterministic() {
        let mut env = HmiwayEnv::new(ScenarioConfig::default(), archetype_profile("Bart").unwrap()).unwrap();
        let a = env.reset(11).unwrap();
        let b = env.reset(11).unwrap();
        assert_eq!(a, b);
        let c = env.reset(12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_road_reads_clear() {
        let mut env = HmiwayEnv::new(free_road(), archetype_profile("Lisa").unwrap()).unwrap();
        let views = env.reset(0).unwrap();
        let k = env.config().lidar.sectors;
        assert!(views.driver[..k].iter().all(|d| *d == 1.0));
        assert_eq!(views.driver.len(), env.spec().driver_obs_dim);
        assert_eq!(views.hmi.len(), env.spec().hmi_obs_dim);
    }

    #[test]
    fn step_after_done_is_rejected() {
        let cfg = ScenarioConfig { episode_steps: 2, ..free_road() };
        let mut env = HmiwayEnv::new(cfg, archetype_profile("Lisa").unwrap()).unwrap();
        env.reset(1).unwrap();
        assert!(!env.step(HumanAction::KeepSpeed, AiAction::NoAlert).unwrap().done);
        assert!(env.step(HumanAction::KeepSpeed, AiAction::NoAlert).unwrap().done);
        assert!(matches!(env.step(HumanAction::KeepSpeed, AiAction::NoAlert), Err(Error::EpisodeDone)));
    }

    #[test]
    fn unreset_env_is_done() {
        let mut env = HmiwayEnv::new(free_road(), archetype_profile("Lisa").unwrap()).unwrap();
        assert!(matches!(env.step(HumanAction::KeepSpeed, AiAction::Alert), Err(Error::EpisodeDone)));
    }

    #[test]
    fn invalid_profile_is_a_config_error() {
        let mut bad = archetype_profile("Lisa").unwrap();
        bad.beta = 1.5;
        assert!(HmiwayEnv::new(free_road(), bad).is_err());
    }

    #[test]
    fn scalar_reward_is_sum_of_terms() {
        let mut env = HmiwayEnv::new(ScenarioConfig::default(), archetype_profile("Homer").unwrap()).unwrap();
        env.reset(5).unwrap();
        for t in 0..30 {
            let a = HumanAction::ALL[t % 5];
            let r = env.step(a, AiAction::ALL[t % 2]).unwrap();
            let sum: f64 = r.rewards.as_array().iter().sum();
            assert_eq!(r.rewards.total(), sum);
            if r.done {
                break;
            }
        }
    }
}
