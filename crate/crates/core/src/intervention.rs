//! Two-stage intervention training: driver policies per driver type, then
//! alert policies trained against a frozen driver.

use std::io::Write;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::actions::{AiAction, HumanAction};
use crate::cognitive::DriverProfile;
use crate::driver::DriverBehavior;
use crate::env::{HmiwayEnv, ScenarioConfig};
use crate::error::{Error, Result};
use crate::nn::sample_index;
use crate::ppo::{train, ActorCritic, CurveRow, EnvStep, Environment, PolicyNet, PpoConfig};
use crate::seeding::{derive_seed, rng_for};

/// Stage-1 view of the environment: the driver acts on its own perception,
/// the HMI never alerts and only the driving reward terms count.
pub struct DriverStageEnv {
    env: HmiwayEnv,
}

impl DriverStageEnv {
    pub fn new(config: ScenarioConfig, profile: DriverProfile) -> Result<Self> {
        Ok(Self { env: HmiwayEnv::new(config, profile)? })
    }

    pub fn inner(&self) -> &HmiwayEnv {
        &self.env
    }
}

impl Environment for DriverStageEnv {
    fn observation_dim(&self) -> usize {
        self.env.spec().driver_obs_dim
    }

    fn action_count(&self) -> usize {
        HumanAction::COUNT
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        Ok(self.env.reset(seed)?.driver)
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        let human = HumanAction::from_index(action).ok_or(Error::WidthMismatch { expected: HumanAction::COUNT, got: action })?;
        let r = self.env.step(human, AiAction::NoAlert)?;
        Ok(EnvStep { obs: r.views.driver, reward: r.rewards.driving(), done: r.done, breakdown: Some(r.rewards) })
    }
}

/// HMI observation: the HMI view followed by the one-hot proposed driver action.
pub fn hmi_observation(hmi_view: &[f64], proposed: HumanAction) -> Vec<f64> {
    let mut obs = hmi_view.to_vec();
    obs.extend_from_slice(&HumanAction::one_hot(Some(proposed)));
    obs
}

/// Stage-2 view: a frozen driver policy proposes an action from its own
/// perception, then the HMI chooses whether to alert having seen that
/// proposal. The reward is the full reward including the cognitive terms.
pub struct HmiStageEnv {
    env: HmiwayEnv,
    driver: PolicyNet,
    rng: ChaCha8Rng,
    proposed: HumanAction,
}

impl HmiStageEnv {
    /// `context` is what the HMI believes about the driver; the dynamics
    /// always follow `profile`.
    pub fn new(config: ScenarioConfig, profile: DriverProfile, context: Vec<f64>, driver: PolicyNet) -> Result<Self> {
        let env = HmiwayEnv::with_context(config, profile, context)?;
        let spec = env.spec();
        if driver.obs_dim() != spec.driver_obs_dim || driver.action_count() != HumanAction::COUNT {
            return Err(Error::WidthMismatch { expected: spec.driver_obs_dim, got: driver.obs_dim() });
        }
        Ok(Self { env, driver, rng: rng_for(0, &[]), proposed: HumanAction::KeepSpeed })
    }

    pub fn inner(&self) -> &HmiwayEnv {
        &self.env
    }

    fn propose(&mut self, driver_obs: &[f64]) -> Result<()> {
        let (a, _) = self.driver.sample(driver_obs, &mut self.rng)?;
        self.proposed = HumanAction::from_index(a).expect("policy width checked");
        Ok(())
    }
}

impl Environment for HmiStageEnv {
    fn observation_dim(&self) -> usize {
        self.env.spec().hmi_obs_dim + HumanAction::COUNT
    }

    fn action_count(&self) -> usize {
        AiAction::COUNT
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let views = self.env.reset(seed)?;
        self.rng = rng_for(seed, &[2]);
        self.propose(&views.driver)?;
        Ok(hmi_observation(&views.hmi, self.proposed))
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        let ai = AiAction::from_index(action).ok_or(Error::WidthMismatch { expected: AiAction::COUNT, got: action })?;
        let r = self.env.step(self.proposed, ai)?;
        if !r.done {
            self.propose(&r.views.driver)?;
        }
        let obs = hmi_observation(&r.views.hmi, self.proposed);
        Ok(EnvStep { obs, reward: r.rewards.total(), done: r.done, breakdown: Some(r.rewards) })
    }
}

/// Training budget and hyperparameters of one stage.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    pub ppo: PpoConfig,
    pub total_steps: usize,
    pub rollout_steps: usize,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self { ppo: PpoConfig::default(), total_steps: 200_000, rollout_steps: 2048 }
    }
}

/// A trained policy together with its learning curve.
#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    pub model: ActorCritic,
    pub curve: Vec<CurveRow>,
}

/// Stage 1: trains a driver policy for `profile` on the driving reward.
pub fn train_driver_policy(
    profile: &DriverProfile,
    scenario: &ScenarioConfig,
    stage: &StageConfig,
    seed: u64,
) -> Result<TrainedPolicy> {
    let mut env = DriverStageEnv::new(scenario.clone(), profile.clone())?;
    let mut init = rng_for(seed, &[0]);
    let mut model = ActorCritic::new(env.observation_dim(), env.action_count(), &stage.ppo, &mut init);
    let curve = train(&mut env, &mut model, &stage.ppo, stage.total_steps, stage.rollout_steps, derive_seed(seed, &[1]))?;
    Ok(TrainedPolicy { model, curve })
}

/// Stage 2: trains an alert policy against the frozen `driver`. The HMI sees
/// `context` as its description of the driver.
pub fn train_hmi_policy(
    driver: &PolicyNet,
    profile: &DriverProfile,
    context: Vec<f64>,
    scenario: &ScenarioConfig,
    stage: &StageConfig,
    seed: u64,
) -> Result<TrainedPolicy> {
    let mut env = HmiStageEnv::new(scenario.clone(), profile.clone(), context, driver.clone())?;
    let mut init = rng_for(seed, &[0]);
    let mut model = ActorCritic::new(env.observation_dim(), env.action_count(), &stage.ppo, &mut init);
    let curve = train(&mut env, &mut model, &stage.ppo, stage.total_steps, stage.rollout_steps, derive_seed(seed, &[1]))?;
    Ok(TrainedPolicy { model, curve })
}

/// An alert controller as deployed at evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub enum HmiController {
    /// Learned policy acting greedily; `context` is the driver description it is given.
    Learned { policy: PolicyNet, context: Vec<f64> },
    /// Constant no-alert baseline.
    NoHmi,
}

impl HmiController {
    /// Context to place in the HMI view when driving with `profile`.
    pub fn context_for(&self, profile: &DriverProfile) -> Vec<f64> {
        match self {
            HmiController::Learned { context, .. } => context.clone(),
            HmiController::NoHmi => profile.features().to_vec(),
        }
    }

    pub fn act(&self, hmi_view: &[f64], proposed: HumanAction) -> Result<AiAction> {
        match self {
            HmiController::Learned { policy, .. } => {
                let a = policy.greedy(&hmi_observation(hmi_view, proposed))?;
                Ok(AiAction::from_index(a).expect("two-action policy"))
            }
            HmiController::NoHmi => Ok(AiAction::NoAlert),
        }
    }
}

/// Learned driver policy used as a behaviour source.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedDriver {
    pub policy: PolicyNet,
}

impl DriverBehavior for LearnedDriver {
    fn act(&mut self, driver_obs: &[f64], rng: &mut dyn RngCore) -> HumanAction {
        let probs = self.policy.probabilities(driver_obs).expect("observation width matches policy");
        HumanAction::from_index(sample_index(&probs, rng)).expect("five-action policy")
    }
}

/// Writes a training curve as CSV with one column per reward term.
pub fn write_curve_csv<W: Write>(curve: &[CurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string(), "episodes".into(), "mean_return".into()];
    header.extend(crate::env::RewardBreakdown::NAMES.iter().map(|n| format!("mean_{n}")));
    header.extend(["entropy".into(), "approx_kl".into(), "clip_fraction".into()]);
    w.write_record(&header).map_err(csv_error)?;
    for row in curve {
        let mut rec = vec![row.step.to_string(), row.episodes.to_string(), row.mean_return.to_string()];
        rec.extend(row.breakdown.iter().map(f64::to_string));
        rec.extend([row.entropy.to_string(), row.approx_kl.to_string(), row.clip_fraction.to_string()]);
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cognitive::archetype_profile;

    #[test]
    fn stage_envs_have_expected_widths() {
        let cfg = ScenarioConfig::default();
        let lisa = archetype_profile("Lisa").unwrap();
        let d = DriverStageEnv::new(cfg.clone(), lisa.clone()).unwrap();
        assert_eq!(d.observation_dim(), 35);
        assert_eq!(d.action_count(), 5);
        let mut rng = rng_for(1, &[]);
        let driver = PolicyNet::new(35, 5, &[8], &mut rng);
        let mut h = HmiStageEnv::new(cfg, lisa.clone(), lisa.features().to_vec(), driver).unwrap();
        assert_eq!(h.observation_dim(), 47);
        let obs = h.reset(3).unwrap();
        assert_eq!(obs.len(), 47);
        assert_eq!(obs[42..].iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn mismatched_driver_policy_is_rejected() {
        let cfg = ScenarioConfig::default();
        let mut rng = rng_for(1, &[]);
        let driver = PolicyNet::new(34, 5, &[8], &mut rng);
        let p = archetype_profile("Homer").unwrap();
        assert!(HmiStageEnv::new(cfg, p.clone(), p.features().to_vec(), driver).is_err());
    }

    #[test]
    fn driver_stage_reward_is_driving_terms_only() {
        let cfg = ScenarioConfig::default();
        let mut env = DriverStageEnv::new(cfg, archetype_profile("Bart").unwrap()).unwrap();
        env.reset(5).unwrap();
        for _ in 0..20 {
            let s = env.step(HumanAction::KeepSpeed.index()).unwrap();
            let b = s.breakdown.unwrap();
            assert_eq!(s.reward, b.driving());
            if s.done {
                break;
            }
        }
    }
}
