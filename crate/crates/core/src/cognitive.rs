//! Controlled Markov model of driver distraction, alert acceptance and
//! intervention persistence.
//!
//! Per step the counter and acceptance flag are updated from the HMI action
//! first, then the distraction flag is sampled with transition
//! probabilities modulated by the new acceptance flag, and finally the
//! applied vehicle action is gated: a distracted driver keeps repeating the
//! previously applied action.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::actions::{AiAction, HumanAction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Low,
    High,
}

impl Level {
    pub fn as_label(self) -> u32 {
        match self {
            Level::Low => 0,
            Level::High => 1,
        }
    }
}

/// Per-driver cognitive and perceptual parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverProfile {
    pub name: String,
    pub driver_id: u32,
    /// Baseline attentive -> distracted probability.
    pub beta: f64,
    /// Baseline distracted -> attentive probability.
    pub alpha: f64,
    /// Intervention effectiveness factor.
    pub eta: f64,
    /// Obstacle inflation multiplier applied to perception.
    pub inflation: f64,
    pub distractibility: Level,
    pub preference: Level,
}

impl DriverProfile {
    /// Builds a profile, deriving the preference label from `eta`.
    pub fn new(name: &str, driver_id: u32, beta: f64, alpha: f64, eta: f64, inflation: f64) -> Result<Self> {
        let profile = Self {
            name: name.to_string(),
            driver_id,
            beta,
            alpha,
            eta,
            inflation,
            distractibility: if beta >= 0.5 { Level::High } else { Level::Low },
            preference: preference_for(eta),
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.beta) || !unit(self.alpha) {
            return Err(Error::Config(format!(
                "profile {}: beta and alpha must lie in [0,1] (beta={}, alpha={})",
                self.name, self.beta, self.alpha
            )));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("profile {}: eta must be >= 0", self.name)));
        }
        if !(self.inflation > 0.0 && self.inflation.is_finite()) {
            return Err(Error::Config(format!("profile {}: inflation must be > 0", self.name)));
        }
        if self.preference != preference_for(self.eta) {
            return Err(Error::Config(format!(
                "profile {}: preference label must be high iff eta >= 0.5",
                self.name
            )));
        }
        Ok(())
    }

    /// A driver that never becomes distracted and perceives the world as is.
    pub fn attentive(driver_id: u32) -> Self {
        Self {
            name: "Attentive".into(),
            driver_id,
            beta: 0.0,
            alpha: 1.0,
            eta: 0.0,
            inflation: 1.0,
            distractibility: Level::Low,
            preference: Level::Low,
        }
    }

    /// Compact numeric features exposed to HMI policies.
    pub fn features(&self) -> [f64; 4] {
        [self.beta, self.alpha, self.eta, self.inflation / 10.0]
    }
}

fn preference_for(eta: f64) -> Level {
    if eta >= 0.5 {
        Level::High
    } else {
        Level::Low
    }
}

/// Names accepted by [`archetype_profile`].
pub const ARCHETYPES: [&str; 5] = ["Lisa", "Marge", "Bart", "Homer", "Avg"];

/// Built-in driver types used for data generation and HMI training.
pub fn archetype_profile(name: &str) -> Result<DriverProfile> {
    let (id, beta, alpha, eta, infl) = match name.to_ascii_lowercase().as_str() {
        "lisa" => (0, 0.2, 0.8, 0.01, 3.0),
        "marge" => (1, 0.2, 0.8, 1.0, 9.0),
        "bart" => (2, 0.8, 0.2, 0.01, 3.0),
        "homer" => (3, 0.8, 0.2, 1.0, 9.0),
        "avg" | "average" => (4, 0.5, 0.5, 0.505, 6.0),
        _ => return Err(Error::UnknownProfile(name.to_string())),
    };
    let canonical = ARCHETYPES[id as usize];
    DriverProfile::new(canonical, id, beta, alpha, eta, infl)
}

/// Looks a built-in profile up by its driver id.
pub fn archetype_by_id(id: u32) -> Result<DriverProfile> {
    ARCHETYPES
        .get(id as usize)
        .ok_or_else(|| Error::UnknownProfile(format!("id {id}")))
        .and_then(|name| archetype_profile(name))
}

/// The four driver types of the population.
pub fn population() -> Vec<DriverProfile> {
    ARCHETYPES[..4].iter().map(|n| archetype_profile(n).expect("built-in")).collect()
}

/// Distraction, acceptance and counter state of one driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CognitiveState {
    pub distracted: bool,
    pub accepted: bool,
    pub counter: u32,
    /// Last applied vehicle action; `None` before the first step.
    pub applied: Option<HumanAction>,
}

impl CognitiveState {
    pub fn initial(distracted: bool) -> Self {
        Self { distracted, accepted: false, counter: 0, applied: None }
    }
}

/// Acceptance flag and intervention counter update.
pub fn step_acceptance(accepted_prev: bool, counter_prev: u32, action: AiAction, window: u32) -> (bool, u32) {
    debug_assert!(window >= 1 && counter_prev < window);
    match (accepted_prev, action) {
        (_, AiAction::Alert) => (true, 0),
        (false, AiAction::NoAlert) => (false, 0),
        (true, AiAction::NoAlert) => {
            let counter = (counter_prev + 1) % window;
            (counter_prev < window - 1, counter)
        }
    }
}

/// Probability that the driver is distracted after this step given the
/// previous distraction flag and the current acceptance flag.
pub fn modulated_transition_prob(distracted_prev: bool, accepted: bool, profile: &DriverProfile) -> f64 {
    let boost = if accepted { profile.eta } else { 0.0 };
    if distracted_prev {
        1.0 - (profile.alpha + boost).min(1.0)
    } else {
        (profile.beta - boost).max(0.0)
    }
}

/// One full cognitive update. Returns the new state and the applied action.
pub fn step_cognitive<R: Rng + ?Sized>(
    state: &CognitiveState,
    ai_action: AiAction,
    human_action: HumanAction,
    profile: &DriverProfile,
    window: u32,
    rng: &mut R,
) -> (CognitiveState, HumanAction) {
    let (accepted, counter) = step_acceptance(state.accepted, state.counter, ai_action, window);
    let p = modulated_transition_prob(state.distracted, accepted, profile);
    let u: f64 = rng.random();
    let distracted = u < p;
    let applied = match (distracted, state.applied) {
        (true, Some(previous)) => previous,
        _ => human_action,
    };
    (CognitiveState { distracted, accepted, counter, applied: Some(applied) }, applied)
}

/// Fixed HMI policies with an analytic stationary distraction fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedAlertPolicy {
    AlwaysAlert,
    NeverAlert,
}

/// Long-run fraction of distracted steps of the two-state chain induced by
/// a fixed alert policy.
pub fn stationary_distraction_fraction(profile: &DriverProfile, policy: FixedAlertPolicy) -> Result<f64> {
    let accepted = policy == FixedAlertPolicy::AlwaysAlert;
    let to_distracted = modulated_transition_prob(false, accepted, profile);
    let to_attentive = 1.0 - modulated_transition_prob(true, accepted, profile);
    let total = to_distracted + to_attentive;
    if total <= 0.0 {
        return Err(Error::AbsorbingChain);
    }
    Ok(to_distracted / total)
}
