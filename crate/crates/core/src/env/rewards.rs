use serde::{Deserialize, Serialize};

use crate::actions::{AiAction, HumanAction};

/// Per-term reward coefficients; defaults reproduce the reward table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardCoefficients {
    pub collision: f64,
    pub speed: f64,
    pub right_lane: f64,
    pub merging: f64,
    pub lane_change: f64,
    pub distraction: f64,
    pub alert: f64,
    pub accept_alert: f64,
}

impl Default for RewardCoefficients {
    fn default() -> Self {
        Self {
            collision: -5.0,
            speed: 5.0,
            right_lane: 0.1,
            merging: -0.1,
            lane_change: -0.1,
            distraction: -10.0,
            alert: 10.0,
            accept_alert: 30.0,
        }
    }
}

/// The eight reward terms of one step, kept separate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub coll: f64,
    pub speed: f64,
    pub right_lane: f64,
    pub merging: f64,
    pub lane_change: f64,
    pub distraction: f64,
    pub alert: f64,
    pub accept_alert: f64,
}

impl RewardBreakdown {
    pub const NAMES: [&'static str; 8] =
        ["coll", "speed", "right_lane", "merging", "lane_change", "distraction", "alert", "accept_alert"];

    pub fn total(&self) -> f64 {
        self.as_array().iter().sum()
    }

    /// Terms that depend only on driving (first five rows).
    pub fn driving(&self) -> f64 {
        self.coll + self.speed + self.right_lane + self.merging + self.lane_change
    }

    pub fn as_array(&self) -> [f64; 8] {
        [
            self.coll,
            self.speed,
            self.right_lane,
            self.merging,
            self.lane_change,
            self.distraction,
            self.alert,
            self.accept_alert,
        ]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            coll: a[0],
            speed: a[1],
            right_lane: a[2],
            merging: a[3],
            lane_change: a[4],
            distraction: a[5],
            alert: a[6],
            accept_alert: a[7],
        }
    }
}

/// Post-transition facts the reward depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInputs {
    pub crashed: bool,
    pub current_speed: f64,
    pub in_right_lane: bool,
    pub in_merging_lane: bool,
    pub human_action: HumanAction,
    pub ai_action: AiAction,
    pub distracted_prev: bool,
    pub distracted_now: bool,
}

pub fn compute_rewards(
    inputs: &RewardInputs,
    max_speed: f64,
    target_speed: f64,
    k: &RewardCoefficients,
) -> RewardBreakdown {
    let flag = |b: bool, v: f64| if b { v } else { 0.0 };
    RewardBreakdown {
        coll: flag(inputs.crashed, k.collision),
        speed: k.speed * inputs.current_speed / max_speed,
        right_lane: flag(inputs.in_right_lane, k.right_lane),
        merging: flag(
            inputs.in_merging_lane,
            k.merging * (target_speed - inputs.current_speed) / target_speed,
        ),
        lane_change: flag(inputs.human_action.is_lane_change(), k.lane_change),
        distraction: flag(inputs.distracted_now, k.distraction),
        alert: flag(inputs.ai_action == AiAction::NoAlert && !inputs.distracted_prev, k.alert),
        accept_alert: flag(
            inputs.ai_action == AiAction::Alert && inputs.distracted_prev && !inputs.distracted_now,
            k.accept_alert,
        ),
    }
}
