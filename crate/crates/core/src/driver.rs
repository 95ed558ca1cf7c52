//! Driver behaviour sources used to produce demonstrations.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::actions::HumanAction;
use crate::traffic::LidarConfig;

/// Anything that proposes a human action from the driver's own view.
pub trait DriverBehavior {
    fn act(&mut self, driver_obs: &[f64], rng: &mut dyn RngCore) -> HumanAction;
}

/// Rule-based driver: follows at a safe perceived distance, merges out of
/// the on-ramp when the left side looks clear and otherwise cruises.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedDriver {
    pub lidar: LidarConfig,
    pub max_speed: f64,
    pub lane_count: usize,
    pub cruise_speed: f64,
    /// Perceived headway (m) below which the driver slows down.
    pub follow_distance: f64,
    /// Perceived lateral clearance (m) required to change lanes.
    pub lane_change_clearance: f64,
    /// Probability of a random longitudinal action.
    pub epsilon: f64,
}

impl ScriptedDriver {
    pub fn new(lidar: LidarConfig, max_speed: f64, lane_count: usize) -> Self {
        Self {
            lidar,
            max_speed,
            lane_count,
            cruise_speed: 35.0,
            follow_distance: 25.0,
            lane_change_clearance: 10.0,
            epsilon: 0.2,
        }
    }

    fn sector_min(&self, obs: &[f64], centre: usize, half_span: usize) -> f64 {
        let k = self.lidar.sectors;
        (0..=2 * half_span)
            .map(|o| obs[(centre + k + o - half_span) % k])
            .fold(f64::INFINITY, f64::min)
            * self.lidar.range
    }
}

impl DriverBehavior for ScriptedDriver {
    fn act(&mut self, obs: &[f64], rng: &mut dyn RngCore) -> HumanAction {
        let k = self.lidar.sectors;
        let speed = obs[2 * k] * self.max_speed;
        let lane = (obs[2 * k + 1] * (self.lane_count.saturating_sub(1)) as f64).round() as usize;
        let merging = obs[2 * k + 2] > 0.5;

        if rng.random::<f64>() < self.epsilon {
            let longitudinal = [HumanAction::SpeedUp, HumanAction::SlowDown, HumanAction::KeepSpeed];
            return longitudinal[rng.random_range(0..longitudinal.len())];
        }
        let ahead = obs[0] * self.lidar.range;
        let closing = obs[k] < 0.0;
        let left = self.sector_min(obs, 3 * k / 4, 1);
        let right = self.sector_min(obs, k / 4, 1);
        if merging && lane > 0 && left >= self.lane_change_clearance {
            HumanAction::MoveLeft
        } else if ahead < self.follow_distance && closing {
            HumanAction::SlowDown
        } else if !merging && lane == 0 && self.lane_count > 2 && right >= self.lane_change_clearance {
            HumanAction::MoveRight
        } else if speed < self.cruise_speed {
            HumanAction::SpeedUp
        } else {
            HumanAction::KeepSpeed
        }
    }
}

/// Uniformly random driver.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomDriver;

impl DriverBehavior for RandomDriver {
    fn act(&mut self, _driver_obs: &[f64], rng: &mut dyn RngCore) -> HumanAction {
        HumanAction::ALL[rng.random_range(0..HumanAction::COUNT)]
    }
}
