use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traffic::{IdmParams, Kinematics, LidarConfig, RoadGeometry};

use super::rewards::RewardCoefficients;

/// Everything needed to build an episode of the merge scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub geometry: RoadGeometry,
    pub kinematics: Kinematics,
    pub idm: IdmParams,
    pub lidar: LidarConfig,
    /// Maximum number of ambient vehicles.
    pub max_vehicles: usize,
    /// Simulator tick (s).
    pub dt: f64,
    /// Simulator ticks per agent action.
    pub ticks_per_action: u32,
    /// Action steps per episode.
    pub episode_steps: u32,
    /// Intervention effectiveness window N, in action steps.
    pub window: u32,
    /// Speed normalising the speed reward (m/s).
    pub max_speed: f64,
    /// Reference speed of the merging-lane penalty (m/s).
    pub target_speed: f64,
    /// Change of the ego's desired speed per speed_up/slow_down (m/s).
    pub desired_speed_step: f64,
    pub min_desired_speed: f64,
    /// Ego spawn lane; `None` places the ego in the merging lane.
    pub ego_lane: Option<usize>,
    pub ego_position: f64,
    pub initial_distracted: bool,
    pub rewards: RewardCoefficients,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            geometry: RoadGeometry::merge(),
            kinematics: Kinematics::default(),
            idm: IdmParams::default(),
            lidar: LidarConfig::default(),
            max_vehicles: 20,
            dt: 1.0 / 15.0,
            ticks_per_action: 3,
            episode_steps: 100,
            window: 15,
            max_speed: 40.0,
            target_speed: 30.0,
            desired_speed_step: 5.0,
            min_desired_speed: 10.0,
            ego_lane: None,
            ego_position: 60.0,
            initial_distracted: false,
            rewards: RewardCoefficients::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.idm.validate()?;
        let positive = [
            ("dt", self.dt),
            ("max_speed", self.max_speed),
            ("target_speed", self.target_speed),
            ("desired_speed_step", self.desired_speed_step),
            ("kinematics.max_speed", self.kinematics.max_speed),
            ("lidar.range", self.lidar.range),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.lidar.sectors < 4 {
            return Err(Error::Config("lidar.sectors must be at least 4".into()));
        }
        if self.lidar.rays_per_sector == 0 {
            return Err(Error::Config("lidar.rays_per_sector must be positive".into()));
        }
        if self.ticks_per_action == 0 || self.episode_steps == 0 || self.window == 0 {
            return Err(Error::Config("ticks_per_action, episode_steps and window must be positive".into()));
        }
        if self.kinematics.lane_change_ticks == 0 {
            return Err(Error::Config("kinematics.lane_change_ticks must be positive".into()));
        }
        if let Some(lane) = self.ego_lane {
            if !self.geometry.lane_available(lane, self.ego_position) {
                return Err(Error::Config(format!("ego lane {lane} does not exist at the spawn position")));
            }
        }
        if !(self.ego_position > 0.0 && self.ego_position < self.geometry.lane_length) {
            return Err(Error::Config("ego_position must lie on the road".into()));
        }
        if !(self.min_desired_speed >= 0.0 && self.min_desired_speed <= self.kinematics.max_speed) {
            return Err(Error::Config("min_desired_speed must lie in [0, kinematics.max_speed]".into()));
        }
        Ok(())
    }

    /// Lane the ego starts in.
    pub fn ego_spawn_lane(&self) -> usize {
        self.ego_lane
            .or_else(|| self.geometry.merge_lane())
            .unwrap_or_else(|| self.geometry.rightmost_through_lane())
    }
}
