//! Kinematic highway simulation: road geometry, vehicle integration,
//! IDM-controlled ambient traffic and lidar-style perception.

mod idm;
mod lidar;
mod spawn;
mod world;

pub use idm::{idm_acceleration, IdmParams, FREE_ROAD_GAP};
pub use lidar::{lidar_observe, ray_box_distance, LidarConfig, Observation};
pub use spawn::{spawn_traffic, spawn_traffic_around, SpawnReport};
pub use world::World;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lane layout of the simulated road section.
///
/// Lane 0 is the leftmost lane; indices grow to the right. A merging lane
/// only exists upstream of `merge_point`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadGeometry {
    pub lane_count: usize,
    pub lane_length: f64,
    pub lane_width: f64,
    pub merging: Vec<bool>,
    pub merge_point: f64,
    pub speed_limits: (f64, f64),
}

impl Default for RoadGeometry {
    fn default() -> Self {
        Self::merge()
    }
}

impl RoadGeometry {
    /// Two through lanes plus a merging on-ramp on the right.
    pub fn merge() -> Self {
        Self {
            lane_count: 3,
            lane_length: 1000.0,
            lane_width: 4.0,
            merging: vec![false, false, true],
            merge_point: 300.0,
            speed_limits: (20.0, 30.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lane_count == 0 {
            return Err(Error::Config("lane_count must be positive".into()));
        }
        if self.merging.len() != self.lane_count {
            return Err(Error::Config(format!(
                "merging flags ({}) must match lane_count ({})",
                self.merging.len(),
                self.lane_count
            )));
        }
        if self.merging.iter().filter(|m| **m).count() > 1 {
            return Err(Error::Config("at most one merging lane is supported".into()));
        }
        if self.merging.iter().all(|m| *m) {
            return Err(Error::Config("at least one through lane is required".into()));
        }
        if !(self.lane_length > 0.0 && self.lane_width > 0.0) {
            return Err(Error::Config("lane length and width must be positive".into()));
        }
        if self.merge_lane().is_some() && !(self.merge_point > 0.0 && self.merge_point <= self.lane_length) {
            return Err(Error::Config("merge point must lie within the lane length".into()));
        }
        let (lo, hi) = self.speed_limits;
        if !(lo >= 0.0 && hi >= lo) {
            return Err(Error::Config(format!("invalid speed limits ({lo}, {hi})")));
        }
        Ok(())
    }

    pub fn merge_lane(&self) -> Option<usize> {
        self.merging.iter().position(|m| *m)
    }

    /// Rightmost lane that is not a merging lane.
    pub fn rightmost_through_lane(&self) -> usize {
        (0..self.lane_count).rev().find(|l| !self.merging[*l]).unwrap_or(0)
    }

    /// Whether `lane` exists at longitudinal position `x`.
    pub fn lane_available(&self, lane: usize, x: f64) -> bool {
        lane < self.lane_count && (!self.merging[lane] || x < self.merge_point)
    }

    /// Downstream end of `lane`.
    pub fn lane_end(&self, lane: usize) -> f64 {
        if self.merging.get(lane).copied().unwrap_or(false) {
            self.merge_point
        } else {
            self.lane_length
        }
    }
}

/// Lateral command accompanying a longitudinal acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneCommand {
    Keep,
    Left,
    Right,
}

/// Integration limits shared by all vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Kinematics {
    pub max_speed: f64,
    /// Simulator ticks needed to complete a lane change.
    pub lane_change_ticks: u32,
}

impl Default for Kinematics {
    fn default() -> Self {
        Self { max_speed: 40.0, lane_change_ticks: 9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Longitudinal position of the vehicle centre (m).
    pub position: f64,
    pub lane: usize,
    pub speed: f64,
    /// Equal to `lane` unless a lane change is in progress.
    pub target_lane: usize,
    pub lane_change_elapsed: u32,
    pub length: f64,
    pub width: f64,
    pub is_ego: bool,
    /// IDM desired speed of this vehicle.
    pub desired_speed: f64,
}

impl VehicleState {
    pub const DEFAULT_LENGTH: f64 = 5.0;
    pub const DEFAULT_WIDTH: f64 = 2.0;

    pub fn new(position: f64, lane: usize, speed: f64) -> Self {
        Self {
            position,
            lane,
            speed,
            target_lane: lane,
            lane_change_elapsed: 0,
            length: Self::DEFAULT_LENGTH,
            width: Self::DEFAULT_WIDTH,
            is_ego: false,
            desired_speed: speed,
        }
    }

    pub fn changing_lane(&self) -> bool {
        self.target_lane != self.lane
    }

    pub fn occupies(&self, lane: usize) -> bool {
        self.lane == lane || self.target_lane == lane
    }

    /// Lateral centre (m), interpolated during a lane change.
    pub fn lateral(&self, geometry: &RoadGeometry, kin: &Kinematics) -> f64 {
        let from = self.lane as f64;
        let to = self.target_lane as f64;
        let progress = if self.changing_lane() {
            f64::from(self.lane_change_elapsed) / f64::from(kin.lane_change_ticks.max(1))
        } else {
            0.0
        };
        (from + (to - from) * progress) * geometry.lane_width
    }

    pub fn front(&self) -> f64 {
        self.position + 0.5 * self.length
    }

    pub fn rear(&self) -> f64 {
        self.position - 0.5 * self.length
    }
}

/// Bumper-to-bumper gap from `follower` to `leader` along the lane.
pub fn bumper_gap(follower: &VehicleState, leader: &VehicleState) -> f64 {
    leader.rear() - follower.front()
}

/// Result of integrating one vehicle over one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleStep {
    pub state: VehicleState,
    /// The lane command could not be executed (road edge or lane change in progress).
    pub command_ignored: bool,
}

/// Advances `v` by one tick of length `dt` under acceleration `accel`.
///
/// Speed is clamped to `[0, max_speed]`; the position integrates the clamped
/// motion exactly. Lane changes take `kin.lane_change_ticks` ticks.
pub fn step_vehicle(
    v: &VehicleState,
    accel: f64,
    command: LaneCommand,
    dt: f64,
    geometry: &RoadGeometry,
    kin: &Kinematics,
) -> Result<VehicleStep> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("tick length must be positive, got {dt}")));
    }
    let mut next = v.clone();
    let mut command_ignored = false;

    if command != LaneCommand::Keep {
        let target = match command {
            LaneCommand::Left => v.lane.checked_sub(1),
            LaneCommand::Right => Some(v.lane + 1),
            LaneCommand::Keep => unreachable!(),
        };
        match target {
            Some(t) if !v.changing_lane() && geometry.lane_available(t, v.position) => {
                next.target_lane = t;
                next.lane_change_elapsed = 0;
            }
            _ => command_ignored = true,
        }
    }

    next.position += travel(v.speed, accel, dt, kin.max_speed);
    next.speed = (v.speed + accel * dt).clamp(0.0, kin.max_speed);

    if next.changing_lane() {
        next.lane_change_elapsed += 1;
        if next.lane_change_elapsed >= kin.lane_change_ticks {
            next.lane = next.target_lane;
            next.lane_change_elapsed = 0;
        }
    }
    Ok(VehicleStep { state: next, command_ignored })
}

/// Distance covered in `dt` starting at `speed` under constant `accel`,
/// with the speed saturating at 0 and `max_speed`.
fn travel(speed: f64, accel: f64, dt: f64, max_speed: f64) -> f64 {
    let unclamped = speed + accel * dt;
    if accel < 0.0 && unclamped < 0.0 {
        let t_stop = speed / -accel;
        speed * t_stop + 0.5 * accel * t_stop * t_stop
    } else if accel > 0.0 && unclamped > max_speed {
        let t_cap = ((max_speed - speed) / accel).max(0.0);
        speed * t_cap + 0.5 * accel * t_cap * t_cap + max_speed * (dt - t_cap)
    } else {
        speed * dt + 0.5 * accel * dt * dt
    }
}

/// Axis-aligned footprint overlap of two vehicles.
pub fn vehicles_overlap(a: &VehicleState, b: &VehicleState, geometry: &RoadGeometry, kin: &Kinematics) -> bool {
    let dx = (a.position - b.position).abs();
    let dy = (a.lateral(geometry, kin) - b.lateral(geometry, kin)).abs();
    dx < 0.5 * (a.length + b.length) && dy < 0.5 * (a.width + b.width)
}
