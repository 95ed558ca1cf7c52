use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{Kinematics, RoadGeometry, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarConfig {
    /// Number of angular sectors K; sector 0 is centred on the heading.
    pub sectors: usize,
    /// Sensing range (m).
    pub range: f64,
    /// Rays cast per sector; the sector reports the minimum over its rays.
    pub rays_per_sector: usize,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self { sectors: 16, range: 60.0, rays_per_sector: 9 }
    }
}

impl LidarConfig {
    pub fn observation_dim(&self) -> usize {
        Observation::dim(self.sectors)
    }

    /// Ray angles (radians, counter-clockwise from the heading towards +y)
    /// belonging to `sector`.
    pub fn ray_angles(&self, sector: usize) -> impl Iterator<Item = f64> + '_ {
        let width = TAU / self.sectors as f64;
        let rays = self.rays_per_sector.max(1);
        (0..rays).map(move |m| (sector as f64 - 0.5 + (m as f64 + 0.5) / rays as f64) * width)
    }
}

/// Lidar-style observation of the ego's surroundings.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Nearest obstacle distance per sector, normalised by range; 1.0 when clear.
    pub distances: Vec<f64>,
    /// Relative longitudinal speed of the nearest obstacle, normalised by max speed.
    pub relative_speeds: Vec<f64>,
    pub ego_speed: f64,
    pub ego_lane: f64,
    pub in_merging_lane: f64,
}

impl Observation {
    pub fn dim(sectors: usize) -> usize {
        2 * sectors + 3
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.distances.len() * 2 + 3);
        v.extend_from_slice(&self.distances);
        v.extend_from_slice(&self.relative_speeds);
        v.push(self.ego_speed);
        v.push(self.ego_lane);
        v.push(self.in_merging_lane);
        v
    }
}

/// Distance from the origin along the unit direction `(dx, dy)` to the
/// axis-aligned box with centre `(cx, cy)` and half extents `(hx, hy)`.
/// Returns 0 when the origin lies inside the box.
pub fn ray_box_distance(dx: f64, dy: f64, cx: f64, cy: f64, hx: f64, hy: f64) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for (d, c, h) in [(dx, cx, hx), (dy, cy, hy)] {
        let lo = c - h;
        let hi = c + h;
        if d.abs() < 1e-15 {
            if 0.0 < lo || 0.0 > hi {
                return None;
            }
        } else {
            let t1 = lo / d;
            let t2 = hi / d;
            let (a, b) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            t_near = t_near.max(a);
            t_far = t_far.min(b);
        }
    }
    if t_near > t_far || t_far < 0.0 {
        None
    } else {
        Some(t_near.max(0.0))
    }
}

/// Casts the sector rays from the ego centre against the footprints of
/// `others`, each dilated by `inflation` about its centre.
pub fn lidar_observe(
    ego: &VehicleState,
    others: &[VehicleState],
    inflation: f64,
    config: &LidarConfig,
    geometry: &RoadGeometry,
    kin: &Kinematics,
) -> Observation {
    let k = config.sectors;
    let mut nearest = vec![f64::INFINITY; k];
    let mut rel = vec![0.0; k];
    let ego_y = ego.lateral(geometry, kin);

    // (cx, cy, hx, hy, relative speed) of candidates within reach.
    let candidates: Vec<(f64, f64, f64, f64, f64)> = others
        .iter()
        .filter_map(|o| {
            let hx = 0.5 * o.length * inflation;
            let hy = 0.5 * o.width * inflation;
            let cx = o.position - ego.position;
            let cy = o.lateral(geometry, kin) - ego_y;
            if cx.abs() - hx > config.range || cy.abs() - hy > config.range {
                None
            } else {
                Some((cx, cy, hx, hy, o.speed - ego.speed))
            }
        })
        .collect();

    if !candidates.is_empty() {
        for sector in 0..k {
            for angle in config.ray_angles(sector) {
                let (dy, dx) = angle.sin_cos();
                for &(cx, cy, hx, hy, dv) in &candidates {
                    if let Some(t) = ray_box_distance(dx, dy, cx, cy, hx, hy) {
                        if t < nearest[sector] {
                            nearest[sector] = t;
                            rel[sector] = dv;
                        }
                    }
                }
            }
        }
    }

    let distances = nearest.iter().map(|d| (d / config.range).min(1.0)).collect::<Vec<_>>();
    let relative_speeds = nearest
        .iter()
        .zip(&rel)
        .map(|(d, v)| if *d <= config.range { v / kin.max_speed } else { 0.0 })
        .collect();
    let lanes = geometry.lane_count.saturating_sub(1).max(1) as f64;
    Observation {
        distances,
        relative_speeds,
        ego_speed: ego.speed / kin.max_speed,
        ego_lane: ego.lane as f64 / lanes,
        in_merging_lane: if geometry.merging[ego.lane] { 1.0 } else { 0.0 },
    }
}
