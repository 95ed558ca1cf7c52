use crate::error::Result;

use super::{
    bumper_gap, idm_acceleration, step_vehicle, vehicles_overlap, IdmParams, Kinematics, LaneCommand, RoadGeometry,
    VehicleState, FREE_ROAD_GAP,
};

/// Outcome of one simulator tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TickOutcome {
    pub crashed: bool,
    pub ego_command_ignored: bool,
    pub ego_reached_end: bool,
}

/// The ego vehicle plus IDM-controlled ambient traffic.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub geometry: RoadGeometry,
    pub kin: Kinematics,
    pub idm: IdmParams,
    pub dt: f64,
    pub ego: VehicleState,
    pub others: Vec<VehicleState>,
}

impl World {
    pub fn new(
        geometry: RoadGeometry,
        kin: Kinematics,
        idm: IdmParams,
        dt: f64,
        ego: VehicleState,
        others: Vec<VehicleState>,
    ) -> Self {
        Self { geometry, kin, idm, dt, ego, others }
    }

    /// Nearest vehicle ahead of `v` sharing any lane `v` occupies, as `(gap, speed)`.
    /// Merging lanes contribute a stationary obstacle at their end.
    fn leader_of(&self, v: &VehicleState) -> (f64, f64) {
        let mut best = (FREE_ROAD_GAP, v.speed);
        for o in std::iter::once(&self.ego).chain(self.others.iter()) {
            if std::ptr::eq(o, v) {
                continue;
            }
            if o.position <= v.position {
                continue;
            }
            if !(o.occupies(v.lane) || o.occupies(v.target_lane)) {
                continue;
            }
            let gap = bumper_gap(v, o);
            if gap < best.0 {
                best = (gap, o.speed);
            }
        }
        for lane in [v.lane, v.target_lane] {
            if self.geometry.merging[lane] {
                let gap = self.geometry.merge_point - v.front();
                if gap < best.0 {
                    best = (gap, 0.0);
                }
            }
        }
        best
    }

    fn acceleration_of(&self, v: &VehicleState) -> f64 {
        let (gap, lead_speed) = self.leader_of(v);
        let params = self.idm.with_desired_speed(v.desired_speed.max(0.1));
        idm_acceleration(v.speed, gap, lead_speed, &params).unwrap_or(-params.emergency_decel)
    }

    /// Gap-acceptance test for `v` moving into `target`: both the new
    /// follower and `v` itself must be able to keep braking within the
    /// comfortable deceleration.
    pub fn lane_change_safe(&self, v: &VehicleState, target: usize) -> bool {
        if !self.geometry.lane_available(target, v.position) {
            return false;
        }
        let mut moved = v.clone();
        moved.lane = target;
        moved.target_lane = target;
        let everyone = std::iter::once(&self.ego).chain(self.others.iter());
        let mut lead: Option<&VehicleState> = None;
        let mut follow: Option<&VehicleState> = None;
        for o in everyone {
            if std::ptr::eq(o, v) || !o.occupies(target) {
                continue;
            }
            if (o.position - v.position).abs() < 0.5 * (o.length + v.length) + 1.0 {
                return false;
            }
            if o.position > v.position {
                if lead.is_none_or(|l| o.position < l.position) {
                    lead = Some(o);
                }
            } else if follow.is_none_or(|f| o.position > f.position) {
                follow = Some(o);
            }
        }
        let limit = -self.idm.comfort_decel;
        if let Some(l) = lead {
            let params = self.idm.with_desired_speed(moved.desired_speed.max(0.1));
            match idm_acceleration(moved.speed, bumper_gap(&moved, l), l.speed, &params) {
                Ok(a) if a >= limit => {}
                _ => return false,
            }
        }
        if let Some(f) = follow {
            let params = self.idm.with_desired_speed(f.desired_speed.max(0.1));
            match idm_acceleration(f.speed, bumper_gap(f, &moved), moved.speed, &params) {
                Ok(a) if a >= limit => {}
                _ => return false,
            }
        }
        true
    }

    /// Advances every vehicle by one tick; the ego follows IDM towards its
    /// desired speed and executes `ego_command`.
    pub fn tick(&mut self, ego_command: LaneCommand) -> Result<TickOutcome> {
        let ego_accel = self.acceleration_of(&self.ego);
        let mut plans: Vec<(f64, LaneCommand)> = Vec::with_capacity(self.others.len());
        for v in &self.others {
            let accel = self.acceleration_of(v);
            let command = if self.geometry.merging[v.lane] && !v.changing_lane() && v.lane > 0 && self.lane_change_safe(v, v.lane - 1) {
                LaneCommand::Left
            } else {
                LaneCommand::Keep
            };
            plans.push((accel, command));
        }

        let ego_step = step_vehicle(&self.ego, ego_accel, ego_command, self.dt, &self.geometry, &self.kin)?;
        self.ego = ego_step.state;
        let mut next = Vec::with_capacity(self.others.len());
        for (v, (accel, command)) in self.others.iter().zip(plans) {
            let s = step_vehicle(v, accel, command, self.dt, &self.geometry, &self.kin)?.state;
            if s.rear() < self.geometry.lane_length {
                next.push(s);
            }
        }
        self.others = next;

        let mut outcome = TickOutcome { ego_command_ignored: ego_step.command_ignored, ..Default::default() };
        outcome.crashed = self.others.iter().any(|o| vehicles_overlap(&self.ego, o, &self.geometry, &self.kin))
            || (self.geometry.merging[self.ego.lane]
                && self.ego.target_lane == self.ego.lane
                && self.ego.front() > self.geometry.merge_point + 0.5);
        outcome.ego_reached_end = self.ego.front() >= self.geometry.lane_length;
        Ok(outcome)
    }

    pub fn ego_crashed(&self) -> bool {
        self.others.iter().any(|o| vehicles_overlap(&self.ego, o, &self.geometry, &self.kin))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::spawn_traffic_around;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world_with(others: Vec<VehicleState>) -> World {
        let mut ego = VehicleState::new(60.0, 1, 25.0);
        ego.is_ego = true;
        ego.desired_speed = 30.0;
        World::new(RoadGeometry::merge(), Kinematics::default(), IdmParams::default(), 1.0 / 15.0, ego, others)
    }

    #[test]
    fn follower_does_not_rear_end_slow_leader() {
        let mut w = world_with(vec![VehicleState::new(120.0, 1, 10.0)]);
        for _ in 0..600 {
            let out = w.tick(LaneCommand::Keep).unwrap();
            assert!(!out.crashed);
        }
        assert!(w.ego.speed < 11.0);
    }

    #[test]
    fn merging_vehicle_stops_at_lane_end_or_merges() {
        let mut blocker = VehicleState::new(250.0, 1, 20.0);
        blocker.desired_speed = 20.0;
        let merger = VehicleState::new(250.0, 2, 20.0);
        let mut w = world_with(vec![blocker, merger]);
        w.ego.position = 10.0;
        for _ in 0..900 {
            w.tick(LaneCommand::Keep).unwrap();
            for o in &w.others {
                if w.geometry.merging[o.lane] && o.target_lane == o.lane {
                    assert!(o.front() <= w.geometry.merge_point + 1e-6);
                }
            }
        }
        assert!(w.others.iter().all(|o| !w.geometry.merging[o.lane] || o.changing_lane() || o.speed < 1.0));
    }

    #[test]
    fn ticks_are_deterministic() {
        let g = RoadGeometry::merge();
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let ego = VehicleState::new(60.0, 2, 25.0);
            let (others, _) = spawn_traffic_around(&g, std::slice::from_ref(&ego), 20, &mut rng);
            World::new(g.clone(), Kinematics::default(), IdmParams::default(), 1.0 / 15.0, ego, others)
        };
        let (mut a, mut b) = (build(), build());
        for t in 0..300 {
            let cmd = if t % 40 == 0 { LaneCommand::Left } else { LaneCommand::Keep };
            let oa = a.tick(cmd).unwrap();
            let ob = b.tick(cmd).unwrap();
            assert_eq!(oa, ob);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn cutting_in_front_of_close_vehicle_is_unsafe() {
        let w = world_with(vec![VehicleState::new(55.0, 0, 30.0)]);
        assert!(!w.lane_change_safe(&w.ego, 0));
        let w = world_with(vec![VehicleState::new(200.0, 0, 30.0)]);
        assert!(w.lane_change_safe(&w.ego, 0));
    }
}
