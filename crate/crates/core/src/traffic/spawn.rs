use rand::Rng;

use super::{RoadGeometry, VehicleState};

/// Minimum bumper-to-bumper gap between spawned vehicles in the same lane (m).
pub const SPAWN_GAP: f64 = 15.0;

/// Upstream road length used for placing ambient vehicles (m).
pub const SPAWN_EXTENT: f64 = 500.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SpawnReport {
    pub requested: usize,
    pub placed: usize,
}

/// Places up to `max_vehicles` ambient vehicles on the road without overlap.
pub fn spawn_traffic<R: Rng>(geometry: &RoadGeometry, max_vehicles: usize, rng: &mut R) -> (Vec<VehicleState>, SpawnReport) {
    spawn_traffic_around(geometry, &[], max_vehicles, rng)
}

/// Like [`spawn_traffic`], keeping clear of the already placed `reserved` vehicles.
pub fn spawn_traffic_around<R: Rng>(
    geometry: &RoadGeometry,
    reserved: &[VehicleState],
    max_vehicles: usize,
    rng: &mut R,
) -> (Vec<VehicleState>, SpawnReport) {
    const ATTEMPTS_PER_VEHICLE: usize = 50;
    let (v_lo, v_hi) = geometry.speed_limits;
    let mut placed: Vec<VehicleState> = Vec::with_capacity(max_vehicles);
    let extent = SPAWN_EXTENT.min(geometry.lane_length);

    'outer: for _ in 0..max_vehicles {
        for _ in 0..ATTEMPTS_PER_VEHICLE {
            let lane = rng.random_range(0..geometry.lane_count);
            let lane_extent = geometry.lane_end(lane).min(extent) - VehicleState::DEFAULT_LENGTH;
            if lane_extent <= VehicleState::DEFAULT_LENGTH {
                continue;
            }
            let position = rng.random_range(VehicleState::DEFAULT_LENGTH..lane_extent);
            let speed = if v_hi > v_lo { rng.random_range(v_lo..=v_hi) } else { v_lo };
            let candidate = VehicleState::new(position, lane, speed);
            let clear = reserved.iter().chain(placed.iter()).all(|o| !o.occupies(lane) || same_lane_gap(&candidate, o) >= SPAWN_GAP);
            if clear {
                placed.push(candidate);
                continue 'outer;
            }
        }
        break;
    }
    let report = SpawnReport { requested: max_vehicles, placed: placed.len() };
    (placed, report)
}

/// Bumper-to-bumper distance between two vehicles regardless of order.
pub(crate) fn same_lane_gap(a: &VehicleState, b: &VehicleState) -> f64 {
    (a.position - b.position).abs() - 0.5 * (a.length + b.length)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_vehicles() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (v, report) = spawn_traffic(&RoadGeometry::merge(), 0, &mut rng);
        assert!(v.is_empty());
        assert_eq!(report.placed, 0);
    }

    #[test]
    fn twenty_vehicles_are_pairwise_clear() {
        let g = RoadGeometry::merge();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (v, report) = spawn_traffic(&g, 20, &mut rng);
            assert_eq!(v.len(), 20);
            assert_eq!(report.placed, 20);
            for i in 0..v.len() {
                let (lo, hi) = g.speed_limits;
                assert!(v[i].speed >= lo && v[i].speed <= hi);
                assert!(g.lane_available(v[i].lane, v[i].position));
                for j in (i + 1)..v.len() {
                    if v[i].lane == v[j].lane {
                        let gap = (v[i].position - v[j].position).abs() - 5.0;
                        assert!(gap >= SPAWN_GAP, "seed {seed}: {i},{j} gap {gap}");
                    }
                }
            }
        }
    }

    #[test]
    fn same_seed_same_spawn() {
        let g = RoadGeometry::merge();
        let a = spawn_traffic(&g, 20, &mut ChaCha8Rng::seed_from_u64(9)).0;
        let b = spawn_traffic(&g, 20, &mut ChaCha8Rng::seed_from_u64(9)).0;
        assert_eq!(a, b);
    }

    #[test]
    fn short_road_places_fewer() {
        let mut g = RoadGeometry::merge();
        g.lane_length = 60.0;
        g.merge_point = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (v, report) = spawn_traffic(&g, 20, &mut rng);
        assert!(v.len() < 20);
        assert_eq!(report.placed, v.len());
    }
}
