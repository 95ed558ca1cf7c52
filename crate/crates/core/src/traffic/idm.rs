use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gap used in place of a leader on a free road.
pub const FREE_ROAD_GAP: f64 = 1e9;

/// Intelligent driver model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdmParams {
    pub desired_speed: f64,
    pub min_gap: f64,
    pub time_headway: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub exponent: f64,
    /// Hard lower bound on the returned acceleration is `-emergency_decel`.
    pub emergency_decel: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: 30.0,
            min_gap: 10.0,
            time_headway: 1.5,
            max_accel: 3.0,
            comfort_decel: 5.0,
            exponent: 4.0,
            emergency_decel: 9.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("desired_speed", self.desired_speed),
            ("min_gap", self.min_gap),
            ("time_headway", self.time_headway),
            ("max_accel", self.max_accel),
            ("comfort_decel", self.comfort_decel),
            ("exponent", self.exponent),
            ("emergency_decel", self.emergency_decel),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("IDM parameter {name} must be strictly positive, got {value}")));
            }
        }
        Ok(())
    }

    pub fn with_desired_speed(mut self, v0: f64) -> Self {
        self.desired_speed = v0;
        self
    }

    /// Desired dynamic gap s*.
    pub fn desired_gap(&self, speed: f64, approach_rate: f64) -> f64 {
        self.min_gap
            + speed * self.time_headway
            + speed * approach_rate / (2.0 * (self.max_accel * self.comfort_decel).sqrt())
    }
}

/// IDM acceleration of a follower at `ego_speed` with bumper gap `gap` to a
/// leader driving at `lead_speed`. Pass [`FREE_ROAD_GAP`] when there is no leader.
///
/// The result is clamped to `[-emergency_decel, max_accel]`.
pub fn idm_acceleration(ego_speed: f64, gap: f64, lead_speed: f64, params: &IdmParams) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(Error::Overlap { gap });
    }
    let free = 1.0 - (ego_speed.max(0.0) / params.desired_speed).powf(params.exponent);
    let s_star = params.desired_gap(ego_speed, ego_speed - lead_speed).max(0.0);
    let interaction = (s_star / gap).powi(2);
    let a = params.max_accel * (free - interaction);
    Ok(a.clamp(-params.emergency_decel, params.max_accel))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_flow_equilibrium() {
        let p = IdmParams::default();
        let a = idm_acceleration(p.desired_speed, FREE_ROAD_GAP, p.desired_speed, &p).unwrap();
        assert!(a.abs() < 1e-9, "{a}");
    }

    #[test]
    fn standstill_on_free_road_accelerates_at_max() {
        let p = IdmParams::default();
        let a = idm_acceleration(0.0, FREE_ROAD_GAP, 0.0, &p).unwrap();
        assert!((a - p.max_accel).abs() < 1e-12);
    }

    #[test]
    fn following_at_equilibrium_gap_brakes() {
        // v = v0 = 30, dv = 0, gap = s0 + v T = 55: free term is 0 and the
        // interaction term is exactly (55/55)^2 = 1, so a = -a_max = -3.
        let p = IdmParams::default();
        let gap = p.min_gap + 30.0 * p.time_headway;
        let a = idm_acceleration(30.0, gap, 30.0, &p).unwrap();
        assert!(a < 0.0);
        assert!((a - -3.0).abs() < 1e-12, "{a}");
    }

    #[test]
    fn approaching_term_uses_sqrt_ab() {
        // v=20, lead 10, gap 40: s* = 10 + 30 + 20*10/(2*sqrt(15)) = 40 + 25.819888974716115
        let p = IdmParams::default();
        let s_star = 40.0 + 200.0 / (2.0 * 15f64.sqrt());
        let expected = 3.0 * (1.0 - (20.0f64 / 30.0).powi(4) - (s_star / 40.0).powi(2));
        let a = idm_acceleration(20.0, 40.0, 10.0, &p).unwrap();
        assert!((a - expected.max(-9.0)).abs() < 1e-12);
    }

    #[test]
    fn emergency_clamp() {
        let p = IdmParams::default();
        let a = idm_acceleration(30.0, 0.5, 0.0, &p).unwrap();
        assert_eq!(a, -p.emergency_decel);
    }

    #[test]
    fn overlap_is_an_error() {
        let p = IdmParams::default();
        assert!(matches!(idm_acceleration(10.0, 0.0, 10.0, &p), Err(Error::Overlap { .. })));
        assert!(idm_acceleration(10.0, -1.0, 10.0, &p).is_err());
    }

    #[test]
    fn free_road_converges_monotonically() {
        let p = IdmParams::default();
        let dt = 1.0 / 15.0;
        let mut v = 5.0;
        let mut prev_gap = p.desired_speed - v;
        for _ in 0..3000 {
            let a = idm_acceleration(v, FREE_ROAD_GAP, v, &p).unwrap();
            assert!(a >= 0.0);
            v += a * dt;
            let gap = p.desired_speed - v;
            assert!(gap <= prev_gap && gap >= 0.0);
            prev_gap = gap;
        }
        assert!(prev_gap < 0.05);
        assert!(idm_acceleration(v, FREE_ROAD_GAP, v, &p).unwrap() < 0.02);
    }

    #[test]
    fn defaults_validate() {
        IdmParams::default().validate().unwrap();
        let mut bad = IdmParams::default();
        bad.time_headway = 0.0;
        assert!(bad.validate().is_err());
    }
}
