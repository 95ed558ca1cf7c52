//! Discrete action sets of the driver and the vehicle HMI.

use serde::{Deserialize, Serialize};

/// Semantic driving command issued by the human.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanAction {
    SpeedUp,
    SlowDown,
    KeepSpeed,
    MoveLeft,
    MoveRight,
}

impl HumanAction {
    pub const ALL: [HumanAction; 5] = [
        HumanAction::SpeedUp,
        HumanAction::SlowDown,
        HumanAction::KeepSpeed,
        HumanAction::MoveLeft,
        HumanAction::MoveRight,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        match self {
            HumanAction::SpeedUp => 0,
            HumanAction::SlowDown => 1,
            HumanAction::KeepSpeed => 2,
            HumanAction::MoveLeft => 3,
            HumanAction::MoveRight => 4,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn is_lane_change(self) -> bool {
        matches!(self, HumanAction::MoveLeft | HumanAction::MoveRight)
    }

    pub fn name(self) -> &'static str {
        match self {
            HumanAction::SpeedUp => "speed_up",
            HumanAction::SlowDown => "slow_down",
            HumanAction::KeepSpeed => "keep_speed",
            HumanAction::MoveLeft => "move_left",
            HumanAction::MoveRight => "move_right",
        }
    }

    /// One-hot encoding, all zeros for `None`.
    pub fn one_hot(action: Option<HumanAction>) -> [f64; 5] {
        let mut v = [0.0; 5];
        if let Some(a) = action {
            v[a.index()] = 1.0;
        }
        v
    }
}

/// Intervention issued by the vehicle AI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AiAction {
    Alert,
    NoAlert,
}

impl AiAction {
    pub const ALL: [AiAction; 2] = [AiAction::Alert, AiAction::NoAlert];
    pub const COUNT: usize = 2;

    pub fn index(self) -> usize {
        match self {
            AiAction::Alert => 0,
            AiAction::NoAlert => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        for a in HumanAction::ALL {
            assert_eq!(HumanAction::from_index(a.index()), Some(a));
        }
        for a in AiAction::ALL {
            assert_eq!(AiAction::from_index(a.index()), Some(a));
        }
        assert_eq!(HumanAction::from_index(5), None);
    }

    #[test]
    fn one_hot_none_is_zero() {
        assert_eq!(HumanAction::one_hot(None), [0.0; 5]);
        assert_eq!(HumanAction::one_hot(Some(HumanAction::MoveLeft))[3], 1.0);
    }
}
