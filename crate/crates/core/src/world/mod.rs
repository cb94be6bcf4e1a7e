//! Deterministic grid-maze world: map model, agent kinematics, reward signal
//! and the episode lifecycle.

mod env;
mod map;
mod path;

pub use env::{accounted_score, EnvError, EpisodeConfig, MazeEnv, Milestone, StepOutcome};
pub use map::{Axis, CellKind, GridMap, MapError, MilestoneLine};
pub use path::{bfs_distances, shortest_path_length, PathError};

use serde::{Deserialize, Serialize};

/// Per-action cost.
pub const STEP_REWARD: f64 = -0.5;
/// Bonus for first reaching each of the two corridor milestones.
pub const MILESTONE_REWARD: f64 = 1500.0;
/// Bonus for reaching the goal NPC.
pub const GOAL_REWARD: f64 = 15000.0;

/// Compass direction. Used both as agent heading and as advice direction.
///
/// Indices run clockwise: north 0, east 1, south 2, west 3. North is `-y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cardinal {
    North,
    East,
    South,
    West,
}

impl Cardinal {
    pub const ALL: [Cardinal; 4] = [Cardinal::North, Cardinal::East, Cardinal::South, Cardinal::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Cardinal {
        Self::ALL[i % 4]
    }

    /// Unit cell offset `(dx, dy)`.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Cardinal::North => (0, -1),
            Cardinal::East => (1, 0),
            Cardinal::South => (0, 1),
            Cardinal::West => (-1, 0),
        }
    }

    pub fn clockwise(self) -> Cardinal {
        Self::from_index(self.index() + 1)
    }

    pub fn counter_clockwise(self) -> Cardinal {
        Self::from_index(self.index() + 3)
    }

    pub fn opposite(self) -> Cardinal {
        Self::from_index(self.index() + 2)
    }

    pub fn name(self) -> &'static str {
        match self {
            Cardinal::North => "north",
            Cardinal::East => "east",
            Cardinal::South => "south",
            Cardinal::West => "west",
        }
    }

    pub fn parse(s: &str) -> Option<Cardinal> {
        match s {
            "north" => Some(Cardinal::North),
            "east" => Some(Cardinal::East),
            "south" => Some(Cardinal::South),
            "west" => Some(Cardinal::West),
            _ => None,
        }
    }
}

/// Discrete agent action.
///
/// Index mapping is fixed: forward 0, turn_left 1, turn_right 2, turn_around 3.
/// Network output `i` is the value of `Action::from_index(i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Forward,
    TurnLeft,
    TurnRight,
    TurnAround,
}

impl Action {
    pub const COUNT: usize = 4;
    pub const ALL: [Action; 4] = [Action::Forward, Action::TurnLeft, Action::TurnRight, Action::TurnAround];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Self::ALL[i]
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Forward => "forward",
            Action::TurnLeft => "turn_left",
            Action::TurnRight => "turn_right",
            Action::TurnAround => "turn_around",
        }
    }

    /// Heading after executing this action. Forward keeps the heading.
    pub fn apply_to_heading(self, heading: Cardinal) -> Cardinal {
        match self {
            Action::Forward => heading,
            Action::TurnLeft => heading.counter_clockwise(),
            Action::TurnRight => heading.clockwise(),
            Action::TurnAround => heading.opposite(),
        }
    }
}

/// Agent position and heading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentPose {
    pub x: usize,
    pub y: usize,
    pub heading: Cardinal,
}

impl AgentPose {
    pub fn new(x: usize, y: usize, heading: Cardinal) -> Self {
        Self { x, y, heading }
    }

    pub fn cell(&self) -> (usize, usize) {
        (self.x, self.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn turns_compose() {
        for h in Cardinal::ALL {
            assert_eq!(Action::TurnAround.apply_to_heading(Action::TurnAround.apply_to_heading(h)), h);
            assert_eq!(Action::TurnLeft.apply_to_heading(Action::TurnRight.apply_to_heading(h)), h);
            assert_eq!(Action::Forward.apply_to_heading(h), h);
        }
        assert_eq!(Action::TurnRight.apply_to_heading(Cardinal::North), Cardinal::East);
        assert_eq!(Action::TurnLeft.apply_to_heading(Cardinal::North), Cardinal::West);
    }

    #[test]
    fn action_indices_are_stable() {
        for (i, a) in Action::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(Action::from_index(i), *a);
        }
        assert_eq!(Action::Forward.index(), 0);
        assert_eq!(Action::TurnAround.index(), 3);
    }

    #[test]
    fn cardinal_names_round_trip() {
        for c in Cardinal::ALL {
            assert_eq!(Cardinal::parse(c.name()), Some(c));
        }
        assert_eq!(Cardinal::parse("up"), None);
    }
}
