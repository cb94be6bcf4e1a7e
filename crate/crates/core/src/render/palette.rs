use serde::{Deserialize, Serialize};

use crate::world::CellKind;

/// Constant ceiling band.
pub const SKY_INTENSITY: f64 = 0.92;
/// Constant floor band.
pub const FLOOR_INTENSITY: f64 = 0.18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AliasingMode {
    /// Every block shares one texture; only the goal NPC stands out.
    #[default]
    Aliased,
    /// Buildings and the goal get their own intensity bands.
    Landmarked,
}

impl AliasingMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "aliased" => Some(Self::Aliased),
            "landmarked" => Some(Self::Landmarked),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Aliased => "aliased",
            Self::Landmarked => "landmarked",
        }
    }
}

const BLOCK: (f64, f64) = (0.42, 0.62);
const NPC: (f64, f64) = (0.02, 0.12);
const RED: (f64, f64) = (0.78, 0.86);
const GREEN: (f64, f64) = (0.26, 0.36);
const BLUE: (f64, f64) = (0.66, 0.74);

/// Per-cell-kind wall textures.
///
/// A texture value always lies inside the kind's intensity band: the brick
/// pattern and the distance attenuation only move it within `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TexturePalette {
    pub mode: AliasingMode,
}

impl TexturePalette {
    pub fn new(mode: AliasingMode) -> Self {
        Self { mode }
    }

    pub fn aliased() -> Self {
        Self::new(AliasingMode::Aliased)
    }

    pub fn landmarked() -> Self {
        Self::new(AliasingMode::Landmarked)
    }

    /// Intensity band `(lo, hi)` for an opaque cell kind.
    pub fn band(&self, kind: CellKind) -> (f64, f64) {
        match (self.mode, kind) {
            (_, CellKind::GoalNpc) => NPC,
            (AliasingMode::Landmarked, CellKind::BuildingRed) => RED,
            (AliasingMode::Landmarked, CellKind::BuildingGreen) => GREEN,
            (AliasingMode::Landmarked, CellKind::BuildingBlue) => BLUE,
            _ => BLOCK,
        }
    }

    /// Intensity of a wall at surface coordinates `u, v` in `[0, 1)` seen at
    /// perpendicular distance `dist`.
    pub fn texture(&self, kind: CellKind, u: f64, v: f64, dist: f64) -> f64 {
        let (lo, hi) = self.band(kind);
        let pattern = match kind {
            // NPC: plain body with a lighter face stripe.
            CellKind::GoalNpc => {
                if (0.3..0.7).contains(&u) && v < 0.35 {
                    1.0
                } else {
                    0.6
                }
            }
            _ => brick(u, v),
        };
        let shade = 1.0 / (1.0 + 0.35 * dist.max(0.0));
        lo + (hi - lo) * pattern * shade
    }
}

/// Two courses of bricks per block with a mortar line, offset every other row.
fn brick(u: f64, v: f64) -> f64 {
    let row = (v * 4.0).floor() as i64;
    let fv = v * 4.0 - row as f64;
    let offset = if row % 2 == 0 { 0.0 } else { 0.25 };
    let fu = (u * 2.0 + offset).fract();
    if fv < 0.12 || fu < 0.06 {
        0.55
    } else {
        1.0
    }
}
