use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::path::bfs_distances;
use super::{AgentPose, Cardinal};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MapError {
    #[error("line {line}, column {column}: {reason}")]
    Syntax { line: usize, column: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> MapError {
    MapError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Floor,
    PerimeterWall,
    Hedge,
    BuildingRed,
    BuildingGreen,
    BuildingBlue,
    GoalNpc,
}

impl CellKind {
    /// Floor and the goal NPC can be entered; everything else blocks.
    pub fn is_traversable(self) -> bool {
        matches!(self, CellKind::Floor | CellKind::GoalNpc)
    }

    /// Whether a view ray stops at this cell.
    pub fn is_opaque(self) -> bool {
        self != CellKind::Floor
    }

    fn from_char(c: char) -> Option<(CellKind, bool)> {
        Some(match c {
            '.' => (CellKind::Floor, false),
            'S' => (CellKind::Floor, true),
            '#' => (CellKind::PerimeterWall, false),
            'H' => (CellKind::Hedge, false),
            'R' => (CellKind::BuildingRed, false),
            'G' => (CellKind::BuildingGreen, false),
            'B' => (CellKind::BuildingBlue, false),
            'N' => (CellKind::GoalNpc, false),
            _ => return None,
        })
    }

    fn to_char(self) -> char {
        match self {
            CellKind::Floor => '.',
            CellKind::PerimeterWall => '#',
            CellKind::Hedge => 'H',
            CellKind::BuildingRed => 'R',
            CellKind::BuildingGreen => 'G',
            CellKind::BuildingBlue => 'B',
            CellKind::GoalNpc => 'N',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

/// A milestone threshold: fires when the agent's coordinate along `axis`
/// first moves past `threshold` in the given direction.
///
/// Maps loaded from text always use `Axis::X, increasing`. Rotation carries
/// the line onto whichever axis and direction the corridor now runs along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MilestoneLine {
    pub axis: Axis,
    pub threshold: usize,
    pub increasing: bool,
}

impl MilestoneLine {
    pub fn x(threshold: usize) -> Self {
        Self { axis: Axis::X, threshold, increasing: true }
    }

    /// True when `(x, y)` lies on or beyond the line.
    pub fn is_past(&self, x: usize, y: usize) -> bool {
        let c = match self.axis {
            Axis::X => x,
            Axis::Y => y,
        };
        if self.increasing {
            c >= self.threshold
        } else {
            c <= self.threshold
        }
    }

    fn on_line(&self, x: usize, y: usize) -> bool {
        match self.axis {
            Axis::X => x == self.threshold,
            Axis::Y => y == self.threshold,
        }
    }

    /// Image of this line under a clockwise quarter turn of a map with the
    /// given (pre-rotation) height.
    fn rotated_cw(self, height: usize) -> Self {
        // (x, y) -> (height - 1 - y, x)
        match self.axis {
            Axis::X => Self { axis: Axis::Y, ..self },
            Axis::Y => Self {
                axis: Axis::X,
                threshold: height - 1 - self.threshold,
                increasing: !self.increasing,
            },
        }
    }
}

/// Immutable maze layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridMap {
    width: usize,
    height: usize,
    cells: Vec<CellKind>,
    spawn: AgentPose,
    goal: (usize, usize),
    entry: MilestoneLine,
    exit: MilestoneLine,
}

impl GridMap {
    /// Builds and validates a map from its parts.
    pub fn new(
        width: usize,
        height: usize,
        cells: Vec<CellKind>,
        spawn: AgentPose,
        entry: MilestoneLine,
        exit: MilestoneLine,
    ) -> Result<Self, MapError> {
        if width < 4 || height < 4 {
            return Err(invalid(format!("map must be at least 4x4, got {width}x{height}")));
        }
        if cells.len() != width * height {
            return Err(invalid("cell count does not match dimensions"));
        }
        let goals: Vec<usize> = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == CellKind::GoalNpc)
            .map(|(i, _)| i)
            .collect();
        if goals.len() != 1 {
            return Err(invalid(format!("expected exactly one goal cell, found {}", goals.len())));
        }
        let goal = (goals[0] % width, goals[0] / width);
        let map = Self { width, height, cells, spawn, goal, entry, exit };
        map.validate()?;
        Ok(map)
    }

    fn validate(&self) -> Result<(), MapError> {
        let (sx, sy) = self.spawn.cell();
        if sx >= self.width || sy >= self.height || self.cell(sx, sy) != CellKind::Floor {
            return Err(invalid("spawn is not on a floor cell"));
        }
        if self.entry.axis != self.exit.axis || self.entry.increasing != self.exit.increasing {
            return Err(invalid("milestones must share axis and direction"));
        }
        let extent = match self.entry.axis {
            Axis::X => self.width,
            Axis::Y => self.height,
        };
        let ordered = if self.entry.increasing {
            self.entry.threshold < self.exit.threshold
        } else {
            self.entry.threshold > self.exit.threshold
        };
        if !ordered || self.entry.threshold >= extent || self.exit.threshold >= extent {
            return Err(invalid("milestones must satisfy 0 <= entry < exit < extent"));
        }
        let (gx, gy) = self.goal;
        if self.entry.on_line(gx, gy) || self.exit.on_line(gx, gy) {
            return Err(invalid("goal lies on a milestone line"));
        }
        let dist = bfs_distances(self, self.spawn.cell());
        if dist[self.index(gx, gy)].is_none() {
            return Err(invalid("goal unreachable"));
        }
        Ok(())
    }

    /// Parses the ASCII map format.
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let mut header: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut lines = text.lines().enumerate().peekable();
        while let Some((no, raw)) = lines.peek().copied() {
            let line = raw.trim();
            if line.is_empty() {
                lines.next();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else { break };
            header.insert(k.trim().to_string(), (no + 1, v.trim().to_string()));
            lines.next();
        }

        let num = |key: &str| -> Result<Option<usize>, MapError> {
            match header.get(key) {
                None => Ok(None),
                Some((line, v)) => v.parse::<usize>().map(Some).map_err(|_| MapError::Syntax {
                    line: *line,
                    column: key.len() + 2,
                    reason: format!("`{key}` must be a non-negative integer, got `{v}`"),
                }),
            }
        };
        let required = |key: &str| -> Result<usize, MapError> {
            num(key)?.ok_or_else(|| MapError::Syntax {
                line: 1,
                column: 1,
                reason: format!("missing header `{key}=`"),
            })
        };
        let width = required("width")?;
        let height = required("height")?;

        let (axis, increasing, entry_t, exit_t) = if header.contains_key("milestone_entry") {
            let axis = match header.get("milestone_axis").map(|(_, v)| v.as_str()) {
                None | Some("x") => Axis::X,
                Some("y") => Axis::Y,
                Some(other) => return Err(invalid(format!("unknown milestone_axis `{other}`"))),
            };
            let increasing = match header.get("milestone_direction").map(|(_, v)| v.as_str()) {
                None | Some("increasing") => true,
                Some("decreasing") => false,
                Some(other) => return Err(invalid(format!("unknown milestone_direction `{other}`"))),
            };
            (axis, increasing, required("milestone_entry")?, required("milestone_exit")?)
        } else {
            (Axis::X, true, required("milestone_entry_x")?, required("milestone_exit_x")?)
        };
        let heading = match header.get("spawn_heading") {
            None => Cardinal::East,
            Some((line, v)) => Cardinal::parse(v).ok_or_else(|| MapError::Syntax {
                line: *line,
                column: "spawn_heading=".len() + 1,
                reason: format!("unknown heading `{v}`"),
            })?,
        };

        let mut cells = Vec::with_capacity(width * height);
        let mut spawn = None;
        let mut last_line = header.values().map(|(l, _)| *l).max().unwrap_or(0);
        let mut row = 0;
        for (no, raw) in lines {
            let line_no = no + 1;
            last_line = line_no;
            let line = raw.trim_end();
            if line.is_empty() {
                if row == height {
                    continue;
                }
                return Err(MapError::Syntax { line: line_no, column: 1, reason: "blank line inside grid".into() });
            }
            if row == height {
                return Err(MapError::Syntax {
                    line: line_no,
                    column: 1,
                    reason: format!("more than {height} grid rows"),
                });
            }
            let chars: Vec<char> = line.chars().collect();
            if chars.len() != width {
                return Err(MapError::Syntax {
                    line: line_no,
                    column: chars.len().min(width) + 1,
                    reason: format!("row has {} cells, expected {width}", chars.len()),
                });
            }
            for (col, c) in chars.into_iter().enumerate() {
                let (kind, is_spawn) = CellKind::from_char(c).ok_or_else(|| MapError::Syntax {
                    line: line_no,
                    column: col + 1,
                    reason: format!("unknown cell character `{c}`"),
                })?;
                if is_spawn {
                    if spawn.is_some() {
                        return Err(MapError::Syntax {
                            line: line_no,
                            column: col + 1,
                            reason: "second spawn marker".into(),
                        });
                    }
                    spawn = Some(AgentPose::new(col, row, heading));
                }
                cells.push(kind);
            }
            row += 1;
        }
        if row != height {
            return Err(MapError::Syntax {
                line: last_line + 1,
                column: 1,
                reason: format!("expected {height} grid rows, found {row}"),
            });
        }
        let spawn = spawn.ok_or_else(|| invalid("map has no spawn cell `S`"))?;
        let entry = MilestoneLine { axis, threshold: entry_t, increasing };
        let exit = MilestoneLine { axis, threshold: exit_t, increasing };
        Self::new(width, height, cells, spawn, entry, exit)
    }

    /// Serializes back to the text format. `parse(to_text())` is the identity.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "width={}", self.width);
        let _ = writeln!(s, "height={}", self.height);
        if self.entry.axis == Axis::X && self.entry.increasing {
            let _ = writeln!(s, "milestone_entry_x={}", self.entry.threshold);
            let _ = writeln!(s, "milestone_exit_x={}", self.exit.threshold);
        } else {
            let axis = if self.entry.axis == Axis::X { "x" } else { "y" };
            let dir = if self.entry.increasing { "increasing" } else { "decreasing" };
            let _ = writeln!(s, "milestone_axis={axis}");
            let _ = writeln!(s, "milestone_direction={dir}");
            let _ = writeln!(s, "milestone_entry={}", self.entry.threshold);
            let _ = writeln!(s, "milestone_exit={}", self.exit.threshold);
        }
        if self.spawn.heading != Cardinal::East {
            let _ = writeln!(s, "spawn_heading={}", self.spawn.heading.name());
        }
        for y in 0..self.height {
            for x in 0..self.width {
                if (x, y) == self.spawn.cell() {
                    s.push('S');
                } else {
                    s.push(self.cell(x, y).to_char());
                }
            }
            s.push('\n');
        }
        s
    }

    /// Hex SHA-256 of the canonical text form.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_text().as_bytes());
        hash.iter().fold(String::with_capacity(64), |mut acc, b| {
            let _ = write!(acc, "{b:02x}");
            acc
        })
    }

    /// Clockwise quarter turn: cell `(x, y)` moves to `(height - 1 - y, x)`.
    pub fn rotate_90(&self) -> GridMap {
        let (w, h) = (self.width, self.height);
        let (nw, nh) = (h, w);
        let mut cells = vec![CellKind::Floor; nw * nh];
        for y in 0..h {
            for x in 0..w {
                let (nx, ny) = (h - 1 - y, x);
                cells[ny * nw + nx] = self.cell(x, y);
            }
        }
        let (sx, sy) = self.spawn.cell();
        let spawn = AgentPose::new(h - 1 - sy, sx, self.spawn.heading.clockwise());
        let (gx, gy) = self.goal;
        GridMap {
            width: nw,
            height: nh,
            cells,
            spawn,
            goal: (h - 1 - gy, gx),
            entry: self.entry.rotated_cw(h),
            exit: self.exit.rotated_cw(h),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spawn(&self) -> AgentPose {
        self.spawn
    }

    pub fn goal(&self) -> (usize, usize) {
        self.goal
    }

    pub fn milestone_entry(&self) -> MilestoneLine {
        self.entry
    }

    pub fn milestone_exit(&self) -> MilestoneLine {
        self.exit
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn cell(&self, x: usize, y: usize) -> CellKind {
        self.cells[self.index(x, y)]
    }

    /// Cell at signed coordinates; outside the grid reads as perimeter wall.
    pub fn cell_at(&self, x: i64, y: i64) -> CellKind {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            CellKind::PerimeterWall
        } else {
            self.cell(x as usize, y as usize)
        }
    }

    pub fn is_traversable(&self, x: i64, y: i64) -> bool {
        self.cell_at(x, y).is_traversable()
    }

    /// Neighbor of `(x, y)` in direction `dir`, if it is inside the grid.
    pub fn neighbor(&self, x: usize, y: usize, dir: Cardinal) -> Option<(usize, usize)> {
        let (dx, dy) = dir.delta();
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
            None
        } else {
            Some((nx as usize, ny as usize))
        }
    }

    /// All traversable cells in row-major order.
    pub fn traversable_cells(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .filter(|&(x, y)| self.cell(x, y).is_traversable())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "width=4\nheight=4\nmilestone_entry_x=2\nmilestone_exit_x=3\nSN..\n....\n....\n....\n";

    #[test]
    fn minimal_all_floor_map_is_valid() {
        let m = GridMap::parse(SMALL).unwrap();
        assert_eq!((m.width(), m.height()), (4, 4));
        assert_eq!(m.spawn(), AgentPose::new(0, 0, Cardinal::East));
        assert_eq!(m.goal(), (1, 0));
        assert_eq!(m.traversable_cells().len(), 16);
    }

    #[test]
    fn walled_off_goal_is_rejected() {
        let text = "width=6\nheight=6\nmilestone_entry_x=1\nmilestone_exit_x=2\n\
                    ######\n#S..##\n#...#N\n#...##\n#....#\n######\n";
        // N at (5,2) is enclosed by walls on every side.
        assert_eq!(GridMap::parse(text), Err(MapError::Invalid("goal unreachable".into())));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let bad = "width=4\nheight=4\nmilestone_entry_x=1\nmilestone_exit_x=2\nSN..\n..x.\n....\n....\n";
        match GridMap::parse(bad) {
            Err(MapError::Syntax { line, column, .. }) => assert_eq!((line, column), (6, 3)),
            other => panic!("unexpected {other:?}"),
        }
        let short = "width=4\nheight=4\nmilestone_entry_x=1\nmilestone_exit_x=2\nSN..\n...\n....\n....\n";
        assert!(matches!(GridMap::parse(short), Err(MapError::Syntax { line: 6, .. })));
        let missing = "width=4\nheight=4\nmilestone_exit_x=2\nSN..\n....\n....\n....\n";
        assert!(matches!(GridMap::parse(missing), Err(MapError::Syntax { .. })));
    }

    #[test]
    fn invariant_violations_are_named() {
        let two_goals = SMALL.replace("SN..", "SNN.");
        assert!(matches!(GridMap::parse(&two_goals), Err(MapError::Invalid(m)) if m.contains("exactly one goal")));
        let order = SMALL.replace("entry_x=2", "entry_x=3");
        assert!(matches!(GridMap::parse(&order), Err(MapError::Invalid(m)) if m.contains("entry < exit")));
        let tiny = "width=3\nheight=3\nmilestone_entry_x=0\nmilestone_exit_x=2\nSN.\n...\n...\n";
        assert!(matches!(GridMap::parse(tiny), Err(MapError::Invalid(m)) if m.contains("4x4")));
        let on_line = SMALL.replace("SN..", "S.N.");
        assert!(matches!(GridMap::parse(&on_line), Err(MapError::Invalid(m)) if m.contains("milestone line")));
    }

    #[test]
    fn text_round_trip_including_rotations() {
        let m = GridMap::parse(SMALL).unwrap();
        let mut r = m.clone();
        for _ in 0..4 {
            assert_eq!(GridMap::parse(&r.to_text()).unwrap(), r);
            r = r.rotate_90();
        }
        assert_eq!(r, m);
    }

    #[test]
    fn rotation_moves_origin_to_top_right() {
        let m = GridMap::parse(SMALL).unwrap();
        let r = m.rotate_90();
        // spawn (0,0) -> (height-1, 0)
        assert_eq!(r.spawn().cell(), (m.height() - 1, 0));
        assert_eq!(r.spawn().heading, Cardinal::South);
        assert_eq!(r.milestone_entry().axis, Axis::Y);
    }
}
