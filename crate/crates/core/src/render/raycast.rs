use serde::{Deserialize, Serialize};

use super::{Frame, TexturePalette, FLOOR_INTENSITY, SKY_INTENSITY};
use crate::world::{AgentPose, CellKind, GridMap};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view in degrees.
    pub fov_degrees: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { width: 32, height: 32, fov_degrees: 90.0 }
    }
}

/// First opaque cell along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub kind: CellKind,
    pub cell: (i64, i64),
    /// Distance perpendicular to the camera plane (no fisheye).
    pub perp_distance: f64,
    /// Horizontal texture coordinate on the hit face, in `[0, 1)`.
    pub u: f64,
}

/// DDA grid traversal from `origin` along `dir` until an opaque cell.
pub fn cast_ray(map: &GridMap, origin: (f64, f64), dir: (f64, f64)) -> RayHit {
    let (px, py) = origin;
    let (rx, ry) = dir;
    let mut cx = px.floor() as i64;
    let mut cy = py.floor() as i64;
    let delta_x = if rx == 0.0 { f64::INFINITY } else { (1.0 / rx).abs() };
    let delta_y = if ry == 0.0 { f64::INFINITY } else { (1.0 / ry).abs() };
    let (step_x, mut side_x) = if rx < 0.0 { (-1, (px - cx as f64) * delta_x) } else { (1, (cx as f64 + 1.0 - px) * delta_x) };
    let (step_y, mut side_y) = if ry < 0.0 { (-1, (py - cy as f64) * delta_y) } else { (1, (cy as f64 + 1.0 - py) * delta_y) };

    // Cells outside the grid read as perimeter wall, so this terminates within
    // width + height steps.
    let limit = map.width() + map.height() + 4;
    for _ in 0..limit {
        let vertical_face;
        if side_x < side_y {
            side_x += delta_x;
            cx += step_x;
            vertical_face = true;
        } else {
            side_y += delta_y;
            cy += step_y;
            vertical_face = false;
        }
        let kind = map.cell_at(cx, cy);
        if kind.is_opaque() {
            let perp = if vertical_face { side_x - delta_x } else { side_y - delta_y };
            let along = if vertical_face { py + perp * ry } else { px + perp * rx };
            let mut u = along - along.floor();
            // Keep texture orientation consistent regardless of view side.
            if (vertical_face && rx < 0.0) || (!vertical_face && ry > 0.0) {
                u = 1.0 - u;
            }
            return RayHit { kind, cell: (cx, cy), perp_distance: perp.max(1e-6), u: u.clamp(0.0, 1.0 - 1e-12) };
        }
    }
    unreachable!("ray left a bounded grid without hitting an opaque cell")
}

/// Number of screen rows covered by a wall slice at `perp_distance`.
pub fn slice_height(perp_distance: f64, screen_height: usize) -> usize {
    let (top, line) = slice_extent(perp_distance, screen_height);
    (0..screen_height)
        .filter(|&r| {
            let y = r as f64 + 0.5;
            y >= top && y < top + line
        })
        .count()
}

fn slice_extent(perp_distance: f64, screen_height: usize) -> (f64, f64) {
    let h = screen_height as f64;
    let line = h / perp_distance.max(1e-6);
    (h / 2.0 - line / 2.0, line)
}

/// Renders the agent's view. Pure in `(map, pose, palette, cfg)`.
pub fn render<T: Scalar>(map: &GridMap, pose: &AgentPose, palette: &TexturePalette, cfg: &RenderConfig) -> Frame<T> {
    let mut frame = Frame::filled(cfg.width, cfg.height, T::zero());
    let origin = (pose.x as f64 + 0.5, pose.y as f64 + 0.5);
    let (dx, dy) = pose.heading.delta();
    let dir = (dx as f64, dy as f64);
    let half = (cfg.fov_degrees.to_radians() / 2.0).tan();
    // camera plane points to the agent's right
    let plane = (-dir.1 * half, dir.0 * half);
    let sky = T::of(SKY_INTENSITY);
    let floor = T::of(FLOOR_INTENSITY);

    for col in 0..cfg.width {
        let cam = 2.0 * (col as f64 + 0.5) / cfg.width as f64 - 1.0;
        let ray = (dir.0 + plane.0 * cam, dir.1 + plane.1 * cam);
        let hit = cast_ray(map, origin, ray);
        let (top, line) = slice_extent(hit.perp_distance, cfg.height);
        for row in 0..cfg.height {
            let y = row as f64 + 0.5;
            let v = if y < top {
                sky
            } else if y >= top + line {
                floor
            } else {
                let tv = ((y - top) / line).clamp(0.0, 1.0 - 1e-12);
                T::of(palette.texture(hit.kind, hit.u, tv, hit.perp_distance))
            };
            frame.set(col, row, v);
        }
    }
    frame
}
