use super::{render, Frame, RenderConfig, TexturePalette};
use crate::world::{AgentPose, Cardinal, GridMap};
use crate::Scalar;

/// Two views closer than this mean absolute difference count as aliased.
pub const ALIASING_THRESHOLD: f64 = 0.02;

/// Mean absolute per-pixel difference.
pub fn frame_distance<T: Scalar>(a: &Frame<T>, b: &Frame<T>) -> f64 {
    assert_eq!((a.width(), a.height()), (b.width(), b.height()), "frame sizes differ");
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x.to_f64_lossy() - y.to_f64_lossy()).abs())
        .sum();
    sum / a.pixels().len() as f64
}

/// Fraction of ordered pairs of distinct `(cell, heading)` states whose
/// rendered views are within [`ALIASING_THRESHOLD`] of each other.
pub fn aliasing_index(map: &GridMap, palette: &TexturePalette, cfg: &RenderConfig) -> f64 {
    let frames: Vec<Frame<f32>> = map
        .traversable_cells()
        .into_iter()
        .flat_map(|(x, y)| Cardinal::ALL.into_iter().map(move |h| AgentPose::new(x, y, h)))
        .map(|pose| render(map, &pose, palette, cfg))
        .collect();
    let n = frames.len();
    if n < 2 {
        return 0.0;
    }
    let mut close = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            if frame_distance(&frames[i], &frames[j]) < ALIASING_THRESHOLD {
                close += 1;
            }
        }
    }
    // the relation is symmetric: each unordered pair stands for two ordered ones
    (2 * close) as f64 / (n * (n - 1)) as f64
}
