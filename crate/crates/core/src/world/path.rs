use std::collections::VecDeque;

use thiserror::Error;

use super::{Cardinal, GridMap};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum PathError {
    #[error("cell ({0}, {1}) is not traversable")]
    NotTraversable(usize, usize),
    #[error("no path")]
    NoPath,
}

/// 4-connected BFS distances from `start` over traversable cells, indexed by
/// [`GridMap::index`]. Unreached cells are `None`.
pub fn bfs_distances(map: &GridMap, start: (usize, usize)) -> Vec<Option<u32>> {
    let mut dist = vec![None; map.width() * map.height()];
    if !map.cell(start.0, start.1).is_traversable() {
        return dist;
    }
    let mut queue = VecDeque::new();
    dist[map.index(start.0, start.1)] = Some(0);
    queue.push_back(start);
    while let Some((x, y)) = queue.pop_front() {
        let d = dist[map.index(x, y)].expect("queued cells have a distance");
        for dir in Cardinal::ALL {
            if let Some((nx, ny)) = map.neighbor(x, y, dir) {
                let i = map.index(nx, ny);
                if dist[i].is_none() && map.cell(nx, ny).is_traversable() {
                    dist[i] = Some(d + 1);
                    queue.push_back((nx, ny));
                }
            }
        }
    }
    dist
}

/// Number of forward moves on a shortest 4-connected path.
pub fn shortest_path_length(map: &GridMap, from: (usize, usize), to: (usize, usize)) -> Result<usize, PathError> {
    for &(x, y) in &[from, to] {
        if x >= map.width() || y >= map.height() || !map.cell(x, y).is_traversable() {
            return Err(PathError::NotTraversable(x, y));
        }
    }
    bfs_distances(map, from)[map.index(to.0, to.1)]
        .map(|d| d as usize)
        .ok_or(PathError::NoPath)
}
