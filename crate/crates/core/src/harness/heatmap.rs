use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::world::{Axis, GridMap};

/// Per-cell count of environment steps started in that cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitHeatmap {
    width: usize,
    height: usize,
    counts: Vec<u64>,
}

impl VisitHeatmap {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, counts: vec![0; width * height] }
    }

    pub fn from_counts(width: usize, height: usize, counts: Vec<u64>) -> Result<Self, HarnessError> {
        if counts.len() != width * height {
            return Err(HarnessError::Config(format!(
                "{} counts do not fill a {width}x{height} grid",
                counts.len()
            )));
        }
        Ok(Self { width, height, counts })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, x: usize, y: usize) -> u64 {
        self.counts[y * self.width + x]
    }

    pub fn visit(&mut self, x: usize, y: usize) {
        self.counts[y * self.width + x] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, other: &VisitHeatmap) -> Result<(), HarnessError> {
        self.check_dims(other)?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    fn check_dims(&self, other: &VisitHeatmap) -> Result<(), HarnessError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(HarnessError::DimensionMismatch {
                left: (self.width, self.height),
                right: (other.width, other.height),
            });
        }
        Ok(())
    }

    /// Fraction of all visits that fall on the given cells.
    pub fn mass_fraction(&self, cells: &[(usize, usize)]) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        cells.iter().map(|&(x, y)| self.get(x, y)).sum::<u64>() as f64 / total as f64
    }

    /// Add-one smoothed distribution.
    pub fn smoothed(&self) -> Vec<f64> {
        let z = (self.total() + self.counts.len() as u64) as f64;
        self.counts.iter().map(|&c| (c + 1) as f64 / z).collect()
    }

    /// One CSV row per grid row.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.counts.chunks(self.width) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self, HarnessError> {
        let mut counts = Vec::new();
        let mut width = None;
        let mut height = 0;
        for (no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<u64> = line
                .split(',')
                .map(|c| c.trim().parse::<u64>())
                .collect::<Result<_, _>>()
                .map_err(|e| HarnessError::Parse { line: no + 1, reason: e.to_string() })?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(HarnessError::Parse { line: no + 1, reason: format!("expected {w} columns") })
                }
                _ => {}
            }
            counts.extend(row);
            height += 1;
        }
        Self::from_counts(width.unwrap_or(0), height, counts)
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        super::write_file(path, self.to_csv().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        Self::parse_csv(&super::read_file(path)?)
    }
}

/// `KL(P || Q)` in nats between add-one smoothed visit distributions.
pub fn kl_divergence(p: &VisitHeatmap, q: &VisitHeatmap) -> Result<f64, HarnessError> {
    p.check_dims(q)?;
    let (ps, qs) = (p.smoothed(), q.smoothed());
    Ok(ps.iter().zip(&qs).map(|(&a, &b)| a * (a / b).ln()).sum::<f64>().max(0.0))
}

/// Traversable cells in the second half of the corridor between the two
/// milestone lines, i.e. between their midpoint and the exit line.
pub fn corridor_second_half(map: &GridMap) -> Vec<(usize, usize)> {
    let (entry, exit) = (map.milestone_entry(), map.milestone_exit());
    let (a, b) = (entry.threshold as f64, exit.threshold as f64);
    let mid = 0.5 * (a + b);
    let (lo, hi) = if entry.increasing { (mid, b) } else { (b, mid) };
    map.traversable_cells()
        .into_iter()
        .filter(|&(x, y)| {
            let c = match entry.axis {
                Axis::X => x,
                Axis::Y => y,
            } as f64;
            if entry.increasing {
                c >= lo && c < hi
            } else {
                c > lo && c <= hi
            }
        })
        .collect()
}
