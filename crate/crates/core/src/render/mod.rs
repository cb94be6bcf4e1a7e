//! First-person grayscale observations by column raycasting, with a texture
//! palette that controls how aliased the maze looks.

mod aliasing;
mod palette;
mod raycast;
mod stack;

pub use aliasing::{aliasing_index, frame_distance, ALIASING_THRESHOLD};
pub use palette::{AliasingMode, TexturePalette, FLOOR_INTENSITY, SKY_INTENSITY};
pub use raycast::{cast_ray, render, slice_height, RayHit, RenderConfig};
pub use stack::{FrameStack, StackError};

use std::io::{self, Write};

use crate::Scalar;

/// Grayscale image, row-major, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    width: usize,
    height: usize,
    pixels: Vec<T>,
}

impl<T: Scalar> Frame<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self { width, height, pixels: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.pixels[y * self.width + x]
    }

    pub(crate) fn set(&mut self, x: usize, y: usize, v: T) {
        self.pixels[y * self.width + x] = v;
    }

    /// Quantized 8-bit copy, row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|p| (p.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    /// Box-filter downsample by an integer factor.
    pub fn downsample(&self, factor: usize) -> Frame<T> {
        let factor = factor.max(1);
        let (w, h) = (self.width / factor, self.height / factor);
        let mut out = Frame::filled(w.max(1), h.max(1), T::zero());
        let norm = T::of(1.0 / (factor * factor) as f64);
        for y in 0..out.height {
            for x in 0..out.width {
                let mut acc = T::zero();
                for dy in 0..factor {
                    for dx in 0..factor {
                        acc += self.get((x * factor + dx).min(self.width - 1), (y * factor + dy).min(self.height - 1));
                    }
                }
                out.set(x, y, acc * norm);
            }
        }
        out
    }

    /// Binary PGM (P5) with maxval 255.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.to_bytes())
    }
}
