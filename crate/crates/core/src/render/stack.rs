use std::collections::VecDeque;

use thiserror::Error;

use super::Frame;
use crate::Scalar;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum StackError {
    #[error("frame is {got:?}, stack expects {expected:?}")]
    DimensionMismatch { expected: (usize, usize), got: (usize, usize) },
}

/// The `capacity` most recent frames, newest first.
#[derive(Debug, Clone)]
pub struct FrameStack<T> {
    capacity: usize,
    width: usize,
    height: usize,
    frames: VecDeque<Frame<T>>,
}

impl<T: Scalar> FrameStack<T> {
    pub fn new(capacity: usize, width: usize, height: usize) -> Self {
        assert!(capacity > 0, "frame stack capacity must be positive");
        Self { capacity, width, height, frames: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }

    /// Length of the stacked observation tensor.
    pub fn tensor_len(&self) -> usize {
        self.capacity * self.width * self.height
    }

    pub fn push(&mut self, frame: Frame<T>) -> Result<(), StackError> {
        if (frame.width(), frame.height()) != (self.width, self.height) {
            return Err(StackError::DimensionMismatch {
                expected: (self.width, self.height),
                got: (frame.width(), frame.height()),
            });
        }
        if self.frames.len() == self.capacity {
            self.frames.pop_back();
        }
        self.frames.push_front(frame);
        Ok(())
    }

    /// Observation tensor laid out `[slot][row][col]`, slot 0 newest.
    /// Missing slots repeat the oldest frame held.
    pub fn tensor(&self) -> Vec<T> {
        let plane = self.width * self.height;
        let mut out = Vec::with_capacity(self.capacity * plane);
        let Some(oldest) = self.frames.back() else {
            out.resize(self.capacity * plane, T::zero());
            return out;
        };
        for slot in 0..self.capacity {
            let f = self.frames.get(slot).unwrap_or(oldest);
            out.extend_from_slice(f.pixels());
        }
        out
    }

    pub fn push_and_stack(&mut self, frame: Frame<T>) -> Result<Vec<T>, StackError> {
        self.push(frame)?;
        Ok(self.tensor())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(v: f32) -> Frame<f32> {
        Frame::filled(3, 2, v)
    }

    fn slots(t: &[f32]) -> Vec<f32> {
        t.chunks(6).map(|c| c[0]).collect()
    }

    #[test]
    fn first_push_pads_every_slot() {
        let mut s = FrameStack::new(4, 3, 2);
        let t = s.push_and_stack(f(0.3)).unwrap();
        assert_eq!(t.len(), 24);
        assert_eq!(slots(&t), vec![0.3; 4]);
    }

    #[test]
    fn newest_first_and_eviction() {
        let mut s = FrameStack::new(2, 3, 2);
        for v in [0.1, 0.2, 0.3] {
            s.push(f(v)).unwrap();
        }
        assert_eq!(slots(&s.tensor()), vec![0.3, 0.2]);
        let mut s = FrameStack::new(3, 3, 2);
        s.push(f(0.1)).unwrap();
        s.push(f(0.2)).unwrap();
        assert_eq!(slots(&s.tensor()), vec![0.2, 0.1, 0.1]);
        s.push(f(0.3)).unwrap();
        s.push(f(0.4)).unwrap();
        assert_eq!(slots(&s.tensor()), vec![0.4, 0.3, 0.2]);
    }

    #[test]
    fn rejects_wrong_dimensions() {
        let mut s = FrameStack::<f32>::new(2, 3, 2);
        assert_eq!(
            s.push(Frame::filled(2, 3, 0.0)),
            Err(StackError::DimensionMismatch { expected: (3, 2), got: (2, 3) })
        );
    }
}
