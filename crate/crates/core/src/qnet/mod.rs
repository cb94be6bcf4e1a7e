//! Deep Q-function written from scratch: a small convolutional network with
//! batch normalization, its loss functions, Adam, experience replay and the
//! Bellman-target training step.

mod adam;
mod checkpoint;
mod gradcheck;
mod kernels;
mod learner;
mod loss;
mod network;
mod replay;
mod tracker;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, gradient_check_with_loss, relative_error, GradCheckReport, PERTURBATION};
pub use learner::{bellman_target, q_learning_update, train_step, EpsilonSchedule, Learner, TrainingConfig};
pub use loss::{LossKind, LossValue};
pub use network::{argmax, forward, ForwardPass, Gradients, Layer, Mode, Parameters, QNetwork};
pub use replay::{ReplayBuffer, Transition};
pub use tracker::ConfidenceTracker;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("replay holds {have} transitions, training needs {need}")]
    InsufficientReplay { have: usize, need: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One convolutional stage: 3x3 same-padded convolution, relu, optional batch
/// normalization, optional 2x2 max pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub channels: usize,
    #[serde(default = "yes")]
    pub batch_norm: bool,
    #[serde(default = "yes")]
    pub pool: bool,
}

fn yes() -> bool {
    true
}

impl ConvStage {
    pub fn new(channels: usize) -> Self {
        Self { channels, batch_norm: true, pool: true }
    }
}

/// Network architecture. Input is `channels x height x width`, channels being
/// stacked frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub conv: Vec<ConvStage>,
    /// Hidden dense widths, each followed by relu.
    pub dense: Vec<usize>,
    pub outputs: usize,
}

impl NetworkSpec {
    /// Four conv stages as in the reference architecture.
    pub fn full(frames: usize, height: usize, width: usize) -> Self {
        Self {
            input_channels: frames,
            input_height: height,
            input_width: width,
            conv: vec![ConvStage::new(16), ConvStage::new(32), ConvStage::new(32), ConvStage::new(64)],
            dense: vec![128],
            outputs: crate::world::Action::COUNT,
        }
    }

    /// Two narrow conv stages; fast enough for CPU experiments.
    pub fn desk(frames: usize, height: usize, width: usize) -> Self {
        Self {
            input_channels: frames,
            input_height: height,
            input_width: width,
            conv: vec![ConvStage::new(6), ConvStage::new(8)],
            dense: vec![32],
            outputs: crate::world::Action::COUNT,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_channels * self.input_height * self.input_width
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.input_len() == 0 {
            return Err(NetError::InvalidSpec("empty input".into()));
        }
        if self.outputs == 0 {
            return Err(NetError::InvalidSpec("no outputs".into()));
        }
        let (mut h, mut w) = (self.input_height, self.input_width);
        for (i, st) in self.conv.iter().enumerate() {
            if st.channels == 0 {
                return Err(NetError::InvalidSpec(format!("conv stage {i} has no channels")));
            }
            if st.pool {
                h /= 2;
                w /= 2;
            }
            if h == 0 || w == 0 {
                return Err(NetError::InvalidSpec(format!("conv stage {i} pools the feature map away")));
            }
        }
        if self.dense.contains(&0) {
            return Err(NetError::InvalidSpec("zero-width dense layer".into()));
        }
        Ok(())
    }

    /// Validation for a Q-network driving the four maze actions.
    pub fn validate_for_actions(&self) -> Result<(), NetError> {
        self.validate()?;
        if self.outputs != crate::world::Action::COUNT {
            return Err(NetError::InvalidSpec(format!(
                "output width {} does not match {} actions",
                self.outputs,
                crate::world::Action::COUNT
            )));
        }
        Ok(())
    }
}
