//! Interactive reinforcement learning testbed.
//!
//! A first-person grid maze whose textures can be made more or less
//! perceptually aliased, a deep Q-learning engine written from scratch, and
//! two agents that arbitrate between their own policy and teacher advice:
//! Feedback Arbitration and Newtonian Action Advice.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix the
//! precision for the common cases.

pub mod agents;
pub mod harness;
pub mod oracle;
pub mod qnet;
pub mod render;
pub mod scalar;
pub mod telemetry;
pub mod world;

pub use scalar::Scalar;

/// Single-precision Q-network used for training runs.
pub type QNetwork32 = qnet::QNetwork<f32>;
/// Double-precision Q-network used for gradient verification.
pub type QNetwork64 = qnet::QNetwork<f64>;
pub type Frame32 = render::Frame<f32>;
pub type Frame64 = render::Frame<f64>;
pub type DqnAgent32 = agents::DqnAgent<f32>;
pub type Learner32 = qnet::Learner<f32>;
