//! State snapshots for live observers and the pause switch they can flip.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::render::Frame;
use crate::world::{Action, AgentPose, Cardinal};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoseMessage {
    pub x: usize,
    pub y: usize,
    pub heading: Cardinal,
}

impl From<AgentPose> for PoseMessage {
    fn from(p: AgentPose) -> Self {
        Self { x: p.x, y: p.y, heading: p.heading }
    }
}

/// Grayscale frame as base64 bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePayload {
    pub w: usize,
    pub h: usize,
    pub b64: String,
}

impl FramePayload {
    pub fn encode<T: Scalar>(frame: &Frame<T>) -> Self {
        Self {
            w: frame.width(),
            h: frame.height(),
            b64: base64::engine::general_purpose::STANDARD.encode(frame.to_bytes()),
        }
    }

    pub fn decode(&self) -> Option<Vec<u8>> {
        let bytes = base64::engine::general_purpose::STANDARD.decode(&self.b64).ok()?;
        (bytes.len() == self.w * self.h).then_some(bytes)
    }
}

/// Outbound snapshot of the running episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "state", rename_all = "camelCase")]
pub struct StateMessage {
    pub episode: u64,
    pub step: u64,
    pub pose: PoseMessage,
    pub score: f64,
    pub last_action: Option<Action>,
    pub advice_active: bool,
    pub frame: FramePayload,
    pub map_digest: String,
}

/// Sink for state snapshots. Implementations must not block the caller.
pub trait Telemetry: Send + Sync {
    /// Whether a snapshot published now would be delivered. Lets the
    /// training loop skip building snapshots nobody will see.
    fn wants_state(&self) -> bool;

    fn publish(&self, msg: StateMessage);
}

/// Telemetry that drops everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoTelemetry;

impl Telemetry for NoTelemetry {
    fn wants_state(&self) -> bool {
        false
    }

    fn publish(&self, _msg: StateMessage) {}
}

/// Pause switch shared between the training loop and a controller.
#[derive(Debug, Clone, Default)]
pub struct RunControl {
    inner: Arc<(Mutex<bool>, Condvar)>,
}

impl RunControl {
    pub fn new() -> Self {
        Self::default()
    }

    /// Idempotent.
    pub fn pause(&self) {
        *self.inner.0.lock().unwrap_or_else(|e| e.into_inner()) = true;
    }

    /// Idempotent; resuming a running loop does nothing.
    pub fn resume(&self) {
        *self.inner.0.lock().unwrap_or_else(|e| e.into_inner()) = false;
        self.inner.1.notify_all();
    }

    pub fn is_paused(&self) -> bool {
        *self.inner.0.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Blocks while paused.
    pub fn wait_while_paused(&self) {
        let (lock, cv) = &*self.inner;
        let mut paused = lock.lock().unwrap_or_else(|e| e.into_inner());
        while *paused {
            paused = cv.wait_timeout(paused, Duration::from_millis(200)).unwrap_or_else(|e| e.into_inner()).0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_wire_format() {
        let msg = StateMessage {
            episode: 3,
            step: 17,
            pose: PoseMessage { x: 2, y: 5, heading: Cardinal::West },
            score: -8.5,
            last_action: Some(Action::TurnAround),
            advice_active: true,
            frame: FramePayload::encode(&Frame::<f32>::filled(2, 1, 1.0)),
            map_digest: "abc".into(),
        };
        let v: serde_json::Value = serde_json::to_value(&msg).unwrap();
        assert_eq!(v["type"], "state");
        assert_eq!(v["pose"]["heading"], "west");
        assert_eq!(v["lastAction"], "turn_around");
        assert_eq!(v["adviceActive"], true);
        assert_eq!(v["mapDigest"], "abc");
        assert_eq!(v["frame"]["w"], 2);
        assert_eq!(msg.frame.decode().unwrap(), vec![255, 255]);
        let back: StateMessage = serde_json::from_value(v).unwrap();
        assert_eq!(back, msg);
    }

    #[test]
    fn pause_blocks_until_resume() {
        let ctl = RunControl::new();
        ctl.resume();
        assert!(!ctl.is_paused());
        ctl.pause();
        ctl.pause();
        let c2 = ctl.clone();
        let t = std::thread::spawn(move || {
            c2.wait_while_paused();
            std::time::Instant::now()
        });
        std::thread::sleep(Duration::from_millis(50));
        let resumed = std::time::Instant::now();
        ctl.resume();
        assert!(t.join().unwrap() >= resumed);
    }
}
