//! WebSocket channel between a training run and a human teacher.
//!
//! The server streams [`StateMessage`] snapshots to connected clients and
//! turns inbound advice into human [`AdviceEvent`]s on the agent's queue.
//! The first client to connect may send advice and control commands; later
//! clients only observe. Every message is one JSON text frame.
//!
//! [`AdviceEvent`]: aliasmaze_core::agents::AdviceEvent

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use aliasmaze_core::agents::AdviceQueue;
use aliasmaze_core::telemetry::{RunControl, StateMessage, Telemetry};
use aliasmaze_core::world::{Cardinal, GridMap};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tungstenite::{Message, WebSocket};

/// Default cap on outbound state messages per second.
pub const DEFAULT_STATE_RATE: f64 = 10.0;

const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}

/// Messages a client may send.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum Inbound {
    Advice { direction: String },
    Control { cmd: String },
    /// Asks for the map text, so a client can draw the top-down view.
    GetMap,
}

/// Replies other than state snapshots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum Reply {
    Error { reason: String },
    Ack { cmd: String, paused: bool },
    Map { text: String, digest: String },
}

impl Reply {
    fn error(reason: &str) -> Self {
        Reply::Error { reason: reason.to_string() }
    }

    fn to_json(&self) -> String {
        serde_json::to_string(self).expect("reply serializes")
    }
}

#[derive(Debug)]
struct Snapshot {
    seq: u64,
    key: (u64, u64),
    json: String,
}

#[derive(Debug)]
struct Shared {
    queue: AdviceQueue,
    control: RunControl,
    map: Option<(String, String)>,
    min_interval: Duration,
    latest: Mutex<Option<Snapshot>>,
    last_accept: Mutex<Option<Instant>>,
    clients: AtomicUsize,
    owner_taken: AtomicBool,
    stop: AtomicBool,
}

impl Shared {
    fn handle_text(&self, text: &str, owner: bool) -> Option<Reply> {
        let msg: Inbound = match serde_json::from_str(text) {
            Ok(m) => m,
            Err(_) => return Some(Reply::error("malformed message")),
        };
        match msg {
            Inbound::GetMap => Some(match &self.map {
                Some((text, digest)) => Reply::Map { text: text.clone(), digest: digest.clone() },
                None => Reply::error("no map"),
            }),
            _ if !owner => Some(Reply::error("observe-only connection")),
            Inbound::Advice { direction } => match Cardinal::parse(&direction) {
                Some(d) => {
                    self.queue.push_human(d);
                    None
                }
                None => Some(Reply::error("bad direction")),
            },
            Inbound::Control { cmd } => match cmd.as_str() {
                "pause" => {
                    self.control.pause();
                    Some(Reply::Ack { cmd, paused: true })
                }
                "resume" => {
                    self.control.resume();
                    Some(Reply::Ack { cmd, paused: false })
                }
                _ => Some(Reply::error("unknown command")),
            },
        }
    }
}

/// Server options.
#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// State messages per second sent to each client.
    pub state_rate: f64,
    /// Map served to `getMap` requests.
    pub map: Option<GridMap>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { state_rate: DEFAULT_STATE_RATE, map: None }
    }
}

/// Running server. Dropping it stops the accept loop and disconnects clients.
#[derive(Debug)]
pub struct AdviceServer {
    shared: Arc<Shared>,
    addr: SocketAddr,
    accept: Option<JoinHandle<()>>,
}

/// Telemetry handle feeding a running server.
#[derive(Debug, Clone)]
pub struct ServerTelemetry {
    shared: Arc<Shared>,
}

impl AdviceServer {
    /// Binds `addr` (port 0 picks a free port) and starts accepting clients.
    pub fn serve(addr: &str, queue: AdviceQueue, control: RunControl, cfg: ServerConfig) -> Result<Self, ServerError> {
        let bind_err = |source| ServerError::Bind { addr: addr.to_string(), source };
        let listener = TcpListener::bind(addr).map_err(bind_err)?;
        listener.set_nonblocking(true).map_err(bind_err)?;
        let local = listener.local_addr().map_err(bind_err)?;
        let rate = if cfg.state_rate > 0.0 { cfg.state_rate } else { DEFAULT_STATE_RATE };
        let shared = Arc::new(Shared {
            queue,
            control,
            map: cfg.map.map(|m| (m.to_text(), m.digest())),
            min_interval: Duration::from_secs_f64(1.0 / rate),
            latest: Mutex::new(None),
            last_accept: Mutex::new(None),
            clients: AtomicUsize::new(0),
            owner_taken: AtomicBool::new(false),
            stop: AtomicBool::new(false),
        });
        let sh = Arc::clone(&shared);
        let accept = std::thread::Builder::new()
            .name("advice-accept".into())
            .spawn(move || accept_loop(listener, sh))
            .map_err(bind_err)?;
        Ok(Self { shared, addr: local, accept: Some(accept) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn telemetry(&self) -> ServerTelemetry {
        ServerTelemetry { shared: Arc::clone(&self.shared) }
    }

    pub fn client_count(&self) -> usize {
        self.shared.clients.load(Ordering::SeqCst)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for AdviceServer {
    fn drop(&mut self) {
        self.stop();
    }
}

impl Telemetry for ServerTelemetry {
    fn wants_state(&self) -> bool {
        if self.shared.clients.load(Ordering::Relaxed) == 0 {
            return false;
        }
        let last = self.shared.last_accept.lock().unwrap_or_else(|e| e.into_inner());
        last.map_or(true, |t| t.elapsed() >= self.shared.min_interval)
    }

    /// Replaces the pending snapshot. Snapshots that do not advance
    /// `(episode, step)` are dropped.
    fn publish(&self, msg: StateMessage) {
        if self.shared.clients.load(Ordering::Relaxed) == 0 {
            return;
        }
        let key = (msg.episode, msg.step);
        let mut latest = self.shared.latest.lock().unwrap_or_else(|e| e.into_inner());
        if latest.as_ref().is_some_and(|s| key <= s.key) {
            return;
        }
        let Ok(json) = serde_json::to_string(&msg) else { return };
        let seq = latest.as_ref().map_or(1, |s| s.seq + 1);
        *latest = Some(Snapshot { seq, key, json });
        *self.shared.last_accept.lock().unwrap_or_else(|e| e.into_inner()) = Some(Instant::now());
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    let mut workers = Vec::new();
    while !shared.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let sh = Arc::clone(&shared);
                if let Ok(h) = std::thread::Builder::new().name("advice-client".into()).spawn(move || serve_client(stream, sh)) {
                    workers.push(h);
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(POLL),
            Err(_) => std::thread::sleep(POLL),
        }
        workers.retain(|h: &JoinHandle<()>| !h.is_finished());
    }
    for h in workers {
        let _ = h.join();
    }
}

fn serve_client(stream: TcpStream, shared: Arc<Shared>) {
    if stream.set_nonblocking(false).is_err() {
        return;
    }
    let Ok(mut ws) = tungstenite::accept(stream) else { return };
    if ws.get_ref().set_read_timeout(Some(POLL)).is_err() {
        return;
    }
    let owner = shared.owner_taken.compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst).is_ok();
    shared.clients.fetch_add(1, Ordering::SeqCst);
    let _ = client_loop(&mut ws, &shared, owner);
    shared.clients.fetch_sub(1, Ordering::SeqCst);
    if owner {
        shared.owner_taken.store(false, Ordering::SeqCst);
    }
}

fn client_loop(ws: &mut WebSocket<TcpStream>, shared: &Shared, owner: bool) -> Result<(), tungstenite::Error> {
    let mut sent_seq = 0u64;
    let mut last_send: Option<Instant> = None;
    loop {
        if shared.stop.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                if let Some(reply) = shared.handle_text(&text, owner) {
                    ws.send(Message::text(reply.to_json()))?;
                }
            }
            Ok(Message::Binary(_)) => ws.send(Message::text(Reply::error("malformed message").to_json()))?,
            Ok(Message::Close(_)) => {
                let _ = ws.flush();
                return Ok(());
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
        if last_send.is_some_and(|t| t.elapsed() < shared.min_interval) {
            continue;
        }
        let pending = {
            let latest = shared.latest.lock().unwrap_or_else(|e| e.into_inner());
            latest.as_ref().filter(|s| s.seq > sent_seq).map(|s| (s.seq, s.json.clone()))
        };
        if let Some((seq, json)) = pending {
            ws.send(Message::text(json))?;
            sent_seq = seq;
            last_send = Some(Instant::now());
        }
    }
}
