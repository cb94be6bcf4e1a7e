use std::net::TcpStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use aliasmaze_core::agents::{AdviceQueue, AdviceSource};
use aliasmaze_core::render::Frame;
use aliasmaze_core::telemetry::{FramePayload, PoseMessage, RunControl, StateMessage, Telemetry};
use aliasmaze_core::world::{Action, Cardinal, GridMap};
use aliasmaze_server::{AdviceServer, ServerConfig, ServerError};
use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

const MAP: &str = "\
width=6
height=4
milestone_entry_x=2
milestone_exit_x=3
######
#S..N#
#....#
######
";

fn start() -> (AdviceServer, AdviceQueue, RunControl) {
    let queue = AdviceQueue::new(5, 1000);
    let control = RunControl::new();
    let cfg = ServerConfig { map: Some(GridMap::parse(MAP).unwrap()), ..ServerConfig::default() };
    let server = AdviceServer::serve("127.0.0.1:0", queue.clone(), control.clone(), cfg).unwrap();
    (server, queue, control)
}

fn connect(server: &AdviceServer, expect_clients: usize) -> Client {
    let (ws, _) = tungstenite::connect(format!("ws://{}", server.local_addr())).unwrap();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_millis(50))).unwrap();
    }
    wait_for(|| server.client_count() == expect_clients);
    ws
}

fn wait_for(mut cond: impl FnMut() -> bool) {
    let start = Instant::now();
    while !cond() {
        assert!(start.elapsed() < Duration::from_secs(5), "condition not reached");
        std::thread::sleep(Duration::from_millis(5));
    }
}

fn send(ws: &mut Client, v: Value) {
    ws.send(Message::text(v.to_string())).unwrap();
}

/// Next text message within `timeout`, if any.
fn recv(ws: &mut Client, timeout: Duration) -> Option<Value> {
    let start = Instant::now();
    while start.elapsed() < timeout {
        match ws.read() {
            Ok(Message::Text(t)) => return Some(serde_json::from_str(&t).unwrap()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return None,
            Err(e) => panic!("{e}"),
        }
    }
    None
}

fn recv_type(ws: &mut Client, ty: &str) -> Value {
    loop {
        let v = recv(ws, Duration::from_secs(5)).expect("reply");
        if v["type"] == ty {
            return v;
        }
    }
}

fn state(episode: u64, step: u64) -> StateMessage {
    StateMessage {
        episode,
        step,
        pose: PoseMessage { x: 1, y: 1, heading: Cardinal::East },
        score: -0.5 * step as f64,
        last_action: Some(Action::Forward),
        advice_active: false,
        frame: FramePayload::encode(&Frame::<f32>::filled(4, 4, 0.5)),
        map_digest: "d".into(),
    }
}

#[test]
fn advice_reaches_queue_as_human_event() {
    let (server, queue, _) = start();
    queue.set_clock(42);
    let mut ws = connect(&server, 1);
    send(&mut ws, json!({"type": "advice", "direction": "north"}));
    wait_for(|| queue.len() == 1);
    let ev = queue.snapshot()[0];
    assert_eq!(ev.direction, Cardinal::North);
    assert_eq!(ev.source, AdviceSource::Human);
    assert_eq!(ev.issued_at, 42);
}

#[test]
fn bad_direction_is_rejected_and_connection_kept() {
    let (server, queue, _) = start();
    let mut ws = connect(&server, 1);
    send(&mut ws, json!({"type": "advice", "direction": "up"}));
    let reply = recv_type(&mut ws, "error");
    assert_eq!(reply, json!({"type": "error", "reason": "bad direction"}));
    assert!(queue.is_empty());
    send(&mut ws, json!({"type": "advice", "direction": "west"}));
    wait_for(|| queue.len() == 1);
    assert_eq!(queue.snapshot()[0].direction, Cardinal::West);
}

#[test]
fn malformed_json_gets_error_reply() {
    let (server, _, _) = start();
    let mut ws = connect(&server, 1);
    ws.send(Message::text("{not json")).unwrap();
    assert_eq!(recv_type(&mut ws, "error")["reason"], "malformed message");
    send(&mut ws, json!({"type": "control", "cmd": "explode"}));
    assert_eq!(recv_type(&mut ws, "error")["reason"], "unknown command");
}

#[test]
fn pause_resume_acknowledged_and_idempotent() {
    let (server, _, control) = start();
    let mut ws = connect(&server, 1);
    send(&mut ws, json!({"type": "control", "cmd": "resume"}));
    assert_eq!(recv_type(&mut ws, "ack"), json!({"type": "ack", "cmd": "resume", "paused": false}));
    assert!(!control.is_paused());
    for _ in 0..2 {
        send(&mut ws, json!({"type": "control", "cmd": "pause"}));
        assert_eq!(recv_type(&mut ws, "ack")["paused"], true);
        assert!(control.is_paused());
    }
    send(&mut ws, json!({"type": "control", "cmd": "resume"}));
    recv_type(&mut ws, "ack");
    assert!(!control.is_paused());
}

#[test]
fn pause_freezes_step_loop() {
    let (server, _, control) = start();
    let steps = Arc::new(AtomicU64::new(0));
    let stop = Arc::new(std::sync::atomic::AtomicBool::new(false));
    let worker = {
        let (control, steps, stop) = (control.clone(), Arc::clone(&steps), Arc::clone(&stop));
        std::thread::spawn(move || {
            while !stop.load(Ordering::SeqCst) {
                control.wait_while_paused();
                steps.fetch_add(1, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(1));
            }
        })
    };
    let mut ws = connect(&server, 1);
    send(&mut ws, json!({"type": "control", "cmd": "pause"}));
    recv_type(&mut ws, "ack");
    std::thread::sleep(Duration::from_millis(30));
    let frozen = steps.load(Ordering::SeqCst);
    std::thread::sleep(Duration::from_millis(150));
    assert!(steps.load(Ordering::SeqCst) <= frozen + 1);
    send(&mut ws, json!({"type": "control", "cmd": "resume"}));
    recv_type(&mut ws, "ack");
    wait_for(|| steps.load(Ordering::SeqCst) > frozen + 5);
    stop.store(true, Ordering::SeqCst);
    worker.join().unwrap();
}

#[test]
fn state_stream_is_rate_limited_and_monotone() {
    let (server, _, _) = start();
    let tel = server.telemetry();
    let mut ws = connect(&server, 1);
    let start = Instant::now();
    let mut published = 0;
    let (mut episode, mut step) = (0u64, 0u64);
    while start.elapsed() < Duration::from_millis(600) {
        step += 1;
        if step == 300 {
            episode += 1;
            step = 1;
        }
        tel.publish(state(episode, step));
        published += 1;
        std::thread::sleep(Duration::from_micros(500));
    }
    tel.publish(state(0, 1));
    let mut keys = Vec::new();
    while let Some(v) = recv(&mut ws, Duration::from_millis(300)) {
        assert_eq!(v["type"], "state");
        assert_eq!(v["pose"]["heading"], "east");
        assert_eq!(v["lastAction"], "forward");
        keys.push((v["episode"].as_u64().unwrap(), v["step"].as_u64().unwrap()));
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(keys.len() >= 2, "received {keys:?}");
    assert!(published > 100);
    assert!((keys.len() as f64) <= 10.0 * elapsed + 1.0, "{} messages in {elapsed}s", keys.len());
    assert!(keys.windows(2).all(|w| w[0] < w[1]), "{keys:?}");
}

#[test]
fn no_client_means_no_state_wanted() {
    let (server, _, _) = start();
    let tel = server.telemetry();
    assert!(!tel.wants_state());
    tel.publish(state(0, 1));
    let _ws = connect(&server, 1);
    assert!(tel.wants_state());
}

#[test]
fn second_client_observes_only() {
    let (server, queue, control) = start();
    let tel = server.telemetry();
    let mut owner = connect(&server, 1);
    let mut watcher = connect(&server, 2);
    send(&mut watcher, json!({"type": "advice", "direction": "south"}));
    assert_eq!(recv_type(&mut watcher, "error")["reason"], "observe-only connection");
    send(&mut watcher, json!({"type": "control", "cmd": "pause"}));
    recv_type(&mut watcher, "error");
    assert!(queue.is_empty() && !control.is_paused());
    tel.publish(state(1, 1));
    assert_eq!(recv_type(&mut watcher, "state")["episode"], 1);
    assert_eq!(recv_type(&mut owner, "state")["episode"], 1);
    send(&mut owner, json!({"type": "advice", "direction": "south"}));
    wait_for(|| queue.len() == 1);
}

#[test]
fn owner_slot_frees_on_disconnect() {
    let (server, queue, _) = start();
    let mut first = connect(&server, 1);
    first.close(None).unwrap();
    let _ = recv(&mut first, Duration::from_millis(200));
    wait_for(|| server.client_count() == 0);
    let mut second = connect(&server, 1);
    send(&mut second, json!({"type": "advice", "direction": "east"}));
    wait_for(|| queue.len() == 1);
}

#[test]
fn get_map_returns_text_and_digest() {
    let (server, _, _) = start();
    let mut ws = connect(&server, 1);
    send(&mut ws, json!({"type": "getMap"}));
    let reply = recv_type(&mut ws, "map");
    let map = GridMap::parse(MAP).unwrap();
    assert_eq!(reply["digest"], map.digest());
    assert_eq!(GridMap::parse(reply["text"].as_str().unwrap()).unwrap().to_text(), map.to_text());
}

#[test]
fn busy_port_is_an_error() {
    let (server, queue, control) = start();
    let addr = server.local_addr().to_string();
    let err = AdviceServer::serve(&addr, queue, control, ServerConfig::default()).unwrap_err();
    assert!(matches!(err, ServerError::Bind { .. }));
}
