//! A scripted teacher drives a real training run through the server.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use aliasmaze_core::agents::AgentKind;
use aliasmaze_core::harness::{load_map, run_experiment, ExperimentConfig, RunHooks};
use aliasmaze_core::oracle::{compute_policy_field, Condition};
use aliasmaze_core::qnet::EpsilonSchedule;
use aliasmaze_core::telemetry::RunControl;
use aliasmaze_server::{AdviceServer, ServerConfig};
use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::Message;

#[test]
fn human_advice_steers_a_training_run() {
    let mut cfg = ExperimentConfig::desk();
    cfg.agent = AgentKind::Naa;
    cfg.condition = Condition::Human;
    cfg.sessions = 1;
    cfg.episodes = 2;
    cfg.max_actions = Some(300);
    // never explore and never train, so every fresh advice is acted on
    cfg.training.exploration = EpsilonSchedule::constant(0.0);
    cfg.training.min_replay = usize::MAX / 2;

    let map = load_map(&cfg.map).unwrap();
    let field = compute_policy_field(&map);
    let queue = cfg.arbitration.queue();
    let control = RunControl::new();
    let server_cfg = ServerConfig { state_rate: 500.0, map: Some(map.clone()) };
    let server = AdviceServer::serve("127.0.0.1:0", queue.clone(), control.clone(), server_cfg).unwrap();

    let (mut ws, _) = tungstenite::connect(format!("ws://{}", server.local_addr())).unwrap();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_millis(2))).unwrap();
    }
    let start = Instant::now();
    while server.client_count() == 0 {
        assert!(start.elapsed() < Duration::from_secs(5));
        std::thread::sleep(Duration::from_millis(2));
    }
    // a pause and resume round trip before the run starts
    ws.send(Message::text(json!({"type": "control", "cmd": "pause"}).to_string())).unwrap();

    let done = Arc::new(AtomicBool::new(false));
    let hooks = RunHooks { telemetry: Arc::new(server.telemetry()), control: control.clone(), queue: Some(queue) };
    let runner = {
        let done = Arc::clone(&done);
        std::thread::spawn(move || {
            let r = run_experiment(&cfg, &hooks);
            done.store(true, Ordering::SeqCst);
            r
        })
    };

    let mut states = 0usize;
    let mut resumed = false;
    let mut sent = 0usize;
    let deadline = Instant::now() + Duration::from_secs(120);
    while !done.load(Ordering::SeqCst) {
        assert!(Instant::now() < deadline, "run did not finish");
        match ws.read() {
            Ok(Message::Text(t)) => {
                let v: Value = serde_json::from_str(&t).unwrap();
                if v["type"] == "ack" && !resumed {
                    ws.send(Message::text(json!({"type": "control", "cmd": "resume"}).to_string())).unwrap();
                    resumed = true;
                } else if v["type"] == "state" {
                    states += 1;
                    assert_eq!(v["mapDigest"], map.digest());
                    let (x, y) = (v["pose"]["x"].as_u64().unwrap() as usize, v["pose"]["y"].as_u64().unwrap() as usize);
                    if let Some(dir) = field.direction(x, y) {
                        ws.send(Message::text(json!({"type": "advice", "direction": dir.name()}).to_string())).unwrap();
                        sent += 1;
                    }
                }
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(e) => panic!("{e}"),
        }
    }
    let result = runner.join().unwrap().unwrap();
    let records = &result.sessions[0].records;
    let offered: u64 = records.iter().map(|r| r.advice_offered).sum();
    let used: u64 = records.iter().map(|r| r.advice_used).sum();
    assert!(resumed && states > 0 && sent > 0, "states {states}, sent {sent}");
    assert!(offered > 0, "no advice reached the agent");
    assert!(used > 0 && used <= offered, "used {used} of {offered}");
}
