use std::sync::Arc;

use aliasmaze_core::qnet::{
    argmax, bellman_target, gradient_check, gradient_check_with_loss, q_learning_update, train_step, AdamConfig, AdamState, Checkpoint,
    ConfidenceTracker, ConvStage, EpsilonSchedule, Layer, Learner, LossKind, Mode, NetworkSpec, Parameters, QNetwork,
    ReplayBuffer, TrainingConfig, Transition,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(conv: Vec<ConvStage>, dense: Vec<usize>, c: usize, h: usize, w: usize, outputs: usize) -> NetworkSpec {
    NetworkSpec { input_channels: c, input_height: h, input_width: w, conv, dense, outputs }
}

#[test]
fn hand_computed_conv_then_dense() {
    // One 3x3 conv (no norm, no pool) on a 1x2x2 input, then a dense layer.
    let s = spec(vec![ConvStage { channels: 1, batch_norm: false, pool: false }], vec![], 1, 2, 2, 2);
    let mut kernel = vec![0.0; 9];
    kernel[4] = 2.0; // centre
    kernel[5] = 1.0; // right neighbour
    let params = Parameters {
        layers: vec![
            Layer::Conv { in_c: 1, out_c: 1, h: 2, w: 2, weight: kernel, bias: vec![-3.0] },
            Layer::Relu,
            Layer::Dense { inputs: 4, outputs: 2, weight: vec![1.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 0.5], bias: vec![0.0, 1.0] },
        ],
    };
    let net = QNetwork::<f64>::from_parts(s, params).unwrap();
    // input [[1,2],[3,4]]: conv = 2*x + right - 3 -> [[1, 1], [7, 5]]
    let q = net.q_values(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(q, vec![1.0, 0.5 * 14.0 + 1.0]);
    // relu clips: input [[0,0],[1,0]] gives conv [[-3,-3],[-1,-3]] -> all zero
    assert_eq!(net.q_values(&[0.0, 0.0, 1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
}

#[test]
fn zero_network_is_symmetric() {
    let net = QNetwork::<f32>::zeros(NetworkSpec::desk(4, 32, 32)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let obs: Vec<f32> = (0..4 * 32 * 32).map(|_| rng.gen()).collect();
    let q = net.q_values(&obs).unwrap();
    assert!(q.iter().all(|&v| v == q[0]));
    assert_eq!(argmax(&q), 0);
}

#[test]
fn argmax_ignores_uniform_output_bias_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut net = QNetwork::<f64>::new(NetworkSpec::desk(2, 8, 8), &mut rng).unwrap();
    for trial in 0..20 {
        let obs: Vec<f64> = (0..128).map(|_| rng.gen()).collect();
        let before = argmax(&net.q_values(&obs).unwrap());
        let shift = rng.gen_range(-5.0..5.0);
        if let Some(Layer::Dense { bias, .. }) = net.params_mut().layers.last_mut() {
            bias.iter_mut().for_each(|b| *b += shift);
        }
        assert_eq!(argmax(&net.q_values(&obs).unwrap()), before, "trial {trial}");
    }
}

#[test]
fn shape_errors() {
    let net = QNetwork::<f32>::zeros(NetworkSpec::desk(1, 8, 8)).unwrap();
    assert!(net.q_values(&[0.0; 3]).is_err());
    let mut bad = NetworkSpec::desk(1, 8, 8);
    bad.outputs = 3;
    assert!(bad.validate_for_actions().is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(Learner::<f32>::new(bad, TrainingConfig::default(), &mut rng).is_err());
}

#[test]
fn linear_net_gradient_is_exact() {
    let s = spec(vec![], vec![], 1, 3, 3, 4);
    let r = gradient_check(&s, 4, 11, 1e-6).unwrap();
    assert!(r.within_tolerance, "{r:?}");
    assert_eq!(r.skipped_at_kinks, 0);
}

#[test]
fn conv_bn_dense_gradient() {
    let s = spec(vec![ConvStage::new(3), ConvStage::new(4)], vec![10], 2, 8, 8, 4);
    for seed in [5, 6, 7] {
        let r = gradient_check(&s, 3, seed, 1e-4).unwrap();
        assert!(r.parameters <= 5000);
        assert!(r.skipped_at_kinks * 4 < r.parameters, "{r:?}");
        assert!(r.within_tolerance, "{r:?}");
    }
    let r = gradient_check_with_loss(&s, 3, 5, 1e-4, LossKind::Huber { delta: 1.0 }).unwrap();
    assert!(r.parameters <= 5000);
    assert!(r.skipped_at_kinks * 4 < r.parameters, "{r:?}");
    assert!(r.within_tolerance, "{r:?}");
}

#[test]
fn zero_input_zero_target_gives_zero_gradient() {
    let s = spec(vec![ConvStage::new(2)], vec![4], 1, 4, 4, 4);
    let net = QNetwork::<f64>::zeros(s).unwrap();
    let pass = net.forward(&[0.0; 32], 2, Mode::Train).unwrap();
    let preds = [pass.output()[0], pass.output()[4]];
    let lv = LossKind::default().batch(&preds, &[0.0, 0.0]).unwrap();
    assert_eq!(lv.loss, 0.0);
    let mut g = vec![0.0; 8];
    g[0] = lv.grad[0];
    g[4] = lv.grad[1];
    assert!(net.backward(&pass, &g).flat().iter().all(|&v| v == 0.0));
}

#[test]
fn bellman_step_matches_tabular_update() {
    let expected: f64 = q_learning_update(0.0, 0.1, 1.5, 0.95, 0.1);
    assert!((expected - 0.1595).abs() < 1e-12);

    // Q(s,a) = w * 1 with w = 0; half squared error; plain gradient step.
    let s = spec(vec![], vec![], 1, 1, 1, 1);
    let params = Parameters { layers: vec![Layer::Dense { inputs: 1, outputs: 1, weight: vec![0.0], bias: vec![0.0] }] };
    let mut net = QNetwork::<f64>::from_parts(s, params).unwrap();
    let target = bellman_target(1.5, 0.95, &[0.1], false);
    let pass = net.forward(&[1.0], 1, Mode::Train).unwrap();
    let grads = net.backward(&pass, &[pass.output()[0] - target]);
    if let Layer::Dense { weight, .. } = &mut net.params_mut().layers[0] {
        weight[0] -= 0.1 * grads.tensors[0][0];
    }
    let after = net.q_values(&[1.0]).unwrap()[0];
    assert!((after - expected).abs() < 1e-12, "{after}");
    assert_eq!(bellman_target(1.5, 0.95, &[0.1, 7.0], true), 1.5);
}

fn fixed_buffer(spec: &NetworkSpec, n: usize, seed: u64, terminal: bool) -> ReplayBuffer<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = ReplayBuffer::new(n);
    for _ in 0..n {
        let obs: Arc<[f64]> = (0..spec.input_len()).map(|_| rng.gen()).collect::<Vec<_>>().into();
        let next: Arc<[f64]> = (0..spec.input_len()).map(|_| rng.gen()).collect::<Vec<_>>().into();
        buf.push(Transition { obs, action: rng.gen_range(0..4), reward: rng.gen_range(-0.2..1.5), next_obs: next, terminal });
    }
    buf
}

#[test]
fn loss_decreases_on_a_fixed_batch() {
    let s = spec(vec![ConvStage { channels: 4, batch_norm: false, pool: true }], vec![8], 1, 6, 6, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut net = QNetwork::<f64>::new(s.clone(), &mut rng).unwrap();
    // A one-slot buffer makes every sampled batch identical.
    let buf = fixed_buffer(&s, 1, 9, false);
    let cfg = TrainingConfig {
        gamma: 0.0,
        min_replay: 1,
        batch_size: 8,
        adam: AdamConfig { learning_rate: 1e-4, ..AdamConfig::default() },
        ..TrainingConfig::default()
    };
    let mut adam = AdamState::new(net.params());
    let mut tracker = ConfidenceTracker::new(4);
    let mut prev = f64::INFINITY;
    for step in 0..50 {
        let loss = train_step(&buf, &mut net, None, &mut adam, &cfg, &mut tracker, &mut rng).unwrap();
        assert!(loss <= prev + 1e-12, "step {step}: {loss} > {prev}");
        prev = loss;
    }
}

#[test]
fn terminal_gamma_zero_targets_are_rewards() {
    let s = spec(vec![], vec![], 1, 2, 2, 4);
    let buf = fixed_buffer(&s, 1, 3, true);
    let t = buf.get(0);
    assert_eq!(bellman_target(t.reward, 0.0, &[9.0; 4], t.terminal), t.reward);
    assert_eq!(bellman_target(t.reward, 0.95, &[9.0; 4], true), t.reward);
}

#[test]
fn tracker_invariants_hold_during_training() {
    let s = NetworkSpec::desk(1, 8, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = TrainingConfig { min_replay: 16, batch_size: 8, target_sync: Some(5), ..TrainingConfig::default() };
    let mut learner = Learner::<f64>::new(s.clone(), cfg, &mut rng).unwrap();
    let buf = fixed_buffer(&s, 40, 1, false);
    for i in 0..40 {
        let t = buf.get(i).clone();
        learner.remember(t.obs, t.action, 1000.0 * t.reward, t.next_obs, t.terminal);
    }
    let mut last_max = 0.0;
    for _ in 0..30 {
        learner.train_step(&mut rng).unwrap();
        let tr = &learner.tracker;
        assert!(tr.max_loss() >= last_max);
        last_max = tr.max_loss();
        for a in 0..4 {
            if let Some(l) = tr.action_loss(a) {
                assert!(l >= 0.0 && l <= tr.max_loss());
            }
        }
    }
    assert_eq!(learner.train_steps, 30);
}

#[test]
fn insufficient_replay_is_an_error() {
    let s = NetworkSpec::desk(1, 8, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut learner = Learner::<f32>::new(s, TrainingConfig::default(), &mut rng).unwrap();
    assert!(learner.train_step(&mut rng).is_err());
    assert_eq!(learner.maybe_train(1, &mut rng).unwrap(), None);
}

#[test]
fn epsilon_schedule_is_linear() {
    let e = EpsilonSchedule { start: 1.0, end: 0.1, decay_steps: 100 };
    assert_eq!(e.value(0), 1.0);
    assert!((e.value(50) - 0.55).abs() < 1e-12);
    assert_eq!(e.value(100), 0.1);
    assert_eq!(e.value(10_000), 0.1);
    assert_eq!(EpsilonSchedule::constant(0.3).value(7), 0.3);
}

#[test]
fn checkpoint_round_trip() {
    let s = NetworkSpec::desk(2, 8, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = TrainingConfig { min_replay: 8, batch_size: 4, ..TrainingConfig::default() };
    let mut learner = Learner::<f32>::new(s.clone(), cfg, &mut rng).unwrap();
    let mut orng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let obs: Arc<[f32]> = (0..s.input_len()).map(|_| orng.gen()).collect::<Vec<_>>().into();
        learner.remember(obs.clone(), 1, -0.5, obs, false);
    }
    learner.train_step(&mut rng).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("agent.json");
    let mut ck = Checkpoint::capture(&learner, 77);
    ck.final_moving_average = Some(12.5);
    ck.save(&path).unwrap();
    let loaded = Checkpoint::<f32>::load(&path).unwrap();
    assert_eq!(loaded, ck);
    let restored = loaded.restore().unwrap();
    let obs: Vec<f32> = (0..s.input_len()).map(|_| orng.gen()).collect();
    assert_eq!(restored.q_values(&obs).unwrap(), learner.q_values(&obs).unwrap());
    assert_eq!(restored.tracker, learner.tracker);
    assert_eq!(restored.train_steps, 1);

    std::fs::write(&path, "{\"version\": 99}").unwrap();
    assert!(Checkpoint::<f32>::load(&path).is_err());
    assert!(Checkpoint::<f32>::load(&dir.path().join("missing.json")).is_err());
}
