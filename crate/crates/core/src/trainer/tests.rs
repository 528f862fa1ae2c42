use proptest::prelude::{prop, prop_assert, proptest};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::tabular::{ChainMdp, LinearQ};
use super::*;
use crate::agents::{AgentNet, ArchConfig, Variant};
use crate::mapgen::imaze_set;
use crate::numerics::{grad_check, ParamStore, Rng, Tensor};
use crate::obs::Observation;
use crate::worldsim::Task;

fn random_obs(cfg: &ArchConfig, rng: &mut Rng) -> Observation {
    let len = cfg.obs_channels * cfg.obs_height * cfg.obs_width;
    let data = (0..len).map(|_| rng.below(256) as u8).collect();
    Observation::new(cfg.obs_channels, cfg.obs_height, cfg.obs_width, data).unwrap()
}

fn chain_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::new(Task::IMaze, Variant::Dqn);
    cfg.seed = seed;
    cfg.gamma = 0.9;
    cfg.eps_anneal = 10_000;
    cfg.lr = 0.005;
    cfg.replay_capacity = 50_000;
    cfg
}

fn chain() -> ChainMdp {
    ChainMdp::new(5, 0.8, 1.0, -0.04, 20)
}

/// Value iteration on the deterministic chain.
fn value_iteration(env: &ChainMdp, gamma: f64) -> Vec<[f64; 2]> {
    let n = env.states;
    let mut v = vec![0.0; n];
    let mut q = vec![[0.0; 2]; n];
    for _ in 0..2000 {
        for s in 1..n - 1 {
            for a in 0..2 {
                let (next, r, terminal) = env.transition(s, a);
                q[s][a] = r + if terminal { 0.0 } else { gamma * v[next] };
            }
        }
        for s in 1..n - 1 {
            v[s] = q[s][0].max(q[s][1]);
        }
    }
    q
}

fn store(values: &[(&str, Vec<f64>)]) -> ParamStore {
    let mut ps = ParamStore::new();
    for (name, v) in values {
        ps.add(*name, Tensor::vector(v.clone()));
    }
    ps
}

#[test]
fn epsilon_endpoints_are_exact() {
    assert_eq!(epsilon_at(0), 1.0);
    assert_eq!(epsilon_at(1_000_000), 0.1);
    assert_eq!(epsilon_at(5_000_000), 0.1);
    assert!((epsilon_at(500_000) - 0.55).abs() < 1e-15);
    assert!(epsilon_at(1) < 1.0 && epsilon_at(999_999) > 0.1);
}

#[test]
fn config_defaults_follow_task_and_architecture() {
    let c = TrainConfig::new(Task::IMaze, Variant::Frmqn);
    assert_eq!((c.frames, c.mem_size, c.replay_capacity), (12, 11, 50_000));
    assert_eq!((c.batch, c.gamma, c.update_every), (32, 0.99, 4));
    assert_eq!((c.rms_decay, c.rms_sq_decay, c.clip_norm, c.target_momentum), (0.95, 0.95, 20.0, 0.999));
    assert_eq!(c.lr, 0.0005);
    let c = TrainConfig::new(Task::SeqInd, Variant::Drqn);
    assert_eq!((c.frames, c.mem_size, c.replay_capacity, c.lr), (10, 0, 1_000_000, 0.001));
    assert_eq!(default_learning_rate(Task::Single, Variant::Dqn), 0.0001);
    assert_eq!(default_learning_rate(Task::PatternMatch, Variant::Drqn), 0.001);
    assert_eq!(default_learning_rate(Task::SingleInd, Variant::Frmqn), 0.00025);
}

#[test]
fn config_text_round_trips_and_overrides_apply_in_order() {
    let mut c = TrainConfig::new(Task::PatternMatch, Variant::Rmqn);
    c.seed = 9;
    c.maps = Some("maps".into());
    assert_eq!(TrainConfig::parse(&c.to_text()).unwrap(), c);
    let text = "task = single # comment\narch = mqn\nframes = 30\nlr = 0.1\n\nlr = 0.2\n";
    let c = TrainConfig::parse(text).unwrap();
    assert_eq!((c.task, c.arch, c.frames, c.mem_size, c.lr), (Task::Single, Variant::Mqn, 30, 29, 0.2));
    assert!(TrainConfig::parse("bogus = 1").is_err());
    assert!(TrainConfig::parse("gamma = 1.5").is_err());
    assert!(TrainConfig::parse("batch = x").is_err());
    assert!(TrainConfig::parse("no equals sign").is_err());
    assert!(TrainConfig::parse("arch = dqn\nmem_size = 3").is_err());
}

#[test]
fn single_transition_window_repeats_first_frame() {
    let mut r = ReplayMemory::new(100);
    r.begin_episode();
    r.push(7u32, 1, -0.04, true).unwrap();
    r.end_episode(8).unwrap();
    let b = r.sample_batch(&mut Rng::new(0), 1, 4).unwrap();
    assert_eq!(b.windows[0], vec![&7; 4]);
    assert_eq!(b.next_windows[0], vec![&7, &7, &7, &8]);
    assert_eq!((b.actions[0], b.rewards[0], b.terminals[0]), (1, -0.04, true));
}

#[test]
fn windows_slide_inside_an_episode() {
    let mut r = ReplayMemory::new(100);
    r.begin_episode();
    for i in 0..6u32 {
        r.push(i, 0, 0.0, false).unwrap();
    }
    assert_eq!(r.eligible(), 5, "last transition waits for its successor");
    r.end_episode(6).unwrap();
    assert_eq!(r.eligible(), 6);
    assert_eq!(r.window(0, 4, 3).unwrap(), vec![&2, &3, &4]);
    assert_eq!(r.window(0, 1, 3).unwrap(), vec![&0, &0, &1]);
}

#[test]
fn eviction_drops_whole_oldest_episodes() {
    let mut r = ReplayMemory::new(10);
    for len in [4usize, 3, 5] {
        r.begin_episode();
        for i in 0..len {
            r.push(i, 0, 0.0, false).unwrap();
        }
        r.end_episode(99).unwrap();
    }
    assert_eq!(r.episode_ids(), vec![1, 2]);
    assert_eq!(r.episode_lengths(), vec![3, 5]);
    assert_eq!(r.len(), 8);
    r.begin_episode();
    for i in 0..10 {
        r.push(i, 0, 0.0, false).unwrap();
    }
    assert_eq!(r.episode_ids(), vec![3]);
    assert!(matches!(r.push(0, 0, 0.0, false), Err(TrainError::Capacity { .. })));
}

#[test]
fn sampling_needs_a_full_batch() {
    let mut r = ReplayMemory::new(100);
    r.begin_episode();
    r.push(0u8, 0, 0.0, false).unwrap();
    r.push(1u8, 0, 0.0, false).unwrap();
    assert!(matches!(r.sample_batch(&mut Rng::new(0), 2, 1), Err(TrainError::NotReady { eligible: 1, needed: 2 })));
    assert!(r.push(2u8, 0, f64::NAN, false).is_err());
}

#[test]
fn sampling_is_uniform_over_transitions() {
    let mut r = ReplayMemory::new(10_000);
    for _ in 0..100 {
        r.begin_episode();
        for i in 0..10u32 {
            r.push(i, 0, 0.0, i == 9).unwrap();
        }
        r.end_episode(10).unwrap();
    }
    let mut counts = vec![0usize; 1000];
    let mut rng = Rng::new(3);
    let draws = 100_000;
    for _ in 0..draws {
        let (e, i) = r.sample_index(&mut rng).unwrap();
        counts[e * 10 + i] += 1;
    }
    let expected = draws as f64 / 1000.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(999.0).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}");
}

proptest! {
    #[test]
    fn replay_stays_within_capacity(lens in prop::collection::vec(1usize..12, 1..40), cap in 12usize..60) {
        let mut r = ReplayMemory::new(cap);
        for (e, &len) in lens.iter().enumerate() {
            r.begin_episode();
            for i in 0..len {
                r.push((e, i), 0, 0.0, false).unwrap();
                prop_assert!(r.len() <= cap);
            }
            r.end_episode((e, len)).unwrap();
            // stored episodes are complete and the newest ones
            let stored = r.episode_lengths();
            let expect: Vec<usize> = lens[..=e].iter().rev().take(stored.len()).rev().copied().collect();
            prop_assert!(stored == expect);
            prop_assert!(stored.iter().sum::<usize>() == r.len());
        }
    }
}

#[test]
fn td_targets_bootstrap_only_live_samples() {
    let mut net = LinearQ::new(2, 2);
    net.params_mut().values_mut()[0].data_mut().copy_from_slice(&[1.0, 0.0, 0.3, 0.0]);
    let (s0, s1) = (vec![0.0, 1.0], vec![1.0, 0.0]);
    // Q(s1) = [1.0, 0.3]
    let batch = Batch {
        windows: vec![vec![&s0], vec![&s0]],
        next_windows: vec![vec![&s1], vec![&s1]],
        actions: vec![0, 0],
        rewards: vec![-0.04, 1.0],
        terminals: vec![false, true],
    };
    let y = td_targets(&batch, &net, 0.99).unwrap();
    assert!((y[0] - 0.95).abs() < 1e-15);
    assert_eq!(y[1], 1.0);
    let same = Batch {
        windows: vec![batch.windows[0].clone(); 3],
        next_windows: vec![batch.next_windows[0].clone(); 3],
        actions: vec![0; 3],
        rewards: vec![-0.04; 3],
        terminals: vec![false; 3],
    };
    let y = td_targets(&same, &net, 0.99).unwrap();
    assert!(y.iter().all(|&v| v == y[0]));
}

#[test]
fn loss_vanishes_at_the_targets_and_uses_the_mean() {
    let mut net = LinearQ::new(3, 2);
    net.params_mut().values_mut()[0]
        .data_mut()
        .copy_from_slice(&[0.5, -0.2, 0.1, 0.3, 0.7, -0.4]);
    let x = vec![1.0, 2.0, 3.0];
    let batch = Batch {
        windows: vec![vec![&x]],
        next_windows: vec![vec![&x]],
        actions: vec![1],
        rewards: vec![0.0],
        terminals: vec![true],
    };
    let q = net.q_batch(&[&[&x]]).unwrap();
    let loss = loss_and_grad(&mut net, &batch, &[q[1]]).unwrap();
    assert_eq!(loss, 0.0);
    assert!(net.params().grads()[0].data().iter().all(|&g| g == 0.0));
    let once = loss_and_grad(&mut net, &batch, &[0.25]).unwrap();
    let twice = Batch {
        windows: vec![vec![&x]; 2],
        next_windows: vec![vec![&x]; 2],
        actions: vec![1; 2],
        rewards: vec![0.0; 2],
        terminals: vec![true; 2],
    };
    assert_eq!(loss_and_grad(&mut net, &twice, &[0.25, 0.25]).unwrap(), once);
    assert!(matches!(loss_and_grad(&mut net, &batch, &[f64::INFINITY]), Err(TrainError::NonFiniteLoss)));
}

#[test]
fn td_loss_gradients_match_finite_differences() {
    for v in Variant::ALL {
        let cfg = ArchConfig::miniature(v);
        let mut rng = Rng::new(11);
        let mut net = AgentNet::new(cfg.clone(), &mut rng).unwrap();
        // dense random weights keep ReLU inputs away from their kink
        for t in net.params_mut().values_mut() {
            for v in t.data_mut() {
                *v = rng.uniform(-0.3, 0.3);
            }
        }
        let k = cfg.frames;
        let obs: Vec<Observation> = (0..2 * k).map(|_| random_obs(&cfg, &mut rng)).collect();
        let batch = Batch {
            windows: vec![obs[..k].iter().collect(), obs[k..].iter().collect()],
            next_windows: vec![obs[..k].iter().collect(), obs[k..].iter().collect()],
            actions: vec![2, 5],
            rewards: vec![0.0, 0.0],
            terminals: vec![true, true],
        };
        let y = [0.3, -0.7];
        loss_and_grad(&mut net, &batch, &y).unwrap();
        let analytic = net.params().flat_grads();
        let theta = net.params().flat_values();
        let mut probe = net.clone();
        let report = grad_check(
            |p| {
                probe.params_mut().set_flat_values(p).unwrap();
                let windows: Vec<&[&Observation]> = batch.windows.iter().map(Vec::as_slice).collect();
                let q = probe.q_batch(&windows).unwrap();
                let a = probe.actions();
                ((q[2] - y[0]).powi(2) + (q[a + 5] - y[1]).powi(2)) / 2.0
            },
            &theta,
            &analytic,
            1e-5,
        );
        assert!(report.max_rel_error <= 1e-4, "{v}: {report:?}");
    }
}

#[test]
fn zero_gradient_leaves_parameters_unchanged() {
    let mut ps = store(&[("a", vec![1.0, -2.0]), ("b", vec![0.5])]);
    let before = ps.flat_values();
    let mut st = OptimizerState::new(&ps);
    rmsprop_step(&mut ps, &mut st, &RmsPropConfig::default(), 0.01).unwrap();
    assert_eq!(ps.flat_values(), before);
}

#[test]
fn clipping_rescales_to_exactly_twenty() {
    let mut ps = store(&[("a", vec![0.0, 0.0]), ("b", vec![0.0])]);
    ps.grads_mut()[0].data_mut().copy_from_slice(&[24.0, 0.0]);
    ps.grads_mut()[1].data_mut()[0] = 32.0;
    let mut st = OptimizerState::new(&ps);
    let norm = rmsprop_step(&mut ps, &mut st, &RmsPropConfig::default(), 0.01).unwrap();
    assert_eq!(norm, 40.0);
    assert_eq!(ps.grad_norm(), 20.0);
    let mut small = store(&[("a", vec![0.0])]);
    small.grads_mut()[0].data_mut()[0] = 3.0;
    assert_eq!(clip_gradients(&mut small, 20.0), 3.0);
    assert_eq!(small.grad_norm(), 3.0);
}

#[test]
fn first_rmsprop_step_matches_hand_computation() {
    let mut ps = store(&[("a", vec![1.0])]);
    ps.grads_mut()[0].data_mut()[0] = 2.0;
    let mut st = OptimizerState::new(&ps);
    rmsprop_step(&mut ps, &mut st, &RmsPropConfig::default(), 0.1).unwrap();
    let m = 0.05 * 2.0;
    let s = 0.05 * 4.0;
    let expect = 1.0 - 0.1 * 2.0 / (s - m * m + 0.01f64).sqrt();
    assert!((ps.flat_values()[0] - expect).abs() < 1e-15);
}

#[test]
fn constant_gradient_accumulators_reach_their_fixed_point() {
    let g = 0.7;
    let mut ps = store(&[("a", vec![0.0])]);
    let mut st = OptimizerState::new(&ps);
    let cfg = RmsPropConfig::default();
    let mut m = 0.0f64;
    for n in 1..=400 {
        ps.grads_mut()[0].data_mut()[0] = g;
        rmsprop_step(&mut ps, &mut st, &cfg, 1e-3).unwrap();
        m = 0.95 * m + 0.05 * g;
        let closed = 1.0 - 0.95f64.powi(n);
        assert!((st.mean(0)[0] - m).abs() < 1e-15);
        assert!((st.mean(0)[0] - g * closed).abs() < 1e-12);
        assert!((st.mean_sq(0)[0] - g * g * closed).abs() < 1e-12);
    }
    assert!((st.mean(0)[0] - g).abs() < 1e-8);
    assert!((st.mean_sq(0)[0] - g * g).abs() < 1e-8);
}

#[test]
fn non_finite_step_is_refused_without_changes() {
    let mut ps = store(&[("a", vec![1.0])]);
    ps.grads_mut()[0].data_mut()[0] = f64::NAN;
    let mut st = OptimizerState::new(&ps);
    assert!(rmsprop_step(&mut ps, &mut st, &RmsPropConfig::default(), 0.1).is_err());
    assert_eq!(ps.flat_values(), vec![1.0]);
    assert_eq!(st, OptimizerState::new(&ps));
}

#[test]
fn soft_update_decays_the_gap_geometrically() {
    let online = store(&[("a", vec![0.3, -1.7, 0.1])]);
    let mut same = online.clone();
    soft_update(&mut same, &online, 0.999).unwrap();
    assert_eq!(same, online);

    let zero = store(&[("a", vec![0.0; 3])]);
    let mut target = store(&[("a", vec![1.0, -2.0, 0.5])]);
    let mut gaps = [1.0f64, -2.0, 0.5];
    for _ in 0..693 {
        soft_update(&mut target, &zero, 0.999).unwrap();
        gaps.iter_mut().for_each(|g| *g *= 0.999);
    }
    assert_eq!(target.flat_values(), gaps.to_vec());
    let ratio = target.flat_values()[0];
    assert!((ratio - 0.5).abs() < 1e-3, "{ratio}");

    let mut target = store(&[("a", vec![1.0, -2.0, 0.5])]);
    let gap0: f64 = [0.7f64, 0.3, 0.4].iter().map(|v| v * v).sum::<f64>().sqrt();
    for n in 1..=100 {
        soft_update(&mut target, &online, 0.999).unwrap();
        let gap: f64 = target
            .flat_values()
            .iter()
            .zip(online.flat_values())
            .map(|(t, o)| (t - o).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((gap - 0.999f64.powi(n) * gap0).abs() < 1e-12);
    }
    assert!(soft_update(&mut target, &store(&[("b", vec![0.0])]), 0.999).is_err());
}

#[test]
fn ties_break_towards_the_lowest_action() {
    assert_eq!(greedy_action(&[1.0, 3.0, 3.0, 2.0]), 1);
    assert_eq!(greedy_action(&[0.0; 6]), 0);
    assert_eq!(greedy_action(&[-1.0, -0.5]), 1);
}

#[test]
fn cached_acting_matches_fresh_windows() {
    for v in [Variant::Drqn, Variant::Mqn, Variant::Frmqn, Variant::Dqn] {
        let cfg = ArchConfig::miniature(v);
        let mut rng = Rng::new(5);
        let mut net = AgentNet::new(cfg.clone(), &mut rng).unwrap();
        let mut actor = Actor::new(cfg.frames);
        let frames: Vec<Observation> = (0..7).map(|_| random_obs(&cfg, &mut rng)).collect();
        for (t, f) in frames.iter().enumerate() {
            actor.push(f.clone());
            let window: Vec<&Observation> = (0..cfg.frames).map(|j| &frames[(t + j + 1).saturating_sub(cfg.frames)]).collect();
            assert_eq!(actor.window(), window);
            let cached = actor.q(&net).unwrap();
            let fresh = net.q_values(&window).unwrap();
            for (a, b) in cached.iter().zip(&fresh) {
                assert!((a - b).abs() < 1e-12, "{v} t={t}");
            }
            if t == 3 {
                net.params_mut().values_mut()[0].data_mut()[0] += 0.5;
                actor.invalidate();
            }
        }
    }
}

#[test]
fn exploiting_actions_are_greedy_on_q_values() {
    let env = chain();
    let mut net = LinearQ::new(5, 2);
    let mut rng = Rng::new(2);
    for v in net.params_mut().values_mut()[0].data_mut() {
        *v = rng.uniform(-1.0, 1.0);
    }
    let mut cfg = chain_config(0);
    cfg.eps_start = 0.0;
    cfg.eps_end = 0.0;
    cfg.learn_start = u64::MAX;
    let mut learner = Learner::new(net.clone(), &cfg, &Rng::new(1)).unwrap();
    let mut env = env;
    learner.run(&mut env, 200).unwrap();
    let r = learner.replay();
    let mut checked = 0;
    for e in 0..r.num_episodes() {
        for i in 0..r.episode_lengths()[e] {
            let t = r.transition(e, i).unwrap();
            let q = net.q_batch(&[&[&t.obs]]).unwrap();
            assert_eq!(t.action, greedy_action(&q));
            checked += 1;
        }
    }
    assert_eq!(checked, 200);
}

#[test]
fn chain_mdp_recovers_the_value_iteration_policy() {
    let env = chain();
    let oracle = value_iteration(&env, 0.9);
    let policy: Vec<usize> = (1..4).map(|s| greedy_action(&oracle[s])).collect();
    assert_eq!(policy, vec![0, 1, 1], "oracle policy mixes directions");
    for seed in 0..3 {
        let cfg = chain_config(seed);
        let mut learner = Learner::new(LinearQ::new(5, 2), &cfg, &Rng::new(seed)).unwrap();
        let mut e = chain();
        learner.run(&mut e, 50_000).unwrap();
        let net = learner.online();
        for s in 1..4 {
            let x = env.one_hot(s);
            let q = net.q_batch(&[&[&x]]).unwrap();
            assert_eq!(greedy_action(&q), greedy_action(&oracle[s]), "seed {seed} state {s}: {q:?} vs {:?}", oracle[s]);
        }
    }
}

#[test]
fn learner_updates_on_schedule() {
    let cfg = chain_config(1);
    let mut learner = Learner::new(LinearQ::new(5, 2), &cfg, &Rng::new(1)).unwrap();
    let mut env = chain();
    learner.run(&mut env, 400).unwrap();
    let stats = learner.take_stats();
    // updates start once 32 windows are eligible, then every 4 steps
    assert!(stats.updates > 80 && stats.updates <= 100, "{}", stats.updates);
    assert!(stats.episodes > 0);
    assert_ne!(learner.online().params(), learner.target().params());
    assert_eq!(learner.take_stats(), EpochStats::default());
}

#[test]
fn training_runs_are_deterministic() {
    let mut cfg = TrainConfig::new(Task::IMaze, Variant::Drqn);
    cfg.profile = Profile::Desk;
    cfg.frames = 3;
    cfg.mem_size = 0;
    cfg.steps = 120;
    cfg.epoch_steps = 50;
    cfg.batch = 4;
    cfg.eval_episodes = 2;
    cfg.seed = 4;
    let maps = imaze_set(&[3]).unwrap();
    let a = train_on_maps(&cfg, maps.clone(), None, &mut |_| {}).unwrap();
    let b = train_on_maps(&cfg, maps, None, &mut |_| {}).unwrap();
    assert_eq!(a.records.len(), 3);
    assert_eq!(a.records.last().unwrap().step, 120);
    assert_eq!(a.metrics_log(), b.metrics_log());
    assert_eq!(a.net.params(), b.net.params());
}

#[test]
fn training_writes_metrics_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = TrainConfig::new(Task::IMaze, Variant::Mqn);
    cfg.profile = Profile::Desk;
    cfg.frames = 3;
    cfg.mem_size = 2;
    cfg.steps = 60;
    cfg.epoch_steps = 30;
    cfg.batch = 4;
    cfg.eval_episodes = 1;
    let out = train_on_maps(&cfg, imaze_set(&[3]).unwrap(), Some(dir.path()), &mut |_| {}).unwrap();
    let log = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(log, out.metrics_log());
    assert!(dir.path().join("latest.ckpt").is_file());
    assert!(dir.path().join("best.ckpt").is_file());
    assert_eq!(TrainConfig::load(&dir.path().join("config.txt")).unwrap(), cfg);
    let wrong = imaze_set(&[3]).unwrap();
    let mut other = cfg.clone();
    other.task = Task::Single;
    assert!(train_on_maps(&other, wrong, None, &mut |_| {}).is_err());
    assert!(matches!(train(&cfg), Err(TrainError::Config(_))));
}
