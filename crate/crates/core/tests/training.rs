mod common;

use std::sync::Arc;

use common::{episode_segments, er_graph, small_arch};
use cutflip_core::agent::{AgentParams, ArchConfig};
use cutflip_core::training::{soft_update, train, train_step, Adam, ReplayBuffer, TrainConfig, ValidationInstance};
use cutflip_core::{brute_force_max_cut, Error, Graph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_config() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        bptt_length: 3,
        graphs_per_batch: 4,
        update_frequency: 2,
        validation_interval: 10,
        log_interval: 5,
        arch: small_arch(),
        ..TrainConfig::default()
    }
}

fn filled_buffer(cfg: &TrainConfig, seed: u64) -> ReplayBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buffer = ReplayBuffer::new(200).unwrap();
    for _ in 0..4 {
        let graph = Arc::new(er_graph(7, 0.5, &[-1, 1], &mut rng));
        for seg in episode_segments(&graph, 14, cfg.bptt_length, cfg.arch.hidden_dim, &mut rng) {
            buffer.push((*seg).clone());
        }
    }
    buffer
}

#[test]
fn train_step_is_deterministic_under_a_seed() {
    let cfg = small_config();
    let buffer = filled_buffer(&cfg, 1);
    let run = || {
        let mut online = AgentParams::<f32>::init(cfg.arch, &mut ChaCha8Rng::seed_from_u64(9));
        let target = online.clone();
        let mut adam = Adam::new(&online, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let losses: Vec<f64> = (0..3)
            .map(|_| train_step(&mut online, &target, &mut adam, &buffer, &cfg, &mut rng).unwrap())
            .collect();
        (losses, online)
    };
    let (l1, p1) = run();
    let (l2, p2) = run();
    assert_eq!(l1, l2);
    assert_eq!(p1, p2);
    assert!(l1.iter().all(|l| l.is_finite()));
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..small_config()
    };
    let buffer = filled_buffer(&cfg, 2);
    let mut online = AgentParams::<f32>::init(cfg.arch, &mut ChaCha8Rng::seed_from_u64(3));
    let before = online.clone();
    let target = online.clone();
    let mut adam = Adam::new(&online, &cfg);
    let loss = train_step(&mut online, &target, &mut adam, &buffer, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert!(loss.is_finite() && loss >= 0.0);
    assert_eq!(online, before);
}

#[test]
fn soft_update_endpoints_and_convergence() {
    let arch = small_arch();
    let online = AgentParams::<f64>::init(arch, &mut ChaCha8Rng::seed_from_u64(1));
    let start = AgentParams::<f64>::init(arch, &mut ChaCha8Rng::seed_from_u64(2));

    let mut target = start.clone();
    soft_update(&mut target, &online, 0.0).unwrap();
    assert_eq!(target, start);
    soft_update(&mut target, &online, 1.0).unwrap();
    assert_eq!(target, online);

    // After k updates at rate r the distance to the online weights shrinks by (1 - r)^k.
    let mut target = start.clone();
    let k = 50;
    for _ in 0..k {
        soft_update(&mut target, &online, 0.01).unwrap();
    }
    let factor = 0.99f64.powi(k);
    for ((name, t), ((_, o), (_, s))) in target.tensors().into_iter().zip(online.tensors().into_iter().zip(start.tensors())) {
        for ((&t, &o), &s) in t.iter().zip(o.iter()).zip(s.iter()) {
            let expected = o + factor * (s - o);
            assert!((t - expected).abs() < 1e-12, "{name}: {t} vs {expected}");
        }
    }
}

#[test]
fn soft_update_rejects_mismatched_shapes_and_rates() {
    let a = AgentParams::<f64>::init(small_arch(), &mut ChaCha8Rng::seed_from_u64(1));
    let wider = ArchConfig {
        hidden_dim: small_arch().hidden_dim + 1,
        ..small_arch()
    };
    let mut b = AgentParams::<f64>::init(wider, &mut ChaCha8Rng::seed_from_u64(1));
    assert!(matches!(soft_update(&mut b, &a, 0.5), Err(Error::Shape { .. })));
    let mut c = a.clone();
    assert!(soft_update(&mut c, &a, 1.5).is_err());
}

#[test]
fn replay_sampling_is_deterministic_under_a_seed() {
    let cfg = small_config();
    let buffer = filled_buffer(&cfg, 7);
    let draw = |seed| {
        let batch = buffer.sample(16, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        batch.iter().map(|s| (s.actions.clone(), s.reward)).collect::<Vec<_>>()
    };
    assert_eq!(draw(11), draw(11));
    assert_ne!(draw(11), draw(12));
}

fn tiny_validation(seed: u64) -> Vec<ValidationInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..3)
        .map(|_| {
            let graph: Graph = er_graph(8, 0.5, &[-1, 1], &mut rng);
            let reference_cut = brute_force_max_cut(&graph).unwrap().best_cut.max(1);
            ValidationInstance { graph, reference_cut }
        })
        .collect()
}

#[test]
fn zero_training_steps_return_the_initialization() {
    let cfg = TrainConfig {
        number_of_training_steps: 0,
        ..small_config()
    };
    let out = train::<f32, _, _>(&cfg, |rng| Ok(er_graph(6, 0.5, &[1], rng)), &[], |_| {}).unwrap();
    assert!(out.log.is_empty());
    assert_eq!(out.final_params, out.best_params);
    let init = AgentParams::<f32>::init(cfg.arch, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    assert_eq!(out.final_params, init);
}

#[test]
fn short_training_runs_reproduce_and_log() {
    let cfg = TrainConfig {
        number_of_training_steps: 20,
        buffer_size: 500,
        ..small_config()
    };
    let validation = tiny_validation(3);
    let run = || {
        let mut records = 0;
        let out = train::<f32, _, _>(&cfg, |rng| Ok(er_graph(8, 0.4, &[-1, 1], rng)), &validation, |_| records += 1)
            .unwrap();
        (out, records)
    };
    let (a, ra) = run();
    let (b, _) = run();
    assert_eq!(a.final_params, b.final_params);
    assert_eq!(a.best_params, b.best_params);
    assert_eq!(a.log.len(), ra);
    assert_eq!(a.log.last().unwrap().step, 20);
    assert!(a.log.iter().any(|r| r.loss.is_some()), "no update happened");
    let best = a.best_validation_ar.unwrap();
    assert!((0.0..=1.0).contains(&best));
    assert!(a.final_params.is_finite());
}
