use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thz360_core::fusion::great_circle;
use thz360_core::harness::{build_scenario, ExperimentConfig};
use thz360_core::headpred::*;
use thz360_core::phy::HeadPose;
use thz360_core::traces::{generate_trace, HeadTrace, Persona};

fn small_cfg() -> HeadModelConfig {
    HeadModelConfig {
        gru_layers: 1,
        hidden: 6,
        q_hist: 8,
        q_pred: 6,
    }
}

fn trace(user: u32, persona: &Persona, frames: usize, seed: u64) -> HeadTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = (PI / 2.0, rng.random_range(0.0..2.0 * PI));
    HeadTrace {
        user,
        video: 0,
        poses: generate_trace(persona, None, base, frames, &mut rng),
    }
}

fn toy_data(n_users: usize, seed: u64) -> Vec<UserData> {
    let cfg = small_cfg();
    let traces: Vec<HeadTrace> = (0..n_users)
        .map(|u| trace(u as u32, &Persona::preset(u), 120 + 30 * u, seed + u as u64))
        .collect();
    build_dataset(&traces, cfg.q_hist, cfg.q_pred, 7, 30)
}

fn init_model(seed: u64) -> HeadModel {
    HeadModel::random(small_cfg(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn zero_model_repeats_last_pose() {
    let m = HeadModel::zeros(small_cfg()).unwrap();
    let hist: Vec<HeadPose> = (0..8).map(|k| HeadPose::new(1.0 + 0.01 * k as f64, 0.3 * k as f64)).collect();
    let out = m.predict(&hist).unwrap();
    assert_eq!(out.len(), 6);
    for p in out {
        assert!((p.theta - hist[7].theta).abs() < 1e-15);
        assert!((p.phi - hist[7].phi).abs() < 1e-12);
    }
    assert!(m.predict(&hist[1..]).is_err());
}

#[test]
fn loss_examples() {
    let a: Vec<HeadPose> = (0..10).map(|k| HeadPose::new(1.0, 0.1 * k as f64)).collect();
    assert_eq!(head_loss(&[a.clone()], &[a.clone()]), 0.0);
    let d = 0.05;
    let b: Vec<HeadPose> = a.iter().map(|p| HeadPose::new(p.theta + d, p.phi + d)).collect();
    assert!((head_loss(&[b], &[a]) - 10.0 * 2.0 * d * d).abs() < 1e-12);
}

#[test]
fn aggregation_examples() {
    assert_eq!(aggregate(&[vec![0.0], vec![2.0]], &[0.5, 0.5]).unwrap(), vec![1.0]);
    let w = vec![0.3, -1.2, 4.0];
    assert_eq!(aggregate(&[w.clone(), w.clone()], &[0.25, 0.75]).unwrap(), w);
    assert!(aggregate(&[w.clone()], &[0.5, 0.5]).is_err());
    assert!(aggregate(&[w.clone(), w.clone()], &[0.5, 0.6]).is_err());
}

#[test]
fn aggregation_weights_follow_chunk_share() {
    let data = toy_data(3, 1);
    let alpha = aggregation_weights(&data).unwrap();
    assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    let chunks: Vec<usize> = data.iter().map(|d| d.chunk_count).collect();
    assert_eq!(chunks, vec![4, 5, 6]);
    for (a, c) in alpha.iter().zip(&chunks) {
        assert_eq!(*a, *c as f64 / 15.0);
    }
}

#[test]
fn prediction_horizon_formula() {
    assert_eq!(prediction_horizon(30, 30, 10), 120);
    assert_eq!(prediction_horizon(30, 20, 10), 90);
}

#[test]
fn frozen_head_during_rounds() {
    let data = toy_data(3, 2);
    let init = init_model(3);
    let fc0 = init.fc_params().to_vec();
    let mut t = PflTrainer::new(&init, &data, PflConfig::default()).unwrap();
    for _ in 0..50 {
        let locals = t.round(&data).unwrap();
        for m in &locals {
            assert_eq!(m.fc_params(), fc0.as_slice());
        }
    }
    for fc in &t.user_fc {
        assert_eq!(fc, &fc0);
    }
    assert_ne!(t.global_gru, init.gru_params());
}

#[test]
fn single_user_pfl_is_gradient_descent() {
    let data = toy_data(1, 4);
    let init = init_model(5);
    let cfg = PflConfig {
        rounds: 20,
        local_iters: 1,
        lr: 1e-3,
        ..PflConfig::default()
    };
    let mut t = PflTrainer::new(&init, &data, cfg.clone()).unwrap();
    let mut central = init.clone();
    for _ in 0..cfg.rounds {
        t.round(&data).unwrap();
        let (_, g) = central.batch_loss_grad(&data[0].samples).unwrap();
        let n = central.gru_params().len();
        let p: Vec<f64> = central.gru_params().iter().zip(&g[..n]).map(|(w, d)| w - cfg.lr * d).collect();
        central.set_gru_params(&p).unwrap();
        assert_eq!(t.global_gru, central.gru_params());
    }
}

#[test]
fn one_step_rounds_average_gradient_steps() {
    let mut data = toy_data(2, 6);
    let k = data[0].chunk_count;
    data[1].chunk_count = k;
    let init = init_model(7);
    let lr = 1e-3;
    let mut t = PflTrainer::new(
        &init,
        &data,
        PflConfig {
            local_iters: 1,
            lr,
            ..PflConfig::default()
        },
    )
    .unwrap();
    t.round(&data).unwrap();
    let n = init.gru_params().len();
    let g0 = init.batch_loss_grad(&data[0].samples).unwrap().1;
    let g1 = init.batch_loss_grad(&data[1].samples).unwrap().1;
    for i in 0..n {
        let expected = init.gru_params()[i] - lr * 0.5 * (g0[i] + g1[i]);
        assert!((t.global_gru[i] - expected).abs() < 1e-12);
    }
}

#[test]
fn identical_users_get_identical_models() {
    let one = toy_data(1, 8);
    let mut data = vec![one[0].clone(), one[0].clone(), one[0].clone()];
    for (u, d) in data.iter_mut().enumerate() {
        d.user = u as u32;
    }
    let init = init_model(9);
    let cfg = PflConfig {
        rounds: 3,
        ..PflConfig::default()
    };
    let models = train_pfl(&init, &data, &cfg).unwrap();
    assert_eq!(models[0], models[1]);
    assert_eq!(models[1], models[2]);
}

#[test]
fn single_user_fedavg_is_full_gradient_descent() {
    let data = toy_data(1, 8);
    let init = init_model(9);
    let cfg = PflConfig {
        rounds: 5,
        local_iters: 2,
        lr: 1e-3,
        ..PflConfig::default()
    };
    let shared = train_fedavg(&init, &data, &cfg).unwrap();
    let mut central = init.clone();
    for _ in 0..cfg.rounds * cfg.local_iters {
        central.full_step(&data[0].samples, cfg.lr).unwrap();
    }
    assert_eq!(shared.all_params(), central.all_params());
}

#[test]
fn training_reduces_error_on_steady_trace() {
    let persona = Persona {
        follow: None,
        offset: (0.0, 0.0),
        pull: 0.1,
        drift: 0.0,
        noise: 0.0,
    };
    let data = build_dataset(&[trace(0, &persona, 200, 10)], 8, 6, 5, 30);
    let mut m = init_model(11);
    let before = m.loss(&data[0].samples).unwrap();
    for _ in 0..200 {
        m.full_step(&data[0].samples, 1e-2).unwrap();
    }
    assert!(m.loss(&data[0].samples).unwrap() < before);
}

#[test]
fn loss_falls_monotonically_on_linear_motion() {
    let poses: Vec<HeadPose> = (0..120).map(|f| HeadPose::new(PI / 2.0, 0.01 * f as f64)).collect();
    let data = build_dataset(
        &[HeadTrace {
            user: 0,
            video: 0,
            poses,
        }],
        8,
        6,
        4,
        30,
    );
    let mut m = init_model(12);
    let mut prev = m.loss(&data[0].samples).unwrap();
    for step in 0..50 {
        m.full_step(&data[0].samples, 1e-3).unwrap();
        let l = m.loss(&data[0].samples).unwrap();
        assert!(l <= prev, "step {step}: {l} > {prev}");
        prev = l;
    }
}

#[test]
fn trace_generation_examples() {
    let still = Persona {
        follow: None,
        offset: (0.0, 0.0),
        pull: 0.1,
        drift: 0.0,
        noise: 0.0,
    };
    let t = trace(0, &still, 50, 1);
    assert!(t.poses.iter().all(|p| p == &t.poses[0]));
    assert_eq!(trace(0, &Persona::preset(2), 80, 3), trace(0, &Persona::preset(2), 80, 3));

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = generate_trace(&Persona::preset(0), None, (PI / 2.0, 0.0), 300, &mut rng);
    let b = generate_trace(&Persona::preset(1), None, (PI / 2.0, 0.0), 300, &mut rng);
    let sep: f64 = a
        .iter()
        .zip(&b)
        .map(|(p, q)| great_circle((p.theta, p.phi), (q.theta, q.phi)))
        .sum::<f64>()
        / 300.0;
    assert!(sep > 1.0, "mean separation {sep}");
}

#[test]
fn checkpoint_round_trip() {
    let m = init_model(13);
    let mut buf = Vec::new();
    m.write(&mut buf).unwrap();
    assert_eq!(HeadModel::read(buf.as_slice()).unwrap(), m);
}

/// Mean per-user test loss of personalised models and of the shared FedAvg model.
fn pfl_vs_fedavg(seed: u64) -> (f64, f64) {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = seed;
    cfg.scenario.n_users = 4;
    cfg.video.n_chunks = 12;
    let data = build_scenario(&cfg).unwrap();
    let mcfg = HeadModelConfig {
        gru_layers: 1,
        hidden: 8,
        q_hist: 15,
        q_pred: 15,
    };
    let train = build_dataset(&data.train_traces, mcfg.q_hist, mcfg.q_pred, 10, 30);
    let test = build_dataset(&data.test_traces, mcfg.q_hist, mcfg.q_pred, 10, 30);
    let init = HeadModel::random(mcfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let pcfg = PflConfig {
        rounds: 30,
        local_iters: 3,
        lr: 1e-2,
        finetune_steps: 10,
        finetune_lr: 1e-2,
    };
    let personal = train_pfl(&init, &train, &pcfg).unwrap();
    let shared = train_fedavg(&init, &train, &pcfg).unwrap();
    let mut p = 0.0;
    let mut f = 0.0;
    for (u, d) in test.iter().enumerate() {
        p += personal[u].loss(&d.samples).unwrap();
        f += shared.loss(&d.samples).unwrap();
    }
    (p / 4.0, f / 4.0)
}

#[test]
fn personalised_models_beat_shared_model() {
    let start = std::time::Instant::now();
    let wins = (1..=10)
        .filter(|&s| {
            let (p, f) = pfl_vs_fedavg(s);
            p < f
        })
        .count();
    assert!(wins >= 8, "PFL better in {wins}/10 seeds");
    assert!(start.elapsed().as_secs() < 300);
}

proptest! {
    #[test]
    fn aggregation_permutation_invariant(seed in any::<u64>(), n in 1usize..6, len in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let models: Vec<Vec<f64>> = (0..n).map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let alpha: Vec<f64> = raw.iter().map(|a| a / s).collect();
        let base = aggregate(&models, &alpha).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.reverse();
        order.rotate_left(seed as usize % n);
        let pm: Vec<Vec<f64>> = order.iter().map(|&i| models[i].clone()).collect();
        let pa: Vec<f64> = order.iter().map(|&i| alpha[i]).collect();
        let perm = aggregate(&pm, &pa).unwrap();
        for (a, b) in base.iter().zip(&perm) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        if n == 1 {
            prop_assert_eq!(aggregate(&models[..1], &[1.0]).unwrap(), models[0].clone());
        }
    }

    #[test]
    fn loss_is_non_negative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mk = |rng: &mut ChaCha8Rng| -> Vec<HeadPose> {
            (0..5).map(|_| HeadPose::new(rng.random_range(0.0..PI), rng.random_range(0.0..2.0 * PI))).collect()
        };
        let a = mk(&mut rng);
        let b = mk(&mut rng);
        prop_assert!(sequence_sq_error(&a, &b) >= 0.0);
    }

    #[test]
    fn predictions_stay_in_range(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = HeadModel::random(small_cfg(), &mut rng).unwrap();
        let hist: Vec<HeadPose> = (0..8).map(|_| HeadPose::new(rng.random_range(0.0..PI), rng.random_range(0.0..2.0 * PI))).collect();
        for p in m.predict(&hist).unwrap() {
            prop_assert!((0.0..=PI).contains(&p.theta));
            prop_assert!((0.0..2.0 * PI).contains(&p.phi));
        }
    }
}
