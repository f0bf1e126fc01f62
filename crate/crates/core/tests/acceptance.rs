//! One PASS/FAIL line per acceptance criterion, written straight to stdout
//! so the lines show up without `--nocapture`.

mod common;

use std::f64::consts::PI;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::Spec;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thz360_core::baselines::*;
use thz360_core::env::Env;
use thz360_core::fusion::*;
use thz360_core::harness::*;
use thz360_core::hddpg::*;
use thz360_core::headpred::*;
use thz360_core::phy::*;
use thz360_core::policy::{run_episode, BeamPolicy, RandomBeams, RandomMacro};
use thz360_core::predictor::PersistencePredictor;
use thz360_core::replay::*;
use thz360_core::streaming::*;
use thz360_core::traces::{generate_trace, HeadTrace, Persona};
use thz360_neural::gradcheck::{linear_probe_loss, max_relative_error, numeric_param_grad};
use thz360_neural::{Activation, LayerSpec, NetworkParams};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn phy_with(n_tx: usize, n_rx: usize) -> Phy {
    Phy::new(&PhyConfig {
        n_tx,
        n_rx,
        ..PhyConfig::default()
    })
    .unwrap()
}

fn channel() -> Outcome {
    // 50-digit evaluation of c0 / (4 pi f d) * exp(-kappa d / 2) at d = 1 m.
    let reference = 2.188_312_993_660_523_062e-5;
    let phy = Phy::new(&PhyConfig::default()).unwrap();
    let g = path_gain(&[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0], &phy).unwrap();
    ensure!(rel(g, reference) < 1e-12, "path gain {g} vs {reference}");

    let phy = phy_with(1, 1);
    let geo = Geometry {
        ap_positions: vec![[5.0, 5.0, 4.0]],
        user_positions: vec![[3.0, 4.0, 1.6]],
        phi_blocked: PI,
    };
    let channels = ChannelSet::build(&geo, &[HeadPose::new(PI / 2.0, 0.0)], &phy).unwrap();
    let nb = vec![vec![true]];
    let h = channels.get(0, 0)[(0, 0)].norm();
    let mut worst = 0.0f64;
    for p in [1e-6, 1e-4, phy.p_max] {
        let mut beams = BeamSet::zeros(1, 1, 1);
        beams.get_mut(0, 0)[0] = nalgebra::Complex::new(p.sqrt(), 0.0);
        let r = user_rate(0, &beams, &channels, &nb, &phy).unwrap();
        worst = worst.max(rel(r, phy.bandwidth * (1.0 + h * h * p / phy.noise).log2()));
    }
    ensure!(worst < 1e-9, "SISO rate rel err {worst:e}");
    Ok(format!("gain rel err {:.1e}, SISO rel err {worst:.1e}", rel(g, reference)))
}

/// Received signal and interference for `user`, then `B log2(1 + d^H (I I^H + N)^-1 d)` by LU.
fn dense_rate(user: usize, beams: &BeamSet, ch: &ChannelSet, nb: &[Vec<bool>], phy: &Phy) -> f64 {
    let n_rx = ch.get(user, 0).ncols();
    let recv = |from: usize| {
        let mut d = DVector::<C64>::zeros(n_rx);
        for a in 0..ch.n_aps() {
            if nb[user][a] && nb[from][a] {
                d += ch.get(user, a).adjoint() * beams.get(from, a);
            }
        }
        d
    };
    let d = recv(user);
    let mut cov = DMatrix::<C64>::identity(n_rx, n_rx) * C64::new(phy.noise, 0.0);
    for j in 0..ch.n_users() {
        if j != user {
            let i = recv(j);
            cov += &i * i.adjoint();
        }
    }
    let x = cov.lu().solve(&d).unwrap();
    phy.bandwidth * (1.0 + d.dotc(&x).re).log2()
}

fn rate_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let phy = phy_with(4, 2);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let geo = Geometry {
            ap_positions: common::APS.to_vec(),
            user_positions: (0..2)
                .map(|_| [rng.random_range(0.5..9.5), rng.random_range(0.5..9.5), 1.6])
                .collect(),
            phi_blocked: PI,
        };
        let poses: Vec<HeadPose> = (0..2)
            .map(|_| HeadPose::new(rng.random_range(0.0..PI), rng.random_range(0.0..2.0 * PI)))
            .collect();
        let channels = ChannelSet::build(&geo, &poses, &phy).unwrap();
        let nb = nonblocked_all(&poses, &geo);
        let raw: Vec<f64> = (0..2 * 2 * 3 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let beams = project_power(BeamSet::from_real_pairs(&raw, 2, 3, 4, 0.05).unwrap(), phy.p_max);
        for u in 0..2 {
            let r = user_rate(u, &beams, &channels, &nb, &phy).unwrap();
            let o = dense_rate(u, &beams, &channels, &nb, &phy);
            worst = worst.max((r - o).abs() / o.abs().max(1.0));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(worst < 1e-6, "rel err {worst:e}");
    ensure!(secs < 1.0, "took {secs:.2} s");
    Ok(format!("max rel err {worst:.1e} in {secs:.3} s"))
}

fn blockage() -> Outcome {
    let geo = ExperimentConfig::default().geometry();
    ensure!(geo.phi_blocked == PI, "blocked width {}", geo.phi_blocked);
    let steps = 3600;
    let dphi = 2.0 * PI / steps as f64;
    let mut transitions = 0;
    for u in 0..geo.n_users() {
        let masks: Vec<Vec<bool>> = (0..steps)
            .map(|k| nonblocked_aps(&HeadPose::new(PI / 2.0, k as f64 * dphi), u, &geo))
            .collect();
        for a in 0..geo.n_aps() {
            let phi_ua = azimuth(&geo.user_positions[u], &geo.ap_positions[a]);
            let edges = [
                (phi_ua + PI / 2.0).rem_euclid(2.0 * PI),
                (phi_ua + 3.0 * PI / 2.0).rem_euclid(2.0 * PI),
            ];
            let found: Vec<usize> = (0..steps)
                .filter(|&k| masks[k][a] != masks[(k + steps - 1) % steps][a])
                .collect();
            ensure!(found.len() == 2, "user {u} AP {a}: {} transitions", found.len());
            for k in found {
                let hi = k as f64 * dphi;
                let near = edges.iter().any(|&e| {
                    let e = if e > hi + 1e-12 { e - 2.0 * PI } else { e };
                    e > hi - dphi - 1e-9 && e <= hi + 1e-9
                });
                ensure!(near, "user {u} AP {a}: transition at step {k} not at {edges:?}");
                transitions += 1;
            }
        }
    }
    Ok(format!("{transitions} transitions, all within one step of the edges"))
}

/// Slot-by-slot playback at a constant rate. Returns (td, wt, buffer, t) per chunk.
fn simulate_chunk(t: &mut usize, buffer: &mut usize, bits: f64, rate: f64, chunk: usize, thr: usize) -> (usize, usize) {
    let (mut got, mut td) = (0.0, 0);
    loop {
        td += 1;
        *t += 1;
        got += rate * 0.1;
        *buffer = buffer.saturating_sub(1);
        if got >= bits || bits <= 0.0 {
            break;
        }
    }
    *buffer += chunk;
    let mut wt = 0;
    while *buffer > thr {
        *buffer -= 1;
        *t += 1;
        wt += 1;
    }
    (td, wt)
}

fn streaming() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let vc = VideoConfig::default();
    ensure!(vc.slot_seconds == 0.1, "slot length {}", vc.slot_seconds);
    for case in 0..1000 {
        let chunk = rng.random_range(1..=15);
        let thr = chunk * rng.random_range(1..=4) + rng.random_range(0..chunk);
        let rate = rng.random_range(1e6..6e8);
        let (mut t, mut buffer) = (0, 0);
        let mut st = UserStreamState::new(thr);
        for _ in 0..8 {
            ensure!(st.buffer_slots <= thr, "case {case}: buffer {} > {thr}", st.buffer_slots);
            let sel: Vec<u8> = (0..24).map(|_| rng.random_range(0..=5)).collect();
            let bits = chunk_size_bits(&sel, &vc);
            let td = transmission_delay(&vec![rate; 10_000], bits, vc.slot_seconds).unwrap();
            let closed = ((bits / (vc.slot_seconds * rate)).ceil() as usize).max(1);
            ensure!(td == closed, "case {case}: td {td} vs {closed}");
            let wt = waiting_time(st.buffer_slots, td, chunk, thr);
            let next = st.advance_request(td, wt, chunk);
            let sim = simulate_chunk(&mut t, &mut buffer, bits, rate, chunk, thr);
            ensure!(
                (td, wt, next.buffer_slots, next.t_req) == (sim.0, sim.1, buffer, t),
                "case {case}: recurrence {:?} vs simulator {:?}",
                (td, wt, next.buffer_slots, next.t_req),
                (sim.0, sim.1, buffer, t)
            );
            st = next;
        }
    }
    Ok("1000 scenarios x 8 chunks match the simulator".into())
}

fn qoe() -> Outcome {
    let r = qoe_chunk(&[3, 3, 3], &[0, 1, 2], None, 0, &QoeConfig::default()).unwrap();
    ensure!(r.qoe == 3.0, "flat chunk QoE {}", r.qoe);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let qc = QoeConfig {
            lambda_spatial: rng.random_range(0.0..2.0),
            lambda_temp: rng.random_range(0.0..2.0),
            lambda_rd: rng.random_range(0.0..2.0),
        };
        let sel: Vec<u8> = (0..24).map(|_| rng.random_range(0..=5)).collect();
        let k = rng.random_range(1..=24);
        let actual: Vec<usize> = rand::seq::index::sample(&mut rng, 24, k).into_iter().collect();
        let prev = rng.random_bool(0.5).then(|| rng.random_range(0.0..5.0));
        let rd = rng.random_range(0..20);
        let r = qoe_chunk(&sel, &actual, prev, rd, &qc).unwrap();
        let lv: Vec<f64> = actual.iter().map(|&n| sel[n] as f64).collect();
        let mean = lv.iter().sum::<f64>() / lv.len() as f64;
        let var = lv.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / lv.len() as f64;
        let temp = prev.map_or(0.0, |p: f64| (mean - p).abs());
        let expected = mean - qc.lambda_spatial * var - qc.lambda_temp * temp - qc.lambda_rd * rd as f64;
        worst = worst.max((r.qoe - expected).abs());
    }
    ensure!(worst < 1e-12, "max abs err {worst:e}");
    Ok(format!("flat chunk 3.0, max abs err {worst:.1e}"))
}

fn random_net(seed: u64) -> (NetworkParams, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let acts = [Activation::Identity, Activation::LeakyRelu, Activation::Tanh, Activation::Sigmoid];
    let input = rng.random_range(1..=4);
    let mut layers = Vec::new();
    for _ in 0..rng.random_range(1..=4) {
        layers.push(if rng.random_bool(0.5) {
            LayerSpec::Gru { hidden: rng.random_range(1..=5) }
        } else {
            LayerSpec::Fc { out: rng.random_range(1..=5) }
        });
        if rng.random_bool(0.6) {
            layers.push(LayerSpec::Act(acts[rng.random_range(0..acts.len())]));
        }
    }
    let net = NetworkParams::new_random(input, layers, &mut rng).unwrap();
    let steps = rng.random_range(1..=4);
    let xs = (0..steps).map(|_| (0..input).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let ws = (0..steps).map(|_| (0..net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    (net, xs, ws)
}

/// Relative error with a floor at 1e-4 of the largest entry (at least 1e-6),
/// above the round-off of the differences.
fn scaled_rel_err(a: &[f64], n: &[f64]) -> f64 {
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = (1e-4 * scale).max(1e-6);
    a.iter()
        .zip(n)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

fn central_diff(net: &NetworkParams, f: impl Fn(&NetworkParams) -> f64) -> Vec<f64> {
    let h = 1e-6;
    let mut probe = net.clone();
    (0..net.len())
        .map(|i| {
            let x = probe.params()[i];
            probe.params_mut()[i] = x + h;
            let up = f(&probe);
            probe.params_mut()[i] = x - h;
            let down = f(&probe);
            probe.params_mut()[i] = x;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn gradients() -> Outcome {
    let mut worst_net = 0.0f64;
    for seed in 0..100 {
        let (net, xs, ws) = random_net(seed);
        let pass = net.forward(&xs, None, None).unwrap();
        let analytic = net.backward(&pass, &ws, None).unwrap();
        let numeric = numeric_param_grad(&net, 1e-5, |n| linear_probe_loss(n, &xs, &ws)).unwrap();
        worst_net = worst_net.max(max_relative_error(&analytic.params, &numeric, 1e-6));
    }
    ensure!(worst_net < 1e-4, "FC/GRU rel err {worst_net:e}");

    let sizes = NetSizes { hidden: 5, fc: 6, out: 4 };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let mut worst_td = 0.0f64;
    for _ in 0..5 {
        let nets: Vec<AgentNets> = (0..2)
            .map(|_| ActorCritic::new(4, 3, 2 * 7, sizes, 1e-3, 1e-3, &mut rng).unwrap())
            .collect();
        let slot = MacSlot {
            episode: 0,
            t: 0,
            terminal: false,
            r_extr: 0.0,
            agents: (0..2)
                .map(|u| MacroTransition {
                    agent: u,
                    obs: v(&mut rng, 4),
                    action: v(&mut rng, 3),
                    next_obs: v(&mut rng, 4),
                    cum_reward: rng.random_range(-3.0..3.0),
                    duration: rng.random_range(1..8),
                    completed: true,
                })
                .collect(),
        };
        let window = Window { items: vec![&slot], resets: vec![false] };
        let next = macro_next_inputs(&nets, &window).unwrap();
        for u in 0..2 {
            let y = macro_targets(&nets, u, &window, &next, 0.99).unwrap();
            let (_, g) = macro_critic_loss(&nets, u, &window, &y).unwrap();
            let fd = central_diff(&nets[u].critic, |c| {
                let mut probe = nets.clone();
                probe[u].critic = c.clone();
                macro_critic_loss(&probe, u, &window, &y).unwrap().0
            });
            worst_td = worst_td.max(scaled_rel_err(&g, &fd));
        }

        let joint = ActorCritic::new(5, 4, 5 + 4 + 6, sizes, 1e-3, 1e-3, &mut rng).unwrap();
        let tr = PrimTransition {
            episode: 0,
            obs: v(&mut rng, 5),
            action: v(&mut rng, 4),
            reward: rng.random_range(-2.0..2.0),
            macro_joint: v(&mut rng, 6),
            next_obs: v(&mut rng, 5),
            next_macro_joint: v(&mut rng, 6),
            terminal: false,
        };
        let window = Window { items: vec![&tr], resets: vec![false] };
        let y = prim_targets(&joint, &window, 0.99).unwrap();
        let (_, g) = prim_critic_loss(&joint, &window, &y).unwrap();
        let fd = central_diff(&joint.critic, |c| {
            let mut probe = joint.clone();
            probe.critic = c.clone();
            prim_critic_loss(&probe, &window, &y).unwrap().0
        });
        worst_td = worst_td.max(scaled_rel_err(&g, &fd));
    }
    ensure!(worst_td < 1e-3, "TD loss rel err {worst_td:e}");
    Ok(format!("FC/GRU max rel err {worst_net:.1e} over 100 nets, TD losses {worst_td:.1e}"))
}

fn mac_certs() -> Outcome {
    const GAMMA: f64 = 0.99;
    for (seed, n_users) in [(1u64, 2usize), (2, 3), (3, 1)] {
        let spec = Spec::new(n_users);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut env: Env = spec.build(seed, Box::new(PersistencePredictor));
        let mut certs = MacCerts::new(n_users, 10_000);
        let mut tracker = MacroTracker::new(n_users, GAMMA);
        let mut rewards = Vec::new();
        let mut requests = vec![Vec::new(); n_users];
        let obs_of = |env: &Env, u: usize| env.macro_observation(u).map(|o| o.to_vec(5, 30));
        for e in 0..3 {
            env.reset_random(&mut rng).unwrap();
            tracker.begin_episode(e);
            loop {
                for u in env.requesting() {
                    let obs = obs_of(&env, u).unwrap();
                    let raw: Vec<f64> = (0..env.n_tiles()).map(|_| rng.random_range(-1.0..=1.0)).collect();
                    env.apply_macro_raw(u, &raw).unwrap();
                    tracker.start(u, obs, raw, env.t());
                    requests[u].push((e, env.t()));
                }
                let b = RandomBeams.beams(&env, &mut rng).unwrap();
                let out = env.step(&b).unwrap();
                let next: Vec<Option<Vec<f64>>> = (0..n_users).map(|u| obs_of(&env, u)).collect();
                certs.push(tracker.record(out.t, out.r_extr, &next, out.done).unwrap()).unwrap();
                rewards.push((e, out.t, out.r_extr));
                if out.done {
                    break;
                }
            }
        }
        let slots = certs.slots();
        for s in slots {
            for a in &s.agents {
                let u = a.agent;
                let start = requests[u].iter().filter(|(e, t)| *e == s.episode && *t <= s.t).last().unwrap().1;
                let expect: f64 = rewards
                    .iter()
                    .filter(|(e, t, _)| *e == s.episode && *t >= start && *t <= s.t)
                    .map(|(_, t, r)| GAMMA.powi((t - start) as i32) * r)
                    .sum();
                ensure!(a.cum_reward == expect, "seed {seed} slot {}: {} vs {expect}", s.t, a.cum_reward);
                if a.completed {
                    let next = requests[u]
                        .iter()
                        .find(|(e, t)| *e == s.episode && *t > start)
                        .map_or(spec.t_max, |&(_, t)| t);
                    ensure!(a.duration == next - start, "seed {seed}: duration {} vs {}", a.duration, next - start);
                }
            }
        }
        for u in 0..n_users {
            let brute: Vec<&MacSlot> = slots.iter().filter(|s| s.agents[u].completed).collect();
            ensure!(certs.filter_agent(u) == brute, "agent filter {u} differs");
        }
        let brute: Vec<&MacSlot> = slots.iter().filter(|s| s.agents.iter().any(|a| a.completed)).collect();
        ensure!(certs.filter_any() == brute, "joint filter differs");
    }
    Ok("3 scripted recordings match the log exactly".into())
}

fn head_cfg() -> HeadModelConfig {
    HeadModelConfig { gru_layers: 1, hidden: 6, q_hist: 8, q_pred: 6 }
}

fn toy_data(n_users: usize, seed: u64) -> Vec<UserData> {
    let traces: Vec<HeadTrace> = (0..n_users)
        .map(|u| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + u as u64);
            let base = (PI / 2.0, rng.random_range(0.0..2.0 * PI));
            HeadTrace {
                user: u as u32,
                video: 0,
                poses: generate_trace(&Persona::preset(u), None, base, 120 + 30 * u, &mut rng),
            }
        })
        .collect();
    build_dataset(&traces, 8, 6, 7, 30)
}

fn pfl_algebra() -> Outcome {
    let data = toy_data(3, 2);
    let init = HeadModel::random(head_cfg(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let fc0 = init.fc_params().to_vec();
    let mut t = PflTrainer::new(&init, &data, PflConfig::default()).unwrap();
    for round in 0..50 {
        for m in t.round(&data).unwrap() {
            ensure!(m.fc_params() == fc0.as_slice(), "FC moved in round {round}");
        }
    }
    ensure!(t.user_fc.iter().all(|fc| *fc == fc0), "stored FC moved");

    let one = toy_data(1, 4);
    let init = HeadModel::random(head_cfg(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let cfg = PflConfig { rounds: 20, local_iters: 1, lr: 1e-3, ..PflConfig::default() };
    let mut t = PflTrainer::new(&init, &one, cfg.clone()).unwrap();
    let mut central = init.clone();
    for round in 0..cfg.rounds {
        t.round(&one).unwrap();
        let (_, g) = central.batch_loss_grad(&one[0].samples).unwrap();
        let p: Vec<f64> = central.gru_params().iter().zip(&g).map(|(w, d)| w - cfg.lr * d).collect();
        central.set_gru_params(&p).unwrap();
        ensure!(t.global_gru == central.gru_params(), "single-user round {round} differs from gradient descent");
    }

    let alpha = aggregation_weights(&data).unwrap();
    ensure!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-15, "alpha sums to {}", alpha.iter().sum::<f64>());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let models: Vec<Vec<f64>> = (0..3).map(|_| (0..20).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let base = aggregate(&models, &alpha).unwrap();
    for order in [[2, 0, 1], [1, 2, 0], [2, 1, 0]] {
        let pm: Vec<Vec<f64>> = order.iter().map(|&i| models[i].clone()).collect();
        let pa: Vec<f64> = order.iter().map(|&i| alpha[i]).collect();
        let perm = aggregate(&pm, &pa).unwrap();
        ensure!(base.iter().zip(&perm).all(|(a, b)| (a - b).abs() < 1e-12), "order {order:?} changes the average");
    }
    Ok("FC frozen for 50 rounds, single user equals gradient descent, weights sum to 1".into())
}

fn pfl_vs_fedavg() -> Outcome {
    let start = Instant::now();
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 1..=10u64 {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = seed;
        cfg.scenario.n_users = 4;
        cfg.video.n_chunks = 12;
        let data = build_scenario(&cfg).unwrap();
        let mcfg = HeadModelConfig { gru_layers: 1, hidden: 8, q_hist: 15, q_pred: 15 };
        let train = build_dataset(&data.train_traces, 15, 15, 10, 30);
        let test = build_dataset(&data.test_traces, 15, 15, 10, 30);
        let init = HeadModel::random(mcfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let pcfg = PflConfig { rounds: 30, local_iters: 3, lr: 1e-2, finetune_steps: 10, finetune_lr: 1e-2 };
        let personal = train_pfl(&init, &train, &pcfg).unwrap();
        let shared = train_fedavg(&init, &train, &pcfg).unwrap();
        let p: f64 = test.iter().enumerate().map(|(u, d)| personal[u].loss(&d.samples).unwrap()).sum::<f64>() / 4.0;
        let f: f64 = test.iter().map(|d| shared.loss(&d.samples).unwrap()).sum::<f64>() / 4.0;
        if p < f {
            wins += 1;
        }
        detail.push(format!("{:.3}", p / f));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(wins >= 8, "PFL better in {wins}/10 seeds (loss ratios {})", detail.join(" "));
    ensure!(secs < 300.0, "took {secs:.0} s");
    Ok(format!("PFL better in {wins}/10 seeds in {secs:.1} s"))
}

fn wmmse() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cfg = WmmseConfig::default();
    for case in 0..100 {
        let phy = phy_with(rng.random_range(2..=6), rng.random_range(1..=2));
        let n_aps = rng.random_range(1..=3);
        let n_users = rng.random_range(1..=4);
        let geo = Geometry {
            ap_positions: common::APS[..n_aps].to_vec(),
            user_positions: (0..n_users)
                .map(|_| [rng.random_range(0.5..9.5), rng.random_range(0.5..9.5), 1.6])
                .collect(),
            phi_blocked: PI,
        };
        let poses: Vec<HeadPose> = (0..n_users)
            .map(|_| HeadPose::new(PI / 2.0, rng.random_range(0.0..2.0 * PI)))
            .collect();
        let ch = ChannelSet::build(&geo, &poses, &phy).unwrap();
        let nb = nonblocked_all(&poses, &geo);
        let res = wmmse_beamforming(&ch, &nb, &cfg, &phy).unwrap();
        ensure!(res.history.windows(2).all(|w| w[1] >= w[0] - 1e-9), "case {case}: history {:?}", res.history);
        for a in 0..n_aps {
            ensure!(res.beams.ap_power(a) <= phy.p_max * (1.0 + 1e-9), "case {case}: AP {a} over budget");
        }
    }
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let phy = phy_with(4, rng.random_range(1..=3));
        let geo = Geometry {
            ap_positions: vec![[9.0, 1.0, 4.0]],
            user_positions: vec![[rng.random_range(1.0..8.0), rng.random_range(2.0..9.0), 1.6]],
            phi_blocked: PI,
        };
        let pose = HeadPose::new(PI / 2.0, azimuth(&geo.user_positions[0], &geo.ap_positions[0]));
        let ch = ChannelSet::build(&geo, &[pose], &phy).unwrap();
        let nb = vec![vec![true]];
        let res = wmmse_beamforming(&ch, &nb, &cfg, &phy).unwrap();
        let rate = all_rates(&res.beams, &ch, &nb, &phy).unwrap()[0];
        let s2 = ch.get(0, 0).singular_values()[0].powi(2);
        worst = worst.max(rel(rate, phy.bandwidth * (1.0 + phy.p_max * s2 / phy.noise).log2()));
    }
    ensure!(worst < 1e-3, "single user rel err {worst:e}");
    Ok(format!("100 instances monotone and feasible, single user rel err {worst:.1e}"))
}

fn adjacent(a: usize, b: usize, cols: usize) -> bool {
    let (ra, ca, rb, cb) = (a / cols, a % cols, b / cols, b % cols);
    let dc = (ca + cols - cb) % cols;
    (ra == rb && (dc == 1 || dc == cols - 1)) || (ca == cb && ra.abs_diff(rb) == 1)
}

fn fusion() -> Outcome {
    let t = Tiling::new(4, 6);
    let (w, h) = (48, 24);
    let (fr, fc) = fov_footprint(90.0, 135.0, &t);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let pose = HeadPose::new(rng.random_range(0.2..PI - 0.2), rng.random_range(0.0..2.0 * PI));
        let head = normalize_map(&head_orientation_map(&pose, w, h, 0.35));
        let sal = normalize_map(&FeatureMap::from_fn(w, h, |_, _| 0.5));
        let fused = regional_fusion(&sal, &head, &t).unwrap();
        let chosen = select_viewport_tiles(&tile_mean(&normalize_map(&fused), &t), &t, fr, fc);
        let hf = tile_mean(&head, &t);
        let mut best = (f64::NEG_INFINITY, Vec::new());
        for r0 in 0..=4 - fr {
            for c0 in 0..6 {
                let mut tiles: Vec<usize> =
                    (0..fr).flat_map(|dr| (0..fc).map(move |dc| (r0 + dr) * 6 + (c0 + dc) % 6)).collect();
                tiles.sort_unstable();
                let s: f64 = tiles.iter().map(|&i| hf[i]).sum();
                if s > best.0 {
                    best = (s, tiles);
                }
            }
        }
        ensure!(chosen == best.1, "uniform saliency picked {chosen:?}, head map {:?}", best.1);
    }

    let table = [0, 0, 0, 0, 0, 0, 0, 1, 2, 3];
    for (gap, &e) in (1..=10).zip(&table) {
        ensure!(marginal_count(0.15, gap, 6) == e, "gap {gap}: {} vs {e}", marginal_count(0.15, gap, 6));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..200 {
        let feat: Vec<f64> = (0..24).map(|_| rng.random_range(0..8) as f64 / 7.0).collect();
        let view = select_viewport_tiles(&feat, &t, 2, 3);
        let count = rng.random_range(0..=20);
        let (_, picks) = expand_marginal(&feat, &t, &view, count);
        let mut set = view.clone();
        let mut oracle = Vec::new();
        for _ in 0..count {
            let cand = (0..24)
                .filter(|n| !set.contains(n) && set.iter().any(|&s| adjacent(*n, s, 6)))
                .fold(None::<usize>, |b, n| match b {
                    Some(b) if feat[b] >= feat[n] => Some(b),
                    _ => Some(n),
                });
            match cand {
                Some(n) => {
                    set.push(n);
                    oracle.push(n);
                }
                None => break,
            }
        }
        ensure!(picks == oracle, "case {case}: {picks:?} vs {oracle:?}");
    }
    Ok("head-map rectangle, marginal table and greedy expansion all match".into())
}

const SMOKE: &str = r#"{
  "policy": "oracle-pred",
  "scenario": {"n_users": 2, "ap_layout": "pair-outer"},
  "phy": {"n_tx": 2, "n_rx": 1},
  "video": {"tile_rows": 2, "tile_cols": 2, "bitrates": [28e6, 48e6]},
  "t_max": 40,
  "train": {
    "episodes": 50, "warmup_slots": 200, "batch_macro": 8, "batch_prim": 16,
    "agent_net": {"hidden": 16, "fc": 16, "out": 16},
    "joint_net": {"hidden": 16, "fc": 16, "out": 16}
  }
}"#;

fn drl_smoke() -> Outcome {
    let start = Instant::now();
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 1..=10u64 {
        let mut cfg = ExperimentConfig::from_json(SMOKE).unwrap();
        cfg.seed = seed;
        let data = build_scenario(&cfg).unwrap();
        let mut env = build_env(&cfg, &data).unwrap();
        let out = train_drl(&cfg, &mut env).unwrap();
        let tail = &out.curve[out.curve.len() - 10..];
        let drl = tail.iter().map(|s| s.sum_r_extr).sum::<f64>() / 10.0;
        let mut rng = stream_rng(seed, Stream::Evaluation);
        let random = (0..10)
            .map(|e| {
                run_episode(&mut env, &mut RandomMacro, &mut RandomBeams, e, &mut rng)
                    .unwrap()
                    .iter()
                    .map(|r| r.r_extr)
                    .sum::<f64>()
            })
            .sum::<f64>()
            / 10.0;
        if drl > random {
            wins += 1;
        }
        detail.push(format!("{drl:.2}/{random:.2}"));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(wins >= 8, "DRL beat random in {wins}/10 seeds ({})", detail.join(" "));
    ensure!(secs < 600.0, "took {secs:.0} s");
    Ok(format!("DRL beat random in {wins}/10 seeds in {secs:.1} s"))
}

fn determinism() -> Outcome {
    for policy in [PolicyKind::Random, PolicyKind::Priority, PolicyKind::Wmmse] {
        let mut cfg = ExperimentConfig::default();
        cfg.policy = policy;
        cfg.scenario.n_users = 2;
        cfg.video.n_chunks = 6;
        cfg.t_max = 40;
        cfg.eval_episodes = 2;
        cfg.train.episodes = 2;
        cfg.train.warmup_slots = 40;
        let runs: Vec<Vec<u8>> = (0..2)
            .map(|_| {
                let dir = tempfile::tempdir().unwrap();
                run_experiment(&cfg, dir.path()).unwrap();
                std::fs::read(dir.path().join("metrics.csv")).unwrap()
            })
            .collect();
        ensure!(runs[0] == runs[1], "{policy}: metrics.csv differs between runs");
    }
    Ok("random, priority and wmmse runs repeat byte for byte".into())
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("channel correctness", channel),
        ("rate vs dense oracle", rate_oracle),
        ("blockage geometry", blockage),
        ("streaming recurrences", streaming),
        ("QoE", qoe),
        ("gradient fidelity", gradients),
        ("Mac-CERTs semantics", mac_certs),
        ("PFL algebra", pfl_algebra),
        ("PFL vs FedAvg", pfl_vs_fedavg),
        ("WMMSE", wmmse),
        ("fusion and tile selection", fusion),
        ("DRL smoke test", drl_smoke),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let line = match outcome {
            Ok(detail) => format!("PASS {name}: {detail}"),
            Err(detail) => {
                failed.push(name);
                format!("FAIL {name}: {detail}")
            }
        };
        writeln!(std::io::stdout().lock(), "{line}").unwrap();
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
