//! Hierarchical deep deterministic policy gradient.
//!
//! Bitrate selection uses one recurrent actor per agent, each with its own
//! critic that sees every agent's macro observation and action. Beamforming
//! uses a single joint actor-critic whose critic also receives the joint
//! macro-action in force. Both levels train from sampled runs of consecutive
//! tuples; the recurrent layers are replayed over each run, resetting at
//! episode boundaries.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thz360_neural::{Activation, AdamState, LayerSpec, NetworkParams, OuNoise};

use crate::env::{apply_prim_action, Env, MacroObservation, PrimObservation, SlotOutcome};
use crate::replay::{MacCerts, MacSlot, MacroTracker, PrimReplay, PrimTransition, Window};
use crate::{CoreError, Result};

/// Recurrent width, then the two dense widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSizes {
    pub hidden: usize,
    pub fc: usize,
    pub out: usize,
}

impl NetSizes {
    pub const AGENT_FULL: NetSizes = NetSizes {
        hidden: 512,
        fc: 256,
        out: 256,
    };
    pub const JOINT_FULL: NetSizes = NetSizes {
        hidden: 1024,
        fc: 512,
        out: 512,
    };
}

fn trunk(s: NetSizes) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Gru { hidden: s.hidden },
        LayerSpec::Act(Activation::LeakyRelu),
        LayerSpec::Fc { out: s.fc },
        LayerSpec::Act(Activation::LeakyRelu),
        LayerSpec::Fc { out: s.out },
        LayerSpec::Act(Activation::LeakyRelu),
    ]
}

/// Recurrent actor ending in `tanh` so actions live in `[-1, 1]`.
pub fn actor_layers(s: NetSizes, action_dim: usize) -> Vec<LayerSpec> {
    let mut l = trunk(s);
    l.push(LayerSpec::Fc { out: action_dim });
    l.push(LayerSpec::Act(Activation::Tanh));
    l
}

/// Recurrent critic with a scalar linear output.
pub fn critic_layers(s: NetSizes) -> Vec<LayerSpec> {
    let mut l = trunk(s);
    l.push(LayerSpec::Fc { out: 1 });
    l
}

/// Actor, critic, their targets and optimiser state.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub actor: NetworkParams,
    pub critic: NetworkParams,
    pub actor_target: NetworkParams,
    pub critic_target: NetworkParams,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    /// Recurrent state of the online actor while acting.
    pub hidden: Vec<Vec<f64>>,
}

/// Per-agent bitrate learner.
pub type AgentNets = ActorCritic;
/// Joint beamforming learner.
pub type JointNets = ActorCritic;

impl ActorCritic {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        critic_in: usize,
        sizes: NetSizes,
        lr_actor: f64,
        lr_critic: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let actor = NetworkParams::new_random(obs_dim, actor_layers(sizes, action_dim), rng)?;
        let critic = NetworkParams::new_random(critic_in, critic_layers(sizes), rng)?;
        Ok(Self {
            actor_opt: AdamState::new(actor.len(), lr_actor),
            critic_opt: AdamState::new(critic.len(), lr_critic),
            hidden: actor.zero_hidden(),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
        })
    }

    pub fn reset_hidden(&mut self) {
        self.hidden = self.actor.zero_hidden();
    }

    /// Feeds one observation to the online actor and returns its action.
    pub fn act(&mut self, obs: &[f64]) -> Result<Vec<f64>> {
        let (a, h) = recurrent_step(&self.actor, obs, &self.hidden)?;
        self.hidden = h;
        Ok(a)
    }

    pub fn soft_update_targets(&mut self, eps: f64) {
        soft_update(self.actor.params(), self.actor_target.params_mut(), eps);
        soft_update(self.critic.params(), self.critic_target.params_mut(), eps);
    }
}

/// One recurrent step from an explicit hidden state.
pub fn recurrent_step(net: &NetworkParams, x: &[f64], hidden: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let pass = net.forward(&[x.to_vec()], Some(hidden), None)?;
    let out = pass.outputs.into_iter().next().unwrap_or_default();
    Ok((out, pass.final_hidden))
}

/// `target <- eps * online + (1 - eps) * target`.
pub fn soft_update(online: &[f64], target: &mut [f64], eps: f64) {
    for (t, &o) in target.iter_mut().zip(online) {
        *t = eps * o + (1.0 - eps) * *t;
    }
}

/// Bootstrapped value of a macro-action that ran for `duration` slots.
pub fn macro_td_target(cum_reward: f64, duration: usize, terminal: bool, q_next: f64, gamma: f64) -> f64 {
    if terminal {
        cum_reward
    } else {
        cum_reward + gamma.powi(duration as i32) * q_next
    }
}

fn scalar_outputs(net: &NetworkParams, inputs: &[Vec<f64>], resets: &[bool]) -> Result<Vec<f64>> {
    let pass = net.forward(inputs, None, Some(resets))?;
    Ok(pass.outputs.into_iter().map(|o| o[0]).collect())
}

/// Mean squared error of the critic over a sequence and its parameter gradient.
pub fn critic_loss_grad(
    critic: &NetworkParams,
    inputs: &[Vec<f64>],
    resets: &[bool],
    targets: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(CoreError::DimMismatch {
            context: "critic targets",
            expected: inputs.len(),
            actual: targets.len(),
        });
    }
    let pass = critic.forward(inputs, None, Some(resets))?;
    let n = inputs.len() as f64;
    let mut loss = 0.0;
    let d_out: Vec<Vec<f64>> = pass
        .outputs
        .iter()
        .zip(targets)
        .map(|(q, y)| {
            let e = q[0] - y;
            loss += e * e / n;
            vec![2.0 * e / n]
        })
        .collect();
    let g = critic.backward(&pass, &d_out, None)?;
    Ok((loss, g.params))
}

/// Actor parameter gradient given `dL/da` at every step.
pub fn actor_grad_from_action_grads(
    actor: &NetworkParams,
    inputs: &[Vec<f64>],
    resets: &[bool],
    d_actions: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let pass = actor.forward(inputs, None, Some(resets))?;
    Ok(actor.backward(&pass, d_actions, None)?.params)
}

/// Policy loss `-mean Q` with the actor's output spliced into the critic
/// input at `action_offset`, and its gradient with respect to the actor.
pub fn actor_loss_grad(
    actor: &NetworkParams,
    critic: &NetworkParams,
    actor_inputs: &[Vec<f64>],
    critic_inputs: &[Vec<f64>],
    action_offset: usize,
    resets: &[bool],
) -> Result<(f64, Vec<f64>)> {
    if actor_inputs.len() != critic_inputs.len() || actor_inputs.is_empty() {
        return Err(CoreError::DimMismatch {
            context: "actor and critic sequence lengths",
            expected: actor_inputs.len(),
            actual: critic_inputs.len(),
        });
    }
    let d = actor.output_dim();
    if action_offset + d > critic.input_dim() {
        return Err(CoreError::DimMismatch {
            context: "action slice in critic input",
            expected: critic.input_dim(),
            actual: action_offset + d,
        });
    }
    let apass = actor.forward(actor_inputs, None, Some(resets))?;
    let cin: Vec<Vec<f64>> = critic_inputs
        .iter()
        .zip(&apass.outputs)
        .map(|(c, a)| {
            let mut c = c.clone();
            c[action_offset..action_offset + d].copy_from_slice(a);
            c
        })
        .collect();
    let cpass = critic.forward(&cin, None, Some(resets))?;
    let n = cin.len() as f64;
    let loss = -cpass.outputs.iter().map(|q| q[0]).sum::<f64>() / n;
    let d_q = vec![vec![-1.0 / n]; cin.len()];
    let cg = critic.backward(&cpass, &d_q, None)?;
    let d_act: Vec<Vec<f64>> = cg
        .inputs
        .iter()
        .map(|g| g[action_offset..action_offset + d].to_vec())
        .collect();
    let ag = actor.backward(&apass, &d_act, None)?;
    Ok((loss, ag.params))
}

/// `[obs of every agent, action of every agent]` for one macro tuple.
pub fn joint_macro_input(slot: &MacSlot) -> Vec<f64> {
    let mut v: Vec<f64> = slot.agents.iter().flat_map(|a| a.obs.iter().copied()).collect();
    v.extend(slot.agents.iter().flat_map(|a| a.action.iter().copied()));
    v
}

/// Offset of agent `u`'s action inside [`joint_macro_input`].
pub fn macro_action_offset(slot: &MacSlot, u: usize) -> usize {
    let obs: usize = slot.agents.iter().map(|a| a.obs.len()).sum();
    obs + slot.agents[..u].iter().map(|a| a.action.len()).sum::<usize>()
}

/// Next joint input `[o', a']` with `a'` from every agent's target actor.
pub fn macro_next_inputs(agents: &[AgentNets], window: &Window<'_, MacSlot>) -> Result<Vec<Vec<f64>>> {
    let mut next_actions: Vec<Vec<Vec<f64>>> = Vec::with_capacity(agents.len());
    for (v, nets) in agents.iter().enumerate() {
        let seq: Vec<Vec<f64>> = window.items.iter().map(|s| s.agents[v].next_obs.clone()).collect();
        let pass = nets.actor_target.forward(&seq, None, Some(&window.resets))?;
        next_actions.push(pass.outputs);
    }
    Ok(window
        .items
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mut x: Vec<f64> = s.agents.iter().flat_map(|a| a.next_obs.iter().copied()).collect();
            for a in &next_actions {
                x.extend_from_slice(&a[k]);
            }
            x
        })
        .collect())
}

/// Critic targets for agent `u` over a sampled window.
pub fn macro_targets(
    agents: &[AgentNets],
    u: usize,
    window: &Window<'_, MacSlot>,
    next_inputs: &[Vec<f64>],
    gamma: f64,
) -> Result<Vec<f64>> {
    let q_next = scalar_outputs(&agents[u].critic_target, next_inputs, &window.resets)?;
    Ok(window
        .items
        .iter()
        .zip(q_next)
        .map(|(s, q)| {
            let a = &s.agents[u];
            macro_td_target(a.cum_reward, a.duration, s.terminal, q, gamma)
        })
        .collect())
}

/// Loss and gradient of agent `u`'s critic on a window with fixed targets.
pub fn macro_critic_loss(
    agents: &[AgentNets],
    u: usize,
    window: &Window<'_, MacSlot>,
    targets: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let inputs: Vec<Vec<f64>> = window.items.iter().map(|s| joint_macro_input(s)).collect();
    critic_loss_grad(&agents[u].critic, &inputs, &window.resets, targets)
}

/// Policy loss and gradient of agent `u`'s actor on a window where it completed.
pub fn macro_actor_loss(agents: &[AgentNets], u: usize, window: &Window<'_, MacSlot>) -> Result<(f64, Vec<f64>)> {
    let actor_in: Vec<Vec<f64>> = window.items.iter().map(|s| s.agents[u].obs.clone()).collect();
    let critic_in: Vec<Vec<f64>> = window.items.iter().map(|s| joint_macro_input(s)).collect();
    let off = macro_action_offset(window.items[0], u);
    actor_loss_grad(&agents[u].actor, &agents[u].critic, &actor_in, &critic_in, off, &window.resets)
}

/// `[o^p, a^p, a^m]` for one primitive tuple.
pub fn prim_critic_input(tr: &PrimTransition) -> Vec<f64> {
    let mut v = tr.obs.clone();
    v.extend_from_slice(&tr.action);
    v.extend_from_slice(&tr.macro_joint);
    v
}

/// Primitive critic targets `R + gamma * Q'(o', pi'(o'); a^m')`.
pub fn prim_targets(joint: &JointNets, window: &Window<'_, PrimTransition>, gamma: f64) -> Result<Vec<f64>> {
    let next_obs: Vec<Vec<f64>> = window.items.iter().map(|p| p.next_obs.clone()).collect();
    let next_act = joint.actor_target.forward(&next_obs, None, Some(&window.resets))?.outputs;
    let next_in: Vec<Vec<f64>> = window
        .items
        .iter()
        .zip(next_act)
        .map(|(p, a)| {
            let mut x = p.next_obs.clone();
            x.extend_from_slice(&a);
            x.extend_from_slice(&p.next_macro_joint);
            x
        })
        .collect();
    let q_next = scalar_outputs(&joint.critic_target, &next_in, &window.resets)?;
    Ok(window
        .items
        .iter()
        .zip(q_next)
        .map(|(p, q)| if p.terminal { p.reward } else { p.reward + gamma * q })
        .collect())
}

pub fn prim_critic_loss(
    joint: &JointNets,
    window: &Window<'_, PrimTransition>,
    targets: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let inputs: Vec<Vec<f64>> = window.items.iter().map(|p| prim_critic_input(p)).collect();
    critic_loss_grad(&joint.critic, &inputs, &window.resets, targets)
}

pub fn prim_actor_loss(joint: &JointNets, window: &Window<'_, PrimTransition>) -> Result<(f64, Vec<f64>)> {
    let actor_in: Vec<Vec<f64>> = window.items.iter().map(|p| p.obs.clone()).collect();
    let critic_in: Vec<Vec<f64>> = window.items.iter().map(|p| prim_critic_input(p)).collect();
    let off = window.items[0].obs.len();
    actor_loss_grad(&joint.actor, &joint.critic, &actor_in, &critic_in, off, &window.resets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub warmup_slots: usize,
    pub batch_macro: usize,
    pub batch_prim: usize,
    pub soft_update: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub gamma: f64,
    pub ou_theta: f64,
    pub ou_sigma: f64,
    pub agent_net: NetSizes,
    pub joint_net: NetSizes,
    /// Multiplier on the intrinsic reward before storage; defaults to one
    /// over the channel bandwidth so rewards are in bit/s/Hz.
    pub intr_reward_scale: Option<f64>,
    pub replay_capacity: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 60,
            warmup_slots: 300,
            batch_macro: 16,
            batch_prim: 32,
            soft_update: 1e-2,
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            gamma: 0.99,
            ou_theta: 0.1,
            ou_sigma: 0.15,
            agent_net: NetSizes {
                hidden: 32,
                fc: 32,
                out: 32,
            },
            joint_net: NetSizes {
                hidden: 64,
                fc: 64,
                out: 64,
            },
            intr_reward_scale: None,
            replay_capacity: 200_000,
        }
    }
}

impl TrainConfig {
    /// Full-size settings.
    pub fn full() -> Self {
        Self {
            episodes: 5000,
            warmup_slots: 5200,
            batch_macro: 512,
            batch_prim: 512,
            soft_update: 1e-2,
            lr_actor: 1e-4,
            lr_critic: 1e-4,
            gamma: 0.99,
            ou_theta: 0.1,
            ou_sigma: 0.15,
            agent_net: NetSizes::AGENT_FULL,
            joint_net: NetSizes::JOINT_FULL,
            intr_reward_scale: None,
            replay_capacity: 1_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::Config(m.to_string()));
        if !(self.soft_update > 0.0 && self.soft_update < 1.0) {
            return bad("train.soft_update must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("train.gamma must lie in (0, 1]");
        }
        if self.batch_macro == 0 || self.batch_prim == 0 {
            return bad("train batch sizes must be positive");
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return bad("train learning rates must be positive");
        }
        if self.ou_theta < 0.0 || self.ou_sigma < 0.0 {
            return bad("train noise parameters must be non-negative");
        }
        if [self.agent_net, self.joint_net]
            .iter()
            .any(|s| s.hidden == 0 || s.fc == 0 || s.out == 0)
        {
            return bad("train network widths must be positive");
        }
        Ok(())
    }
}

/// Per-episode training record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub slots: usize,
    pub sum_r_extr: f64,
    pub mean_r_intr: f64,
    pub macro_critic_loss: f64,
    pub macro_actor_loss: f64,
    pub prim_critic_loss: f64,
    pub prim_actor_loss: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateLosses {
    pub macro_critic: Option<f64>,
    pub macro_actor: Option<f64>,
    pub prim_critic: Option<f64>,
    pub prim_actor: Option<f64>,
}

fn uniform_vec(dim: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

fn add_noise(a: &mut [f64], noise: &[f64]) {
    for (x, n) in a.iter_mut().zip(noise) {
        *x = (*x + n).clamp(-1.0, 1.0);
    }
}

/// Both learners with their memories.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub agents: Vec<AgentNets>,
    pub joint: JointNets,
    pub certs: MacCerts,
    pub prim: PrimReplay,
    tracker: MacroTracker,
    macro_noise: Vec<OuNoise>,
    prim_noise: OuNoise,
    intr_scale: f64,
    global_slot: usize,
    episode: usize,
}

/// Dimensions of the observations and actions an environment produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LearnerDims {
    pub n_agents: usize,
    pub macro_obs: usize,
    pub macro_action: usize,
    pub prim_obs: usize,
    pub prim_action: usize,
}

impl LearnerDims {
    pub fn of(env: &Env) -> Self {
        let u = env.n_users();
        Self {
            n_agents: u,
            macro_obs: MacroObservation::dim(env.n_tiles()),
            macro_action: env.n_tiles(),
            prim_obs: u * PrimObservation::dim(env.n_aps()),
            prim_action: 2 * env.setup().phy.n_tx * env.n_aps() * u,
        }
    }

    pub fn macro_critic_in(&self) -> usize {
        self.n_agents * (self.macro_obs + self.macro_action)
    }

    pub fn prim_critic_in(&self) -> usize {
        self.prim_obs + self.prim_action + self.n_agents * self.macro_action
    }
}

impl Trainer {
    pub fn new<R: Rng + ?Sized>(env: &Env, cfg: TrainConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let d = LearnerDims::of(env);
        let agents = (0..d.n_agents)
            .map(|_| {
                ActorCritic::new(
                    d.macro_obs,
                    d.macro_action,
                    d.macro_critic_in(),
                    cfg.agent_net,
                    cfg.lr_actor,
                    cfg.lr_critic,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let joint = ActorCritic::new(
            d.prim_obs,
            d.prim_action,
            d.prim_critic_in(),
            cfg.joint_net,
            cfg.lr_actor,
            cfg.lr_critic,
            rng,
        )?;
        let intr_scale = cfg
            .intr_reward_scale
            .unwrap_or(1.0 / env.setup().phy.bandwidth);
        Ok(Self {
            certs: MacCerts::new(d.n_agents, cfg.replay_capacity),
            prim: PrimReplay::new(cfg.replay_capacity),
            tracker: MacroTracker::new(d.n_agents, cfg.gamma),
            macro_noise: (0..d.n_agents)
                .map(|_| OuNoise::new(d.macro_action, cfg.ou_theta, cfg.ou_sigma))
                .collect(),
            prim_noise: OuNoise::new(d.prim_action, cfg.ou_theta, cfg.ou_sigma),
            intr_scale,
            global_slot: 0,
            episode: 0,
            agents,
            joint,
            cfg,
        })
    }

    pub fn global_slot(&self) -> usize {
        self.global_slot
    }

    fn warming_up(&self) -> bool {
        self.global_slot < self.cfg.warmup_slots
    }

    fn choose_macro(&mut self, env: &mut Env, u: usize, explore: bool, rng: &mut dyn RngCore) -> Result<()> {
        let setup = env.setup();
        let obs = env
            .macro_observation(u)
            .ok_or_else(|| CoreError::Domain(format!("user {u} is not requesting")))?
            .to_vec(setup.video.n_levels(), setup.buffer_threshold);
        let mut a = self.agents[u].act(&obs)?;
        if explore {
            if self.warming_up() {
                a = uniform_vec(a.len(), rng);
            } else {
                let n = self.macro_noise[u].sample(rng).to_vec();
                add_noise(&mut a, &n);
            }
        }
        env.apply_macro_raw(u, &a)?;
        self.tracker.start(u, obs, a, env.t());
        Ok(())
    }

    /// Runs one episode, storing transitions and updating after warm-up
    /// when `explore` is set.
    pub fn run_episode(&mut self, env: &mut Env, rng: &mut dyn RngCore, explore: bool) -> Result<EpisodeStats> {
        env.reset_random(rng)?;
        for a in &mut self.agents {
            a.reset_hidden();
        }
        self.joint.reset_hidden();
        for n in &mut self.macro_noise {
            n.reset();
        }
        self.prim_noise.reset();
        self.tracker.begin_episode(self.episode);
        let mut stats = EpisodeStats {
            episode: self.episode,
            ..Default::default()
        };
        let mut losses = [(0.0, 0usize); 4];
        let mut pending: Option<PrimTransition> = None;
        loop {
            for u in env.requesting() {
                self.choose_macro(env, u, explore, rng)?;
            }
            let macro_joint = env.joint_quality_vec();
            if let Some(mut p) = pending.take() {
                p.next_macro_joint = macro_joint.clone();
                self.prim.push(p);
            }
            let obs = env.prim_observation_vec();
            let mut a = self.joint.act(&obs)?;
            if explore {
                if self.warming_up() {
                    a = uniform_vec(a.len(), rng);
                } else {
                    let n = self.prim_noise.sample(rng).to_vec();
                    add_noise(&mut a, &n);
                }
            }
            let beams = apply_prim_action(&a, env.n_users(), env.n_aps(), &env.setup().phy)?;
            let out: SlotOutcome = env.step(&beams)?;
            let next_obs = env.prim_observation_vec();
            let setup = env.setup();
            let next_macro: Vec<Option<Vec<f64>>> = (0..env.n_users())
                .map(|u| {
                    env.macro_observation(u)
                        .map(|o| o.to_vec(setup.video.n_levels(), setup.buffer_threshold))
                })
                .collect();
            let slot = self.tracker.record(out.t, out.r_extr, &next_macro, out.done)?;
            stats.sum_r_extr += out.r_extr;
            stats.mean_r_intr += out.r_intr;
            stats.slots += 1;
            let tr = PrimTransition {
                episode: self.episode,
                obs,
                action: a,
                reward: out.r_intr * self.intr_scale,
                macro_joint: macro_joint.clone(),
                next_obs,
                next_macro_joint: macro_joint,
                terminal: out.done,
            };
            if explore {
                self.certs.push(slot)?;
                if out.done {
                    self.prim.push(tr);
                } else {
                    pending = Some(tr);
                }
                if !self.warming_up() {
                    let l = self.update(rng)?;
                    for (acc, v) in losses
                        .iter_mut()
                        .zip([l.macro_critic, l.macro_actor, l.prim_critic, l.prim_actor])
                    {
                        if let Some(v) = v {
                            acc.0 += v;
                            acc.1 += 1;
                        }
                    }
                }
                self.global_slot += 1;
            }
            if out.done {
                break;
            }
        }
        let mean = |(s, n): (f64, usize)| if n > 0 { s / n as f64 } else { 0.0 };
        stats.mean_r_intr /= stats.slots.max(1) as f64;
        stats.macro_critic_loss = mean(losses[0]);
        stats.macro_actor_loss = mean(losses[1]);
        stats.prim_critic_loss = mean(losses[2]);
        stats.prim_actor_loss = mean(losses[3]);
        self.episode += 1;
        Ok(stats)
    }

    /// One update of every learner that has enough data, then soft target updates.
    pub fn update(&mut self, rng: &mut dyn RngCore) -> Result<UpdateLosses> {
        let mut out = UpdateLosses::default();
        let (bm, bp, gamma, eps) = (
            self.cfg.batch_macro,
            self.cfg.batch_prim,
            self.cfg.gamma,
            self.cfg.soft_update,
        );
        if self.certs.any_count() >= bm {
            let window = self.certs.sample_any(bm, rng)?;
            let next_in = macro_next_inputs(&self.agents, &window)?;
            let mut total = 0.0;
            for u in 0..self.agents.len() {
                let y = macro_targets(&self.agents, u, &window, &next_in, gamma)?;
                let (l, g) = macro_critic_loss(&self.agents, u, &window, &y)?;
                let nets = &mut self.agents[u];
                nets.critic_opt.step(nets.critic.params_mut(), &g)?;
                total += l;
            }
            out.macro_critic = Some(total / self.agents.len() as f64);
        }
        let mut actor_total = 0.0;
        let mut actor_n = 0;
        for u in 0..self.agents.len() {
            if self.certs.agent_count(u) < bm {
                continue;
            }
            let window = self.certs.sample_agent(u, bm, rng)?;
            let (l, g) = macro_actor_loss(&self.agents, u, &window)?;
            let nets = &mut self.agents[u];
            nets.actor_opt.step(nets.actor.params_mut(), &g)?;
            actor_total += l;
            actor_n += 1;
        }
        if actor_n > 0 {
            out.macro_actor = Some(actor_total / actor_n as f64);
        }
        if self.prim.len() >= bp {
            let window = self.prim.sample(bp, rng)?;
            let y = prim_targets(&self.joint, &window, gamma)?;
            let (lc, gc) = prim_critic_loss(&self.joint, &window, &y)?;
            self.joint.critic_opt.step(self.joint.critic.params_mut(), &gc)?;
            let (la, ga) = prim_actor_loss(&self.joint, &window)?;
            self.joint.actor_opt.step(self.joint.actor.params_mut(), &ga)?;
            out.prim_critic = Some(lc);
            out.prim_actor = Some(la);
        }
        for a in &mut self.agents {
            a.soft_update_targets(eps);
        }
        self.joint.soft_update_targets(eps);
        Ok(out)
    }
}

/// Trained actors.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub macro_actors: Vec<NetworkParams>,
    pub prim_actor: NetworkParams,
    pub curve: Vec<EpisodeStats>,
}

/// Warm-up followed by `cfg.episodes` training episodes. Warm-up episodes
/// are run first until the warm-up slot budget is spent.
pub fn train(env: &mut Env, cfg: TrainConfig, rng: &mut dyn RngCore) -> Result<TrainOutput> {
    let mut trainer = Trainer::new(env, cfg, rng)?;
    while trainer.warming_up() {
        trainer.run_episode(env, rng, true)?;
    }
    let mut curve = Vec::with_capacity(trainer.cfg.episodes);
    for _ in 0..trainer.cfg.episodes {
        curve.push(trainer.run_episode(env, rng, true)?);
    }
    Ok(TrainOutput {
        macro_actors: trainer.agents.iter().map(|a| a.actor.clone()).collect(),
        prim_actor: trainer.joint.actor.clone(),
        curve,
    })
}

/// Writes the training curve as CSV.
pub fn write_curve(curve: &[EpisodeStats], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in curve {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}
