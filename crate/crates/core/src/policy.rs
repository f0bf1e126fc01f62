//! Decision makers for evaluation runs and the episode rollout loop.
//!
//! A run pairs a bitrate policy (answers chunk requests) with a beam policy
//! (called once per slot).

use rand::{Rng, RngCore};
use thz360_neural::NetworkParams;

use crate::baselines::{priority_bitrate, throughput_estimate, wmmse_beamforming, ReactiveBlockage, WmmseConfig};
use crate::env::{apply_prim_action, Env, SlotLogRecord, SlotOutcome};
use crate::hddpg::recurrent_step;
use crate::phy::BeamSet;
use crate::streaming::{chunk_size_bits, QualitySelection};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum MacroDecision {
    /// Actor output in `[-1, 1]` per tile.
    Raw(Vec<f64>),
    Levels(QualitySelection),
}

pub trait MacroPolicy {
    fn begin_episode(&mut self, _env: &Env) {}
    fn decide(&mut self, env: &Env, user: usize, rng: &mut dyn RngCore) -> Result<MacroDecision>;
    fn observe(&mut self, _env: &Env, _outcome: &SlotOutcome) {}
}

pub trait BeamPolicy {
    fn begin_episode(&mut self, _env: &Env) {}
    fn beams(&mut self, env: &Env, rng: &mut dyn RngCore) -> Result<BeamSet>;
}

/// Uniform raw actions.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomMacro;

impl MacroPolicy for RandomMacro {
    fn decide(&mut self, env: &Env, _user: usize, rng: &mut dyn RngCore) -> Result<MacroDecision> {
        Ok(MacroDecision::Raw(
            (0..env.n_tiles()).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        ))
    }
}

/// Uniform raw beam entries, scaled and projected like the learned actor's.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomBeams;

impl BeamPolicy for RandomBeams {
    fn beams(&mut self, env: &Env, rng: &mut dyn RngCore) -> Result<BeamSet> {
        let n = 2 * env.setup().phy.n_tx * env.n_aps() * env.n_users();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        apply_prim_action(&raw, env.n_users(), env.n_aps(), &env.setup().phy)
    }
}

/// Trained per-agent bitrate actors.
#[derive(Debug, Clone)]
pub struct DrlMacro {
    pub actors: Vec<NetworkParams>,
    hidden: Vec<Vec<Vec<f64>>>,
}

impl DrlMacro {
    pub fn new(actors: Vec<NetworkParams>) -> Self {
        let hidden = actors.iter().map(|a| a.zero_hidden()).collect();
        Self { actors, hidden }
    }
}

impl MacroPolicy for DrlMacro {
    fn begin_episode(&mut self, _env: &Env) {
        self.hidden = self.actors.iter().map(|a| a.zero_hidden()).collect();
    }

    fn decide(&mut self, env: &Env, user: usize, _rng: &mut dyn RngCore) -> Result<MacroDecision> {
        let setup = env.setup();
        let obs = env
            .macro_observation(user)
            .ok_or_else(|| crate::CoreError::Domain(format!("user {user} is not requesting")))?
            .to_vec(setup.video.n_levels(), setup.buffer_threshold);
        let (a, h) = recurrent_step(&self.actors[user], &obs, &self.hidden[user])?;
        self.hidden[user] = h;
        Ok(MacroDecision::Raw(a))
    }
}

/// Trained joint beamforming actor.
#[derive(Debug, Clone)]
pub struct DrlBeams {
    pub actor: NetworkParams,
    hidden: Vec<Vec<f64>>,
}

impl DrlBeams {
    pub fn new(actor: NetworkParams) -> Self {
        let hidden = actor.zero_hidden();
        Self { actor, hidden }
    }
}

impl BeamPolicy for DrlBeams {
    fn begin_episode(&mut self, _env: &Env) {
        self.hidden = self.actor.zero_hidden();
    }

    fn beams(&mut self, env: &Env, _rng: &mut dyn RngCore) -> Result<BeamSet> {
        let (a, h) = recurrent_step(&self.actor, &env.prim_observation_vec(), &self.hidden)?;
        self.hidden = h;
        apply_prim_action(&a, env.n_users(), env.n_aps(), &env.setup().phy)
    }
}

/// Priority bitrate selection driven by the last chunk's throughput.
#[derive(Debug, Clone, Default)]
pub struct PriorityMacro {
    estimate: Vec<Option<f64>>,
    chunk_bits: Vec<f64>,
}

impl MacroPolicy for PriorityMacro {
    fn begin_episode(&mut self, env: &Env) {
        self.estimate = vec![None; env.n_users()];
        self.chunk_bits = vec![0.0; env.n_users()];
    }

    fn decide(&mut self, env: &Env, user: usize, _rng: &mut dyn RngCore) -> Result<MacroDecision> {
        let vc = &env.setup().video;
        let pred = env
            .pending_prediction(user)
            .ok_or_else(|| crate::CoreError::Domain(format!("user {user} is not requesting")))?;
        let prior = vc.bitrates[0] * pred.pred_set.len() as f64;
        let est = self.estimate[user].unwrap_or(prior);
        let sel = priority_bitrate(pred, est, vc);
        self.chunk_bits[user] = chunk_size_bits(&sel, vc);
        Ok(MacroDecision::Levels(sel))
    }

    fn observe(&mut self, env: &Env, outcome: &SlotOutcome) {
        for c in &outcome.completions {
            if let Ok(e) = throughput_estimate(self.chunk_bits[c.user], c.td, env.setup().video.slot_seconds) {
                self.estimate[c.user] = Some(e);
            }
        }
    }
}

/// WMMSE beams on the current channels. The non-blocked sets come from the
/// pose predictor, or from delayed detection when `reactive` is set.
#[derive(Debug, Clone)]
pub struct WmmseBeams {
    pub cfg: WmmseConfig,
    pub reactive: Option<ReactiveBlockage>,
}

impl BeamPolicy for WmmseBeams {
    fn begin_episode(&mut self, _env: &Env) {
        if let Some(r) = &mut self.reactive {
            r.reset();
        }
    }

    fn beams(&mut self, env: &Env, _rng: &mut dyn RngCore) -> Result<BeamSet> {
        let nb = match &mut self.reactive {
            Some(r) => r.push(env.actual_nonblocked()),
            None => env.believed_nonblocked(),
        };
        let channels = env.actual_channels()?;
        Ok(wmmse_beamforming(&channels, &nb, &self.cfg, &env.setup().phy)?.beams)
    }
}

/// Runs one episode from a random start and returns its slot log.
pub fn run_episode(
    env: &mut Env,
    macro_policy: &mut dyn MacroPolicy,
    beam_policy: &mut dyn BeamPolicy,
    episode: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<SlotLogRecord>> {
    env.reset_random(rng)?;
    macro_policy.begin_episode(env);
    beam_policy.begin_episode(env);
    let mut log = Vec::new();
    loop {
        for u in env.requesting() {
            match macro_policy.decide(env, u, rng)? {
                MacroDecision::Raw(raw) => {
                    env.apply_macro_raw(u, &raw)?;
                }
                MacroDecision::Levels(levels) => env.apply_quality(u, levels)?,
            }
        }
        let beams = beam_policy.beams(env, rng)?;
        let out = env.step(&beams)?;
        macro_policy.observe(env, &out);
        log.push(SlotLogRecord::new(episode, &out));
        if out.done {
            return Ok(log);
        }
    }
}
