//! Replay memories for the two learning levels.
//!
//! The macro memory stores one tuple per slot holding every agent's current
//! macro observation, action and running discounted reward. An agent's
//! observation and action stay fixed until its macro-action completes, which
//! happens in the slot right before its next request (or at episode end).
//! Training draws runs of consecutive tuples from either the slots where a
//! given agent completed or the slots where any agent completed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

/// One agent's view of a macro slot tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroTransition {
    pub agent: usize,
    pub obs: Vec<f64>,
    /// Raw actor output in `[-1, 1]`.
    pub action: Vec<f64>,
    pub next_obs: Vec<f64>,
    /// Discounted extrinsic reward accumulated since the request.
    pub cum_reward: f64,
    /// Slots elapsed since the request, counting this one.
    pub duration: usize,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacSlot {
    pub episode: usize,
    pub t: usize,
    pub terminal: bool,
    pub r_extr: f64,
    pub agents: Vec<MacroTransition>,
}

impl MacSlot {
    pub fn any_completed(&self) -> bool {
        self.agents.iter().any(|a| a.completed)
    }
}

/// A run of consecutive tuples with recurrent reset flags.
#[derive(Debug, Clone)]
pub struct Window<'a, T> {
    pub items: Vec<&'a T>,
    /// `true` where the episode differs from the previous item's.
    pub resets: Vec<bool>,
}

fn draw_window<'a, T, R: Rng + ?Sized>(
    store: &'a [T],
    index: &[usize],
    len: usize,
    episode: impl Fn(&T) -> usize,
    rng: &mut R,
) -> Result<Window<'a, T>> {
    if len == 0 || index.len() < len {
        return Err(CoreError::Domain(format!(
            "cannot sample {len} consecutive tuples from {} candidates",
            index.len()
        )));
    }
    let start = rng.random_range(0..=index.len() - len);
    let items: Vec<&T> = index[start..start + len].iter().map(|&i| &store[i]).collect();
    let resets = items
        .iter()
        .enumerate()
        .map(|(k, it)| k > 0 && episode(it) != episode(items[k - 1]))
        .collect();
    Ok(Window { items, resets })
}

/// Macro-action concurrent experience replay.
#[derive(Debug, Clone)]
pub struct MacCerts {
    n_agents: usize,
    capacity: usize,
    slots: Vec<MacSlot>,
    per_agent: Vec<Vec<usize>>,
    any: Vec<usize>,
}

impl MacCerts {
    pub fn new(n_agents: usize, capacity: usize) -> Self {
        Self {
            n_agents,
            capacity: capacity.max(1),
            slots: Vec::new(),
            per_agent: vec![Vec::new(); n_agents],
            any: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[MacSlot] {
        &self.slots
    }

    pub fn push(&mut self, slot: MacSlot) -> Result<()> {
        if slot.agents.len() != self.n_agents {
            return Err(CoreError::DimMismatch {
                context: "agents in macro slot",
                expected: self.n_agents,
                actual: slot.agents.len(),
            });
        }
        if self.slots.len() == self.capacity {
            let drop = self.capacity.div_ceil(2);
            self.slots.drain(..drop);
            self.reindex();
        }
        let i = self.slots.len();
        for (u, a) in slot.agents.iter().enumerate() {
            if a.completed {
                self.per_agent[u].push(i);
            }
        }
        if slot.any_completed() {
            self.any.push(i);
        }
        self.slots.push(slot);
        Ok(())
    }

    fn reindex(&mut self) {
        for v in &mut self.per_agent {
            v.clear();
        }
        self.any.clear();
        for (i, s) in self.slots.iter().enumerate() {
            for (u, a) in s.agents.iter().enumerate() {
                if a.completed {
                    self.per_agent[u].push(i);
                }
            }
            if s.any_completed() {
                self.any.push(i);
            }
        }
    }

    /// Tuples in which `agent` completed its macro-action.
    pub fn filter_agent(&self, agent: usize) -> Vec<&MacSlot> {
        self.per_agent[agent].iter().map(|&i| &self.slots[i]).collect()
    }

    /// Tuples in which at least one agent completed.
    pub fn filter_any(&self) -> Vec<&MacSlot> {
        self.any.iter().map(|&i| &self.slots[i]).collect()
    }

    pub fn agent_count(&self, agent: usize) -> usize {
        self.per_agent[agent].len()
    }

    pub fn any_count(&self) -> usize {
        self.any.len()
    }

    pub fn sample_agent<R: Rng + ?Sized>(&self, agent: usize, len: usize, rng: &mut R) -> Result<Window<'_, MacSlot>> {
        draw_window(&self.slots, &self.per_agent[agent], len, |s| s.episode, rng)
    }

    pub fn sample_any<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Result<Window<'_, MacSlot>> {
        draw_window(&self.slots, &self.any, len, |s| s.episode, rng)
    }
}

#[derive(Debug, Clone)]
struct OpenMacro {
    obs: Vec<f64>,
    action: Vec<f64>,
    start: usize,
    cum_reward: f64,
}

/// Builds [`MacSlot`] tuples from the per-slot environment outcome.
#[derive(Debug, Clone)]
pub struct MacroTracker {
    gamma: f64,
    episode: usize,
    open: Vec<Option<OpenMacro>>,
}

impl MacroTracker {
    pub fn new(n_agents: usize, gamma: f64) -> Self {
        Self {
            gamma,
            episode: 0,
            open: vec![None; n_agents],
        }
    }

    pub fn begin_episode(&mut self, episode: usize) {
        self.episode = episode;
        for o in &mut self.open {
            *o = None;
        }
    }

    /// Records the macro-action an agent chose at slot `t`.
    pub fn start(&mut self, agent: usize, obs: Vec<f64>, action: Vec<f64>, t: usize) {
        self.open[agent] = Some(OpenMacro {
            obs,
            action,
            start: t,
            cum_reward: 0.0,
        });
    }

    /// Closes slot `t`. `next_obs[u]` is agent `u`'s fresh macro observation
    /// when it requests at `t + 1`.
    pub fn record(&mut self, t: usize, r_extr: f64, next_obs: &[Option<Vec<f64>>], terminal: bool) -> Result<MacSlot> {
        if next_obs.len() != self.open.len() {
            return Err(CoreError::DimMismatch {
                context: "next macro observations",
                expected: self.open.len(),
                actual: next_obs.len(),
            });
        }
        let mut agents = Vec::with_capacity(self.open.len());
        for (u, slot) in self.open.iter_mut().enumerate() {
            let open = slot
                .as_mut()
                .ok_or_else(|| CoreError::Domain(format!("agent {u} has no open macro-action")))?;
            if t < open.start {
                return Err(CoreError::Domain("slot precedes the macro-action start".into()));
            }
            let elapsed = t - open.start;
            open.cum_reward += self.gamma.powi(elapsed as i32) * r_extr;
            let completed = terminal || next_obs[u].is_some();
            agents.push(MacroTransition {
                agent: u,
                obs: open.obs.clone(),
                action: open.action.clone(),
                next_obs: next_obs[u].clone().unwrap_or_else(|| open.obs.clone()),
                cum_reward: open.cum_reward,
                duration: elapsed + 1,
                completed,
            });
        }
        if terminal {
            for o in &mut self.open {
                *o = None;
            }
        }
        Ok(MacSlot {
            episode: self.episode,
            t,
            terminal,
            r_extr,
            agents,
        })
    }
}

/// One slot of the joint beamforming learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimTransition {
    pub episode: usize,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    /// Joint macro-action in force during the slot.
    pub macro_joint: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub next_macro_joint: Vec<f64>,
    pub terminal: bool,
}

/// Plain slot-ordered memory for primitive transitions.
#[derive(Debug, Clone)]
pub struct PrimReplay {
    capacity: usize,
    items: Vec<PrimTransition>,
    index: Vec<usize>,
}

impl PrimReplay {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: Vec::new(),
            index: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[PrimTransition] {
        &self.items
    }

    pub fn push(&mut self, tr: PrimTransition) {
        if self.items.len() == self.capacity {
            let drop = self.capacity.div_ceil(2);
            self.items.drain(..drop);
            self.index.truncate(self.items.len());
        }
        self.index.push(self.items.len());
        self.items.push(tr);
    }

    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Result<Window<'_, PrimTransition>> {
        draw_window(&self.items, &self.index, len, |p| p.episode, rng)
    }
}
