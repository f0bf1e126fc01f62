//! Pose predictors used by the environment: ground-truth oracle, last-pose
//! persistence, and trained per-user head models.

use crate::headpred::HeadModel;
use crate::phy::HeadPose;
use crate::traces::HeadTrace;

/// Predicts future head poses from the trace observed so far.
pub trait PosePredictor: Send + Sync {
    /// Poses for frames `last_seen + 1 ..= last_seen + horizon`.
    fn predict(&self, user: usize, trace: &HeadTrace, last_seen: usize, horizon: usize) -> Vec<HeadPose>;
}

/// Reads the future straight from the trace.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePredictor;

impl PosePredictor for OraclePredictor {
    fn predict(&self, _user: usize, trace: &HeadTrace, last_seen: usize, horizon: usize) -> Vec<HeadPose> {
        (1..=horizon).map(|k| trace.pose(last_seen + k)).collect()
    }
}

/// Assumes the head stays where it was last seen.
#[derive(Debug, Clone, Copy, Default)]
pub struct PersistencePredictor;

impl PosePredictor for PersistencePredictor {
    fn predict(&self, _user: usize, trace: &HeadTrace, last_seen: usize, horizon: usize) -> Vec<HeadPose> {
        vec![trace.pose(last_seen); horizon]
    }
}

/// One trained head model per user (or one shared model for every user).
#[derive(Debug, Clone)]
pub struct ModelPredictor {
    pub models: Vec<HeadModel>,
}

impl ModelPredictor {
    pub fn shared(model: HeadModel, n_users: usize) -> Self {
        Self {
            models: vec![model; n_users],
        }
    }
}

/// History window ending at `last_seen`, padded with the first pose.
pub fn history_window(trace: &HeadTrace, last_seen: usize, len: usize) -> Vec<HeadPose> {
    (0..len)
        .map(|k| {
            let back = len - 1 - k;
            if back > last_seen {
                trace.pose(0)
            } else {
                trace.pose(last_seen - back)
            }
        })
        .collect()
}

impl PosePredictor for ModelPredictor {
    fn predict(&self, user: usize, trace: &HeadTrace, last_seen: usize, horizon: usize) -> Vec<HeadPose> {
        let model = &self.models[user % self.models.len()];
        let hist = history_window(trace, last_seen, model.cfg.q_hist);
        let mut out = model
            .predict(&hist)
            .unwrap_or_else(|_| vec![trace.pose(last_seen); model.cfg.q_pred]);
        let last = out.last().copied().unwrap_or(trace.pose(last_seen));
        out.resize(horizon, last);
        out
    }
}
