//! Slotted multi-user streaming environment.
//!
//! Each slot runs in a fixed order: the caller reads the primitive
//! observation and supplies beams; the environment realises the actual
//! self-blockage from the true head poses, computes rates, delivers bits,
//! detects completed chunks, scores them, and schedules the next requests.
//! Users whose request falls on the next slot get a fresh macro observation
//! that the caller must answer with a tile quality selection before the next
//! step.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fusion::{
    fov_footprint, fov_tiles, head_orientation_map, normalize_map, predict_chunk_tiles, regional_fusion,
    tiles_overlap, FusionConfig, TilePrediction, Tiling,
};
use crate::phy::{all_rates, nonblocked_all, BeamSet, ChannelSet, Geometry, HeadPose, Phy};
use crate::predictor::PosePredictor;
use crate::saliency::{SaliencyProvider, SaliencyVideo};
use crate::streaming::{
    chunk_size_bits, mean_transmitted_level, qoe_chunk, rebuffering_delay, round_bitrate, waiting_time, QoeConfig,
    QoeReport, QualitySelection, UserStreamState, VideoConfig,
};
use crate::traces::HeadTrace;
use crate::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub gamma: f64,
    pub lambda_intr: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda_intr: 2.0,
        }
    }
}

/// Everything the environment needs apart from traces, saliency and the predictor.
#[derive(Debug, Clone)]
pub struct EnvSetup {
    pub phy: Phy,
    pub geometry: Geometry,
    pub video: VideoConfig,
    pub qoe: QoeConfig,
    pub fusion: FusionConfig,
    pub reward: RewardConfig,
    pub buffer_threshold: usize,
    pub t_max: usize,
}

/// What an agent sees when it requests a chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroObservation {
    pub indicator: Vec<bool>,
    pub avg_feature: Vec<f64>,
    /// Mean transmitted level of the previous chunk (1 before the first chunk).
    pub prev_trans_quality: f64,
    pub buffer_at_request: usize,
}

impl MacroObservation {
    /// Network input: indicator, features, quality / M, buffer / threshold.
    pub fn to_vec(&self, n_levels: usize, buffer_threshold: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.indicator.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        v.extend_from_slice(&self.avg_feature);
        v.push(self.prev_trans_quality / n_levels.max(1) as f64);
        v.push(self.buffer_at_request as f64 / buffer_threshold.max(1) as f64);
        v
    }

    pub fn dim(n_tiles: usize) -> usize {
        2 * n_tiles + 2
    }
}

/// Per-user primitive observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimObservation {
    /// Predicted non-blocked APs.
    pub nonblocked: Vec<bool>,
    pub delta_rem: f64,
    pub delta_time: i64,
}

impl PrimObservation {
    pub fn to_vec(&self, bits_scale: f64, time_scale: f64) -> Vec<f64> {
        let mut v: Vec<f64> = self.nonblocked.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        v.push(self.delta_rem / bits_scale);
        v.push(self.delta_time as f64 / time_scale);
        v
    }

    pub fn dim(n_aps: usize) -> usize {
        n_aps + 2
    }
}

/// Continuous per-tile bitrates and the quality levels they round to.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroAction {
    pub bitrates: Vec<f64>,
    pub levels: QualitySelection,
}

/// Maps raw actor output in `[-1, 1]` to bitrates on the predicted tiles and
/// rounds each down to a quality level. Unpredicted tiles get bitrate 0.
pub fn apply_macro_action(raw: &[f64], pred: &TilePrediction, vc: &VideoConfig) -> MacroAction {
    let lo = vc.bitrates[0];
    let hi = vc.bitrates[vc.bitrates.len() - 1];
    let mut bitrates = vec![0.0; pred.indicator.len()];
    let mut levels = vec![0u8; pred.indicator.len()];
    for (n, &inside) in pred.indicator.iter().enumerate() {
        if inside {
            let r: f64 = raw.get(n).copied().unwrap_or(-1.0);
            let r = if r.is_nan() { -1.0 } else { r.clamp(-1.0, 1.0) };
            let nu = lo + (r + 1.0) / 2.0 * (hi - lo);
            bitrates[n] = nu;
            levels[n] = round_bitrate(nu, vc);
        }
    }
    MacroAction { bitrates, levels }
}

/// Interprets consecutive real pairs as complex beam entries, scales them to
/// a nominal per-beam amplitude of `sqrt(P_max / U)` and projects onto the
/// per-AP power budget.
pub fn apply_prim_action(raw: &[f64], n_users: usize, n_aps: usize, phy: &Phy) -> Result<BeamSet> {
    let scale = (phy.p_max / (n_users * phy.n_tx) as f64).sqrt();
    let beams = BeamSet::from_real_pairs(raw, n_users, n_aps, phy.n_tx, scale)?;
    Ok(crate::phy::project_power(beams, phy.p_max))
}

/// Shared extrinsic reward: summed QoE of chunks finishing this slot.
pub fn extrinsic_reward(completions: &[ChunkCompletion]) -> f64 {
    completions.iter().map(|c| c.report.qoe).sum()
}

/// Sum-rate minus a penalty on bits left over after this slot.
pub fn intrinsic_reward(rates: &[f64], delta_rem: &[f64], lambda_intr: f64, slot_seconds: f64) -> f64 {
    let sum_rate: f64 = rates.iter().sum();
    let shortfall: f64 = rates
        .iter()
        .zip(delta_rem)
        .map(|(r, d)| (d - slot_seconds * r).max(0.0))
        .sum();
    sum_rate - lambda_intr * shortfall
}

/// Remaining-bits / remaining-time bookkeeping after one slot of delivery.
///
/// `td` is the transmission delay of the chunk, used only when this slot
/// delivers its last bits.
pub fn update_stream_state(state: &mut UserStreamState, delivered_bits: f64, td: usize, chunk_slots: usize) {
    state.delta_rem = (state.delta_rem - delivered_bits).max(0.0);
    if state.delta_rem > 0.0 {
        state.delta_time -= 1;
    } else {
        state.delta_time = (state.buffer_slots.saturating_sub(td) + chunk_slots) as i64;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkCompletion {
    pub user: usize,
    /// Chunk number within the episode.
    pub chunk: usize,
    pub request_slot: usize,
    pub td: usize,
    pub rebuffer: usize,
    pub report: QoeReport,
    pub overlap: f64,
    pub trans_quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub t: usize,
    pub rates: Vec<f64>,
    /// Remaining bits per user at the start of the slot.
    pub delta_rem_before: Vec<f64>,
    pub delta_rem: Vec<f64>,
    pub r_extr: f64,
    pub r_intr: f64,
    pub completions: Vec<ChunkCompletion>,
    /// Users that request a chunk in the next slot.
    pub requests_next: Vec<usize>,
    pub done: bool,
}

#[derive(Debug, Clone)]
struct ActiveChunk {
    chunk: usize,
    levels: QualitySelection,
    pred: TilePrediction,
}

#[derive(Debug, Clone)]
struct PendingRequest {
    chunk: usize,
    pred: TilePrediction,
    obs: MacroObservation,
}

#[derive(Debug, Clone)]
struct UserSim {
    state: UserStreamState,
    start_chunk: usize,
    played_slots: usize,
    /// Buffer content right now, in slots.
    live_buffer: usize,
    next_request: Option<usize>,
    pending: Option<PendingRequest>,
    active: Option<ActiveChunk>,
    last_view_quality: Option<f64>,
    chunks_requested: usize,
    pred_base: usize,
    pred_cache: Vec<HeadPose>,
}

/// The streaming environment for all users.
pub struct Env {
    setup: EnvSetup,
    tiling: Tiling,
    traces: Vec<HeadTrace>,
    videos: Vec<Arc<SaliencyVideo>>,
    predictor: Box<dyn PosePredictor>,
    users: Vec<UserSim>,
    t: usize,
    prev_believed: Vec<Vec<bool>>,
}

impl Env {
    /// `traces[u]` is what user `u` watches; `videos[u]` is its saliency.
    pub fn new(
        setup: EnvSetup,
        traces: Vec<HeadTrace>,
        videos: Vec<Arc<SaliencyVideo>>,
        predictor: Box<dyn PosePredictor>,
    ) -> Result<Self> {
        setup.geometry.validate()?;
        setup.video.validate()?;
        setup.fusion.validate()?;
        let u = setup.geometry.n_users();
        if traces.len() != u || videos.len() != u {
            return Err(CoreError::DimMismatch {
                context: "traces and videos per user",
                expected: u,
                actual: traces.len().min(videos.len()),
            });
        }
        if traces.iter().any(|t| t.poses.len() < setup.video.frames_per_chunk) {
            return Err(CoreError::Config("every trace must cover at least one chunk".into()));
        }
        if setup.video.frames_per_chunk % setup.video.chunk_slots != 0 {
            return Err(CoreError::Config("frames per chunk must be a multiple of slots per chunk".into()));
        }
        if setup.t_max == 0 {
            return Err(CoreError::Config("episode length must be positive".into()));
        }
        let tiling = Tiling::new(setup.video.tile_rows, setup.video.tile_cols);
        for v in &videos {
            let (w, h) = v.dims();
            if w < tiling.cols || h < tiling.rows || v.n_frames() == 0 {
                return Err(CoreError::Config("saliency maps are smaller than the tiling".into()));
            }
        }
        let mut env = Self {
            setup,
            tiling,
            traces,
            videos,
            predictor,
            users: Vec::new(),
            t: 0,
            prev_believed: Vec::new(),
        };
        env.reset(&vec![0; u])?;
        Ok(env)
    }

    pub fn setup(&self) -> &EnvSetup {
        &self.setup
    }

    pub fn tiling(&self) -> Tiling {
        self.tiling
    }

    pub fn n_users(&self) -> usize {
        self.setup.geometry.n_users()
    }

    pub fn n_aps(&self) -> usize {
        self.setup.geometry.n_aps()
    }

    pub fn n_tiles(&self) -> usize {
        self.tiling.n_tiles()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn done(&self) -> bool {
        self.t >= self.setup.t_max
    }

    pub fn video_chunks(&self, user: usize) -> usize {
        (self.traces[user].poses.len() / self.setup.video.frames_per_chunk).max(1)
    }

    /// Starts an episode with random start chunks.
    pub fn reset_random<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let starts: Vec<usize> = (0..self.n_users())
            .map(|u| rng.random_range(0..self.video_chunks(u)))
            .collect();
        self.reset(&starts)
    }

    /// Starts an episode; every user requests its first chunk in slot 0.
    pub fn reset(&mut self, start_chunks: &[usize]) -> Result<()> {
        if start_chunks.len() != self.n_users() {
            return Err(CoreError::DimMismatch {
                context: "start chunks",
                expected: self.n_users(),
                actual: start_chunks.len(),
            });
        }
        self.t = 0;
        self.users = start_chunks
            .iter()
            .map(|&s| UserSim {
                state: UserStreamState::new(self.setup.buffer_threshold),
                start_chunk: s,
                played_slots: 0,
                live_buffer: 0,
                next_request: Some(0),
                pending: None,
                active: None,
                last_view_quality: None,
                chunks_requested: 0,
                pred_base: 0,
                pred_cache: Vec::new(),
            })
            .collect();
        for u in 0..self.n_users() {
            self.prepare_request(u);
        }
        self.prev_believed = self.believed_nonblocked();
        Ok(())
    }

    fn frames_per_slot(&self) -> usize {
        self.setup.video.frames_per_chunk / self.setup.video.chunk_slots
    }

    /// Index of the next frame to play.
    fn play_position(&self, u: usize) -> usize {
        let s = &self.users[u];
        (s.start_chunk * self.setup.video.chunk_slots + s.played_slots) * self.frames_per_slot()
    }

    fn actual_pose(&self, u: usize) -> HeadPose {
        self.traces[u].pose(self.play_position(u))
    }

    pub fn actual_poses(&self) -> Vec<HeadPose> {
        (0..self.n_users()).map(|u| self.actual_pose(u)).collect()
    }

    /// Predicted pose for the frame being played now.
    pub fn predicted_pose(&self, u: usize) -> HeadPose {
        let pos = self.play_position(u);
        let s = &self.users[u];
        if pos > s.pred_base && pos - s.pred_base <= s.pred_cache.len() {
            return s.pred_cache[pos - s.pred_base - 1];
        }
        if pos == 0 {
            return self.traces[u].pose(0);
        }
        let last_seen = pos - 1;
        self.predictor
            .predict(u, &self.traces[u], last_seen, 1)
            .first()
            .copied()
            .unwrap_or_else(|| self.traces[u].pose(last_seen))
    }

    pub fn predicted_poses(&self) -> Vec<HeadPose> {
        (0..self.n_users()).map(|u| self.predicted_pose(u)).collect()
    }

    fn prepare_request(&mut self, u: usize) {
        let vc = &self.setup.video;
        let f = vc.frames_per_chunk;
        let pos = self.play_position(u);
        let last_seen = pos.saturating_sub(1);
        let chunk_rel = self.users[u].chunks_requested;
        let chunk_abs = self.users[u].start_chunk + chunk_rel;
        let first_frame = chunk_abs * f;
        let horizon = (first_frame + f).saturating_sub(last_seen + 1);
        let preds = self.predictor.predict(u, &self.traces[u], last_seen, horizon);
        let trace = &self.traces[u];
        let pose_at = |frame: usize| {
            if frame <= last_seen {
                trace.pose(frame)
            } else {
                preds[frame - last_seen - 1]
            }
        };
        let video = &self.videos[u];
        let (w, h) = video.dims();
        let fused: Vec<_> = (0..f)
            .map(|k| {
                let frame = first_frame + k;
                let pose = pose_at(frame);
                let sal = normalize_map(&video.frame(frame));
                let head = normalize_map(&head_orientation_map(&pose, w, h, self.setup.fusion.kernel_sigma));
                regional_fusion(&sal, &head, &self.tiling).expect("map sizes checked at construction")
            })
            .collect();
        let buffer = self.users[u].live_buffer;
        let gap = 1 + buffer / vc.chunk_slots;
        let pred = predict_chunk_tiles(&fused, &self.tiling, &self.setup.fusion, gap);
        let s = &mut self.users[u];
        let obs = MacroObservation {
            indicator: pred.indicator.clone(),
            avg_feature: pred.avg_feature.clone(),
            prev_trans_quality: if s.chunks_requested == 0 {
                1.0
            } else {
                s.state.last_avg_quality.unwrap_or(1.0)
            },
            buffer_at_request: buffer,
        };
        s.pred_base = last_seen;
        s.pred_cache = preds;
        s.pending = Some(PendingRequest {
            chunk: chunk_rel,
            pred,
            obs,
        });
    }

    /// Users that must choose tile qualities before the next step.
    pub fn requesting(&self) -> Vec<usize> {
        (0..self.n_users())
            .filter(|&u| self.users[u].pending.is_some())
            .collect()
    }

    pub fn macro_observation(&self, u: usize) -> Option<&MacroObservation> {
        self.users[u].pending.as_ref().map(|p| &p.obs)
    }

    pub fn pending_prediction(&self, u: usize) -> Option<&TilePrediction> {
        self.users[u].pending.as_ref().map(|p| &p.pred)
    }

    /// Answers a pending request with raw actor output.
    pub fn apply_macro_raw(&mut self, u: usize, raw: &[f64]) -> Result<MacroAction> {
        let pred = self
            .pending_prediction(u)
            .ok_or_else(|| CoreError::Domain(format!("user {u} has no pending request")))?;
        let act = apply_macro_action(raw, pred, &self.setup.video);
        self.apply_quality(u, act.levels.clone())?;
        Ok(act)
    }

    /// Answers a pending request with explicit per-tile levels. Levels on
    /// tiles outside the predicted set are zeroed.
    pub fn apply_quality(&mut self, u: usize, mut levels: QualitySelection) -> Result<()> {
        let m = self.setup.video.n_levels() as u8;
        let s = &mut self.users[u];
        let pending = s
            .pending
            .take()
            .ok_or_else(|| CoreError::Domain(format!("user {u} has no pending request")))?;
        if levels.len() != pending.pred.indicator.len() {
            let n = pending.pred.indicator.len();
            s.pending = Some(pending);
            return Err(CoreError::DimMismatch {
                context: "quality selection",
                expected: n,
                actual: levels.len(),
            });
        }
        for (l, &inside) in levels.iter_mut().zip(&pending.pred.indicator) {
            *l = if inside { (*l).clamp(1, m) } else { 0 };
        }
        let bits = chunk_size_bits(&levels, &self.setup.video);
        s.state.t_req = self.t;
        s.state.buffer_slots = s.live_buffer;
        s.state.chunk_index = pending.chunk;
        s.state.delta_rem = bits;
        s.state.delta_time = s.live_buffer as i64;
        s.next_request = None;
        s.chunks_requested += 1;
        s.active = Some(ActiveChunk {
            chunk: pending.chunk,
            levels,
            pred: pending.pred,
        });
        Ok(())
    }

    /// Predicted non-blocked APs for every user at the current slot.
    pub fn believed_nonblocked(&self) -> Vec<Vec<bool>> {
        nonblocked_all(&self.predicted_poses(), &self.setup.geometry)
    }

    pub fn actual_nonblocked(&self) -> Vec<Vec<bool>> {
        nonblocked_all(&self.actual_poses(), &self.setup.geometry)
    }

    pub fn prim_observations(&self) -> Vec<PrimObservation> {
        let nb = self.believed_nonblocked();
        self.users
            .iter()
            .zip(nb)
            .map(|(s, nonblocked)| PrimObservation {
                nonblocked,
                delta_rem: s.state.delta_rem,
                delta_time: s.state.delta_time,
            })
            .collect()
    }

    /// Scale used to normalise remaining bits in network inputs.
    pub fn bits_scale(&self) -> f64 {
        let vc = &self.setup.video;
        vc.chunk_seconds() * vc.bitrates[vc.bitrates.len() - 1] * self.n_tiles() as f64
    }

    pub fn time_scale(&self) -> f64 {
        (self.setup.buffer_threshold + self.setup.video.chunk_slots) as f64
    }

    pub fn prim_observation_vec(&self) -> Vec<f64> {
        let (bs, ts) = (self.bits_scale(), self.time_scale());
        self.prim_observations()
            .iter()
            .flat_map(|o| o.to_vec(bs, ts))
            .collect()
    }

    /// Channels for the current true head orientations.
    pub fn actual_channels(&self) -> Result<ChannelSet> {
        ChannelSet::build(&self.setup.geometry, &self.actual_poses(), &self.setup.phy)
    }

    /// Channels for the predicted head orientations.
    pub fn believed_channels(&self) -> Result<ChannelSet> {
        ChannelSet::build(&self.setup.geometry, &self.predicted_poses(), &self.setup.phy)
    }

    /// Levels of each user's in-flight chunk normalised by `M` (zeros when idle).
    pub fn joint_quality_vec(&self) -> Vec<f64> {
        let m = self.setup.video.n_levels() as f64;
        let n = self.n_tiles();
        self.users
            .iter()
            .flat_map(|s| match &s.active {
                Some(a) => a.levels.iter().map(|&l| l as f64 / m).collect::<Vec<_>>(),
                None => vec![0.0; n],
            })
            .collect()
    }

    pub fn stream_state(&self, u: usize) -> &UserStreamState {
        &self.users[u].state
    }

    pub fn live_buffer(&self, u: usize) -> usize {
        self.users[u].live_buffer
    }

    /// Advances one slot with the given beams.
    pub fn step(&mut self, beams: &BeamSet) -> Result<SlotOutcome> {
        if self.done() {
            return Err(CoreError::Domain("episode already finished".into()));
        }
        if let Some(u) = self.requesting().first() {
            return Err(CoreError::Domain(format!("user {u} has an unanswered chunk request")));
        }
        let n_users = self.n_users();
        if beams.n_users != n_users || beams.n_aps != self.n_aps() {
            return Err(CoreError::DimMismatch {
                context: "beam set users",
                expected: n_users,
                actual: beams.n_users,
            });
        }
        let t = self.t;
        let vc = self.setup.video.clone();
        let slot = vc.slot_seconds;
        let nb = self.actual_nonblocked();
        let channels = self.actual_channels()?;
        let rates = all_rates(beams, &channels, &nb, &self.setup.phy)?;
        let delta_rem_before: Vec<f64> = self.users.iter().map(|s| s.state.delta_rem).collect();
        let r_intr = intrinsic_reward(&rates, &delta_rem_before, self.setup.reward.lambda_intr, slot);

        let mut completions = Vec::new();
        for u in 0..n_users {
            let Some(active) = self.users[u].active.as_ref() else {
                continue;
            };
            let state = &self.users[u].state;
            let delivered = slot * rates[u];
            let finishing = state.delta_rem - delivered <= 0.0;
            let td = t - state.t_req + 1;
            if !finishing {
                update_stream_state(&mut self.users[u].state, delivered, td, vc.chunk_slots);
                continue;
            }
            let chunk = active.chunk;
            let levels = active.levels.clone();
            let pred_set = active.pred.pred_set.clone();
            let b_req = state.buffer_slots;
            let first_frame = (self.users[u].start_chunk + chunk) * vc.frames_per_chunk;
            let (fr, fc) = fov_footprint(self.setup.fusion.fov_lat_deg, self.setup.fusion.fov_lon_deg, &self.tiling);
            let mut actual: Vec<usize> = (0..vc.frames_per_chunk)
                .flat_map(|k| fov_tiles(&self.traces[u].pose(first_frame + k), &self.tiling, fr, fc))
                .collect();
            actual.sort_unstable();
            actual.dedup();
            let rebuffer = rebuffering_delay(td, b_req);
            let report = qoe_chunk(&levels, &actual, self.users[u].last_view_quality, rebuffer, &self.setup.qoe)?;
            let overlap = tiles_overlap(&pred_set, &actual)?;
            let trans = mean_transmitted_level(&levels);
            let wt = waiting_time(b_req, td, vc.chunk_slots, self.setup.buffer_threshold);
            let s = &mut self.users[u];
            update_stream_state(&mut s.state, delivered, td, vc.chunk_slots);
            s.state.last_avg_quality = Some(trans);
            s.last_view_quality = Some(report.avg_view_quality);
            s.next_request = Some(t + 1 + wt);
            s.active = None;
            completions.push(ChunkCompletion {
                user: u,
                chunk,
                request_slot: s.state.t_req,
                td,
                rebuffer,
                report,
                overlap,
                trans_quality: trans,
            });
        }

        // Playback and buffer move after delivery; a finished chunk lands at
        // the end of the slot.
        for u in 0..n_users {
            let s = &mut self.users[u];
            if s.live_buffer > 0 {
                s.played_slots += 1;
            }
            s.live_buffer = s.live_buffer.saturating_sub(1);
        }
        for c in &completions {
            self.users[c.user].live_buffer += vc.chunk_slots;
        }

        self.t += 1;
        let done = self.done();
        let mut requests_next = Vec::new();
        if !done {
            for u in 0..n_users {
                if self.users[u].next_request == Some(self.t) {
                    self.prepare_request(u);
                    requests_next.push(u);
                }
            }
        }
        let r_extr = extrinsic_reward(&completions);
        Ok(SlotOutcome {
            t,
            rates,
            delta_rem_before,
            delta_rem: self.users.iter().map(|s| s.state.delta_rem).collect(),
            r_extr,
            r_intr,
            completions,
            requests_next,
            done,
        })
    }
}

/// One JSON-lines record of the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotLogRecord {
    pub episode: usize,
    pub t: usize,
    pub rate: Vec<f64>,
    pub delta_rem: Vec<f64>,
    pub r_extr: f64,
    pub r_intr: f64,
    pub completions: Vec<ChunkCompletion>,
}

impl SlotLogRecord {
    pub fn new(episode: usize, o: &SlotOutcome) -> Self {
        Self {
            episode,
            t: o.t,
            rate: o.rates.clone(),
            delta_rem: o.delta_rem.clone(),
            r_extr: o.r_extr,
            r_intr: o.r_intr,
            completions: o.completions.clone(),
        }
    }
}
