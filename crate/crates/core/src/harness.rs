//! Experiment configuration, scenario construction, the train-and-evaluate
//! pipeline and metric aggregation.

use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thz360_neural::checkpoint;

use crate::baselines::{ReactiveBlockage, WmmseConfig};
use crate::env::{Env, EnvSetup, RewardConfig, SlotLogRecord};
use crate::fusion::FusionConfig;
use crate::hddpg::{train, write_curve, TrainConfig, TrainOutput};
use crate::headpred::{build_dataset, prediction_horizon, train_fedavg, train_pfl, HeadModel, HeadModelConfig, PflConfig};
use crate::phy::{Geometry, Phy, PhyConfig, Point3};
use crate::policy::{
    run_episode, BeamPolicy, DrlBeams, DrlMacro, MacroPolicy, PriorityMacro, RandomBeams, RandomMacro, WmmseBeams,
};
use crate::predictor::{ModelPredictor, OraclePredictor, PersistencePredictor, PosePredictor};
use crate::saliency::{SaliencyScene, SaliencyVideo, SyntheticSaliencyConfig};
use crate::streaming::{QoeConfig, VideoConfig};
use crate::traces::{generate_trace, read_traces, write_traces, HeadTrace, Persona};
use crate::{CoreError, Result};

/// Which combination of predictor, bitrate and beam policy to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Learned bitrate and beams with personalised head prediction.
    Drl,
    /// Learned bitrate, WMMSE beams.
    Wmmse,
    /// Priority bitrate, pose persistence and WMMSE beams with delayed blockage detection.
    Priority,
    /// Learned policies with a shared federated head model and no marginal tiles.
    FedavgPred,
    /// Learned policies with perfect head prediction.
    OraclePred,
    /// Uniformly random bitrate and beams.
    Random,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Drl,
        PolicyKind::Wmmse,
        PolicyKind::Priority,
        PolicyKind::FedavgPred,
        PolicyKind::OraclePred,
        PolicyKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Drl => "drl",
            PolicyKind::Wmmse => "wmmse",
            PolicyKind::Priority => "priority",
            PolicyKind::FedavgPred => "fedavg-pred",
            PolicyKind::OraclePred => "oracle-pred",
            PolicyKind::Random => "random",
        }
    }

    pub fn uses_drl(self) -> bool {
        matches!(
            self,
            PolicyKind::Drl | PolicyKind::Wmmse | PolicyKind::FedavgPred | PolicyKind::OraclePred
        )
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| CoreError::Config(format!("unknown policy '{s}'")))
    }
}

/// AP placement: the three ceiling APs, one of the two-AP subsets, or explicit positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApLayout {
    Default,
    /// First and third APs only.
    PairOuter,
    /// First and centre APs only.
    PairCentre,
    Custom(Vec<Point3>),
}

const DEFAULT_APS: [Point3; 3] = [[9.0, 1.0, 4.0], [5.0, 5.0, 4.0], [1.0, 9.0, 4.0]];

impl ApLayout {
    pub fn positions(&self) -> Vec<Point3> {
        match self {
            ApLayout::Default => DEFAULT_APS.to_vec(),
            ApLayout::PairOuter => vec![DEFAULT_APS[0], DEFAULT_APS[2]],
            ApLayout::PairCentre => vec![DEFAULT_APS[0], DEFAULT_APS[1]],
            ApLayout::Custom(p) => p.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Room length, width and height in metres.
    pub room: [f64; 3],
    pub ap_layout: ApLayout,
    pub n_users: usize,
    pub user_height: f64,
    pub phi_blocked: f64,
    pub n_videos: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            room: [10.0, 10.0, 4.0],
            ap_layout: ApLayout::Default,
            n_users: 6,
            user_height: 1.6,
            phi_blocked: PI,
            n_videos: 2,
        }
    }
}

/// Users at the centres of a near-square grid of equal floor areas.
pub fn user_positions(room: [f64; 3], n_users: usize, height: f64) -> Vec<Point3> {
    if n_users == 0 {
        return Vec::new();
    }
    let cols = (n_users as f64).sqrt().ceil() as usize;
    let rows = n_users.div_ceil(cols);
    (0..n_users)
        .map(|k| {
            let (r, c) = (k / cols, k % cols);
            [
                room[0] * (c as f64 + 0.5) / cols as f64,
                room[1] * (r as f64 + 0.5) / rows as f64,
                height,
            ]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub policy: PolicyKind,
    pub phy: PhyConfig,
    pub scenario: ScenarioConfig,
    pub video: VideoConfig,
    pub qoe: QoeConfig,
    pub fusion: FusionConfig,
    pub saliency: SyntheticSaliencyConfig,
    pub head_model: HeadModelConfig,
    pub pfl: PflConfig,
    /// Frames between consecutive training windows.
    pub dataset_stride: usize,
    pub train: TrainConfig,
    pub reward: RewardConfig,
    pub wmmse: WmmseConfig,
    pub buffer_threshold: usize,
    pub t_max: usize,
    pub eval_episodes: usize,
    pub reactive_delay_slots: usize,
    /// Test traces to use instead of generated ones.
    pub traces_path: Option<PathBuf>,
    /// Training traces to use instead of generated ones.
    pub train_traces_path: Option<PathBuf>,
    /// Directory holding `video_<k>.smap` files to use instead of generated saliency.
    pub saliency_dir: Option<PathBuf>,
    /// Directory with trained head models (`headpred_user<u>.ckpt`).
    pub headpred_dir: Option<PathBuf>,
    /// Directory with trained actors (`macro_actor_<u>.nnck`, `prim_actor.nnck`).
    pub drl_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            policy: PolicyKind::Drl,
            phy: PhyConfig::default(),
            scenario: ScenarioConfig::default(),
            video: VideoConfig::default(),
            qoe: QoeConfig::default(),
            fusion: FusionConfig::default(),
            saliency: SyntheticSaliencyConfig::default(),
            head_model: HeadModelConfig {
                gru_layers: 1,
                hidden: 16,
                q_hist: 30,
                q_pred: 120,
            },
            pfl: PflConfig {
                rounds: 10,
                local_iters: 3,
                lr: 1e-4,
                finetune_steps: 10,
                finetune_lr: 1e-4,
            },
            dataset_stride: 60,
            train: TrainConfig::default(),
            reward: RewardConfig::default(),
            wmmse: WmmseConfig {
                max_iters: 30,
                ..WmmseConfig::default()
            },
            buffer_threshold: 30,
            t_max: 153,
            eval_episodes: 5,
            reactive_delay_slots: 3,
            traces_path: None,
            train_traces_path: None,
            saliency_dir: None,
            headpred_dir: None,
            drl_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Full-size head model, federated training and DDPG settings.
    pub fn full() -> Self {
        Self {
            head_model: HeadModelConfig::default(),
            pfl: PflConfig::default(),
            train: TrainConfig::full(),
            wmmse: WmmseConfig::default(),
            dataset_stride: 30,
            eval_episodes: 20,
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CoreError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| CoreError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: CoreError| CoreError::Config(format!("{name}: {e}"));
        Phy::new(&self.phy).map_err(|e| field("phy", e))?;
        self.video.validate().map_err(|e| field("video", e))?;
        self.fusion.validate().map_err(|e| field("fusion", e))?;
        self.train.validate().map_err(|e| field("train", e))?;
        self.wmmse.validate().map_err(|e| field("wmmse", e))?;
        self.geometry().validate().map_err(|e| field("scenario", e))?;
        let bad = |m: &str| Err(CoreError::Config(m.to_string()));
        if self.scenario.n_videos == 0 {
            return bad("scenario.n_videos must be positive");
        }
        if self.t_max == 0 || self.eval_episodes == 0 {
            return bad("t_max and eval_episodes must be positive");
        }
        if self.buffer_threshold < self.video.chunk_slots {
            return bad("buffer_threshold must hold at least one chunk");
        }
        if self.head_model.q_hist == 0 || self.head_model.q_pred == 0 || self.head_model.gru_layers == 0 {
            return bad("head_model sizes must be positive");
        }
        if !(self.reward.gamma > 0.0 && self.reward.gamma <= 1.0) || self.reward.lambda_intr < 0.0 {
            return bad("reward.gamma must lie in (0, 1] and reward.lambda_intr must be non-negative");
        }
        if !(self.qoe.lambda_spatial >= 0.0 && self.qoe.lambda_temp >= 0.0 && self.qoe.lambda_rd >= 0.0) {
            return bad("qoe weights must be non-negative");
        }
        let fpc = self.video.frames_per_chunk;
        if fpc % self.video.chunk_slots != 0 {
            return bad("video.frames_per_chunk must be a multiple of video.chunk_slots");
        }
        for (name, p) in [
            ("traces_path", &self.traces_path),
            ("train_traces_path", &self.train_traces_path),
            ("saliency_dir", &self.saliency_dir),
            ("headpred_dir", &self.headpred_dir),
            ("drl_dir", &self.drl_dir),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(CoreError::Config(format!("{name}: {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            ap_positions: self.scenario.ap_layout.positions(),
            user_positions: user_positions(self.scenario.room, self.scenario.n_users, self.scenario.user_height),
            phi_blocked: self.scenario.phi_blocked,
        }
    }

    pub fn env_setup(&self) -> Result<EnvSetup> {
        Ok(EnvSetup {
            phy: Phy::new(&self.phy)?,
            geometry: self.geometry(),
            video: self.video.clone(),
            qoe: self.qoe,
            fusion: self.fusion,
            reward: self.reward,
            buffer_threshold: self.buffer_threshold,
            t_max: self.t_max,
        })
    }

    /// Head model settings with the horizon stretched to cover the buffer.
    pub fn head_model_config(&self) -> HeadModelConfig {
        let need = prediction_horizon(self.video.frames_per_chunk, self.buffer_threshold, self.video.chunk_slots);
        HeadModelConfig {
            q_pred: self.head_model.q_pred.max(need),
            ..self.head_model
        }
    }

    fn frames_per_video(&self) -> usize {
        self.video.n_chunks * self.video.frames_per_chunk
    }
}

/// Independent random streams derived from the experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Scenario = 1,
    HeadModel = 2,
    Drl = 3,
    Evaluation = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Saliency videos and head traces for one experiment.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub videos: Vec<Arc<SaliencyVideo>>,
    /// One evaluation trace per user, in user order.
    pub test_traces: Vec<HeadTrace>,
    /// Training traces, one per user and video.
    pub train_traces: Vec<HeadTrace>,
}

impl ScenarioData {
    /// Saliency video watched by each user.
    pub fn user_videos(&self) -> Vec<Arc<SaliencyVideo>> {
        self.test_traces
            .iter()
            .map(|t| self.videos[t.video as usize % self.videos.len()].clone())
            .collect()
    }
}

pub fn video_file(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("video_{k}.smap"))
}

/// Synthetic saliency scenes, one per video.
pub fn synth_scenes<R: Rng + ?Sized>(cfg: &ExperimentConfig, rng: &mut R) -> Vec<SaliencyScene> {
    let sal = SyntheticSaliencyConfig {
        n_frames: cfg.frames_per_video(),
        width: cfg.fusion.map_width,
        height: cfg.fusion.map_height,
        ..cfg.saliency
    };
    (0..cfg.scenario.n_videos).map(|_| SaliencyScene::random(&sal, rng)).collect()
}

/// Renders scenes into saliency files under `dir`.
pub fn synth_saliency(scenes: &[SaliencyScene], width: usize, height: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    scenes
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let path = video_file(dir, k);
            s.to_video(width, height).save(&path)?;
            Ok(path)
        })
        .collect()
}

fn gen_traces<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    scenes: &[SaliencyScene],
    rng: &mut R,
) -> (Vec<HeadTrace>, Vec<HeadTrace>) {
    let n = cfg.frames_per_video();
    let nv = scenes.len();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for u in 0..cfg.scenario.n_users {
        let persona = Persona::preset(u);
        for (v, scene) in scenes.iter().enumerate() {
            let base = (PI / 2.0, rng.random_range(0.0..2.0 * PI));
            train.push(HeadTrace {
                user: u as u32,
                video: v as u32,
                poses: generate_trace(&persona, Some(scene), base, n, rng),
            });
        }
        let v = u % nv;
        let base = (PI / 2.0, rng.random_range(0.0..2.0 * PI));
        test.push(HeadTrace {
            user: u as u32,
            video: v as u32,
            poses: generate_trace(&persona, Some(&scenes[v]), base, n, rng),
        });
    }
    (train, test)
}

/// Builds saliency and traces, loading any configured files.
pub fn build_scenario(cfg: &ExperimentConfig) -> Result<ScenarioData> {
    let mut rng = stream_rng(cfg.seed, Stream::Scenario);
    let scenes = synth_scenes(cfg, &mut rng);
    let (mut train, mut test) = gen_traces(cfg, &scenes, &mut rng);
    let videos = match &cfg.saliency_dir {
        Some(dir) => (0..cfg.scenario.n_videos)
            .map(|k| SaliencyVideo::load(&video_file(dir, k)).map(Arc::new))
            .collect::<Result<Vec<_>>>()?,
        None => scenes
            .iter()
            .map(|s| Arc::new(s.to_video(cfg.fusion.map_width, cfg.fusion.map_height)))
            .collect(),
    };
    if let Some(p) = &cfg.traces_path {
        test = pick_user_traces(read_traces(p)?, cfg.scenario.n_users)?;
    }
    if let Some(p) = &cfg.train_traces_path {
        train = read_traces(p)?;
    }
    Ok(ScenarioData {
        videos,
        test_traces: test,
        train_traces: train,
    })
}

fn pick_user_traces(all: Vec<HeadTrace>, n_users: usize) -> Result<Vec<HeadTrace>> {
    (0..n_users as u32)
        .map(|u| {
            all.iter()
                .find(|t| t.user == u)
                .cloned()
                .ok_or_else(|| CoreError::Config(format!("traces_path: no trace for user {u}")))
        })
        .collect()
}

/// Writes generated traces as `traces.csv` and `train_traces.csv`.
pub fn write_scenario_traces(data: &ScenarioData, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_traces(&data.test_traces, &dir.join("traces.csv"))?;
    write_traces(&data.train_traces, &dir.join("train_traces.csv"))
}

pub fn headpred_file(dir: &Path, u: usize) -> PathBuf {
    dir.join(format!("headpred_user{u}.ckpt"))
}

/// Personalised head models, one per user.
pub fn train_headpred(cfg: &ExperimentConfig, data: &ScenarioData) -> Result<Vec<HeadModel>> {
    let mcfg = cfg.head_model_config();
    let mut rng = stream_rng(cfg.seed, Stream::HeadModel);
    let init = HeadModel::random(mcfg, &mut rng)?;
    let ds = build_dataset(
        &data.train_traces,
        mcfg.q_hist,
        mcfg.q_pred,
        cfg.dataset_stride,
        cfg.video.frames_per_chunk,
    );
    if ds.len() != cfg.scenario.n_users || ds.iter().any(|d| d.samples.is_empty()) {
        return Err(CoreError::Config(
            "training traces must give every user at least one full history/prediction window".into(),
        ));
    }
    train_pfl(&init, &ds, &cfg.pfl)
}

fn train_shared_headpred(cfg: &ExperimentConfig, data: &ScenarioData) -> Result<HeadModel> {
    let mcfg = cfg.head_model_config();
    let mut rng = stream_rng(cfg.seed, Stream::HeadModel);
    let init = HeadModel::random(mcfg, &mut rng)?;
    let ds = build_dataset(
        &data.train_traces,
        mcfg.q_hist,
        mcfg.q_pred,
        cfg.dataset_stride,
        cfg.video.frames_per_chunk,
    );
    train_fedavg(&init, &ds, &cfg.pfl)
}

fn predictor_for(cfg: &ExperimentConfig, data: &ScenarioData) -> Result<Box<dyn PosePredictor>> {
    Ok(match cfg.policy {
        PolicyKind::Drl | PolicyKind::Wmmse => {
            let models = match &cfg.headpred_dir {
                Some(dir) => (0..cfg.scenario.n_users)
                    .map(|u| HeadModel::load(&headpred_file(dir, u)))
                    .collect::<Result<Vec<_>>>()?,
                None => train_headpred(cfg, data)?,
            };
            Box::new(ModelPredictor { models })
        }
        PolicyKind::FedavgPred => Box::new(ModelPredictor::shared(
            train_shared_headpred(cfg, data)?,
            cfg.scenario.n_users,
        )),
        PolicyKind::OraclePred => Box::new(OraclePredictor),
        PolicyKind::Priority | PolicyKind::Random => Box::new(PersistencePredictor),
    })
}

/// Environment for the configured policy, training any head predictor it needs.
pub fn build_env(cfg: &ExperimentConfig, data: &ScenarioData) -> Result<Env> {
    let mut setup = cfg.env_setup()?;
    if cfg.policy == PolicyKind::FedavgPred {
        setup.fusion.alpha_marg = 0.0;
    }
    let predictor = predictor_for(cfg, data)?;
    Env::new(setup, data.test_traces.clone(), data.user_videos(), predictor)
}

pub fn macro_actor_file(dir: &Path, u: usize) -> PathBuf {
    dir.join(format!("macro_actor_{u}.nnck"))
}

pub fn prim_actor_file(dir: &Path) -> PathBuf {
    dir.join("prim_actor.nnck")
}

pub fn save_actors(out: &TrainOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (u, a) in out.macro_actors.iter().enumerate() {
        checkpoint::save(a, &macro_actor_file(dir, u))?;
    }
    checkpoint::save(&out.prim_actor, &prim_actor_file(dir))?;
    Ok(())
}

pub fn load_actors(dir: &Path, n_users: usize) -> Result<TrainOutput> {
    Ok(TrainOutput {
        macro_actors: (0..n_users)
            .map(|u| checkpoint::load(&macro_actor_file(dir, u)))
            .collect::<std::result::Result<Vec<_>, _>>()?,
        prim_actor: checkpoint::load(&prim_actor_file(dir))?,
        curve: Vec::new(),
    })
}

/// Trains the hierarchical agents on `env`.
pub fn train_drl(cfg: &ExperimentConfig, env: &mut Env) -> Result<TrainOutput> {
    let mut rng = stream_rng(cfg.seed, Stream::Drl);
    train(env, cfg.train.clone(), &mut rng)
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub policy: String,
    pub seed: u64,
    pub avg_view_quality: f64,
    pub avg_spatial_switch: f64,
    pub avg_temporal_switch: f64,
    pub avg_rebuffer_slots: f64,
    pub avg_sum_rate_bps: f64,
    pub avg_qoe: f64,
    pub avg_tiles_overlap: f64,
}

/// Running sums over slot records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsAccumulator {
    slots: usize,
    sum_rate: f64,
    chunks: usize,
    view_quality: f64,
    spatial: f64,
    temporal: f64,
    rebuffer: f64,
    qoe: f64,
    overlap: f64,
    chunk_qoe: Vec<f64>,
}

impl MetricsAccumulator {
    pub fn add(&mut self, rec: &SlotLogRecord) {
        self.slots += 1;
        self.sum_rate += rec.rate.iter().sum::<f64>();
        for c in &rec.completions {
            self.chunks += 1;
            self.view_quality += c.report.avg_view_quality;
            self.spatial += c.report.spatial_var;
            self.temporal += c.report.temporal_switch;
            self.rebuffer += c.report.rebuffer_slots;
            self.qoe += c.report.qoe;
            self.overlap += c.overlap;
            self.chunk_qoe.push(c.report.qoe);
        }
    }

    /// QoE of every completed chunk, in log order.
    pub fn chunk_qoe(&self) -> &[f64] {
        &self.chunk_qoe
    }

    pub fn finish(&self, policy: &str, seed: u64) -> RunMetrics {
        let per_chunk = |x: f64| if self.chunks > 0 { x / self.chunks as f64 } else { 0.0 };
        RunMetrics {
            policy: policy.to_string(),
            seed,
            avg_view_quality: per_chunk(self.view_quality),
            avg_spatial_switch: per_chunk(self.spatial),
            avg_temporal_switch: per_chunk(self.temporal),
            avg_rebuffer_slots: per_chunk(self.rebuffer),
            avg_sum_rate_bps: if self.slots > 0 {
                self.sum_rate / self.slots as f64
            } else {
                0.0
            },
            avg_qoe: per_chunk(self.qoe),
            avg_tiles_overlap: per_chunk(self.overlap),
        }
    }
}

/// Recomputes run metrics from a slot log.
pub fn metrics_from_log<'a>(records: impl IntoIterator<Item = &'a SlotLogRecord>, policy: &str, seed: u64) -> RunMetrics {
    let mut acc = MetricsAccumulator::default();
    for r in records {
        acc.add(r);
    }
    acc.finish(policy, seed)
}

/// Fraction of values at or below each threshold.
pub fn cdf(values: &[f64], thresholds: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(CoreError::Domain("distribution of no values".into()));
    }
    let n = values.len() as f64;
    Ok(thresholds
        .iter()
        .map(|t| values.iter().filter(|v| **v <= *t).count() as f64 / n)
        .collect())
}

/// Fraction of values strictly above each threshold.
pub fn ccdf(values: &[f64], thresholds: &[f64]) -> Result<Vec<f64>> {
    Ok(cdf(values, thresholds)?.into_iter().map(|c| 1.0 - c).collect())
}

/// `count` evenly spaced thresholds spanning the values.
pub fn thresholds(values: &[f64], count: usize) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || count == 0 {
        return Vec::new();
    }
    if count == 1 || hi == lo {
        return vec![lo];
    }
    (0..count)
        .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
        .collect()
}

pub fn write_metrics(rows: &[RunMetrics], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<RunMetrics>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

pub fn write_jsonl(records: &[SlotLogRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<SlotLogRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

fn write_distribution(values: &[f64], path: &Path) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        threshold: f64,
        cdf: f64,
        ccdf: f64,
    }
    let mut w = csv::Writer::from_path(path)?;
    if !values.is_empty() {
        let th = thresholds(values, 51);
        let c = cdf(values, &th)?;
        for (t, c) in th.into_iter().zip(c) {
            w.serialize(Row {
                threshold: t,
                cdf: c,
                ccdf: 1.0 - c,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Bitrate and beam policies for the configured policy kind.
pub fn make_policies(
    cfg: &ExperimentConfig,
    actors: Option<&TrainOutput>,
) -> Result<(Box<dyn MacroPolicy>, Box<dyn BeamPolicy>)> {
    let need = || {
        actors.ok_or_else(|| CoreError::Config(format!("policy {} needs trained actors", cfg.policy)))
    };
    let wmmse = |reactive: bool| WmmseBeams {
        cfg: cfg.wmmse.clone(),
        reactive: reactive.then(|| ReactiveBlockage::new(cfg.reactive_delay_slots)),
    };
    Ok(match cfg.policy {
        PolicyKind::Drl | PolicyKind::FedavgPred | PolicyKind::OraclePred => {
            let a = need()?;
            (
                Box::new(DrlMacro::new(a.macro_actors.clone())),
                Box::new(DrlBeams::new(a.prim_actor.clone())),
            )
        }
        PolicyKind::Wmmse => (
            Box::new(DrlMacro::new(need()?.macro_actors.clone())),
            Box::new(wmmse(false)),
        ),
        PolicyKind::Priority => (Box::new(PriorityMacro::default()), Box::new(wmmse(true))),
        PolicyKind::Random => (Box::new(RandomMacro), Box::new(RandomBeams)),
    })
}

/// Runs `cfg.eval_episodes` evaluation episodes.
pub fn evaluate_policies(
    cfg: &ExperimentConfig,
    env: &mut Env,
    macro_policy: &mut dyn MacroPolicy,
    beam_policy: &mut dyn BeamPolicy,
) -> Result<Vec<SlotLogRecord>> {
    let mut rng = stream_rng(cfg.seed, Stream::Evaluation);
    let mut log = Vec::new();
    for e in 0..cfg.eval_episodes {
        log.extend(run_episode(env, macro_policy, beam_policy, e, &mut rng)?);
    }
    Ok(log)
}

/// Everything one run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub log: Vec<SlotLogRecord>,
    pub chunk_qoe: Vec<f64>,
}

/// Builds the scenario, trains what the policy needs, evaluates, and
/// writes `metrics.csv`, `episodes.jsonl`, `qoe_distribution.csv` and any
/// training artefacts into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let data = build_scenario(cfg)?;
    let mut env = build_env(cfg, &data)?;
    let actors = if cfg.policy.uses_drl() {
        Some(match &cfg.drl_dir {
            Some(dir) => load_actors(dir, cfg.scenario.n_users)?,
            None => {
                let out = train_drl(cfg, &mut env)?;
                write_curve(&out.curve, &out_dir.join("training_curve.csv"))?;
                save_actors(&out, out_dir)?;
                out
            }
        })
    } else {
        None
    };
    let (mut mp, mut bp) = make_policies(cfg, actors.as_ref())?;
    let log = evaluate_policies(cfg, &mut env, mp.as_mut(), bp.as_mut())?;
    let mut acc = MetricsAccumulator::default();
    for r in &log {
        acc.add(r);
    }
    let metrics = acc.finish(cfg.policy.name(), cfg.seed);
    write_metrics(std::slice::from_ref(&metrics), &out_dir.join("metrics.csv"))?;
    write_jsonl(&log, &out_dir.join("episodes.jsonl"))?;
    write_distribution(acc.chunk_qoe(), &out_dir.join("qoe_distribution.csv"))?;
    Ok(RunOutput {
        metrics,
        log,
        chunk_qoe: acc.chunk_qoe().to_vec(),
    })
}
