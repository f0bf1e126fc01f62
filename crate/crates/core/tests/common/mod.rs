//! Small hand-built environments shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thz360_core::env::{Env, EnvSetup, RewardConfig};
use thz360_core::fusion::{FeatureMap, FusionConfig};
use thz360_core::phy::{Geometry, HeadPose, Phy, PhyConfig, Point3};
use thz360_core::predictor::{OraclePredictor, PosePredictor};
use thz360_core::saliency::SaliencyVideo;
use thz360_core::streaming::{QoeConfig, VideoConfig};
use thz360_core::traces::{generate_trace, HeadTrace, Persona};

pub const APS: [Point3; 3] = [[9.0, 1.0, 4.0], [5.0, 5.0, 4.0], [1.0, 9.0, 4.0]];

pub struct Spec {
    pub aps: Vec<Point3>,
    pub users: Vec<Point3>,
    pub phi_blocked: f64,
    pub video: VideoConfig,
    pub fusion: FusionConfig,
    pub phy: PhyConfig,
    pub buffer_threshold: usize,
    pub t_max: usize,
}

impl Spec {
    pub fn new(n_users: usize) -> Self {
        let users = (0..n_users)
            .map(|u| [2.0 + 6.0 * u as f64 / n_users.max(1) as f64, 3.0 + u as f64, 1.6])
            .collect();
        Self {
            aps: APS.to_vec(),
            users,
            phi_blocked: PI,
            video: VideoConfig {
                tile_rows: 2,
                tile_cols: 4,
                n_chunks: 6,
                ..VideoConfig::default()
            },
            fusion: FusionConfig {
                map_width: 16,
                map_height: 8,
                ..FusionConfig::default()
            },
            phy: PhyConfig {
                n_tx: 2,
                n_rx: 1,
                ..PhyConfig::default()
            },
            buffer_threshold: 30,
            t_max: 60,
        }
    }

    pub fn setup(&self) -> EnvSetup {
        EnvSetup {
            phy: Phy::new(&self.phy).unwrap(),
            geometry: Geometry {
                ap_positions: self.aps.clone(),
                user_positions: self.users.clone(),
                phi_blocked: self.phi_blocked,
            },
            video: self.video.clone(),
            qoe: QoeConfig::default(),
            fusion: self.fusion,
            reward: RewardConfig::default(),
            buffer_threshold: self.buffer_threshold,
            t_max: self.t_max,
        }
    }

    pub fn frames(&self) -> usize {
        self.video.n_chunks * self.video.frames_per_chunk
    }

    /// Environment with random persona traces and a two-blob saliency map.
    pub fn build(&self, seed: u64, predictor: Box<dyn PosePredictor>) -> Env {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let traces = (0..self.users.len())
            .map(|u| HeadTrace {
                user: u as u32,
                video: 0,
                poses: generate_trace(&Persona::preset(u), None, (PI / 2.0, u as f64), self.frames(), &mut rng),
            })
            .collect();
        self.build_with(traces, predictor)
    }

    /// Every user holds `pose` for the whole video.
    pub fn build_fixed(&self, pose: HeadPose) -> Env {
        let traces = (0..self.users.len())
            .map(|u| HeadTrace {
                user: u as u32,
                video: 0,
                poses: vec![pose; self.frames()],
            })
            .collect();
        self.build_with(traces, Box::new(OraclePredictor))
    }

    pub fn build_with(&self, traces: Vec<HeadTrace>, predictor: Box<dyn PosePredictor>) -> Env {
        let (w, h) = (self.fusion.map_width, self.fusion.map_height);
        let frame = FeatureMap::from_fn(w, h, |x, y| {
            let a = (x as f64 - 3.0).powi(2) + (y as f64 - 3.0).powi(2);
            let b = (x as f64 - 11.0).powi(2) + (y as f64 - 5.0).powi(2);
            (-a / 4.0).exp() + 0.5 * (-b / 4.0).exp()
        });
        let video = Arc::new(SaliencyVideo {
            width: w,
            height: h,
            frames: vec![frame],
        });
        Env::new(self.setup(), traces, vec![video; self.users.len()], predictor).unwrap()
    }
}
