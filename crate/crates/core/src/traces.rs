//! Head-movement traces: CSV reading/writing and a persona-driven synthetic
//! generator.
//!
//! CSV header: `user_id,video_id,frame_index,theta_rad,phi_rad`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::phy::{wrap_pi, HeadPose};
use crate::saliency::SaliencyScene;
use crate::{CoreError, Result};

/// Head poses of one user watching one video, one per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTrace {
    pub user: u32,
    pub video: u32,
    pub poses: Vec<HeadPose>,
}

impl HeadTrace {
    /// Pose at `frame`; frames past the end wrap around.
    pub fn pose(&self, frame: usize) -> HeadPose {
        self.poses[frame % self.poses.len()]
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    user_id: u32,
    video_id: u32,
    frame_index: usize,
    theta_rad: f64,
    phi_rad: f64,
}

pub fn write_traces(traces: &[HeadTrace], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for t in traces {
        for (i, p) in t.poses.iter().enumerate() {
            w.serialize(TraceRow {
                user_id: t.user,
                video_id: t.video,
                frame_index: i,
                theta_rad: p.theta,
                phi_rad: p.phi,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace CSV; frames of each (user, video) must be contiguous from 0.
pub fn read_traces(path: &Path) -> Result<Vec<HeadTrace>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut grouped: BTreeMap<(u32, u32), Vec<(usize, HeadPose)>> = BTreeMap::new();
    for row in r.deserialize() {
        let row: TraceRow = row?;
        if !(0.0..=PI).contains(&row.theta_rad) || !row.phi_rad.is_finite() {
            return Err(CoreError::Format(format!(
                "pose out of range for user {} frame {}",
                row.user_id, row.frame_index
            )));
        }
        grouped
            .entry((row.user_id, row.video_id))
            .or_default()
            .push((row.frame_index, HeadPose::new(row.theta_rad, row.phi_rad)));
    }
    grouped
        .into_iter()
        .map(|((user, video), mut rows)| {
            rows.sort_by_key(|r| r.0);
            if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
                return Err(CoreError::Format(format!(
                    "frames of user {user} video {video} are not contiguous from 0"
                )));
            }
            Ok(HeadTrace {
                user,
                video,
                poses: rows.into_iter().map(|r| r.1).collect(),
            })
        })
        .collect()
}

/// Viewing habits of one synthetic user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    /// Saliency blob the user tends to follow, if any.
    pub follow: Option<usize>,
    /// Preferred offset from the followed target, `(dtheta, dphi)`.
    pub offset: (f64, f64),
    /// Fraction of the gap to the target closed each frame.
    pub pull: f64,
    /// Longitude drift of the free attractor per frame.
    pub drift: f64,
    /// Per-frame angular noise in radians.
    pub noise: f64,
}

impl Persona {
    /// One of four distinct built-in habits.
    pub fn preset(k: usize) -> Self {
        match k % 4 {
            0 => Self {
                follow: None,
                offset: (0.0, 0.0),
                pull: 0.08,
                drift: 0.012,
                noise: 0.01,
            },
            1 => Self {
                follow: None,
                offset: (0.25, PI),
                pull: 0.08,
                drift: -0.012,
                noise: 0.01,
            },
            2 => Self {
                follow: Some(0),
                offset: (-0.2, 0.3),
                pull: 0.1,
                drift: 0.0,
                noise: 0.01,
            },
            _ => Self {
                follow: Some(1),
                offset: (0.2, -0.3),
                pull: 0.1,
                drift: 0.0,
                noise: 0.01,
            },
        }
    }
}

/// Generates a trace of `n_frames` poses that relaxes toward the persona's
/// moving target with Gaussian jitter. The trace starts on the target.
pub fn generate_trace<R: Rng + ?Sized>(
    persona: &Persona,
    scene: Option<&SaliencyScene>,
    base: (f64, f64),
    n_frames: usize,
    rng: &mut R,
) -> Vec<HeadPose> {
    let target = |f: usize| -> (f64, f64) {
        let (t, p) = match (persona.follow, scene) {
            (Some(k), Some(s)) if s.n_components() > 0 => s.center(k % s.n_components(), f),
            _ => (base.0, base.1 + persona.drift * f as f64),
        };
        ((t + persona.offset.0).clamp(0.1, PI - 0.1), p + persona.offset.1)
    };
    let mut out = Vec::with_capacity(n_frames);
    let (mut theta, mut phi) = target(0);
    for f in 0..n_frames {
        if f > 0 {
            let (tt, tp) = target(f);
            let n1: f64 = rng.sample(StandardNormal);
            let n2: f64 = rng.sample(StandardNormal);
            theta += persona.pull * (tt - theta) + persona.noise * n1;
            phi += persona.pull * wrap_pi(tp - phi) + persona.noise * n2;
            theta = theta.clamp(0.0, PI);
        }
        out.push(HeadPose::new(theta, phi));
    }
    out
}
