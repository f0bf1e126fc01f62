//! Saliency map providers: the `SMAP` binary file format and a synthetic
//! mixture-of-Gaussians generator with drifting centres.
//!
//! `SMAP` layout: magic `SMAP`, u32 width, u32 height, u32 frame count, then
//! `frames * width * height` little-endian `f32`, row-major per frame.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fusion::{angle_between, pixel_unit_vectors, unit_vector, FeatureMap};
use crate::{CoreError, Result};

const MAGIC: &[u8; 4] = b"SMAP";

/// Anything that can hand out one saliency map per video frame.
pub trait SaliencyProvider {
    fn dims(&self) -> (usize, usize);
    fn n_frames(&self) -> usize;
    /// Map for `frame`; frames past the end wrap around.
    fn frame(&self, frame: usize) -> FeatureMap;
}

/// Saliency maps held in memory, one per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyVideo {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<FeatureMap>,
}

impl SaliencyProvider for SaliencyVideo {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn n_frames(&self) -> usize {
        self.frames.len()
    }

    fn frame(&self, frame: usize) -> FeatureMap {
        self.frames[frame % self.frames.len()].clone()
    }
}

impl SaliencyVideo {
    pub fn write_smap<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.width, self.height, self.frames.len()] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for f in &self.frames {
            for &v in &f.data {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_smap<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CoreError::Format("saliency file lacks SMAP magic".into()));
        }
        let mut word = [0u8; 4];
        let mut header = [0usize; 3];
        for h in &mut header {
            r.read_exact(&mut word)?;
            *h = u32::from_le_bytes(word) as usize;
        }
        let [width, height, n] = header;
        if width == 0 || height == 0 || n == 0 {
            return Err(CoreError::Format("saliency file has an empty dimension".into()));
        }
        let mut frames = Vec::with_capacity(n);
        let mut buf = vec![0u8; width * height * 4];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            let data = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect::<Vec<_>>();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::Format("non-finite saliency value".into()));
            }
            frames.push(FeatureMap { width, height, data });
        }
        Ok(Self { width, height, frames })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_smap(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_smap(std::io::BufReader::new(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSaliencyConfig {
    pub components: usize,
    /// Blob width in radians.
    pub sigma: f64,
    /// Longitude drift per frame in radians.
    pub drift: f64,
    pub n_frames: usize,
    pub width: usize,
    pub height: usize,
}

impl Default for SyntheticSaliencyConfig {
    fn default() -> Self {
        Self {
            components: 2,
            sigma: 0.4,
            drift: 0.004,
            n_frames: 300,
            width: 48,
            height: 24,
        }
    }
}

/// Blob centres of a synthetic saliency video.
///
/// Blobs start evenly spread in longitude (with jitter) and all drift at the
/// same signed rate, so they never merge. Latitude bobs slowly around the
/// equator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyScene {
    pub sigma: f64,
    pub start: Vec<(f64, f64)>,
    pub drift: f64,
    pub bob_amplitude: f64,
    pub bob_phase: Vec<f64>,
    pub n_frames: usize,
}

impl SaliencyScene {
    pub fn random<R: Rng + ?Sized>(cfg: &SyntheticSaliencyConfig, rng: &mut R) -> Self {
        let k = cfg.components.max(1);
        let spacing = 2.0 * PI / k as f64;
        let base = rng.random_range(0.0..2.0 * PI);
        let start = (0..k)
            .map(|i| {
                let theta = rng.random_range(0.4 * PI..0.6 * PI);
                let jitter = rng.random_range(-0.15..0.15) * spacing;
                (theta, (base + i as f64 * spacing + jitter).rem_euclid(2.0 * PI))
            })
            .collect();
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        Self {
            sigma: cfg.sigma,
            start,
            drift: sign * cfg.drift,
            bob_amplitude: if cfg.drift == 0.0 { 0.0 } else { 0.08 * PI },
            bob_phase: (0..k).map(|_| rng.random_range(0.0..2.0 * PI)).collect(),
            n_frames: cfg.n_frames,
        }
    }

    pub fn n_components(&self) -> usize {
        self.start.len()
    }

    /// Centre `(theta, phi)` of blob `k` at `frame`.
    pub fn center(&self, k: usize, frame: usize) -> (f64, f64) {
        let f = frame as f64;
        let (t0, p0) = self.start[k];
        let theta = t0 + self.bob_amplitude * (0.01 * f + self.bob_phase[k]).sin();
        ((theta).clamp(0.05, PI - 0.05), (p0 + self.drift * f).rem_euclid(2.0 * PI))
    }

    pub fn render(&self, frame: usize, width: usize, height: usize) -> FeatureMap {
        self.render_with(frame, width, height, &pixel_unit_vectors(width, height))
    }

    fn render_with(&self, frame: usize, width: usize, height: usize, pixels: &[[f64; 3]]) -> FeatureMap {
        let centres: Vec<_> = (0..self.n_components())
            .map(|k| unit_vector(self.center(k, frame)))
            .collect();
        let s2 = 2.0 * self.sigma * self.sigma;
        FeatureMap {
            width,
            height,
            data: pixels
                .iter()
                .map(|p| {
                    centres
                        .iter()
                        .map(|c| {
                            let d = angle_between(p, c);
                            (-d * d / s2).exp()
                        })
                        .sum()
                })
                .collect(),
        }
    }

    pub fn to_video(&self, width: usize, height: usize) -> SaliencyVideo {
        SaliencyVideo {
            width,
            height,
            frames: {
                let pixels = pixel_unit_vectors(width, height);
                (0..self.n_frames)
                    .map(|f| self.render_with(f, width, height, &pixels))
                    .collect()
            },
        }
    }
}

/// Strict local maxima of a map (8-neighbourhood, longitude wraps).
pub fn local_maxima(m: &FeatureMap) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..m.height {
        for x in 0..m.width {
            let v = m.get(x, y);
            let mut is_max = true;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let ny = y as i64 + dy;
                    if ny < 0 || ny >= m.height as i64 {
                        continue;
                    }
                    let nx = (x as i64 + dx).rem_euclid(m.width as i64) as usize;
                    if (nx, ny as usize) != (x, y) && m.get(nx, ny as usize) >= v {
                        is_max = false;
                    }
                }
            }
            if is_max {
                out.push((x, y));
            }
        }
    }
    out
}
