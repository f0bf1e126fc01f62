//! Equirectangular feature maps, head-orientation maps, regional fusion of
//! saliency and head maps, and viewport / marginal tile selection.
//!
//! Pixel `(x, y)` of a `W x H` map looks at longitude `(x + 0.5) / W * 2pi`
//! and latitude `(y + 0.5) / H * pi`. Tile `(row, col)` has index
//! `row * cols + col`; rows run along latitude, columns along longitude.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::phy::HeadPose;
use crate::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    /// Row-major, `data[y * width + x]`.
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }
}

pub fn pixel_direction(x: usize, y: usize, width: usize, height: usize) -> (f64, f64) {
    let phi = (x as f64 + 0.5) / width as f64 * 2.0 * PI;
    let theta = (y as f64 + 0.5) / height as f64 * PI;
    (theta, phi)
}

/// Unit vector of a `(theta, phi)` direction, `theta` from the north pole.
pub fn unit_vector(dir: (f64, f64)) -> [f64; 3] {
    let (st, ct) = dir.0.sin_cos();
    let (sp, cp) = dir.1.sin_cos();
    [st * cp, st * sp, ct]
}

/// Angle between two unit vectors.
pub fn angle_between(u: &[f64; 3], v: &[f64; 3]) -> f64 {
    let cross = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let s = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let c = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    s.atan2(c)
}

/// Great-circle distance between two `(theta, phi)` directions, with `theta`
/// measured from the north pole.
pub fn great_circle(a: (f64, f64), b: (f64, f64)) -> f64 {
    angle_between(&unit_vector(a), &unit_vector(b))
}

/// Unit vectors of every pixel centre, row-major.
pub fn pixel_unit_vectors(width: usize, height: usize) -> Vec<[f64; 3]> {
    let rows: Vec<(f64, f64)> = (0..height).map(|y| pixel_direction(0, y, width, height).0.sin_cos()).collect();
    let cols: Vec<(f64, f64)> = (0..width).map(|x| pixel_direction(x, 0, width, height).1.sin_cos()).collect();
    rows.iter()
        .flat_map(|&(st, ct)| cols.iter().map(move |&(sp, cp)| [st * cp, st * sp, ct]))
        .collect()
}

/// Gaussian kernel over great-circle distance from the head direction.
pub fn head_orientation_map(pose: &HeadPose, width: usize, height: usize, sigma: f64) -> FeatureMap {
    let centre = unit_vector((pose.theta, pose.phi));
    let s2 = 2.0 * sigma * sigma;
    FeatureMap {
        width,
        height,
        data: pixel_unit_vectors(width, height)
            .iter()
            .map(|p| {
                let d = angle_between(p, &centre);
                (-d * d / s2).exp()
            })
            .collect(),
    }
}

/// Min-max scaling to `[0, 1]`; a constant map becomes all zeros.
pub fn normalize_map(m: &FeatureMap) -> FeatureMap {
    let lo = m.data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = m.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let data = if hi > lo {
        m.data.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; m.data.len()]
    };
    FeatureMap {
        width: m.width,
        height: m.height,
        data,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tiling {
    pub rows: usize,
    pub cols: usize,
}

impl Tiling {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn n_tiles(&self) -> usize {
        self.rows * self.cols
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn row_col(&self, tile: usize) -> (usize, usize) {
        (tile / self.cols, tile % self.cols)
    }

    /// Pixel column range of tile column `col` in a map of width `w`.
    pub fn x_range(&self, col: usize, w: usize) -> std::ops::Range<usize> {
        col * w / self.cols..(col + 1) * w / self.cols
    }

    pub fn y_range(&self, row: usize, h: usize) -> std::ops::Range<usize> {
        row * h / self.rows..(row + 1) * h / self.rows
    }

    pub fn check_map(&self, m: &FeatureMap) -> Result<()> {
        if m.width < self.cols || m.height < self.rows {
            return Err(CoreError::Config(format!(
                "{}x{} map is smaller than the {}x{} tiling",
                m.width, m.height, self.cols, self.rows
            )));
        }
        Ok(())
    }

    /// 4-neighbours with longitude wrap, ascending.
    pub fn neighbours(&self, tile: usize) -> Vec<usize> {
        let (r, c) = self.row_col(tile);
        let mut out = Vec::with_capacity(4);
        if r > 0 {
            out.push(self.index(r - 1, c));
        }
        if r + 1 < self.rows {
            out.push(self.index(r + 1, c));
        }
        if self.cols > 1 {
            out.push(self.index(r, (c + self.cols - 1) % self.cols));
            out.push(self.index(r, (c + 1) % self.cols));
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Tile containing the given direction.
    pub fn tile_of(&self, pose: &HeadPose) -> usize {
        let row = ((pose.theta / PI * self.rows as f64) as usize).min(self.rows - 1);
        let col = ((pose.phi.rem_euclid(2.0 * PI) / (2.0 * PI) * self.cols as f64) as usize) % self.cols;
        self.index(row, col)
    }
}

fn tile_reduce(m: &FeatureMap, t: &Tiling, init: f64, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.n_tiles());
    for r in 0..t.rows {
        for c in 0..t.cols {
            let mut acc = init;
            for y in t.y_range(r, m.height) {
                for x in t.x_range(c, m.width) {
                    acc = f(acc, m.get(x, y));
                }
            }
            out.push(acc);
        }
    }
    out
}

/// Largest pixel value within each tile.
pub fn tile_max(m: &FeatureMap, t: &Tiling) -> Vec<f64> {
    tile_reduce(m, t, f64::NEG_INFINITY, f64::max)
}

/// Mean pixel value within each tile.
pub fn tile_mean(m: &FeatureMap, t: &Tiling) -> Vec<f64> {
    let sums = tile_reduce(m, t, 0.0, |a, v| a + v);
    (0..t.n_tiles())
        .map(|i| {
            let (r, c) = t.row_col(i);
            let n = t.y_range(r, m.height).len() * t.x_range(c, m.width).len();
            sums[i] / n as f64
        })
        .collect()
}

/// Squared gap between the largest and mean per-tile maximum.
pub fn fusion_weight(tile_maxima: &[f64]) -> f64 {
    if tile_maxima.is_empty() {
        return 0.0;
    }
    let hi = tile_maxima.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gap = tile_maxima.iter().map(|v| hi - v).sum::<f64>() / tile_maxima.len() as f64;
    gap * gap
}

/// Weighted sum of the normalised saliency and head maps; each weight grows
/// with how peaked the map's per-tile maxima are.
pub fn regional_fusion(sal: &FeatureMap, head: &FeatureMap, t: &Tiling) -> Result<FeatureMap> {
    if sal.width != head.width || sal.height != head.height {
        return Err(CoreError::DimMismatch {
            context: "fusion map size",
            expected: sal.data.len(),
            actual: head.data.len(),
        });
    }
    t.check_map(sal)?;
    let ws = fusion_weight(&tile_max(sal, t));
    let wm = fusion_weight(&tile_max(head, t));
    let data = sal
        .data
        .iter()
        .zip(&head.data)
        .map(|(s, m)| ws * s + wm * m)
        .collect();
    Ok(FeatureMap {
        width: sal.width,
        height: sal.height,
        data,
    })
}

/// Tile footprint of a field of view, `ceil(fov / tile angle)` per axis,
/// capped at the tiling size.
pub fn fov_footprint(fov_lat_deg: f64, fov_lon_deg: f64, t: &Tiling) -> (usize, usize) {
    let rows = (fov_lat_deg / (180.0 / t.rows as f64) - 1e-9).ceil().max(1.0) as usize;
    let cols = (fov_lon_deg / (360.0 / t.cols as f64) - 1e-9).ceil().max(1.0) as usize;
    (rows.min(t.rows), cols.min(t.cols))
}

/// Tiles of the rectangle with top-left tile `(row, col)`, ascending.
pub fn rectangle(t: &Tiling, row: usize, col: usize, fov_rows: usize, fov_cols: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (row..row + fov_rows)
        .flat_map(|r| (0..fov_cols).map(move |k| (r, (col + k) % t.cols)))
        .map(|(r, c)| t.index(r, c))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Rectangle of `fov_rows x fov_cols` tiles with the largest summed feature.
///
/// Rectangles wrap in longitude only; ties go to the first rectangle in
/// row-then-column scan order.
pub fn select_viewport_tiles(tile_features: &[f64], t: &Tiling, fov_rows: usize, fov_cols: usize) -> Vec<usize> {
    let fov_rows = fov_rows.clamp(1, t.rows);
    let fov_cols = fov_cols.clamp(1, t.cols);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for r in 0..=t.rows - fov_rows {
        for c in 0..t.cols {
            let rect = rectangle(t, r, c, fov_rows, fov_cols);
            let s: f64 = rect.iter().map(|&i| tile_features[i]).sum();
            if best.as_ref().is_none_or(|(b, _)| s > *b) {
                best = Some((s, rect));
            }
        }
    }
    best.map(|(_, r)| r).unwrap_or_default()
}

/// Tiles seen by a viewer looking at `pose`: the rectangle centred on the view
/// direction.
pub fn fov_tiles(pose: &HeadPose, t: &Tiling, fov_rows: usize, fov_cols: usize) -> Vec<usize> {
    let fov_rows = fov_rows.clamp(1, t.rows);
    let fov_cols = fov_cols.clamp(1, t.cols);
    let y = pose.theta / PI * t.rows as f64;
    let x = pose.phi.rem_euclid(2.0 * PI) / (2.0 * PI) * t.cols as f64;
    let row = (y - fov_rows as f64 / 2.0).round().clamp(0.0, (t.rows - fov_rows) as f64) as usize;
    let col = (x - fov_cols as f64 / 2.0).round().rem_euclid(t.cols as f64) as usize % t.cols;
    rectangle(t, row, col, fov_rows, fov_cols)
}

/// Number of extra tiles sent around the viewport for a request made
/// `chunk_gap` chunks ahead of playback.
pub fn marginal_count(alpha_marg: f64, chunk_gap: usize, n_view: usize) -> usize {
    let v = ((alpha_marg * chunk_gap as f64 - 1.0) * n_view as f64).floor();
    if v > 0.0 {
        v as usize
    } else {
        0
    }
}

/// Greedily grows the viewport by `count` adjacent tiles of highest feature.
///
/// Returns `(pred_set, marginal_in_pick_order)`; `pred_set` is ascending.
pub fn expand_marginal(tile_features: &[f64], t: &Tiling, view: &[usize], count: usize) -> (Vec<usize>, Vec<usize>) {
    let mut member = vec![false; t.n_tiles()];
    for &v in view {
        member[v] = true;
    }
    let mut picked = Vec::with_capacity(count);
    for _ in 0..count {
        let mut best: Option<usize> = None;
        for n in 0..t.n_tiles() {
            if member[n] || !t.neighbours(n).iter().any(|&k| member[k]) {
                continue;
            }
            if best.is_none_or(|b| tile_features[n] > tile_features[b]) {
                best = Some(n);
            }
        }
        match best {
            Some(b) => {
                member[b] = true;
                picked.push(b);
            }
            None => break,
        }
    }
    let pred = (0..t.n_tiles()).filter(|&n| member[n]).collect();
    (pred, picked)
}

/// `|pred ∩ actual| / |actual|`.
pub fn tiles_overlap(pred: &[usize], actual: &[usize]) -> Result<f64> {
    if actual.is_empty() {
        return Err(CoreError::Domain("empty viewed-tile set".into()));
    }
    let hit = actual.iter().filter(|a| pred.contains(a)).count();
    Ok(hit as f64 / actual.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub kernel_sigma: f64,
    pub alpha_marg: f64,
    pub fov_lat_deg: f64,
    pub fov_lon_deg: f64,
    pub map_width: usize,
    pub map_height: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            kernel_sigma: 0.35,
            alpha_marg: 0.15,
            fov_lat_deg: 90.0,
            fov_lon_deg: 135.0,
            map_width: 48,
            map_height: 24,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kernel_sigma > 0.0) {
            return Err(CoreError::Config("fusion.kernel_sigma must be positive".into()));
        }
        if !(self.alpha_marg >= 0.0) {
            return Err(CoreError::Config("fusion.alpha_marg must be non-negative".into()));
        }
        if self.map_width == 0 || self.map_height == 0 {
            return Err(CoreError::Config("fusion map size must be positive".into()));
        }
        Ok(())
    }
}

/// Tile sets and features for one requested chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct TilePrediction {
    pub view_sets: Vec<Vec<usize>>,
    pub marginal_sets: Vec<Vec<usize>>,
    pub pred_set: Vec<usize>,
    pub indicator: Vec<bool>,
    /// Per-tile mean of the normalised fused feature, averaged over frames.
    pub avg_feature: Vec<f64>,
}

impl TilePrediction {
    pub fn indicator_f64(&self) -> Vec<f64> {
        self.indicator.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Union of per-frame viewport sets.
    pub fn view_union(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.view_sets.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Viewport, marginal and predicted tiles for a chunk from per-frame fused maps.
pub fn predict_chunk_tiles(
    fused_frames: &[FeatureMap],
    t: &Tiling,
    cfg: &FusionConfig,
    chunk_gap: usize,
) -> TilePrediction {
    let (fr, fc) = fov_footprint(cfg.fov_lat_deg, cfg.fov_lon_deg, t);
    let n = t.n_tiles();
    let mut indicator = vec![false; n];
    let mut avg = vec![0.0; n];
    let mut view_sets = Vec::with_capacity(fused_frames.len());
    let mut marginal_sets = Vec::with_capacity(fused_frames.len());
    for frame in fused_frames {
        let feats = tile_mean(&normalize_map(frame), t);
        for (a, f) in avg.iter_mut().zip(&feats) {
            *a += f;
        }
        let view = select_viewport_tiles(&feats, t, fr, fc);
        let count = marginal_count(cfg.alpha_marg, chunk_gap.max(1), view.len());
        let (pred, marg) = expand_marginal(&feats, t, &view, count);
        for p in pred {
            indicator[p] = true;
        }
        view_sets.push(view);
        marginal_sets.push(marg);
    }
    if !fused_frames.is_empty() {
        let k = fused_frames.len() as f64;
        avg.iter_mut().for_each(|a| *a = (*a / k).clamp(0.0, 1.0));
    }
    let pred_set = (0..n).filter(|&i| indicator[i]).collect();
    TilePrediction {
        view_sets,
        marginal_sets,
        pred_set,
        indicator,
        avg_feature: avg,
    }
}
