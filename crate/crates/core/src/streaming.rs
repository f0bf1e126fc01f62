//! Tile quality bookkeeping, chunk request timing, buffer dynamics and the
//! per-chunk QoE score.

use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoConfig {
    pub tile_rows: usize,
    pub tile_cols: usize,
    pub frames_per_chunk: usize,
    pub chunk_slots: usize,
    pub slot_seconds: f64,
    /// Ascending bitrates in bits/s; level `m` maps to entry `m - 1`.
    pub bitrates: Vec<f64>,
    pub n_chunks: usize,
}

impl Default for VideoConfig {
    fn default() -> Self {
        Self {
            tile_rows: 4,
            tile_cols: 6,
            frames_per_chunk: 30,
            chunk_slots: 10,
            slot_seconds: 0.1,
            bitrates: vec![28e6, 33e6, 38e6, 43e6, 48e6],
            n_chunks: 60,
        }
    }
}

impl VideoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::Config(m.to_string()));
        if self.tile_rows == 0 || self.tile_cols == 0 {
            return bad("tiling must have at least one row and column");
        }
        if self.frames_per_chunk == 0 || self.chunk_slots == 0 || self.n_chunks == 0 {
            return bad("frames, slots and chunks per video must be positive");
        }
        if !(self.slot_seconds > 0.0) {
            return bad("slot duration must be positive");
        }
        if self.bitrates.is_empty() || self.bitrates.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("bitrates must be non-empty and strictly ascending");
        }
        if !(self.bitrates[0] > 0.0) {
            return bad("bitrates must be positive");
        }
        Ok(())
    }

    pub fn n_tiles(&self) -> usize {
        self.tile_rows * self.tile_cols
    }

    pub fn n_levels(&self) -> usize {
        self.bitrates.len()
    }

    pub fn chunk_seconds(&self) -> f64 {
        self.chunk_slots as f64 * self.slot_seconds
    }

    pub fn bitrate(&self, level: u8) -> f64 {
        if level == 0 {
            0.0
        } else {
            self.bitrates[level as usize - 1]
        }
    }
}

/// Quality level per tile; 0 means the tile is not sent.
pub type QualitySelection = Vec<u8>;

/// Size of one chunk at the selected qualities.
pub fn chunk_size_bits(sel: &[u8], vc: &VideoConfig) -> f64 {
    let rate: f64 = sel.iter().map(|&l| vc.bitrate(l)).sum();
    vc.chunk_slots as f64 * vc.slot_seconds * rate
}

/// Slots needed to deliver `chunk_bits`, counting the request slot.
///
/// Returns `None` if the listed rates never deliver the chunk.
pub fn transmission_delay(rates: &[f64], chunk_bits: f64, slot_seconds: f64) -> Option<usize> {
    if chunk_bits <= 0.0 {
        return Some(1);
    }
    let mut delivered = 0.0;
    for (i, r) in rates.iter().enumerate() {
        delivered += slot_seconds * r.max(0.0);
        if delivered >= chunk_bits {
            return Some(i + 1);
        }
    }
    None
}

/// Idle time before the next request so that the buffer stays under the threshold.
pub fn waiting_time(buffer: usize, td: usize, chunk_slots: usize, threshold: usize) -> usize {
    (buffer.saturating_sub(td) + chunk_slots).saturating_sub(threshold)
}

/// Stall time while downloading a chunk.
pub fn rebuffering_delay(td: usize, buffer_at_request: usize) -> usize {
    td.saturating_sub(buffer_at_request)
}

/// Per-user streaming state between requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserStreamState {
    pub buffer_slots: usize,
    pub chunk_index: usize,
    pub t_req: usize,
    pub delta_rem: f64,
    pub delta_time: i64,
    pub buffer_threshold: usize,
    pub last_avg_quality: Option<f64>,
}

impl UserStreamState {
    pub fn new(buffer_threshold: usize) -> Self {
        Self {
            buffer_slots: 0,
            chunk_index: 0,
            t_req: 0,
            delta_rem: 0.0,
            delta_time: 0,
            buffer_threshold,
            last_avg_quality: None,
        }
    }

    /// Moves to the next request after a chunk took `td` slots and the client
    /// idled `wt` slots.
    pub fn advance_request(&self, td: usize, wt: usize, chunk_slots: usize) -> Self {
        let buffer = (self.buffer_slots.saturating_sub(td) + chunk_slots).saturating_sub(wt);
        Self {
            buffer_slots: buffer,
            chunk_index: self.chunk_index + 1,
            t_req: self.t_req + td + wt,
            ..self.clone()
        }
    }
}

/// Largest quality level whose bitrate does not exceed `nu` (clamped to the ladder).
pub fn round_bitrate(nu: f64, vc: &VideoConfig) -> u8 {
    let lo = vc.bitrates[0];
    let hi = vc.bitrates[vc.bitrates.len() - 1];
    let nu = if nu.is_nan() { lo } else { nu.clamp(lo, hi) };
    vc.bitrates.iter().take_while(|&&b| b <= nu).count() as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QoeConfig {
    pub lambda_spatial: f64,
    pub lambda_temp: f64,
    pub lambda_rd: f64,
}

impl Default for QoeConfig {
    fn default() -> Self {
        Self {
            lambda_spatial: 0.5,
            lambda_temp: 0.5,
            lambda_rd: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoeReport {
    pub avg_view_quality: f64,
    pub spatial_var: f64,
    pub temporal_switch: f64,
    pub rebuffer_slots: f64,
    pub qoe: f64,
}

/// QoE of one chunk over the tiles the user actually looked at.
pub fn qoe_chunk(
    sel: &[u8],
    actual_tiles: &[usize],
    prev_avg: Option<f64>,
    rebuffer_slots: usize,
    qc: &QoeConfig,
) -> Result<QoeReport> {
    if actual_tiles.is_empty() {
        return Err(CoreError::Domain("no viewed tiles for QoE".into()));
    }
    let levels: Vec<f64> = actual_tiles
        .iter()
        .map(|&n| sel.get(n).copied().unwrap_or(0) as f64)
        .collect();
    let k = levels.len() as f64;
    let mean = levels.iter().sum::<f64>() / k;
    let var = levels.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / k;
    let temp = prev_avg.map_or(0.0, |p| (mean - p).abs());
    let rd = rebuffer_slots as f64;
    Ok(QoeReport {
        avg_view_quality: mean,
        spatial_var: var,
        temporal_switch: temp,
        rebuffer_slots: rd,
        qoe: mean - qc.lambda_spatial * var - qc.lambda_temp * temp - qc.lambda_rd * rd,
    })
}

/// Mean level over the transmitted tiles (0 when nothing is sent).
pub fn mean_transmitted_level(sel: &[u8]) -> f64 {
    let sent: Vec<f64> = sel.iter().filter(|&&l| l > 0).map(|&l| l as f64).collect();
    if sent.is_empty() {
        0.0
    } else {
        sent.iter().sum::<f64>() / sent.len() as f64
    }
}
