//! Encoder-decoder GRU head-movement predictor and its federated training:
//! personalised (shared recurrent body, frozen per-user head during rounds,
//! then local fine-tuning) and plain FedAvg.
//!
//! Poses enter the network as `(theta, sin phi, cos phi)`. The loss is the
//! squared sequence distance between predicted and true angles, with the
//! longitude difference taken along the shortest arc.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thz360_neural::{read_checkpoint, write_checkpoint, LayerSpec, NetworkParams};

use crate::phy::{wrap_pi, HeadPose};
use crate::traces::HeadTrace;
use crate::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadModelConfig {
    pub gru_layers: usize,
    pub hidden: usize,
    pub q_hist: usize,
    pub q_pred: usize,
}

impl Default for HeadModelConfig {
    fn default() -> Self {
        Self {
            gru_layers: 4,
            hidden: 64,
            q_hist: 90,
            q_pred: 120,
        }
    }
}

/// Prediction horizon covering the buffered frames plus one chunk.
pub fn prediction_horizon(frames_per_chunk: usize, max_buffer_threshold: usize, chunk_slots: usize) -> usize {
    frames_per_chunk + frames_per_chunk * max_buffer_threshold / chunk_slots
}

pub fn encode_pose(p: &HeadPose) -> Vec<f64> {
    vec![p.theta, p.phi.sin(), p.phi.cos()]
}

/// Output is an offset from the last observed pose, so an all-zero output
/// repeats that pose.
fn decode(out: &[f64], last: &HeadPose) -> HeadPose {
    HeadPose::new(last.theta + out[0], last.phi + out[1].atan2(1.0 + out[2]))
}

/// History-to-future training window.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub hist: Vec<HeadPose>,
    pub target: Vec<HeadPose>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserData {
    pub user: u32,
    pub samples: Vec<Sample>,
    /// Number of chunks watched; sets the aggregation weight.
    pub chunk_count: usize,
}

/// Cuts traces into contiguous, non-overlapping `(q_hist, q_pred)` windows.
///
/// Users are ordered by id; windows start every `stride` frames.
pub fn build_dataset(
    traces: &[HeadTrace],
    q_hist: usize,
    q_pred: usize,
    stride: usize,
    frames_per_chunk: usize,
) -> Vec<UserData> {
    let mut users: Vec<u32> = traces.iter().map(|t| t.user).collect();
    users.sort_unstable();
    users.dedup();
    users
        .into_iter()
        .map(|u| {
            let mut samples = Vec::new();
            let mut chunks = 0;
            for t in traces.iter().filter(|t| t.user == u) {
                chunks += t.poses.len() / frames_per_chunk.max(1);
                let mut start = 0;
                while start + q_hist + q_pred <= t.poses.len() {
                    samples.push(Sample {
                        hist: t.poses[start..start + q_hist].to_vec(),
                        target: t.poses[start + q_hist..start + q_hist + q_pred].to_vec(),
                    });
                    start += stride.max(1);
                }
            }
            UserData {
                user: u,
                samples,
                chunk_count: chunks,
            }
        })
        .collect()
}

/// Squared sequence distance, shortest-arc in longitude.
pub fn sequence_sq_error(pred: &[HeadPose], actual: &[HeadPose]) -> f64 {
    pred.iter()
        .zip(actual)
        .map(|(p, a)| (p.theta - a.theta).powi(2) + wrap_pi(p.phi - a.phi).powi(2))
        .sum()
}

/// Mean squared sequence distance over matched prediction/actual sequences.
pub fn head_loss(preds: &[Vec<HeadPose>], actuals: &[Vec<HeadPose>]) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    preds
        .iter()
        .zip(actuals)
        .map(|(p, a)| sequence_sq_error(p, a))
        .sum::<f64>()
        / preds.len() as f64
}

/// Encoder GRU stack, decoder GRU stack, and a per-step FC output head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadModel {
    pub cfg: HeadModelConfig,
    pub encoder: NetworkParams,
    pub decoder: NetworkParams,
    pub head: NetworkParams,
}

impl HeadModel {
    pub fn zeros(cfg: HeadModelConfig) -> Result<Self> {
        if cfg.gru_layers == 0 || cfg.hidden == 0 || cfg.q_hist == 0 || cfg.q_pred == 0 {
            return Err(CoreError::Config("head model sizes must be positive".into()));
        }
        let stack = vec![LayerSpec::Gru { hidden: cfg.hidden }; cfg.gru_layers];
        Ok(Self {
            cfg,
            encoder: NetworkParams::new(3, stack.clone())?,
            decoder: NetworkParams::new(cfg.hidden, stack)?,
            head: NetworkParams::new(cfg.hidden, vec![LayerSpec::Fc { out: 3 }])?,
        })
    }

    pub fn random<R: Rng + ?Sized>(cfg: HeadModelConfig, rng: &mut R) -> Result<Self> {
        let mut m = Self::zeros(cfg)?;
        m.encoder.init_uniform(rng);
        m.decoder.init_uniform(rng);
        m.head.init_uniform(rng);
        Ok(m)
    }

    /// Shared recurrent parameters (encoder then decoder).
    pub fn gru_params(&self) -> Vec<f64> {
        [self.encoder.params(), self.decoder.params()].concat()
    }

    pub fn set_gru_params(&mut self, p: &[f64]) -> Result<()> {
        let n = self.encoder.len();
        if p.len() != n + self.decoder.len() {
            return Err(CoreError::DimMismatch {
                context: "recurrent parameters",
                expected: n + self.decoder.len(),
                actual: p.len(),
            });
        }
        self.encoder.set_params(&p[..n])?;
        self.decoder.set_params(&p[n..])?;
        Ok(())
    }

    pub fn fc_params(&self) -> &[f64] {
        self.head.params()
    }

    pub fn set_fc_params(&mut self, p: &[f64]) -> Result<()> {
        Ok(self.head.set_params(p)?)
    }

    pub fn all_params(&self) -> Vec<f64> {
        [self.gru_params(), self.fc_params().to_vec()].concat()
    }

    pub fn set_all_params(&mut self, p: &[f64]) -> Result<()> {
        let g = self.encoder.len() + self.decoder.len();
        if p.len() != g + self.head.len() {
            return Err(CoreError::DimMismatch {
                context: "head model parameters",
                expected: g + self.head.len(),
                actual: p.len(),
            });
        }
        self.set_gru_params(&p[..g])?;
        self.set_fc_params(&p[g..])
    }

    fn check_hist(&self, hist: &[HeadPose]) -> Result<()> {
        if hist.len() != self.cfg.q_hist {
            return Err(CoreError::DimMismatch {
                context: "history length",
                expected: self.cfg.q_hist,
                actual: hist.len(),
            });
        }
        Ok(())
    }

    fn raw_forward(&self, hist: &[HeadPose]) -> Result<RawPass> {
        let xs: Vec<Vec<f64>> = hist.iter().map(encode_pose).collect();
        let enc = self.encoder.forward(&xs, None, None)?;
        let last = enc.outputs.last().cloned().unwrap_or_default();
        let dec_in = vec![last; self.cfg.q_pred];
        let dec = self.decoder.forward(&dec_in, Some(&enc.final_hidden), None)?;
        let head = self.head.forward(&dec.outputs, None, None)?;
        Ok(RawPass { enc, dec, head })
    }

    /// Predicted poses for the next `q_pred` frames.
    pub fn predict(&self, hist: &[HeadPose]) -> Result<Vec<HeadPose>> {
        self.check_hist(hist)?;
        let pass = self.raw_forward(hist)?;
        let last = hist[hist.len() - 1];
        Ok(pass.head.outputs.iter().map(|o| decode(o, &last)).collect())
    }

    /// Squared error of one sample and its gradient, laid out as
    /// `[encoder | decoder | head]`.
    pub fn sample_loss_grad(&self, s: &Sample) -> Result<(f64, Vec<f64>)> {
        self.check_hist(&s.hist)?;
        let pass = self.raw_forward(&s.hist)?;
        let mut loss = 0.0;
        let mut d_head = Vec::with_capacity(self.cfg.q_pred);
        let last = s.hist[s.hist.len() - 1];
        for (o, a) in pass.head.outputs.iter().zip(&s.target) {
            let (sn, cs) = (o[1], 1.0 + o[2]);
            let p = decode(o, &last);
            let dth = p.theta - a.theta;
            let dphi = wrap_pi(p.phi - a.phi);
            loss += dth * dth + dphi * dphi;
            let r2 = sn * sn + cs * cs;
            let (gs, gc) = if r2 > 1e-300 {
                (2.0 * dphi * cs / r2, -2.0 * dphi * sn / r2)
            } else {
                (0.0, 0.0)
            };
            let raw_th = last.theta + o[0];
            let gt = if raw_th > 0.0 && raw_th < PI { 2.0 * dth } else { 0.0 };
            d_head.push(vec![gt, gs, gc]);
        }
        let g_head = self.head.backward(&pass.head, &d_head, None)?;
        let g_dec = self.decoder.backward(&pass.dec, &g_head.inputs, None)?;
        let mut d_enc_out = vec![vec![0.0; self.cfg.hidden]; self.cfg.q_hist];
        let tail = d_enc_out.last_mut().expect("history is non-empty");
        for gi in &g_dec.inputs {
            for (l, g) in tail.iter_mut().zip(gi) {
                *l += g;
            }
        }
        let g_enc = self.encoder.backward(&pass.enc, &d_enc_out, Some(&g_dec.h0))?;
        let mut grad = g_enc.params;
        grad.extend(g_dec.params);
        grad.extend(g_head.params);
        Ok((loss, grad))
    }

    /// Mean loss and gradient over a batch of samples.
    pub fn batch_loss_grad(&self, samples: &[Sample]) -> Result<(f64, Vec<f64>)> {
        let mut total = 0.0;
        let mut grad = vec![0.0; self.encoder.len() + self.decoder.len() + self.head.len()];
        for s in samples {
            let (l, g) = self.sample_loss_grad(s)?;
            total += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let k = samples.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g /= k);
        Ok((total / k, grad))
    }

    pub fn loss(&self, samples: &[Sample]) -> Result<f64> {
        let mut total = 0.0;
        for s in samples {
            total += sequence_sq_error(&self.predict(&s.hist)?, &s.target);
        }
        Ok(total / samples.len().max(1) as f64)
    }

    /// One gradient step on the recurrent part only.
    pub fn gru_step(&mut self, samples: &[Sample], lr: f64) -> Result<f64> {
        let (loss, grad) = self.batch_loss_grad(samples)?;
        let g = self.encoder.len() + self.decoder.len();
        let mut p = self.gru_params();
        for (w, d) in p.iter_mut().zip(&grad[..g]) {
            *w -= lr * d;
        }
        self.set_gru_params(&p)?;
        Ok(loss)
    }

    /// One gradient step on every parameter.
    pub fn full_step(&mut self, samples: &[Sample], lr: f64) -> Result<f64> {
        let (loss, grad) = self.batch_loss_grad(samples)?;
        let mut p = self.all_params();
        for (w, d) in p.iter_mut().zip(&grad) {
            *w -= lr * d;
        }
        self.set_all_params(&p)?;
        Ok(loss)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.cfg.q_hist as u32).to_le_bytes())?;
        w.write_all(&(self.cfg.q_pred as u32).to_le_bytes())?;
        write_checkpoint(&self.encoder, &mut w)?;
        write_checkpoint(&self.decoder, &mut w)?;
        write_checkpoint(&self.head, &mut w)?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let q_hist = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let q_pred = u32::from_le_bytes(word) as usize;
        let encoder = read_checkpoint(&mut r)?;
        let decoder = read_checkpoint(&mut r)?;
        let head = read_checkpoint(&mut r)?;
        let hidden = head.input_dim();
        let cfg = HeadModelConfig {
            gru_layers: encoder.gru_hidden_dims().len(),
            hidden,
            q_hist,
            q_pred,
        };
        let m = Self::zeros(cfg)?;
        if m.encoder.layers() != encoder.layers() || m.decoder.layers() != decoder.layers() {
            return Err(CoreError::Format("head model checkpoint has inconsistent layers".into()));
        }
        Ok(Self {
            cfg,
            encoder,
            decoder,
            head,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

struct RawPass {
    enc: thz360_neural::ForwardPass,
    dec: thz360_neural::ForwardPass,
    head: thz360_neural::ForwardPass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PflConfig {
    pub rounds: usize,
    pub local_iters: usize,
    pub lr: f64,
    pub finetune_steps: usize,
    pub finetune_lr: f64,
}

impl Default for PflConfig {
    fn default() -> Self {
        Self {
            rounds: 50,
            local_iters: 3,
            lr: 1e-4,
            finetune_steps: 10,
            finetune_lr: 1e-4,
        }
    }
}

/// Aggregation weights proportional to each user's chunk count.
pub fn aggregation_weights(data: &[UserData]) -> Result<Vec<f64>> {
    let total: usize = data.iter().map(|u| u.chunk_count).sum();
    if total == 0 {
        return Err(CoreError::Config("no chunks to weight users by".into()));
    }
    Ok(data.iter().map(|u| u.chunk_count as f64 / total as f64).collect())
}

/// Componentwise convex combination `sum_u alpha_u w_u`.
pub fn aggregate(models: &[Vec<f64>], alpha: &[f64]) -> Result<Vec<f64>> {
    if models.len() != alpha.len() || models.is_empty() {
        return Err(CoreError::Config(format!(
            "{} models but {} aggregation weights",
            models.len(),
            alpha.len()
        )));
    }
    let sum: f64 = alpha.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(CoreError::Config(format!("aggregation weights sum to {sum}, not 1")));
    }
    let n = models[0].len();
    if let Some(bad) = models.iter().find(|m| m.len() != n) {
        return Err(CoreError::DimMismatch {
            context: "aggregated model length",
            expected: n,
            actual: bad.len(),
        });
    }
    let mut out: Vec<f64> = models[0].iter().map(|w| alpha[0] * w).collect();
    for (m, &a) in models.iter().zip(alpha).skip(1) {
        for (o, w) in out.iter_mut().zip(m) {
            *o += a * w;
        }
    }
    Ok(out)
}

/// `rho` gradient steps on the recurrent part with the output head frozen.
pub fn local_update(model: &HeadModel, samples: &[Sample], rho: usize, lr: f64) -> Result<HeadModel> {
    let mut m = model.clone();
    for _ in 0..rho {
        m.gru_step(samples, lr)?;
    }
    Ok(m)
}

/// State of a personalised federated training run.
#[derive(Debug, Clone)]
pub struct PflTrainer {
    pub global_gru: Vec<f64>,
    /// Per-user output heads; untouched until fine-tuning.
    pub user_fc: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    template: HeadModel,
    cfg: PflConfig,
}

impl PflTrainer {
    /// All users start from the same initial model.
    pub fn new(init: &HeadModel, data: &[UserData], cfg: PflConfig) -> Result<Self> {
        Ok(Self {
            global_gru: init.gru_params(),
            user_fc: vec![init.fc_params().to_vec(); data.len()],
            alpha: aggregation_weights(data)?,
            template: init.clone(),
            cfg,
        })
    }

    pub fn user_model(&self, u: usize) -> Result<HeadModel> {
        let mut m = self.template.clone();
        m.set_gru_params(&self.global_gru)?;
        m.set_fc_params(&self.user_fc[u])?;
        Ok(m)
    }

    /// Broadcast, local updates, aggregation. Returns the locally updated
    /// models for inspection.
    pub fn round(&mut self, data: &[UserData]) -> Result<Vec<HeadModel>> {
        let locals = (0..data.len())
            .into_par_iter()
            .map(|u| local_update(&self.user_model(u)?, &data[u].samples, self.cfg.local_iters, self.cfg.lr))
            .collect::<Result<Vec<_>>>()?;
        let grus: Vec<Vec<f64>> = locals.iter().map(HeadModel::gru_params).collect();
        self.global_gru = aggregate(&grus, &self.alpha)?;
        Ok(locals)
    }

    /// Full-model fine-tuning of every user's model on local data.
    pub fn finetune(&self, data: &[UserData]) -> Result<Vec<HeadModel>> {
        (0..data.len())
            .into_par_iter()
            .map(|u| {
                let mut m = self.user_model(u)?;
                for _ in 0..self.cfg.finetune_steps {
                    m.full_step(&data[u].samples, self.cfg.finetune_lr)?;
                }
                Ok(m)
            })
            .collect()
    }
}

/// Personalised training: rounds with frozen heads, then local fine-tuning.
pub fn train_pfl(init: &HeadModel, data: &[UserData], cfg: &PflConfig) -> Result<Vec<HeadModel>> {
    let mut t = PflTrainer::new(init, data, cfg.clone())?;
    for _ in 0..cfg.rounds {
        t.round(data)?;
    }
    t.finetune(data)
}

/// FedAvg: every parameter is trained locally and averaged; no fine-tuning.
pub fn train_fedavg(init: &HeadModel, data: &[UserData], cfg: &PflConfig) -> Result<HeadModel> {
    let alpha = aggregation_weights(data)?;
    let mut global = init.clone();
    for _ in 0..cfg.rounds {
        let locals = (0..data.len())
            .into_par_iter()
            .map(|u| {
                let mut m = global.clone();
                for _ in 0..cfg.local_iters {
                    m.full_step(&data[u].samples, cfg.lr)?;
                }
                Ok(m.all_params())
            })
            .collect::<Result<Vec<_>>>()?;
        global.set_all_params(&aggregate(&locals, &alpha)?)?;
    }
    Ok(global)
}

/// Mean angular great-circle separation between two pose sequences.
pub fn mean_separation(a: &[HeadPose], b: &[HeadPose]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    a.iter()
        .zip(b)
        .map(|(p, q)| crate::fusion::great_circle((p.theta, p.phi), (q.theta, q.phi)))
        .sum::<f64>()
        / n as f64
}

/// Predictor that repeats the last observed pose.
pub fn persistence_prediction(hist: &[HeadPose], q_pred: usize) -> Vec<HeadPose> {
    let last = hist.last().copied().unwrap_or(HeadPose::new(PI / 2.0, 0.0));
    vec![last; q_pred]
}
