//! Reference policies: weighted MMSE beamforming, priority-based bitrate
//! selection, throughput estimation and delayed blockage detection.

use std::collections::VecDeque;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::fusion::TilePrediction;
use crate::phy::{effective_signal, BeamSet, ChannelSet, Phy};
use crate::streaming::{QualitySelection, VideoConfig};
use crate::{CoreError, Result};

type C64 = Complex<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WmmseConfig {
    pub max_iters: usize,
    /// Stop once the relative change of the weighted sum-rate falls below this.
    pub tol: f64,
    /// Relative tolerance of the per-AP power multiplier search.
    pub dual_tol: f64,
    /// Per-user rate weights; equal weights when absent.
    pub weights: Option<Vec<f64>>,
}

impl Default for WmmseConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
            dual_tol: 1e-6,
            weights: None,
        }
    }
}

impl WmmseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.dual_tol > 0.0) {
            return Err(CoreError::Config("wmmse tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(CoreError::Config("wmmse needs at least one iteration".into()));
        }
        if let Some(w) = &self.weights {
            if w.iter().any(|x| !(*x >= 0.0)) {
                return Err(CoreError::Config("wmmse weights must be non-negative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct WmmseResult {
    /// Best iterate found.
    pub beams: BeamSet,
    /// Weighted sum spectral efficiency (bit/s/Hz) of the start point and every iteration.
    pub history: Vec<f64>,
    /// `false` when the iteration cap was hit first.
    pub converged: bool,
}

/// Weighted sum of per-user spectral efficiencies.
pub fn weighted_sum_rate(
    beams: &BeamSet,
    channels: &ChannelSet,
    nb: &[Vec<bool>],
    weights: &[f64],
    phy: &Phy,
) -> Result<f64> {
    let rates = crate::phy::all_rates(beams, channels, nb, phy)?;
    Ok(rates.iter().zip(weights).map(|(r, w)| w * r / phy.bandwidth).sum())
}

/// Downlink channel `H_{u,a} = G_{u,a}^H`, zero where the link is blocked.
fn downlink(channels: &ChannelSet, nb: &[Vec<bool>], u: usize, a: usize) -> Option<DMatrix<C64>> {
    nb[u][a].then(|| channels.get(u, a).adjoint())
}

fn initial_beams(channels: &ChannelSet, nb: &[Vec<bool>], phy: &Phy) -> BeamSet {
    let (nu, na) = (channels.n_users(), channels.n_aps());
    let mut beams = BeamSet::zeros(nu, na, phy.n_tx);
    for a in 0..na {
        let served: Vec<usize> = (0..nu).filter(|&u| nb[u][a]).collect();
        if served.is_empty() {
            continue;
        }
        let share = (phy.p_max / served.len() as f64).sqrt();
        for &u in &served {
            let g = channels.get(u, a);
            let ones = DVector::from_element(g.ncols(), C64::new(1.0, 0.0));
            let v = g * ones;
            let n = v.norm();
            if n > 0.0 {
                *beams.get_mut(u, a) = v * C64::new(share / n, 0.0);
            }
        }
    }
    beams
}

/// Minimiser of `sum_k v_k^H A v_k - 2 Re(g_k^H v_k)` subject to
/// `sum_k |v_k|^2 <= p_max`, via eigendecomposition of `A` and bisection on
/// the power multiplier.
fn solve_power_constrained(a: &DMatrix<C64>, g: &[DVector<C64>], p_max: f64, dual_tol: f64) -> Vec<DVector<C64>> {
    let n = a.nrows();
    if g.iter().all(|x| x.norm_squared() == 0.0) {
        return vec![DVector::zeros(n); g.len()];
    }
    let eig = a.clone().symmetric_eigen();
    let lambda: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let e = eig.eigenvectors;
    let proj: Vec<DVector<C64>> = g.iter().map(|x| e.adjoint() * x).collect();
    let p: Vec<f64> = (0..n)
        .map(|i| proj.iter().map(|q| q[i].norm_sqr()).sum())
        .collect();
    let power = |mu: f64| -> f64 {
        (0..n)
            .map(|i| {
                let d = lambda[i] + mu;
                if p[i] == 0.0 {
                    0.0
                } else if d <= 0.0 {
                    f64::INFINITY
                } else {
                    p[i] / (d * d)
                }
            })
            .sum()
    };
    let mu = if power(0.0) <= p_max {
        0.0
    } else {
        let total: f64 = p.iter().sum();
        let (mut lo, mut hi) = (0.0, (total / p_max).sqrt());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if power(mid) > p_max {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= dual_tol * 1e-6 * hi {
                break;
            }
        }
        hi
    };
    proj.iter()
        .map(|q| {
            let scaled = DVector::from_iterator(
                n,
                (0..n).map(|i| {
                    let d = lambda[i] + mu;
                    if d > 0.0 {
                        q[i] / d
                    } else {
                        C64::new(0.0, 0.0)
                    }
                }),
            );
            &e * scaled
        })
        .collect()
}

/// Weighted MMSE beam design under per-AP power budgets. Beams only use APs
/// that are in the user's non-blocked set.
pub fn wmmse_beamforming(
    channels: &ChannelSet,
    nb: &[Vec<bool>],
    cfg: &WmmseConfig,
    phy: &Phy,
) -> Result<WmmseResult> {
    cfg.validate()?;
    let (nu, na) = (channels.n_users(), channels.n_aps());
    if nb.len() != nu || nb.iter().any(|r| r.len() != na) {
        return Err(CoreError::DimMismatch {
            context: "non-blocked sets",
            expected: nu,
            actual: nb.len(),
        });
    }
    if !(phy.noise > 0.0) {
        return Err(CoreError::Domain("noise power must be positive".into()));
    }
    let weights = match &cfg.weights {
        Some(w) if w.len() == nu => w.clone(),
        Some(w) => {
            return Err(CoreError::DimMismatch {
                context: "wmmse weights",
                expected: nu,
                actual: w.len(),
            })
        }
        None => vec![1.0; nu],
    };
    let mut beams = initial_beams(channels, nb, phy);
    let mut wsr = weighted_sum_rate(&beams, channels, nb, &weights, phy)?;
    let mut history = vec![wsr];
    let mut best = (wsr, beams.clone());
    let mut converged = false;
    let n_rx = phy.n_rx;
    for _ in 0..cfg.max_iters {
        // Receive filters and MSE weights.
        let mut z: Vec<Vec<Option<DVector<C64>>>> = vec![vec![None; na]; nu];
        let mut coef = vec![0.0; nu];
        for u in 0..nu {
            let d = effective_signal(u, u, &beams, channels, nb);
            let mut j = DMatrix::<C64>::identity(n_rx, n_rx) * C64::new(phy.noise, 0.0);
            for o in 0..nu {
                let di = effective_signal(u, o, &beams, channels, nb);
                j += &di * di.adjoint();
            }
            let chol = j
                .cholesky()
                .ok_or_else(|| CoreError::Domain("receive covariance not positive definite".into()))?;
            let filt = chol.solve(&d);
            let e = (1.0 - d.dotc(&filt).re).clamp(f64::MIN_POSITIVE, 1.0);
            coef[u] = weights[u] / e;
            for a in 0..na {
                z[u][a] = downlink(channels, nb, u, a).map(|h| h.adjoint() * &filt);
            }
        }
        // Transmit beams, one AP block at a time.
        for a in 0..na {
            let served: Vec<usize> = (0..nu).filter(|&u| nb[u][a]).collect();
            if served.is_empty() {
                continue;
            }
            let mut a_aa = DMatrix::<C64>::zeros(phy.n_tx, phy.n_tx);
            for u in 0..nu {
                if let Some(za) = &z[u][a] {
                    a_aa += za * za.adjoint() * C64::new(coef[u], 0.0);
                }
            }
            let g: Vec<DVector<C64>> = served
                .iter()
                .map(|&s| {
                    let mut gv = z[s][a]
                        .as_ref()
                        .map(|x| x * C64::new(coef[s], 0.0))
                        .unwrap_or_else(|| DVector::zeros(phy.n_tx));
                    for u in 0..nu {
                        let Some(za) = &z[u][a] else { continue };
                        let mut cross = C64::new(0.0, 0.0);
                        for b in (0..na).filter(|&b| b != a) {
                            if let Some(zb) = &z[u][b] {
                                cross += zb.dotc(beams.get(s, b));
                            }
                        }
                        gv -= za * (cross * coef[u]);
                    }
                    gv
                })
                .collect();
            let v = solve_power_constrained(&a_aa, &g, phy.p_max, cfg.dual_tol);
            for (k, &s) in served.iter().enumerate() {
                *beams.get_mut(s, a) = v[k].clone();
            }
            for u in (0..nu).filter(|u| !nb[*u][a]) {
                *beams.get_mut(u, a) = DVector::zeros(phy.n_tx);
            }
        }
        let next = weighted_sum_rate(&beams, channels, nb, &weights, phy)?;
        history.push(next);
        if next > best.0 {
            best = (next, beams.clone());
        }
        let done = (next - wsr).abs() <= cfg.tol * wsr.abs().max(1e-12);
        wsr = next;
        if done {
            converged = true;
            break;
        }
    }
    Ok(WmmseResult {
        beams: best.1,
        history,
        converged,
    })
}

/// Bitrate estimate from the previous chunk's size and download time.
pub fn throughput_estimate(prev_chunk_bits: f64, prev_td_slots: usize, slot_seconds: f64) -> Result<f64> {
    if prev_td_slots == 0 {
        return Err(CoreError::Domain("transmission delay must be at least one slot".into()));
    }
    Ok(prev_chunk_bits / (prev_td_slots as f64 * slot_seconds))
}

/// Viewport tiles get the highest level that still leaves room for the
/// marginal tiles at level 1; the remaining budget buys marginal tiles a
/// level no higher than the viewport's. Level 1 is the floor for every
/// predicted tile.
pub fn priority_bitrate(pred: &TilePrediction, estimate_bps: f64, vc: &VideoConfig) -> QualitySelection {
    let view = pred.view_union();
    let marginal: Vec<usize> = pred.pred_set.iter().copied().filter(|t| !view.contains(t)).collect();
    let budget = estimate_bps.max(0.0) * vc.chunk_seconds();
    let cost = |count: usize, level: usize| count as f64 * vc.bitrates[level - 1] * vc.chunk_seconds();
    let m = vc.n_levels();
    let floor = cost(marginal.len(), 1);
    let view_level = (1..=m)
        .rev()
        .find(|&l| cost(view.len(), l) + floor <= budget)
        .unwrap_or(1);
    let remainder = (budget - cost(view.len(), view_level)).max(0.0);
    let marg_level = (1..=view_level)
        .rev()
        .find(|&l| cost(marginal.len(), l) <= remainder)
        .unwrap_or(1);
    let mut sel = vec![0u8; vc.n_tiles()];
    for &t in &view {
        sel[t] = view_level as u8;
    }
    for &t in &marginal {
        sel[t] = marg_level as u8;
    }
    sel
}

/// Non-blocked sets as they were `delay` slots ago (the oldest entry before
/// enough history exists). `history` ends with the current slot.
pub fn reactive_blockage(history: &[Vec<Vec<bool>>], delay: usize) -> Result<Vec<Vec<bool>>> {
    let last = history
        .len()
        .checked_sub(1)
        .ok_or_else(|| CoreError::Domain("blockage history is empty".into()))?;
    Ok(history[last.saturating_sub(delay)].clone())
}

/// Rolling form of [`reactive_blockage`].
#[derive(Debug, Clone)]
pub struct ReactiveBlockage {
    delay: usize,
    history: VecDeque<Vec<Vec<bool>>>,
}

impl ReactiveBlockage {
    pub fn new(delay: usize) -> Self {
        Self {
            delay,
            history: VecDeque::with_capacity(delay + 1),
        }
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }

    /// Records the current actual sets and returns the believed ones.
    pub fn push(&mut self, actual: Vec<Vec<bool>>) -> Vec<Vec<bool>> {
        if self.history.len() == self.delay + 1 {
            self.history.pop_front();
        }
        self.history.push_back(actual);
        self.history[0].clone()
    }
}
