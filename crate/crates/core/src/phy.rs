//! Line-of-sight THz channel between ceiling APs and head-mounted displays,
//! self-blockage by the user's own body, per-slot achievable rates and
//! per-AP power projection.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

pub type C64 = Complex<f64>;

/// Radio parameters as they appear in a config file (dB units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhyConfig {
    pub f_c: f64,
    pub kappa: f64,
    pub bandwidth: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    pub g_ap_dbi: f64,
    pub g_user_dbi: f64,
    pub p_max_dbm: f64,
    pub noise_dbm: f64,
    pub c0: f64,
    /// Element spacing in wavelengths.
    pub element_spacing: f64,
}

impl Default for PhyConfig {
    fn default() -> Self {
        Self {
            f_c: 1.05e12,
            kappa: 0.07512,
            bandwidth: 0.5e9,
            n_tx: 6,
            n_rx: 2,
            g_ap_dbi: 25.0,
            g_user_dbi: 15.0,
            p_max_dbm: 5.0,
            noise_dbm: -77.0,
            c0: 299_792_458.0,
            element_spacing: 0.5,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm) * 1e-3
}

/// Validated radio parameters converted to linear SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct Phy {
    pub f_c: f64,
    pub kappa: f64,
    pub bandwidth: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    pub g_ap: f64,
    pub g_user: f64,
    pub p_max: f64,
    pub noise: f64,
    pub c0: f64,
    pub element_spacing: f64,
}

impl Phy {
    pub fn new(cfg: &PhyConfig) -> Result<Self> {
        let bad = |m: &str| Err(CoreError::Config(m.to_string()));
        if !(cfg.f_c > 0.0) {
            return bad("carrier frequency must be positive");
        }
        if !(cfg.kappa >= 0.0) {
            return bad("absorption coefficient must be non-negative");
        }
        if !(cfg.bandwidth > 0.0) {
            return bad("bandwidth must be positive");
        }
        if cfg.n_tx == 0 || cfg.n_rx == 0 {
            return bad("antenna counts must be at least 1");
        }
        if !(cfg.c0 > 0.0) {
            return bad("propagation speed must be positive");
        }
        Ok(Self {
            f_c: cfg.f_c,
            kappa: cfg.kappa,
            bandwidth: cfg.bandwidth,
            n_tx: cfg.n_tx,
            n_rx: cfg.n_rx,
            g_ap: db_to_linear(cfg.g_ap_dbi),
            g_user: db_to_linear(cfg.g_user_dbi),
            p_max: dbm_to_watts(cfg.p_max_dbm),
            noise: dbm_to_watts(cfg.noise_dbm),
            c0: cfg.c0,
            element_spacing: cfg.element_spacing,
        })
    }
}

pub type Point3 = [f64; 3];

/// Static room layout: AP and user positions plus the body-blockage sector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub ap_positions: Vec<Point3>,
    pub user_positions: Vec<Point3>,
    pub phi_blocked: f64,
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::Config(m));
        if self.ap_positions.is_empty() || self.user_positions.is_empty() {
            return bad("geometry needs at least one AP and one user".into());
        }
        if !(0.0..=2.0 * PI).contains(&self.phi_blocked) {
            return bad(format!("blockage angle {} outside [0, 2pi]", self.phi_blocked));
        }
        let min_ap = self.ap_positions.iter().map(|p| p[2]).fold(f64::INFINITY, f64::min);
        for p in self.ap_positions.iter().chain(&self.user_positions) {
            if !(p[2] > 0.0) {
                return bad(format!("height must be positive, got {}", p[2]));
            }
        }
        if self.user_positions.iter().any(|p| p[2] > min_ap) {
            return bad("users must not be above the APs".into());
        }
        Ok(())
    }

    pub fn n_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn n_users(&self) -> usize {
        self.user_positions.len()
    }
}

/// Head orientation: latitude in `[0, pi]`, longitude in `[0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadPose {
    pub theta: f64,
    pub phi: f64,
}

impl HeadPose {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self {
            theta: theta.clamp(0.0, PI),
            phi: phi.rem_euclid(2.0 * PI),
        }
    }
}

/// Maps an angle to `(-pi, pi]`.
pub fn wrap_pi(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

fn distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Spreading and molecular absorption loss `c0/(4 pi f d) * exp(-kappa d / 2)`.
pub fn path_gain(ap: &Point3, user: &Point3, phy: &Phy) -> Result<f64> {
    let d = distance(ap, user);
    if !(d > 0.0) {
        return Err(CoreError::Domain("AP and user positions coincide".into()));
    }
    Ok(path_gain_at(d, phy))
}

pub fn path_gain_at(d: f64, phy: &Phy) -> f64 {
    phy.c0 / (4.0 * PI * phy.f_c * d) * (-phy.kappa * d / 2.0).exp()
}

/// Uniform linear array response, element `k` = `exp(j 2 pi s k sin(angle))`.
pub fn steering_vector(angle: f64, n: usize, spacing: f64) -> DVector<C64> {
    let step = 2.0 * PI * spacing * angle.sin();
    DVector::from_iterator(n, (0..n).map(|k| C64::from_polar(1.0, step * k as f64)))
}

/// Horizontal azimuth of `to` seen from `from`, in `[0, 2pi)`.
pub fn azimuth(from: &Point3, to: &Point3) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0]).rem_euclid(2.0 * PI)
}

/// Departure and arrival angles measured from array broadside.
///
/// The AP array lies along the global x-axis; the HMD array lies along the
/// user's facing direction. Elevation is ignored.
pub fn link_angles(ap: &Point3, user: &Point3, facing: f64) -> (f64, f64) {
    let aod = PI / 2.0 - azimuth(ap, user);
    let aoa = PI / 2.0 - (azimuth(user, ap) - facing);
    (aod, aoa)
}

/// Rank-one `n_tx x n_rx` channel from one AP to one user.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub entries: DMatrix<C64>,
    pub ap: usize,
    pub user: usize,
}

pub fn channel_matrix(
    ap: usize,
    user: usize,
    aod: f64,
    aoa: f64,
    geo: &Geometry,
    phy: &Phy,
) -> Result<ChannelMatrix> {
    let ap_pos = geo
        .ap_positions
        .get(ap)
        .ok_or_else(|| CoreError::Domain(format!("AP index {ap} out of range")))?;
    let user_pos = geo
        .user_positions
        .get(user)
        .ok_or_else(|| CoreError::Domain(format!("user index {user} out of range")))?;
    let gamma = path_gain(ap_pos, user_pos, phy)?;
    let scale = (phy.g_ap * phy.g_user).sqrt() * gamma;
    let a_tx = steering_vector(aod, phy.n_tx, phy.element_spacing);
    let a_rx = steering_vector(aoa, phy.n_rx, phy.element_spacing);
    let entries = (a_tx * a_rx.adjoint()) * C64::new(scale, 0.0);
    Ok(ChannelMatrix { entries, ap, user })
}

/// All AP-to-user channels for one head-pose snapshot, indexed `[user][ap]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub links: Vec<Vec<ChannelMatrix>>,
}

impl ChannelSet {
    pub fn build(geo: &Geometry, poses: &[HeadPose], phy: &Phy) -> Result<Self> {
        if poses.len() != geo.n_users() {
            return Err(CoreError::DimMismatch {
                context: "head poses per user",
                expected: geo.n_users(),
                actual: poses.len(),
            });
        }
        let mut links = Vec::with_capacity(geo.n_users());
        for (u, pose) in poses.iter().enumerate() {
            let mut row = Vec::with_capacity(geo.n_aps());
            for a in 0..geo.n_aps() {
                let (aod, aoa) = link_angles(&geo.ap_positions[a], &geo.user_positions[u], pose.phi);
                row.push(channel_matrix(a, u, aod, aoa, geo, phy)?);
            }
            links.push(row);
        }
        Ok(Self { links })
    }

    pub fn get(&self, user: usize, ap: usize) -> &DMatrix<C64> {
        &self.links[user][ap].entries
    }

    pub fn n_users(&self) -> usize {
        self.links.len()
    }

    pub fn n_aps(&self) -> usize {
        self.links.first().map_or(0, Vec::len)
    }
}

/// APs outside the user's body-blockage sector, as a per-AP mask.
pub fn nonblocked_aps(pose: &HeadPose, user: usize, geo: &Geometry) -> Vec<bool> {
    let u = &geo.user_positions[user];
    geo.ap_positions
        .iter()
        .map(|a| {
            let phi_ua = azimuth(u, a);
            wrap_pi(pose.phi - phi_ua - PI).abs() >= geo.phi_blocked / 2.0
        })
        .collect()
}

pub fn nonblocked_all(poses: &[HeadPose], geo: &Geometry) -> Vec<Vec<bool>> {
    poses
        .iter()
        .enumerate()
        .map(|(u, p)| nonblocked_aps(p, u, geo))
        .collect()
}

/// Transmit beams `b_{u,a}` of length `n_tx`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamSet {
    pub n_users: usize,
    pub n_aps: usize,
    pub beams: Vec<DVector<C64>>,
}

impl BeamSet {
    pub fn zeros(n_users: usize, n_aps: usize, n_tx: usize) -> Self {
        Self {
            n_users,
            n_aps,
            beams: vec![DVector::zeros(n_tx); n_users * n_aps],
        }
    }

    pub fn get(&self, user: usize, ap: usize) -> &DVector<C64> {
        &self.beams[user * self.n_aps + ap]
    }

    pub fn get_mut(&mut self, user: usize, ap: usize) -> &mut DVector<C64> {
        &mut self.beams[user * self.n_aps + ap]
    }

    pub fn ap_power(&self, ap: usize) -> f64 {
        (0..self.n_users).map(|u| self.get(u, ap).norm_squared()).sum()
    }

    /// Builds beams from interleaved (re, im) pairs ordered user, AP, element,
    /// each pair scaled by `scale`.
    pub fn from_real_pairs(raw: &[f64], n_users: usize, n_aps: usize, n_tx: usize, scale: f64) -> Result<Self> {
        let expected = 2 * n_users * n_aps * n_tx;
        if raw.len() != expected {
            return Err(CoreError::DimMismatch {
                context: "beam action length",
                expected,
                actual: raw.len(),
            });
        }
        let beams = raw
            .chunks(2 * n_tx)
            .map(|c| DVector::from_iterator(n_tx, c.chunks(2).map(|p| C64::new(p[0] * scale, p[1] * scale))))
            .collect();
        Ok(Self { n_users, n_aps, beams })
    }
}

/// Scales each AP's beams down so that its total power is at most `p_max`.
pub fn project_power(mut beams: BeamSet, p_max: f64) -> BeamSet {
    for a in 0..beams.n_aps {
        let total = beams.ap_power(a);
        if total > p_max {
            let s = C64::new((p_max / total).sqrt(), 0.0);
            for u in 0..beams.n_users {
                *beams.get_mut(u, a) *= s;
            }
        }
    }
    beams
}

/// Effective receive vector at `user` produced by the beams intended for `from`.
pub fn effective_signal(
    user: usize,
    from: usize,
    beams: &BeamSet,
    channels: &ChannelSet,
    nb: &[Vec<bool>],
) -> DVector<C64> {
    let n_rx = channels.get(user, 0).ncols();
    let mut d = DVector::zeros(n_rx);
    for a in 0..channels.n_aps() {
        if nb[user][a] && nb[from][a] {
            d += channels.get(user, a).adjoint() * beams.get(from, a);
        }
    }
    d
}

/// Achievable rate in bits/s with all other users' streams as interference.
pub fn user_rate(
    user: usize,
    beams: &BeamSet,
    channels: &ChannelSet,
    nb: &[Vec<bool>],
    phy: &Phy,
) -> Result<f64> {
    let d = effective_signal(user, user, beams, channels, nb);
    let n_rx = d.len();
    let mut gamma = DMatrix::<C64>::identity(n_rx, n_rx) * C64::new(phy.noise, 0.0);
    for other in 0..channels.n_users() {
        if other != user {
            let di = effective_signal(user, other, beams, channels, nb);
            gamma += &di * di.adjoint();
        }
    }
    let chol = gamma
        .cholesky()
        .ok_or_else(|| CoreError::Domain("interference covariance not positive definite".into()))?;
    let x = chol.solve(&d);
    let sinr = d.dotc(&x).re.max(0.0);
    Ok(phy.bandwidth * (1.0 + sinr).log2())
}

pub fn all_rates(beams: &BeamSet, channels: &ChannelSet, nb: &[Vec<bool>], phy: &Phy) -> Result<Vec<f64>> {
    (0..channels.n_users())
        .map(|u| user_rate(u, beams, channels, nb, phy))
        .collect()
}
