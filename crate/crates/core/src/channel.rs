//! Cell geometry, path loss and Rayleigh fading.
//!
//! Users are dropped uniformly in a disc of radius `R` around the fusion
//! center. A user at distance `r` sees the bounded power-law path loss
//! `P_L(r) = min(1, (r/r0)^−α)` and an independent unit-power Rayleigh fade
//! `|h|`. After the transmitter rotates out the phase of `h` and sends at
//! full power, the fusion center observes the real amplitude
//! `ρ = √P_L(r)·|h|` and Gaussian noise of variance `N0 / (2·P_s)`.

use rand::distr::Open01;
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Cell geometry and link budget.
///
/// Decibel quantities are converted to linear units once, at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CellParams", into = "CellParams")]
pub struct CellConfig {
    params: CellParams,
    symbol_power_w: f64,
    noise_w: f64,
}

/// The user-facing parameters of a [`CellConfig`], in the units they are
/// usually quoted in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct CellParams {
    /// Cell radius in meters.
    pub R_m: f64,
    /// Reference distance of the path-loss model in meters.
    pub r0_m: f64,
    /// Path-loss exponent.
    pub alpha: f64,
    /// Power budget of one OFDM symbol in dBW.
    pub P_dBW: f64,
    /// Number of subchannels sharing the power budget.
    pub M: u32,
    /// Receiver noise power in dBm. `-inf` disables noise.
    pub N0_dBm: f64,
}

impl Default for CellParams {
    /// The 54-user system: `R = 1000 m`, `r0 = 10 m`, `α = 3`, `M = 1000`,
    /// a symbol power of −50 dBW and −80 dBm of noise.
    fn default() -> Self {
        CellParams {
            R_m: 1000.0,
            r0_m: 10.0,
            alpha: 3.0,
            P_dBW: -20.0,
            M: 1000,
            N0_dBm: -80.0,
        }
    }
}

impl TryFrom<CellParams> for CellConfig {
    type Error = crate::Error;

    fn try_from(params: CellParams) -> Result<Self> {
        CellConfig::new(params)
    }
}

impl From<CellConfig> for CellParams {
    fn from(cfg: CellConfig) -> Self {
        cfg.params
    }
}

impl Default for CellConfig {
    fn default() -> Self {
        CellConfig::new(CellParams::default()).expect("default cell is valid")
    }
}

impl CellConfig {
    pub fn new(params: CellParams) -> Result<Self> {
        let CellParams {
            R_m,
            r0_m,
            alpha,
            P_dBW,
            M,
            N0_dBm,
        } = params;
        if !(r0_m > 0.0 && R_m > r0_m && R_m.is_finite()) {
            return Err(domain(format!(
                "cell needs R > r0 > 0, got R = {R_m}, r0 = {r0_m}"
            )));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(domain(format!("path-loss exponent must be positive, got {alpha}")));
        }
        if M == 0 {
            return Err(domain("subchannel count M must be at least 1"));
        }
        if !P_dBW.is_finite() {
            return Err(domain(format!("power budget must be finite, got {P_dBW} dBW")));
        }
        if N0_dBm.is_nan() || N0_dBm == f64::INFINITY {
            return Err(domain(format!("noise power must be finite or -inf, got {N0_dBm} dBm")));
        }
        let symbol_power_w = 10f64.powf(P_dBW / 10.0) / f64::from(M);
        let noise_w = 10f64.powf((N0_dBm - 30.0) / 10.0);
        Ok(CellConfig {
            params,
            symbol_power_w,
            noise_w,
        })
    }

    /// A cell described only by its shape: `r0 = 1 m`, `R = ratio` meters.
    /// Path-loss statistics depend on the geometry only through `R/r0`.
    pub fn from_ratio(ratio: f64, alpha: f64) -> Result<Self> {
        CellConfig::new(CellParams {
            R_m: ratio,
            r0_m: 1.0,
            alpha,
            ..CellParams::default()
        })
    }

    pub fn params(&self) -> &CellParams {
        &self.params
    }

    pub fn radius(&self) -> f64 {
        self.params.R_m
    }

    pub fn ref_distance(&self) -> f64 {
        self.params.r0_m
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha
    }

    /// `R / r0`.
    pub fn ratio(&self) -> f64 {
        self.params.R_m / self.params.r0_m
    }

    /// Whether α lies outside the open interval (2, 4) in which the
    /// closed-form path-loss moments are usually quoted. Such values are
    /// accepted; this is informational.
    pub fn alpha_flagged(&self) -> bool {
        !(self.params.alpha > 2.0 && self.params.alpha < 4.0)
    }

    /// Per-BPSK-symbol power `P_s = P / M` in watts.
    pub fn symbol_power_w(&self) -> f64 {
        self.symbol_power_w
    }

    pub fn symbol_power_dbw(&self) -> f64 {
        self.params.P_dBW - 10.0 * f64::from(self.params.M).log10()
    }

    pub fn noise_dbm(&self) -> f64 {
        self.params.N0_dBm
    }

    /// Noise power in watts.
    pub fn noise_w(&self) -> f64 {
        self.noise_w
    }

    /// Variance of the real-baseband noise after normalizing by the symbol
    /// amplitude: `N0 / (2·P_s)`.
    pub fn noise_var(&self) -> f64 {
        self.noise_w / (2.0 * self.symbol_power_w)
    }

    /// Same cell with the per-symbol power set to `ps_dbw` (the budget `P`
    /// is adjusted, `M` is kept).
    pub fn with_symbol_power_dbw(&self, ps_dbw: f64) -> Result<Self> {
        let mut params = self.params;
        params.P_dBW = ps_dbw + 10.0 * f64::from(params.M).log10();
        CellConfig::new(params)
    }

    pub fn with_noise_dbm(&self, n0_dbm: f64) -> Result<Self> {
        CellConfig::new(CellParams {
            N0_dBm: n0_dbm,
            ..self.params
        })
    }

    pub fn without_noise(&self) -> Self {
        self.with_noise_dbm(f64::NEG_INFINITY)
            .expect("-inf noise is always valid")
    }

    /// Path loss at a distance known to be nonnegative.
    #[inline]
    pub(crate) fn path_loss_at(&self, r: f64) -> f64 {
        if r <= self.params.r0_m {
            1.0
        } else {
            (r / self.params.r0_m).powf(-self.params.alpha)
        }
    }
}

/// Large-scale path loss `P_L(r)`: 1 inside the reference distance, then
/// `(r/r0)^−α`.
pub fn path_loss(r: f64, cfg: &CellConfig) -> Result<f64> {
    if r.is_nan() || r < 0.0 {
        return Err(domain(format!("distance must be nonnegative, got {r}")));
    }
    Ok(cfg.path_loss_at(r))
}

/// Inverse CDF of the uniform-disc distance law `F(r) = r²/R²`.
pub fn distance_from_uniform(u: f64, cfg: &CellConfig) -> f64 {
    cfg.radius() * u.sqrt()
}

/// Distance of a user dropped uniformly at random in the cell.
pub fn sample_distance<R: Rng + ?Sized>(rng: &mut R, cfg: &CellConfig) -> f64 {
    let u: f64 = rng.sample(Open01);
    distance_from_uniform(u, cfg)
}

/// `|h|` for `h ~ CN(0, 1)`: Rayleigh with `E|h|² = 1`.
pub fn sample_rayleigh_amplitude<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // |h|² is exponential with unit mean
    let power: f64 = rng.sample(Exp1);
    power.sqrt()
}

/// One realization of the effective user-to-fusion-center channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    gains: Vec<f64>,
    distances: Vec<f64>,
    noise_var: f64,
}

impl ChannelDraw {
    /// Per-user effective amplitudes `ρ_k`.
    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn into_gains(self) -> Vec<f64> {
        self.gains
    }
}

/// Draws distances and fading for `users` users.
///
/// For each user the distance is drawn first, then the fade, so a fixed rng
/// state always yields the same draw.
pub fn draw_user_channels<R: Rng + ?Sized>(
    rng: &mut R,
    users: usize,
    cfg: &CellConfig,
) -> Result<ChannelDraw> {
    if users == 0 {
        return Err(domain("at least one user is required"));
    }
    let mut gains = Vec::with_capacity(users);
    let mut distances = Vec::with_capacity(users);
    for _ in 0..users {
        let r = sample_distance(rng, cfg);
        let fade = sample_rayleigh_amplitude(rng);
        distances.push(r);
        gains.push(cfg.path_loss_at(r).sqrt() * fade);
    }
    Ok(ChannelDraw {
        gains,
        distances,
        noise_var: cfg.noise_var(),
    })
}

/// Redraws only the small-scale fading for users at known distances.
pub fn draw_fading_at<R: Rng + ?Sized>(
    rng: &mut R,
    distances: &[f64],
    cfg: &CellConfig,
) -> Result<ChannelDraw> {
    if distances.is_empty() {
        return Err(domain("at least one user is required"));
    }
    if let Some(bad) = distances.iter().find(|r| r.is_nan() || **r < 0.0) {
        return Err(domain(format!("distance must be nonnegative, got {bad}")));
    }
    let gains = distances
        .iter()
        .map(|&r| cfg.path_loss_at(r).sqrt() * sample_rayleigh_amplitude(rng))
        .collect();
    Ok(ChannelDraw {
        gains,
        distances: distances.to_vec(),
        noise_var: cfg.noise_var(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::MasterSeed;

    fn cell(alpha: f64) -> CellConfig {
        CellConfig::from_ratio(30.0, alpha).unwrap()
    }

    #[test]
    fn path_loss_examples() {
        let cfg = cell(3.0);
        assert_eq!(path_loss(1.0, &cfg).unwrap(), 1.0);
        assert_eq!(path_loss(2.0, &cfg).unwrap(), 0.125);
        assert_eq!(path_loss(0.0, &cfg).unwrap(), 1.0);
        assert!(path_loss(-1e-9, &cfg).is_err());
        assert!(path_loss(f64::NAN, &cfg).is_err());
    }

    #[test]
    fn path_loss_is_flat_then_non_increasing() {
        let cfg = cell(3.7);
        let mut prev = f64::INFINITY;
        for i in 0..=3000 {
            let r = i as f64 * 0.01;
            let pl = path_loss(r, &cfg).unwrap();
            if r <= 1.0 {
                assert_eq!(pl, 1.0);
            }
            assert!(pl <= prev);
            prev = pl;
        }
    }

    #[test]
    fn inverse_cdf_examples() {
        let cfg = cell(3.0);
        assert_eq!(distance_from_uniform(0.25, &cfg), 15.0);
        let near_one = distance_from_uniform(1.0 - 1e-12, &cfg);
        assert!(near_one < 30.0 && near_one > 30.0 - 1e-9);
    }

    #[test]
    fn config_validation() {
        let base = CellParams::default();
        assert!(CellConfig::new(CellParams { R_m: 5.0, r0_m: 10.0, ..base }).is_err());
        assert!(CellConfig::new(CellParams { r0_m: 0.0, ..base }).is_err());
        assert!(CellConfig::new(CellParams { M: 0, ..base }).is_err());
        let flagged = CellConfig::new(CellParams { alpha: 4.5, ..base }).unwrap();
        assert!(flagged.alpha_flagged());
        assert!(!CellConfig::default().alpha_flagged());
    }

    #[test]
    fn link_budget_conversions() {
        let cfg = CellConfig::default();
        assert!((cfg.symbol_power_dbw() + 50.0).abs() < 1e-12);
        assert!((cfg.symbol_power_w() - 1e-5).abs() < 1e-18);
        assert!((cfg.noise_w() - 1e-11).abs() < 1e-24);
        assert!((cfg.noise_var() - 5e-7).abs() < 1e-18);
        assert_eq!(cfg.without_noise().noise_var(), 0.0);
        let louder = cfg.with_symbol_power_dbw(-30.0).unwrap();
        assert!((louder.symbol_power_w() - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn draws_are_reproducible_and_shaped() {
        let cfg = cell(3.0);
        let a = draw_user_channels(&mut MasterSeed(5).stream(&[]), 5, &cfg).unwrap();
        let b = draw_user_channels(&mut MasterSeed(5).stream(&[]), 5, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert_eq!(a.distances().len(), 5);
        assert!(draw_user_channels(&mut MasterSeed(5).stream(&[]), 0, &cfg).is_err());
        for (g, r) in a.gains().iter().zip(a.distances()) {
            assert!(*g >= 0.0 && *r > 0.0 && *r < 30.0);
        }
    }
}
