//! Wireless channel model.
//!
//! Supplies the per-user spectral efficiency that drives every valuation in
//! the simulator:
//!
//! - log-distance path loss with optional Gaussian shadowing,
//! - deterministic spectral efficiency `log2(1 + p*h/N)`,
//! - the Rayleigh quantile and the outage-constrained effective rate used
//!   when an operator has no per-user channel state.
//!
//! All functions are pure; any randomness (shadowing, fading) is sampled by
//! the caller and passed in, so reproducibility is owned by whoever holds the
//! generator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log-distance path loss parameters.
///
/// Loss in dB at distance `d >= d0` is
/// `40*log10(d0) - 10*log10(G*ht^2*hr^2) + 10*lambda*log10(d/d0) + X`,
/// where `X` is a shadowing sample in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossParams {
    /// Reference distance d0 (m).
    pub d0: f64,
    /// Path-loss exponent.
    pub exponent: f64,
    /// Antenna gain G (linear).
    pub antenna_gain: f64,
    /// Transmitter height (m).
    pub h_t: f64,
    /// Receiver height (m).
    pub h_r: f64,
    /// Standard deviation of log-normal shadowing (dB). Zero disables it.
    pub shadow_sigma: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        PathLossParams {
            d0: 100.0,
            exponent: 3.5,
            antenna_gain: 1.0,
            h_t: 1.0,
            h_r: 1.0,
            shadow_sigma: 0.0,
        }
    }
}

impl PathLossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0) || !self.d0.is_finite() {
            return Err(Error::domain("path loss d0 must be positive"));
        }
        if !(self.exponent > 0.0) {
            return Err(Error::domain("path loss exponent must be positive"));
        }
        if !(self.antenna_gain > 0.0) {
            return Err(Error::domain("antenna gain must be positive"));
        }
        if !(self.h_t > 0.0) || !(self.h_r > 0.0) {
            return Err(Error::domain("antenna heights must be positive"));
        }
        if !(self.shadow_sigma >= 0.0) {
            return Err(Error::domain("shadowing std-dev must be nonnegative"));
        }
        Ok(())
    }
}

/// Radio state of one mobile user, as seen by its operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserChannel {
    /// Distance to the base station (m). Informational.
    pub distance: f64,
    /// Linear channel gain h (large-scale loss, optionally faded).
    pub gain_h: f64,
    /// Transmit power spectral density p (W/Hz).
    pub power_per_hz: f64,
    /// Noise power N in the SNR reference band (W).
    pub noise_density: f64,
    /// Rayleigh scale of the normalized gain, used by the outage model.
    pub rayleigh_sigma: f64,
}

impl UserChannel {
    pub fn new(
        distance: f64,
        gain_h: f64,
        power_per_hz: f64,
        noise_density: f64,
        rayleigh_sigma: f64,
    ) -> Result<Self> {
        if !(gain_h >= 0.0) || !gain_h.is_finite() {
            return Err(Error::domain("channel gain must be nonnegative and finite"));
        }
        if !(power_per_hz > 0.0) {
            return Err(Error::domain("power per Hz must be positive"));
        }
        if !(noise_density > 0.0) {
            return Err(Error::domain("noise power must be positive"));
        }
        if !(rayleigh_sigma > 0.0) {
            return Err(Error::domain("Rayleigh scale must be positive"));
        }
        Ok(UserChannel {
            distance,
            gain_h,
            power_per_hz,
            noise_density,
            rayleigh_sigma,
        })
    }

    /// SNR of this user under the deterministic gain.
    pub fn snr(&self) -> f64 {
        self.power_per_hz * self.gain_h / self.noise_density
    }
}

/// Path loss in dB at `distance`, with an explicit shadowing sample in dB.
///
/// The model is only defined at or beyond the reference distance; closer
/// distances are a domain error.
pub fn path_loss_db(distance: f64, params: &PathLossParams, shadow_sample: f64) -> Result<f64> {
    params.validate()?;
    if !(distance >= params.d0) {
        return Err(Error::domain(format!(
            "distance {distance} m is below the reference distance {} m",
            params.d0
        )));
    }
    let fixed = 40.0 * params.d0.log10()
        - 10.0
            * (params.antenna_gain * params.h_t * params.h_t * params.h_r * params.h_r).log10();
    let slope = 10.0 * params.exponent * (distance / params.d0).log10();
    Ok(fixed + slope + shadow_sample)
}

/// Spectral efficiency `log2(1 + p*h/N)` in bits/s/Hz.
pub fn spectral_efficiency(ch: &UserChannel) -> f64 {
    (1.0 + ch.snr()).log2()
}

/// Rayleigh CDF `F(a) = 1 - exp(-a^2 / (2 sigma^2))`.
pub fn rayleigh_cdf(a: f64, sigma: f64) -> f64 {
    1.0 - (-a * a / (2.0 * sigma * sigma)).exp()
}

/// Inverse Rayleigh CDF: the gain level not exceeded with probability
/// `epsilon`.
///
/// Returns `sigma * sqrt(-2 ln(1 - epsilon))`; `epsilon` must lie in `[0, 1)`.
pub fn rayleigh_quantile(epsilon: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::domain("Rayleigh scale must be positive"));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::domain("outage threshold must be nonnegative"));
    }
    if epsilon >= 1.0 {
        return Err(Error::domain(
            "outage threshold must be below 1 (quantile unbounded)",
        ));
    }
    Ok(sigma * (-2.0 * (1.0 - epsilon).ln()).sqrt())
}

/// Effective spectral efficiency under an outage constraint.
///
/// An operator without channel state can only guarantee the rate supported
/// by the epsilon-quantile of the faded gain: `log2(1 + p * F^{-1}(eps))`.
/// Nondecreasing in `epsilon`.
pub fn outage_spectral_efficiency(ch: &UserChannel, epsilon: f64) -> Result<f64> {
    let q = rayleigh_quantile(epsilon, ch.rayleigh_sigma)?;
    Ok((1.0 + ch.power_per_hz * q).log2())
}
