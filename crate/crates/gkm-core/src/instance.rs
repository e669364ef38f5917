//! A realized auction instance: concrete user channels per operator.
//!
//! Scenario files describe distributions; an instance is one draw from them,
//! with every per-user spectral efficiency already evaluated. All mechanisms
//! in a paired comparison run on the same instance.

use serde::{Deserialize, Serialize};

use crate::channel::{spectral_efficiency, UserChannel};
use crate::error::{Error, Result};

/// One operator's users and their effective spectral efficiencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvnoSlice {
    pub channels: Vec<UserChannel>,
    /// Effective bits/s/Hz per user (deterministic or outage-constrained).
    pub alphas: Vec<f64>,
}

impl MvnoSlice {
    pub fn deterministic(channels: Vec<UserChannel>) -> Self {
        let alphas = channels.iter().map(spectral_efficiency).collect();
        MvnoSlice { channels, alphas }
    }

    pub fn with_outage(channels: Vec<UserChannel>, epsilon: f64) -> Result<Self> {
        let alphas = channels
            .iter()
            .map(|c| crate::channel::outage_spectral_efficiency(c, epsilon))
            .collect::<Result<Vec<f64>>>()?;
        Ok(MvnoSlice { channels, alphas })
    }

    pub fn user_count(&self) -> usize {
        self.channels.len()
    }
}

/// The single-resource competition: a bandwidth pool and the operators
/// bidding for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceInstance {
    /// Total bandwidth owned by the infrastructure provider (Hz).
    pub bandwidth: f64,
    pub mvnos: Vec<MvnoSlice>,
}

impl SliceInstance {
    pub fn new(bandwidth: f64, mvnos: Vec<MvnoSlice>) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::domain("total bandwidth must be positive"));
        }
        if mvnos.iter().any(|m| m.channels.is_empty()) {
            return Err(Error::domain("every operator needs at least one user"));
        }
        Ok(SliceInstance { bandwidth, mvnos })
    }

    pub fn mvno_count(&self) -> usize {
        self.mvnos.len()
    }
}
