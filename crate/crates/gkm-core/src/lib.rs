//! Two-level resource allocation for wireless network slicing.
//!
//! An infrastructure provider owns a pool of bandwidth (and optionally
//! transmit power) and leases it to virtual operators through a
//! penalty-controlled proportional-share auction; each operator then splits
//! its share among its own users with a closed-form water-filling rule.
//!
//! - [`channel`]: path loss, spectral efficiency, Rayleigh outage model.
//! - [`lower_level`]: per-user fractions, valuations and marginals.
//! - [`gkm_auction`]: the penalty-controlled auction loop and its
//!   equilibrium checks.
//! - [`multi_resource`]: the bandwidth+power extension with matrix bids.
//! - [`baselines`]: equal sharing, the classic proportional auction, and the
//!   exact welfare optimum.
//! - [`scenario`] / [`experiment`]: scenario files, seeded Monte Carlo runs
//!   and CSV/JSON emission.

// Validation deliberately writes `!(x > 0.0)` so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod gkm_auction;
pub mod instance;
pub mod lower_level;
pub mod multi_resource;
pub mod scenario;

pub use error::{Error, Result};

/// Version stamp written into emitted result files.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
