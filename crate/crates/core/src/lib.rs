//! Digital over-the-air majority voting for wireless federated learning.
//!
//! Users quantize their gradients to one bit per component and transmit the
//! signs simultaneously. Each user rotates out its channel phase and sends
//! at full power, so the fusion center receives a nonnegatively weighted sum
//! of votes and decodes its sign. This crate simulates that channel,
//! evaluates its failure probability analytically and by Monte Carlo,
//! selects relays for a cluster-based cooperative variant, and trains models
//! with signSGD using any of the aggregation schemes.
//!
//! | module | contents |
//! |---|---|
//! | [`channel`] | cell geometry, path loss, Rayleigh fading |
//! | [`voting`] | ±1 votes and the error-free majority vote |
//! | [`aircomp`] | one over-the-air aggregation |
//! | [`analysis`] | detection SNR, normalized SNR, failure bound, exact oracle |
//! | [`relay`] | clusters and relay selection |
//! | [`montecarlo`] | failure-rate estimates and sweeps |
//! | [`learning`] | signSGD with majority vote on synthetic tasks |
//!
//! All randomness flows from a [`MasterSeed`]; see [`rng`].
//!
//! ```
//! use aircomp::analysis::nsnr_large_k_noise_free;
//!
//! // With α = 3 and R/r0 = 30 only about a tenth of the users count.
//! let rate = nsnr_large_k_noise_free(3.0, 30.0).unwrap();
//! assert!((rate - 0.106).abs() < 1e-3);
//! ```

pub mod aircomp;
pub mod analysis;
pub mod channel;
mod error;
pub mod learning;
pub mod montecarlo;
pub mod relay;
pub mod rng;
pub mod special;
pub mod voting;

pub use error::{Error, Result};
pub use rng::MasterSeed;

/// Version string recorded in run manifests.
pub const VERSION: &str = concat!("aircomp ", env!("CARGO_PKG_VERSION"));

// The guide's code blocks are compiled and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/detection-snr.md")]
    mod detection_snr {}
    #[doc = include_str!("../../../book/src/large-k.md")]
    mod large_k {}
    #[doc = include_str!("../../../book/src/relay-selection.md")]
    mod relay_selection {}
    #[doc = include_str!("../../../book/src/monte-carlo.md")]
    mod monte_carlo {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
