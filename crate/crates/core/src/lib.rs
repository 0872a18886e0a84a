//! Symbol-level precoding for the multi-antenna downlink.
//!
//! The crate builds precoders that turn inter-user interference into useful
//! signal for M-PSK users, and relates them to multicast beamforming:
//!
//! - [`constellation`]: M-PSK geometry, detection regions and the
//!   constructive-interference test.
//! - [`channel`]: Rayleigh channel draws, cross-correlations and the SVD
//!   factorization used by the rotation-based precoder.
//! - [`downlink`]: naive MRT, correlation-rotation zero forcing (CRZF) and
//!   constructive-interference MRT (CIMRT).
//! - [`multicast`]: constrained-constellation multicast (CCMC), the
//!   constructive-interference downlink precoder obtained from it (CIDC), and
//!   the optimal-covariance multicast baseline.
//! - [`linkmodel`]: received-signal synthesis, detection and energy efficiency.
//! - [`montecarlo`]: seeded, paired sweeps over SNR or target rate.
//! - [`cli`]: the `cilab` command line (config files, CSV, manifests).

pub mod channel;
pub mod cli;
pub mod constellation;
pub mod downlink;
mod error;
pub mod linalg;
pub mod linkmodel;
pub mod montecarlo;
pub mod multicast;
pub mod rng;

pub use error::{Error, Result};

pub use num_complex::Complex64;

pub use channel::{ChannelMatrix, SvdFactors};
pub use constellation::{AlignmentMatrix, PskSymbol, SymbolVector};
pub use downlink::{PerUserPrecoder, RotationParams};
pub use linkmodel::{MetricsRecord, PrecoderOutput, QosTargets, ReceivedVector};
pub use montecarlo::{ExperimentConfig, SweepResult, Technique};
pub use multicast::{CovarianceSolution, MulticastPrecoder};
