//! Quantized network coding (QNC) for gathering correlated sensor readings.
//!
//! Nodes of a capacity-limited directed network forward quantized random
//! linear combinations of their incoming packets and their own message. The
//! gateway collects a growing set of linear measurements of the message
//! vector and recovers it by l1 minimization over a residual ball whose radius
//! bounds the propagated quantization noise. A routing-based packet
//! forwarding baseline and a Monte-Carlo restricted-isometry analysis are
//! included for comparison.
//!
//! Module map:
//!
//! - [`network`]: deployments, incidence lists, gateway selector
//! - [`source`]: near-sparse message synthesis and the dB error metric
//! - [`quantizer`]: uniform mid-rise edge quantizers
//! - [`coding`]: coefficient design, QNC recursion, `Psi_tot` and `eps_rec`
//! - [`decoder`]: l1 decoder, exhaustive l0 oracle, recovery error bound
//! - [`forwarding`]: shortest-path packet forwarding baseline
//! - [`rip`]: tail probabilities and restricted isometry constants
//! - [`harness`]: parameter sweeps, aggregation, delay envelopes, CSV output

pub mod coding;
pub mod decoder;
pub mod error;
pub mod forwarding;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod quantizer;
pub mod rip;
pub mod seed;
pub mod source;

pub use error::{QncError, Result};
