//! Budget-aware test-time scaling for instruction-guided image editing.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: images, instances, candidate states, scores, config and the
//!   NFE ledger.
//! - [`sampler`]: the sampler abstraction with a seeded simulator and a
//!   JSON-over-HTTP client.
//! - [`verifiers`]: general, region, caption and instance-specific scoring.
//! - [`search`]: Best-of-N, early-pruning baselines and the adaptive
//!   pipeline.
//! - [`metrics`]: reasoning and outcome efficiency.

pub mod codec;
pub mod error;
pub mod http;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod search;
pub mod verifiers;

pub use error::{Error, Result};
pub use model::{CandidateState, EditInstance, Image, NfeLedger, Phase, ScoreBreakdown, SearchConfig};
