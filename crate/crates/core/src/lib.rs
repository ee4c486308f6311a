//! Deterministic cross-chain transfer tracing.
//!
//! The crate recovers links between a destination-chain transfer and the
//! source-chain transfer(s) that funded it through a bridge, using only
//! timing, value and price evidence. Groups of destination transfers are
//! traced jointly by voting on shared upstream spenders on the source chain.
//!
//! Layout:
//!
//! * [`ledger`]: transfer model, canonical ordering, same-chain predecessors
//!   and time/amount indexes.
//! * [`price`]: step-function exchange-rate series with range extrema.
//! * [`trace`]: single-transfer backward tracing, validation and scoring.
//! * [`group`]: common-ancestor voting over a set of destination transfers.
//! * [`orchestrator`]: milestone-gated investigation loop with pluggable policy.
//! * [`simgen`]: seeded multi-chain world generator with exact ground truth.
//! * [`dataset`]: line-oriented file formats and dataset tiers.
//! * [`harness`]: Recall / Hit@k evaluation.

pub mod dataset;
pub mod error;
pub mod group;
pub mod harness;
pub mod ledger;
pub mod orchestrator;
pub mod price;
pub mod simgen;
pub mod trace;

pub use error::{Error, Result};

/// Hex SHA-256 of a byte string; used for config and report digests.
pub fn digest_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
