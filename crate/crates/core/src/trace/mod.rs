//! Backward single-transfer tracing.
//!
//! Pipeline for a destination transfer: temporal window, per-lane price
//! range and source-value interval, indexed candidate search, forward value
//! validation, scoring and ranking. Each stage is exposed so the
//! [`orchestrator`](crate::orchestrator) can drive them one milestone at a
//! time.

mod config;
pub mod score;
mod single;

pub use config::TraceConfig;
pub use single::{
    generate_candidates, lane_prices, rank, score_candidate, search_candidates, source_lanes, temporal_window,
    trace_single, trace_transfer, validate_forward, Candidates, LanePrices, PriceContext, RejectReason, Rejections,
    ScoredCandidate, TraceResult, Verdict,
};
