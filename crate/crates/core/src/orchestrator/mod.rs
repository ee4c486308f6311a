//! Milestone-gated investigation loop.
//!
//! A [`Policy`] (the strategic role) chooses the next [`Action`] from the
//! current [`BeliefState`]. The worker executes the action against the
//! ledger and price oracle and returns a [`Finding`]; the critic marks the
//! finding accepted or rejected; only accepted findings flip the
//! corresponding milestone bit. Bits never flip back, and actions whose
//! milestone is already complete are protocol violations.

mod belief;
mod policy;
mod run;

pub use belief::{accept_finding, Action, ActionKind, BeliefState, Finding, FindingPayload, FindingStatus, Milestone};
pub use policy::{HeuristicPolicy, Policy};
pub use run::{step_loop, Env, FailureReport, LoopOutput, Outcome, TranscriptRecord};
