use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{Amount, TimeWindow, Timestamp, TransferKey};
use crate::trace::Rejections;

/// Investigation milestones in procedure order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Milestone {
    TargetResolved,
    WindowComputed,
    PricesResolved,
    CandidatesRetrieved,
    ValidationPassed,
    ScoringCompleted,
}

impl Milestone {
    pub const ALL: [Milestone; 6] = [
        Milestone::TargetResolved,
        Milestone::WindowComputed,
        Milestone::PricesResolved,
        Milestone::CandidatesRetrieved,
        Milestone::ValidationPassed,
        Milestone::ScoringCompleted,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    ResolveTarget,
    ComputeWindow,
    LookupPrices,
    SearchCandidates,
    Validate,
    Score,
    Terminate,
}

impl ActionKind {
    pub fn milestone(self) -> Option<Milestone> {
        match self {
            ActionKind::ResolveTarget => Some(Milestone::TargetResolved),
            ActionKind::ComputeWindow => Some(Milestone::WindowComputed),
            ActionKind::LookupPrices => Some(Milestone::PricesResolved),
            ActionKind::SearchCandidates => Some(Milestone::CandidatesRetrieved),
            ActionKind::Validate => Some(Milestone::ValidationPassed),
            ActionKind::Score => Some(Milestone::ScoringCompleted),
            ActionKind::Terminate => None,
        }
    }

    pub fn for_milestone(m: Milestone) -> Self {
        match m {
            Milestone::TargetResolved => ActionKind::ResolveTarget,
            Milestone::WindowComputed => ActionKind::ComputeWindow,
            Milestone::PricesResolved => ActionKind::LookupPrices,
            Milestone::CandidatesRetrieved => ActionKind::SearchCandidates,
            Milestone::ValidationPassed => ActionKind::Validate,
            Milestone::ScoringCompleted => ActionKind::Score,
        }
    }
}

/// An action together with its task brief.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    ResolveTarget { target: TransferKey },
    ComputeWindow { delta_t: u64 },
    LookupPrices { delta_t: u64 },
    SearchCandidates { delta_t: u64 },
    Validate { w_p: u64 },
    Score,
    Terminate { reason: String },
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::ResolveTarget { .. } => ActionKind::ResolveTarget,
            Action::ComputeWindow { .. } => ActionKind::ComputeWindow,
            Action::LookupPrices { .. } => ActionKind::LookupPrices,
            Action::SearchCandidates { .. } => ActionKind::SearchCandidates,
            Action::Validate { .. } => ActionKind::Validate,
            Action::Score => ActionKind::Score,
            Action::Terminate { .. } => ActionKind::Terminate,
        }
    }

    /// Short digest of the canonical brief, for transcripts.
    pub fn brief_digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("action serializes");
        crate::digest_hex(&json)[..16].to_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingStatus {
    Pending,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FindingPayload {
    Target { key: TransferKey, ts: Timestamp, amt: Amount },
    Window { window: TimeWindow },
    Prices { priced_lanes: usize, warnings: Vec<String> },
    Candidates { count: usize, window: TimeWindow },
    Validation { accepted: usize, rejected: Rejections },
    Scored { count: usize, top: Option<TransferKey> },
    Failure { reason: String },
}

/// Observation returned by the worker for one action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub source: ActionKind,
    pub payload: FindingPayload,
    pub status: FindingStatus,
}

impl Finding {
    pub fn summary(&self) -> String {
        match &self.payload {
            FindingPayload::Target { key, ts, amt } => format!("resolved {key} ts={ts} amt={amt}"),
            FindingPayload::Window { window } => format!("window [{}, {}]", window.lo, window.hi),
            FindingPayload::Prices { priced_lanes, warnings } => {
                format!("{priced_lanes} lanes priced, {} skipped", warnings.len())
            }
            FindingPayload::Candidates { count, window } => {
                format!("{count} candidates in [{}, {}]", window.lo, window.hi)
            }
            FindingPayload::Validation { accepted, rejected } => {
                format!("{accepted} accepted, {} rejected", rejected.total())
            }
            FindingPayload::Scored { count, top } => match top {
                Some(t) => format!("{count} ranked, top {t}"),
                None => format!("{count} ranked"),
            },
            FindingPayload::Failure { reason } => format!("failure: {reason}"),
        }
    }
}

/// Boolean milestone vector plus an append-only log of accepted findings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeliefState {
    bits: [bool; 6],
    pub step_count: usize,
    pub notes: Vec<String>,
}

impl BeliefState {
    pub fn fresh() -> Self {
        Self::default()
    }

    pub fn complete() -> Self {
        Self {
            bits: [true; 6],
            ..Self::default()
        }
    }

    pub fn with_bits(bits: [bool; 6]) -> Self {
        Self {
            bits,
            ..Self::default()
        }
    }

    pub fn bits(&self) -> [bool; 6] {
        self.bits
    }

    pub fn is_set(&self, m: Milestone) -> bool {
        self.bits[m.index()]
    }

    pub fn is_complete(&self) -> bool {
        self.bits.iter().all(|b| *b)
    }

    /// Lowest-index milestone still open.
    pub fn first_open(&self) -> Option<Milestone> {
        Milestone::ALL.into_iter().find(|m| !self.is_set(*m))
    }

    /// Bits rendered as e.g. `110000`.
    pub fn bit_string(&self) -> String {
        self.bits.iter().map(|b| if *b { '1' } else { '0' }).collect()
    }

    /// Flips the milestone of an accepted finding. Rejected or pending
    /// findings leave the state untouched.
    pub fn accept(&mut self, f: &Finding) -> Result<()> {
        if f.status != FindingStatus::Accepted {
            return Ok(());
        }
        let m = f
            .source
            .milestone()
            .ok_or_else(|| Error::ProtocolViolation("terminate produces no finding to accept".into()))?;
        if self.is_set(m) {
            return Err(Error::ProtocolViolation(format!("milestone {m:?} already complete")));
        }
        self.bits[m.index()] = true;
        self.notes.push(f.summary());
        Ok(())
    }
}

pub fn accept_finding(belief: &BeliefState, f: &Finding) -> Result<BeliefState> {
    let mut next = belief.clone();
    next.accept(f)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finding(kind: ActionKind, status: FindingStatus) -> Finding {
        Finding {
            source: kind,
            payload: FindingPayload::Failure { reason: "x".into() },
            status,
        }
    }

    #[test]
    fn accept_flips_only_its_bit() {
        let b = accept_finding(&BeliefState::fresh(), &finding(ActionKind::ResolveTarget, FindingStatus::Accepted)).unwrap();
        assert_eq!(b.bit_string(), "100000");
        assert_eq!(b.step_count, 0);
    }

    #[test]
    fn rejected_leaves_belief() {
        let b = accept_finding(&BeliefState::fresh(), &finding(ActionKind::ResolveTarget, FindingStatus::Rejected)).unwrap();
        assert_eq!(b, BeliefState::fresh());
    }

    #[test]
    fn double_accept_is_violation() {
        let b = accept_finding(&BeliefState::fresh(), &finding(ActionKind::Validate, FindingStatus::Accepted)).unwrap();
        let err = accept_finding(&b, &finding(ActionKind::Validate, FindingStatus::Accepted)).unwrap_err();
        assert!(matches!(err, Error::ProtocolViolation(_)));
    }

    #[test]
    fn six_acceptances_complete() {
        let mut b = BeliefState::fresh();
        for m in Milestone::ALL {
            assert!(!b.is_complete());
            b = accept_finding(&b, &finding(ActionKind::for_milestone(m), FindingStatus::Accepted)).unwrap();
        }
        assert!(b.is_complete());
        assert_eq!(b.notes.len(), 6);
    }
}
