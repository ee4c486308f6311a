use super::belief::{Action, ActionKind, BeliefState, Finding, FindingStatus, Milestone};
use crate::ledger::TransferKey;
use crate::trace::TraceConfig;

/// Strategic role: maps the belief state and the latest finding to the next
/// action. Implementations must never choose an action whose milestone is
/// already complete, and must terminate once every milestone is complete.
pub trait Policy {
    fn decide(&mut self, belief: &BeliefState, last: Option<&Finding>) -> Action;
}

/// Deterministic default policy: work on the lowest open milestone.
///
/// A rejected search is retried once with the backward window doubled, and a
/// rejected validation once with the tight price window doubled; any other
/// rejection, or a second rejection, terminates the investigation.
#[derive(Debug, Clone)]
pub struct HeuristicPolicy {
    target: TransferKey,
    delta_t: u64,
    w_p: u64,
    search_retried: bool,
    validate_retried: bool,
}

impl HeuristicPolicy {
    pub fn new(target: TransferKey, cfg: &TraceConfig) -> Self {
        Self {
            target,
            delta_t: cfg.delta_t,
            w_p: cfg.w_p,
            search_retried: false,
            validate_retried: false,
        }
    }

    fn action_for(&self, m: Milestone) -> Action {
        match m {
            Milestone::TargetResolved => Action::ResolveTarget {
                target: self.target.clone(),
            },
            Milestone::WindowComputed => Action::ComputeWindow { delta_t: self.delta_t },
            Milestone::PricesResolved => Action::LookupPrices { delta_t: self.delta_t },
            Milestone::CandidatesRetrieved => Action::SearchCandidates { delta_t: self.delta_t },
            Milestone::ValidationPassed => Action::Validate { w_p: self.w_p },
            Milestone::ScoringCompleted => Action::Score,
        }
    }
}

impl Policy for HeuristicPolicy {
    fn decide(&mut self, belief: &BeliefState, last: Option<&Finding>) -> Action {
        let Some(open) = belief.first_open() else {
            return Action::Terminate {
                reason: "all milestones complete".into(),
            };
        };
        if let Some(f) = last.filter(|f| f.status == FindingStatus::Rejected) {
            match f.source {
                ActionKind::SearchCandidates if !self.search_retried => {
                    self.search_retried = true;
                    self.delta_t = self.delta_t.saturating_mul(2);
                }
                ActionKind::Validate if !self.validate_retried => {
                    self.validate_retried = true;
                    self.w_p = self.w_p.saturating_mul(2);
                }
                kind => {
                    return Action::Terminate {
                        reason: format!("{kind:?} rejected: {}", f.summary()),
                    }
                }
            }
        }
        self.action_for(open)
    }
}
