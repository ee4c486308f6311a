use serde::{Deserialize, Serialize};

use super::belief::{Action, ActionKind, BeliefState, Finding, FindingPayload, FindingStatus, Milestone};
use super::policy::Policy;
use crate::error::{Error, Result};
use crate::ledger::{TimeWindow, Transfer, TransferStore};
use crate::price::{PriceOracle, PriceRange};
use crate::trace::{
    lane_prices, rank, score_candidate, search_candidates, source_lanes, temporal_window, validate_forward,
    PriceContext, Rejections, TraceConfig, TraceResult, Verdict,
};

/// Read-only environment shared by the worker and critic.
#[derive(Clone, Copy)]
pub struct Env<'a> {
    pub store: &'a TransferStore,
    pub oracle: &'a PriceOracle,
    pub cfg: &'a TraceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub step: usize,
    /// Belief bits before the action.
    pub belief: String,
    pub action: ActionKind,
    pub brief_digest: String,
    pub status: Option<FindingStatus>,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub reason: String,
    pub belief: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed(TraceResult),
    Failed(FailureReport),
}

#[derive(Debug, Clone)]
pub struct LoopOutput {
    pub outcome: Outcome,
    pub belief: BeliefState,
    pub transcript: Vec<TranscriptRecord>,
}

impl LoopOutput {
    pub fn result(&self) -> Option<&TraceResult> {
        match &self.outcome {
            Outcome::Completed(r) => Some(r),
            Outcome::Failed(_) => None,
        }
    }

    /// Transcript as JSON lines.
    pub fn transcript_jsonl(&self) -> String {
        self.transcript
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

/// Evidence gathered so far.
struct Workspace<'s> {
    cfg: TraceConfig,
    target: Option<&'s Transfer>,
    window: Option<TimeWindow>,
    prices: Option<PriceContext>,
    candidates: Vec<&'s Transfer>,
    accepted: Vec<(&'s Transfer, f64, PriceRange)>,
    rejected: Rejections,
    result: Option<TraceResult>,
}

fn failure(source: ActionKind, reason: impl Into<String>) -> Finding {
    Finding {
        source,
        payload: FindingPayload::Failure { reason: reason.into() },
        status: FindingStatus::Pending,
    }
}

fn pending(source: ActionKind, payload: FindingPayload) -> Finding {
    Finding {
        source,
        payload,
        status: FindingStatus::Pending,
    }
}

/// Operational role: runs the tool calls behind an action.
fn execute<'s>(action: &Action, ws: &mut Workspace<'s>, env: &Env<'s>) -> Finding {
    let kind = action.kind();
    let need_target = |ws: &Workspace<'s>| ws.target.ok_or_else(|| failure(kind, "target not resolved"));
    let result: std::result::Result<Finding, Finding> = (|| match action {
        Action::ResolveTarget { target } => {
            let t = env.store.get(target).map_err(|e| failure(kind, e.to_string()))?;
            ws.target = Some(t);
            Ok(pending(
                kind,
                FindingPayload::Target {
                    key: t.key(),
                    ts: t.ts,
                    amt: t.amt,
                },
            ))
        }
        Action::ComputeWindow { delta_t } => {
            let t = need_target(ws)?;
            ws.cfg.delta_t = *delta_t;
            let window = temporal_window(t, &ws.cfg);
            ws.window = Some(window);
            Ok(pending(kind, FindingPayload::Window { window }))
        }
        Action::LookupPrices { delta_t } => {
            let t = need_target(ws)?;
            refresh_prices(ws, env, t, *delta_t).map_err(|e| failure(kind, e.to_string()))?;
            let ctx = ws.prices.as_ref().expect("prices just set");
            Ok(pending(
                kind,
                FindingPayload::Prices {
                    priced_lanes: ctx.lanes.len(),
                    warnings: ctx.warnings.clone(),
                },
            ))
        }
        Action::SearchCandidates { delta_t } => {
            let t = need_target(ws)?;
            if ws.prices.is_none() || ws.cfg.delta_t != *delta_t {
                refresh_prices(ws, env, t, *delta_t).map_err(|e| failure(kind, e.to_string()))?;
            }
            let ctx = ws.prices.as_ref().expect("prices resolved");
            ws.candidates = search_candidates(env.store, t, ctx).map_err(|e| failure(kind, e.to_string()))?;
            Ok(pending(
                kind,
                FindingPayload::Candidates {
                    count: ws.candidates.len(),
                    window: ctx.window,
                },
            ))
        }
        Action::Validate { w_p } => {
            let t = need_target(ws)?;
            ws.cfg.w_p = *w_p;
            ws.accepted.clear();
            ws.rejected = Rejections::default();
            for c in &ws.candidates {
                match validate_forward(c, t, env.oracle, &ws.cfg) {
                    Verdict::Accept {
                        implied_fee_rate,
                        tight,
                    } => ws.accepted.push((c, implied_fee_rate, tight)),
                    Verdict::Reject(r) => ws.rejected.record(r),
                }
            }
            Ok(pending(
                kind,
                FindingPayload::Validation {
                    accepted: ws.accepted.len(),
                    rejected: ws.rejected,
                },
            ))
        }
        Action::Score => {
            let t = need_target(ws)?;
            let mut scored = ws
                .accepted
                .iter()
                .map(|(c, fee, tight)| score_candidate(c, t, *fee, tight, &ws.cfg))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| failure(kind, e.to_string()))?;
            rank(&mut scored);
            let ctx = ws.prices.as_ref().ok_or_else(|| failure(kind, "prices not resolved"))?;
            let result = TraceResult {
                target: t.key(),
                target_ts: t.ts,
                target_asset: t.asset.clone(),
                target_amt: t.amt,
                window: ctx.window,
                config: ws.cfg.clone(),
                searched: ws.candidates.len(),
                rejected: ws.rejected,
                warnings: ctx.warnings.clone(),
                candidates: scored,
            };
            let top = result.candidates.first().map(|c| c.link.src.clone());
            let count = result.candidates.len();
            ws.result = Some(result);
            Ok(pending(kind, FindingPayload::Scored { count, top }))
        }
        Action::Terminate { .. } => Err(failure(kind, "terminate is not executable")),
    })();
    result.unwrap_or_else(|f| f)
}

fn refresh_prices<'s>(ws: &mut Workspace<'s>, env: &Env<'s>, t: &Transfer, delta_t: u64) -> Result<()> {
    ws.cfg.delta_t = delta_t;
    let window = temporal_window(t, &ws.cfg);
    let lanes = source_lanes(env.store, t, &ws.cfg);
    ws.window = Some(window);
    ws.prices = Some(lane_prices(env.oracle, t, &lanes, window, &ws.cfg)?);
    Ok(())
}

/// Evaluative role: decides whether a finding completes its milestone.
fn assess(f: &Finding, ws: &Workspace<'_>) -> FindingStatus {
    let ok = match &f.payload {
        FindingPayload::Target { .. } | FindingPayload::Window { .. } => true,
        FindingPayload::Prices { priced_lanes, .. } => *priced_lanes > 0,
        FindingPayload::Candidates { count, .. } => *count > 0,
        FindingPayload::Validation { accepted, .. } => *accepted > 0,
        FindingPayload::Scored { .. } => ws.result.as_ref().is_some_and(|r| {
            r.candidates
                .iter()
                .all(|c| c.src_ts <= r.target_ts && (0.0..=1.0).contains(&c.s_final))
        }),
        FindingPayload::Failure { .. } => false,
    };
    if ok {
        FindingStatus::Accepted
    } else {
        FindingStatus::Rejected
    }
}

/// Runs the perceive-reason-act loop until scoring completes, the policy
/// terminates, or `budget` actions have executed.
///
/// Returns a protocol-violation error if the policy selects an action whose
/// milestone is complete or whose prerequisites are not.
pub fn step_loop(policy: &mut dyn Policy, env: Env<'_>, mut belief: BeliefState, budget: usize) -> Result<LoopOutput> {
    if budget == 0 {
        return Err(Error::Config("step budget must be at least 1".into()));
    }
    let mut ws = Workspace {
        cfg: env.cfg.clone(),
        target: None,
        window: None,
        prices: None,
        candidates: Vec::new(),
        accepted: Vec::new(),
        rejected: Rejections::default(),
        result: None,
    };
    let mut transcript = Vec::new();
    let mut last: Option<Finding> = None;
    let mut executed = 0;

    let terminal = loop {
        let action = policy.decide(&belief, last.as_ref());
        let kind = action.kind();
        let Some(milestone) = kind.milestone() else {
            let reason = match &action {
                Action::Terminate { reason } => reason.clone(),
                _ => unreachable!(),
            };
            transcript.push(TranscriptRecord {
                step: belief.step_count,
                belief: belief.bit_string(),
                action: kind,
                brief_digest: action.brief_digest(),
                status: None,
                summary: reason.clone(),
            });
            break reason;
        };
        if belief.is_set(milestone) {
            return Err(Error::ProtocolViolation(format!(
                "{kind:?} issued but {milestone:?} is already complete"
            )));
        }
        if let Some(missing) = Milestone::ALL[..milestone.index()].iter().find(|m| !belief.is_set(**m)) {
            return Err(Error::ProtocolViolation(format!("{kind:?} issued before {missing:?}")));
        }
        if executed == budget {
            break format!("step budget of {budget} exhausted");
        }

        let mut finding = execute(&action, &mut ws, &env);
        finding.status = assess(&finding, &ws);
        transcript.push(TranscriptRecord {
            step: belief.step_count,
            belief: belief.bit_string(),
            action: kind,
            brief_digest: action.brief_digest(),
            status: Some(finding.status),
            summary: finding.summary(),
        });
        belief.step_count += 1;
        executed += 1;
        belief.accept(&finding)?;
        last = Some(finding);
    };

    let outcome = match (belief.is_set(Milestone::ScoringCompleted), ws.result.take()) {
        (true, Some(r)) => Outcome::Completed(r),
        _ => Outcome::Failed(FailureReport {
            reason: terminal,
            belief: belief.bit_string(),
        }),
    };
    Ok(LoopOutput {
        outcome,
        belief,
        transcript,
    })
}
