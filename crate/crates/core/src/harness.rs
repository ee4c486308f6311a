//! Recall and Hit@k over traced targets, grouped per chain pair.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TruthLink;
use crate::error::{Error, Result};
use crate::ledger::TransferKey;
use crate::price::PriceOracle;
use crate::trace::{trace_single, TraceConfig, TraceResult};
use crate::ledger::TransferStore;

/// Cut-offs reported for Hit@k.
pub const HIT_KS: [usize; 6] = [1, 3, 5, 10, 20, 50];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub target: TransferKey,
    /// `SRC->DST` chain pair of the ground-truth link.
    pub pair: String,
    pub truth_found: bool,
    /// Best 1-based rank among the target's truth links.
    pub truth_rank: Option<usize>,
    /// The target has more than one ground-truth link.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub multi_truth: bool,
}

/// Aggregates for one group of cases. Percentages carry one decimal,
/// rounded half away from zero; the raw counts are kept alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub found: usize,
    pub hits: BTreeMap<usize, usize>,
    pub recall: f64,
    pub hit_at: BTreeMap<usize, f64>,
}

fn pct(count: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (1000.0 * count as f64 / n as f64).round() / 10.0
}

impl Metrics {
    fn from_cases<'a>(cases: impl IntoIterator<Item = &'a CaseOutcome>) -> Self {
        let mut n = 0;
        let mut found = 0;
        let mut hits: BTreeMap<usize, usize> = HIT_KS.iter().map(|k| (*k, 0)).collect();
        for c in cases {
            n += 1;
            found += c.truth_found as usize;
            if let Some(r) = c.truth_rank {
                for (k, h) in hits.iter_mut() {
                    *h += (r <= *k) as usize;
                }
            }
        }
        Self {
            n,
            found,
            recall: pct(found, n),
            hit_at: hits.iter().map(|(k, h)| (*k, pct(*h, n))).collect(),
            hits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_pair: BTreeMap<String, Metrics>,
    pub overall: Metrics,
    pub config_digest: String,
    pub multi_truth_targets: Vec<TransferKey>,
    pub cases: Vec<CaseOutcome>,
}

/// Outcome of one target against its truth links (any-hit semantics).
pub fn case_outcome(result: &TraceResult, truths: &[&TruthLink]) -> CaseOutcome {
    let truth_rank = truths.iter().filter_map(|l| result.rank_of(&l.link.src)).min();
    let pair = truths
        .first()
        .map(|l| format!("{}->{}", l.link.src.chain, l.link.dst.chain))
        .unwrap_or_default();
    CaseOutcome {
        target: result.target.clone(),
        pair,
        truth_found: truth_rank.is_some(),
        truth_rank,
        multi_truth: truths.len() > 1,
    }
}

/// Scores trace results against ground truth. Every result's target must
/// have at least one truth link.
pub fn evaluate(results: &BTreeMap<TransferKey, TraceResult>, truth: &[TruthLink]) -> Result<EvalReport> {
    let mut by_dst: BTreeMap<&TransferKey, Vec<&TruthLink>> = BTreeMap::new();
    for l in truth {
        by_dst.entry(&l.link.dst).or_default().push(l);
    }
    let mut cases = Vec::with_capacity(results.len());
    for (target, result) in results {
        let truths = by_dst
            .get(target)
            .ok_or_else(|| Error::Config(format!("target {target} has no ground-truth link")))?;
        cases.push(case_outcome(result, truths));
    }
    let mut grouped: BTreeMap<&str, Vec<&CaseOutcome>> = BTreeMap::new();
    for c in &cases {
        grouped.entry(&c.pair).or_default().push(c);
    }
    let per_pair = grouped
        .into_iter()
        .map(|(pair, cs)| (pair.to_owned(), Metrics::from_cases(cs)))
        .collect();
    let digests: BTreeSet<String> = results.values().map(|r| r.config.digest()).collect();
    let config_digest = match digests.len() {
        0 => String::new(),
        1 => digests.into_iter().next().expect("one digest"),
        _ => crate::digest_hex(digests.into_iter().collect::<Vec<_>>().join("\n").as_bytes()),
    };
    Ok(EvalReport {
        per_pair,
        overall: Metrics::from_cases(&cases),
        config_digest,
        multi_truth_targets: cases.iter().filter(|c| c.multi_truth).map(|c| c.target.clone()).collect(),
        cases,
    })
}

/// Traces every target in parallel. Results are keyed by target, so the
/// output does not depend on scheduling.
pub fn trace_targets(
    store: &TransferStore,
    oracle: &PriceOracle,
    targets: &[TransferKey],
    cfg: &TraceConfig,
) -> Result<BTreeMap<TransferKey, TraceResult>> {
    targets
        .par_iter()
        .map(|t| trace_single(store, oracle, t, cfg).map(|r| (t.clone(), r)))
        .collect()
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Aligned table: pair, n, Recall, then Hit@k for each cut-off.
    pub fn render_text(&self) -> String {
        let width = self.per_pair.keys().map(|p| p.len()).max().unwrap_or(0).max(7);
        let mut s = String::new();
        let _ = write!(s, "{:<width$} {:>6} {:>7}", "pair", "n", "Recall");
        for k in HIT_KS {
            let _ = write!(s, " {:>7}", format!("Hit@{k}"));
        }
        s.push('\n');
        let row = |s: &mut String, name: &str, m: &Metrics| {
            let _ = write!(s, "{name:<width$} {:>6} {:>7.1}", m.n, m.recall);
            for k in HIT_KS {
                let _ = write!(s, " {:>7.1}", m.hit_at[&k]);
            }
            s.push('\n');
        };
        for (pair, m) in &self.per_pair {
            row(&mut s, pair, m);
        }
        row(&mut s, "overall", &self.overall);
        let _ = writeln!(s, "config {}", self.config_digest);
        if !self.multi_truth_targets.is_empty() {
            let _ = writeln!(s, "{} targets have several truth links", self.multi_truth_targets.len());
        }
        s
    }
}
