//! Joint tracing of a suspected Sybil cluster.
//!
//! Every destination transfer is traced on its own; the accepted source
//! candidates are then expanded upstream on their own chain, and each
//! destination casts one vote for every spender address found in the
//! upstream history of any of its candidates. Addresses collecting at least
//! `vote_threshold` votes are reported as common ancestors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{AncestryOptions, ChainOrd, Transfer, TransferKey, TransferStore};
use crate::price::PriceOracle;
use crate::trace::{trace_single, TraceConfig, TraceResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupQuery {
    pub targets: Vec<TransferKey>,
    /// Upstream expansion depth.
    pub depth: u32,
    pub ancestry: AncestryOptions,
    pub trace: TraceConfig,
    pub vote_threshold: usize,
    /// Feed only the rank-1 candidate of each target into ancestry.
    pub top1_only: bool,
}

impl Default for GroupQuery {
    fn default() -> Self {
        Self {
            targets: Vec::new(),
            depth: 3,
            ancestry: AncestryOptions::default(),
            trace: TraceConfig::default(),
            vote_threshold: 2,
            top1_only: false,
        }
    }
}

impl GroupQuery {
    pub fn new(targets: Vec<TransferKey>) -> Self {
        Self {
            targets,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::Config("group query has no targets".into()));
        }
        let distinct: BTreeSet<_> = self.targets.iter().collect();
        if distinct.len() != self.targets.len() {
            return Err(Error::Config("group query targets are not distinct".into()));
        }
        if self.depth == 0 {
            return Err(Error::Config("ancestry depth must be at least 1".into()));
        }
        if self.vote_threshold < 2 {
            return Err(Error::Config("vote threshold must be at least 2".into()));
        }
        Ok(())
    }
}

/// Evidence for one vote: the source candidate and the upstream transfer
/// whose spender set contains the address.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub target: TransferKey,
    pub candidate: TransferKey,
    pub ancestor: TransferKey,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteEntry {
    pub hit_count: usize,
    pub supporting_targets: BTreeSet<TransferKey>,
    /// One witness per supporting target, in target order.
    pub witnesses: Vec<Witness>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTable {
    pub entries: BTreeMap<String, VoteEntry>,
}

impl VoteTable {
    pub fn hit(&self, address: &str) -> usize {
        self.entries.get(address).map_or(0, |e| e.hit_count)
    }
}

/// Spender addresses of every transfer within `depth` upstream hops of `t`.
pub fn ancestor_spenders(store: &TransferStore, t: &Transfer, depth: u32, opts: &AncestryOptions) -> Result<BTreeSet<String>> {
    Ok(store
        .predecessors_within(t, depth, opts)?
        .into_iter()
        .flat_map(|a| a.transfer.spenders.iter().cloned())
        .collect())
}

type WitnessKey = (ChainOrd, TransferKey, TransferKey);

/// Per target: address -> smallest (ancestor ord, ancestor, candidate).
fn target_ancestry(store: &TransferStore, candidates: &[&Transfer], depth: u32, opts: &AncestryOptions) -> Result<BTreeMap<String, WitnessKey>> {
    let mut best: BTreeMap<String, WitnessKey> = BTreeMap::new();
    for cand in candidates {
        for anc in store.predecessors_within(cand, depth, opts)? {
            let key = (anc.transfer.ord, anc.transfer.key(), cand.key());
            for a in &anc.transfer.spenders {
                match best.get_mut(a) {
                    Some(cur) if *cur <= key => {}
                    Some(cur) => *cur = key.clone(),
                    None => {
                        best.insert(a.clone(), key.clone());
                    }
                }
            }
        }
    }
    Ok(best)
}

/// Counts, for every address, how many targets admit it as an upstream
/// spender of at least one of their candidates.
pub fn vote_common_ancestors(
    candidates_per_target: &BTreeMap<TransferKey, Vec<&Transfer>>,
    store: &TransferStore,
    depth: u32,
    opts: &AncestryOptions,
) -> Result<VoteTable> {
    let per_target: Vec<(TransferKey, BTreeMap<String, WitnessKey>)> = candidates_per_target
        .par_iter()
        .map(|(target, cands)| Ok((target.clone(), target_ancestry(store, cands, depth, opts)?)))
        .collect::<Result<_>>()?;

    let mut table = VoteTable::default();
    for (target, addrs) in per_target {
        for (address, (_, ancestor, candidate)) in addrs {
            let e = table.entries.entry(address).or_default();
            e.hit_count += 1;
            e.supporting_targets.insert(target.clone());
            e.witnesses.push(Witness {
                target: target.clone(),
                candidate,
                ancestor,
            });
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TargetOutcome {
    Traced { result: TraceResult },
    Failed { kind: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub target: TransferKey,
    #[serde(flatten)]
    pub outcome: TargetOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommonAncestor {
    pub address: String,
    pub hit_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub depth: u32,
    pub vote_threshold: usize,
    pub per_target: Vec<TargetReport>,
    pub votes: VoteTable,
    /// Ordered by (hit_count desc, address asc).
    pub common_ancestors: Vec<CommonAncestor>,
    /// Targets supporting no reported ancestor.
    pub degenerated: Vec<TransferKey>,
}

impl GroupResult {
    pub fn ancestor(&self, address: &str) -> Option<&CommonAncestor> {
        self.common_ancestors.iter().find(|c| c.address == address)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("group result serializes")
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "group trace: {} targets, depth {}, threshold {}", self.per_target.len(), self.depth, self.vote_threshold);
        for r in &self.per_target {
            match &r.outcome {
                TargetOutcome::Traced { result } => {
                    let _ = writeln!(s, "target {}: {} candidates", r.target, result.candidates.len());
                    for (i, c) in result.candidates.iter().enumerate() {
                        let _ = writeln!(s, "  {:>3}. {} s_final={:.6} gap={}", i + 1, c.link.src, c.s_final, c.gap);
                    }
                }
                TargetOutcome::Failed { kind, error } => {
                    let _ = writeln!(s, "target {}: failed ({kind}): {error}", r.target);
                }
            }
        }
        let _ = writeln!(s, "common ancestors:");
        if self.common_ancestors.is_empty() {
            let _ = writeln!(s, "  (none)");
        }
        for ca in &self.common_ancestors {
            let _ = writeln!(s, "  {} hit={}/{}", ca.address, ca.hit_count, self.per_target.len());
            if let Some(e) = self.votes.entries.get(&ca.address) {
                for w in &e.witnesses {
                    let _ = writeln!(s, "    {} <- {} <- {}", w.target, w.candidate, w.ancestor);
                }
            }
        }
        let _ = writeln!(s, "degenerated:");
        for d in &self.degenerated {
            let _ = writeln!(s, "  {d}");
        }
        s
    }
}

/// Traces every target, expands accepted candidates upstream and reports
/// addresses reaching the vote threshold. A failing target is recorded and
/// does not abort the group.
pub fn trace_group(store: &TransferStore, oracle: &PriceOracle, q: &GroupQuery) -> Result<GroupResult> {
    q.validate()?;
    q.trace.validate()?;
    let mut targets = q.targets.clone();
    targets.sort();

    let traced: Vec<(TransferKey, Result<TraceResult>)> = targets
        .par_iter()
        .map(|t| (t.clone(), trace_single(store, oracle, t, &q.trace)))
        .collect();

    let mut per_target = Vec::with_capacity(traced.len());
    let mut candidates: BTreeMap<TransferKey, Vec<&Transfer>> = BTreeMap::new();
    for (target, res) in traced {
        match res {
            Ok(result) => {
                let take = if q.top1_only { 1 } else { result.candidates.len() };
                let srcs = result
                    .candidates
                    .iter()
                    .take(take)
                    .map(|c| store.get(&c.link.src))
                    .collect::<Result<Vec<_>>>()?;
                candidates.insert(target.clone(), srcs);
                per_target.push(TargetReport {
                    target,
                    outcome: TargetOutcome::Traced { result },
                });
            }
            Err(e) => per_target.push(TargetReport {
                target,
                outcome: TargetOutcome::Failed {
                    kind: e.kind().to_owned(),
                    error: e.to_string(),
                },
            }),
        }
    }

    let votes = vote_common_ancestors(&candidates, store, q.depth, &q.ancestry)?;
    let mut common_ancestors: Vec<CommonAncestor> = votes
        .entries
        .iter()
        .filter(|(_, e)| e.hit_count >= q.vote_threshold)
        .map(|(a, e)| CommonAncestor {
            address: a.clone(),
            hit_count: e.hit_count,
        })
        .collect();
    common_ancestors.sort_by(|a, b| b.hit_count.cmp(&a.hit_count).then_with(|| a.address.cmp(&b.address)));

    let supported: BTreeSet<&TransferKey> = common_ancestors
        .iter()
        .flat_map(|ca| votes.entries[&ca.address].supporting_targets.iter())
        .collect();
    let degenerated = targets.iter().filter(|t| !supported.contains(t)).cloned().collect();

    Ok(GroupResult {
        depth: q.depth,
        vote_threshold: q.vote_threshold,
        per_target,
        votes,
        common_ancestors,
        degenerated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{Amount, ChainModel, Registry, StoreBuilder};

    fn registry() -> Registry {
        let mut r = Registry::new();
        r.add_chain("ETH".into(), ChainModel::Account).unwrap();
        r.add_asset("ETH".into(), ["ETH".into()]).unwrap();
        r
    }

    fn pay(tx: &str, from: &str, to: &str, h: u64) -> Transfer {
        Transfer {
            tx_id: tx.into(),
            chain: "ETH".into(),
            ts: h * 12,
            asset: "ETH".into(),
            amt: Amount::from_units(100),
            spenders: BTreeSet::from([from.to_string()]),
            recipients: BTreeSet::from([to.to_string()]),
            ord: ChainOrd::new(h, 0),
            inputs: vec![],
            outputs: vec![],
        }
    }

    fn store(ts: Vec<Transfer>) -> TransferStore {
        let mut b = StoreBuilder::new(registry());
        for t in ts {
            b.insert(t).unwrap();
        }
        b.build().unwrap()
    }

    fn key(tx: &str) -> TransferKey {
        TransferKey::new("ETH", tx)
    }

    #[test]
    fn ancestor_spender_examples() {
        // a pays b, b pays c (t is c's outgoing transfer)
        let s = store(vec![pay("ab", "a", "b", 1), pay("bc", "b", "c", 2), pay("t", "c", "vault", 3)]);
        let t = s.get(&key("t")).unwrap();
        let opts = AncestryOptions::default();
        assert_eq!(ancestor_spenders(&s, t, 2, &opts).unwrap(), BTreeSet::from(["a".into(), "b".into()]));
        assert_eq!(ancestor_spenders(&s, t, 1, &opts).unwrap(), BTreeSet::from(["b".into()]));
        let root = s.get(&key("ab")).unwrap();
        assert!(ancestor_spenders(&s, root, 3, &opts).unwrap().is_empty());
    }

    #[test]
    fn one_vote_per_target() {
        // two candidates of the same target both descend from `a`
        let s = store(vec![
            pay("f1", "a", "x", 1),
            pay("f2", "a", "y", 2),
            pay("c1", "x", "vault", 3),
            pay("c2", "y", "vault", 4),
        ]);
        let mut per = BTreeMap::new();
        per.insert(key("dst"), vec![s.get(&key("c1")).unwrap(), s.get(&key("c2")).unwrap()]);
        let v = vote_common_ancestors(&per, &s, 2, &AncestryOptions::default()).unwrap();
        assert_eq!(v.hit("a"), 1);
        let e = &v.entries["a"];
        assert_eq!(e.witnesses.len(), 1);
        // smallest-ord ancestor wins the witness slot
        assert_eq!(e.witnesses[0].ancestor, key("f1"));
    }

    #[test]
    fn single_target_single_candidate() {
        let s = store(vec![pay("f", "a", "x", 1), pay("c", "x", "vault", 2)]);
        let per = BTreeMap::from([(key("d"), vec![s.get(&key("c")).unwrap()])]);
        let v = vote_common_ancestors(&per, &s, 1, &AncestryOptions::default()).unwrap();
        assert_eq!(v.hit("a"), 1);
        assert_eq!(v.entries.len(), 1);
    }

    #[test]
    fn five_targets_converge() {
        let mut ts = Vec::new();
        for i in 0..5 {
            ts.push(pay(&format!("f{i}"), "root", &format!("leaf{i}"), i + 1));
            ts.push(pay(&format!("c{i}"), &format!("leaf{i}"), "vault", i + 10));
        }
        let s = store(ts);
        let per: BTreeMap<_, _> = (0..5)
            .map(|i| (key(&format!("d{i}")), vec![s.get(&key(&format!("c{i}"))).unwrap()]))
            .collect();
        let v = vote_common_ancestors(&per, &s, 3, &AncestryOptions::default()).unwrap();
        assert_eq!(v.hit("root"), 5);
    }

    #[test]
    fn query_validation() {
        let s = store(vec![pay("t", "a", "b", 1)]);
        let o = PriceOracle::new();
        assert!(trace_group(&s, &o, &GroupQuery::new(vec![])).is_err());
        assert!(trace_group(&s, &o, &GroupQuery::new(vec![key("t"), key("t")])).is_err());
        let mut q = GroupQuery::new(vec![key("t")]);
        q.vote_threshold = 1;
        assert!(trace_group(&s, &o, &q).is_err());
    }

    #[test]
    fn failing_target_is_isolated() {
        let s = store(vec![pay("t", "a", "b", 1)]);
        let r = trace_group(&s, &PriceOracle::new(), &GroupQuery::new(vec![key("t"), key("missing")])).unwrap();
        assert_eq!(r.per_target.len(), 2);
        assert!(matches!(r.per_target[0].outcome, TargetOutcome::Failed { .. }));
        assert!(matches!(r.per_target[1].outcome, TargetOutcome::Traced { .. }));
        assert_eq!(r.degenerated.len(), 2);
    }
}
