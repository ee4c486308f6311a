//! Same-chain value-flow predecessors and bounded upstream expansion.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Amount, AssetId, ChainModel, Transfer, TransferKey, TransferStore};
use crate::error::{Error, Result};

pub const DEFAULT_ACCOUNT_FAN_IN: usize = 16;
pub const DEFAULT_BRANCHING_CAP: usize = 64;

/// Pruning knobs for [`TransferStore::predecessors_within`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AncestryOptions {
    /// Maximum predecessors kept per expanded transfer.
    pub branching_cap: usize,
    /// Account chains: latest incoming transfers considered per spender.
    pub account_fan_in: usize,
    /// Per-asset minimum amount; smaller predecessors are not expanded.
    pub dust: BTreeMap<AssetId, Amount>,
}

impl Default for AncestryOptions {
    fn default() -> Self {
        Self {
            branching_cap: DEFAULT_BRANCHING_CAP,
            account_fan_in: DEFAULT_ACCOUNT_FAN_IN,
            dust: BTreeMap::new(),
        }
    }
}

impl AncestryOptions {
    fn is_dust(&self, t: &Transfer) -> bool {
        self.dust.get(&t.asset).is_some_and(|min| t.amt < *min)
    }
}

/// A transfer reached during upstream expansion and the hop at which it was
/// first reached.
#[derive(Debug, Clone, Copy)]
pub struct Ancestor<'a> {
    pub transfer: &'a Transfer,
    pub depth: u32,
}

impl TransferStore {
    /// Direct same-chain predecessors of `t`, ordered by (ord, tx_id).
    ///
    /// UTXO chains follow spent-output references. Account chains take, per
    /// spender address, the latest [`DEFAULT_ACCOUNT_FAN_IN`] incoming
    /// transfers that precede `t`.
    pub fn predecessors(&self, t: &Transfer) -> Result<Vec<&Transfer>> {
        self.predecessors_limited(t, DEFAULT_ACCOUNT_FAN_IN)
    }

    pub fn predecessors_limited(&self, t: &Transfer, account_fan_in: usize) -> Result<Vec<&Transfer>> {
        let model = self.registry().model(&t.chain)?;
        let pos = self.position(&t.key())?;
        let idx = self.direct_predecessors(pos, model, account_fan_in);
        Ok(idx.into_iter().map(|i| self.at(i)).collect())
    }

    fn direct_predecessors(&self, pos: usize, model: ChainModel, account_fan_in: usize) -> Vec<usize> {
        let t = self.at(pos);
        let mut out: Vec<usize> = Vec::new();
        match model {
            ChainModel::Utxo => {
                for input in &t.inputs {
                    let key = TransferKey {
                        chain: t.chain.clone(),
                        tx_id: input.tx_id.clone(),
                    };
                    if let Ok(p) = self.position(&key) {
                        if self.at(p).ord < t.ord {
                            out.push(p);
                        }
                    }
                }
            }
            ChainModel::Account => {
                for spender in &t.spenders {
                    let incoming = self.incoming(&t.chain, spender);
                    let upto = incoming.partition_point(|&i| self.at(i).ord <= t.ord);
                    out.extend(
                        incoming[..upto]
                            .iter()
                            .rev()
                            .filter(|&&i| i != pos)
                            .take(account_fan_in)
                            .copied(),
                    );
                }
            }
        }
        out.sort_by(|&a, &b| (self.at(a).ord, &self.at(a).tx_id).cmp(&(self.at(b).ord, &self.at(b).tx_id)));
        out.dedup();
        out
    }

    /// Predecessors reachable from `t` within `depth` hops, excluding `t`,
    /// in breadth-first order.
    ///
    /// Each expanded transfer contributes at most `opts.branching_cap` of its
    /// non-dust predecessors, keeping the largest amounts (ties by smaller ord).
    pub fn predecessors_within(&self, t: &Transfer, depth: u32, opts: &AncestryOptions) -> Result<Vec<Ancestor<'_>>> {
        if depth == 0 {
            return Err(Error::Config("ancestry depth must be at least 1".into()));
        }
        let model = self.registry().model(&t.chain)?;
        let root = self.position(&t.key())?;

        let mut visited = HashSet::from([root]);
        let mut frontier = vec![root];
        let mut out = Vec::new();
        for hop in 1..=depth {
            let mut next = Vec::new();
            for &node in &frontier {
                let mut preds: Vec<usize> = self
                    .direct_predecessors(node, model, opts.account_fan_in)
                    .into_iter()
                    .filter(|&p| !opts.is_dust(self.at(p)))
                    .collect();
                preds.sort_by(|&a, &b| {
                    let (a, b) = (self.at(a), self.at(b));
                    b.amt.cmp(&a.amt).then(a.ord.cmp(&b.ord)).then(a.tx_id.cmp(&b.tx_id))
                });
                preds.truncate(opts.branching_cap);
                for p in preds {
                    if visited.insert(p) {
                        next.push(p);
                        out.push(Ancestor {
                            transfer: self.at(p),
                            depth: hop,
                        });
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        Ok(out)
    }
}
