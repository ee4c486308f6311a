use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Amount, ChainId, ChainModel, ChainOrd, Lane, Registry, Timestamp, Transfer, TransferKey};
use crate::error::{Error, Result};

/// Inclusive time interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub lo: Timestamp,
    pub hi: Timestamp,
}

impl TimeWindow {
    pub fn new(lo: Timestamp, hi: Timestamp) -> Result<Self> {
        if lo > hi {
            return Err(Error::Range(format!("time window [{lo}, {hi}] is inverted")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        self.lo <= ts && ts <= self.hi
    }
}

/// Per-lane indexes. Both vectors hold positions into `TransferStore::transfers`.
#[derive(Debug, Default)]
struct LaneIndex {
    /// Sorted by (ts, tx_id).
    by_time: Vec<usize>,
    /// Sorted by (amt, ts, tx_id).
    by_amount: Vec<usize>,
}

/// Collects transfers and validates them before freezing into a
/// [`TransferStore`].
#[derive(Debug)]
pub struct StoreBuilder {
    registry: Registry,
    transfers: Vec<Transfer>,
    keys: HashSet<TransferKey>,
}

impl StoreBuilder {
    pub fn new(registry: Registry) -> Self {
        Self {
            registry,
            transfers: Vec::new(),
            keys: HashSet::new(),
        }
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn len(&self) -> usize {
        self.transfers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transfers.is_empty()
    }

    pub fn contains(&self, key: &TransferKey) -> bool {
        self.keys.contains(key)
    }

    pub fn insert(&mut self, transfer: Transfer) -> Result<()> {
        let key = transfer.key();
        let invalid = |reason: &str| Error::InvalidTransfer {
            key: key.clone(),
            reason: reason.to_owned(),
        };
        let model = self.registry.model(&transfer.chain)?;
        if !self.registry.supports(&transfer.asset, &transfer.chain) {
            return Err(invalid(&format!(
                "asset {} is not supported on {}",
                transfer.asset, transfer.chain
            )));
        }
        if transfer.spenders.is_empty() {
            return Err(invalid("empty spender set"));
        }
        if transfer.recipients.is_empty() {
            return Err(invalid("empty recipient set"));
        }
        if model == ChainModel::Utxo && transfer.outputs.is_empty() {
            return Err(invalid("utxo transfer without outputs"));
        }
        if self.keys.contains(&key) {
            return Err(invalid("duplicate transaction id on chain"));
        }
        self.keys.insert(key);
        self.transfers.push(transfer);
        Ok(())
    }

    pub fn build(self) -> Result<TransferStore> {
        let StoreBuilder {
            registry,
            transfers,
            ..
        } = self;

        let mut by_key = HashMap::with_capacity(transfers.len());
        let mut lanes: HashMap<Lane, LaneIndex> = HashMap::new();
        let mut incoming: HashMap<(ChainId, String), Vec<usize>> = HashMap::new();
        let mut ords: HashMap<(ChainId, ChainOrd), usize> = HashMap::new();

        for (i, t) in transfers.iter().enumerate() {
            by_key.insert(t.key(), i);
            if let Some(&other) = ords.get(&(t.chain.clone(), t.ord)) {
                return Err(Error::InvalidTransfer {
                    key: t.key(),
                    reason: format!("ord {:?} already used by {}", t.ord, transfers[other].tx_id),
                });
            }
            ords.insert((t.chain.clone(), t.ord), i);
            let lane = lanes.entry(t.lane()).or_default();
            lane.by_time.push(i);
            lane.by_amount.push(i);
            if registry.model(&t.chain)? == ChainModel::Account {
                for r in &t.recipients {
                    incoming.entry((t.chain.clone(), r.clone())).or_default().push(i);
                }
            }
        }

        // Spent outputs that resolve inside the store must name an existing vout.
        for t in &transfers {
            for input in &t.inputs {
                let key = TransferKey {
                    chain: t.chain.clone(),
                    tx_id: input.tx_id.clone(),
                };
                if let Some(&p) = by_key.get(&key) {
                    if input.vout as usize >= transfers[p].outputs.len() {
                        return Err(Error::InvalidTransfer {
                            key: t.key(),
                            reason: format!("input {}:{} has no such output", input.tx_id, input.vout),
                        });
                    }
                }
            }
        }

        for lane in lanes.values_mut() {
            lane.by_time
                .sort_by(|&a, &b| (transfers[a].ts, &transfers[a].tx_id).cmp(&(transfers[b].ts, &transfers[b].tx_id)));
            lane.by_amount.sort_by(|&a, &b| {
                (transfers[a].amt, transfers[a].ts, &transfers[a].tx_id).cmp(&(
                    transfers[b].amt,
                    transfers[b].ts,
                    &transfers[b].tx_id,
                ))
            });
        }
        for list in incoming.values_mut() {
            list.sort_by_key(|&i| transfers[i].ord);
        }

        Ok(TransferStore {
            registry,
            transfers,
            by_key,
            lanes,
            incoming,
        })
    }
}

/// Immutable, indexed transfer collection. Safe to share across threads.
#[derive(Debug)]
pub struct TransferStore {
    registry: Registry,
    transfers: Vec<Transfer>,
    by_key: HashMap<TransferKey, usize>,
    lanes: HashMap<Lane, LaneIndex>,
    /// Account chains only: (chain, recipient) -> transfers paying it, by ord.
    incoming: HashMap<(ChainId, String), Vec<usize>>,
}

impl TransferStore {
    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn len(&self) -> usize {
        self.transfers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transfers.is_empty()
    }

    /// Transfers in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &Transfer> {
        self.transfers.iter()
    }

    pub fn get(&self, key: &TransferKey) -> Result<&Transfer> {
        self.position(key).map(|i| &self.transfers[i])
    }

    pub fn get_by_id(&self, chain: &ChainId, tx_id: &str) -> Result<&Transfer> {
        self.get(&TransferKey {
            chain: chain.clone(),
            tx_id: tx_id.to_owned(),
        })
    }

    pub(super) fn position(&self, key: &TransferKey) -> Result<usize> {
        self.registry.model(&key.chain)?;
        self.by_key
            .get(key)
            .copied()
            .ok_or_else(|| Error::NotFound(key.clone()))
    }

    pub(super) fn at(&self, i: usize) -> &Transfer {
        &self.transfers[i]
    }

    pub(super) fn incoming(&self, chain: &ChainId, address: &str) -> &[usize] {
        self.incoming
            .get(&(chain.clone(), address.to_owned()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Transfers on `lane` with `ts` in `window` and `amt` in `[amt_lo, amt_hi]`,
    /// ordered by (ts, tx_id).
    pub fn search(&self, lane: &Lane, window: TimeWindow, amt_lo: Amount, amt_hi: Amount) -> Result<Vec<&Transfer>> {
        if window.lo > window.hi {
            return Err(Error::Range(format!("time window [{}, {}] is inverted", window.lo, window.hi)));
        }
        if amt_lo > amt_hi {
            return Err(Error::Range(format!("amount range [{amt_lo}, {amt_hi}] is inverted")));
        }
        let Some(index) = self.lanes.get(lane) else {
            return Ok(Vec::new());
        };
        let t = &self.transfers;

        let time_lo = index.by_time.partition_point(|&i| t[i].ts < window.lo);
        let time_hi = index.by_time.partition_point(|&i| t[i].ts <= window.hi);
        let amt_lo_pos = index.by_amount.partition_point(|&i| t[i].amt < amt_lo);
        let amt_hi_pos = index.by_amount.partition_point(|&i| t[i].amt <= amt_hi);

        // Scan whichever index yields the narrower slice.
        if time_hi - time_lo <= amt_hi_pos.saturating_sub(amt_lo_pos) {
            Ok(index.by_time[time_lo..time_hi]
                .iter()
                .map(|&i| &t[i])
                .filter(|x| amt_lo <= x.amt && x.amt <= amt_hi)
                .collect())
        } else {
            let mut out: Vec<&Transfer> = index.by_amount[amt_lo_pos..amt_hi_pos]
                .iter()
                .map(|&i| &t[i])
                .filter(|x| window.contains(x.ts))
                .collect();
            out.sort_by(|a, b| (a.ts, &a.tx_id).cmp(&(b.ts, &b.tx_id)));
            Ok(out)
        }
    }
}
