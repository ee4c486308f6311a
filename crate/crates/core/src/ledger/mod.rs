//! On-chain data model: chains, assets, transfers and links.

mod amount;
mod ancestry;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use amount::Amount;
pub use ancestry::{Ancestor, AncestryOptions, DEFAULT_ACCOUNT_FAN_IN, DEFAULT_BRANCHING_CAP};
pub use store::{StoreBuilder, TimeWindow, TransferStore};

/// Seconds since the Unix epoch.
pub type Timestamp = u64;

macro_rules! symbol {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

symbol!(
    /// Symbolic chain identifier, e.g. `BTC` or `ETH`.
    ChainId
);
symbol!(
    /// Symbolic asset code.
    AssetId
);
symbol!(
    /// Bridge identifier. Heuristic traces that cannot attribute a bridge use
    /// [`BridgeId::unknown`].
    BridgeId
);

impl BridgeId {
    pub fn unknown() -> Self {
        Self::new("unknown")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainModel {
    Utxo,
    Account,
}

/// Chains and the assets they carry. Every transfer must reference a
/// registered chain and an asset supported on that chain.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    chains: BTreeMap<ChainId, ChainModel>,
    assets: BTreeMap<AssetId, BTreeSet<ChainId>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_chain(&mut self, chain: ChainId, model: ChainModel) -> Result<()> {
        match self.chains.get(&chain) {
            Some(existing) if *existing != model => Err(Error::Config(format!(
                "chain {chain} already registered with a different model"
            ))),
            _ => {
                self.chains.insert(chain, model);
                Ok(())
            }
        }
    }

    pub fn add_asset(&mut self, asset: AssetId, chains: impl IntoIterator<Item = ChainId>) -> Result<()> {
        let chains: BTreeSet<_> = chains.into_iter().collect();
        if chains.is_empty() {
            return Err(Error::Config(format!("asset {asset} has no supporting chain")));
        }
        for chain in &chains {
            if !self.chains.contains_key(chain) {
                return Err(Error::InvalidChain(chain.clone()));
            }
        }
        self.assets.entry(asset).or_default().extend(chains);
        Ok(())
    }

    pub fn model(&self, chain: &ChainId) -> Result<ChainModel> {
        self.chains
            .get(chain)
            .copied()
            .ok_or_else(|| Error::InvalidChain(chain.clone()))
    }

    pub fn supports(&self, asset: &AssetId, chain: &ChainId) -> bool {
        self.assets.get(asset).is_some_and(|c| c.contains(chain))
    }

    pub fn chains(&self) -> impl Iterator<Item = (&ChainId, ChainModel)> {
        self.chains.iter().map(|(c, m)| (c, *m))
    }

    pub fn assets(&self) -> impl Iterator<Item = (&AssetId, &BTreeSet<ChainId>)> {
        self.assets.iter()
    }

    /// Every (chain, asset) lane the registry admits, in sorted order.
    pub fn lanes(&self) -> Vec<Lane> {
        let mut lanes: Vec<Lane> = self
            .assets
            .iter()
            .flat_map(|(asset, chains)| {
                chains.iter().map(move |chain| Lane {
                    chain: chain.clone(),
                    asset: asset.clone(),
                })
            })
            .collect();
        lanes.sort();
        lanes
    }
}

/// A (chain, asset) pair: the unit over which transfers are indexed and
/// searched.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Lane {
    pub chain: ChainId,
    pub asset: AssetId,
}

impl Lane {
    pub fn new(chain: impl Into<String>, asset: impl Into<String>) -> Self {
        Self {
            chain: ChainId::new(chain),
            asset: AssetId::new(asset),
        }
    }
}

impl fmt::Display for Lane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.chain, self.asset)
    }
}

/// Canonical position of a transfer within its chain, compared
/// lexicographically on (block height, intra-block index).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChainOrd {
    pub height: u64,
    pub index: u32,
}

impl ChainOrd {
    pub fn new(height: u64, index: u32) -> Self {
        Self { height, index }
    }
}

/// Globally unique reference to a transfer: transaction ids are only unique
/// within a chain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransferKey {
    pub chain: ChainId,
    pub tx_id: String,
}

impl TransferKey {
    pub fn new(chain: impl Into<String>, tx_id: impl Into<String>) -> Self {
        Self {
            chain: ChainId::new(chain),
            tx_id: tx_id.into(),
        }
    }
}

impl fmt::Display for TransferKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.chain, self.tx_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OutPoint {
    pub tx_id: String,
    pub vout: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxOut {
    pub address: String,
    pub amount: Amount,
}

/// An atomic value-carrying on-chain event.
///
/// For UTXO chains `spenders` are the addresses of the spent outputs and
/// `recipients` the addresses of all created outputs; `amt` is the value
/// delivered to the counterparty (change excluded).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub tx_id: String,
    pub chain: ChainId,
    pub ts: Timestamp,
    pub asset: AssetId,
    pub amt: Amount,
    pub spenders: BTreeSet<String>,
    pub recipients: BTreeSet<String>,
    pub ord: ChainOrd,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<OutPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<TxOut>,
}

impl Transfer {
    pub fn key(&self) -> TransferKey {
        TransferKey {
            chain: self.chain.clone(),
            tx_id: self.tx_id.clone(),
        }
    }

    pub fn lane(&self) -> Lane {
        Lane {
            chain: self.chain.clone(),
            asset: self.asset.clone(),
        }
    }

    pub fn is(&self, key: &TransferKey) -> bool {
        self.chain == key.chain && self.tx_id == key.tx_id
    }
}

/// Association between a source-chain transfer and the destination-chain
/// transfer it produced.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CrossChainLink {
    pub src: TransferKey,
    pub dst: TransferKey,
    pub bridge: BridgeId,
}
