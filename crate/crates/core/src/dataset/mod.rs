//! Dataset files: transfers, price series, swap records, ground-truth links
//! and tiers.
//!
//! A dataset directory holds:
//!
//! ```text
//! manifest.json          DatasetManifest for the raw tier plus the registry
//! transfers.tsv          every transfer, in store order
//! prices/<base>-<quote>.tsv
//! swaps.tsv              raw swap records
//! links.tsv              ground-truth links (src, dst, bridge, fee, delay)
//! sybil.json             planted Sybil scenarios (may be empty)
//! tiers/<tier>/swaps.tsv and tiers/<tier>/manifest.json
//! ```
//!
//! The record formats are described in [`text`].

pub mod text;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{
    Amount, AssetId, BridgeId, ChainId, ChainModel, ChainOrd, CrossChainLink, Lane, Registry, StoreBuilder,
    Timestamp, Transfer, TransferKey, TransferStore, TxOut,
};
use crate::price::PriceOracle;

pub const FORMAT: &str = "cctrace-dataset/1";

/// Maximum inbound-to-outbound delay kept by the high-fidelity tier,
/// inclusive.
pub const HF_MAX_DELAY: u64 = 1800;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadMode {
    /// Abort on the first malformed line.
    #[default]
    Strict,
    /// Skip malformed lines and report them.
    Lenient,
}

/// One bridge swap: the inbound transfer on the source chain and the
/// outbound transfer it produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapRecord {
    pub inbound_tx_id: String,
    pub inbound_chain: ChainId,
    pub inbound_asset: AssetId,
    pub inbound_amt: Amount,
    pub inbound_ts: Timestamp,
    pub outbound_tx_id: String,
    pub outbound_chain: ChainId,
    pub outbound_asset: AssetId,
    pub outbound_amt: Amount,
    pub outbound_ts: Timestamp,
    pub bridge: BridgeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inbound_from: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outbound_to: Option<String>,
    /// Columns this crate does not interpret, kept for round trips.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, String>,
}

impl SwapRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.outbound_ts < self.inbound_ts {
            return Err(format!(
                "outbound_ts {} precedes inbound_ts {}",
                self.outbound_ts, self.inbound_ts
            ));
        }
        if self.inbound_amt == Amount::ZERO || self.outbound_amt == Amount::ZERO {
            return Err("swap amounts must be positive".into());
        }
        Ok(())
    }

    pub fn delay(&self) -> u64 {
        self.outbound_ts - self.inbound_ts
    }

    pub fn inbound_lane(&self) -> Lane {
        Lane {
            chain: self.inbound_chain.clone(),
            asset: self.inbound_asset.clone(),
        }
    }

    pub fn outbound_lane(&self) -> Lane {
        Lane {
            chain: self.outbound_chain.clone(),
            asset: self.outbound_asset.clone(),
        }
    }

    /// Tier sampling key, e.g. `BTC/BTC->ETH/ETH`.
    pub fn pair(&self) -> String {
        format!("{}->{}", self.inbound_lane(), self.outbound_lane())
    }

    pub fn link(&self) -> CrossChainLink {
        CrossChainLink {
            src: TransferKey::new(self.inbound_chain.as_str(), self.inbound_tx_id.as_str()),
            dst: TransferKey::new(self.outbound_chain.as_str(), self.outbound_tx_id.as_str()),
            bridge: self.bridge.clone(),
        }
    }
}

/// A ground-truth link with the fee and delay that produced it. Ingested
/// records carry no fee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthLink {
    pub link: CrossChainLink,
    pub fee: Option<f64>,
    pub delay: u64,
}

/// A planted fan-out: one root funding `leaves` destination transfers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SybilScenario {
    pub id: String,
    pub root: String,
    pub depth: u32,
    pub leaves: Vec<TransferKey>,
    pub sources: Vec<TransferKey>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Raw,
    Hf,
    HfMini,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Raw, Tier::Hf, Tier::HfMini];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Raw => "raw",
            Tier::Hf => "hf",
            Tier::HfMini => "hf_mini",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Tier::Raw),
            "hf" => Ok(Tier::Hf),
            "hf_mini" | "hf-mini" | "hfmini" => Ok(Tier::HfMini),
            _ => Err(Error::Config(format!("unknown tier {s:?}"))),
        }
    }
}

/// Tier filter parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TierThresholds {
    /// Minimum inbound amount per source asset for the high-fidelity tier.
    pub min_inbound: BTreeMap<AssetId, Amount>,
    /// Maximum delay in seconds, inclusive.
    pub max_delay: u64,
    /// Records sampled per pair for the mini tier.
    pub per_pair: usize,
    pub seed: u64,
}

impl Default for TierThresholds {
    /// LTC and DOGE minimums are round numbers near the dollar value of the
    /// BTC and ETH ones.
    fn default() -> Self {
        let min_inbound = [("BTC", "0.09"), ("ETH", "1.9"), ("LTC", "75"), ("DOGE", "40000")]
            .into_iter()
            .map(|(a, v)| (AssetId::new(a), v.parse().expect("valid literal")))
            .collect();
        Self {
            min_inbound,
            max_delay: HF_MAX_DELAY,
            per_pair: 100,
            seed: 0,
        }
    }
}

fn keeps_hf(r: &SwapRecord, th: &TierThresholds) -> Result<bool> {
    let min = th
        .min_inbound
        .get(&r.inbound_asset)
        .ok_or_else(|| Error::Config(format!("no tier threshold for asset {}", r.inbound_asset)))?;
    Ok(r.inbound_amt >= *min && r.delay() <= th.max_delay)
}

/// Filters swap records down to `tier`.
///
/// `hf` keeps records whose inbound amount reaches the asset threshold and
/// whose delay is at most `max_delay` seconds. `hf_mini` applies the `hf`
/// filter, then keeps a seeded uniform sample of `per_pair` records from
/// every pair with more than that many, preserving input order.
pub fn apply_tier_filter(records: &[SwapRecord], tier: Tier, th: &TierThresholds) -> Result<Vec<SwapRecord>> {
    if tier == Tier::Raw {
        return Ok(records.to_vec());
    }
    let mut hf = Vec::new();
    for r in records {
        if keeps_hf(r, th)? {
            hf.push(r.clone());
        }
    }
    if tier == Tier::Hf {
        return Ok(hf);
    }
    let mut by_pair: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in hf.iter().enumerate() {
        by_pair.entry(r.pair()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(th.seed);
    let mut keep = vec![false; hf.len()];
    for idx in by_pair.values() {
        if idx.len() <= th.per_pair {
            idx.iter().for_each(|&i| keep[i] = true);
        } else {
            for j in index::sample(&mut rng, idx.len(), th.per_pair) {
                keep[idx[j]] = true;
            }
        }
    }
    Ok(hf.into_iter().zip(keep).filter(|(_, k)| *k).map(|(r, _)| r).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic { seed: u64 },
    External { path: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub tier: Tier,
    /// Number of swap records in the tier's `swaps.tsv`.
    pub record_count: usize,
    pub pairs: Vec<String>,
    pub provenance: Provenance,
}

impl DatasetManifest {
    pub fn new(tier: Tier, records: &[SwapRecord], provenance: Provenance) -> Self {
        let pairs: BTreeSet<String> = records.iter().map(SwapRecord::pair).collect();
        Self {
            format: FORMAT.into(),
            tier,
            record_count: records.len(),
            pairs: pairs.into_iter().collect(),
            provenance,
        }
    }
}

/// Root manifest: the raw-tier manifest plus what is needed to rebuild the
/// store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootManifest {
    #[serde(flatten)]
    pub tier: DatasetManifest,
    pub registry: Registry,
    pub transfer_count: usize,
    pub price_files: Vec<String>,
    pub tiers: Vec<Tier>,
}

/// An issue skipped in lenient mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub file: String,
    pub line: usize,
    pub message: String,
}

/// A loaded dataset directory.
#[derive(Debug)]
pub struct Dataset {
    pub manifest: RootManifest,
    pub store: TransferStore,
    pub oracle: PriceOracle,
    pub swaps: Vec<SwapRecord>,
    pub links: Vec<TruthLink>,
    pub sybils: Vec<SybilScenario>,
    pub issues: Vec<Issue>,
}

fn io_ctx(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_ctx(path, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_ctx(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io_ctx(path, e))
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

fn with_file<T>(file: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{file}: {message}"),
        },
        other => other,
    })
}

fn price_file_name(base: &AssetId, quote: &AssetId) -> String {
    format!("prices/{base}-{quote}.tsv")
}

pub fn tier_dir(root: &Path, tier: Tier) -> PathBuf {
    root.join("tiers").join(tier.as_str())
}

/// Writes one tier's swap records and manifest under `tiers/<tier>/`.
pub fn write_tier(root: &Path, tier: Tier, records: &[SwapRecord], provenance: Provenance) -> Result<()> {
    let dir = tier_dir(root, tier);
    write(&dir.join("swaps.tsv"), &text::write_swaps(records))?;
    write(&dir.join("manifest.json"), &json(&DatasetManifest::new(tier, records, provenance)))
}

/// Reads one tier, checking the manifest against the records.
pub fn read_tier(root: &Path, tier: Tier, mode: LoadMode) -> Result<(DatasetManifest, Vec<SwapRecord>)> {
    let dir = tier_dir(root, tier);
    let manifest: DatasetManifest = serde_json::from_str(&read(&dir.join("manifest.json"))?)?;
    let records = load_swap_file(&dir.join("swaps.tsv"), mode)?.records;
    if mode == LoadMode::Strict && manifest.record_count != records.len() {
        return Err(Error::Inconsistent(format!(
            "tier {tier}: manifest lists {} records, file has {}",
            manifest.record_count,
            records.len()
        )));
    }
    Ok((manifest, records))
}

impl Dataset {
    /// Writes every file of the dataset, plus `hf` and `hf_mini` tiers when
    /// thresholds are given.
    pub fn write(&self, root: &Path, tiers: Option<&TierThresholds>) -> Result<()> {
        write_parts(
            root,
            &self.store,
            &self.oracle,
            &self.swaps,
            &self.links,
            &self.sybils,
            self.manifest.tier.provenance.clone(),
            tiers,
        )
    }

    pub fn load(root: &Path, mode: LoadMode) -> Result<Self> {
        let manifest: RootManifest = serde_json::from_str(&read(&root.join("manifest.json"))?)?;
        if manifest.tier.format != FORMAT {
            return Err(Error::Config(format!("unsupported dataset format {:?}", manifest.tier.format)));
        }
        let mut issues = Vec::new();

        let mut collected = Vec::new();
        let transfers = with_file(
            "transfers.tsv",
            text::read_transfers(&read(&root.join("transfers.tsv"))?, mode, &mut collected),
        )?;
        issues.extend(collected.drain(..).map(|(line, message)| Issue {
            file: "transfers.tsv".into(),
            line,
            message,
        }));
        let mut b = StoreBuilder::new(manifest.registry.clone());
        for t in transfers {
            b.insert(t)?;
        }
        let store = b.build()?;

        let mut oracle = PriceOracle::new();
        for name in &manifest.price_files {
            oracle.insert(with_file(name, text::read_prices(&read(&root.join(name))?))?)?;
        }

        let swaps = with_file(
            "swaps.tsv",
            text::read_swaps(&read(&root.join("swaps.tsv"))?, mode, &mut collected),
        )?;
        issues.extend(collected.drain(..).map(|(line, message)| Issue {
            file: "swaps.tsv".into(),
            line,
            message,
        }));
        let links = with_file("links.tsv", text::read_links(&read(&root.join("links.tsv"))?))?;
        let sybils: Vec<SybilScenario> = serde_json::from_str(&read(&root.join("sybil.json"))?)?;

        if mode == LoadMode::Strict {
            if manifest.transfer_count != store.len() {
                return Err(Error::Inconsistent(format!(
                    "manifest lists {} transfers, file has {}",
                    manifest.transfer_count,
                    store.len()
                )));
            }
            if manifest.tier.record_count != swaps.len() {
                return Err(Error::Inconsistent(format!(
                    "manifest lists {} swap records, file has {}",
                    manifest.tier.record_count,
                    swaps.len()
                )));
            }
        }
        Ok(Self {
            manifest,
            store,
            oracle,
            swaps,
            links,
            sybils,
            issues,
        })
    }

    pub fn registry(&self) -> &Registry {
        self.store.registry()
    }

    pub fn tier(&self, root: &Path, tier: Tier, mode: LoadMode) -> Result<Vec<SwapRecord>> {
        if tier == Tier::Raw {
            return Ok(self.swaps.clone());
        }
        read_tier(root, tier, mode).map(|(_, r)| r)
    }

    /// Ground-truth links whose destination is `dst`.
    pub fn truth_for(&self, dst: &TransferKey) -> Vec<&TruthLink> {
        self.links.iter().filter(|l| &l.link.dst == dst).collect()
    }
}

/// Writes a dataset directory from its parts.
#[allow(clippy::too_many_arguments)]
pub fn write_parts(
    root: &Path,
    store: &TransferStore,
    oracle: &PriceOracle,
    swaps: &[SwapRecord],
    links: &[TruthLink],
    sybils: &[SybilScenario],
    provenance: Provenance,
    tiers: Option<&TierThresholds>,
) -> Result<()> {
    write(&root.join("transfers.tsv"), &text::write_transfers(store.iter()))?;
    let mut price_files = Vec::new();
    for s in oracle.series() {
        let name = price_file_name(s.base(), s.quote());
        write(&root.join(&name), &text::write_prices(s))?;
        price_files.push(name);
    }
    write(&root.join("swaps.tsv"), &text::write_swaps(swaps))?;
    write(&root.join("links.tsv"), &text::write_links(links))?;
    write(&root.join("sybil.json"), &json(&sybils))?;

    let mut written = Vec::new();
    if let Some(th) = tiers {
        for tier in [Tier::Hf, Tier::HfMini] {
            let records = apply_tier_filter(swaps, tier, th)?;
            write_tier(root, tier, &records, provenance.clone())?;
            written.push(tier);
        }
    }
    let manifest = RootManifest {
        tier: DatasetManifest::new(Tier::Raw, swaps, provenance),
        registry: store.registry().clone(),
        transfer_count: store.len(),
        price_files,
        tiers: written,
    };
    write(&root.join("manifest.json"), &json(&manifest))
}

/// Swap records from one file with the transfers and links they imply.
#[derive(Debug, Clone)]
pub struct SwapLoad {
    pub records: Vec<SwapRecord>,
    pub transfers: Vec<Transfer>,
    pub links: Vec<TruthLink>,
    pub issues: Vec<(usize, String)>,
}

/// Loads a swap-record file and derives two transfers and one link per
/// record.
pub fn load_swap_file(path: &Path, mode: LoadMode) -> Result<SwapLoad> {
    let mut issues = Vec::new();
    let records = text::read_swaps(&read(path)?, mode, &mut issues)?;
    let (transfers, links) = swaps_to_transfers(&records, &BTreeMap::new())?;
    Ok(SwapLoad {
        records,
        transfers,
        links,
        issues,
    })
}

/// Address that receives inbound swaps and pays outbound ones.
pub fn vault_address(bridge: &BridgeId, chain: &ChainId) -> String {
    format!("{bridge}-vault-{chain}")
}

/// Derives the inbound and outbound transfer of every record. Block order
/// is a pseudo height equal to the timestamp, with intra-block indexes
/// assigned per chain in timestamp order.
pub fn swaps_to_transfers(
    records: &[SwapRecord],
    models: &BTreeMap<ChainId, ChainModel>,
) -> Result<(Vec<Transfer>, Vec<TruthLink>)> {
    let registry = text::registry_for_swaps(records, models)?;
    let mut transfers = Vec::with_capacity(records.len() * 2);
    let mut links = Vec::with_capacity(records.len());
    let mut seen: BTreeSet<TransferKey> = BTreeSet::new();
    for r in records {
        let vault_in = vault_address(&r.bridge, &r.inbound_chain);
        let vault_out = vault_address(&r.bridge, &r.outbound_chain);
        let from = r.inbound_from.clone().unwrap_or_else(|| "unknown".into());
        let to = r.outbound_to.clone().unwrap_or_else(|| "unknown".into());
        let inbound = derived_transfer(
            &registry,
            &r.inbound_tx_id,
            &r.inbound_chain,
            &r.inbound_asset,
            r.inbound_ts,
            r.inbound_amt,
            from,
            vault_in,
        )?;
        let outbound = derived_transfer(
            &registry,
            &r.outbound_tx_id,
            &r.outbound_chain,
            &r.outbound_asset,
            r.outbound_ts,
            r.outbound_amt,
            vault_out,
            to,
        )?;
        for t in [inbound, outbound] {
            if seen.insert(t.key()) {
                transfers.push(t);
            } else {
                return Err(Error::InvalidTransfer {
                    key: t.key(),
                    reason: "transaction appears in more than one swap record".into(),
                });
            }
        }
        links.push(TruthLink {
            link: r.link(),
            fee: None,
            delay: r.delay(),
        });
    }
    transfers.sort_by(|a, b| (a.ts, &a.chain, &a.tx_id).cmp(&(b.ts, &b.chain, &b.tx_id)));
    let mut next: HashMap<(ChainId, u64), u32> = HashMap::new();
    for t in &mut transfers {
        let slot = next.entry((t.chain.clone(), t.ts)).or_insert(0);
        t.ord = ChainOrd::new(t.ts, *slot);
        *slot += 1;
    }
    Ok((transfers, links))
}

#[allow(clippy::too_many_arguments)]
fn derived_transfer(
    registry: &Registry,
    tx_id: &str,
    chain: &ChainId,
    asset: &AssetId,
    ts: Timestamp,
    amt: Amount,
    from: String,
    to: String,
) -> Result<Transfer> {
    let outputs = match registry.model(chain)? {
        ChainModel::Utxo => vec![TxOut {
            address: to.clone(),
            amount: amt,
        }],
        ChainModel::Account => Vec::new(),
    };
    Ok(Transfer {
        tx_id: tx_id.to_owned(),
        chain: chain.clone(),
        ts,
        asset: asset.clone(),
        amt,
        spenders: BTreeSet::from([from]),
        recipients: BTreeSet::from([to]),
        ord: ChainOrd::default(),
        inputs: Vec::new(),
        outputs,
    })
}

/// Builds a dataset directory from an external swap-record file, with
/// optional price series files copied in.
pub fn ingest(
    swaps_path: &Path,
    price_paths: &[PathBuf],
    models: &BTreeMap<ChainId, ChainModel>,
    mode: LoadMode,
    out: &Path,
    tiers: Option<&TierThresholds>,
) -> Result<Dataset> {
    let mut issues = Vec::new();
    let records = with_file("swaps", text::read_swaps(&read(swaps_path)?, mode, &mut issues))?;
    let (transfers, links) = swaps_to_transfers(&records, models)?;
    let mut b = StoreBuilder::new(text::registry_for_swaps(&records, models)?);
    for t in transfers {
        b.insert(t)?;
    }
    let store = b.build()?;
    let mut oracle = PriceOracle::new();
    for p in price_paths {
        oracle.insert(text::read_prices(&read(p)?)?)?;
    }
    let provenance = Provenance::External {
        path: swaps_path.display().to_string(),
    };
    write_parts(out, &store, &oracle, &records, &links, &[], provenance, tiers)?;
    let mut ds = Dataset::load(out, LoadMode::Strict)?;
    ds.issues = issues
        .into_iter()
        .map(|(line, message)| Issue {
            file: swaps_path.display().to_string(),
            line,
            message,
        })
        .collect();
    Ok(ds)
}
