//! Seeded synthetic worlds with exact ground truth.
//!
//! A world is a set of chains with one native asset each, minute-resolution
//! USD price walks per asset, bridge swaps between configured pairs,
//! optional planted Sybil fan-outs, optional decoys, and Poisson background
//! traffic. Every swap is built so that
//! `A_d = A_s * rate(t_s) * (1 - fee)` and `t_d = t_s + delay`, where `rate`
//! is the oracle's destination-per-source rate.
//!
//! Planted transfers keep out of each other's `collision_window` x
//! `collision_band` neighbourhood, measured in USD value across all lanes,
//! so a world without decoys or background holds no accidental look-alikes.
//! Background transfers keep the same distance, in native units, from every
//! planted transfer on their own lane.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{self, apply_tier_filter, Provenance, SwapRecord, SybilScenario, Tier, TierThresholds, TruthLink};
use crate::error::{Error, Result};
use crate::ledger::{
    Amount, AssetId, BridgeId, ChainId, ChainModel, ChainOrd, CrossChainLink, Lane, OutPoint, Registry,
    StoreBuilder, Timestamp, Transfer, TransferKey, TransferStore, TxOut,
};
use crate::price::{PriceOracle, PriceSample, PriceSeries};

/// Price history starts this long before the world so that backward windows
/// of early targets stay covered.
const PRICE_LEAD: u64 = 6 * 3600;
const MAX_REDRAWS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub id: ChainId,
    pub model: ChainModel,
    /// Native asset; defaults to the chain id.
    #[serde(default)]
    pub asset: Option<AssetId>,
    /// Starting USD price of the native asset.
    pub usd_price: f64,
    /// Seconds per block, used to derive block heights.
    #[serde(default = "default_block_time")]
    pub block_time: u64,
}

fn default_block_time() -> u64 {
    60
}

impl ChainSpec {
    pub fn new(id: &str, model: ChainModel, usd_price: f64, block_time: u64) -> Self {
        Self {
            id: id.into(),
            model,
            asset: None,
            usd_price,
            block_time,
        }
    }

    pub fn asset(&self) -> AssetId {
        self.asset.clone().unwrap_or_else(|| AssetId::new(self.id.as_str()))
    }

    pub fn lane(&self) -> Lane {
        Lane {
            chain: self.id.clone(),
            asset: self.asset(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub src: Lane,
    pub dst: Lane,
}

impl PairSpec {
    pub fn new(src: &ChainSpec, dst: &ChainSpec) -> Self {
        Self {
            src: src.lane(),
            dst: dst.lane(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SybilSpec {
    pub leaf_count: usize,
    /// Funding hops between the root and each leaf source transfer.
    pub depth: u32,
    /// Pair the leaves swap through; defaults to the world's first pair.
    pub pair: Option<PairSpec>,
    /// USD value per leaf; empty draws them like ordinary swaps.
    pub amounts_usd: Vec<f64>,
}

impl Default for SybilSpec {
    fn default() -> Self {
        Self {
            leaf_count: 5,
            depth: 3,
            pair: None,
            amounts_usd: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub seed: u64,
    pub start: Timestamp,
    pub duration: u64,
    pub chains: Vec<ChainSpec>,
    pub pairs: Vec<PairSpec>,
    /// Swaps planted per pair.
    pub swap_count: usize,
    /// Mean background transfers per minute per chain.
    pub background_rate: f64,
    pub fee_range: [f64; 2],
    pub delay_range: [u64; 2],
    /// Standard deviation of the log USD price per price step.
    pub price_volatility: f64,
    pub price_step: u64,
    pub swap_usd: [f64; 2],
    pub background_usd: [f64; 2],
    /// Fraction of background transfers worth at most `dust_usd`.
    pub dust_rate: f64,
    pub dust_usd: f64,
    pub allow_decoys: bool,
    pub decoys_per_swap: usize,
    /// Decoys sit this many seconds, at most, before their swap's source.
    pub decoy_max_lead: u64,
    pub collision_window: u64,
    pub collision_band: f64,
    pub bridge: BridgeId,
    pub sybils: Vec<SybilSpec>,
    /// Deepest Sybil funding tree the world may contain.
    pub max_depth: u32,
    /// Background addresses per chain.
    pub address_pool: usize,
}

impl Default for WorldSpec {
    fn default() -> Self {
        let chains = default_chains();
        let pairs = all_pairs(&chains);
        Self {
            seed: 0,
            start: 1_735_689_600,
            duration: 30 * 86_400,
            chains,
            pairs,
            swap_count: 100,
            background_rate: 0.0,
            fee_range: [0.002, 0.03],
            delay_range: [60, 1800],
            price_volatility: 0.0005,
            price_step: 60,
            swap_usd: [10_000.0, 150_000.0],
            background_usd: [20.0, 50_000.0],
            dust_rate: 0.05,
            dust_usd: 1.0,
            allow_decoys: false,
            decoys_per_swap: 3,
            decoy_max_lead: 900,
            collision_window: 7200,
            collision_band: 0.10,
            bridge: BridgeId::new("thorchain"),
            sybils: Vec::new(),
            max_depth: 3,
            address_pool: 200,
        }
    }
}

/// BTC, ETH, LTC and DOGE with round starting prices.
pub fn default_chains() -> Vec<ChainSpec> {
    vec![
        ChainSpec::new("BTC", ChainModel::Utxo, 60_000.0, 600),
        ChainSpec::new("ETH", ChainModel::Account, 3_000.0, 12),
        ChainSpec::new("LTC", ChainModel::Utxo, 80.0, 150),
        ChainSpec::new("DOGE", ChainModel::Utxo, 0.15, 60),
    ]
}

/// Every ordered pair of distinct chains.
pub fn all_pairs(chains: &[ChainSpec]) -> Vec<PairSpec> {
    let mut out = Vec::new();
    for a in chains {
        for b in chains {
            if a.id != b.id {
                out.push(PairSpec::new(a, b));
            }
        }
    }
    out
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        let [f_lo, f_hi] = self.fee_range;
        if !(0.0 <= f_lo && f_lo <= f_hi && f_hi < 1.0) {
            return cfg(format!("fee range {:?} must satisfy 0 <= lo <= hi < 1", self.fee_range));
        }
        let [d_lo, d_hi] = self.delay_range;
        if d_lo > d_hi {
            return cfg(format!("delay range {:?} is inverted", self.delay_range));
        }
        if self.duration <= d_hi {
            return cfg("duration must exceed the maximum delay".into());
        }
        if self.price_step == 0 {
            return cfg("price_step must be positive".into());
        }
        if !(self.price_volatility.is_finite() && self.price_volatility >= 0.0) {
            return cfg("price_volatility must be finite and non-negative".into());
        }
        if !(self.background_rate.is_finite() && self.background_rate >= 0.0) {
            return cfg("background_rate must be finite and non-negative".into());
        }
        for (name, [lo, hi]) in [("swap_usd", self.swap_usd), ("background_usd", self.background_usd)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return cfg(format!("{name} must be a positive range"));
            }
        }
        if !(0.0..=1.0).contains(&self.dust_rate) || !(self.dust_usd > 0.0) {
            return cfg("dust_rate must lie in [0, 1] and dust_usd be positive".into());
        }
        if !(self.collision_band >= 0.0 && self.collision_band < 1.0) {
            return cfg("collision_band must lie in [0, 1)".into());
        }
        if self.allow_decoys && self.decoy_max_lead < 60 {
            return cfg("decoy_max_lead must be at least 60 s".into());
        }
        if self.address_pool < 2 {
            return cfg("address_pool must hold at least two addresses".into());
        }
        let mut ids = BTreeSet::new();
        let mut lanes = BTreeSet::new();
        for c in &self.chains {
            if !ids.insert(&c.id) {
                return cfg(format!("chain {} listed twice", c.id));
            }
            if !(c.usd_price > 0.0 && c.usd_price.is_finite()) || c.block_time == 0 {
                return cfg(format!("chain {} needs a positive price and block time", c.id));
            }
            lanes.insert(c.lane());
        }
        let mut seen = BTreeSet::new();
        for p in &self.pairs {
            if !lanes.contains(&p.src) || !lanes.contains(&p.dst) {
                return cfg(format!("pair {} -> {} uses an unknown chain or asset", p.src, p.dst));
            }
            if p.src.chain == p.dst.chain {
                return cfg(format!("pair {} -> {} stays on one chain", p.src, p.dst));
            }
            if !seen.insert(p) {
                return cfg(format!("pair {} -> {} listed twice", p.src, p.dst));
            }
        }
        for s in &self.sybils {
            self.check_sybil(s)?;
        }
        Ok(())
    }

    fn check_sybil(&self, s: &SybilSpec) -> Result<()> {
        if s.leaf_count == 0 {
            return Err(Error::Config("a Sybil scenario needs at least one leaf".into()));
        }
        if s.depth == 0 || s.depth > self.max_depth {
            return Err(Error::Config(format!(
                "Sybil depth {} outside supported range 1..={}",
                s.depth, self.max_depth
            )));
        }
        if !s.amounts_usd.is_empty() && s.amounts_usd.len() != s.leaf_count {
            return Err(Error::Config("amounts_usd must list one value per leaf".into()));
        }
        if s.amounts_usd.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("Sybil leaf amounts must be positive".into()));
        }
        match &s.pair {
            Some(p) if !self.pairs.contains(p) => Err(Error::Config(format!(
                "Sybil pair {} -> {} is not part of the world",
                p.src, p.dst
            ))),
            None if self.pairs.is_empty() => Err(Error::Config("Sybil scenario needs a world pair".into())),
            _ => Ok(()),
        }
    }

    fn chain(&self, id: &ChainId) -> &ChainSpec {
        self.chains.iter().find(|c| &c.id == id).expect("validated chain")
    }

    fn end(&self) -> Timestamp {
        self.start + self.duration
    }

    pub fn registry(&self) -> Result<Registry> {
        let mut reg = Registry::new();
        for c in &self.chains {
            reg.add_chain(c.id.clone(), c.model)?;
            reg.add_asset(c.asset(), [c.id.clone()])?;
        }
        Ok(reg)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub links: Vec<TruthLink>,
    pub sybils: Vec<SybilScenario>,
}

impl GroundTruth {
    pub fn digest(&self) -> String {
        crate::digest_hex(&serde_json::to_vec(self).expect("truth serializes"))
    }
}

/// A generated world; immutable once built.
#[derive(Debug)]
pub struct World {
    pub spec: WorldSpec,
    pub store: TransferStore,
    pub oracle: PriceOracle,
    pub truth: GroundTruth,
}

impl World {
    /// One swap record per ground-truth link.
    pub fn swap_records(&self) -> Result<Vec<SwapRecord>> {
        self.truth
            .links
            .iter()
            .map(|l| {
                let src = self.store.get(&l.link.src)?;
                let dst = self.store.get(&l.link.dst)?;
                Ok(SwapRecord {
                    inbound_tx_id: src.tx_id.clone(),
                    inbound_chain: src.chain.clone(),
                    inbound_asset: src.asset.clone(),
                    inbound_amt: src.amt,
                    inbound_ts: src.ts,
                    outbound_tx_id: dst.tx_id.clone(),
                    outbound_chain: dst.chain.clone(),
                    outbound_asset: dst.asset.clone(),
                    outbound_amt: dst.amt,
                    outbound_ts: dst.ts,
                    bridge: l.link.bridge.clone(),
                    inbound_from: src.spenders.first().cloned(),
                    outbound_to: dst.recipients.first().cloned(),
                    extras: BTreeMap::new(),
                })
            })
            .collect()
    }

    /// Thresholds with the mini-tier sample seeded from the world.
    pub fn thresholds(&self, base: &TierThresholds) -> TierThresholds {
        TierThresholds {
            seed: self.spec.seed,
            ..base.clone()
        }
    }

    /// Swap records of one benchmark tier.
    pub fn emit_tier(&self, tier: Tier, th: &TierThresholds) -> Result<Vec<SwapRecord>> {
        apply_tier_filter(&self.swap_records()?, tier, &self.thresholds(th))
    }

    /// Writes the world as a dataset directory with all tiers.
    pub fn write(&self, dir: &Path, th: &TierThresholds) -> Result<()> {
        dataset::write_parts(
            dir,
            &self.store,
            &self.oracle,
            &self.swap_records()?,
            &self.truth.links,
            &self.truth.sybils,
            Provenance::Synthetic { seed: self.spec.seed },
            Some(&self.thresholds(th)),
        )
    }

    /// Destination transfers of every ground-truth link.
    pub fn targets(&self) -> Vec<TransferKey> {
        self.truth.links.iter().map(|l| l.link.dst.clone()).collect()
    }
}

pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    let mut draft = WorldDraft::new(spec.clone())?;
    for s in &spec.sybils {
        draft.plant_sybil(s)?;
    }
    draft.finish()
}

struct Draft {
    t: Transfer,
    seq: u64,
}

struct Mark {
    lane: Lane,
    ts: Timestamp,
    units: u64,
    usd: f64,
}

/// A world under construction. Swaps are planted on creation; Sybil
/// scenarios may be added before [`WorldDraft::finish`] generates the
/// background traffic and freezes the world.
pub struct WorldDraft {
    spec: WorldSpec,
    rng: ChaCha8Rng,
    usd: BTreeMap<AssetId, Vec<f64>>,
    oracle: PriceOracle,
    transfers: Vec<Draft>,
    /// Planted transfers, for collision checks.
    planted: Vec<Mark>,
    truth: GroundTruth,
    seq: u64,
    users: u64,
}

impl WorldDraft {
    pub fn new(spec: WorldSpec) -> Result<Self> {
        spec.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut d = Self {
            spec,
            rng,
            usd: BTreeMap::new(),
            oracle: PriceOracle::new(),
            transfers: Vec::new(),
            planted: Vec::new(),
            truth: GroundTruth::default(),
            seq: 0,
            users: 0,
        };
        d.walk_prices()?;
        let pairs = d.spec.pairs.clone();
        for pair in &pairs {
            for _ in 0..d.spec.swap_count {
                d.plant_free_swap(pair)?;
            }
        }
        Ok(d)
    }

    fn price_origin(&self) -> Timestamp {
        self.spec.start.saturating_sub(PRICE_LEAD)
    }

    fn walk_prices(&mut self) -> Result<()> {
        let step = self.spec.price_step;
        let steps = ((self.spec.end() + PRICE_LEAD - self.price_origin()) / step + 1) as usize;
        let sigma = self.spec.price_volatility;
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        for c in &self.spec.chains {
            let mut walk = Vec::with_capacity(steps);
            let mut p = c.usd_price;
            for _ in 0..steps {
                walk.push(p);
                p *= (sigma * normal.sample(&mut self.rng) - 0.5 * sigma * sigma).exp();
            }
            self.usd.insert(c.asset(), walk);
        }
        let mut done = BTreeSet::new();
        for pair in &self.spec.pairs {
            let (base, quote) = (&pair.src.asset, &pair.dst.asset);
            if base == quote || done.contains(&(quote.clone(), base.clone())) || !done.insert((base.clone(), quote.clone())) {
                continue;
            }
            let origin = self.price_origin();
            let samples = self.usd[base]
                .iter()
                .zip(&self.usd[quote])
                .enumerate()
                .map(|(i, (b, q))| PriceSample {
                    ts: origin + i as u64 * step,
                    rate: q / b,
                })
                .collect();
            self.oracle.insert(PriceSeries::new(base.clone(), quote.clone(), samples)?)?;
        }
        Ok(())
    }

    fn usd_at(&self, asset: &AssetId, ts: Timestamp) -> f64 {
        let walk = &self.usd[asset];
        let i = ((ts.saturating_sub(self.price_origin())) / self.spec.price_step) as usize;
        walk[i.min(walk.len() - 1)]
    }

    fn units_for_usd(&self, asset: &AssetId, ts: Timestamp, usd: f64) -> u64 {
        (usd / self.usd_at(asset, ts) * Amount::SCALE as f64).floor().max(1.0) as u64
    }

    fn log_uniform(&mut self, [lo, hi]: [f64; 2]) -> f64 {
        if lo == hi {
            lo
        } else {
            self.rng.random_range(lo.ln()..hi.ln()).exp()
        }
    }

    fn next_tx_id(&mut self) -> (String, u64) {
        let seq = self.seq;
        self.seq += 1;
        let mut bytes = self.spec.seed.to_le_bytes().to_vec();
        bytes.extend(seq.to_le_bytes());
        (crate::digest_hex(&bytes)[..40].to_owned(), seq)
    }

    fn fresh_user(&mut self, chain: &ChainId) -> String {
        self.users += 1;
        format!("{}-u{:06}", chain.as_str().to_lowercase(), self.users)
    }

    fn vault(&self, chain: &ChainId) -> String {
        dataset::vault_address(&self.spec.bridge, chain)
    }

    fn near(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.spec.collision_band * a.max(b)
    }

    /// Whether a transfer of `units` on `lane` would sit next to a planted
    /// transfer on the same lane.
    fn collides_on_lane(&self, lane: &Lane, ts: Timestamp, units: u64) -> bool {
        let w = self.spec.collision_window;
        self.planted
            .iter()
            .any(|m| &m.lane == lane && m.ts.abs_diff(ts) <= w && self.near(m.units as f64, units as f64))
    }

    /// Whether a transfer worth `usd` would sit next to any planted
    /// transfer, whatever its lane.
    fn collides_in_value(&self, ts: Timestamp, usd: f64) -> bool {
        let w = self.spec.collision_window;
        self.planted.iter().any(|m| m.ts.abs_diff(ts) <= w && self.near(m.usd, usd))
    }

    fn usd_value(&self, asset: &AssetId, ts: Timestamp, units: u64) -> f64 {
        units as f64 / Amount::SCALE as f64 * self.usd_at(asset, ts)
    }

    fn mark(&mut self, lane: &Lane, ts: Timestamp, units: u64) {
        let usd = self.usd_value(&lane.asset, ts, units);
        self.planted.push(Mark {
            lane: lane.clone(),
            ts,
            units,
            usd,
        });
    }

    /// Appends a transfer and returns its key.
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        lane: &Lane,
        ts: Timestamp,
        units: u64,
        spender: String,
        recipients: Vec<(String, u64)>,
        inputs: Vec<OutPoint>,
    ) -> TransferKey {
        let (tx_id, seq) = self.next_tx_id();
        let model = self.spec.chain(&lane.chain).model;
        let outputs = match model {
            ChainModel::Utxo => recipients
                .iter()
                .map(|(a, u)| TxOut {
                    address: a.clone(),
                    amount: Amount::from_units(*u),
                })
                .collect(),
            ChainModel::Account => Vec::new(),
        };
        let t = Transfer {
            tx_id,
            chain: lane.chain.clone(),
            ts,
            asset: lane.asset.clone(),
            amt: Amount::from_units(units),
            spenders: BTreeSet::from([spender]),
            recipients: recipients.into_iter().map(|(a, _)| a).collect(),
            ord: ChainOrd::default(),
            inputs,
            outputs,
        };
        let key = t.key();
        self.transfers.push(Draft { t, seq });
        key
    }

    /// Plants a swap at a slot where neither leg collides with anything
    /// planted so far, redrawing the slot when the destination cannot be
    /// placed.
    fn plant_free_swap(&mut self, pair: &PairSpec) -> Result<()> {
        let [_, d_hi] = self.spec.delay_range;
        let latest = self.spec.end() - d_hi;
        for _ in 0..MAX_REDRAWS {
            let t_s = self.rng.random_range(self.spec.start..=latest);
            let usd = self.log_uniform(self.spec.swap_usd);
            let units = self.units_for_usd(&pair.src.asset, t_s, usd);
            if self.collides_in_value(t_s, self.usd_value(&pair.src.asset, t_s, units)) {
                continue;
            }
            if let Some(leg) = self.draw_destination(pair, t_s, units, 16)? {
                let from = self.fresh_user(&pair.src.chain);
                self.commit_swap(pair, t_s, units, leg, from, Vec::new());
                return Ok(());
            }
        }
        Err(Error::Config(format!(
            "world too crowded to place a swap on {} -> {}; lengthen duration or widen swap_usd",
            pair.src, pair.dst
        )))
    }

    /// Fee, delay and destination amount for a source of `a_s` units at
    /// `t_s`, or `None` when every attempt collides.
    fn draw_destination(&mut self, pair: &PairSpec, t_s: Timestamp, a_s: u64, attempts: usize) -> Result<Option<(f64, u64, u64)>> {
        let [f_lo, f_hi] = self.spec.fee_range;
        let [d_lo, d_hi] = self.spec.delay_range;
        let rate = self.oracle.view(&pair.dst.asset, &pair.src.asset)?.rate_at(t_s)?;
        for _ in 0..attempts {
            let fee = if f_lo == f_hi { f_lo } else { self.rng.random_range(f_lo..=f_hi) };
            let delay = self.rng.random_range(d_lo..=d_hi);
            let a_d = (a_s as f64 * rate * (1.0 - fee)).floor() as u64;
            let usd_d = self.usd_value(&pair.dst.asset, t_s + delay, a_d);
            if a_d > 0 && !self.collides_in_value(t_s + delay, usd_d) {
                return Ok(Some((fee, delay, a_d)));
            }
        }
        Ok(None)
    }

    /// Plants one swap whose source transfer is paid by `from` at `t_s`.
    fn plant_swap(
        &mut self,
        pair: &PairSpec,
        t_s: Timestamp,
        usd: f64,
        from: String,
        inputs: Vec<OutPoint>,
    ) -> Result<(TransferKey, TransferKey)> {
        let a_s = self.units_for_usd(&pair.src.asset, t_s, usd);
        let leg = self.draw_destination(pair, t_s, a_s, MAX_REDRAWS)?.ok_or_else(|| {
            Error::Config(format!(
                "cannot place destination of a {} -> {} swap without collisions",
                pair.src, pair.dst
            ))
        })?;
        Ok(self.commit_swap(pair, t_s, a_s, leg, from, inputs))
    }

    fn commit_swap(
        &mut self,
        pair: &PairSpec,
        t_s: Timestamp,
        a_s: u64,
        (fee, delay, a_d): (f64, u64, u64),
        from: String,
        inputs: Vec<OutPoint>,
    ) -> (TransferKey, TransferKey) {
        let t_d = t_s + delay;
        let vault_in = self.vault(&pair.src.chain);
        let vault_out = self.vault(&pair.dst.chain);
        let user = self.fresh_user(&pair.dst.chain);

        let src = self.push(&pair.src, t_s, a_s, from, vec![(vault_in, a_s)], inputs);
        let dst = self.push(&pair.dst, t_d, a_d, vault_out, vec![(user, a_d)], Vec::new());
        self.mark(&pair.src, t_s, a_s);
        self.mark(&pair.dst, t_d, a_d);
        self.truth.links.push(TruthLink {
            link: CrossChainLink {
                src: src.clone(),
                dst: dst.clone(),
                bridge: self.spec.bridge.clone(),
            },
            fee: Some(fee),
            delay,
        });
        if self.spec.allow_decoys {
            self.plant_decoys(pair, t_s, a_s, t_d);
        }
        (src, dst)
    }

    /// Decoys: same lane, amount up to 1% above the true source, placed
    /// earlier than the true source but inside the target's window.
    fn plant_decoys(&mut self, pair: &PairSpec, t_s: Timestamp, a_s: u64, t_d: Timestamp) {
        let earliest = t_d.saturating_sub(3600).max(self.price_origin() + 3600);
        for _ in 0..self.spec.decoys_per_swap {
            let lead = self.rng.random_range(60..=self.spec.decoy_max_lead);
            let ts = t_s.saturating_sub(lead);
            if ts < earliest {
                continue;
            }
            let units = a_s + (a_s as f64 * self.rng.random_range(0.0..0.01)) as u64;
            let from = self.fresh_user(&pair.src.chain);
            let to = self.fresh_user(&pair.src.chain);
            self.push(&pair.src, ts, units, from, vec![(to, units)], Vec::new());
        }
    }

    /// Hop times, USD value and units of one leaf source starting at `t0`.
    fn draw_leaf(&mut self, s: &SybilSpec, i: usize, lane: &Lane, t0: Timestamp, depth: u64) -> Option<(Vec<Timestamp>, f64, u64)> {
        for _ in 0..32 {
            let mut times = vec![t0];
            for _ in 0..depth {
                let prev = *times.last().expect("non-empty");
                times.push(prev + self.rng.random_range(60..=600));
            }
            let usd = match s.amounts_usd.get(i) {
                Some(v) => *v * (1.0 + self.rng.random_range(0.0..1e-3)),
                None => self.log_uniform(self.spec.swap_usd),
            };
            let t_s = *times.last().expect("non-empty");
            let units = self.units_for_usd(&lane.asset, t_s, usd);
            if !self.collides_in_value(t_s, self.usd_value(&lane.asset, t_s, units)) {
                return Some((times, usd, units));
            }
        }
        None
    }

    /// Plants a fan-out: a root funds `leaf_count` leaf addresses through
    /// `depth` hops; every leaf then swaps through the scenario's pair.
    pub fn plant_sybil(&mut self, s: &SybilSpec) -> Result<SybilScenario> {
        self.spec.check_sybil(s)?;
        let pair = s.pair.clone().unwrap_or_else(|| self.spec.pairs[0].clone());
        let lane = pair.src.clone();
        let model = self.spec.chain(&lane.chain).model;
        let id = format!("sybil-{}", self.truth.sybils.len());
        let root = format!("{id}-root");
        let depth = s.depth as u64;
        let [_, d_hi] = self.spec.delay_range;
        let span = (depth + 1) * 600;
        let latest = self.spec.end() - d_hi - span;
        if latest <= self.spec.start {
            return Err(Error::Config("world too short for the Sybil funding tree".into()));
        }

        // Leaf schedules and amounts, redrawn until no leaf collides. When a
        // leaf cannot be placed the whole tree moves to a new start time.
        let mut leaves = Vec::with_capacity(s.leaf_count);
        for _ in 0..MAX_REDRAWS / 8 {
            let t0 = self.rng.random_range(self.spec.start..=latest);
            for i in 0..s.leaf_count {
                match self.draw_leaf(s, i, &lane, t0, depth) {
                    Some(leaf) => {
                        // Reserve the slot so later leaves keep their distance.
                        self.mark(&lane, leaf.0[depth as usize], leaf.2);
                        leaves.push(leaf);
                    }
                    None => break,
                }
            }
            if leaves.len() == s.leaf_count {
                break;
            }
            self.planted.truncate(self.planted.len() - leaves.len());
            leaves.clear();
        }
        if leaves.len() < s.leaf_count {
            return Err(Error::Config("cannot place the Sybil leaves without collisions".into()));
        }
        let t0 = leaves[0].0[0];

        // Funding amounts grow by a quarter per hop towards the root, which
        // keeps them outside every leaf's value band.
        let hop_amount = |units: u64, level: u64| -> u64 {
            let mut a = units as f64;
            for _ in level..=depth {
                a *= 1.25;
            }
            a as u64
        };
        let addr = |level: u64, i: usize| -> String {
            if level == depth {
                format!("{id}-leaf{i}")
            } else {
                format!("{id}-hop{level}-{i}")
            }
        };

        // Level-1 recipients are paid by the root. On UTXO chains a single
        // root transaction fans out; on account chains each path gets its
        // own payment.
        let mut heads: Vec<Option<OutPoint>> = vec![None; s.leaf_count];
        match model {
            ChainModel::Utxo => {
                let outs: Vec<(String, u64)> = leaves
                    .iter()
                    .enumerate()
                    .map(|(i, (_, _, units))| (addr(1, i), hop_amount(*units, 1)))
                    .collect();
                let total = outs.iter().map(|(_, u)| *u).sum();
                let key = self.push(&lane, t0, total, root.clone(), outs, Vec::new());
                for (i, h) in heads.iter_mut().enumerate() {
                    *h = Some(OutPoint {
                        tx_id: key.tx_id.clone(),
                        vout: i as u32,
                    });
                }
            }
            ChainModel::Account => {
                for (i, (_, _, units)) in leaves.iter().enumerate() {
                    let a = hop_amount(*units, 1);
                    self.push(&lane, t0, a, root.clone(), vec![(addr(1, i), a)], Vec::new());
                }
            }
        }
        for level in 2..=depth {
            for (i, (times, _, units)) in leaves.iter().enumerate() {
                let a = hop_amount(*units, level);
                let inputs = heads[i].take().into_iter().collect();
                let key = self.push(&lane, times[level as usize - 1], a, addr(level - 1, i), vec![(addr(level, i), a)], inputs);
                if model == ChainModel::Utxo {
                    heads[i] = Some(OutPoint { tx_id: key.tx_id, vout: 0 });
                }
            }
        }

        // Un-reserve the leaf slots, then plant the swaps themselves.
        self.planted.truncate(self.planted.len() - s.leaf_count);
        let mut scenario = SybilScenario {
            id: id.clone(),
            root,
            depth: s.depth,
            leaves: Vec::new(),
            sources: Vec::new(),
        };
        for (i, (times, usd, _)) in leaves.into_iter().enumerate() {
            let inputs = heads[i].take().into_iter().collect();
            let (src, dst) = self.plant_swap(&pair, times[depth as usize], usd, addr(depth, i), inputs)?;
            scenario.sources.push(src);
            scenario.leaves.push(dst);
        }
        self.truth.sybils.push(scenario.clone());
        Ok(scenario)
    }

    fn background(&mut self) {
        if self.spec.background_rate == 0.0 {
            return;
        }
        let exp = Exp::new(self.spec.background_rate / 60.0).expect("positive rate");
        let chains = self.spec.chains.clone();
        for c in &chains {
            let lane = c.lane();
            let pool: Vec<String> = (0..self.spec.address_pool)
                .map(|i| format!("{}-b{i:04}", c.id.as_str().to_lowercase()))
                .collect();
            let mut unspent: Vec<(OutPoint, String)> = Vec::new();
            let mut t = self.spec.start as f64;
            loop {
                t += exp.sample(&mut self.rng);
                if t >= self.spec.end() as f64 {
                    break;
                }
                let ts = t as Timestamp;
                let usd = if self.rng.random_bool(self.spec.dust_rate) {
                    self.spec.dust_usd * self.rng.random_range(0.05..=1.0)
                } else {
                    self.log_uniform(self.spec.background_usd)
                };
                let mut units = self.units_for_usd(&lane.asset, ts, usd);
                let mut tries = 0;
                while self.collides_on_lane(&lane, ts, units) {
                    tries += 1;
                    units = if tries < 16 {
                        let usd = self.log_uniform(self.spec.background_usd);
                        self.units_for_usd(&lane.asset, ts, usd)
                    } else {
                        units.saturating_mul(3)
                    };
                }
                let to = pool[self.rng.random_range(0..pool.len())].clone();
                match c.model {
                    ChainModel::Utxo => {
                        let (inputs, from) = if !unspent.is_empty() && self.rng.random_bool(0.8) {
                            let i = self.rng.random_range(0..unspent.len());
                            let (op, owner) = unspent.swap_remove(i);
                            (vec![op], owner)
                        } else {
                            (Vec::new(), pool[self.rng.random_range(0..pool.len())].clone())
                        };
                        let change = self.rng.random_range(0..=units);
                        let mut outs = vec![(to.clone(), units)];
                        if change > 0 && from != to {
                            outs.push((from.clone(), change));
                        }
                        let owners: Vec<String> = outs.iter().map(|(a, _)| a.clone()).collect();
                        let key = self.push(&lane, ts, units, from, outs, inputs);
                        for (vout, owner) in owners.into_iter().enumerate() {
                            unspent.push((
                                OutPoint {
                                    tx_id: key.tx_id.clone(),
                                    vout: vout as u32,
                                },
                                owner,
                            ));
                        }
                    }
                    ChainModel::Account => {
                        let mut from = pool[self.rng.random_range(0..pool.len())].clone();
                        while from == to {
                            from = pool[self.rng.random_range(0..pool.len())].clone();
                        }
                        self.push(&lane, ts, units, from, vec![(to, units)], Vec::new());
                    }
                }
            }
        }
    }

    /// Adds background traffic, assigns block order and builds the store.
    pub fn finish(mut self) -> Result<World> {
        self.background();
        let mut drafts = std::mem::take(&mut self.transfers);
        drafts.sort_by(|a, b| (&a.t.chain, a.t.ts, a.seq).cmp(&(&b.t.chain, b.t.ts, b.seq)));
        let mut last: Option<(ChainId, u64, u32)> = None;
        for d in &mut drafts {
            let c = self.spec.chain(&d.t.chain);
            let height = (d.t.ts - self.price_origin()) / c.block_time;
            let index = match &last {
                Some((chain, h, i)) if *chain == d.t.chain && *h == height => i + 1,
                _ => 0,
            };
            d.t.ord = ChainOrd::new(height, index);
            last = Some((d.t.chain.clone(), height, index));
        }
        drafts.sort_by(|a, b| (a.t.ts, &a.t.chain, a.t.ord).cmp(&(b.t.ts, &b.t.chain, b.t.ord)));
        let mut b = StoreBuilder::new(self.spec.registry()?);
        for d in drafts {
            b.insert(d.t)?;
        }
        Ok(World {
            store: b.build()?,
            oracle: self.oracle,
            truth: self.truth,
            spec: self.spec,
        })
    }
}
