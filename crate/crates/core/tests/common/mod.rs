//! Brute-force reference implementations used as test oracles. They scan
//! raw samples and the full transfer list instead of going through the
//! indexes and sparse tables.

#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use cctrace::ledger::{AssetId, ChainModel, Timestamp, Transfer, TransferKey, TransferStore};
use cctrace::price::PriceOracle;
use cctrace::simgen::{default_chains, PairSpec, WorldSpec};
use cctrace::trace::{RejectReason, TraceConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// (min, max) of `base`-per-`quote` rates in effect anywhere in `[lo, hi]`.
pub fn bf_range(oracle: &PriceOracle, base: &AssetId, quote: &AssetId, lo: Timestamp, hi: Timestamp) -> Option<(f64, f64)> {
    if base == quote {
        return Some((1.0, 1.0));
    }
    for s in oracle.series() {
        let inverted = if s.base() == base && s.quote() == quote {
            false
        } else if s.base() == quote && s.quote() == base {
            true
        } else {
            continue;
        };
        let samples = s.samples();
        let in_effect = samples.iter().rposition(|p| p.ts <= lo);
        let rates: Vec<f64> = samples
            .iter()
            .enumerate()
            .filter(|(i, p)| p.ts <= hi && (p.ts > lo || Some(*i) == in_effect))
            .map(|(_, p)| p.rate)
            .collect();
        if rates.is_empty() {
            return None;
        }
        let min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        return Some(if inverted { (1.0 / max, 1.0 / min) } else { (min, max) });
    }
    None
}

/// Candidates passing the time window and value interval, by full scan.
pub fn bf_candidates<'s>(store: &'s TransferStore, oracle: &PriceOracle, target: &Transfer, cfg: &TraceConfig) -> Vec<&'s Transfer> {
    let lo = target.ts.saturating_sub(cfg.delta_t + cfg.delta + cfg.skew);
    let hi = target.ts.saturating_sub(cfg.delta) + cfg.skew;
    let a_d = target.amt.units() as f64;
    store
        .iter()
        .filter(|c| c.key() != target.key())
        .filter(|c| {
            if cfg.sources.is_empty() {
                c.chain != target.chain
            } else {
                cfg.sources.contains(&c.lane())
            }
        })
        .filter(|c| lo <= c.ts && c.ts <= hi)
        .filter(|c| {
            let Some((p_min, p_max)) = bf_range(oracle, &c.asset, &target.asset, lo, hi) else {
                return false;
            };
            let v = c.amt.units() as f64;
            a_d * p_min * (1.0 - cfg.eps_p) <= v && v <= a_d * p_max * (1.0 + cfg.eps_p)
        })
        .collect()
}

/// Forward validation by scan.
pub fn bf_verdict(oracle: &PriceOracle, c: &Transfer, target: &Transfer, cfg: &TraceConfig) -> Result<f64, RejectReason> {
    if c.ts > target.ts {
        return Err(RejectReason::Causality);
    }
    let (_, p_max) = bf_range(oracle, &target.asset, &c.asset, c.ts.saturating_sub(cfg.w_p), c.ts + cfg.w_p)
        .ok_or(RejectReason::PriceCoverage)?;
    let implied = c.amt.units() as f64 * p_max;
    let a_d = target.amt.units() as f64;
    if implied < a_d {
        return Err(RejectReason::NegativeFee);
    }
    let fee = if implied > 0.0 { (implied - a_d) / implied } else { 0.0 };
    if fee > cfg.f_max {
        return Err(RejectReason::ExcessiveFee);
    }
    Ok(fee)
}

pub fn bf_accepted(store: &TransferStore, oracle: &PriceOracle, target: &Transfer, cfg: &TraceConfig) -> BTreeSet<TransferKey> {
    bf_candidates(store, oracle, target, cfg)
        .into_iter()
        .filter(|c| bf_verdict(oracle, c, target, cfg).is_ok())
        .map(|c| c.key())
        .collect()
}

/// Direct predecessors by scan, without any fan-in limit.
pub fn bf_predecessors<'s>(store: &'s TransferStore, t: &Transfer) -> Vec<&'s Transfer> {
    let model = store.registry().model(&t.chain).unwrap();
    store
        .iter()
        .filter(|p| p.chain == t.chain && p.ord < t.ord)
        .filter(|p| match model {
            ChainModel::Utxo => t.inputs.iter().any(|i| i.tx_id == p.tx_id),
            ChainModel::Account => p.recipients.iter().any(|r| t.spenders.contains(r)),
        })
        .collect()
}

/// Spenders of every transfer within `depth` hops upstream, by BFS over
/// [`bf_predecessors`].
pub fn bf_ancestor_spenders(store: &TransferStore, t: &Transfer, depth: u32) -> BTreeSet<String> {
    let mut seen: BTreeSet<TransferKey> = BTreeSet::from([t.key()]);
    let mut queue = VecDeque::from([(t, 0u32)]);
    let mut out = BTreeSet::new();
    while let Some((x, d)) = queue.pop_front() {
        if d == depth {
            continue;
        }
        for p in bf_predecessors(store, x) {
            if seen.insert(p.key()) {
                out.extend(p.spenders.iter().cloned());
                queue.push_back((p, d + 1));
            }
        }
    }
    out
}

/// A small randomized world: a random subset of pairs, background traffic,
/// and sometimes decoys or fee ranges beyond the default maximum.
pub fn random_spec(seed: u64) -> WorldSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let chains = default_chains();
    let mut pairs = Vec::new();
    for a in &chains {
        for b in &chains {
            if a.id != b.id && rng.random_bool(0.4) {
                pairs.push(PairSpec::new(a, b));
            }
        }
    }
    if pairs.is_empty() {
        pairs.push(PairSpec::new(&chains[0], &chains[1]));
    }
    let per_pair_cap = (60 / pairs.len()).max(3);
    let fee_hi = if rng.random_bool(0.3) { 0.2 } else { 0.03 };
    WorldSpec {
        seed,
        duration: rng.random_range(86_400..=129_600),
        chains,
        pairs,
        swap_count: rng.random_range(3..=per_pair_cap.min(25)),
        background_rate: rng.random_range(0.2..0.8),
        background_usd: [5_000.0, 200_000.0],
        fee_range: [0.0, fee_hi],
        delay_range: [30, rng.random_range(600..=3600)],
        price_volatility: rng.random_range(0.0..0.004),
        allow_decoys: rng.random_bool(0.3),
        ..WorldSpec::default()
    }
}

/// Trace configurations exercised against random worlds.
pub fn random_config(rng: &mut ChaCha8Rng) -> TraceConfig {
    TraceConfig {
        delta_t: rng.random_range(600..=7200),
        delta: rng.random_range(0..=120),
        skew: rng.random_range(0..=180),
        eps_p: rng.random_range(0.0..0.1),
        f_max: rng.random_range(0.02..0.2),
        w_p: rng.random_range(0..=900),
        ..TraceConfig::default()
    }
}
