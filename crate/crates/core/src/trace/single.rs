use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::score::{fee_rate_range, final_score, score_amount, score_time};
use super::TraceConfig;
use crate::error::Result;
use crate::ledger::{Amount, AssetId, CrossChainLink, Lane, TimeWindow, Timestamp, Transfer, TransferKey, TransferStore};
use crate::price::{source_value_interval, PriceOracle, PriceRange, ValueInterval};

/// Admissible source timestamps for `target`, clamped at zero.
pub fn temporal_window(target: &Transfer, cfg: &TraceConfig) -> TimeWindow {
    let lo = target
        .ts
        .saturating_sub(cfg.delta_t)
        .saturating_sub(cfg.delta)
        .saturating_sub(cfg.skew);
    let hi = target.ts.saturating_sub(cfg.delta).saturating_add(cfg.skew);
    TimeWindow { lo, hi }
}

/// Lanes searched for `target` under `cfg`.
pub fn source_lanes(store: &TransferStore, target: &Transfer, cfg: &TraceConfig) -> Vec<Lane> {
    if cfg.sources.is_empty() {
        store
            .registry()
            .lanes()
            .into_iter()
            .filter(|l| l.chain != target.chain)
            .collect()
    } else {
        cfg.sources.clone()
    }
}

/// Price range over the window and the derived source-value interval for
/// one source lane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanePrices {
    pub lane: Lane,
    pub range: PriceRange,
    pub interval: ValueInterval,
    pub inverted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceContext {
    pub window: TimeWindow,
    pub lanes: Vec<LanePrices>,
    /// Lanes skipped for lack of price data.
    pub warnings: Vec<String>,
}

/// Resolves the price range of every source lane over `window`. Lanes
/// without coverage are skipped and reported as warnings.
pub fn lane_prices(oracle: &PriceOracle, target: &Transfer, lanes: &[Lane], window: TimeWindow, cfg: &TraceConfig) -> Result<PriceContext> {
    let mut out = Vec::with_capacity(lanes.len());
    let mut warnings = Vec::new();
    for lane in lanes {
        let resolved = oracle
            .view(&lane.asset, &target.asset)
            .and_then(|view| Ok((view.range_over(window.lo, window.hi)?, view.is_inverted())));
        match resolved {
            Ok((range, inverted)) => {
                let interval = source_value_interval(&range, target.amt.units_f64(), cfg.eps_p)?;
                out.push(LanePrices {
                    lane: lane.clone(),
                    range,
                    interval,
                    inverted,
                });
            }
            Err(e) => warnings.push(format!("skipped lane {lane}: {e}")),
        }
    }
    Ok(PriceContext {
        window,
        lanes: out,
        warnings,
    })
}

/// Indexed search of every priced lane; the target itself is never a
/// candidate. Results are deduplicated and ordered by (ts, chain, tx_id).
pub fn search_candidates<'s>(store: &'s TransferStore, target: &Transfer, ctx: &PriceContext) -> Result<Vec<&'s Transfer>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for lp in &ctx.lanes {
        let lo = Amount::ceil_units(lp.interval.lo);
        let hi = Amount::floor_units(lp.interval.hi);
        if lo > hi {
            continue;
        }
        for t in store.search(&lp.lane, ctx.window, lo, hi)? {
            if !t.is(&target.key()) && seen.insert(t.key()) {
                out.push(t);
            }
        }
    }
    out.sort_by(|a, b| (a.ts, &a.chain, &a.tx_id).cmp(&(b.ts, &b.chain, &b.tx_id)));
    Ok(out)
}

pub struct Candidates<'s> {
    pub transfers: Vec<&'s Transfer>,
    pub context: PriceContext,
}

/// Value-bounded backward search for `target`.
pub fn generate_candidates<'s>(store: &'s TransferStore, oracle: &PriceOracle, target: &Transfer, cfg: &TraceConfig) -> Result<Candidates<'s>> {
    let window = temporal_window(target, cfg);
    let lanes = source_lanes(store, target, cfg);
    let context = lane_prices(oracle, target, &lanes, window, cfg)?;
    let transfers = search_candidates(store, target, &context)?;
    Ok(Candidates { transfers, context })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Source transfer is later than the destination.
    Causality,
    /// Source value at the best nearby rate falls short of the destination.
    NegativeFee,
    /// Implied fee rate exceeds the configured maximum.
    ExcessiveFee,
    /// No price data around the source timestamp.
    PriceCoverage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Accept {
        implied_fee_rate: f64,
        /// Destination units per source unit around the source timestamp.
        tight: PriceRange,
    },
    Reject(RejectReason),
}

/// Forward value-consistency check of `candidate` against `target`.
///
/// The source amount converted at the highest destination-per-source rate
/// within `w_p` seconds of the source timestamp must cover the destination
/// amount, and the implied fee must not exceed `f_max`.
pub fn validate_forward(candidate: &Transfer, target: &Transfer, oracle: &PriceOracle, cfg: &TraceConfig) -> Verdict {
    if candidate.ts > target.ts {
        return Verdict::Reject(RejectReason::Causality);
    }
    let tight = match oracle
        .view(&target.asset, &candidate.asset)
        .and_then(|v| v.range_around(candidate.ts, cfg.w_p))
    {
        Ok(r) => r,
        Err(_) => return Verdict::Reject(RejectReason::PriceCoverage),
    };
    let a_dst = target.amt.units_f64();
    let implied = candidate.amt.units_f64() * tight.p_max;
    if implied < a_dst {
        return Verdict::Reject(RejectReason::NegativeFee);
    }
    let implied_fee_rate = if implied > 0.0 { (implied - a_dst) / implied } else { 0.0 };
    if implied_fee_rate > cfg.f_max {
        return Verdict::Reject(RejectReason::ExcessiveFee);
    }
    Verdict::Accept {
        implied_fee_rate,
        tight,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub link: CrossChainLink,
    pub src_ts: Timestamp,
    pub src_asset: AssetId,
    pub src_amt: Amount,
    pub gap: u64,
    pub s_time: f64,
    pub s_amt: f64,
    pub s_final: f64,
    pub implied_fee_rate: f64,
    pub r_min: f64,
    pub r_max: f64,
}

/// Scores an accepted candidate. `implied_fee_rate` and `tight` come from
/// the accepting [`Verdict`].
pub fn score_candidate(candidate: &Transfer, target: &Transfer, implied_fee_rate: f64, tight: &PriceRange, cfg: &TraceConfig) -> Result<ScoredCandidate> {
    let gap = target.ts - candidate.ts;
    let s_time = score_time(gap, cfg.lambda);
    let (r_min, r_max) = fee_rate_range(
        candidate.amt.units_f64(),
        target.amt.units_f64(),
        tight,
        cfg.eps_p,
        cfg.f_max,
    );
    let s_amt = score_amount(r_min, r_max, cfg.r_norm)?;
    Ok(ScoredCandidate {
        link: CrossChainLink {
            src: candidate.key(),
            dst: target.key(),
            bridge: cfg.bridge_id(),
        },
        src_ts: candidate.ts,
        src_asset: candidate.asset.clone(),
        src_amt: candidate.amt,
        gap,
        s_time,
        s_amt,
        s_final: final_score(s_time, s_amt, cfg.w_t, cfg.w_a),
        implied_fee_rate,
        r_min,
        r_max,
    })
}

fn rank_order(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    b.s_final
        .total_cmp(&a.s_final)
        .then(a.gap.cmp(&b.gap))
        .then_with(|| a.link.src.tx_id.cmp(&b.link.src.tx_id))
        .then_with(|| a.link.src.chain.cmp(&b.link.src.chain))
}

/// Orders by (score desc, gap asc, tx_id asc, chain asc).
pub fn rank(candidates: &mut [ScoredCandidate]) {
    candidates.sort_by(rank_order);
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejections {
    pub causality: usize,
    pub negative_fee: usize,
    pub excessive_fee: usize,
    pub price_coverage: usize,
}

impl Rejections {
    pub fn record(&mut self, reason: RejectReason) {
        match reason {
            RejectReason::Causality => self.causality += 1,
            RejectReason::NegativeFee => self.negative_fee += 1,
            RejectReason::ExcessiveFee => self.excessive_fee += 1,
            RejectReason::PriceCoverage => self.price_coverage += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.causality + self.negative_fee + self.excessive_fee + self.price_coverage
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceResult {
    pub target: TransferKey,
    pub target_ts: Timestamp,
    pub target_asset: AssetId,
    pub target_amt: Amount,
    pub window: TimeWindow,
    pub config: TraceConfig,
    pub searched: usize,
    pub rejected: Rejections,
    pub warnings: Vec<String>,
    pub candidates: Vec<ScoredCandidate>,
}

impl TraceResult {
    /// 1-based rank of the candidate with source `src`.
    pub fn rank_of(&self, src: &TransferKey) -> Option<usize> {
        self.candidates.iter().position(|c| &c.link.src == src).map(|i| i + 1)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace result serializes")
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "target    {} ts={} amt={} {}", self.target, self.target_ts, self.target_amt, self.target_asset);
        let _ = writeln!(s, "window    [{}, {}]", self.window.lo, self.window.hi);
        let _ = writeln!(s, "config    {}", self.config.digest());
        let _ = writeln!(
            s,
            "searched  {} candidates, rejected {} (causality {}, negative_fee {}, excessive_fee {}, price_coverage {})",
            self.searched,
            self.rejected.total(),
            self.rejected.causality,
            self.rejected.negative_fee,
            self.rejected.excessive_fee,
            self.rejected.price_coverage
        );
        for w in &self.warnings {
            let _ = writeln!(s, "warning   {w}");
        }
        let _ = writeln!(
            s,
            "{:>4}  {:<8} {:<24} {:>7} {:>8} {:>8} {:>8} {:>8}",
            "rank", "chain", "src_tx", "gap", "s_time", "s_amt", "s_final", "fee"
        );
        for (i, c) in self.candidates.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:>4}  {:<8} {:<24} {:>7} {:>8.6} {:>8.6} {:>8.6} {:>8.6}",
                i + 1,
                c.link.src.chain,
                c.link.src.tx_id,
                c.gap,
                c.s_time,
                c.s_amt,
                c.s_final,
                c.implied_fee_rate
            );
        }
        s
    }
}

/// Traces `target` end to end. An empty candidate list is a valid outcome.
pub fn trace_transfer(store: &TransferStore, oracle: &PriceOracle, target: &Transfer, cfg: &TraceConfig) -> Result<TraceResult> {
    cfg.validate()?;
    let Candidates { transfers, context } = generate_candidates(store, oracle, target, cfg)?;
    let mut rejected = Rejections::default();
    let mut candidates = Vec::new();
    for c in &transfers {
        match validate_forward(c, target, oracle, cfg) {
            Verdict::Accept {
                implied_fee_rate,
                tight,
            } => candidates.push(score_candidate(c, target, implied_fee_rate, &tight, cfg)?),
            Verdict::Reject(reason) => rejected.record(reason),
        }
    }
    rank(&mut candidates);
    Ok(TraceResult {
        target: target.key(),
        target_ts: target.ts,
        target_asset: target.asset.clone(),
        target_amt: target.amt,
        window: context.window,
        config: cfg.clone(),
        searched: transfers.len(),
        rejected,
        warnings: context.warnings,
        candidates,
    })
}

pub fn trace_single(store: &TransferStore, oracle: &PriceOracle, target: &TransferKey, cfg: &TraceConfig) -> Result<TraceResult> {
    let t = store.get(target)?;
    trace_transfer(store, oracle, t, cfg)
}
