//! Historical exchange rates with step-function semantics.
//!
//! A series for `(base, quote)` stores how many units of `base` one unit of
//! `quote` is worth. The rate at time `t` is the latest sample at or before
//! `t`; the last sample holds indefinitely.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{AssetId, Timestamp};

/// Default half-width of the point-in-time window used by forward validation.
pub const DEFAULT_TIGHT_HALF_WINDOW: u64 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceSample {
    pub ts: Timestamp,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceRange {
    pub p_min: f64,
    pub p_max: f64,
    pub lo: Timestamp,
    pub hi: Timestamp,
}

/// Interval of admissible source-side amounts, in base units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ValueInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Sparse table over sample rates answering range min/max in O(1).
#[derive(Debug, Clone)]
struct Extrema {
    min: Vec<Vec<f64>>,
    max: Vec<Vec<f64>>,
}

impl Extrema {
    fn new(values: &[f64]) -> Self {
        let mut min = vec![values.to_vec()];
        let mut max = vec![values.to_vec()];
        let mut width = 1;
        while width * 2 <= values.len() {
            let (pmin, pmax) = (min.last().unwrap(), max.last().unwrap());
            let n = values.len() - width * 2 + 1;
            let lmin = (0..n).map(|i| pmin[i].min(pmin[i + width])).collect();
            let lmax = (0..n).map(|i| pmax[i].max(pmax[i + width])).collect();
            min.push(lmin);
            max.push(lmax);
            width *= 2;
        }
        Self { min, max }
    }

    /// Min and max over `values[a..=b]`.
    fn query(&self, a: usize, b: usize) -> (f64, f64) {
        let len = b - a + 1;
        let level = (usize::BITS - 1 - len.leading_zeros()) as usize;
        let far = b + 1 - (1 << level);
        (
            self.min[level][a].min(self.min[level][far]),
            self.max[level][a].max(self.max[level][far]),
        )
    }
}

#[derive(Debug, Clone)]
pub struct PriceSeries {
    base: AssetId,
    quote: AssetId,
    samples: Vec<PriceSample>,
    extrema: Extrema,
}

impl PriceSeries {
    /// Validates that timestamps strictly increase and rates are positive.
    pub fn new(base: AssetId, quote: AssetId, samples: Vec<PriceSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config(format!("price series {base}/{quote} is empty")));
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.rate.is_finite() && s.rate > 0.0) {
                return Err(Error::Config(format!(
                    "price series {base}/{quote}: non-positive rate {} at ts {}",
                    s.rate, s.ts
                )));
            }
            if i > 0 && samples[i - 1].ts >= s.ts {
                return Err(Error::Config(format!(
                    "price series {base}/{quote}: timestamps not strictly increasing at ts {}",
                    s.ts
                )));
            }
        }
        let rates: Vec<f64> = samples.iter().map(|s| s.rate).collect();
        Ok(Self {
            base,
            quote,
            extrema: Extrema::new(&rates),
            samples,
        })
    }

    pub fn base(&self) -> &AssetId {
        &self.base
    }

    pub fn quote(&self) -> &AssetId {
        &self.quote
    }

    pub fn samples(&self) -> &[PriceSample] {
        &self.samples
    }

    pub fn first_ts(&self) -> Timestamp {
        self.samples[0].ts
    }

    /// Index of the latest sample with `ts <= t`.
    fn step_index(&self, t: Timestamp) -> Option<usize> {
        self.samples.partition_point(|s| s.ts <= t).checked_sub(1)
    }

    pub fn rate_at(&self, t: Timestamp) -> Result<f64> {
        self.step_index(t)
            .map(|i| self.samples[i].rate)
            .ok_or_else(|| self.out_of_range(t, t))
    }

    /// Extremes over `[lo, hi]`, including the rate already in effect at `lo`.
    pub fn range_over(&self, lo: Timestamp, hi: Timestamp) -> Result<PriceRange> {
        if lo > hi {
            return Err(Error::Range(format!("price window [{lo}, {hi}] is inverted")));
        }
        let last = self.step_index(hi).ok_or_else(|| self.out_of_range(lo, hi))?;
        let first = self.step_index(lo).unwrap_or(0);
        let (p_min, p_max) = self.extrema.query(first, last);
        Ok(PriceRange { p_min, p_max, lo, hi })
    }

    /// Maximum rate over `[ts - half_window, ts + half_window]`.
    pub fn tight_max_around(&self, ts: Timestamp, half_window: u64) -> Result<f64> {
        self.range_over(ts.saturating_sub(half_window), ts.saturating_add(half_window))
            .map(|r| r.p_max)
    }

    fn out_of_range(&self, lo: Timestamp, hi: Timestamp) -> Error {
        Error::OutOfRange(format!(
            "{}/{} has no sample at or before [{lo}, {hi}] (first sample at {})",
            self.base,
            self.quote,
            self.first_ts()
        ))
    }
}

#[derive(Debug, Clone, Copy)]
enum Source<'a> {
    Identity,
    Direct(&'a PriceSeries),
    Inverted(&'a PriceSeries),
}

/// A directed view onto a pair: either a stored series, the reciprocal of
/// the stored reverse series, or the identity for same-asset pairs.
#[derive(Debug, Clone, Copy)]
pub struct PairView<'a> {
    source: Source<'a>,
}

impl PairView<'_> {
    /// True when served by inverting the reverse-pair series.
    pub fn is_inverted(&self) -> bool {
        matches!(self.source, Source::Inverted(_))
    }

    pub fn rate_at(&self, t: Timestamp) -> Result<f64> {
        match self.source {
            Source::Identity => Ok(1.0),
            Source::Direct(s) => s.rate_at(t),
            Source::Inverted(s) => s.rate_at(t).map(|r| 1.0 / r),
        }
    }

    pub fn range_over(&self, lo: Timestamp, hi: Timestamp) -> Result<PriceRange> {
        match self.source {
            Source::Identity => {
                if lo > hi {
                    return Err(Error::Range(format!("price window [{lo}, {hi}] is inverted")));
                }
                Ok(PriceRange {
                    p_min: 1.0,
                    p_max: 1.0,
                    lo,
                    hi,
                })
            }
            Source::Direct(s) => s.range_over(lo, hi),
            Source::Inverted(s) => s.range_over(lo, hi).map(|r| PriceRange {
                p_min: 1.0 / r.p_max,
                p_max: 1.0 / r.p_min,
                ..r
            }),
        }
    }

    /// Extremes over the symmetric window `[ts - half_window, ts + half_window]`.
    pub fn range_around(&self, ts: Timestamp, half_window: u64) -> Result<PriceRange> {
        self.range_over(ts.saturating_sub(half_window), ts.saturating_add(half_window))
    }

    pub fn tight_max_around(&self, ts: Timestamp, half_window: u64) -> Result<f64> {
        self.range_around(ts, half_window).map(|r| r.p_max)
    }
}

/// Collection of pair series keyed by (base, quote).
#[derive(Debug, Clone, Default)]
pub struct PriceOracle {
    series: BTreeMap<(AssetId, AssetId), PriceSeries>,
}

impl PriceOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, series: PriceSeries) -> Result<()> {
        let key = (series.base.clone(), series.quote.clone());
        if self.series.contains_key(&key) {
            return Err(Error::Config(format!("duplicate price series {}/{}", key.0, key.1)));
        }
        self.series.insert(key, series);
        Ok(())
    }

    pub fn series(&self) -> impl Iterator<Item = &PriceSeries> {
        self.series.values()
    }

    /// Rate of `base` units per unit of `quote`.
    pub fn view(&self, base: &AssetId, quote: &AssetId) -> Result<PairView<'_>> {
        if base == quote {
            return Ok(PairView {
                source: Source::Identity,
            });
        }
        if let Some(s) = self.series.get(&(base.clone(), quote.clone())) {
            return Ok(PairView {
                source: Source::Direct(s),
            });
        }
        if let Some(s) = self.series.get(&(quote.clone(), base.clone())) {
            return Ok(PairView {
                source: Source::Inverted(s),
            });
        }
        Err(Error::MissingSeries {
            base: base.to_string(),
            quote: quote.to_string(),
        })
    }
}

/// Source-side amounts compatible with a destination amount `a_dst` under
/// the price range, widened by the volatility buffer `eps_p`.
pub fn source_value_interval(range: &PriceRange, a_dst: f64, eps_p: f64) -> Result<ValueInterval> {
    if !(0.0..1.0).contains(&eps_p) {
        return Err(Error::Config(format!("price buffer {eps_p} must lie in [0, 1)")));
    }
    if a_dst.is_nan() || a_dst < 0.0 {
        return Err(Error::Range(format!("destination amount {a_dst} is negative")));
    }
    Ok(ValueInterval {
        lo: a_dst * range.p_min * (1.0 - eps_p),
        hi: a_dst * range.p_max * (1.0 + eps_p),
    })
}
