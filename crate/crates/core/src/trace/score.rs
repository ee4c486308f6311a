//! Confidence scoring for candidates that survived filtration.

use crate::error::{Error, Result};
use crate::price::PriceRange;

/// Exponential decay in the source-to-destination latency.
pub fn score_time(gap: u64, lambda: f64) -> f64 {
    (-(gap as f64) / lambda).exp()
}

/// Normalized width of the feasible fee-rate range, clamped to `[0, 1]`.
pub fn score_amount(r_min: f64, r_max: f64, r_norm: f64) -> Result<f64> {
    if r_min > r_max {
        return Err(Error::Inconsistent(format!(
            "empty feasible fee-rate range [{r_min}, {r_max}]"
        )));
    }
    Ok(((r_max - r_min) / r_norm).clamp(0.0, 1.0))
}

/// Weighted mean of the two sub-scores.
pub fn final_score(s_time: f64, s_amt: f64, w_t: f64, w_a: f64) -> f64 {
    (w_t * s_time + w_a * s_amt) / (w_t + w_a)
}

/// Fee rates `r` for which `a_dst = a_src * rate * (1 - r)` holds for some
/// forward rate in the buffered tight range, intersected with `[0, f_max]`.
///
/// `tight` holds destination units per source unit. The implied rate grows
/// with the exchange rate, so the lower bound uses the buffered minimum and
/// the upper bound the buffered maximum.
pub fn fee_rate_range(a_src: f64, a_dst: f64, tight: &PriceRange, eps_p: f64, f_max: f64) -> (f64, f64) {
    if a_src <= 0.0 {
        return (0.0, f_max);
    }
    let ratio = a_dst / a_src;
    let r_min = (1.0 - ratio / (tight.p_min * (1.0 - eps_p))).max(0.0);
    let r_max = (1.0 - ratio / (tight.p_max * (1.0 + eps_p))).min(f_max);
    // Accepted candidates always have a non-empty range; absorb rounding at
    // the boundary where both clamps meet.
    if r_min > r_max && r_min - r_max <= 1e-12 {
        (r_max, r_max)
    } else {
        (r_min, r_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_examples() {
        assert_eq!(score_time(0, 300.0), 1.0);
        assert!((score_time(300, 300.0) - (-1.0f64).exp()).abs() < 1e-9);
        assert!((score_time(300, 300.0) - 0.367879).abs() < 1e-6);
        assert!((score_time(900, 300.0) - 0.049787).abs() < 1e-6);
    }

    #[test]
    fn amount_examples() {
        assert_eq!(score_amount(0.03, 0.03, 0.05).unwrap(), 0.0);
        assert_eq!(score_amount(0.0, 0.05, 0.05).unwrap(), 1.0);
        assert!((score_amount(0.01, 0.02, 0.05).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(score_amount(0.0, 0.5, 0.05).unwrap(), 1.0);
        assert!(matches!(score_amount(0.02, 0.01, 0.05), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn fee_range_contains_implied_rate() {
        let tight = PriceRange {
            p_min: 14.0,
            p_max: 15.0,
            lo: 0,
            hi: 0,
        };
        let (lo, hi) = fee_rate_range(1.0, 14.0, &tight, 0.05, 0.10);
        let implied = (15.0 - 14.0) / 15.0;
        assert!(lo <= implied && implied <= hi, "{lo} {implied} {hi}");
        assert_eq!(lo, 0.0);
        assert_eq!(hi, 0.10);
    }
}
