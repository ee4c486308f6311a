use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{BridgeId, Lane};

/// Parameters of backward single-transfer tracing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    /// Backward search window, seconds.
    pub delta_t: u64,
    /// Settlement delay subtracted from the destination timestamp, seconds.
    pub delta: u64,
    /// Symmetric widening of the window for timestamp imprecision, seconds.
    pub skew: u64,
    /// Relative price buffer.
    pub eps_p: f64,
    /// Time-decay constant of the timing score, seconds.
    pub lambda: f64,
    pub w_t: f64,
    pub w_a: f64,
    /// Normalizer of the feasible fee-rate width.
    pub r_norm: f64,
    /// Largest plausible implied fee rate.
    pub f_max: f64,
    /// Half-width of the point-in-time price window, seconds.
    pub w_p: u64,
    /// Source lanes to search. Empty means every registered lane on a chain
    /// other than the target's.
    pub sources: Vec<Lane>,
    /// Bridge attributed to emitted links; `unknown` when unset.
    pub bridge: Option<BridgeId>,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            delta_t: 3600,
            delta: 0,
            skew: 90,
            eps_p: 0.05,
            lambda: 300.0,
            w_t: 0.7,
            w_a: 0.3,
            r_norm: 0.05,
            f_max: 0.10,
            w_p: 300,
            sources: Vec::new(),
            bridge: None,
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.w_a.is_finite() && self.w_t.is_finite() && self.w_a >= 0.0 && self.w_t > self.w_a) {
            return fail(format!("weights must satisfy w_t > w_a >= 0 (got {}, {})", self.w_t, self.w_a));
        }
        if !(0.0..1.0).contains(&self.eps_p) {
            return fail(format!("eps_p {} must lie in [0, 1)", self.eps_p));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return fail(format!("lambda {} must be positive", self.lambda));
        }
        if !(self.r_norm.is_finite() && self.r_norm > 0.0) {
            return fail(format!("r_norm {} must be positive", self.r_norm));
        }
        if !(0.0..1.0).contains(&self.f_max) {
            return fail(format!("f_max {} must lie in [0, 1)", self.f_max));
        }
        Ok(())
    }

    pub fn bridge_id(&self) -> BridgeId {
        self.bridge.clone().unwrap_or_else(BridgeId::unknown)
    }

    /// Hex digest of the canonical JSON form.
    pub fn digest(&self) -> String {
        crate::digest_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TraceConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            TraceConfig { w_t: 0.3, w_a: 0.7, ..Default::default() },
            TraceConfig { w_t: 0.5, w_a: 0.5, ..Default::default() },
            TraceConfig { eps_p: 1.0, ..Default::default() },
            TraceConfig { r_norm: 0.0, ..Default::default() },
            TraceConfig { lambda: 0.0, ..Default::default() },
            TraceConfig { f_max: 1.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn partial_override_from_json() {
        let cfg: TraceConfig = serde_json::from_str(r#"{"delta_t": 7200, "bridge": "thorchain"}"#).unwrap();
        assert_eq!(cfg.delta_t, 7200);
        assert_eq!(cfg.w_p, 300);
        assert_eq!(cfg.bridge_id().as_str(), "thorchain");
        assert!(serde_json::from_str::<TraceConfig>(r#"{"nope": 1}"#).is_err());
    }
}
