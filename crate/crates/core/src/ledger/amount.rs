use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Non-negative fixed-point amount with eight decimal places.
///
/// All assets share the 1e-8 base unit, so a price ratio between whole
/// units is also the ratio between base units and value arithmetic can be
/// carried out on [`Amount::units_f64`] directly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Amount(u64);

impl Amount {
    pub const DECIMALS: u32 = 8;
    pub const SCALE: u64 = 100_000_000;
    pub const ZERO: Amount = Amount(0);
    pub const MAX: Amount = Amount(u64::MAX);

    pub const fn from_units(units: u64) -> Self {
        Amount(units)
    }

    pub const fn units(self) -> u64 {
        self.0
    }

    /// Base units as `f64`; exact below 2^53 units (~90M whole units).
    pub fn units_f64(self) -> f64 {
        self.0 as f64
    }

    /// Whole asset units, for display and thresholds.
    pub fn whole(self) -> f64 {
        self.0 as f64 / Self::SCALE as f64
    }

    /// Largest amount whose unit count does not exceed `units`.
    pub fn floor_units(units: f64) -> Self {
        if units.is_nan() || units <= 0.0 {
            Amount(0)
        } else if units >= u64::MAX as f64 {
            Amount::MAX
        } else {
            Amount(units.floor() as u64)
        }
    }

    /// Smallest amount whose unit count is at least `units`.
    pub fn ceil_units(units: f64) -> Self {
        if units.is_nan() || units <= 0.0 {
            Amount(0)
        } else if units >= u64::MAX as f64 {
            Amount::MAX
        } else {
            Amount(units.ceil() as u64)
        }
    }

    pub fn from_whole(whole: f64) -> Self {
        Self::floor_units((whole * Self::SCALE as f64).round())
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:08}", self.0 / Self::SCALE, self.0 % Self::SCALE)
    }
}

impl FromStr for Amount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::Range(format!("invalid amount {s:?}"));
        let (int, frac) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if frac.len() > Self::DECIMALS as usize || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let int: u64 = int.parse().map_err(|_| bad())?;
        let mut frac_units: u64 = 0;
        for (i, b) in frac.bytes().enumerate() {
            frac_units += u64::from(b - b'0') * 10u64.pow(Self::DECIMALS - 1 - i as u32);
        }
        int.checked_mul(Self::SCALE)
            .and_then(|v| v.checked_add(frac_units))
            .map(Amount)
            .ok_or_else(bad)
    }
}

impl Serialize for Amount {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Amount {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
