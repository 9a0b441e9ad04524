//! Integer-nanosecond simulation time.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// A point in simulated time, or a span, in whole nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ns(pub u64);

impl Ns {
    pub const ZERO: Ns = Ns(0);

    pub const fn from_us(us: u64) -> Ns {
        Ns(us * 1_000)
    }

    pub const fn from_ms(ms: u64) -> Ns {
        Ns(ms * 1_000_000)
    }

    /// Rounds to the nearest nanosecond.
    pub fn from_secs_f64(s: f64) -> Ns {
        assert!(s >= 0.0 && s.is_finite(), "negative or non-finite duration {s}");
        Ns((s * 1e9).round() as u64)
    }

    pub fn from_ms_f64(ms: f64) -> Ns {
        Ns::from_secs_f64(ms * 1e-3)
    }

    pub fn from_us_f64(us: f64) -> Ns {
        Ns::from_secs_f64(us * 1e-6)
    }

    /// Time needed to execute `cycles` at `hz`, rounded up.
    pub fn for_cycles(cycles: u64, hz: u64) -> Ns {
        let num = cycles as u128 * 1_000_000_000u128;
        Ns(num.div_ceil(hz as u128) as u64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    pub fn as_ms_f64(self) -> f64 {
        self.0 as f64 * 1e-6
    }

    pub fn saturating_sub(self, rhs: Ns) -> Ns {
        Ns(self.0.saturating_sub(rhs.0))
    }

    /// Exact decimal seconds, e.g. `1.000500000`.
    pub fn to_decimal_secs(self) -> String {
        format!("{}.{:09}", self.0 / 1_000_000_000, self.0 % 1_000_000_000)
    }

    /// Inverse of [`Ns::to_decimal_secs`]; accepts up to nine fractional digits.
    pub fn parse_decimal_secs(s: &str) -> Option<Ns> {
        let (int, frac) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if frac.len() > 9 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let whole: u64 = int.parse().ok()?;
        let mut frac_ns: u64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
        for _ in frac.len()..9 {
            frac_ns *= 10;
        }
        whole.checked_mul(1_000_000_000)?.checked_add(frac_ns).map(Ns)
    }
}

impl Add for Ns {
    type Output = Ns;
    fn add(self, rhs: Ns) -> Ns {
        Ns(self.0 + rhs.0)
    }
}

impl AddAssign for Ns {
    fn add_assign(&mut self, rhs: Ns) {
        self.0 += rhs.0;
    }
}

impl Sub for Ns {
    type Output = Ns;
    fn sub(self, rhs: Ns) -> Ns {
        Ns(self.0 - rhs.0)
    }
}

impl fmt::Display for Ns {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.to_decimal_secs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_roundtrip() {
        for v in [0u64, 1, 999_999_999, 1_000_000_000, 15_728_640_000, u32::MAX as u64 * 7] {
            let s = Ns(v).to_decimal_secs();
            assert_eq!(Ns::parse_decimal_secs(&s), Some(Ns(v)));
        }
        assert_eq!(Ns::parse_decimal_secs("1.5"), Some(Ns(1_500_000_000)));
        assert_eq!(Ns::parse_decimal_secs("x"), None);
    }

    #[test]
    fn cycles_round_up() {
        assert_eq!(Ns::for_cycles(1_000_000, 80_000_000), Ns::from_us(12_500));
        assert_eq!(Ns::for_cycles(1, 3_000_000_000), Ns(1));
        assert_eq!(Ns::for_cycles(0, 8_000_000), Ns::ZERO);
    }
}
