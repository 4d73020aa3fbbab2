use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

/// An element `num / p^log_den` of `Q/Z` with `p`-power denominator; the additive
/// character value is `exp(2 pi i * phase)`.
///
/// Canonical: `0 <= num < p^log_den` and `p` does not divide `num` unless the
/// phase is zero (then `log_den = 0`).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Phase {
    p: u64,
    num: u64,
    log_den: u32,
}

impl fmt::Debug for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.log_den == 0 {
            write!(f, "0")
        } else {
            write!(f, "{}/{}^{}", self.num, self.p, self.log_den)
        }
    }
}

impl Phase {
    pub fn zero(p: u64) -> Phase {
        Phase { p, num: 0, log_den: 0 }
    }

    /// `num / p^log_den mod 1`.
    pub fn new(p: u64, num: i128, log_den: u32) -> Phase {
        let den = (p as i128).checked_pow(log_den).expect("phase denominator overflow");
        let mut n = num.rem_euclid(den) as u128;
        let mut m = log_den;
        while m > 0 && n % p as u128 == 0 {
            n /= p as u128;
            m -= 1;
        }
        if n == 0 {
            m = 0;
        }
        Phase { p, num: n as u64, log_den: m }
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn numerator(&self) -> u64 {
        self.num
    }

    pub fn log_denominator(&self) -> u32 {
        self.log_den
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    /// Value in `[0, 1)`.
    pub fn as_f64(&self) -> f64 {
        self.num as f64 / (self.p as f64).powi(self.log_den as i32)
    }

    /// Numerator over the common denominator `p^m` (requires `m >= log_den`).
    pub fn scaled_numerator(&self, m: u32) -> u128 {
        assert!(m >= self.log_den);
        self.num as u128 * (self.p as u128).pow(m - self.log_den)
    }

    pub fn mul_int(&self, c: i128) -> Phase {
        let den = (self.p as i128).pow(self.log_den);
        let n = (self.num as i128 % den) * (c.rem_euclid(den)) % den;
        Phase::new(self.p, n, self.log_den)
    }
}

impl Add for Phase {
    type Output = Phase;
    fn add(self, rhs: Phase) -> Phase {
        assert_eq!(self.p, rhs.p, "phases for different primes");
        let m = self.log_den.max(rhs.log_den);
        let n = self.scaled_numerator(m) + rhs.scaled_numerator(m);
        Phase::new(self.p, n as i128, m)
    }
}

impl Neg for Phase {
    type Output = Phase;
    fn neg(self) -> Phase {
        Phase::new(self.p, -(self.num as i128), self.log_den)
    }
}

impl Sub for Phase {
    type Output = Phase;
    fn sub(self, rhs: Phase) -> Phase {
        self + (-rhs)
    }
}

impl PartialOrd for Phase {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Orders by numeric value in `[0, 1)`.
impl Ord for Phase {
    fn cmp(&self, other: &Self) -> Ordering {
        let m = self.log_den.max(other.log_den);
        self.p
            .cmp(&other.p)
            .then(self.scaled_numerator(m).cmp(&other.scaled_numerator(m)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form() {
        assert_eq!(Phase::new(2, 2, 2), Phase::new(2, 1, 1));
        assert_eq!(Phase::new(3, 9, 2), Phase::zero(3));
        assert_eq!(Phase::new(2, -1, 1), Phase::new(2, 1, 1));
        assert_eq!(Phase::new(5, -1, 1).numerator(), 4);
    }

    #[test]
    fn group_law() {
        let a = Phase::new(3, 1, 2);
        let b = Phase::new(3, 2, 1);
        assert_eq!(a + b, Phase::new(3, 7, 2));
        assert_eq!(a - a, Phase::zero(3));
        assert_eq!(Phase::new(2, 1, 3).mul_int(4), Phase::new(2, 1, 1));
        assert!(Phase::new(3, 1, 1) < Phase::new(3, 4, 2));
    }
}
