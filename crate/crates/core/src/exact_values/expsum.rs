use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use super::closed::ClosedValue;
use crate::residue_arith::Phase;

/// A finite exponential sum `scale * sum_phase mult * exp(2 pi i * phase)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpSum {
    p: u64,
    terms: BTreeMap<Phase, i64>,
    scale: BigRational,
}

impl ExpSum {
    pub fn new(p: u64) -> Self {
        ExpSum { p, terms: BTreeMap::new(), scale: BigRational::one() }
    }

    pub fn from_terms(p: u64, terms: impl IntoIterator<Item = (Phase, i64)>) -> Self {
        let mut s = Self::new(p);
        for (ph, m) in terms {
            s.add_term(ph, m);
        }
        s
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn add_term(&mut self, phase: Phase, mult: i64) {
        assert_eq!(phase.p(), self.p);
        if mult == 0 {
            return;
        }
        let e = self.terms.entry(phase).or_insert(0);
        *e += mult;
        if *e == 0 {
            self.terms.remove(&phase);
        }
    }

    /// Merges another multiset with the same scale.
    pub fn merge(&mut self, other: &ExpSum) {
        assert_eq!(self.scale, other.scale, "merging sums with different scales");
        for (&ph, &m) in &other.terms {
            self.add_term(ph, m);
        }
    }

    pub fn with_scale(mut self, scale: BigRational) -> Self {
        self.scale = scale;
        self
    }

    pub fn scale(&self) -> &BigRational {
        &self.scale
    }

    pub fn terms(&self) -> &BTreeMap<Phase, i64> {
        &self.terms
    }

    /// Total multiplicity (the value when every phase vanishes).
    pub fn total_multiplicity(&self) -> i64 {
        self.terms.values().sum()
    }

    pub fn numeric(&self) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (ph, &m) in &self.terms {
            acc += Complex64::from_polar(m as f64, 2.0 * std::f64::consts::PI * ph.as_f64());
        }
        acc * self.scale.to_f64().unwrap_or(f64::NAN)
    }

    /// Exact value when every term folds into a common twist of the closed ring.
    pub fn to_closed(&self) -> Option<ClosedValue> {
        let mut acc = ClosedValue::zero(self.p);
        for (&ph, &m) in &self.terms {
            let term = ClosedValue::root_of_unity(ph).scale(&BigRational::from_integer(BigInt::from(m)));
            acc = acc.try_add(&term)?;
        }
        Some(acc.scale(&self.scale))
    }

    /// Canonical multiset for comparing sums taken at different levels:
    /// multiplicities divided by their gcd, with the scale adjusted.
    pub fn canonical(&self) -> (BTreeMap<Phase, i64>, BigRational) {
        let g = self.terms.values().fold(0i64, |g, &m| num_integer::gcd(g, m));
        if g == 0 {
            return (BTreeMap::new(), BigRational::zero());
        }
        let terms = self.terms.iter().map(|(&ph, &m)| (ph, m / g)).collect();
        (terms, &self.scale * BigRational::from_integer(BigInt::from(g)))
    }
}

/// Compares an exponential sum against a closed value: exactly when the sum
/// folds into the closed ring, otherwise numerically with relative tolerance.
pub fn compare(a: &ExpSum, b: &ClosedValue, tol: f64) -> bool {
    assert!(tol > 0.0);
    if let Some(exact) = a.to_closed() {
        if exact.twist() == b.twist() || exact.is_zero() || b.is_zero() {
            return exact == *b;
        }
    }
    let x = a.numeric();
    let y = b.numeric();
    (x - y).norm() <= tol * y.norm().max(1.0)
}

/// Serialized as `[[num, log_den, mult], ...]` with the scale applied
/// separately by callers.
impl Serialize for ExpSum {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<(u64, u32, i64)> =
            self.terms.iter().map(|(ph, &m)| (ph.numerator(), ph.log_denominator(), m)).collect();
        v.serialize(s)
    }
}
