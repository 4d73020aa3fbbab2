use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::field::FieldSpec;
use super::ring::RingElem;
use crate::error::{Error, Result};

/// An element of `K` known to finite precision: `p^val * unit` with the unit known
/// in `GR(p^k, f)`, an exact zero, or a value only known to lie in `p^abs o`.
#[derive(Clone, PartialEq, Eq)]
pub struct PadicApprox {
    spec: Arc<FieldSpec>,
    repr: Repr,
}

#[derive(Clone, PartialEq, Eq)]
enum Repr {
    Zero,
    /// `unit` has nonzero residue, so `val` is exact.
    Known { val: i64, unit: RingElem },
    /// Divisible by `p^abs`; whether it vanishes is undecided.
    Vanishing { abs: i64 },
}

impl fmt::Debug for PadicApprox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            Repr::Zero => write!(f, "0"),
            Repr::Known { val, unit } => write!(f, "{}^{} * {:?}", self.spec.p(), val, unit),
            Repr::Vanishing { abs } => write!(f, "O({}^{})", self.spec.p(), abs),
        }
    }
}

impl PadicApprox {
    pub fn zero(spec: &Arc<FieldSpec>) -> Self {
        PadicApprox { spec: spec.clone(), repr: Repr::Zero }
    }

    /// Known to lie in `p^abs o` and nothing more.
    pub fn vanishing(spec: &Arc<FieldSpec>, abs: i64) -> Self {
        PadicApprox { spec: spec.clone(), repr: Repr::Vanishing { abs } }
    }

    /// `p^val * unit`; fails with `NonUnit` if `unit` has zero residue.
    pub fn from_unit(val: i64, unit: RingElem) -> Result<Self> {
        if !unit.is_unit() {
            return Err(Error::NonUnit(format!("{unit:?} is not a unit")));
        }
        Ok(PadicApprox { spec: unit.spec().clone(), repr: Repr::Known { val, unit } })
    }

    /// The integer `n` with relative precision `prec`.
    pub fn from_int(spec: &Arc<FieldSpec>, n: i64, prec: u32) -> Self {
        Self::from_exact_coords(spec, 0, &[n], prec).expect("integer input")
    }

    /// `num / den` with relative precision `prec`; `den != 0`.
    pub fn from_ratio(spec: &Arc<FieldSpec>, num: i64, den: i64, prec: u32) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidInput("zero denominator".into()));
        }
        let n = Self::from_int(spec, num, prec);
        let d = Self::from_int(spec, den, prec);
        n.div(&d)
    }

    /// `p^val * (sum_i coords[i] theta^i)` for an exact integer coordinate vector,
    /// normalized so the unit part has nonzero residue; relative precision `prec`.
    pub fn from_exact_coords(spec: &Arc<FieldSpec>, val: i64, coords: &[i64], prec: u32) -> Result<Self> {
        if coords.iter().all(|&c| c == 0) {
            return Ok(Self::zero(spec));
        }
        let p = spec.p() as i64;
        let mut shift = 0u32;
        let mut cs: Vec<i64> = coords.to_vec();
        while cs.iter().all(|&c| c % p == 0) {
            for c in cs.iter_mut() {
                *c /= p;
            }
            shift += 1;
        }
        let unit = RingElem::new(spec, prec, &cs)?;
        if !unit.is_unit() {
            // only possible when the coordinate vector was reduced by the modulus
            return Ok(Self::from_integral_shifted(&unit, val + shift as i64));
        }
        Self::from_unit(val + shift as i64, unit)
    }

    /// Interprets a ring element known modulo `p^k` as an element of `o`.
    pub fn from_integral(x: &RingElem) -> Self {
        Self::from_integral_shifted(x, 0)
    }

    /// `p^shift * x` for `x` known modulo `p^k`.
    pub fn from_integral_shifted(x: &RingElem, shift: i64) -> Self {
        match x.valuation() {
            None => Self::vanishing(x.spec(), shift + x.precision() as i64),
            Some(w) => PadicApprox {
                spec: x.spec().clone(),
                repr: Repr::Known { val: shift + w as i64, unit: x.div_p_pow(w) },
            },
        }
    }

    pub fn spec(&self) -> &Arc<FieldSpec> {
        &self.spec
    }

    pub fn is_exact_zero(&self) -> bool {
        matches!(self.repr, Repr::Zero)
    }

    pub fn is_known_nonzero(&self) -> bool {
        matches!(self.repr, Repr::Known { .. })
    }

    /// `Ok(None)` for an exact zero; `PrecisionExhausted` when undecided.
    pub fn valuation(&self) -> Result<Option<i64>> {
        match &self.repr {
            Repr::Zero => Ok(None),
            Repr::Known { val, .. } => Ok(Some(*val)),
            Repr::Vanishing { abs } => Err(Error::PrecisionExhausted(format!(
                "value is divisible by p^{abs} but its valuation is not determined"
            ))),
        }
    }

    /// Valuation, treating an exact zero as `+inf` (`i64::MAX`).
    pub fn ord(&self) -> Result<i64> {
        Ok(self.valuation()?.unwrap_or(i64::MAX))
    }

    /// A certain lower bound on the valuation (`None` = `+inf`).
    pub fn valuation_lower_bound(&self) -> Option<i64> {
        match &self.repr {
            Repr::Zero => None,
            Repr::Known { val, .. } => Some(*val),
            Repr::Vanishing { abs } => Some(*abs),
        }
    }

    pub fn unit(&self) -> Option<&RingElem> {
        match &self.repr {
            Repr::Known { unit, .. } => Some(unit),
            _ => None,
        }
    }

    /// Unit part; errors if zero or undecided.
    pub fn unit_part(&self) -> Result<&RingElem> {
        match &self.repr {
            Repr::Known { unit, .. } => Ok(unit),
            Repr::Zero => Err(Error::NonUnit("zero has no unit part".into())),
            Repr::Vanishing { abs } => Err(Error::PrecisionExhausted(format!(
                "unit part undetermined beyond p^{abs}"
            ))),
        }
    }

    /// Relative precision of the unit part (`None` for exact zero or undecided).
    pub fn relative_precision(&self) -> Option<u32> {
        self.unit().map(|u| u.precision())
    }

    /// Absolute precision `val + k` (`None` = exact).
    pub fn absolute_precision(&self) -> Option<i64> {
        match &self.repr {
            Repr::Zero => None,
            Repr::Known { val, unit } => Some(val + unit.precision() as i64),
            Repr::Vanishing { abs } => Some(*abs),
        }
    }

    /// Whether `self` lies in `p^j o`.
    pub fn in_ideal(&self, j: i64) -> Result<bool> {
        match &self.repr {
            Repr::Zero => Ok(true),
            Repr::Known { val, .. } => Ok(*val >= j),
            Repr::Vanishing { abs } if *abs >= j => Ok(true),
            Repr::Vanishing { abs } => Err(Error::PrecisionExhausted(format!(
                "membership in p^{j} undecided (known modulo p^{abs})"
            ))),
        }
    }

    /// Residue modulo `p^j` of an integral element.
    pub fn reduce_integral(&self, j: u32) -> Result<RingElem> {
        match &self.repr {
            Repr::Zero => Ok(RingElem::zero(&self.spec, j)),
            Repr::Vanishing { abs } => {
                if *abs >= j as i64 {
                    Ok(RingElem::zero(&self.spec, j))
                } else {
                    Err(Error::PrecisionExhausted(format!("residue mod p^{j} undecided beyond p^{abs}")))
                }
            }
            Repr::Known { val, unit } => {
                if *val < 0 {
                    return Err(Error::NotIntegral(format!("{self:?} has negative valuation")));
                }
                if *val >= j as i64 {
                    return Ok(RingElem::zero(&self.spec, j));
                }
                let need = j - *val as u32;
                if unit.precision() < need {
                    return Err(Error::PrecisionExhausted(format!(
                        "residue mod p^{j} needs {need} unit digits, have {}",
                        unit.precision()
                    )));
                }
                Ok(unit.reduce(need).lift(j).mul_p_pow(*val as u32))
            }
        }
    }

    /// Residue of the unit part in `kappa`.
    pub fn unit_residue(&self) -> Result<RingElem> {
        Ok(self.unit_part()?.residue())
    }

    /// Caps the relative precision at `k`.
    pub fn truncate(&self, k: u32) -> Self {
        match &self.repr {
            Repr::Known { val, unit } if unit.precision() > k => PadicApprox {
                spec: self.spec.clone(),
                repr: Repr::Known { val: *val, unit: unit.reduce(k) },
            },
            _ => self.clone(),
        }
    }

    pub fn neg(&self) -> Self {
        match &self.repr {
            Repr::Known { val, unit } => PadicApprox {
                spec: self.spec.clone(),
                repr: Repr::Known { val: *val, unit: -unit },
            },
            _ => self.clone(),
        }
    }

    fn check(&self, other: &Self) -> Result<()> {
        if !(Arc::ptr_eq(&self.spec, &other.spec) || self.spec == other.spec) {
            return Err(Error::SpecMismatch("p-adic operands over different fields".into()));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        use Repr::*;
        Ok(match (&self.repr, &other.repr) {
            (Zero, _) => other.clone(),
            (_, Zero) => self.clone(),
            (Vanishing { abs: a }, Vanishing { abs: b }) => Self::vanishing(&self.spec, (*a).min(*b)),
            (Vanishing { abs }, Known { val, unit }) | (Known { val, unit }, Vanishing { abs }) => {
                if val < abs {
                    let keep = (*abs - *val).min(unit.precision() as i64) as u32;
                    PadicApprox { spec: self.spec.clone(), repr: Known { val: *val, unit: unit.reduce(keep) } }
                } else {
                    Self::vanishing(&self.spec, (*abs).min(val + unit.precision() as i64))
                }
            }
            (Known { val: v1, unit: u1 }, Known { val: v2, unit: u2 }) => {
                let v = (*v1).min(*v2);
                let abs = (v1 + u1.precision() as i64).min(v2 + u2.precision() as i64);
                let rel = (abs - v) as u32;
                let shifted = |val: i64, unit: &RingElem| -> RingElem {
                    let d = (val - v) as u32;
                    if d >= rel {
                        RingElem::zero(&self.spec, rel)
                    } else {
                        unit.reduce(rel - d).lift(rel).mul_p_pow(d)
                    }
                };
                let sum = &shifted(*v1, u1) + &shifted(*v2, u2);
                Self::from_integral_shifted(&sum, v)
            }
        })
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        use Repr::*;
        Ok(match (&self.repr, &other.repr) {
            (Zero, _) | (_, Zero) => Self::zero(&self.spec),
            (Vanishing { abs: a }, Vanishing { abs: b }) => Self::vanishing(&self.spec, a + b),
            (Vanishing { abs }, Known { val, .. }) | (Known { val, .. }, Vanishing { abs }) => {
                Self::vanishing(&self.spec, abs + val)
            }
            (Known { val: v1, unit: u1 }, Known { val: v2, unit: u2 }) => {
                let k = u1.precision().min(u2.precision());
                PadicApprox {
                    spec: self.spec.clone(),
                    repr: Known { val: v1 + v2, unit: &u1.reduce(k) * &u2.reduce(k) },
                }
            }
        })
    }

    pub fn inv(&self) -> Result<Self> {
        match &self.repr {
            Repr::Known { val, unit } => Ok(PadicApprox {
                spec: self.spec.clone(),
                repr: Repr::Known { val: -val, unit: unit.inv()? },
            }),
            Repr::Zero => Err(Error::NonUnit("division by exact zero".into())),
            Repr::Vanishing { abs } => Err(Error::PrecisionExhausted(format!(
                "division by a value only known modulo p^{abs}"
            ))),
        }
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        self.try_mul(&other.inv()?)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.try_add(&other.neg())
    }

    /// `self * p^e`.
    pub fn mul_p_pow(&self, e: i64) -> Self {
        let repr = match &self.repr {
            Repr::Zero => Repr::Zero,
            Repr::Known { val, unit } => Repr::Known { val: val + e, unit: unit.clone() },
            Repr::Vanishing { abs } => Repr::Vanishing { abs: abs + e },
        };
        PadicApprox { spec: self.spec.clone(), repr }
    }

    /// `self * x` for an integer `x`.
    pub fn mul_int(&self, x: i64) -> Self {
        let k = self.relative_precision().unwrap_or(1).max(1);
        self.try_mul(&Self::from_int(&self.spec, x, k)).expect("same field")
    }

    pub fn pow(&self, e: u32) -> Result<Self> {
        let mut acc = Self::from_int(&self.spec, 1, self.relative_precision().unwrap_or(1).max(1));
        for _ in 0..e {
            acc = acc.try_mul(self)?;
        }
        Ok(acc)
    }
}

/// Serialized coefficient: `{"val": int | "inf", "unit": [int]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoeffJson {
    pub val: ValJson,
    #[serde(default)]
    pub unit: Vec<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValJson {
    Finite(i64),
    Inf(InfTag),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfTag {
    #[serde(rename = "inf")]
    Inf,
}

impl CoeffJson {
    pub fn zero() -> Self {
        CoeffJson { val: ValJson::Inf(InfTag::Inf), unit: vec![] }
    }

    pub fn int(n: i64) -> Self {
        if n == 0 {
            Self::zero()
        } else {
            CoeffJson { val: ValJson::Finite(0), unit: vec![n] }
        }
    }

    pub fn to_padic(&self, spec: &Arc<FieldSpec>, prec: u32) -> Result<PadicApprox> {
        match self.val {
            ValJson::Inf(_) => Ok(PadicApprox::zero(spec)),
            ValJson::Finite(v) => {
                if self.unit.is_empty() {
                    return Err(Error::InvalidInput("finite valuation needs a unit".into()));
                }
                PadicApprox::from_exact_coords(spec, v, &self.unit, prec)
            }
        }
    }

    /// Serializes an approximation; undecided values are rejected.
    pub fn from_padic(x: &PadicApprox) -> Result<Self> {
        match x.valuation()? {
            None => Ok(Self::zero()),
            Some(v) => Ok(CoeffJson {
                val: ValJson::Finite(v),
                unit: x.unit().expect("known").coords().iter().map(|&c| c as i64).collect(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q3() -> Arc<FieldSpec> {
        FieldSpec::rational(3).unwrap()
    }

    #[test]
    fn valuation_of_integers() {
        let spec = q3();
        let x = PadicApprox::from_int(&spec, 18, 5);
        assert_eq!(x.valuation().unwrap(), Some(2));
        assert_eq!(x.unit().unwrap().coords(), &[2]);
        assert!(PadicApprox::from_int(&spec, 0, 5).is_exact_zero());
    }

    #[test]
    fn cancellation_becomes_vanishing() {
        let spec = q3();
        let a = PadicApprox::from_int(&spec, 5, 3);
        let b = PadicApprox::from_int(&spec, 5 + 27 * 4, 6);
        let d = a.sub(&b).unwrap();
        assert!(matches!(d.valuation(), Err(Error::PrecisionExhausted(_))));
        assert_eq!(d.absolute_precision(), Some(3));
        assert!(d.in_ideal(3).unwrap());
        assert!(d.in_ideal(4).is_err());
    }

    #[test]
    fn ratio_and_inverse() {
        let spec = q3();
        let x = PadicApprox::from_ratio(&spec, 9, 4, 4).unwrap();
        assert_eq!(x.valuation().unwrap(), Some(2));
        let back = x.try_mul(&PadicApprox::from_int(&spec, 4, 4)).unwrap();
        assert_eq!(back.reduce_integral(6).unwrap().coords(), &[9]);
        let third = PadicApprox::from_ratio(&spec, 1, 3, 4).unwrap();
        assert_eq!(third.valuation().unwrap(), Some(-1));
        assert!(matches!(third.reduce_integral(2), Err(Error::NotIntegral(_))));
    }

    #[test]
    fn addition_tracks_precision() {
        let spec = q3();
        let a = PadicApprox::from_int(&spec, 1, 2);
        let b = PadicApprox::from_int(&spec, 3, 5);
        let s = a.try_add(&b).unwrap();
        assert_eq!(s.absolute_precision(), Some(2));
        assert_eq!(s.reduce_integral(2).unwrap().coords(), &[4]);
    }

    #[test]
    fn coeff_json_round_trip() {
        let spec = FieldSpec::with_default_modulus(2, 2).unwrap();
        let c: CoeffJson = serde_json::from_str(r#"{"val": 1, "unit": [1, 1]}"#).unwrap();
        let x = c.to_padic(&spec, 4).unwrap();
        assert_eq!(x.valuation().unwrap(), Some(1));
        let z: CoeffJson = serde_json::from_str(r#"{"val": "inf"}"#).unwrap();
        assert!(z.to_padic(&spec, 4).unwrap().is_exact_zero());
        assert_eq!(serde_json::to_string(&CoeffJson::zero()).unwrap(), r#"{"val":"inf","unit":[]}"#);
        // non-normalized units are normalized
        let c = CoeffJson { val: ValJson::Finite(0), unit: vec![4, 2] };
        assert_eq!(c.to_padic(&spec, 4).unwrap().valuation().unwrap(), Some(1));
    }
}
