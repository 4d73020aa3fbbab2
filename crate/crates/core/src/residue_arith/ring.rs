use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::field::FieldSpec;
use crate::error::{Error, Result};

/// An element of the Galois ring `GR(p^k, f) = o / p^k o`, stored in power-basis
/// coordinates reduced into `[0, p^k)`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RingElem {
    spec: Arc<FieldSpec>,
    k: u32,
    coords: Vec<u64>,
}

impl fmt::Debug for RingElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} mod {}^{}", self.coords, self.spec.p(), self.k)
    }
}

fn check_precision(spec: &FieldSpec, k: u32) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput("precision must be at least 1".into()));
    }
    if k > spec.max_precision() {
        return Err(Error::PrecisionExhausted(format!(
            "precision {k} exceeds the 64-bit limit {} for p = {}",
            spec.max_precision(),
            spec.p()
        )));
    }
    Ok(())
}

#[inline]
fn mulmod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

impl RingElem {
    /// Builds an element from integer coordinates (low-to-high). Longer inputs are
    /// reduced by the modulus.
    pub fn new(spec: &Arc<FieldSpec>, k: u32, coords: &[i64]) -> Result<Self> {
        check_precision(spec, k)?;
        let pk = spec.pk(k) as i128;
        let raw: Vec<u64> = coords.iter().map(|&c| (c as i128).rem_euclid(pk) as u64).collect();
        Ok(Self::from_raw_poly(spec, k, raw))
    }

    /// Reduces an arbitrary-length coefficient vector (entries already in `[0, p^k)`).
    pub(crate) fn from_raw_poly(spec: &Arc<FieldSpec>, k: u32, mut raw: Vec<u64>) -> Self {
        let f = spec.f();
        let pk = spec.pk(k);
        if raw.len() > f {
            let m = spec.modulus_mod(k);
            for d in (f..raw.len()).rev() {
                let c = raw[d];
                if c == 0 {
                    continue;
                }
                raw[d] = 0;
                for i in 0..f {
                    let idx = d - f + i;
                    raw[idx] = (raw[idx] + pk - mulmod(c, m[i], pk)) % pk;
                }
            }
        }
        raw.resize(f, 0);
        RingElem { spec: spec.clone(), k, coords: raw }
    }

    /// Coordinates already reduced into `[0, p^k)`, length `f`.
    pub(crate) fn from_reduced(spec: &Arc<FieldSpec>, k: u32, coords: Vec<u64>) -> Self {
        debug_assert_eq!(coords.len(), spec.f());
        RingElem { spec: spec.clone(), k, coords }
    }

    /// Panics on `k == 0`.
    pub fn from_int(spec: &Arc<FieldSpec>, k: u32, n: i64) -> Self {
        check_precision(spec, k).expect("invalid precision");
        let pk = spec.pk(k) as i128;
        let mut coords = vec![0u64; spec.f()];
        coords[0] = (n as i128).rem_euclid(pk) as u64;
        RingElem { spec: spec.clone(), k, coords }
    }

    pub fn zero(spec: &Arc<FieldSpec>, k: u32) -> Self {
        Self::from_int(spec, k, 0)
    }

    pub fn one(spec: &Arc<FieldSpec>, k: u32) -> Self {
        Self::from_int(spec, k, 1)
    }

    /// The class of the generator `theta` (a root of the modulus).
    pub fn generator(spec: &Arc<FieldSpec>, k: u32) -> Self {
        let mut raw = vec![0u64; 2];
        raw[1] = 1;
        Self::from_raw_poly(spec, k, raw)
    }

    pub fn spec(&self) -> &Arc<FieldSpec> {
        &self.spec
    }

    pub fn precision(&self) -> u32 {
        self.k
    }

    pub fn coords(&self) -> &[u64] {
        &self.coords
    }

    /// `p^k`.
    pub fn modulus_value(&self) -> u64 {
        self.spec.pk(self.k)
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|&c| c == 0)
    }

    pub fn is_unit(&self) -> bool {
        let p = self.spec.p();
        self.coords.iter().any(|&c| c % p != 0)
    }

    /// Largest `v < k` with `self` divisible by `p^v`; `None` for zero.
    pub fn valuation(&self) -> Option<u32> {
        let p = self.spec.p();
        self.coords
            .iter()
            .filter(|&&c| c != 0)
            .map(|&c| {
                let mut v = 0;
                let mut c = c;
                while c % p == 0 {
                    c /= p;
                    v += 1;
                }
                v
            })
            .min()
    }

    fn compatible(&self, other: &RingElem) -> Result<()> {
        if self.k != other.k || !(Arc::ptr_eq(&self.spec, &other.spec) || self.spec == other.spec) {
            return Err(Error::SpecMismatch(format!(
                "GR({}^{}, {}) vs GR({}^{}, {})",
                self.spec.p(),
                self.k,
                self.spec.f(),
                other.spec.p(),
                other.k,
                other.spec.f()
            )));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &RingElem) -> Result<RingElem> {
        self.compatible(other)?;
        let pk = self.modulus_value();
        let coords = self.coords.iter().zip(&other.coords).map(|(&a, &b)| (a + b) % pk).collect();
        Ok(RingElem { spec: self.spec.clone(), k: self.k, coords })
    }

    pub fn try_sub(&self, other: &RingElem) -> Result<RingElem> {
        self.compatible(other)?;
        let pk = self.modulus_value();
        let coords = self.coords.iter().zip(&other.coords).map(|(&a, &b)| (a + pk - b) % pk).collect();
        Ok(RingElem { spec: self.spec.clone(), k: self.k, coords })
    }

    pub fn try_mul(&self, other: &RingElem) -> Result<RingElem> {
        self.compatible(other)?;
        let f = self.spec.f();
        let pk = self.modulus_value();
        let mut raw = vec![0u128; 2 * f - 1];
        for (i, &a) in self.coords.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in other.coords.iter().enumerate() {
                raw[i + j] = (raw[i + j] + a as u128 * b as u128) % pk as u128;
            }
        }
        let raw = raw.into_iter().map(|c| c as u64).collect();
        Ok(Self::from_raw_poly(&self.spec, self.k, raw))
    }

    /// Multiplicative inverse; `NonUnit` when the residue vanishes.
    pub fn inv(&self) -> Result<RingElem> {
        if !self.is_unit() {
            return Err(Error::NonUnit(format!("{self:?}")));
        }
        let q = self.spec.q() as u128;
        let mut x = self.reduce(1).pow(q - 2).lift(self.k);
        let two = RingElem::from_int(&self.spec, self.k, 2);
        let mut prec = 1;
        while prec < self.k {
            x = &x * &(&two - &(self * &x));
            prec *= 2;
        }
        debug_assert!((self * &x) == RingElem::one(&self.spec, self.k));
        Ok(x)
    }

    pub fn pow(&self, mut e: u128) -> RingElem {
        let mut result = RingElem::one(&self.spec, self.k);
        let mut base = self.clone();
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        result
    }

    /// Image in `GR(p^j, f)` for `j <= k`.
    pub fn reduce(&self, j: u32) -> RingElem {
        assert!(j >= 1 && j <= self.k, "cannot reduce precision {} to {j}", self.k);
        let pj = self.spec.pk(j);
        RingElem { spec: self.spec.clone(), k: j, coords: self.coords.iter().map(|&c| c % pj).collect() }
    }

    /// Canonical lift (same coordinates) into `GR(p^j, f)` for `j >= k`.
    pub fn lift(&self, j: u32) -> RingElem {
        assert!(j >= self.k, "lift must not lower precision");
        check_precision(&self.spec, j).expect("invalid precision");
        RingElem { spec: self.spec.clone(), k: j, coords: self.coords.clone() }
    }

    /// Reduce or lift to precision `j`.
    pub fn at_precision(&self, j: u32) -> RingElem {
        if j <= self.k {
            self.reduce(j)
        } else {
            self.lift(j)
        }
    }

    /// Residue class in `kappa`.
    pub fn residue(&self) -> RingElem {
        self.reduce(1)
    }

    /// `self / p^v`, known modulo `p^(k - v)`. Requires divisibility and `v < k`.
    pub fn div_p_pow(&self, v: u32) -> RingElem {
        assert!(v < self.k);
        let pv = self.spec.pk(v);
        debug_assert!(self.coords.iter().all(|&c| c % pv == 0));
        RingElem { spec: self.spec.clone(), k: self.k - v, coords: self.coords.iter().map(|&c| c / pv).collect() }
    }

    /// `self * p^v` at the same precision.
    pub fn mul_p_pow(&self, v: u32) -> RingElem {
        if v >= self.k {
            return RingElem::zero(&self.spec, self.k);
        }
        let pk = self.modulus_value();
        let pv = self.spec.pk(v);
        RingElem { spec: self.spec.clone(), k: self.k, coords: self.coords.iter().map(|&c| mulmod(c, pv, pk)).collect() }
    }

    /// Absolute trace to `Z / p^k`, from the trace form of the multiplication
    /// matrices of the power basis.
    pub fn trace(&self) -> u64 {
        let tv = trace_vector(&self.spec, self.k);
        self.trace_with(&tv)
    }

    pub(crate) fn trace_with(&self, tv: &[u64]) -> u64 {
        let pk = self.modulus_value();
        self.coords.iter().zip(tv).fold(0u64, |acc, (&c, &t)| (acc + mulmod(c, t, pk)) % pk)
    }

    /// The Frobenius automorphism: the ring map sending `theta` to the root of the
    /// modulus congruent to `theta^p`.
    pub fn frobenius(&self) -> RingElem {
        let image = frobenius_of_generator(&self.spec, self.k);
        let mut acc = RingElem::zero(&self.spec, self.k);
        let mut power = RingElem::one(&self.spec, self.k);
        for &c in &self.coords {
            acc = &acc + &(&power * &RingElem::from_int(&self.spec, self.k, c as i64));
            power = &power * &image;
        }
        acc
    }

    /// Evaluates the coordinate polynomial-in-`theta` as an integer when `f == 1`;
    /// otherwise returns `None`.
    pub fn as_integer(&self) -> Option<u64> {
        (self.spec.f() == 1).then(|| self.coords[0])
    }

    /// Integer lift of the constant coordinate when all others vanish.
    pub fn as_base_integer(&self) -> Option<u64> {
        self.coords[1..].iter().all(|&c| c == 0).then(|| self.coords[0])
    }
}

/// `Tr(theta^i) mod p^k` for `0 <= i < f`.
pub fn trace_vector(spec: &Arc<FieldSpec>, k: u32) -> Vec<u64> {
    let f = spec.f();
    let pk = spec.pk(k);
    // powers theta^0 .. theta^(2f-2)
    let theta = RingElem::generator(spec, k);
    let mut powers = Vec::with_capacity(2 * f - 1);
    let mut cur = RingElem::one(spec, k);
    for _ in 0..(2 * f - 1) {
        powers.push(cur.clone());
        cur = &cur * &theta;
    }
    (0..f)
        .map(|i| (0..f).fold(0u64, |acc, j| (acc + powers[i + j].coords[j]) % pk))
        .collect()
}

fn frobenius_of_generator(spec: &Arc<FieldSpec>, k: u32) -> RingElem {
    let theta = RingElem::generator(spec, k);
    if spec.f() == 1 {
        return theta;
    }
    // Newton iteration towards the root of the modulus lifting theta^p;
    // the modulus is separable mod p so g' is a unit there
    let mut r = theta.pow(spec.p() as u128);
    for _ in 0..=k {
        let g = modulus_at(spec, k, &r);
        if g.is_zero() {
            break;
        }
        let dg = derivative_at(spec, k, &r);
        r = &r - &(&g * &dg.inv().expect("separable modulus"));
    }
    r
}

fn modulus_at(spec: &Arc<FieldSpec>, k: u32, x: &RingElem) -> RingElem {
    let mut acc = RingElem::zero(spec, k);
    let mut power = RingElem::one(spec, k);
    for &c in spec.modulus() {
        acc = &acc + &(&power * &RingElem::from_int(spec, k, c));
        power = &power * x;
    }
    acc
}

fn derivative_at(spec: &Arc<FieldSpec>, k: u32, x: &RingElem) -> RingElem {
    let mut acc = RingElem::zero(spec, k);
    let mut power = RingElem::one(spec, k);
    for (i, &c) in spec.modulus().iter().enumerate().skip(1) {
        acc = &acc + &(&power * &RingElem::from_int(spec, k, c * i as i64));
        power = &power * x;
    }
    acc
}

macro_rules! forward_binop {
    ($tr:ident, $method:ident, $inner:ident) => {
        impl $tr<&RingElem> for &RingElem {
            type Output = RingElem;
            fn $method(self, rhs: &RingElem) -> RingElem {
                self.$inner(rhs).expect("ring operands must share field and precision")
            }
        }
        impl $tr<RingElem> for RingElem {
            type Output = RingElem;
            fn $method(self, rhs: RingElem) -> RingElem {
                (&self).$method(&rhs)
            }
        }
    };
}

forward_binop!(Add, add, try_add);
forward_binop!(Sub, sub, try_sub);
forward_binop!(Mul, mul, try_mul);

impl Neg for &RingElem {
    type Output = RingElem;
    fn neg(self) -> RingElem {
        &RingElem::zero(&self.spec, self.k) - self
    }
}

impl Neg for RingElem {
    type Output = RingElem;
    fn neg(self) -> RingElem {
        -&self
    }
}

/// Serialized form: coordinate list low-to-high.
impl Serialize for RingElem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords.serialize(s)
    }
}

/// Deserialization needs the field and precision, supplied out of band.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RingElemJson(pub Vec<i64>);

impl RingElemJson {
    pub fn into_elem(self, spec: &Arc<FieldSpec>, k: u32) -> Result<RingElem> {
        RingElem::new(spec, k, &self.0)
    }
}

/// Every element of `GR(p^k, f)` in coords-lexicographic order (last coordinate
/// varies slowest).
pub fn enumerate_ring(spec: &Arc<FieldSpec>, k: u32) -> impl Iterator<Item = RingElem> + '_ {
    let pk = spec.pk(k);
    let f = spec.f();
    let total = (pk as u128).pow(f as u32);
    (0..total).map(move |mut code| {
        let mut coords = vec![0u64; f];
        for c in coords.iter_mut() {
            *c = (code % pk as u128) as u64;
            code /= pk as u128;
        }
        RingElem::from_reduced(spec, k, coords)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f4() -> Arc<FieldSpec> {
        FieldSpec::with_default_modulus(2, 2).unwrap()
    }

    #[test]
    fn generator_squared_reduces_by_modulus() {
        let spec = f4();
        let x = RingElem::generator(&spec, 3);
        assert_eq!((&x * &x).coords(), &[7, 7]);
    }

    #[test]
    fn inverse_and_non_unit() {
        let q2 = FieldSpec::rational(2).unwrap();
        let three = RingElem::from_int(&q2, 3, 3);
        assert_eq!(three.inv().unwrap().coords(), &[3]);
        let two = RingElem::from_int(&q2, 3, 2);
        assert!(matches!(two.inv(), Err(Error::NonUnit(_))));
        let spec = FieldSpec::with_default_modulus(3, 2).unwrap();
        for x in enumerate_ring(&spec, 2).filter(|x| x.is_unit()) {
            assert_eq!(&x * &x.inv().unwrap(), RingElem::one(&spec, 2));
        }
    }

    #[test]
    fn mismatched_operands_are_rejected() {
        let spec = f4();
        let a = RingElem::one(&spec, 2);
        let b = RingElem::one(&spec, 3);
        assert!(matches!(a.try_add(&b), Err(Error::SpecMismatch(_))));
        let c = RingElem::one(&FieldSpec::rational(2).unwrap(), 2);
        assert!(matches!(a.try_mul(&c), Err(Error::SpecMismatch(_))));
        assert!(RingElem::new(&spec, 0, &[1]).is_err());
    }

    #[test]
    fn trace_values() {
        let f8 = FieldSpec::with_default_modulus(2, 3).unwrap();
        assert_eq!(RingElem::one(&f8, 4).trace(), 3);
        let spec = f4();
        assert_eq!(RingElem::generator(&spec, 1).trace(), 1);
    }

    #[test]
    fn trace_matches_frobenius_orbit() {
        for (p, f) in [(2, 2), (2, 3), (3, 2), (5, 2), (2, 4)] {
            let spec = FieldSpec::with_default_modulus(p, f).unwrap();
            let k = 3;
            let elems: Vec<_> = enumerate_ring(&spec, k).step_by(7).take(60).collect();
            for x in elems {
                let mut orbit = x.clone();
                let mut sum = RingElem::zero(&spec, k);
                for _ in 0..f {
                    sum = &sum + &orbit;
                    orbit = orbit.frobenius();
                }
                assert_eq!(orbit, x, "Frobenius has order f");
                assert_eq!(sum.as_base_integer(), Some(x.trace()));
            }
        }
    }

    #[test]
    fn valuation_and_shifts() {
        let q3 = FieldSpec::rational(3).unwrap();
        let x = RingElem::from_int(&q3, 4, 18);
        assert_eq!(x.valuation(), Some(2));
        assert_eq!(x.div_p_pow(2).coords(), &[2]);
        assert_eq!(x.div_p_pow(2).precision(), 2);
        assert_eq!(RingElem::zero(&q3, 4).valuation(), None);
        assert_eq!(RingElem::from_int(&q3, 4, 2).mul_p_pow(3).coords(), &[54]);
    }
}
