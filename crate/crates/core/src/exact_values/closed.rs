use std::fmt;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::residue_arith::Phase;

/// An exact element of `Q(zeta_8)[sqrt p]`, optionally multiplied by a
/// `p`-power root of unity `exp(2 pi i * twist)`.
///
/// Coordinates are over the basis `zeta_8^j * sqrt(p)^s`, stored at index
/// `j + 4 s` with `j < 4`, `s < 2`.
///
/// Normal form: for `p = 2` the `sqrt p` coordinates are folded into the
/// `zeta_8` ones and the twist lies in `[0, 1/8)`; for `p = 3` the twist lies in
/// `[0, 1/3)`; a zero value has zero twist.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ClosedValue {
    p: u64,
    coords: [BigRational; 8],
    twist: Phase,
}

fn q(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

impl fmt::Debug for ClosedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const NAMES: [&str; 4] = ["", "z8", "i", "z8^3"];
        let mut parts = Vec::new();
        for (idx, c) in self.coords.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let (j, s) = (idx % 4, idx / 4);
            let mut basis = NAMES[j].to_string();
            if s == 1 {
                basis = format!("{basis}{}sqrt{}", if basis.is_empty() { "" } else { "*" }, self.p);
            }
            if basis.is_empty() {
                parts.push(format!("{c}"));
            } else {
                parts.push(format!("({c})*{basis}"));
            }
        }
        let body = if parts.is_empty() { "0".to_string() } else { parts.join(" + ") };
        if self.twist.is_zero() {
            write!(f, "{body}")
        } else {
            write!(f, "e({:?})*({body})", self.twist)
        }
    }
}

impl ClosedValue {
    pub fn zero(p: u64) -> Self {
        ClosedValue { p, coords: Default::default(), twist: Phase::zero(p) }
    }

    pub fn from_rational(p: u64, r: BigRational) -> Self {
        let mut v = Self::zero(p);
        v.coords[0] = r;
        v
    }

    pub fn from_int(p: u64, n: i64) -> Self {
        Self::from_rational(p, q(n))
    }

    pub fn one(p: u64) -> Self {
        Self::from_int(p, 1)
    }

    /// `zeta_8^j`.
    pub fn zeta8_pow(p: u64, j: i64) -> Self {
        let j = j.rem_euclid(8) as usize;
        let mut v = Self::zero(p);
        if j < 4 {
            v.coords[j] = q(1);
        } else {
            v.coords[j - 4] = q(-1);
        }
        v
    }

    pub fn i(p: u64) -> Self {
        Self::zeta8_pow(p, 2)
    }

    pub fn sqrt_p(p: u64) -> Self {
        let mut v = Self::zero(p);
        v.coords[4] = q(1);
        v.normalize()
    }

    /// `p^(e/2)` for any integer `e`.
    pub fn sqrt_p_pow(p: u64, e: i64) -> Self {
        let half = e.div_euclid(2);
        let base = BigRational::from_integer(BigInt::from(p)).pow(half as i32);
        let v = Self::from_rational(p, base);
        if e.rem_euclid(2) == 1 {
            v.mul(&Self::sqrt_p(p))
        } else {
            v
        }
    }

    /// `q^(t/2)` with `q = p^f`.
    pub fn sqrt_q_pow(p: u64, f: usize, t: i64) -> Self {
        Self::sqrt_p_pow(p, f as i64 * t)
    }

    /// `exp(2 pi i * phase)`.
    pub fn root_of_unity(phase: Phase) -> Self {
        let mut v = Self::one(phase.p());
        v.twist = phase;
        v.normalize()
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn coords(&self) -> &[BigRational; 8] {
        &self.coords
    }

    pub fn twist(&self) -> Phase {
        self.twist
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| c.is_zero())
    }

    pub fn is_rational(&self) -> bool {
        self.twist.is_zero() && self.coords[1..].iter().all(|c| c.is_zero())
    }

    pub fn as_rational(&self) -> Option<BigRational> {
        self.is_rational().then(|| self.coords[0].clone())
    }

    /// Multiplies by `zeta_8^j` (coordinates only).
    fn rotate(&self, j: i64) -> [BigRational; 8] {
        let j = j.rem_euclid(8) as usize;
        let mut out: [BigRational; 8] = Default::default();
        for (idx, c) in self.coords.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let (a, s) = (idx % 4, idx / 4);
            let e = (a + j) % 8;
            if e < 4 {
                out[e + 4 * s] += c;
            } else {
                out[e - 4 + 4 * s] -= c;
            }
        }
        out
    }

    fn normalize(mut self) -> Self {
        if self.p == 2 {
            // sqrt 2 = zeta_8 - zeta_8^3
            for a in 0..4 {
                let c = std::mem::take(&mut self.coords[4 + a]);
                if c.is_zero() {
                    continue;
                }
                for (shift, sign) in [(1usize, 1i64), (3, -1)] {
                    let e = (a + shift) % 8;
                    let term = &c * q(sign);
                    if e < 4 {
                        self.coords[e] += term;
                    } else {
                        self.coords[e - 4] -= term;
                    }
                }
            }
        }
        match self.p {
            2 if self.twist.log_denominator() >= 1 => {
                let m = self.twist.log_denominator();
                let n = self.twist.numerator() as i128;
                let (j, rest) = if m <= 3 {
                    (n << (3 - m), 0)
                } else {
                    let unit = 1i128 << (m - 3);
                    (n / unit, n % unit)
                };
                self.coords = self.rotate(j as i64);
                self.twist = Phase::new(2, rest, m);
            }
            3 if self.twist.log_denominator() >= 1 => {
                let m = self.twist.log_denominator();
                let n = self.twist.numerator() as i128;
                let unit = 3i128.pow(m - 1);
                let (j, rest) = (n / unit, n % unit);
                self.twist = Phase::new(3, rest, m);
                // zeta_3 = (-1 + i sqrt 3) / 2
                let mut zeta3 = Self::zero(3);
                zeta3.coords[0] = BigRational::new(BigInt::from(-1), BigInt::from(2));
                zeta3.coords[6] = BigRational::new(BigInt::from(1), BigInt::from(2));
                for _ in 0..j {
                    self.coords = self.mul_coords(&zeta3.coords);
                }
            }
            _ => {}
        }
        if self.is_zero() {
            self.twist = Phase::zero(self.p);
        }
        self
    }

    fn mul_coords(&self, other: &[BigRational; 8]) -> [BigRational; 8] {
        let p = q(self.p as i64);
        let mut out: [BigRational; 8] = Default::default();
        for (i1, c1) in self.coords.iter().enumerate() {
            if c1.is_zero() {
                continue;
            }
            for (i2, c2) in other.iter().enumerate() {
                if c2.is_zero() {
                    continue;
                }
                let (a1, s1) = (i1 % 4, i1 / 4);
                let (a2, s2) = (i2 % 4, i2 / 4);
                let mut c = c1 * c2;
                let mut s = s1 + s2;
                if s == 2 {
                    c *= &p;
                    s = 0;
                }
                let e = a1 + a2;
                if e < 4 {
                    out[e + 4 * s] += c;
                } else {
                    out[e - 4 + 4 * s] -= c;
                }
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.p, other.p, "values over different primes");
        ClosedValue { p: self.p, coords: self.mul_coords(&other.coords), twist: self.twist + other.twist }
            .normalize()
    }

    /// Sum of values with equal twists; `None` when the twists differ.
    pub fn try_add(&self, other: &Self) -> Option<Self> {
        assert_eq!(self.p, other.p, "values over different primes");
        if self.is_zero() {
            return Some(other.clone());
        }
        if other.is_zero() {
            return Some(self.clone());
        }
        if self.twist != other.twist {
            return None;
        }
        let mut coords = self.coords.clone();
        for (c, d) in coords.iter_mut().zip(&other.coords) {
            *c += d;
        }
        Some(ClosedValue { p: self.p, coords, twist: self.twist }.normalize())
    }

    /// Panics when the twists differ.
    pub fn add(&self, other: &Self) -> Self {
        self.try_add(other).expect("adding values with different twists")
    }

    pub fn neg(&self) -> Self {
        let mut v = self.clone();
        for c in v.coords.iter_mut() {
            *c = -c.clone();
        }
        v
    }

    pub fn scale(&self, r: &BigRational) -> Self {
        let mut v = self.clone();
        for c in v.coords.iter_mut() {
            *c *= r;
        }
        v.normalize()
    }

    pub fn scale_int(&self, n: i64) -> Self {
        self.scale(&q(n))
    }

    pub fn numeric(&self) -> Complex64 {
        let z8 = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
        let sp = (self.p as f64).sqrt();
        let mut acc = Complex64::new(0.0, 0.0);
        for (idx, c) in self.coords.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let (a, s) = (idx % 4, idx / 4);
            let mut b = z8.powi(a as i32);
            if s == 1 {
                b *= sp;
            }
            acc += b * c.to_f64().unwrap_or(f64::NAN);
        }
        acc * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * self.twist.as_f64())
    }

    /// Coordinates as `"a/b"` strings.
    pub fn coord_strings(&self) -> Vec<String> {
        self.coords.iter().map(rational_string).collect()
    }

    /// Absolute value of the largest coordinate numerator/denominator.
    pub fn height(&self) -> BigInt {
        self.coords
            .iter()
            .map(|c| c.numer().abs().max(c.denom().abs()))
            .max()
            .unwrap_or_else(BigInt::one)
    }
}

/// `"a/b"` with `b > 0`.
pub fn rational_string(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses `"a/b"` or `"a"`.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((a, b)) => {
            let a: BigInt = a.trim().parse().ok()?;
            let b: BigInt = b.trim().parse().ok()?;
            (!b.is_zero()).then(|| BigRational::new(a, b))
        }
        None => s.parse::<BigInt>().ok().map(BigRational::from_integer),
    }
}

/// Twist-free values serialize as the 8 coordinates; twisted ones add the twist.
impl Serialize for ClosedValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.twist.is_zero() {
            self.coord_strings().serialize(s)
        } else {
            let mut m = s.serialize_map(Some(2))?;
            m.serialize_entry("coords", &self.coord_strings())?;
            m.serialize_entry("twist", &(self.twist.numerator(), self.twist.log_denominator()))?;
            m.end()
        }
    }
}
