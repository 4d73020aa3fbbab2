use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The unramified extension of `Q_p` of degree `f`, given by a monic integer
/// polynomial that stays irreducible modulo `p`.
///
/// Ramification index is 1 and the different is trivial, so the uniformizer is
/// `p` itself and `N(p) = q = p^f`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "FieldSpecJson", into = "FieldSpecJson")]
pub struct FieldSpec {
    p: u64,
    f: usize,
    /// Monic, low-to-high, length `f + 1`.
    modulus: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
struct FieldSpecJson {
    p: u64,
    f: usize,
    #[serde(default)]
    modulus: Option<Vec<i64>>,
}

impl TryFrom<FieldSpecJson> for FieldSpec {
    type Error = Error;

    fn try_from(raw: FieldSpecJson) -> Result<Self> {
        match raw.modulus {
            Some(m) => FieldSpec::validate(raw.p, raw.f, m),
            None => FieldSpec::validate(raw.p, raw.f, default_modulus(raw.p, raw.f)?),
        }
    }
}

impl From<FieldSpec> for FieldSpecJson {
    fn from(spec: FieldSpec) -> Self {
        FieldSpecJson { p: spec.p, f: spec.f, modulus: Some(spec.modulus) }
    }
}

impl FieldSpec {
    /// Builds the field with an explicit defining polynomial (low-to-high, monic).
    pub fn new(p: u64, f: usize, modulus: Vec<i64>) -> Result<Arc<FieldSpec>> {
        Ok(Arc::new(Self::validate(p, f, modulus)?))
    }

    /// Builds the field with the default defining polynomial: the first monic
    /// irreducible polynomial of degree `f` (ordered by `(a_{f-1}, .., a_0)`)
    /// whose root generates the multiplicative group of the residue field,
    /// falling back to the first irreducible one.
    pub fn with_default_modulus(p: u64, f: usize) -> Result<Arc<FieldSpec>> {
        let modulus = default_modulus(p, f)?;
        Self::new(p, f, modulus)
    }

    /// `Q_p` itself.
    pub fn rational(p: u64) -> Result<Arc<FieldSpec>> {
        Self::with_default_modulus(p, 1)
    }

    fn validate(p: u64, f: usize, modulus: Vec<i64>) -> Result<FieldSpec> {
        if !is_prime(p) {
            return Err(Error::InvalidField(format!("p = {p} is not prime")));
        }
        if p > (1 << 31) {
            return Err(Error::InvalidField(format!("p = {p} is too large")));
        }
        if f == 0 {
            return Err(Error::InvalidField("inertial degree must be at least 1".into()));
        }
        if modulus.len() != f + 1 || modulus[f] != 1 {
            return Err(Error::InvalidField(format!(
                "modulus must be monic of degree {f} (got {modulus:?})"
            )));
        }
        if (p as f64).powi(f as i32) > 1e15 {
            return Err(Error::InvalidField(format!("q = {p}^{f} is too large")));
        }
        let reduced: Vec<u64> = modulus.iter().map(|&c| c.rem_euclid(p as i64) as u64).collect();
        if !fp_poly::is_irreducible(&reduced, p) {
            return Err(Error::InvalidField(format!(
                "modulus {modulus:?} is reducible modulo {p}"
            )));
        }
        Ok(FieldSpec { p, f, modulus })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn f(&self) -> usize {
        self.f
    }

    /// Size of the residue field.
    pub fn q(&self) -> u64 {
        self.p.pow(self.f as u32)
    }

    pub fn modulus(&self) -> &[i64] {
        &self.modulus
    }

    pub fn is_dyadic(&self) -> bool {
        self.p == 2
    }

    /// Largest `k` such that `p^k` fits comfortably in the 64-bit residue
    /// representation.
    pub fn max_precision(&self) -> u32 {
        let mut k = 0;
        let mut v: u128 = 1;
        while v * (self.p as u128) < (1u128 << 62) {
            v *= self.p as u128;
            k += 1;
        }
        k
    }

    /// `p^k`.
    pub fn pk(&self, k: u32) -> u64 {
        self.p.pow(k)
    }

    /// Modulus coefficients reduced into `[0, p^k)`.
    pub(crate) fn modulus_mod(&self, k: u32) -> Vec<u64> {
        let m = self.pk(k) as i128;
        self.modulus.iter().map(|&c| (c as i128).rem_euclid(m) as u64).collect()
    }
}

fn default_modulus(p: u64, f: usize) -> Result<Vec<i64>> {
    if !is_prime(p) {
        return Err(Error::InvalidField(format!("p = {p} is not prime")));
    }
    if f == 0 {
        return Err(Error::InvalidField("inertial degree must be at least 1".into()));
    }
    if (p as f64).powi(f as i32) > 1e15 {
        return Err(Error::InvalidField(format!("q = {p}^{f} is too large")));
    }
    let mut first_irreducible = None;
    let total = (p as u128).pow(f as u32);
    for code in 0..total {
        // a_{f-1} is the most significant digit
        let mut c = code;
        let mut coeffs = vec![0u64; f + 1];
        for i in 0..f {
            coeffs[i] = (c % p as u128) as u64;
            c /= p as u128;
        }
        coeffs[f] = 1;
        if !fp_poly::is_irreducible(&coeffs, p) {
            continue;
        }
        if fp_poly::root_is_primitive(&coeffs, p) {
            return Ok(coeffs.into_iter().map(|c| c as i64).collect());
        }
        first_irreducible.get_or_insert(coeffs);
    }
    first_irreducible
        .map(|c| c.into_iter().map(|x| x as i64).collect())
        .ok_or_else(|| Error::InvalidField(format!("no irreducible polynomial of degree {f} mod {p}")))
}

pub(crate) fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

pub(crate) fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Polynomial arithmetic over `F_p`, coefficients low-to-high.
mod fp_poly {
    use super::prime_factors;

    fn trim(a: &mut Vec<u64>) {
        while a.len() > 1 && *a.last().unwrap() == 0 {
            a.pop();
        }
        if a.is_empty() {
            a.push(0);
        }
    }

    fn is_zero(a: &[u64]) -> bool {
        a.iter().all(|&c| c == 0)
    }

    fn inv_mod(a: u64, p: u64) -> u64 {
        pow_mod(a, p - 2, p)
    }

    fn pow_mod(mut b: u64, mut e: u64, p: u64) -> u64 {
        let mut r = 1u64;
        b %= p;
        while e > 0 {
            if e & 1 == 1 {
                r = r * b % p;
            }
            b = b * b % p;
            e >>= 1;
        }
        r
    }

    fn rem(a: &[u64], m: &[u64], p: u64) -> Vec<u64> {
        let mut r = a.to_vec();
        trim(&mut r);
        let dm = m.len() - 1;
        let lead_inv = inv_mod(m[dm], p);
        while r.len() > dm && !is_zero(&r) {
            let dr = r.len() - 1;
            let c = r[dr] * lead_inv % p;
            for i in 0..=dm {
                let idx = dr - dm + i;
                r[idx] = (r[idx] + p - c * m[i] % p) % p;
            }
            r.pop();
            trim(&mut r);
        }
        r
    }

    fn mul_mod(a: &[u64], b: &[u64], m: &[u64], p: u64) -> Vec<u64> {
        let mut out = vec![0u64; a.len() + b.len() - 1];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                out[i + j] = (out[i + j] + x * y) % p;
            }
        }
        rem(&out, m, p)
    }

    fn pow_poly_mod(base: &[u64], mut e: u128, m: &[u64], p: u64) -> Vec<u64> {
        let mut result = vec![1u64];
        let mut b = rem(base, m, p);
        while e > 0 {
            if e & 1 == 1 {
                result = mul_mod(&result, &b, m, p);
            }
            b = mul_mod(&b, &b, m, p);
            e >>= 1;
        }
        result
    }

    fn gcd(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        trim(&mut a);
        trim(&mut b);
        while !is_zero(&b) {
            let r = rem(&a, &b, p);
            a = b;
            b = r;
        }
        a
    }

    pub(super) fn is_irreducible(g: &[u64], p: u64) -> bool {
        let f = g.len() - 1;
        if f == 1 {
            return true;
        }
        let x = vec![0u64, 1];
        let mut xp = x.clone();
        for _ in 1..=f / 2 {
            xp = pow_poly_mod(&xp, p as u128, g, p);
            let mut diff = xp.clone();
            if diff.len() < 2 {
                diff.resize(2, 0);
            }
            diff[1] = (diff[1] + p - 1) % p;
            let d = gcd(g, &diff, p);
            if d.len() > 1 {
                return false;
            }
        }
        true
    }

    pub(super) fn root_is_primitive(g: &[u64], p: u64) -> bool {
        let f = g.len() - 1;
        let q = p.pow(f as u32);
        let order = q - 1;
        let x = if f == 1 {
            vec![(p - g[0] % p) % p]
        } else {
            vec![0u64, 1]
        };
        if f == 1 && x[0] == 0 {
            return false;
        }
        for r in prime_factors(order) {
            let v = pow_poly_mod(&x, (order / r) as u128, g, p);
            if v.len() == 1 && v[0] == 1 {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_moduli_are_primitive_choices() {
        assert_eq!(FieldSpec::with_default_modulus(2, 2).unwrap().modulus(), &[1, 1, 1]);
        assert_eq!(FieldSpec::with_default_modulus(2, 3).unwrap().modulus(), &[1, 1, 0, 1]);
        assert_eq!(FieldSpec::with_default_modulus(2, 4).unwrap().modulus(), &[1, 1, 0, 0, 1]);
        // x^2 + 1 is irreducible mod 3 but its root has order 4
        assert_eq!(FieldSpec::with_default_modulus(3, 2).unwrap().modulus(), &[2, 1, 1]);
        // root 2 generates (Z/3)^x
        assert_eq!(FieldSpec::with_default_modulus(3, 1).unwrap().modulus(), &[1, 1]);
    }

    #[test]
    fn rejects_bad_fields() {
        assert!(matches!(FieldSpec::with_default_modulus(4, 1), Err(Error::InvalidField(_))));
        assert!(matches!(FieldSpec::new(2, 2, vec![1, 0, 1]), Err(Error::InvalidField(_))));
        assert!(matches!(FieldSpec::new(3, 2, vec![1, 0, 2]), Err(Error::InvalidField(_))));
        assert!(matches!(FieldSpec::with_default_modulus(5, 0), Err(Error::InvalidField(_))));
    }

    #[test]
    fn json_round_trip() {
        let spec = FieldSpec::with_default_modulus(3, 2).unwrap();
        let s = serde_json::to_string(&*spec).unwrap();
        assert_eq!(s, r#"{"p":3,"f":2,"modulus":[2,1,1]}"#);
        let back: FieldSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, *spec);
        let bad: std::result::Result<FieldSpec, _> = serde_json::from_str(r#"{"p":4,"f":1}"#);
        assert!(bad.is_err());
    }
}
