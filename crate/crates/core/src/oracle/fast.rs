use crate::error::{Error, Result};
use crate::residue_arith::RingElem;

/// Largest residue degree the fixed-width arithmetic handles.
pub(crate) const MAX_F: usize = 8;

pub(crate) type Elem = [u64; MAX_F];

/// Allocation-free arithmetic in `GR(p^k, f)` on coordinate arrays, with
/// elements indexed by `sum_i c_i (p^k)^i`.
#[derive(Clone, Debug)]
pub(crate) struct FastRing {
    m: u64,
    f: usize,
    /// `theta^f = sum_i red[i] theta^i`.
    red: Elem,
    size: usize,
}

/// `a b mod m` for `a, b < m`; the product fits a `u64` when `m < 2^32`.
#[inline]
fn mulmod(a: u64, b: u64, m: u64) -> u64 {
    if m <= u32::MAX as u64 {
        a * b % m
    } else {
        ((a as u128 * b as u128) % m as u128) as u64
    }
}

impl FastRing {
    /// `size_limit` caps `q^k` so that index tables fit in memory.
    pub(crate) fn new(spec: &crate::residue_arith::FieldSpec, k: u32, size_limit: u64) -> Result<Self> {
        let f = spec.f();
        if f > MAX_F {
            return Err(Error::InvalidInput(format!("brute-force counting supports f <= {MAX_F}")));
        }
        let m = spec.pk(k);
        let size = (m as u128).checked_pow(f as u32).filter(|&s| s <= size_limit as u128).ok_or_else(|| {
            Error::BudgetExceeded(format!("residue ring of size {}^{} exceeds the budget", m, f))
        })? as usize;
        let mut red = [0u64; MAX_F];
        for (i, &a) in spec.modulus()[..f].iter().enumerate() {
            red[i] = (-(a as i128)).rem_euclid(m as i128) as u64;
        }
        Ok(FastRing { m, f, red, size })
    }

    pub(crate) fn modulus(&self) -> u64 {
        self.m
    }

    pub(crate) fn f(&self) -> usize {
        self.f
    }

    pub(crate) fn size(&self) -> usize {
        self.size
    }

    pub(crate) fn from_ring(&self, x: &RingElem) -> Elem {
        let mut e = [0u64; MAX_F];
        for (i, &c) in x.coords().iter().enumerate() {
            e[i] = c % self.m;
        }
        e
    }

    #[inline]
    pub(crate) fn decode(&self, mut idx: usize) -> Elem {
        let mut e = [0u64; MAX_F];
        for c in e.iter_mut().take(self.f) {
            *c = (idx as u64) % self.m;
            idx /= self.m as usize;
        }
        e
    }

    #[inline]
    pub(crate) fn encode(&self, e: &Elem) -> usize {
        let mut idx = 0usize;
        for i in (0..self.f).rev() {
            idx = idx * self.m as usize + e[i] as usize;
        }
        idx
    }

    #[inline]
    pub(crate) fn add(&self, a: &Elem, b: &Elem) -> Elem {
        let mut out = [0u64; MAX_F];
        for i in 0..self.f {
            let s = a[i] + b[i];
            out[i] = if s >= self.m { s - self.m } else { s };
        }
        out
    }

    #[inline]
    pub(crate) fn sub(&self, a: &Elem, b: &Elem) -> Elem {
        let mut out = [0u64; MAX_F];
        for i in 0..self.f {
            out[i] = if a[i] >= b[i] { a[i] - b[i] } else { a[i] + self.m - b[i] };
        }
        out
    }

    #[inline]
    pub(crate) fn add_idx(&self, a: usize, b: usize) -> usize {
        if self.f == 1 {
            let s = a + b;
            return if s >= self.size { s - self.size } else { s };
        }
        self.encode(&self.add(&self.decode(a), &self.decode(b)))
    }

    #[inline]
    pub(crate) fn sub_idx(&self, a: usize, b: usize) -> usize {
        if self.f == 1 {
            return if a >= b { a - b } else { a + self.size - b };
        }
        self.encode(&self.sub(&self.decode(a), &self.decode(b)))
    }

    #[inline]
    pub(crate) fn mul(&self, a: &Elem, b: &Elem) -> Elem {
        let m = self.m;
        if self.f == 1 {
            let mut out = [0u64; MAX_F];
            out[0] = mulmod(a[0], b[0], m);
            return out;
        }
        let mut prod = [0u64; 2 * MAX_F];
        for i in 0..self.f {
            if a[i] == 0 {
                continue;
            }
            for j in 0..self.f {
                prod[i + j] = (prod[i + j] + mulmod(a[i], b[j], m)) % m;
            }
        }
        for d in (self.f..2 * self.f - 1).rev() {
            let c = prod[d];
            if c == 0 {
                continue;
            }
            prod[d] = 0;
            for i in 0..self.f {
                prod[d - self.f + i] = (prod[d - self.f + i] + mulmod(c, self.red[i], m)) % m;
            }
        }
        let mut out = [0u64; MAX_F];
        out[..self.f].copy_from_slice(&prod[..self.f]);
        out
    }

    pub(crate) fn is_zero(e: &Elem) -> bool {
        e.iter().all(|&c| c == 0)
    }
}
