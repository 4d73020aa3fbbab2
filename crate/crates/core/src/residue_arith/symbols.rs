use std::sync::Arc;

use super::field::FieldSpec;
use super::padic::PadicApprox;
use super::phase::Phase;
use super::ring::{enumerate_ring, RingElem};
use crate::error::{Error, Result};

/// The Teichmüller representative of `r mod p` at precision `k`: the unique
/// `t == r (mod p)` with `t^q = t`.
pub fn teichmuller_lift(r: &RingElem, k: u32) -> RingElem {
    let q = r.spec().q() as u128;
    let mut t = r.residue().lift(k);
    loop {
        let next = t.pow(q);
        if next == t {
            return t;
        }
        t = next;
    }
}

/// Elements of `kappa` in coords-lexicographic order.
pub fn residue_field(spec: &Arc<FieldSpec>) -> Vec<RingElem> {
    enumerate_ring(spec, 1).collect()
}

/// Teichmüller lifts of `kappa^x` at precision `k`, ordered by residue.
pub fn teichmuller_units(spec: &Arc<FieldSpec>, k: u32) -> Vec<RingElem> {
    residue_field(spec)
        .into_iter()
        .filter(|r| !r.is_zero())
        .map(|r| teichmuller_lift(&r, k))
        .collect()
}

/// Digits `d_0, .., d_{n-1}` in `U_0` with `x == sum d_i p^i (mod p^n)`, by
/// repeated subtract-and-divide. Requires `n <= x.precision()`.
pub fn teichmuller_digits(x: &RingElem, n: u32) -> Vec<RingElem> {
    let k = x.precision();
    assert!(n <= k);
    let mut digits = Vec::with_capacity(n as usize);
    let mut rest = x.clone();
    for i in 0..n {
        let d = teichmuller_lift(&rest.residue(), k - i);
        digits.push(d.clone());
        if i + 1 < n {
            rest = (&rest - &d).div_p_pow(1);
        }
    }
    digits
}

/// The quadratic residue symbol of `kappa`, extended by 0.
pub fn legendre_symbol(x: &RingElem) -> i32 {
    let r = x.residue();
    if r.is_zero() {
        return 0;
    }
    let spec = r.spec().clone();
    if spec.p() == 2 {
        // every element of a field of characteristic 2 is a square
        return 1;
    }
    let e = (spec.q() as u128 - 1) / 2;
    if r.pow(e) == RingElem::one(&spec, 1) {
        1
    } else {
        -1
    }
}

/// The additive character phase: `e_pi(alpha) = exp(2 pi i * phase)` with
/// `phase = -Tr(alpha) mod Z`.
pub fn epi_phase(alpha: &PadicApprox) -> Result<Phase> {
    let spec = alpha.spec();
    let p = spec.p();
    if alpha.is_exact_zero() {
        return Ok(Phase::zero(p));
    }
    if let Some(lb) = alpha.valuation_lower_bound() {
        if lb >= 0 {
            return Ok(Phase::zero(p));
        }
    }
    let val = alpha.valuation()?.expect("nonzero");
    let depth = (-val) as u32;
    let unit = alpha.unit().expect("known");
    if unit.precision() < depth {
        return Err(Error::PrecisionExhausted(format!(
            "phase of an element of valuation {val} needs {depth} digits, have {}",
            unit.precision()
        )));
    }
    let tr = unit.reduce(depth).trace();
    Ok(Phase::new(p, -(tr as i128), depth))
}

/// Phase of `x / p^depth` for `x` integral, known at least modulo `p^depth`.
pub fn phase_of_scaled(x: &RingElem, depth: u32) -> Phase {
    let p = x.spec().p();
    if depth == 0 {
        return Phase::zero(p);
    }
    let tr = x.reduce(depth).trace();
    Phase::new(p, -(tr as i128), depth)
}

/// The quadratic character on dyadic units defined from the first three
/// Teichmüller digits: for `u == a + 2b + 4c (mod 8)`, `(-1)^Tr((b + c) / a)`.
pub fn eta_char(u: &PadicApprox) -> Result<i32> {
    let spec = u.spec();
    if spec.p() != 2 {
        return Err(Error::InvalidField("the dyadic character needs p = 2".into()));
    }
    match u.valuation()? {
        Some(0) => {}
        _ => return Err(Error::NonUnit(format!("{u:?} is not a unit"))),
    }
    let unit = u.unit().expect("known");
    if unit.precision() < 3 {
        return Err(Error::PrecisionExhausted("the dyadic character needs the unit modulo 8".into()));
    }
    Ok(eta_of_ring(&unit.reduce(3)))
}

/// `eta` for a unit of `GR(2^k, f)`, `k >= 3`.
pub fn eta_of_ring(u: &RingElem) -> i32 {
    let digits = teichmuller_digits(&u.reduce(3), 3);
    let a = digits[0].residue();
    let b = digits[1].residue();
    let c = digits[2].residue();
    let x = &(&b + &c) * &a.inv().expect("unit");
    if x.trace() % 2 == 0 {
        1
    } else {
        -1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn teichmuller_examples() {
        let q3 = FieldSpec::rational(3).unwrap();
        let two = RingElem::from_int(&q3, 1, 2);
        assert_eq!(teichmuller_lift(&two, 2).coords(), &[8]);
        let one = RingElem::from_int(&q3, 1, 1);
        assert_eq!(teichmuller_lift(&one, 5), RingElem::one(&q3, 5));
        assert!(teichmuller_lift(&RingElem::zero(&q3, 1), 4).is_zero());
    }

    #[test]
    fn digits_reassemble() {
        let spec = FieldSpec::with_default_modulus(2, 2).unwrap();
        for x in enumerate_ring(&spec, 4) {
            let ds = teichmuller_digits(&x, 4);
            let mut acc = RingElem::zero(&spec, 4);
            for (i, d) in ds.iter().enumerate() {
                acc = &acc + &d.lift(4).mul_p_pow(i as u32);
            }
            assert_eq!(acc, x);
        }
    }

    #[test]
    fn legendre_examples() {
        let q7 = FieldSpec::rational(7).unwrap();
        assert_eq!(legendre_symbol(&RingElem::from_int(&q7, 1, 2)), 1);
        assert_eq!(legendre_symbol(&RingElem::from_int(&q7, 1, 3)), -1);
        assert_eq!(legendre_symbol(&RingElem::zero(&q7, 1)), 0);
        let f9 = FieldSpec::with_default_modulus(3, 2).unwrap();
        assert_eq!(legendre_symbol(&RingElem::generator(&f9, 1)), -1);
    }

    #[test]
    fn eta_examples() {
        let q2 = FieldSpec::rational(2).unwrap();
        let eta = |n: i64| eta_char(&PadicApprox::from_int(&q2, n, 5)).unwrap();
        assert_eq!(eta(1), 1);
        assert_eq!(eta(3), -1);
        assert_eq!(eta(5), -1);
        assert_eq!(eta(7), 1);
        assert!(eta_char(&PadicApprox::from_int(&q2, 2, 5)).is_err());
    }

    #[test]
    fn phase_examples() {
        let q2 = FieldSpec::rational(2).unwrap();
        let half = PadicApprox::from_ratio(&q2, 1, 2, 6).unwrap();
        assert_eq!(epi_phase(&half).unwrap(), Phase::new(2, 1, 1));
        assert_eq!(epi_phase(&PadicApprox::from_int(&q2, 5, 6)).unwrap(), Phase::zero(2));
        let f9 = FieldSpec::with_default_modulus(3, 2).unwrap();
        let zeta = RingElem::generator(&f9, 4);
        assert_eq!(zeta.trace() % 3, 2);
        let alpha = PadicApprox::from_unit(-1, zeta).unwrap();
        assert_eq!(epi_phase(&alpha).unwrap(), Phase::new(3, 1, 1));
    }
}
