//! Closed forms for quadratic Gauss sums over `kappa` and the Gauss-type
//! integrals over `o`, `o^2` and unit shells that local densities factor into.
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exact_values::{ClosedValue, ExpSum};
use crate::residue_arith::{
    epi_phase, eta_char, eta_of_ring, legendre_symbol, phase_of_scaled, residue_field, teichmuller_digits, teichmuller_lift, FieldSpec,
    PadicApprox, Phase, RingElem,
};

/// Largest `q` for which the normalizing fourth root of unity is found by
/// summing over all of `kappa`; beyond it the prime-field sum is lifted.
const DIRECT_EPSILON_LIMIT: u64 = 200_000;

/// Closed-form evaluator bound to one field.
#[derive(Clone, Debug)]
pub struct GaussEngine {
    spec: Arc<FieldSpec>,
    /// `epsilon` with `G(1) = epsilon^3 sqrt(q)`; odd `p` only.
    epsilon: Option<ClosedValue>,
}

fn ord(x: &PadicApprox) -> Result<Option<i64>> {
    x.valuation()
}

/// `min` over valuations with `None` as `+inf`.
fn min_ord(xs: &[Option<i64>]) -> Option<i64> {
    xs.iter().flatten().copied().min()
}

fn le(a: Option<i64>, b: Option<i64>) -> bool {
    match (a, b) {
        (_, None) => true,
        (None, Some(_)) => false,
        (Some(a), Some(b)) => a <= b,
    }
}

/// `chi_{p^j}(x)`.
fn in_ideal(x: &PadicApprox, j: i64) -> Result<bool> {
    x.in_ideal(j)
}

impl GaussEngine {
    pub fn new(spec: &Arc<FieldSpec>) -> Result<Self> {
        let epsilon = if spec.is_dyadic() { None } else { Some(epsilon_pi(spec)?) };
        Ok(GaussEngine { spec: spec.clone(), epsilon })
    }

    pub fn spec(&self) -> &Arc<FieldSpec> {
        &self.spec
    }

    fn p(&self) -> u64 {
        self.spec.p()
    }

    fn one(&self) -> ClosedValue {
        ClosedValue::one(self.p())
    }

    fn zero(&self) -> ClosedValue {
        ClosedValue::zero(self.p())
    }

    /// `q^(e/2)`.
    pub fn sqrt_q_pow(&self, e: i64) -> ClosedValue {
        ClosedValue::sqrt_q_pow(self.p(), self.spec.f(), e)
    }

    pub fn epsilon(&self) -> Result<&ClosedValue> {
        self.epsilon.as_ref().ok_or_else(|| Error::InvalidField("epsilon is defined for odd p only".into()))
    }

    /// `epsilon^e` for any integer `e`.
    pub fn epsilon_pow(&self, e: i64) -> Result<ClosedValue> {
        let eps = self.epsilon()?;
        let mut acc = self.one();
        for _ in 0..e.rem_euclid(4) {
            acc = acc.mul(eps);
        }
        Ok(acc)
    }

    fn require_odd(&self) -> Result<()> {
        if self.spec.is_dyadic() {
            return Err(Error::InvalidField("this integral is stated for odd p".into()));
        }
        Ok(())
    }

    fn require_dyadic(&self) -> Result<()> {
        if !self.spec.is_dyadic() {
            return Err(Error::InvalidField("this integral is stated for p = 2".into()));
        }
        Ok(())
    }

    fn nonzero(&self, sigma: &PadicApprox) -> Result<i64> {
        ord(sigma)?.ok_or_else(|| Error::InvalidInput("sigma must be nonzero".into()))
    }

    fn phase(&self, x: &PadicApprox) -> Result<ClosedValue> {
        Ok(ClosedValue::root_of_unity(epi_phase(x)?))
    }

    /// `sum_{x in kappa} e(sigma x^2 / p)` as a phase multiset; `p` odd.
    pub fn gauss_sum_g(&self, sigma: &RingElem) -> Result<ExpSum> {
        self.require_odd()?;
        gauss_sum(sigma)
    }

    /// `int_o e(sigma x^2) dx` for odd `p`.
    fn quad_homogeneous_odd(&self, sigma: &PadicApprox) -> Result<ClosedValue> {
        let t = self.nonzero(sigma)?;
        if t >= 0 {
            return Ok(self.one());
        }
        let scale = self.sqrt_q_pow(t);
        if t % 2 == 0 {
            return Ok(scale);
        }
        let chi = legendre_symbol(&sigma.unit_residue()?);
        Ok(self.epsilon_pow(3)?.mul(&scale).scale_int(chi as i64))
    }

    /// `int_o e(sigma x^2 + tau x) dx` for odd `p`.
    pub fn i_quad_nondyadic(&self, sigma: &PadicApprox, tau: &PadicApprox) -> Result<ClosedValue> {
        self.require_odd()?;
        let os = Some(self.nonzero(sigma)?);
        let ot = ord(tau)?;
        let t = min_ord(&[os, ot]).expect("sigma nonzero");
        if t >= 0 {
            return Ok(self.one());
        }
        if !le(os, ot) {
            return Ok(self.zero());
        }
        // complete the square: x -> x - tau / 2 sigma
        let shift = tau.try_mul(tau)?.div(&sigma.mul_int(4))?.neg();
        Ok(self.phase(&shift)?.mul(&self.quad_homogeneous_odd(sigma)?))
    }

    /// `int_{o^x} (x / p) e(sigma x) dx` for odd `p`.
    pub fn twisted_unit_integral(&self, sigma: &PadicApprox) -> Result<ClosedValue> {
        self.require_odd()?;
        if self.nonzero(sigma)? != -1 {
            return Ok(self.zero());
        }
        let chi = legendre_symbol(&sigma.unit_residue()?);
        Ok(self.epsilon_pow(3)?.mul(&self.sqrt_q_pow(-1)).scale_int(chi as i64))
    }

    /// `int_o e(sigma x^2) dx` for `p = 2`.
    fn quad_homogeneous_dyadic(&self, sigma: &PadicApprox) -> Result<ClosedValue> {
        let t = self.nonzero(sigma)?;
        if t >= 0 {
            return Ok(self.one());
        }
        if t == -1 {
            return Ok(self.zero());
        }
        let f = self.spec.f() as i64;
        let unit = sigma.unit_part()?;
        if unit.precision() < 3 {
            return Err(Error::PrecisionExhausted("the dyadic Gauss integral needs the unit modulo 8".into()));
        }
        let u8 = unit.reduce(3);
        let sign = if ((t + 1) * (f - 1)).rem_euclid(2) == 0 { 1 } else { -1 };
        let eta = if (t + 1).rem_euclid(2) == 0 { 1 } else { eta_of_ring(&u8) as i64 };
        let power = u8.pow((1u128 << self.spec.f()) - 1);
        let phase = ClosedValue::root_of_unity(phase_of_scaled(&power, 3));
        Ok(phase.mul(&self.sqrt_q_pow(t + 1)).scale_int(sign * eta))
    }

    /// `int_o e(sigma x^2 + tau x) dx` for `p = 2`.
    pub fn i_quad_dyadic(&self, sigma: &PadicApprox, tau: &PadicApprox) -> Result<ClosedValue> {
        self.require_dyadic()?;
        let s = self.nonzero(sigma)?;
        let ot = ord(tau)?;
        let t = min_ord(&[Some(s), ot]).expect("sigma nonzero");
        if t >= 0 {
            return Ok(self.one());
        }
        match ot {
            Some(o) if s > o => Ok(self.zero()),
            Some(o) if s == o => {
                if t < -1 {
                    return Ok(self.zero());
                }
                let x = sigma.mul_p_pow(1).sub(&tau.try_mul(tau)?.mul_p_pow(2))?;
                Ok(if in_ideal(&x, 1)? { self.one() } else { self.zero() })
            }
            _ => {
                let shift = tau.try_mul(tau)?.div(&sigma.mul_int(4))?.neg();
                Ok(self.phase(&shift)?.mul(&self.quad_homogeneous_dyadic(sigma)?))
            }
        }
    }

    /// `int_{o^2} e(sigma y1 y2 + tau1 y1 + tau2 y2)`.
    pub fn i_hyperbolic(&self, sigma: &PadicApprox, tau1: &PadicApprox, tau2: &PadicApprox) -> Result<ClosedValue> {
        let s = self.nonzero(sigma)?;
        let (o1, o2) = (ord(tau1)?, ord(tau2)?);
        let t = min_ord(&[Some(s), o1, o2]).expect("sigma nonzero");
        if t >= 0 {
            return Ok(self.one());
        }
        if !le(Some(s), min_ord(&[o1, o2])) {
            return Ok(self.zero());
        }
        let shift = tau1.try_mul(tau2)?.div(sigma)?.neg();
        Ok(self.phase(&shift)?.mul(&self.sqrt_q_pow(2 * t)))
    }

    /// `int_{o^2} e(sigma (z1^2 + z1 z2 + rho z2^2) + tau1 z1 + tau2 z2)` for `p = 2`.
    pub fn i_anisotropic(
        &self,
        sigma: &PadicApprox,
        tau1: &PadicApprox,
        tau2: &PadicApprox,
        rho: &PadicApprox,
    ) -> Result<ClosedValue> {
        self.require_dyadic()?;
        let s = self.nonzero(sigma)?;
        let (o1, o2) = (ord(tau1)?, ord(tau2)?);
        let t = min_ord(&[Some(s), o1, o2]).expect("sigma nonzero");
        if t >= 0 {
            return Ok(self.one());
        }
        if !le(Some(s), min_ord(&[o1, o2])) {
            return Ok(self.zero());
        }
        if ord(rho)? != Some(0) {
            return Err(Error::NonUnit("rho must be a unit".into()));
        }
        let tr_rho = rho.unit_residue()?.trace() as i64;
        let sign = if (tr_rho * t).rem_euclid(2) == 0 { 1 } else { -1 };
        let num = tau1.try_mul(tau2)?.sub(&rho.try_mul(&tau1.try_mul(tau1)?)?)?.sub(&tau2.try_mul(tau2)?)?;
        let den = rho.mul_int(4).sub(&PadicApprox::from_int(&self.spec, 1, rho.relative_precision().unwrap_or(1)))?;
        let shift = num.div(&den.try_mul(sigma)?)?;
        Ok(self.phase(&shift)?.mul(&self.sqrt_q_pow(2 * t)).scale_int(sign))
    }

    /// `int_{a + p} eta(s)^l e(s alpha + s^(2^f - 1) m / 8) ds` for `p = 2`,
    /// `a` a Teichmüller unit and `m in (1 + p) u p`.
    pub fn i_unit_shell(&self, a: &RingElem, alpha: &PadicApprox, m: &PadicApprox, ell: u32) -> Result<ClosedValue> {
        self.require_dyadic()?;
        let spec = &self.spec;
        if !a.is_unit() {
            return Err(Error::NonUnit("the shell centre must be a unit".into()));
        }
        let m_res = m.reduce_integral(1)?;
        let m_unit = !m_res.is_zero();
        if m_unit && m_res != RingElem::one(spec, 1) {
            return Err(Error::InvalidInput("m must lie in (1 + p) or p".into()));
        }
        let prec = alpha.relative_precision().unwrap_or(8).max(m.relative_precision().unwrap_or(8)).max(4);
        let a_pad = PadicApprox::from_integral(&a.at_precision(prec.max(a.precision())));
        let eight_alpha = alpha.mul_p_pow(3);
        let q32 = self.sqrt_q_pow(-3);
        let sign_f = if (spec.f() - 1) % 2 == 0 { 1 } else { -1 };
        match ell % 2 {
            0 => {
                let x = eight_alpha.try_mul(&a_pad)?.try_add(m)?;
                if !in_ideal(&x, 2)? {
                    return Ok(self.zero());
                }
                let phase = self.phase(&x.mul_p_pow(-3))?;
                Ok(phase.mul(&self.sqrt_q_pow(-2)))
            }
            _ => {
                if !in_ideal(&eight_alpha, 0)? {
                    return Ok(self.zero());
                }
                let ea = eight_alpha.reduce_integral(2)?;
                let alpha_digits = teichmuller_digits(&ea, 2);
                let alpha1 = PadicApprox::from_integral(&teichmuller_lift(&alpha_digits[1], prec));
                let m2 = m.reduce_integral(2)?;
                let m_digits = teichmuller_digits(&m2, 2);
                if m_unit {
                    if !in_ideal(&eight_alpha, 1)? {
                        return Ok(self.zero());
                    }
                    let eta = eta_char(m)? as i64;
                    let four_alpha = alpha.mul_p_pow(2);
                    let x = four_alpha.try_add(&m.try_mul(&alpha1)?)?.try_mul(&a_pad)?.mul_p_pow(-2);
                    Ok(self.phase(&x)?.mul(&q32).scale_int(sign_f * eta))
                } else {
                    // chi_{1 + p}(8 alpha a) gates the division by alpha_0
                    let prod = eight_alpha.try_mul(&a_pad)?.reduce_integral(1)?;
                    if prod != RingElem::one(spec, 1) {
                        return Ok(self.zero());
                    }
                    let one = PadicApprox::from_int(spec, 1, prec);
                    let eta = eta_char(&eight_alpha.try_mul(&one.try_add(m)?)?)? as i64;
                    let alpha0 = PadicApprox::from_integral(&teichmuller_lift(&alpha_digits[0], prec));
                    let m1 = PadicApprox::from_integral(&teichmuller_lift(&m_digits[1], prec));
                    let x = m1.try_mul(&alpha1)?.div(&alpha0.mul_int(2))?;
                    Ok(self.phase(&x)?.mul(&q32).scale_int(sign_f * eta))
                }
            }
        }
    }

    /// `sum_{r in o / p} e((sigma r^2 + tau r) / 2)` for `p = 2`.
    pub fn dyadic_quadratic_sum(&self, sigma: &RingElem, tau: &RingElem) -> Result<ExpSum> {
        self.require_dyadic()?;
        if !sigma.is_unit() {
            return Err(Error::NonUnit("sigma must be a unit".into()));
        }
        let k = sigma.precision().min(tau.precision());
        let (s, t) = (sigma.reduce(k), tau.reduce(k));
        let mut sum = ExpSum::new(2);
        for r in residue_field(&self.spec) {
            let r = r.lift(k);
            let v = &(&(&s * &r) * &r) + &(&t * &r);
            sum.add_term(phase_of_scaled(&v, 1), 1);
        }
        Ok(sum)
    }

    /// `q chi_p(sigma - tau^2)`, the closed value of [`Self::dyadic_quadratic_sum`].
    pub fn dyadic_quadratic_sum_closed(&self, sigma: &RingElem, tau: &RingElem) -> Result<ClosedValue> {
        self.require_dyadic()?;
        let k = sigma.precision().min(tau.precision());
        let x = &sigma.reduce(k) - &(&tau.reduce(k) * &tau.reduce(k));
        Ok(if x.residue().is_zero() { ClosedValue::from_int(2, self.spec.q() as i64) } else { self.zero() })
    }
}

fn gauss_sum(sigma: &RingElem) -> Result<ExpSum> {
    if !sigma.is_unit() {
        return Err(Error::NonUnit("the Gauss sum needs a unit".into()));
    }
    let spec = sigma.spec().clone();
    let s = sigma.residue();
    let mut sum = ExpSum::new(spec.p());
    for x in residue_field(&spec) {
        sum.add_term(phase_of_scaled(&(&(&s * &x) * &x), 1), 1);
    }
    Ok(sum)
}

/// The fourth root of unity `epsilon` with `G(1) = epsilon^3 sqrt(q)`.
pub fn epsilon_pi(spec: &Arc<FieldSpec>) -> Result<ClosedValue> {
    if spec.is_dyadic() {
        return Err(Error::InvalidField("epsilon is defined for odd p only".into()));
    }
    let p = spec.p();
    let (g, q) = if spec.q() <= DIRECT_EPSILON_LIMIT {
        (gauss_sum(&RingElem::one(spec, 1))?.numeric(), spec.q())
    } else {
        // lift from the prime field: G_f(1) = (-1)^(f - 1) G_1(1)^f
        let base = FieldSpec::rational(p)?;
        let g1 = gauss_sum(&RingElem::one(&base, 1))?.numeric();
        let f = spec.f() as i32;
        let sign = if (f - 1) % 2 == 0 { 1.0 } else { -1.0 };
        let unit = g1 / (p as f64).sqrt();
        (unit.powi(f) * sign * (spec.q() as f64).sqrt(), spec.q())
    };
    let root_q = (q as f64).sqrt();
    for j in 0..4 {
        let eps = ClosedValue::zeta8_pow(p, 2 * j);
        let cube = eps.mul(&eps).mul(&eps);
        let candidate: Complex64 = cube.numeric() * root_q;
        if (candidate - g).norm() <= 1e-6 * root_q.max(1.0) {
            return Ok(eps);
        }
    }
    Err(Error::InternalInconsistency(format!("no fourth root of unity normalizes G(1) = {g}")))
}

/// Phase helper shared with the density engine: `e(x)` as a closed value.
pub fn closed_phase(x: &PadicApprox) -> Result<ClosedValue> {
    Ok(ClosedValue::root_of_unity(epi_phase(x)?))
}

/// Phase of an exact `Phase` as a closed value.
pub fn closed_root(phase: Phase) -> ClosedValue {
    ClosedValue::root_of_unity(phase)
}
