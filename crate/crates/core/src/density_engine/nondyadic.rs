use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;

use super::{assemble, decide_target, eval_terms, geometric_tail, undecided, Bound, DensityResult, Tail, Term};
use crate::error::{Error, Result};
use crate::exact_values::ClosedValue;
use crate::gauss_engine::epsilon_pi;
use crate::quadratic_model::ReducedNonDyadic;
use crate::residue_arith::{legendre_symbol, FieldSpec, PadicApprox, RingElem};

/// Everything the odd-`p` density formula reads off a diagonal polynomial
/// `sum b_i x_i^2 + c_i x_i` and a target `n`.
#[derive(Clone, Debug)]
pub struct NonDyadicTermData {
    pub spec: Arc<FieldSpec>,
    /// `t_i = min(ord b_i, ord c_i)`.
    pub t: Vec<i64>,
    /// Residues of the unit parts `u_i` of `b_i`.
    pub units: Vec<RingElem>,
    /// Indices with `ord b_i > ord c_i`.
    pub d_set: Vec<usize>,
    /// Indices with `ord b_i <= ord c_i`.
    pub n_set: Vec<usize>,
    /// `min t_i` over `d_set`; `None` = infinite.
    pub t_d: Option<i64>,
    /// Target after completing the squares of `n_set`.
    pub nfrak: PadicApprox,
    /// `ord nfrak`; `None` = infinite.
    pub t_n: Option<i64>,
    /// Residue of the unit part of `nfrak`.
    pub u_n: Option<RingElem>,
    pub epsilon: ClosedValue,
    pub notes: Vec<String>,
}

fn tmin(a: Option<i64>, b: Option<i64>) -> Option<i64> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, None) => a,
        (None, b) => b,
    }
}

/// Classifies each diagonal term and completes the squares of the target.
pub fn analyze_nondyadic(red: &ReducedNonDyadic, n: &PadicApprox, assume_n_zero: bool) -> Result<NonDyadicTermData> {
    let spec = red.spec().clone();
    if spec.is_dyadic() {
        return Err(Error::InvalidField("the odd-p formula needs an odd prime".into()));
    }
    let mut data = NonDyadicTermData {
        spec: spec.clone(),
        t: Vec::new(),
        units: Vec::new(),
        d_set: Vec::new(),
        n_set: Vec::new(),
        t_d: None,
        nfrak: n.clone(),
        t_n: None,
        u_n: None,
        epsilon: epsilon_pi(&spec)?,
        notes: Vec::new(),
    };
    let mut nfrak = n.clone();
    for (i, (b, c)) in red.terms.iter().enumerate() {
        let ob = b.valuation()?.ok_or_else(|| Error::Degenerate("zero diagonal coefficient".into()))?;
        data.units.push(b.unit_residue()?);
        match Bound::of(c) {
            Bound::Exact(v) if v < ob => {
                data.t.push(v);
                data.d_set.push(i);
                data.t_d = tmin(data.t_d, Some(v));
            }
            bound => {
                if bound.ge(ob) != Some(true) {
                    return Err(undecided("the valuation of a linear coefficient"));
                }
                data.t.push(ob);
                data.n_set.push(i);
                nfrak = nfrak.try_add(&c.try_mul(c)?.div(&b.mul_int(4))?)?;
            }
        }
    }
    let target = decide_target(nfrak, data.t_d, 0, assume_n_zero, &mut data.notes)?;
    data.t_n = target.t_n;
    if target.t_n.is_some() {
        data.u_n = Some(target.value.unit_residue()?);
    }
    data.nfrak = target.value;
    Ok(data)
}

impl NonDyadicTermData {
    fn p(&self) -> u64 {
        self.spec.p()
    }

    /// Indices of `n_set` with `t_i - t < 0` odd.
    pub fn ell_set(&self, t: i64) -> Vec<usize> {
        self.n_set.iter().copied().filter(|&i| self.t[i] < t && (t - self.t[i]) % 2 == 1).collect()
    }

    /// `2 tau(t)`.
    pub fn tau2(&self, t: i64) -> i64 {
        2 * t + self.n_set.iter().filter(|&&i| self.t[i] < t).map(|&i| self.t[i] - t).sum::<i64>()
    }

    fn eps_pow(&self, e: i64) -> ClosedValue {
        let mut acc = ClosedValue::one(self.p());
        for _ in 0..e.rem_euclid(4) {
            acc = acc.mul(&self.epsilon);
        }
        acc
    }

    /// `epsilon^(3 l) prod (u_i / p)` over the odd set.
    pub fn delta(&self, t: i64) -> ClosedValue {
        let ls = self.ell_set(t);
        let sign: i64 = ls.iter().map(|&i| legendre_symbol(&self.units[i]) as i64).product();
        self.eps_pow(3 * ls.len() as i64).scale_int(sign)
    }

    /// `(1 - 1/q) delta(t) q^tau(t)` for even `l(t)`, else zero.
    fn main_term(&self, t: i64) -> ClosedValue {
        if self.ell_set(t).len() % 2 == 1 {
            return ClosedValue::zero(self.p());
        }
        let q = BigRational::from_integer(BigInt::from(self.spec.q()));
        let factor = BigRational::one() - BigRational::one() / q;
        self.delta(t).mul(&ClosedValue::sqrt_q_pow(self.p(), self.spec.f(), self.tau2(t))).scale(&factor)
    }

    /// The boundary coefficient at `t = t_n + 1`, given `t_n < t_d`.
    fn omega(&self, odd: bool) -> Result<ClosedValue> {
        let (p, f) = (self.p(), self.spec.f());
        if !odd {
            return Ok(ClosedValue::sqrt_q_pow(p, f, -2).neg());
        }
        let u_n = self.u_n.as_ref().ok_or_else(|| Error::InternalInconsistency("boundary term without a target unit".into()))?;
        Ok(self.epsilon.mul(&ClosedValue::sqrt_q_pow(p, f, -1)).scale_int(legendre_symbol(u_n) as i64))
    }

    fn boundary_term(&self, t_n: i64, remark: bool) -> Result<Term> {
        let t = t_n + 1;
        let odd = self.ell_set(t).len() % 2 == 1;
        let omega = self.omega(odd)?;
        let value = omega.mul(&self.delta(t)).mul(&ClosedValue::sqrt_q_pow(self.p(), self.spec.f(), self.tau2(t)));
        let tag = match (remark, odd) {
            (false, false) => "omega_even",
            (false, true) => "omega_odd",
            (true, false) => "form_omega_even",
            (true, true) => "form_omega_odd",
        };
        Ok(Term { t, value, case: tag.into() })
    }

    /// Threshold past which `l(t)` and `tau(t + 2) - tau(t)` are periodic.
    fn tail_start(&self) -> i64 {
        (2 + self.n_set.iter().map(|&i| self.t[i] + 1).max().unwrap_or(0)).max(1)
    }

    fn evaluate(&self, remark: bool) -> Result<DensityResult> {
        let upper = tmin(self.t_d, self.t_n);
        let (ts, tail_start) = match upper {
            Some(u) => ((1..=u).collect::<Vec<_>>(), None),
            None => {
                let s = self.tail_start();
                ((1..s).collect(), Some(s))
            }
        };
        let main_tag = if remark { "form_main" } else { "main" };
        let mut terms = eval_terms(ts, |t| {
            let v = self.main_term(t);
            Ok((!v.is_zero()).then(|| Term { t, value: v, case: main_tag.into() }))
        })?;
        if let Some(t_n) = self.t_n {
            // the remark drops the comparison with t_d, which is infinite for forms
            if remark || self.t_d.map_or(true, |td| t_n < td) {
                let term = self.boundary_term(t_n, remark)?;
                if !term.value.is_zero() {
                    terms.push(term);
                }
            }
        }
        let tail = match tail_start {
            None => Tail::None,
            Some(s) => {
                let ratio = (self.tau2(s + 2) - self.tau2(s)) / 2;
                geometric_tail(&self.spec, s, ratio, |t| Ok(self.main_term(t)))?
            }
        };
        let value = assemble(self.p(), &terms, &tail)?;
        Ok(DensityResult { value, terms, tail, precision_used: 0, notes: self.notes.clone() })
    }
}

/// `1 + (1 - 1/q) sum delta q^tau + omega delta q^tau` at `t_n + 1`.
pub fn beta_nondyadic(data: &NonDyadicTermData) -> Result<DensityResult> {
    data.evaluate(false)
}

/// Shortcut for forms (no linear part): no completion, no `d_set`, and the
/// boundary coefficient depends only on the parity of `l(t_n + 1)`.
pub fn beta_form_nondyadic(red: &ReducedNonDyadic, n: &PadicApprox, assume_n_zero: bool) -> Result<DensityResult> {
    let spec = red.spec().clone();
    if red.terms.iter().any(|(_, c)| !c.is_exact_zero()) {
        return Err(Error::InvalidInput("the form shortcut needs all linear coefficients zero".into()));
    }
    let mut notes = Vec::new();
    let target = decide_target(n.clone(), None, 0, assume_n_zero, &mut notes)?;
    let t = red.terms.iter().map(|(b, _)| b.ord()).collect::<Result<Vec<_>>>()?;
    let units = red.terms.iter().map(|(b, _)| b.unit_residue()).collect::<Result<Vec<_>>>()?;
    let data = NonDyadicTermData {
        n_set: (0..t.len()).collect(),
        t,
        units,
        d_set: Vec::new(),
        t_d: None,
        u_n: match target.t_n {
            Some(_) => Some(target.value.unit_residue()?),
            None => None,
        },
        t_n: target.t_n,
        nfrak: target.value,
        epsilon: epsilon_pi(&spec)?,
        spec,
        notes,
    };
    data.evaluate(true)
}
