//! Local densities `beta(n; Q)` from the reduced shape of `Q`: a finite sum of
//! closed-form terms indexed by the valuation `t` of the dual variable, plus a
//! geometric tail when the sum does not terminate.
mod dyadic;
mod nondyadic;

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::exact_values::{rational_string, ClosedValue};
use crate::quadratic_model::{constant_normalize, reduce_dyadic, reduce_nondyadic, QuadraticPolynomial};
use crate::residue_arith::{FieldSpec, PadicApprox};

pub use dyadic::{analyze_dyadic, beta_dyadic, beta_form_dyadic, DyadicTermData, SquareClass};
pub use nondyadic::{analyze_nondyadic, beta_form_nondyadic, beta_nondyadic, NonDyadicTermData};

/// How dyadic terms are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Literal case formulas, falling back to unit-shell sums where a formula divides by zero.
    CaseTable,
    /// Sums of unit-shell integrals; the reference path.
    #[default]
    LemmaSum,
    /// Both, failing on any disagreement.
    Both,
}

#[derive(Clone, Debug, Default)]
pub struct DensityOptions {
    pub mode: Mode,
    /// Treat a target that vanishes to working precision as exactly zero.
    pub assume_n_zero: bool,
    /// Fixed working precision; chosen automatically when `None`.
    pub precision: Option<u32>,
}

/// One summand `beta = 1 + sum_t term(t) + tail`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Term {
    pub t: i64,
    pub value: ClosedValue,
    /// Which formula produced the term.
    pub case: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tail {
    None,
    /// `sum_{t >= start} term(t)` where `term(t + 2) = ratio * term(t)`;
    /// `first_term = term(start) + term(start + 1)`.
    Geometric { start: i64, ratio: BigRational, first_term: ClosedValue, sum: BigRational, leading: [ClosedValue; 2] },
}

impl Serialize for Tail {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(None)?;
        match self {
            Tail::None => m.serialize_entry("kind", "none")?,
            Tail::Geometric { start, ratio, first_term, sum, .. } => {
                m.serialize_entry("kind", "geometric")?;
                m.serialize_entry("start", start)?;
                m.serialize_entry("ratio", &rational_string(ratio))?;
                m.serialize_entry("first_term", first_term)?;
                m.serialize_entry("sum", &rational_string(sum))?;
            }
        }
        m.end()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DensityResult {
    pub value: BigRational,
    pub terms: Vec<Term>,
    pub tail: Tail,
    pub precision_used: u32,
    /// Notes on resolved ambiguities met while evaluating.
    pub notes: Vec<String>,
}

impl Serialize for DensityResult {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(None)?;
        m.serialize_entry("beta", &rational_string(&self.value))?;
        m.serialize_entry("terms", &self.terms)?;
        m.serialize_entry("tail", &self.tail)?;
        m.serialize_entry("precision", &self.precision_used)?;
        m.serialize_entry("notes", &self.notes)?;
        m.end()
    }
}

impl DensityResult {
    /// `1 + sum_{t <= k} term(t)`, the density of solutions modulo `p^k`.
    pub fn partial_sum(&self, k: i64) -> Result<BigRational> {
        let mut terms: Vec<Term> = self.terms.iter().filter(|t| t.t <= k).cloned().collect();
        if let Tail::Geometric { start, ratio, leading, .. } = &self.tail {
            let mut cur = leading.clone();
            for t in *start..=k {
                let j = ((t - start) % 2) as usize;
                terms.push(Term { t, value: cur[j].clone(), case: "tail".into() });
                cur[j] = cur[j].scale(ratio);
            }
        }
        let base = self.terms.first().map(|t| t.value.p()).or(match &self.tail {
            Tail::Geometric { first_term, .. } => Some(first_term.p()),
            Tail::None => None,
        });
        match base {
            None => Ok(BigRational::one()),
            Some(p) => {
                let mut total = ClosedValue::one(p);
                for term in &terms {
                    total = total.try_add(&term.value).ok_or_else(|| Error::InternalInconsistency("unreduced root of unity".into()))?;
                }
                total.as_rational().ok_or_else(|| Error::InternalInconsistency(format!("partial sum at {k} is not rational")))
            }
        }
    }
}

/// A valuation that is either exact or only bounded below; exact zero is
/// `AtLeast(i64::MAX)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Bound {
    Exact(i64),
    AtLeast(i64),
}

impl Bound {
    pub(crate) fn of(x: &PadicApprox) -> Bound {
        if x.is_exact_zero() {
            return Bound::AtLeast(i64::MAX);
        }
        match x.valuation() {
            Ok(Some(v)) => Bound::Exact(v),
            _ => Bound::AtLeast(x.valuation_lower_bound().unwrap_or(i64::MAX)),
        }
    }

    /// `min` of the valuations of `xs`.
    pub(crate) fn min_of(xs: &[&PadicApprox]) -> Result<Bound> {
        let mut known = i64::MAX;
        let mut lower = i64::MAX;
        for x in xs {
            match Bound::of(x) {
                Bound::Exact(v) => known = known.min(v),
                Bound::AtLeast(v) => lower = lower.min(v),
            }
        }
        if known == i64::MAX {
            return Ok(Bound::AtLeast(lower));
        }
        // an undetermined element cannot undercut `known`
        if lower >= known {
            Ok(Bound::Exact(known))
        } else {
            Ok(Bound::AtLeast(lower))
        }
    }

    /// Whether the valuation is `>= v`; `None` when undecided.
    pub(crate) fn ge(self, v: i64) -> Option<bool> {
        match self {
            Bound::Exact(w) => Some(w >= v),
            Bound::AtLeast(w) if w >= v => Some(true),
            Bound::AtLeast(_) => None,
        }
    }
}

pub(crate) fn undecided(what: &str) -> Error {
    Error::PrecisionExhausted(format!("{what} is not determined at working precision"))
}

/// The target after completing squares: either known with `ord = t_n`,
/// treated as zero, or zero exactly.
#[derive(Clone, Debug)]
pub(crate) struct Target {
    pub value: PadicApprox,
    /// `None` = infinite.
    pub t_n: Option<i64>,
}

/// Decides `t_n` for the completed target, treating a value that vanishes
/// beyond every visited `t` (or by request) as zero.
pub(crate) fn decide_target(nfrak: PadicApprox, t_d: Option<i64>, slack: i64, assume_zero: bool, notes: &mut Vec<String>) -> Result<Target> {
    let spec = nfrak.spec().clone();
    if nfrak.is_exact_zero() {
        return Ok(Target { value: nfrak, t_n: None });
    }
    if let Ok(Some(v)) = nfrak.valuation() {
        return Ok(Target { value: nfrak, t_n: Some(v) });
    }
    let abs = nfrak.valuation_lower_bound().unwrap_or(i64::MAX);
    if assume_zero {
        notes.push(format!("target vanishes modulo p^{abs}; taken as exactly zero by request"));
        return Ok(Target { value: PadicApprox::zero(&spec), t_n: None });
    }
    if let Some(td) = t_d {
        if abs >= td + slack {
            notes.push(format!("target vanishes modulo p^{abs}, beyond every visited t; its exact valuation is irrelevant"));
            return Ok(Target { value: PadicApprox::zero(&spec), t_n: None });
        }
    }
    Err(Error::PrecisionExhausted(format!(
        "the completed target vanishes modulo p^{abs}; exact vanishing is undecidable (pass assume_n_zero to treat it as zero)"
    )))
}

/// `1 + sum terms + tail`, asserted rational and non-negative.
pub(crate) fn assemble(p: u64, terms: &[Term], tail: &Tail) -> Result<BigRational> {
    let mut total = ClosedValue::one(p);
    for term in terms {
        total = total.try_add(&term.value).ok_or_else(|| {
            Error::InternalInconsistency(format!("term at t = {} carries an unreduced root of unity", term.t))
        })?;
    }
    let mut value = total.as_rational().ok_or_else(|| {
        Error::InternalInconsistency(format!("irrational or imaginary parts do not cancel: {total:?}"))
    })?;
    if let Tail::Geometric { sum, .. } = tail {
        value += sum;
    }
    if value.is_negative() {
        return Err(Error::InternalInconsistency(format!("negative density {value}")));
    }
    Ok(value)
}

/// Evaluates `term` on `ts` in parallel, keeping the order of `ts`.
pub(crate) fn eval_terms<F>(ts: Vec<i64>, term: F) -> Result<Vec<Term>>
where
    F: Fn(i64) -> Result<Option<Term>> + Sync,
{
    let out: Vec<Result<Option<Term>>> = ts.into_par_iter().map(&term).collect();
    let mut terms = Vec::new();
    for r in out {
        if let Some(t) = r? {
            terms.push(t);
        }
    }
    Ok(terms)
}

/// Sums `term(t)` over `t >= start` given `term(t + 2) = q^ratio_exp * term(t)`,
/// checking the recurrence on one more period.
pub(crate) fn geometric_tail<F>(spec: &Arc<FieldSpec>, start: i64, ratio_exp: i64, term: F) -> Result<Tail>
where
    F: Fn(i64) -> Result<ClosedValue>,
{
    let ratio = BigRational::from_integer(BigInt::from(spec.q())).pow(ratio_exp as i32);
    let first: Vec<ClosedValue> = (0..2).map(|j| term(start + j)).collect::<Result<_>>()?;
    for (j, f) in first.iter().enumerate() {
        let next = term(start + j as i64 + 2)?;
        if next != f.scale(&ratio) {
            return Err(Error::InternalInconsistency(format!("tail terms at t = {} are not geometric", start + j as i64)));
        }
    }
    let first_term = first[0]
        .try_add(&first[1])
        .ok_or_else(|| Error::InternalInconsistency("tail terms carry different roots of unity".into()))?;
    if first[0].is_zero() && first[1].is_zero() {
        return Ok(Tail::Geometric { start, ratio, first_term, sum: BigRational::zero(), leading: [first[0].clone(), first[1].clone()] });
    }
    if ratio >= BigRational::one() {
        return Err(Error::NonConvergent(format!(
            "terms grow by a factor {} every two steps from t = {start}",
            rational_string(&ratio)
        )));
    }
    let total = first_term.scale(&(BigRational::one() / (BigRational::one() - &ratio)));
    let sum = total.as_rational().ok_or_else(|| {
        Error::InternalInconsistency(format!("tail sum is not rational: {total:?}"))
    })?;
    Ok(Tail::Geometric { start, ratio, first_term, sum, leading: [first[0].clone(), first[1].clone()] })
}

/// `beta(n; Q)` through normalization, reduction and the closed formulas.
///
/// The working precision starts at `max(6, t_scan + 5)` where `t_scan`
/// bounds the visited `t`, and is raised once if digits run out.
pub fn beta(q: &QuadraticPolynomial, n: &PadicApprox, opts: &DensityOptions) -> Result<DensityResult> {
    q.check_integral()?;
    let cap = q.precision();
    if let Some(k) = opts.precision {
        return beta_at(q, n, opts, k.min(cap));
    }
    let coeff_ord = q
        .quad_entries()
        .map(|(_, _, c)| c)
        .chain(q.lin_all())
        .chain(std::iter::once(n))
        .filter_map(|c| c.valuation().ok().flatten())
        .max()
        .unwrap_or(0)
        .max(0);
    let mut k = (6 + coeff_ord).min(cap as i64) as u32;
    let mut raised = false;
    loop {
        match beta_at(q, n, opts, k) {
            Ok(res) => {
                let scan = scan_depth(&res);
                let want = (scan + 5).max(6).min(cap as i64) as u32;
                if want > k && !raised {
                    raised = true;
                    k = want;
                    continue;
                }
                return Ok(res);
            }
            Err(Error::PrecisionExhausted(msg)) => {
                if raised || k >= cap {
                    return Err(Error::PrecisionExhausted(msg));
                }
                raised = true;
                k = (2 * k).min(cap);
            }
            Err(e) => return Err(e),
        }
    }
}

fn scan_depth(res: &DensityResult) -> i64 {
    let last = res.terms.iter().map(|t| t.t).max().unwrap_or(0);
    match &res.tail {
        Tail::Geometric { start, .. } => last.max(start + 3),
        Tail::None => last,
    }
}

/// One pass of the pipeline at working precision `k`.
pub fn beta_at(q: &QuadraticPolynomial, n: &PadicApprox, opts: &DensityOptions, k: u32) -> Result<DensityResult> {
    let spec = q.spec().clone();
    let q = truncate(q, k)?;
    let n = n.truncate(k);
    if !n.in_ideal(0).unwrap_or(true) {
        return Ok(DensityResult {
            value: BigRational::zero(),
            terms: Vec::new(),
            tail: Tail::None,
            precision_used: k,
            notes: vec!["target is not integral; no solutions".into()],
        });
    }
    let (q, n) = constant_normalize(&q, &n)?;
    let mut res = if spec.is_dyadic() {
        let red = reduce_dyadic(&q)?;
        let data = analyze_dyadic(&red, &n, opts.assume_n_zero)?;
        beta_dyadic(&data, opts.mode)?
    } else {
        let red = reduce_nondyadic(&q)?;
        let data = analyze_nondyadic(&red, &n, opts.assume_n_zero)?;
        beta_nondyadic(&data)?
    };
    res.precision_used = k;
    Ok(res)
}

fn truncate(q: &QuadraticPolynomial, k: u32) -> Result<QuadraticPolynomial> {
    let mut out = QuadraticPolynomial::new(q.spec(), q.r(), k)?;
    for (i, j, c) in q.quad_entries() {
        out.set_quad(i, j, c.truncate(k))?;
    }
    for (i, c) in q.lin_all().iter().enumerate() {
        out.set_lin(i, c.truncate(k))?;
    }
    out.set_const(q.constant().truncate(k))?;
    Ok(out)
}
