use std::sync::Arc;

use super::{assemble, decide_target, eval_terms, geometric_tail, undecided, Bound, DensityResult, Mode, Tail, Term};
use crate::error::{Error, Result};
use crate::exact_values::ClosedValue;
use crate::gauss_engine::{closed_phase, GaussEngine};
use crate::quadratic_model::ReducedDyadic;
use crate::residue_arith::{
    eta_char, eta_of_ring, teichmuller_digits, teichmuller_lift, teichmuller_units, FieldSpec, PadicApprox, RingElem,
};

/// Relation between `ord b_i` and `ord c_i` for a square term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SquareClass {
    /// `ord b > ord c`.
    D,
    /// `ord b = ord c`.
    E,
    /// `ord b < ord c`.
    N,
}

#[derive(Clone, Debug)]
pub struct SquareData {
    pub class: SquareClass,
    /// `min(ord b, ord c)`.
    pub t: i64,
    /// Unit part of `b`.
    pub unit: RingElem,
    /// Residue of the unit part of `c` (classes D and E only).
    pub c_unit: Option<RingElem>,
}

/// A hyperbolic or anisotropic plane: `t = min(ord b, ord c_1, ord c_2)` and
/// whether `ord b` attains it.
#[derive(Clone, Copy, Debug)]
pub struct PlaneData {
    pub t: i64,
    pub in_n: bool,
}

/// Everything the `p = 2` density formula reads off a reduced polynomial.
#[derive(Clone, Debug)]
pub struct DyadicTermData {
    pub spec: Arc<FieldSpec>,
    pub squares: Vec<SquareData>,
    pub hyperbolic: Vec<PlaneData>,
    pub anisotropic: Vec<PlaneData>,
    /// Absolute trace of `rho`, reduced mod 2.
    pub tr_rho: u64,
    /// `None` = infinite.
    pub t_d: Option<i64>,
    pub nfrak: PadicApprox,
    pub t_n: Option<i64>,
    /// Teichmüller units `U` at working precision.
    pub roots: Vec<RingElem>,
    /// Working precision for lifted digits.
    pub precision: u32,
    pub notes: Vec<String>,
}

fn tmin(a: Option<i64>, b: Option<i64>) -> Option<i64> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, None) => a,
        (None, b) => b,
    }
}

fn plane(b: &PadicApprox, c1: &PadicApprox, c2: &PadicApprox) -> Result<PlaneData> {
    let ob = b.valuation()?.ok_or_else(|| Error::Degenerate("zero plane coefficient".into()))?;
    match Bound::min_of(&[c1, c2])? {
        Bound::Exact(v) if v < ob => Ok(PlaneData { t: v, in_n: false }),
        bound => match bound.ge(ob) {
            Some(true) => Ok(PlaneData { t: ob, in_n: true }),
            _ => Err(undecided("the valuation of a linear coefficient")),
        },
    }
}

/// Classifies the terms of `red` and completes squares and planes of the target.
pub fn analyze_dyadic(red: &ReducedDyadic, n: &PadicApprox, assume_n_zero: bool) -> Result<DyadicTermData> {
    let spec = red.spec().clone();
    if !spec.is_dyadic() {
        return Err(Error::InvalidField("the dyadic formula needs p = 2".into()));
    }
    let mut nfrak = n.clone();
    let mut t_d = None;
    let mut squares = Vec::new();
    for (b, c) in &red.squares {
        let ob = b.valuation()?.ok_or_else(|| Error::Degenerate("zero diagonal coefficient".into()))?;
        let unit = b.unit_part()?.clone();
        let sq = match Bound::of(c) {
            Bound::Exact(v) if v < ob => SquareData { class: SquareClass::D, t: v, unit, c_unit: Some(c.unit_residue()?) },
            Bound::Exact(v) if v == ob => SquareData { class: SquareClass::E, t: ob, unit, c_unit: Some(c.unit_residue()?) },
            bound => {
                if bound.ge(ob + 1) != Some(true) {
                    return Err(undecided("the valuation of a linear coefficient"));
                }
                nfrak = nfrak.try_add(&c.try_mul(c)?.div(&b.mul_int(4))?)?;
                SquareData { class: SquareClass::N, t: ob, unit, c_unit: None }
            }
        };
        match sq.class {
            SquareClass::D => t_d = tmin(t_d, Some(sq.t)),
            SquareClass::E => t_d = tmin(t_d, Some(sq.t + 1)),
            SquareClass::N => {}
        }
        squares.push(sq);
    }
    let mut hyperbolic = Vec::new();
    for (b, c1, c2) in &red.hyperbolic {
        let pd = plane(b, c1, c2)?;
        if pd.in_n {
            nfrak = nfrak.try_add(&c1.try_mul(c2)?.div(b)?)?;
        } else {
            t_d = tmin(t_d, Some(pd.t));
        }
        hyperbolic.push(pd);
    }
    let rho = &red.rho;
    let prec = rho.relative_precision().unwrap_or(1);
    let one = PadicApprox::from_int(&spec, 1, prec);
    let four_rho_minus_one = rho.mul_int(4).sub(&one)?;
    let mut anisotropic = Vec::new();
    for (b, c1, c2) in &red.anisotropic {
        let pd = plane(b, c1, c2)?;
        if pd.in_n {
            let num = rho.try_mul(&c1.try_mul(c1)?)?.try_add(&c2.try_mul(c2)?)?.sub(&c1.try_mul(c2)?)?;
            nfrak = nfrak.try_add(&num.div(&four_rho_minus_one.try_mul(b)?)?)?;
        } else {
            t_d = tmin(t_d, Some(pd.t));
        }
        anisotropic.push(pd);
    }
    let mut notes = Vec::new();
    let target = decide_target(nfrak, t_d, 0, assume_n_zero, &mut notes)?;
    let precision = squares.iter().map(|s| s.unit.precision()).chain(std::iter::once(prec)).min().unwrap_or(prec).max(3);
    Ok(DyadicTermData {
        roots: teichmuller_units(&spec, precision),
        tr_rho: rho.unit_residue()?.trace() % 2,
        spec,
        squares,
        hyperbolic,
        anisotropic,
        t_d,
        nfrak: target.value,
        t_n: target.t_n,
        precision,
        notes,
    })
}

/// Where the unit-shell sum and the case formulas disagree, or a formula
/// divides by zero.
enum CaseValue {
    Defined(ClosedValue),
    Undefined,
}

impl DyadicTermData {
    fn p(&self) -> u64 {
        2
    }

    fn f(&self) -> usize {
        self.spec.f()
    }

    fn n_squares(&self) -> impl Iterator<Item = &SquareData> {
        self.squares.iter().filter(|s| s.class == SquareClass::N)
    }

    /// Square indices of class N with `t_i - t + 1 < 0` odd.
    pub fn ell(&self, t: i64) -> usize {
        self.n_squares().filter(|s| s.t + 1 < t && (t - s.t - 1) % 2 == 1).count()
    }

    /// `2 tau(t)`.
    pub fn tau2(&self, t: i64) -> i64 {
        let sq: i64 = self.n_squares().filter(|s| s.t + 1 < t).map(|s| s.t - t + 1).sum();
        let planes: i64 = self
            .hyperbolic
            .iter()
            .chain(&self.anisotropic)
            .filter(|pd| pd.in_n && pd.t < t)
            .map(|pd| pd.t - t)
            .sum();
        2 * t + sq + 2 * planes
    }

    /// The sign `delta(t)`.
    pub fn delta(&self, t: i64) -> i64 {
        let mut sign = 1;
        for s in self.n_squares().filter(|s| s.t + 1 < t && (t - s.t - 1) % 2 == 1) {
            if self.f() % 2 == 0 {
                sign = -sign;
            }
            sign *= eta_of_ring(&s.unit.reduce(3)) as i64;
        }
        let odd_planes = self.anisotropic.iter().filter(|pd| pd.in_n && pd.t < t && (t - pd.t) % 2 == 1).count() as u64;
        if (self.tr_rho * odd_planes) % 2 == 1 {
            sign = -sign;
        }
        sign
    }

    /// Whether `t = t_i + 1` for a class-N square, where its integral vanishes.
    pub fn skipped(&self, t: i64) -> bool {
        self.n_squares().any(|s| s.t + 1 == t)
    }

    /// Units `s` of `U` allowed by the class-E squares with `t_i + 1 = t`:
    /// `s == (b_i / p^t_i) / (c_i / p^t_i)^2 (mod p)`.
    pub fn unit_set(&self, t: i64) -> Vec<RingElem> {
        let conds: Vec<RingElem> = self
            .squares
            .iter()
            .filter(|s| s.class == SquareClass::E && s.t + 1 == t)
            .map(|s| {
                let c = s.c_unit.as_ref().expect("class E carries c");
                &s.unit.residue() * &(c * c).inv().expect("unit")
            })
            .collect();
        self.roots.iter().filter(|u| conds.iter().all(|c| u.residue() == *c)).cloned().collect()
    }

    /// The constant-free reading `c_i / p^(t-1) == u b_i^2 / p^(2t-2) (mod p)`,
    /// kept to document its disagreement with the brute-force counts.
    #[cfg(test)]
    pub(crate) fn unit_set_literal(&self, t: i64) -> Vec<RingElem> {
        let conds: Vec<RingElem> = self
            .squares
            .iter()
            .filter(|s| s.class == SquareClass::E && s.t + 1 == t)
            .map(|s| {
                let b = s.unit.residue();
                s.c_unit.as_ref().expect("class E carries c") * &(&b * &b).inv().expect("unit")
            })
            .collect();
        self.roots.iter().filter(|u| conds.iter().all(|c| u.residue() == *c)).cloned().collect()
    }

    /// `sum u_i^(2^f - 1)` over class-N squares with `t_i + 1 < t`.
    pub fn m(&self, t: i64) -> Result<PadicApprox> {
        let e = (1u128 << self.f()) - 1;
        let mut acc = PadicApprox::zero(&self.spec);
        for s in self.n_squares().filter(|s| s.t + 1 < t) {
            acc = acc.try_add(&PadicApprox::from_integral(&s.unit.pow(e)))?;
        }
        Ok(acc)
    }

    fn lift_digit(&self, d: &RingElem) -> PadicApprox {
        if d.residue().is_zero() {
            return PadicApprox::zero(&self.spec);
        }
        PadicApprox::from_integral(&teichmuller_lift(&d.residue(), self.precision))
    }

    /// Teichmüller digits `(d_0, d_1)` of an integral `x` modulo `p^2`.
    fn digits(&self, x: &PadicApprox) -> Result<(PadicApprox, PadicApprox)> {
        let d = teichmuller_digits(&x.reduce_integral(2)?, 2);
        Ok((self.lift_digit(&d[0]), self.lift_digit(&d[1])))
    }

    fn q_pow(&self, e: i64) -> ClosedValue {
        ClosedValue::sqrt_q_pow(2, self.f(), e)
    }

    fn sign_f(&self) -> i64 {
        if self.f() % 2 == 1 {
            1
        } else {
            -1
        }
    }

    fn chi(x: &PadicApprox, j: i64) -> Result<bool> {
        x.in_ideal(j)
    }

    /// `q sum_{a in U(t)} I_a(-nfrak / p^t, m(t), l(t))`.
    fn omega_lemma(&self, eng: &GaussEngine, t: i64) -> Result<ClosedValue> {
        let alpha = self.nfrak.mul_p_pow(-t).neg();
        let m = self.m(t)?;
        let ell = (self.ell(t) % 2) as u32;
        let mut acc = ClosedValue::zero(2);
        for a in self.unit_set(t) {
            let v = eng.i_unit_shell(&a, &alpha, &m, ell)?;
            acc = acc
                .try_add(&v)
                .ok_or_else(|| Error::InternalInconsistency("unit-shell values carry different roots of unity".into()))?;
        }
        Ok(acc.mul(&self.q_pow(2)))
    }

    /// The eight literal cases. Returns every applicable case with its value.
    fn omega_cases(&self, t: i64) -> Result<Vec<(u8, CaseValue)>> {
        let us = self.unit_set(t);
        if us.is_empty() {
            return Ok(vec![(1, CaseValue::Defined(ClosedValue::zero(2)))]);
        }
        let full = us.len() == self.roots.len();
        let single = us.len() == 1;
        let even = self.ell(t) % 2 == 0;
        let m = self.m(t)?;
        let m_unit = !Self::chi(&m, 1)?;
        let nf = &self.nfrak;
        // -8 nfrak / p^t, integral since t <= t_n + 3
        let y = nf.mul_p_pow(3 - t).neg();
        let (n0, n1) = self.digits(&y)?;
        let (_, m1) = self.digits(&m)?;
        let zero = || CaseValue::Defined(ClosedValue::zero(2));
        let n_over = nf.mul_p_pow(-t);
        let mut out = Vec::new();
        if even {
            if single {
                let u = PadicApprox::from_integral(&us[0]);
                let x = m.sub(&n_over.try_mul(&u)?.mul_p_pow(3))?;
                out.push((
                    2,
                    if Self::chi(&x, 2)? { CaseValue::Defined(closed_phase(&x.mul_p_pow(-3))?) } else { zero() },
                ));
            }
            if full && m_unit {
                let x = n0.try_mul(&m)?.try_add(&y)?;
                let v = if !Self::chi(&x, 2)? {
                    zero()
                } else if n0.is_exact_zero() {
                    CaseValue::Undefined
                } else {
                    CaseValue::Defined(closed_phase(&m.mul_p_pow(-3).sub(&n_over.div(&n0)?)?)?)
                };
                out.push((3, v));
            }
            if full && !m_unit {
                let below = self.t_n.map_or(true, |tn| t <= tn + 1);
                if below {
                    let v = if Self::chi(&m, 2)? {
                        let inner = if Self::chi(nf, t)? { ClosedValue::from_int(2, self.spec.q() as i64 - 1) } else { ClosedValue::from_int(2, -1) };
                        closed_phase(&m.mul_p_pow(-3))?.mul(&inner)
                    } else {
                        ClosedValue::zero(2)
                    };
                    out.push((4, CaseValue::Defined(v)));
                } else {
                    let v = if m.is_exact_zero() {
                        CaseValue::Undefined
                    } else {
                        let z = nf.div(&m)?;
                        if z.valuation()? != Some(t - 3) {
                            zero()
                        } else if n1.is_exact_zero() {
                            CaseValue::Undefined
                        } else {
                            let ph = m.mul_p_pow(-3).sub(&m1.try_mul(&n_over)?.div(&n1)?)?;
                            CaseValue::Defined(closed_phase(&ph)?)
                        }
                    };
                    out.push((5, v));
                }
            }
        } else if m_unit {
            let pre = |inner: ClosedValue| -> Result<ClosedValue> {
                if !Self::chi(nf, t - 2)? {
                    return Ok(ClosedValue::zero(2));
                }
                Ok(inner.mul(&self.q_pow(-1)).scale_int(self.sign_f() * eta_char(&m)? as i64))
            };
            if single {
                let u = PadicApprox::from_integral(&us[0]);
                let ph = n1.try_mul(&u)?.try_mul(&m)?.mul_p_pow(-2).sub(&u.try_mul(&n_over)?)?;
                out.push((6, CaseValue::Defined(pre(closed_phase(&ph)?)?)));
            }
            if full {
                let x = n1.try_mul(&m)?.sub(&n_over.mul_p_pow(2))?;
                let inner = if Self::chi(&x, 2)? { self.spec.q() as i64 - 1 } else { -1 };
                out.push((7, CaseValue::Defined(pre(ClosedValue::from_int(2, inner))?)));
            }
        } else {
            let hit = !n0.is_exact_zero() && {
                let inv = n0.inv()?.unit_residue()?;
                us.iter().any(|u| u.residue() == inv)
            };
            let v = if !hit || nf.valuation()? != Some(t - 3) {
                ClosedValue::zero(2)
            } else {
                let one = PadicApprox::from_int(&self.spec, 1, self.precision);
                let eta = eta_char(&nf.mul_p_pow(3 - t).try_mul(&one.try_add(&m)?)?)? as i64;
                let ph = m1.try_mul(&n1)?.div(&n0.mul_int(2))?;
                closed_phase(&ph)?.mul(&self.q_pow(-1)).scale_int(self.sign_f() * eta)
            };
            out.push((8, CaseValue::Defined(v)));
        }
        Ok(out)
    }

    /// The case-table value when at least one applicable formula is defined;
    /// overlapping defined cases must agree.
    fn omega_case_table(&self, t: i64) -> Result<Option<(ClosedValue, String)>> {
        let cases = self.omega_cases(t)?;
        let mut found: Option<(ClosedValue, String)> = None;
        for (id, v) in cases {
            if let CaseValue::Defined(v) = v {
                match &found {
                    Some((w, tag)) if *w != v => {
                        return Err(Error::InternalInconsistency(format!(
                            "overlapping {tag} and case{id} disagree at t = {t}"
                        )));
                    }
                    Some(_) => {}
                    None => found = Some((v, format!("case{id}"))),
                }
            }
        }
        Ok(found)
    }

    fn term(&self, eng: &GaussEngine, t: i64, mode: Mode) -> Result<Option<Term>> {
        if self.skipped(t) {
            return Ok(None);
        }
        let scale = self.q_pow(self.tau2(t) - 2).scale_int(self.delta(t));
        let (omega, case) = match mode {
            Mode::LemmaSum => (self.omega_lemma(eng, t)?, "lemma_sum".to_string()),
            Mode::CaseTable => match self.omega_case_table(t)? {
                Some(found) => found,
                None => (self.omega_lemma(eng, t)?, "lemma_sum_fallback".to_string()),
            },
            Mode::Both => {
                let lemma = self.omega_lemma(eng, t)?;
                match self.omega_case_table(t)? {
                    Some((v, tag)) if v != lemma => {
                        return Err(Error::InternalInconsistency(format!(
                            "{tag} gives {:?} but the unit-shell sum gives {:?} at t = {t}",
                            v.numeric(),
                            lemma.numeric()
                        )));
                    }
                    Some((_, tag)) => (lemma, format!("lemma_sum={tag}")),
                    None => (lemma, "lemma_sum_only".to_string()),
                }
            }
        };
        let value = omega.mul(&scale);
        Ok((!value.is_zero()).then(|| Term { t, value, case }))
    }

    fn tail_start(&self) -> i64 {
        let sq = self.n_squares().map(|s| s.t + 1);
        let planes = self.hyperbolic.iter().chain(&self.anisotropic).map(|pd| pd.t);
        (2 + sq.chain(planes).max().unwrap_or(0)).max(1)
    }

    fn evaluate(&self, mode: Mode) -> Result<DensityResult> {
        let eng = GaussEngine::new(&self.spec)?;
        let upper = tmin(self.t_d, self.t_n.map(|tn| tn + 3));
        let (ts, tail_start) = match upper {
            Some(u) => ((1..=u).collect::<Vec<_>>(), None),
            None => {
                let s = self.tail_start();
                ((1..s).collect(), Some(s))
            }
        };
        let terms = eval_terms(ts, |t| self.term(&eng, t, mode))?;
        let tail = match tail_start {
            None => Tail::None,
            Some(s) => {
                let ratio = (self.tau2(s + 2) - self.tau2(s)) / 2;
                geometric_tail(&self.spec, s, ratio, |t| {
                    Ok(self.term(&eng, t, mode)?.map(|x| x.value).unwrap_or_else(|| ClosedValue::zero(2)))
                })?
            }
        };
        let value = assemble(self.p(), &terms, &tail)?;
        Ok(DensityResult { value, terms, tail, precision_used: 0, notes: self.notes.clone() })
    }
}

/// `1 + sum omega(t) delta(t) q^(tau(t) - 1)`.
pub fn beta_dyadic(data: &DyadicTermData, mode: Mode) -> Result<DensityResult> {
    data.evaluate(mode)
}

/// Shortcut for forms (no linear part): every square and plane is of class N,
/// the target needs no completion and `U(t) = U` throughout.
pub fn beta_form_dyadic(red: &ReducedDyadic, n: &PadicApprox, assume_n_zero: bool, mode: Mode) -> Result<DensityResult> {
    let spec = red.spec().clone();
    let linear = red.squares.iter().map(|(_, c)| c).chain(red.hyperbolic.iter().chain(&red.anisotropic).flat_map(|(_, c1, c2)| [c1, c2]));
    if linear.into_iter().any(|c| !c.is_exact_zero()) {
        return Err(Error::InvalidInput("the form shortcut needs all linear coefficients zero".into()));
    }
    let squares = red
        .squares
        .iter()
        .map(|(b, _)| Ok(SquareData { class: SquareClass::N, t: b.ord()?, unit: b.unit_part()?.clone(), c_unit: None }))
        .collect::<Result<Vec<_>>>()?;
    let planes = |v: &[(PadicApprox, PadicApprox, PadicApprox)]| {
        v.iter().map(|(b, _, _)| Ok(PlaneData { t: b.ord()?, in_n: true })).collect::<Result<Vec<_>>>()
    };
    let mut notes = Vec::new();
    let target = decide_target(n.clone(), None, 0, assume_n_zero, &mut notes)?;
    let precision = squares.iter().map(|s| s.unit.precision()).min().unwrap_or(red.rho.relative_precision().unwrap_or(3)).max(3);
    let data = DyadicTermData {
        roots: teichmuller_units(&spec, precision),
        tr_rho: red.rho.unit_residue()?.trace() % 2,
        hyperbolic: planes(&red.hyperbolic)?,
        anisotropic: planes(&red.anisotropic)?,
        squares,
        spec,
        t_d: None,
        nfrak: target.value,
        t_n: target.t_n,
        precision,
        notes,
    };
    data.evaluate(mode)
}
