use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::residue_arith::{CoeffJson, FieldSpec, PadicApprox, RingElem};

/// `Q(x) = sum_{i <= j} a_ij x_i x_j + sum_i b_i x_i + c` with every coefficient
/// known at least modulo `p^precision`.
#[derive(Clone, PartialEq, Eq)]
pub struct QuadraticPolynomial {
    spec: Arc<FieldSpec>,
    r: usize,
    quad: BTreeMap<(usize, usize), PadicApprox>,
    lin: Vec<PadicApprox>,
    constant: PadicApprox,
    precision: u32,
    zero: PadicApprox,
}

impl fmt::Debug for QuadraticPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (&(i, j), c) in &self.quad {
            if !c.is_exact_zero() {
                parts.push(format!("({c:?}) x{i} x{j}"));
            }
        }
        for (i, c) in self.lin.iter().enumerate() {
            if !c.is_exact_zero() {
                parts.push(format!("({c:?}) x{i}"));
            }
        }
        if !self.constant.is_exact_zero() {
            parts.push(format!("({:?})", self.constant));
        }
        write!(f, "Q[r={}, K={}]: {}", self.r, self.precision, parts.join(" + "))
    }
}

impl QuadraticPolynomial {
    /// The zero polynomial in `r` variables at working precision `precision`.
    pub fn new(spec: &Arc<FieldSpec>, r: usize, precision: u32) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidInput("a polynomial needs at least one variable".into()));
        }
        if precision == 0 || precision > spec.max_precision() {
            return Err(Error::InvalidInput(format!("working precision {precision} out of range")));
        }
        Ok(QuadraticPolynomial {
            spec: spec.clone(),
            r,
            quad: BTreeMap::new(),
            lin: vec![PadicApprox::zero(spec); r],
            constant: PadicApprox::zero(spec),
            precision,
            zero: PadicApprox::zero(spec),
        })
    }

    fn check_coeff(&self, c: &PadicApprox) -> Result<()> {
        if !(Arc::ptr_eq(c.spec(), &self.spec) || **c.spec() == *self.spec) {
            return Err(Error::SpecMismatch("coefficient over a different field".into()));
        }
        if let Some(lb) = c.valuation_lower_bound() {
            if c.is_known_nonzero() && lb < 0 {
                return Err(Error::NotIntegral(format!("coefficient {c:?} has negative valuation")));
            }
            if !c.is_known_nonzero() && lb < 0 {
                return Err(Error::PrecisionExhausted(format!("coefficient {c:?} is not known to be integral")));
            }
        }
        Ok(())
    }

    /// Sets the coefficient of `x_i x_j` (order of `i`, `j` irrelevant).
    pub fn set_quad(&mut self, i: usize, j: usize, c: PadicApprox) -> Result<()> {
        let (i, j) = (i.min(j), i.max(j));
        if j >= self.r {
            return Err(Error::InvalidInput(format!("variable index {j} out of range")));
        }
        self.check_coeff(&c)?;
        if c.is_exact_zero() {
            self.quad.remove(&(i, j));
        } else {
            self.quad.insert((i, j), c);
        }
        Ok(())
    }

    pub fn set_lin(&mut self, i: usize, c: PadicApprox) -> Result<()> {
        if i >= self.r {
            return Err(Error::InvalidInput(format!("variable index {i} out of range")));
        }
        self.check_coeff(&c)?;
        self.lin[i] = c;
        Ok(())
    }

    pub fn set_const(&mut self, c: PadicApprox) -> Result<()> {
        self.check_coeff(&c)?;
        self.constant = c;
        Ok(())
    }

    pub fn with_quad(mut self, i: usize, j: usize, c: PadicApprox) -> Result<Self> {
        self.set_quad(i, j, c)?;
        Ok(self)
    }

    pub fn with_lin(mut self, i: usize, c: PadicApprox) -> Result<Self> {
        self.set_lin(i, c)?;
        Ok(self)
    }

    pub fn with_const(mut self, c: PadicApprox) -> Result<Self> {
        self.set_const(c)?;
        Ok(self)
    }

    /// Integer-coefficient convenience: `quad` entries `(i, j, a)`, `lin`, `c`.
    pub fn from_ints(
        spec: &Arc<FieldSpec>,
        r: usize,
        precision: u32,
        quad: &[(usize, usize, i64)],
        lin: &[i64],
        c: i64,
    ) -> Result<Self> {
        let mut q = Self::new(spec, r, precision)?;
        for &(i, j, a) in quad {
            let prev = q.quad(i, j).clone();
            q.set_quad(i, j, prev.try_add(&PadicApprox::from_int(spec, a, precision))?)?;
        }
        for (i, &b) in lin.iter().enumerate() {
            q.set_lin(i, PadicApprox::from_int(spec, b, precision))?;
        }
        q.set_const(PadicApprox::from_int(spec, c, precision))?;
        Ok(q)
    }

    pub fn spec(&self) -> &Arc<FieldSpec> {
        &self.spec
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    /// Coefficient of `x_i x_j`.
    pub fn quad(&self, i: usize, j: usize) -> &PadicApprox {
        self.quad.get(&(i.min(j), i.max(j))).unwrap_or(&self.zero)
    }

    pub fn quad_entries(&self) -> impl Iterator<Item = (usize, usize, &PadicApprox)> {
        self.quad.iter().map(|(&(i, j), c)| (i, j, c))
    }

    pub fn lin(&self, i: usize) -> &PadicApprox {
        &self.lin[i]
    }

    pub fn lin_all(&self) -> &[PadicApprox] {
        &self.lin
    }

    pub fn constant(&self) -> &PadicApprox {
        &self.constant
    }

    /// Whether there are no linear terms and no constant.
    pub fn is_form(&self) -> bool {
        self.lin.iter().all(|c| c.is_exact_zero()) && self.constant.is_exact_zero()
    }

    /// All coefficients must have nonnegative valuation (checked on insertion).
    pub fn check_integral(&self) -> Result<()> {
        for c in self.quad.values().chain(self.lin.iter()).chain(std::iter::once(&self.constant)) {
            self.check_coeff(c)?;
        }
        Ok(())
    }

    /// Coefficient residues modulo `p^k`: `(quad matrix (i <= j), lin, const)`.
    pub fn residues(&self, k: u32) -> Result<Residues> {
        let mut quad = vec![vec![RingElem::zero(&self.spec, k); self.r]; self.r];
        for (&(i, j), c) in &self.quad {
            quad[i][j] = c.reduce_integral(k)?;
        }
        let lin = self.lin.iter().map(|c| c.reduce_integral(k)).collect::<Result<Vec<_>>>()?;
        let constant = self.constant.reduce_integral(k)?;
        Ok(Residues { quad, lin, constant })
    }
}

/// Coefficients reduced modulo `p^k`.
#[derive(Clone, Debug)]
pub struct Residues {
    /// Upper triangle: `quad[i][j]` for `i <= j`.
    pub quad: Vec<Vec<RingElem>>,
    pub lin: Vec<RingElem>,
    pub constant: RingElem,
}

/// A change of variables `x = T y` with `T` in `GL_r(o)`, known modulo `p^K`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transform {
    matrix: Vec<Vec<RingElem>>,
    det_unit: RingElem,
}

impl Transform {
    pub fn identity(spec: &Arc<FieldSpec>, r: usize, k: u32) -> Self {
        let mut m = vec![vec![RingElem::zero(spec, k); r]; r];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = RingElem::one(spec, k);
        }
        Transform { matrix: m, det_unit: RingElem::one(spec, k) }
    }

    /// Certifies that the determinant is a unit.
    pub fn new(matrix: Vec<Vec<RingElem>>) -> Result<Self> {
        let r = matrix.len();
        if r == 0 || matrix.iter().any(|row| row.len() != r) {
            return Err(Error::InvalidInput("transform must be a square matrix".into()));
        }
        let det = determinant(&matrix);
        if !det.is_unit() {
            return Err(Error::NonUnit(format!("transform determinant {det:?} is not a unit")));
        }
        Ok(Transform { matrix, det_unit: det })
    }

    pub fn from_ints(spec: &Arc<FieldSpec>, k: u32, rows: &[Vec<i64>]) -> Result<Self> {
        let m = rows
            .iter()
            .map(|row| row.iter().map(|&x| RingElem::from_int(spec, k, x)).collect())
            .collect();
        Self::new(m)
    }

    pub fn matrix(&self) -> &[Vec<RingElem>] {
        &self.matrix
    }

    pub fn det_unit(&self) -> &RingElem {
        &self.det_unit
    }

    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    pub fn precision(&self) -> u32 {
        self.matrix[0][0].precision()
    }

    pub fn entry(&self, i: usize, j: usize) -> &RingElem {
        &self.matrix[i][j]
    }

    /// `self * other` (apply `other` first on the new variables).
    pub fn compose(&self, other: &Transform) -> Result<Transform> {
        let r = self.dim();
        if other.dim() != r {
            return Err(Error::InvalidInput("transform dimensions differ".into()));
        }
        let k = self.precision().min(other.precision());
        let spec = self.matrix[0][0].spec().clone();
        let mut m = vec![vec![RingElem::zero(&spec, k); r]; r];
        for i in 0..r {
            for j in 0..r {
                let mut acc = RingElem::zero(&spec, k);
                for l in 0..r {
                    acc = &acc + &(&self.matrix[i][l].at_precision(k) * &other.matrix[l][j].at_precision(k));
                }
                m[i][j] = acc;
            }
        }
        Transform::new(m)
    }

    pub fn is_identity(&self) -> bool {
        self.matrix.iter().enumerate().all(|(i, row)| {
            row.iter().enumerate().all(|(j, x)| if i == j { x.coords()[0] == 1 && x.coords()[1..].iter().all(|&c| c == 0) } else { x.is_zero() })
        })
    }
}

/// Determinant by fraction-free expansion (small `r`).
pub fn determinant(m: &[Vec<RingElem>]) -> RingElem {
    let r = m.len();
    if r == 1 {
        return m[0][0].clone();
    }
    let mut acc = RingElem::zero(m[0][0].spec(), m[0][0].precision());
    for j in 0..r {
        let minor: Vec<Vec<RingElem>> = m[1..]
            .iter()
            .map(|row| row.iter().enumerate().filter(|&(c, _)| c != j).map(|(_, x)| x.clone()).collect())
            .collect();
        let term = &m[0][j] * &determinant(&minor);
        acc = if j % 2 == 0 { &acc + &term } else { &acc - &term };
    }
    acc
}

/// `Q(T y)`, recomputed modulo `p^K` with `K = min(precision of Q, precision of T)`.
/// Coefficients that receive no contribution stay exact zeros.
pub fn apply_transform(q: &QuadraticPolynomial, t: &Transform) -> Result<QuadraticPolynomial> {
    let r = q.r();
    if t.dim() != r {
        return Err(Error::InvalidInput(format!("transform of size {} for {} variables", t.dim(), r)));
    }
    let k = q.precision().min(t.precision());
    let spec = q.spec().clone();
    let tm: Vec<Vec<RingElem>> =
        t.matrix.iter().map(|row| row.iter().map(|x| x.at_precision(k)).collect()).collect();
    let mut quad: BTreeMap<(usize, usize), RingElem> = BTreeMap::new();
    for (&(i, j), c) in &q.quad {
        let c = c.reduce_integral(k)?;
        for a in 0..r {
            if tm[i][a].is_zero() {
                continue;
            }
            for b in 0..r {
                if tm[j][b].is_zero() {
                    continue;
                }
                let term = &(&c * &tm[i][a]) * &tm[j][b];
                let key = (a.min(b), a.max(b));
                let slot = quad.entry(key).or_insert_with(|| RingElem::zero(&spec, k));
                *slot = &*slot + &term;
            }
        }
    }
    let mut lin: Vec<Option<RingElem>> = vec![None; r];
    for (i, c) in q.lin.iter().enumerate() {
        if c.is_exact_zero() {
            continue;
        }
        let c = c.reduce_integral(k)?;
        for (a, slot) in lin.iter_mut().enumerate() {
            if tm[i][a].is_zero() {
                continue;
            }
            let term = &c * &tm[i][a];
            *slot = Some(match slot.take() {
                Some(s) => &s + &term,
                None => term,
            });
        }
    }
    let mut out = QuadraticPolynomial::new(&spec, r, k)?;
    for (key, v) in quad {
        out.quad.insert(key, PadicApprox::from_integral(&v));
    }
    for (i, v) in lin.into_iter().enumerate() {
        if let Some(v) = v {
            out.lin[i] = PadicApprox::from_integral(&v);
        }
    }
    out.constant = q.constant.clone();
    Ok(out)
}

/// Moves the constant into the target: `(Q - c, n - c)`.
pub fn constant_normalize(q: &QuadraticPolynomial, n: &PadicApprox) -> Result<(QuadraticPolynomial, PadicApprox)> {
    let mut out = q.clone();
    let n2 = n.sub(q.constant())?;
    out.constant = PadicApprox::zero(q.spec());
    Ok((out, n2))
}

/// Serialized polynomial:
/// `{"field": FieldSpec, "r": int, "quad": [[i, j, coeff]], "lin": [coeff], "const": coeff}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolynomialJson {
    pub field: FieldSpec,
    pub r: usize,
    #[serde(default)]
    pub quad: Vec<(usize, usize, CoeffJson)>,
    #[serde(default)]
    pub lin: Vec<CoeffJson>,
    #[serde(default = "CoeffJson::zero", rename = "const")]
    pub constant: CoeffJson,
}

impl PolynomialJson {
    /// Builds the polynomial with every coefficient at relative precision `k`.
    pub fn to_polynomial(&self, k: u32) -> Result<QuadraticPolynomial> {
        let spec = Arc::new(self.field.clone());
        let mut q = QuadraticPolynomial::new(&spec, self.r, k)?;
        for (i, j, c) in &self.quad {
            if *i >= self.r || *j >= self.r {
                return Err(Error::InvalidInput(format!("quad index ({i}, {j}) out of range")));
            }
            let prev = q.quad(*i, *j).clone();
            q.set_quad(*i, *j, prev.try_add(&c.to_padic(&spec, k)?)?)?;
        }
        if self.lin.len() > self.r {
            return Err(Error::InvalidInput("more linear coefficients than variables".into()));
        }
        for (i, c) in self.lin.iter().enumerate() {
            q.set_lin(i, c.to_padic(&spec, k)?)?;
        }
        q.set_const(self.constant.to_padic(&spec, k)?)?;
        Ok(q)
    }

    /// Serializes a polynomial whose coefficients all have determined valuations.
    pub fn from_polynomial(q: &QuadraticPolynomial) -> Result<Self> {
        Ok(PolynomialJson {
            field: (**q.spec()).clone(),
            r: q.r(),
            quad: q
                .quad_entries()
                .map(|(i, j, c)| Ok((i, j, CoeffJson::from_padic(c)?)))
                .collect::<Result<Vec<_>>>()?,
            lin: q.lin_all().iter().map(CoeffJson::from_padic).collect::<Result<Vec<_>>>()?,
            constant: CoeffJson::from_padic(q.constant())?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_of_square() {
        let spec = FieldSpec::rational(3).unwrap();
        let q = QuadraticPolynomial::from_ints(&spec, 2, 6, &[(0, 0, 1)], &[], 0).unwrap();
        let t = Transform::from_ints(&spec, 6, &[vec![1, 1], vec![0, 1]]).unwrap();
        let out = apply_transform(&q, &t).unwrap();
        let res = out.residues(6).unwrap();
        assert_eq!(res.quad[0][0].coords(), &[1]);
        assert_eq!(res.quad[0][1].coords(), &[2]);
        assert_eq!(res.quad[1][1].coords(), &[1]);
        let id = Transform::identity(&spec, 2, 6);
        assert_eq!(apply_transform(&q, &id).unwrap(), q);
    }

    #[test]
    fn singular_transform_rejected() {
        let spec = FieldSpec::rational(3).unwrap();
        assert!(Transform::from_ints(&spec, 4, &[vec![1, 1], vec![1, 1]]).is_err());
        assert!(Transform::from_ints(&spec, 4, &[vec![3, 0], vec![0, 1]]).is_err());
    }

    #[test]
    fn constant_moves_into_target() {
        let spec = FieldSpec::rational(3).unwrap();
        let q = QuadraticPolynomial::from_ints(&spec, 1, 6, &[(0, 0, 1)], &[1], 3).unwrap();
        let (q2, n2) = constant_normalize(&q, &PadicApprox::from_int(&spec, 0, 6)).unwrap();
        assert!(q2.constant().is_exact_zero());
        assert_eq!(n2.reduce_integral(6).unwrap().coords(), &[729 - 3]);
        let one = QuadraticPolynomial::from_ints(&spec, 1, 6, &[(0, 0, 1)], &[], 1).unwrap();
        let (_, n) = constant_normalize(&one, &PadicApprox::from_int(&spec, 1, 6)).unwrap();
        assert!(n.in_ideal(6).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"field": {"p": 2, "f": 1, "modulus": [1, 1]}, "r": 2,
                       "quad": [[0, 1, {"val": 0, "unit": [1]}]], "lin": [{"val": 1, "unit": [1]}],
                       "const": {"val": "inf"}}"#;
        let pj: PolynomialJson = serde_json::from_str(text).unwrap();
        let q = pj.to_polynomial(8).unwrap();
        assert_eq!(q.quad(1, 0).valuation().unwrap(), Some(0));
        assert_eq!(q.lin(0).valuation().unwrap(), Some(1));
        let back = PolynomialJson::from_polynomial(&q).unwrap();
        assert_eq!(back.to_polynomial(8).unwrap(), q);
    }

    #[test]
    fn non_integral_rejected() {
        let spec = FieldSpec::rational(3).unwrap();
        let mut q = QuadraticPolynomial::new(&spec, 1, 5).unwrap();
        let third = PadicApprox::from_ratio(&spec, 1, 3, 5).unwrap();
        assert!(matches!(q.set_quad(0, 0, third), Err(Error::NotIntegral(_))));
    }
}
