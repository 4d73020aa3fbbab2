use std::sync::Arc;

use super::poly::{apply_transform, QuadraticPolynomial, Transform};
use crate::error::{Error, Result};
use crate::residue_arith::{residue_field, teichmuller_lift, FieldSpec, PadicApprox, RingElem};

/// Diagonal form `sum_i (b_i x_i^2 + c_i x_i) + constant` over a non-dyadic field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReducedNonDyadic {
    /// `(b_i, c_i)`; each `b_i` nonzero.
    pub terms: Vec<(PadicApprox, PadicApprox)>,
    pub constant: PadicApprox,
    /// `Q(T y)` equals this form modulo `p^K`.
    pub transform: Option<Transform>,
}

/// `sum b_i x_i^2 + c_i x_i`, `sum b'(x y) + c'_1 x + c'_2 y`,
/// `sum b''(x^2 + x y + rho y^2) + c''_1 x + c''_2 y`, plus a constant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReducedDyadic {
    pub squares: Vec<(PadicApprox, PadicApprox)>,
    pub hyperbolic: Vec<(PadicApprox, PadicApprox, PadicApprox)>,
    pub anisotropic: Vec<(PadicApprox, PadicApprox, PadicApprox)>,
    /// A unit whose residue has absolute trace 1.
    pub rho: PadicApprox,
    pub constant: PadicApprox,
    pub transform: Option<Transform>,
}

impl ReducedNonDyadic {
    pub fn new(terms: Vec<(PadicApprox, PadicApprox)>, constant: PadicApprox) -> Self {
        ReducedNonDyadic { terms, constant, transform: None }
    }

    pub fn spec(&self) -> &Arc<FieldSpec> {
        self.constant.spec()
    }

    /// The polynomial in `r = terms.len()` variables.
    pub fn to_polynomial(&self, precision: u32) -> Result<QuadraticPolynomial> {
        let mut q = QuadraticPolynomial::new(self.spec(), self.terms.len(), precision)?;
        for (i, (b, c)) in self.terms.iter().enumerate() {
            q.set_quad(i, i, b.clone())?;
            q.set_lin(i, c.clone())?;
        }
        q.set_const(self.constant.clone())?;
        Ok(q)
    }
}

impl ReducedDyadic {
    pub fn new(
        squares: Vec<(PadicApprox, PadicApprox)>,
        hyperbolic: Vec<(PadicApprox, PadicApprox, PadicApprox)>,
        anisotropic: Vec<(PadicApprox, PadicApprox, PadicApprox)>,
        constant: PadicApprox,
        precision: u32,
    ) -> Self {
        let rho = PadicApprox::from_integral(&select_rho(constant.spec(), precision));
        ReducedDyadic { squares, hyperbolic, anisotropic, rho, constant, transform: None }
    }

    pub fn spec(&self) -> &Arc<FieldSpec> {
        self.constant.spec()
    }

    pub fn r(&self) -> usize {
        self.squares.len() + 2 * (self.hyperbolic.len() + self.anisotropic.len())
    }

    /// Variables ordered squares, then hyperbolic pairs, then anisotropic pairs.
    pub fn to_polynomial(&self, precision: u32) -> Result<QuadraticPolynomial> {
        let mut q = QuadraticPolynomial::new(self.spec(), self.r(), precision)?;
        let mut v = 0;
        for (b, c) in &self.squares {
            q.set_quad(v, v, b.clone())?;
            q.set_lin(v, c.clone())?;
            v += 1;
        }
        for (b, c1, c2) in &self.hyperbolic {
            q.set_quad(v, v + 1, b.clone())?;
            q.set_lin(v, c1.clone())?;
            q.set_lin(v + 1, c2.clone())?;
            v += 2;
        }
        for (b, c1, c2) in &self.anisotropic {
            q.set_quad(v, v, b.clone())?;
            q.set_quad(v, v + 1, b.clone())?;
            q.set_quad(v + 1, v + 1, b.try_mul(&self.rho)?)?;
            q.set_lin(v, c1.clone())?;
            q.set_lin(v + 1, c2.clone())?;
            v += 2;
        }
        q.set_const(self.constant.clone())?;
        Ok(q)
    }
}

/// `1` when `f` is odd; otherwise the Teichmüller lift of the first residue
/// (coords-lexicographic) with absolute trace `1`.
pub fn select_rho(spec: &Arc<FieldSpec>, k: u32) -> RingElem {
    if spec.f() % 2 == 1 {
        return RingElem::one(spec, k);
    }
    let r = residue_field(spec)
        .into_iter()
        .find(|x| x.trace() % spec.p() == 1)
        .expect("the absolute trace is onto");
    teichmuller_lift(&r, k)
}

type Matrix = Vec<Vec<RingElem>>;

/// Upper-triangular quadratic coefficients of `sum a_ij x_i x_j` after `x = T y`.
fn quad_after(a: &Matrix, t: &Matrix) -> Matrix {
    let r = a.len();
    let spec = a[0][0].spec().clone();
    let k = a[0][0].precision();
    let mut out = vec![vec![RingElem::zero(&spec, k); r]; r];
    for i in 0..r {
        for j in i..r {
            if a[i][j].is_zero() {
                continue;
            }
            for u in 0..r {
                if t[i][u].is_zero() {
                    continue;
                }
                let ai = &a[i][j] * &t[i][u];
                for v in 0..r {
                    if t[j][v].is_zero() {
                        continue;
                    }
                    let (lo, hi) = (u.min(v), u.max(v));
                    out[lo][hi] = &out[lo][hi] + &(&ai * &t[j][v]);
                }
            }
        }
    }
    out
}

fn upper(m: &Matrix, i: usize, j: usize) -> &RingElem {
    &m[i.min(j)][i.max(j)]
}

/// `x / y` where `v(y) <= v(x)` in exact arithmetic, lifted back to full precision.
fn divide(x: &RingElem, y: &RingElem) -> Result<RingElem> {
    let k = x.precision();
    let v = y.valuation().ok_or_else(|| Error::Degenerate("division by zero pivot".into()))?;
    if x.is_zero() {
        return Ok(RingElem::zero(x.spec(), k));
    }
    if x.valuation().expect("nonzero") < v {
        return Err(Error::InternalInconsistency("pivot does not divide".into()));
    }
    let q = &x.div_p_pow(v) * &y.div_p_pow(v).inv()?;
    Ok(q.lift(k))
}

/// `col[k] -= c * col[src]` on the transform columns.
fn column_axpy(t: &mut Matrix, dst: usize, c: &RingElem, src: usize) {
    for row in t.iter_mut() {
        let d = &row[dst] - &(c * &row[src]);
        row[dst] = d;
    }
}

fn identity(spec: &Arc<FieldSpec>, r: usize, k: u32) -> Matrix {
    Transform::identity(spec, r, k).matrix().to_vec()
}

fn min_valuation(entries: impl Iterator<Item = (usize, usize, Option<u32>)>) -> Option<u32> {
    entries.filter_map(|(_, _, v)| v).min()
}

fn check_pivot(v: u32, k: u32) -> Result<()> {
    if v + 1 >= k {
        return Err(Error::PrecisionExhausted(format!(
            "pivot of valuation {v} leaves no relative precision at working precision {k}"
        )));
    }
    Ok(())
}

/// Diagonalizes `Q` over a non-dyadic field by greedy minimal-valuation pivoting.
pub fn reduce_nondyadic(q: &QuadraticPolynomial) -> Result<ReducedNonDyadic> {
    let spec = q.spec().clone();
    if spec.is_dyadic() {
        return Err(Error::InvalidField("non-dyadic reduction needs an odd prime".into()));
    }
    let k = q.precision();
    let r = q.r();
    let a = q.residues(k)?.quad;
    let half = RingElem::from_int(&spec, k, 2).inv()?;
    let mut t = identity(&spec, r, k);
    let mut open: Vec<usize> = (0..r).collect();
    // Gram entries: a_ii on the diagonal, a_ij / 2 off it
    let gram = |cur: &Matrix, i: usize, j: usize| -> RingElem {
        if i == j {
            cur[i][i].clone()
        } else {
            upper(cur, i, j) * &half
        }
    };
    while !open.is_empty() {
        let mut cur = quad_after(&a, &t);
        let pairs = || open.iter().flat_map(|&i| open.iter().filter(move |&&j| j >= i).map(move |&j| (i, j)));
        let m = min_valuation(pairs().map(|(i, j)| (i, j, gram(&cur, i, j).valuation())))
            .ok_or_else(|| Error::Degenerate("the quadratic part is degenerate".into()))?;
        check_pivot(m, k)?;
        let pivot = match open.iter().copied().find(|&i| cur[i][i].valuation() == Some(m)) {
            Some(i) => i,
            None => {
                let (i, j) = pairs()
                    .find(|&(i, j)| i != j && gram(&cur, i, j).valuation() == Some(m))
                    .expect("minimum attained");
                // x_i <- x_i + x_j makes the diagonal entry reach the minimum
                let minus_one = RingElem::from_int(&spec, k, -1);
                column_axpy(&mut t, i, &minus_one, j);
                cur = quad_after(&a, &t);
                debug_assert_eq!(cur[i][i].valuation(), Some(m));
                i
            }
        };
        let g_pp = gram(&cur, pivot, pivot);
        for &j in &open {
            if j != pivot {
                let c = divide(&gram(&cur, pivot, j), &g_pp)?;
                column_axpy(&mut t, j, &c, pivot);
            }
        }
        open.retain(|&i| i != pivot);
    }
    let transform = Transform::new(t)?;
    let out = apply_transform(q, &transform)?;
    for i in 0..r {
        for j in i + 1..r {
            if !out.quad(i, j).in_ideal(k as i64)? {
                return Err(Error::InternalInconsistency(format!("off-diagonal ({i}, {j}) survived reduction")));
            }
        }
    }
    let terms = (0..r).map(|i| (out.quad(i, i).clone(), out.lin(i).clone())).collect();
    Ok(ReducedNonDyadic { terms, constant: q.constant().clone(), transform: Some(transform) })
}

#[derive(Clone, Copy, Debug)]
enum Block {
    Square(usize),
    Pair(usize, usize),
    Hyperbolic(usize, usize),
    Anisotropic(usize, usize),
}

/// Newton iteration for a simple root; `f` returns `(F(x), F'(x))`.
fn newton(mut x: RingElem, f: impl Fn(&RingElem) -> (RingElem, RingElem)) -> Result<RingElem> {
    for _ in 0..128 {
        let (fx, dfx) = f(&x);
        if fx.is_zero() {
            return Ok(x);
        }
        x = &x - &(&fx * &dfx.inv()?);
    }
    Err(Error::InternalInconsistency("Newton iteration did not converge".into()))
}

/// Splits `Q` over a dyadic field into squares, hyperbolic planes and
/// anisotropic planes `x^2 + x y + rho y^2`.
pub fn reduce_dyadic(q: &QuadraticPolynomial) -> Result<ReducedDyadic> {
    let spec = q.spec().clone();
    if !spec.is_dyadic() {
        return Err(Error::InvalidField("dyadic reduction needs p = 2".into()));
    }
    let k = q.precision();
    // divisions by pivots cost digits; work with slack and verify at `k`
    let kw = (2 * k + 4).min(spec.max_precision());
    let r = q.r();
    let a: Matrix = q
        .residues(k)?
        .quad
        .into_iter()
        .map(|row| row.into_iter().map(|x| x.lift(kw)).collect())
        .collect();
    let two = RingElem::from_int(&spec, kw, 2);
    let mut t = identity(&spec, r, kw);
    let mut open: Vec<usize> = (0..r).collect();
    let mut blocks = Vec::new();
    // polar matrix: 2 a_ii on the diagonal, a_ij off it
    let polar = |cur: &Matrix, i: usize, j: usize| -> RingElem {
        if i == j {
            &cur[i][i] * &two
        } else {
            upper(cur, i, j).clone()
        }
    };
    while !open.is_empty() {
        let cur = quad_after(&a, &t);
        let pairs = || open.iter().flat_map(|&i| open.iter().filter(move |&&j| j >= i).map(move |&j| (i, j)));
        let m = min_valuation(pairs().map(|(i, j)| (i, j, polar(&cur, i, j).valuation())))
            .ok_or_else(|| Error::Degenerate("the quadratic part is degenerate".into()))?;
        check_pivot(m, k)?;
        if let Some(i) = open.iter().copied().find(|&i| polar(&cur, i, i).valuation() == Some(m)) {
            let h_ii = polar(&cur, i, i);
            for &j in &open {
                if j != i {
                    let c = divide(&polar(&cur, i, j), &h_ii)?;
                    column_axpy(&mut t, j, &c, i);
                }
            }
            blocks.push(Block::Square(i));
            open.retain(|&x| x != i);
            continue;
        }
        let (i, j) = pairs()
            .find(|&(i, j)| i != j && polar(&cur, i, j).valuation() == Some(m))
            .expect("minimum attained");
        let (h_ii, h_ij, h_jj) = (polar(&cur, i, i), polar(&cur, i, j), polar(&cur, j, j));
        let det = &(&h_ii * &h_jj) - &(&h_ij * &h_ij);
        for &l in &open {
            if l == i || l == j {
                continue;
            }
            let (h1, h2) = (polar(&cur, i, l), polar(&cur, j, l));
            let y1 = divide(&(&(&h_jj * &h1) - &(&h_ij * &h2)), &det)?;
            let y2 = divide(&(&(&h_ii * &h2) - &(&h_ij * &h1)), &det)?;
            column_axpy(&mut t, l, &y1, i);
            column_axpy(&mut t, l, &y2, j);
        }
        blocks.push(Block::Pair(i, j));
        open.retain(|&x| x != i && x != j);
    }

    let rho = select_rho(&spec, kw);
    let residues = residue_field(&spec);
    let one = RingElem::one(&spec, kw);
    let cur = quad_after(&a, &t);
    for block in blocks.iter_mut() {
        let Block::Pair(i, j) = *block else { continue };
        // block = 2^s w (alpha x^2 + x y + delta y^2)
        let scale = cur[i][j].clone();
        let alpha = divide(&cur[i][i], &scale)?;
        let delta = divide(&cur[j][j], &scale)?;
        let (ab, db) = (alpha.residue(), delta.residue());
        let iso_root = residues.iter().find(|&x| (&(&(&ab * x) * x) + &(x + &db)).is_zero());
        let (ei, ej): (Vec<RingElem>, Vec<RingElem>) = t.iter().map(|row| (row[i].clone(), row[j].clone())).unzip();
        let combo = |x: &RingElem, y: &RingElem| -> Vec<RingElem> {
            ei.iter().zip(&ej).map(|(a, b)| &(x * a) + &(y * b)).collect()
        };
        let (new_i, new_j) = if let Some(root) = iso_root {
            let x0 = newton(root.lift(kw), |x| {
                let fx = &(&(&alpha * x) * x) + &(x + &delta);
                let dfx = &(&(&two * &alpha) * x) + &one;
                (fx, dfx)
            })?;
            let d_inv = (&(&(&two * &alpha) * &x0) + &one).inv()?;
            // v1 = x0 e_i + e_j is isotropic; v2 = e_i / (2 alpha x0 + 1) pairs with it to 1
            let q_v2 = &(&alpha * &d_inv) * &d_inv;
            let v1 = combo(&x0, &one);
            let v2 = combo(&d_inv, &RingElem::zero(&spec, kw));
            let v2p: Vec<RingElem> = v2.iter().zip(&v1).map(|(a, b)| a - &(&q_v2 * b)).collect();
            *block = Block::Hyperbolic(i, j);
            (v2p, v1)
        } else {
            let target = &(&ab * &db) + &rho.residue();
            let g0 = residues
                .iter()
                .find(|&g| (&(g * g) + &(g + &target)).is_zero())
                .ok_or_else(|| Error::InternalInconsistency("anisotropic block with no trace match".into()))?;
            let ad = &alpha * &delta;
            let gamma = newton(g0.lift(kw), |g| {
                let lin = &one - &(&two * g);
                let fx = &(&(g - &(g * g)) + &(&(&ad * &lin) * &lin)) - &rho;
                let four = &two * &two;
                let dfx = &lin - &(&(&four * &ad) * &lin);
                (fx, dfx)
            })?;
            let v2 = combo(&gamma, &(&alpha * &(&one - &(&two * &gamma))));
            *block = Block::Anisotropic(i, j);
            (ei.clone(), v2)
        };
        for (row, (x, y)) in t.iter_mut().zip(new_i.into_iter().zip(new_j)) {
            row[i] = x;
            row[j] = y;
        }
    }

    // order: squares, hyperbolic, anisotropic, each by leading index
    let mut order: Vec<(u8, usize, Block)> = blocks
        .iter()
        .map(|&b| match b {
            Block::Square(i) => (0, i, b),
            Block::Hyperbolic(i, _) => (1, i, b),
            Block::Anisotropic(i, _) => (2, i, b),
            Block::Pair(..) => unreachable!("pairs are normalized"),
        })
        .collect();
    order.sort_by_key(|&(kind, i, _)| (kind, i));
    let mut perm = Vec::with_capacity(r);
    for &(_, _, b) in &order {
        match b {
            Block::Square(i) => perm.push(i),
            Block::Hyperbolic(i, j) | Block::Anisotropic(i, j) => {
                perm.push(i);
                perm.push(j);
            }
            Block::Pair(..) => unreachable!(),
        }
    }
    let permuted: Matrix = t.iter().map(|row| perm.iter().map(|&c| row[c].reduce(k)).collect()).collect();
    let transform = Transform::new(permuted)?;
    let out = apply_transform(q, &transform)?;

    let rho_k = rho.reduce(k);
    let zero_mod = |x: &PadicApprox| -> Result<bool> { x.in_ideal(k as i64) };
    let mut squares = Vec::new();
    let mut hyperbolic = Vec::new();
    let mut anisotropic = Vec::new();
    let mut v = 0;
    let mut owned = vec![false; r];
    let precision_err = || Error::PrecisionExhausted("dyadic reduction lost precision".into());
    for &(kind, _, _) in &order {
        match kind {
            0 => {
                squares.push((out.quad(v, v).clone(), out.lin(v).clone()));
                owned[v] = true;
                v += 1;
            }
            1 => {
                if !zero_mod(out.quad(v, v))? || !zero_mod(out.quad(v + 1, v + 1))? {
                    return Err(precision_err());
                }
                hyperbolic.push((out.quad(v, v + 1).clone(), out.lin(v).clone(), out.lin(v + 1).clone()));
                owned[v] = true;
                v += 2;
            }
            _ => {
                let b = out.quad(v, v).clone();
                let bk = b.reduce_integral(k)?;
                if out.quad(v, v + 1).reduce_integral(k)? != bk
                    || out.quad(v + 1, v + 1).reduce_integral(k)? != &bk * &rho_k
                {
                    return Err(precision_err());
                }
                anisotropic.push((b, out.lin(v).clone(), out.lin(v + 1).clone()));
                owned[v] = true;
                v += 2;
            }
        }
    }
    // everything off the blocks must vanish
    for i in 0..r {
        for j in i + 1..r {
            let in_block = owned[i] && j == i + 1 && !is_square_at(&order, i);
            if !in_block && !zero_mod(out.quad(i, j))? {
                return Err(precision_err());
            }
        }
    }
    Ok(ReducedDyadic {
        squares,
        hyperbolic,
        anisotropic,
        rho: PadicApprox::from_integral(&rho_k),
        constant: q.constant().clone(),
        transform: Some(transform),
    })
}

/// Whether the variable at position `pos` of the reordered basis is a square.
fn is_square_at(order: &[(u8, usize, Block)], pos: usize) -> bool {
    let mut v = 0;
    for &(kind, _, _) in order {
        let width = if kind == 0 { 1 } else { 2 };
        if pos < v + width {
            return kind == 0;
        }
        v += width;
    }
    false
}
