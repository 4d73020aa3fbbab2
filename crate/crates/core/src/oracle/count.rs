use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use super::fast::{Elem, FastRing, MAX_F};
use super::OracleConfig;
use crate::error::{Error, Result};
use crate::exact_values::rational_string;
use crate::quadratic_model::QuadraticPolynomial;
use crate::residue_arith::PadicApprox;

/// Normalized solution count at level `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountResult {
    pub k: u32,
    /// `#{x in (o / p^k)^r : Q(x) == n (mod p^k)}`.
    pub count: u128,
    /// `count / q^(k (r - 1))`.
    pub density: BigRational,
    pub stabilized: bool,
}

impl Serialize for CountResult {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("CountResult", 4)?;
        st.serialize_field("k", &self.k)?;
        st.serialize_field("count", &self.count.to_string())?;
        st.serialize_field("density", &rational_string(&self.density))?;
        st.serialize_field("stabilized", &self.stabilized)?;
        st.end()
    }
}

/// Variable indices grouped by the connectivity of the cross terms.
fn components(q: &QuadraticPolynomial) -> Vec<Vec<usize>> {
    let r = q.r();
    let mut parent: Vec<usize> = (0..r).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut x = x;
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (i, j, c) in q.quad_entries() {
        if i != j && !c.is_exact_zero() {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; r];
    for v in 0..r {
        let root = find(&mut parent, v);
        if root_slot[root] == usize::MAX {
            root_slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_slot[root]].push(v);
    }
    groups
}

/// Coefficients of one component in fast-ring form.
struct ComponentPoly {
    diag: Vec<Elem>,
    lin: Vec<Elem>,
    /// `cross[d][e]` for `e < d`.
    cross: Vec<Vec<Elem>>,
}

/// Value histogram of a component over all its assignments modulo `p^k`.
///
/// The last variable contributes `own(x) + L x` with `L` linear in the earlier
/// variables, so its loop walks `x` in index order and updates `L x` by adds.
fn histogram(ring: &FastRing, comp: &ComponentPoly, table: &[Elem]) -> Vec<u64> {
    let size = ring.size();
    let vars = comp.diag.len();
    let last = vars - 1;
    let own: Vec<Elem> =
        table.iter().map(|x| ring.mul(&ring.add(&ring.mul(&comp.diag[last], x), &comp.lin[last]), x)).collect();
    let value_of = |d: usize, x: &Elem, prev: &[Elem]| -> Elem {
        let mut v = ring.mul(&ring.add(&ring.mul(&comp.diag[d], x), &comp.lin[d]), x);
        for (e, xe) in prev.iter().enumerate() {
            if !FastRing::is_zero(&comp.cross[d][e]) {
                v = ring.add(&v, &ring.mul(&ring.mul(&comp.cross[d][e], xe), x));
            }
        }
        v
    };
    let finish = |prev: &[Elem], partial: &Elem, hist: &mut [u64]| {
        let mut l = [0u64; MAX_F];
        for (e, xe) in prev.iter().enumerate() {
            if !FastRing::is_zero(&comp.cross[last][e]) {
                l = ring.add(&l, &ring.mul(&comp.cross[last][e], xe));
            }
        }
        // L theta^j: the step when coordinate j of x increments
        let steps: Vec<Elem> = (0..ring.f())
            .map(|j| {
                let mut basis = [0u64; MAX_F];
                basis[j] = 1;
                ring.mul(&l, &basis)
            })
            .collect();
        let m = ring.modulus();
        let mut digits = [0u64; MAX_F];
        let mut lx = [0u64; MAX_F];
        for o in &own {
            hist[ring.encode(&ring.add(&ring.add(partial, o), &lx))] += 1;
            // m steps in one coordinate add m L theta^j = 0, so carries need no correction
            for j in 0..ring.f() {
                digits[j] += 1;
                lx = ring.add(&lx, &steps[j]);
                if digits[j] < m {
                    break;
                }
                digits[j] = 0;
            }
        }
    };
    fn rec(
        table: &[Elem],
        value_of: &dyn Fn(usize, &Elem, &[Elem]) -> Elem,
        finish: &dyn Fn(&[Elem], &Elem, &mut [u64]),
        add: &dyn Fn(&Elem, &Elem) -> Elem,
        last: usize,
        xs: &mut Vec<Elem>,
        partial: Elem,
        hist: &mut [u64],
    ) {
        let d = xs.len();
        if d == last {
            finish(xs, &partial, hist);
            return;
        }
        for x in table {
            let v = add(&partial, &value_of(d, x, xs));
            xs.push(*x);
            rec(table, value_of, finish, add, last, xs, v, hist);
            xs.pop();
        }
    }
    let add = |a: &Elem, b: &Elem| ring.add(a, b);
    if vars == 1 {
        let mut hist = vec![0u64; size];
        finish(&[], &[0u64; MAX_F], &mut hist);
        return hist;
    }
    (0..size)
        .into_par_iter()
        .fold(
            || vec![0u64; size],
            |mut hist, idx| {
                let x0 = table[idx];
                let v0 = value_of(0, &x0, &[]);
                let mut xs = vec![x0];
                rec(table, &value_of, &finish, &add, last, &mut xs, v0, &mut hist);
                hist
            },
        )
        .reduce(
            || vec![0u64; size],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
}

fn run_in_pool<T: Send>(cfg: &OracleConfig, f: impl FnOnce() -> T + Send) -> T {
    if cfg.parallel {
        f()
    } else {
        rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool").install(f)
    }
}

/// Exact count of solutions of `Q(x) == n (mod p^k)`.
pub fn count_density(q: &QuadraticPolynomial, n: &PadicApprox, k: u32, cfg: &OracleConfig) -> Result<CountResult> {
    let spec = q.spec().clone();
    if k == 0 {
        return Err(Error::InvalidInput("counting level must be positive".into()));
    }
    if k > spec.max_precision() {
        return Err(Error::BudgetExceeded(format!("level {k} exceeds the representable precision")));
    }
    let r = q.r();
    let scale = BigInt::from(spec.q()).pow(k * (r as u32 - 1));
    // a non-integral target has no solutions
    if n.is_known_nonzero() && n.valuation()?.expect("nonzero") < 0 {
        return Ok(CountResult { k, count: 0, density: BigRational::from_integer(0.into()), stabilized: false });
    }
    let ring = FastRing::new(&spec, k, cfg.budget.max(1))?;
    let size = ring.size();
    let comps = components(q);
    let enumeration_cost: u128 = comps
        .iter()
        .map(|c| (size as u128).saturating_pow(c.len() as u32).saturating_mul(c.len() as u128))
        .fold(0u128, |a, b| a.saturating_add(b));
    if enumeration_cost > cfg.budget as u128 {
        return Err(Error::BudgetExceeded(format!(
            "enumerating the components costs about {enumeration_cost} ring operations (budget {})",
            cfg.budget
        )));
    }
    let res = q.residues(k)?;
    let target = ring.sub(&ring.from_ring(&n.reduce_integral(k)?), &ring.from_ring(&res.constant));
    let target = ring.encode(&target);
    let table: Vec<Elem> = (0..size).map(|i| ring.decode(i)).collect();
    let polys: Vec<ComponentPoly> = comps
        .iter()
        .map(|vars| ComponentPoly {
            diag: vars.iter().map(|&v| ring.from_ring(&res.quad[v][v])).collect(),
            lin: vars.iter().map(|&v| ring.from_ring(&res.lin[v])).collect(),
            cross: vars
                .iter()
                .enumerate()
                .map(|(d, &v)| vars[..d].iter().map(|&w| ring.from_ring(&res.quad[w.min(v)][w.max(v)])).collect())
                .collect(),
        })
        .collect();
    let budget = cfg.budget as u128;
    let count = run_in_pool(cfg, || -> Result<u128> {
        let hists: Vec<Vec<u64>> = polys.iter().map(|c| histogram(&ring, c, &table)).collect();
        let (last, rest) = hists.split_last().expect("r >= 1");
        // dense running distribution of the partial sums
        let mut acc: Vec<u128> = vec![0; size];
        acc[0] = 1;
        for (step, h) in rest.iter().enumerate() {
            if step == 0 {
                acc = h.iter().map(|&c| c as u128).collect();
                continue;
            }
            let support = |v: &[u128]| -> Vec<(usize, u128)> {
                v.iter().enumerate().filter(|(_, &c)| c != 0).map(|(i, &c)| (i, c)).collect()
            };
            let sa = support(&acc);
            let sh = support(&h.iter().map(|&c| c as u128).collect::<Vec<_>>());
            let cost = sa.len() as u128 * sh.len() as u128;
            if cost > budget {
                return Err(Error::BudgetExceeded(format!(
                    "convolution costs about {cost} ring operations (budget {budget})"
                )));
            }
            acc = sa
                .par_iter()
                .fold(
                    || vec![0u128; size],
                    |mut out, &(v, c)| {
                        for &(w, d) in &sh {
                            out[ring.add_idx(v, w)] += c * d;
                        }
                        out
                    },
                )
                .reduce(
                    || vec![0u128; size],
                    |mut a, b| {
                        for (x, y) in a.iter_mut().zip(b) {
                            *x += y;
                        }
                        a
                    },
                );
        }
        Ok(acc
            .par_iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(v, &c)| c * last[ring.sub_idx(target, v)] as u128)
            .sum())
    })?;
    let density = BigRational::new(BigInt::from(count), scale);
    Ok(CountResult { k, count, density, stabilized: false })
}

/// `density_k` for `k = 1..=k_max`.
pub fn density_sequence(
    q: &QuadraticPolynomial,
    n: &PadicApprox,
    k_max: u32,
    cfg: &OracleConfig,
) -> Result<Vec<CountResult>> {
    (1..=k_max).map(|k| count_density(q, n, k, cfg)).collect()
}

/// The first level whose density repeats at the next two levels; otherwise the
/// level-`k_max` value with `stabilized = false`.
pub fn stabilized_density(q: &QuadraticPolynomial, n: &PadicApprox, k_max: u32, cfg: &OracleConfig) -> Result<CountResult> {
    let seq = density_sequence(q, n, k_max, cfg)?;
    Ok(stabilize(&seq))
}

/// Stabilization on an already computed sequence starting at `k = 1`.
pub fn stabilize(seq: &[CountResult]) -> CountResult {
    for w in seq.windows(3) {
        if w[0].density == w[1].density && w[1].density == w[2].density {
            return CountResult { stabilized: true, ..w[0].clone() };
        }
    }
    seq.last().cloned().expect("nonempty sequence")
}
