use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;

use super::OracleConfig;
use crate::error::{Error, Result};
use crate::exact_values::ExpSum;
use crate::residue_arith::{enumerate_ring, FieldSpec, Phase, RingElem};

/// Region of `o^d` summed over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Domain {
    Full,
    /// Every coordinate a unit.
    Units,
    /// Coordinate `i` congruent to `residues[i]` modulo `p`.
    Shell(Vec<RingElem>),
}

impl Domain {
    fn admits(&self, xs: &[RingElem]) -> bool {
        match self {
            Domain::Full => true,
            Domain::Units => xs.iter().all(|x| x.is_unit()),
            Domain::Shell(rs) => xs.iter().zip(rs).all(|(x, r)| x.residue() == r.residue()),
        }
    }
}

/// `q^(-k d) sum_{x in (o / p^k)^d, x in domain} w(x) exp(2 pi i phase(x))`, where
/// `integrand` returns the weight `w` and the phase.
pub fn sum_integral_oracle<F>(
    spec: &Arc<FieldSpec>,
    integrand: F,
    k: u32,
    d: usize,
    domain: &Domain,
    cfg: &OracleConfig,
) -> Result<ExpSum>
where
    F: Fn(&[RingElem]) -> Result<(i64, Phase)> + Sync,
{
    if d == 0 || k == 0 {
        return Err(Error::InvalidInput("the integral oracle needs d >= 1 and k >= 1".into()));
    }
    if let Domain::Shell(rs) = domain {
        if rs.len() != d {
            return Err(Error::InvalidInput("shell residues must match the dimension".into()));
        }
    }
    let points = (spec.q() as u128).checked_pow(k * d as u32).unwrap_or(u128::MAX);
    if points > cfg.budget as u128 {
        return Err(Error::BudgetExceeded(format!("{points} sample points exceed the budget {}", cfg.budget)));
    }
    let elems: Vec<RingElem> = enumerate_ring(spec, k).collect();
    let p = spec.p();
    let run = || -> Result<BTreeMap<Phase, i64>> {
        (0..elems.len())
            .into_par_iter()
            .map(|first| -> Result<BTreeMap<Phase, i64>> {
                let mut acc = BTreeMap::new();
                let mut idx = vec![0usize; d];
                idx[0] = first;
                loop {
                    let xs: Vec<RingElem> = idx.iter().map(|&i| elems[i].clone()).collect();
                    if domain.admits(&xs) {
                        let (w, ph) = integrand(&xs)?;
                        if w != 0 {
                            *acc.entry(ph).or_insert(0) += w;
                        }
                    }
                    // odometer over the remaining coordinates
                    let mut pos = d;
                    loop {
                        if pos == 1 {
                            return Ok(acc);
                        }
                        pos -= 1;
                        idx[pos] += 1;
                        if idx[pos] < elems.len() {
                            break;
                        }
                        idx[pos] = 0;
                    }
                }
            })
            .try_reduce(BTreeMap::new, |mut a, b| {
                for (ph, m) in b {
                    *a.entry(ph).or_insert(0) += m;
                }
                Ok(a)
            })
    };
    let terms = if cfg.parallel {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool").install(run)?
    };
    let scale = BigRational::new(BigInt::from(1), BigInt::from(spec.q()).pow(k * d as u32));
    Ok(ExpSum::from_terms(p, terms).with_scale(scale))
}
