//! Integral quadratic polynomials, changes of variables and reduction to
//! diagonal (odd `p`) or block (`p = 2`) normal forms.
mod poly;
mod reduce;

pub use poly::{apply_transform, constant_normalize, determinant, PolynomialJson, QuadraticPolynomial, Residues, Transform};
pub use reduce::{reduce_dyadic, reduce_nondyadic, select_rho, ReducedDyadic, ReducedNonDyadic};
