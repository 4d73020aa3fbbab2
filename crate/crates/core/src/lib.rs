//! Local densities of integral quadratic polynomials over unramified `p`-adic
//! fields, evaluated from closed forms and checked against brute-force counts.

pub mod density_engine;
pub mod error;
pub mod exact_values;
pub mod gauss_engine;
pub mod oracle;
pub mod quadratic_model;
pub mod residue_arith;

pub use error::{Error, Result};
