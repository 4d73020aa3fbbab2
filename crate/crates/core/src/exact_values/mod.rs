//! Exact closed-form values and finite exponential sums.

mod closed;
mod expsum;

pub use closed::{parse_rational, rational_string, ClosedValue};
pub use expsum::{compare, ExpSum};
