//! Brute-force ground truth: solution counts modulo `p^k` and finite sums that
//! discretize the Gauss-type integrals.
mod count;
mod fast;
mod integral;

pub use count::{count_density, density_sequence, stabilize, stabilized_density, CountResult};
pub use integral::{sum_integral_oracle, Domain};

/// Default cap on estimated ring operations per oracle call.
pub const DEFAULT_BUDGET: u64 = 100_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleConfig {
    /// Estimated ring operations allowed per call.
    pub budget: u64,
    pub parallel: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { budget: DEFAULT_BUDGET, parallel: true }
    }
}

impl OracleConfig {
    /// Default settings, with the budget taken from `PADIC_DENSITY_BUDGET` when set.
    pub fn from_env() -> Self {
        let budget = std::env::var("PADIC_DENSITY_BUDGET").ok().and_then(|s| s.trim().parse().ok());
        OracleConfig { budget: budget.unwrap_or(DEFAULT_BUDGET), parallel: true }
    }
}
