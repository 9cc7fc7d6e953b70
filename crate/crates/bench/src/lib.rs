//! Fixtures shared by the benchmarks.

use slabperc::environment::generate_environment_stream;
use slabperc::{Environment, RenewalParams, RenormSpec, Result};

pub const SEED: u64 = 7;

/// A renewal environment with exponent 2.5 covering `window` columns.
pub fn renewal_environment(window: u64) -> Result<Environment> {
    generate_environment_stream(&RenewalParams::new(2.5, SEED)?, window, 0)
}

/// A `cw x cw` block window of half-size `n` on a renewal environment.
pub fn renorm_spec(n: usize, cw: usize, k: usize) -> Result<RenormSpec> {
    let env = renewal_environment(2 * n as u64 * (cw as u64 + 1))?;
    RenormSpec::new(n, 0.6, k, cw, cw, &env, Default::default())
}
