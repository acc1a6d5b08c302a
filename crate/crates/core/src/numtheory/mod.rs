//! Ground-truth number theory: primality, segmented sieving, prime counts
//! per block, and Ω(n) for false-positive analysis.

mod factor;
mod primality;
mod sieve;

pub use factor::{count_prime_factors, omega_range, pollard_brent, TRIAL_BOUND};
pub use primality::{is_prime, MAX_INPUT};
pub use sieve::{
    pnt_expected_count, prime_block_counts, primes_up_to, sieve_range, sieve_range_capped,
    BlockCounts, PrimeBitmap, DEFAULT_SPAN_CAP,
};
