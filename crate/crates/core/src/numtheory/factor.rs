//! Prime-factor counting with multiplicity.
//!
//! Trial division by primes below [`TRIAL_BOUND`] strips small factors; any
//! remaining cofactor is split with Pollard's rho (Brent's cycle detection)
//! until every piece passes the primality test.

use std::sync::OnceLock;

use crate::error::{Error, Result};

use super::primality::{is_prime_unchecked, mul_mod, MAX_INPUT};
use super::sieve::{primes_up_to, DEFAULT_SPAN_CAP};

pub const TRIAL_BOUND: u64 = 1 << 12;

fn small_primes() -> &'static [u64] {
    static PRIMES: OnceLock<Vec<u64>> = OnceLock::new();
    PRIMES.get_or_init(|| primes_up_to(TRIAL_BOUND))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Ω(n): number of prime factors of `n` counted with multiplicity. Ω(1) = 0.
pub fn count_prime_factors(n: u64) -> Result<u32> {
    if n == 0 {
        return Err(Error::Argument("Ω(0) is undefined".into()));
    }
    if n >= MAX_INPUT {
        return Err(Error::Range(format!("{n} >= 2^63")));
    }
    let mut rest = n;
    let mut count = 0;
    for &p in small_primes() {
        if p * p > rest {
            break;
        }
        while rest.is_multiple_of(p) {
            rest /= p;
            count += 1;
        }
    }
    if rest > 1 {
        count += count_large(rest);
    }
    Ok(count)
}

/// Ω of a cofactor with no prime factor below the trial bound (or a prime).
fn count_large(n: u64) -> u32 {
    if n == 1 {
        return 0;
    }
    if is_prime_unchecked(n) {
        return 1;
    }
    // n = p^2 shows up often enough that the square-root check pays for itself
    let r = n.isqrt();
    if r * r == n {
        return 2 * count_large(r);
    }
    let d = pollard_brent(n);
    count_large(d) + count_large(n / d)
}

/// A nontrivial factor of the odd composite `n`.
pub fn pollard_brent(n: u64) -> u64 {
    if n.is_multiple_of(2) {
        return 2;
    }
    for c in 1..n {
        if let Some(d) = brent_attempt(n, 2, c) {
            return d;
        }
    }
    unreachable!("no factor found for composite {n}")
}

fn brent_attempt(n: u64, x0: u64, c: u64) -> Option<u64> {
    const BATCH: u64 = 128;
    let f = |x: u64| (mul_mod(x, x, n) + c) % n;

    let mut y = x0;
    let mut r = 1u64;
    let mut q = 1u64;
    let mut g = 1u64;
    let mut x = y;
    let mut ys = y;

    while g == 1 {
        x = y;
        for _ in 0..r {
            y = f(y);
        }
        let mut k = 0;
        while k < r && g == 1 {
            ys = y;
            for _ in 0..BATCH.min(r - k) {
                y = f(y);
                q = mul_mod(q, x.abs_diff(y), n);
            }
            g = gcd(q, n);
            k += BATCH;
        }
        r *= 2;
        if r > 1 << 24 {
            return None;
        }
    }
    if g == n {
        // batched product overshot: replay one step at a time
        loop {
            ys = f(ys);
            g = gcd(x.abs_diff(ys), n);
            if g > 1 {
                break;
            }
        }
    }
    (g != n).then_some(g)
}

/// Ω(n) for every `n` in `[lo, hi)` by sieving with the primes up to `sqrt(hi)`.
/// Ω(0) is reported as 0.
pub fn omega_range(lo: u64, hi: u64) -> Result<Vec<u32>> {
    if lo >= hi {
        return Err(Error::Argument(format!("range [{lo}, {hi}) is empty")));
    }
    if hi > MAX_INPUT {
        return Err(Error::Range(format!("bound {hi} exceeds 2^63")));
    }
    if hi - lo > DEFAULT_SPAN_CAP {
        return Err(Error::Argument(format!("span {} exceeds cap {DEFAULT_SPAN_CAP}", hi - lo)));
    }
    let len = (hi - lo) as usize;
    let mut rest: Vec<u64> = (lo..hi).collect();
    let mut count = vec![0u32; len];
    for p in primes_up_to((hi - 1).isqrt()) {
        let mut m = lo.div_ceil(p) * p;
        while m < hi {
            let i = (m - lo) as usize;
            while rest[i].is_multiple_of(p) && rest[i] != 0 {
                rest[i] /= p;
                count[i] += 1;
            }
            m += p;
        }
    }
    // whatever survives has no factor <= sqrt(n), so it is 1 or a prime
    for (c, r) in count.iter_mut().zip(&rest) {
        if *r > 1 {
            *c += 1;
        }
    }
    Ok(count)
}
