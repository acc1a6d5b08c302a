//! Deterministic Miller-Rabin for 64-bit inputs.
//!
//! The seven-base set below (Jim Sinclair, 2011) has no strong pseudoprime
//! below 2^64, so the test is exact for every input accepted here.

use crate::error::{Error, Result};

/// Exclusive upper bound on inputs to the primality and factoring routines.
pub const MAX_INPUT: u64 = 1 << 63;

const SMALL_PRIMES: [u64; 15] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47];

const BASES: [u64; 7] = [2, 325, 9375, 28178, 450775, 9780504, 1795265022];

#[inline]
pub(crate) fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub(crate) fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Primality of `n`; errors for `n >= 2^63`.
pub fn is_prime(n: u64) -> Result<bool> {
    if n >= MAX_INPUT {
        return Err(Error::Range(format!("{n} >= 2^63")));
    }
    Ok(is_prime_unchecked(n))
}

pub(crate) fn is_prime_unchecked(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &p in &SMALL_PRIMES {
        if n == p {
            return true;
        }
        if n.is_multiple_of(p) {
            return false;
        }
    }
    // every composite below 47^2 has a factor in SMALL_PRIMES
    if n < 47 * 47 {
        return true;
    }

    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'bases: for &a in &BASES {
        let a = a % n;
        if a == 0 {
            continue;
        }
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}
