//! Segmented sieve of Eratosthenes over arbitrary `[lo, hi)` windows.

use crate::error::{Error, Result};

use super::primality::MAX_INPUT;

/// Largest span a single `sieve_range` call accepts.
pub const DEFAULT_SPAN_CAP: u64 = 1_000_000_000;

const SEGMENT: usize = 1 << 18;

/// Primality labels for every integer in `[lo, hi)`, one bit each.
#[derive(Clone, PartialEq, Eq)]
pub struct PrimeBitmap {
    lo: u64,
    hi: u64,
    words: Vec<u64>,
}

impl std::fmt::Debug for PrimeBitmap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PrimeBitmap")
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("primes", &self.count_primes())
            .finish()
    }
}

impl PrimeBitmap {
    fn empty(lo: u64, hi: u64) -> Self {
        let len = (hi - lo) as usize;
        PrimeBitmap {
            lo,
            hi,
            words: vec![0; len.div_ceil(64)],
        }
    }

    /// Rebuild from packed little-endian bytes (bit `i` is integer `lo + i`).
    pub fn from_packed_bytes(lo: u64, hi: u64, bytes: &[u8]) -> Result<Self> {
        if lo >= hi {
            return Err(Error::Argument(format!("empty bitmap range [{lo}, {hi})")));
        }
        let len = (hi - lo) as usize;
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::Argument(format!(
                "bitmap of {len} bits needs {} bytes, got {}",
                len.div_ceil(8),
                bytes.len()
            )));
        }
        let mut bm = PrimeBitmap::empty(lo, hi);
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            bm.words[i] = u64::from_le_bytes(buf);
        }
        // stray bits past `len` would corrupt popcounts
        if !len.is_multiple_of(64) {
            let last = bm.words.len() - 1;
            bm.words[last] &= (1u64 << (len % 64)) - 1;
        }
        Ok(bm)
    }

    /// Bitmap over `[lo, lo + labels.len())` from explicit labels.
    pub fn from_labels(lo: u64, labels: &[bool]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Argument("empty label list".into()));
        }
        let hi = lo
            .checked_add(labels.len() as u64)
            .ok_or_else(|| Error::Range(format!("bitmap at {lo} overflows")))?;
        let mut bm = PrimeBitmap::empty(lo, hi);
        for (i, _) in labels.iter().enumerate().filter(|(_, &b)| b) {
            bm.set(i);
        }
        Ok(bm)
    }

    /// Packed little-endian bytes, `ceil(len / 8)` long.
    pub fn to_packed_bytes(&self) -> Vec<u8> {
        let n = self.len().div_ceil(8);
        let mut out = Vec::with_capacity(self.words.len() * 8);
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.truncate(n);
        out
    }

    pub fn lo(&self) -> u64 {
        self.lo
    }

    pub fn hi(&self) -> u64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.lo == self.hi
    }

    pub fn covers(&self, n: u64) -> bool {
        n >= self.lo && n < self.hi
    }

    /// Label of the absolute integer `n`.
    pub fn get(&self, n: u64) -> Result<bool> {
        if !self.covers(n) {
            return Err(Error::Coverage {
                lo: self.lo,
                hi: self.hi,
                value: n,
            });
        }
        Ok(self.bit((n - self.lo) as usize))
    }

    #[inline]
    fn bit(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn count_primes(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Number of primes in the absolute sub-range `[a, b)`, clipped to the bitmap.
    pub fn count_in(&self, a: u64, b: u64) -> u64 {
        let a = a.max(self.lo);
        let b = b.min(self.hi);
        (a..b).filter(|&n| self.bit((n - self.lo) as usize)).count() as u64
    }

    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.len()).filter(|&i| self.bit(i)).map(|i| self.lo + i as u64)
    }

    pub fn composites(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.len())
            .map(|i| self.lo + i as u64)
            .filter(|&n| n >= 4 && !self.bit((n - self.lo) as usize))
    }
}

/// All primes `<= limit` by a plain sieve.
pub fn primes_up_to(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let n = limit as usize + 1;
    let mut composite = vec![false; n];
    let mut out = Vec::new();
    for i in 2..n {
        if composite[i] {
            continue;
        }
        out.push(i as u64);
        let mut j = i * i;
        while j < n {
            composite[j] = true;
            j += i;
        }
    }
    out
}

/// Segmented sieve of `[lo, hi)` with the default span cap.
pub fn sieve_range(lo: u64, hi: u64) -> Result<PrimeBitmap> {
    sieve_range_capped(lo, hi, DEFAULT_SPAN_CAP)
}

pub fn sieve_range_capped(lo: u64, hi: u64, span_cap: u64) -> Result<PrimeBitmap> {
    if lo >= hi {
        return Err(Error::Argument(format!("sieve range [{lo}, {hi}) is empty")));
    }
    if hi > MAX_INPUT {
        return Err(Error::Range(format!("sieve bound {hi} exceeds 2^63")));
    }
    if hi - lo > span_cap {
        return Err(Error::Argument(format!(
            "sieve span {} exceeds cap {span_cap}",
            hi - lo
        )));
    }

    let base = primes_up_to((hi - 1).isqrt());
    let mut bm = PrimeBitmap::empty(lo, hi);
    let mut composite = vec![false; SEGMENT];

    let mut seg_lo = lo;
    while seg_lo < hi {
        let seg_hi = seg_lo.saturating_add(SEGMENT as u64).min(hi);
        let seg_len = (seg_hi - seg_lo) as usize;
        composite[..seg_len].fill(false);

        for &p in &base {
            if p * p >= seg_hi {
                break;
            }
            let first_multiple = seg_lo.div_ceil(p) * p;
            let mut m = first_multiple.max(p * p);
            while m < seg_hi {
                composite[(m - seg_lo) as usize] = true;
                m += p;
            }
        }

        let offset = (seg_lo - lo) as usize;
        for (i, &c) in composite[..seg_len].iter().enumerate() {
            if !c && seg_lo + i as u64 >= 2 {
                bm.set(offset + i);
            }
        }
        seg_lo = seg_hi;
    }
    Ok(bm)
}

/// Per-block prime counts over a contiguous range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockCounts {
    pub lo: u64,
    pub block_size: u64,
    pub counts: Vec<u64>,
}

impl BlockCounts {
    pub fn hi(&self) -> u64 {
        self.lo + self.block_size * self.counts.len() as u64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn block_starts(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.counts.len() as u64).map(|k| self.lo + k * self.block_size)
    }

    pub fn mean(&self) -> f64 {
        self.total() as f64 / self.counts.len() as f64
    }
}

/// Count primes in each `block_size`-wide block of `[lo, hi)`.
pub fn prime_block_counts(lo: u64, hi: u64, block_size: u64) -> Result<BlockCounts> {
    if block_size == 0 {
        return Err(Error::Argument("block size must be positive".into()));
    }
    if lo >= hi {
        return Err(Error::Argument(format!("block range [{lo}, {hi}) is empty")));
    }
    if !(hi - lo).is_multiple_of(block_size) {
        return Err(Error::Argument(format!(
            "block size {block_size} does not divide span {}",
            hi - lo
        )));
    }
    let bm = sieve_range(lo, hi)?;
    let counts = (0..(hi - lo) / block_size)
        .map(|k| {
            let a = lo + k * block_size;
            bm.count_in(a, a + block_size)
        })
        .collect();
    Ok(BlockCounts {
        lo,
        block_size,
        counts,
    })
}

/// Expected primes in a block of `block_size` integers centred at `n`, `block_size / ln n`.
pub fn pnt_expected_count(n: u64, block_size: u64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Argument(format!("PNT density needs n >= 2, got {n}")));
    }
    Ok(block_size as f64 / (n as f64).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numtheory::is_prime;

    #[test]
    fn first_ten() {
        let bm = sieve_range(0, 10).unwrap();
        assert_eq!(bm.primes().collect::<Vec<_>>(), vec![2, 3, 5, 7]);
    }

    #[test]
    fn pi_of_a_million() {
        let bm = sieve_range(0, 1_000_000).unwrap();
        assert_eq!(bm.count_primes(), 78498);
        for n in (0..1_000_000).step_by(997) {
            assert_eq!(bm.get(n).unwrap(), is_prime(n).unwrap());
        }
    }

    #[test]
    fn offset_segment_matches_miller_rabin() {
        let lo = 1_000_000_000_000;
        let bm = sieve_range(lo, lo + 10_000).unwrap();
        for n in lo..lo + 10_000 {
            assert_eq!(bm.get(n).unwrap(), is_prime(n).unwrap(), "n = {n}");
        }
    }

    #[test]
    fn segment_boundaries() {
        // spans several internal segments
        let lo = 123_456;
        let hi = lo + 3 * SEGMENT as u64 + 17;
        let bm = sieve_range(lo, hi).unwrap();
        for n in (lo..hi).step_by(13) {
            assert_eq!(bm.get(n).unwrap(), is_prime(n).unwrap());
        }
    }

    #[test]
    fn argument_errors() {
        assert!(matches!(sieve_range(10, 10), Err(Error::Argument(_))));
        assert!(matches!(sieve_range(11, 10), Err(Error::Argument(_))));
        assert!(matches!(sieve_range_capped(0, 100, 50), Err(Error::Argument(_))));
        assert!(matches!(sieve_range(0, 10).unwrap().get(10), Err(Error::Coverage { .. })));
    }

    #[test]
    fn packed_round_trip() {
        let bm = sieve_range(999, 1_999).unwrap();
        let bytes = bm.to_packed_bytes();
        assert_eq!(bytes.len(), 125);
        assert_eq!(PrimeBitmap::from_packed_bytes(999, 1_999, &bytes).unwrap(), bm);
        let labels: Vec<bool> = (999..1_999).map(|n| bm.get(n).unwrap()).collect();
        assert_eq!(PrimeBitmap::from_labels(999, &labels).unwrap(), bm);
        assert!(PrimeBitmap::from_labels(0, &[]).is_err());
    }

    #[test]
    fn block_counts() {
        assert_eq!(prime_block_counts(0, 1000, 1000).unwrap().counts, vec![168]);
        let two = prime_block_counts(0, 2000, 1000).unwrap();
        assert_eq!(two.total(), 303);
        assert_eq!(
            prime_block_counts(1_000_000, 3_000_000, 1000).unwrap().counts.len(),
            2000
        );
        assert!(prime_block_counts(0, 1500, 1000).is_err());
    }

    #[test]
    fn pnt_density() {
        let v = pnt_expected_count(1_000_000, 1000).unwrap();
        assert!((v - 72.382_413_650_6).abs() < 1e-6);
        // ceil(e) = 3: 1/ln 3
        assert!((pnt_expected_count(3, 1).unwrap() - 1.0 / 3f64.ln()).abs() < 1e-12);
        assert!(pnt_expected_count(1, 1000).is_err());
        let mut prev = f64::INFINITY;
        for n in [2u64, 10, 1000, 1_000_000, 1 << 40] {
            let v = pnt_expected_count(n, 1000).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }
}
