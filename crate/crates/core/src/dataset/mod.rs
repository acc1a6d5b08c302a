//! Integer ranges, train/test splits, resampled epochs and lazily encoded batches.
//!
//! A range is tiled by non-overlapping windows of `L` consecutive integers
//! whose starts are congruent to `shift` modulo `L` in `s`. With `shift = 0`
//! window boundaries sit at multiples of `L`, so position `i` in a window always
//! holds an `s` with `s mod L = i`, whichever range the window comes from.
//! Partial windows at either end of a range are dropped. `shift` is 0 unless
//! random tiling is on.

mod labels;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{encode_window, EncodingShape, SequenceSample};
use crate::error::{Error, Result};

pub use labels::{read_bitmap_file, write_bitmap_file, LabelStore, LABEL_SEGMENT};

/// Integers `offset + start .. offset + end`; `start` and `end` are range-relative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub offset: u64,
    pub start: u64,
    pub end: u64,
}

impl RangeSpec {
    pub fn new(offset: u64, start: u64, end: u64) -> Result<Self> {
        let r = RangeSpec { offset, start, end };
        if start >= end {
            return Err(Error::Argument(format!("empty range [{start}, {end})")));
        }
        r.abs_hi_checked()?;
        Ok(r)
    }

    fn abs_hi_checked(&self) -> Result<u64> {
        self.offset
            .checked_add(self.end)
            .ok_or_else(|| Error::Range(format!("offset {} + end {} overflows", self.offset, self.end)))
    }

    pub fn span(&self) -> u64 {
        self.end - self.start
    }

    pub fn abs_lo(&self) -> u64 {
        self.offset + self.start
    }

    pub fn abs_hi(&self) -> u64 {
        self.offset + self.end
    }

    pub fn validate(&self, shape: &EncodingShape) -> Result<()> {
        if self.start >= self.end {
            return Err(Error::Config(format!(
                "range start {} must be below end {}",
                self.start, self.end
            )));
        }
        self.abs_hi_checked()?;
        if self.end > shape.capacity() {
            return Err(Error::Capacity {
                index: self.end - 1,
                capacity: shape.capacity(),
            });
        }
        Ok(())
    }

    fn overlaps(&self, other: &RangeSpec) -> bool {
        self.abs_lo() < other.abs_hi() && other.abs_lo() < self.abs_hi()
    }
}

/// Smallest `s >= range.start` with `s mod len = shift mod len`.
fn first_start(range: &RangeSpec, shift: u64, len: u64) -> u64 {
    let r = shift % len;
    range.start + (r + len - range.start % len) % len
}

fn window_count(range: &RangeSpec, shift: u64, len: u64) -> u64 {
    let first = first_start(range, shift, len);
    range.end.saturating_sub(first) / len
}

/// Number of whole aligned windows of length `len` in `range`; `floor(span / len)`
/// when `start` is a multiple of `len`.
pub fn enumerate_windows(range: &RangeSpec, len: usize) -> Result<u64> {
    if len == 0 {
        return Err(Error::Argument("window length must be >= 1".into()));
    }
    let count = if range.end > range.start {
        window_count(range, 0, len as u64)
    } else {
        0
    };
    if count == 0 {
        return Err(Error::Argument(format!(
            "range [{}, {}) holds no whole window of length {len}",
            range.start, range.end
        )));
    }
    Ok(count)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train: RangeSpec,
    pub test: RangeSpec,
    pub shape: EncodingShape,
    pub sample_fraction: f64,
    #[serde(default)]
    pub random_tiling: bool,
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        self.train.validate(&self.shape)?;
        self.test.validate(&self.shape)?;
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "sample_fraction must be in (0, 1], got {}",
                self.sample_fraction
            )));
        }
        if self.train.overlaps(&self.test) {
            return Err(Error::Config(format!(
                "train [{}, {}) and test [{}, {}) overlap",
                self.train.abs_lo(),
                self.train.abs_hi(),
                self.test.abs_lo(),
                self.test.abs_hi()
            )));
        }
        enumerate_windows(&self.train, self.shape.seq_len)?;
        enumerate_windows(&self.test, self.shape.seq_len)?;
        Ok(())
    }
}

/// `round(fraction * total)` with ties to even, at least 1.
pub fn sample_size(total: u64, fraction: f64) -> u64 {
    ((fraction * total as f64).round_ties_even() as u64).clamp(1, total.max(1))
}

/// Windows drawn for one epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochSample {
    pub epoch_index: u64,
    pub seed: u64,
    /// Tiling shift in `[0, L)`; 0 without random tiling.
    pub shift: u64,
    /// Sorted, unique.
    pub window_ids: Vec<u64>,
}

/// Independent per-epoch seed derived from `(master_seed, epoch)`.
pub fn epoch_seed(master_seed: u64, epoch: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(epoch);
    rng.gen()
}

/// Draw `round(fraction * windows)` training windows uniformly without replacement.
pub fn sample_epoch(split: &SplitConfig, epoch: u64, master_seed: u64) -> Result<EpochSample> {
    let len = split.shape.seq_len as u64;
    let seed = epoch_seed(master_seed, epoch);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = if split.random_tiling && split.train.span() >= 2 * len {
        rng.gen_range(0..len)
    } else {
        0
    };
    let total = window_count(&split.train, shift, len);
    if total == 0 {
        return Err(Error::Argument(format!(
            "training range of {} integers is shorter than window length {len}",
            split.train.span()
        )));
    }
    let k = sample_size(total, split.sample_fraction);
    let mut window_ids: Vec<u64> = if k == total {
        (0..total).collect()
    } else {
        let total = usize::try_from(total)
            .map_err(|_| Error::Range(format!("{total} windows do not fit in memory")))?;
        sample(&mut rng, total, k as usize)
            .into_iter()
            .map(|i| i as u64)
            .collect()
    };
    window_ids.sort_unstable();
    Ok(EpochSample {
        epoch_index: epoch,
        seed,
        shift,
        window_ids,
    })
}

/// Relative start index of window `id`.
pub fn window_start(range: &RangeSpec, shift: u64, len: usize, id: u64) -> u64 {
    first_start(range, shift, len as u64) + id * len as u64
}

/// Encode one window of `range`, pulling labels from `store`.
pub fn load_window(
    store: &mut LabelStore,
    shape: &EncodingShape,
    shift: u64,
    id: u64,
) -> Result<SequenceSample> {
    let range = *store.range();
    let s = window_start(&range, shift, shape.seq_len, id);
    let lo = range.offset + s;
    let bm = store.bitmap(lo, lo + shape.seq_len as u64)?;
    encode_window(s, shape, range.offset, &bm)
}

/// Lazily encoded batches of one epoch, in an order shuffled by the epoch seed.
pub struct Batches<'a> {
    store: &'a mut LabelStore,
    shape: EncodingShape,
    shift: u64,
    order: Vec<u64>,
    pos: usize,
    batch_size: usize,
}

impl Batches<'_> {
    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

impl Iterator for Batches<'_> {
    type Item = Result<Vec<SequenceSample>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let ids = &self.order[self.pos..end];
        self.pos = end;
        let batch = ids
            .iter()
            .map(|&id| load_window(self.store, &self.shape, self.shift, id))
            .collect();
        Some(batch)
    }
}

/// Batch stream over the windows of `sample`. `store` must cover the training range.
pub fn make_batches<'a>(
    sample: &EpochSample,
    shape: &EncodingShape,
    store: &'a mut LabelStore,
    batch_size: usize,
) -> Result<Batches<'a>> {
    if batch_size == 0 {
        return Err(Error::Argument("batch_size must be >= 1".into()));
    }
    let mut order = sample.window_ids.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(sample.seed);
    rng.set_stream(1);
    order.shuffle(&mut rng);
    Ok(Batches {
        store,
        shape: *shape,
        shift: sample.shift,
        order,
        pos: 0,
        batch_size,
    })
}

/// Deterministic subset of `total` window ids, sorted. `fraction = 1` keeps all.
pub fn subsample_windows(total: u64, fraction: f64, seed: u64) -> Result<Vec<u64>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Argument(format!("subsample fraction {fraction} not in (0, 1]")));
    }
    let k = sample_size(total, fraction);
    if k >= total {
        return Ok((0..total).collect());
    }
    let total = usize::try_from(total)
        .map_err(|_| Error::Range(format!("{total} windows do not fit in memory")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u64> = sample(&mut rng, total, k as usize)
        .into_iter()
        .map(|i| i as u64)
        .collect();
    ids.sort_unstable();
    Ok(ids)
}
