//! Sparse one-hot encoding of integers into an `M x N x O` volume.
//!
//! Each integer at range-relative index `s` occupies exactly one cell
//! `(m, n, o)` of the volume. Only the index tuple is ever stored; the dense
//! tensor exists solely in tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numtheory::PrimeBitmap;

/// Extents of the encoding volume plus the sequence length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingShape {
    pub m: usize,
    pub n: usize,
    pub o: usize,
    pub seq_len: usize,
}

impl EncodingShape {
    pub fn new(m: usize, n: usize, o: usize, seq_len: usize) -> Result<Self> {
        let shape = EncodingShape { m, n, o, seq_len };
        shape.validate()?;
        Ok(shape)
    }

    /// Cube `side^3` volume.
    pub fn cube(side: usize, seq_len: usize) -> Result<Self> {
        Self::new(side, side, side, seq_len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.o == 0 || self.seq_len == 0 {
            return Err(Error::Argument(format!(
                "encoding extents must be positive, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Number of distinct cells, `M * N * O`.
    pub fn capacity(&self) -> u64 {
        (self.m * self.n * self.o) as u64
    }
}

/// The non-zero index `(s, m, n, o)` of one encoded integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SparseCode {
    pub s: u64,
    pub m: usize,
    pub n: usize,
    pub o: usize,
}

/// `L` consecutive encoded integers with their absolute values and labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceSample {
    pub codes: Vec<SparseCode>,
    pub values: Vec<u64>,
    pub labels: Vec<bool>,
}

impl SequenceSample {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// Cell coordinates of index `s`.
pub fn encode_index(s: u64, shape: &EncodingShape) -> Result<(usize, usize, usize)> {
    let capacity = shape.capacity();
    if s >= capacity {
        return Err(Error::Capacity { index: s, capacity });
    }
    let plane = (shape.n * shape.o) as u64;
    let m = s / plane;
    let n = (s % plane) / shape.o as u64;
    let o = s % shape.o as u64;
    Ok((m as usize, n as usize, o as usize))
}

/// Inverse of [`encode_index`].
pub fn decode_index(m: usize, n: usize, o: usize, shape: &EncodingShape) -> Result<u64> {
    if m >= shape.m || n >= shape.n || o >= shape.o {
        return Err(Error::Argument(format!(
            "coordinate ({m}, {n}, {o}) outside volume {}x{}x{}",
            shape.m, shape.n, shape.o
        )));
    }
    Ok(((m * shape.n + n) * shape.o + o) as u64)
}

pub fn sparse_code(s: u64, shape: &EncodingShape) -> Result<SparseCode> {
    let (m, n, o) = encode_index(s, shape)?;
    Ok(SparseCode { s, m, n, o })
}

/// Encode the window `s in [start_s, start_s + L)` whose absolute values are
/// `offset + s`, labelling each from `primality`.
pub fn encode_window(
    start_s: u64,
    shape: &EncodingShape,
    offset: u64,
    primality: &PrimeBitmap,
) -> Result<SequenceSample> {
    let len = shape.seq_len;
    let end_s = start_s + len as u64;
    if end_s > shape.capacity() {
        return Err(Error::Capacity {
            index: end_s - 1,
            capacity: shape.capacity(),
        });
    }
    let mut codes = Vec::with_capacity(len);
    let mut values = Vec::with_capacity(len);
    let mut labels = Vec::with_capacity(len);
    for s in start_s..end_s {
        let value = offset
            .checked_add(s)
            .ok_or_else(|| Error::Range(format!("offset {offset} + {s} overflows")))?;
        codes.push(sparse_code(s, shape)?);
        labels.push(primality.get(value)?);
        values.push(value);
    }
    Ok(SequenceSample {
        codes,
        values,
        labels,
    })
}
