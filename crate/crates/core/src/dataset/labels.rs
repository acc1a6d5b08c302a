//! Segment-wise primality labels for one range, optionally cached on disk.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numtheory::{sieve_range, PrimeBitmap};

use super::RangeSpec;

const MAGIC: &[u8; 4] = b"PCBM";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 * 4;

/// Range-relative integers per label segment.
pub const LABEL_SEGMENT: u64 = 1 << 20;

/// Write `bm` (covering `range`) as a header followed by packed little-endian bits.
///
/// Header: magic `PCBM`, version `u32`, then `offset`, `start`, `end` and the
/// bit count as `u64`, all little-endian.
pub fn write_bitmap_file(path: &Path, range: &RangeSpec, bm: &PrimeBitmap) -> Result<()> {
    if bm.lo() != range.abs_lo() || bm.hi() != range.abs_hi() {
        return Err(Error::Argument(format!(
            "bitmap [{}, {}) does not match range [{}, {})",
            bm.lo(),
            bm.hi(),
            range.abs_lo(),
            range.abs_hi()
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + bm.len().div_ceil(8));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [range.offset, range.start, range.end, bm.len() as u64] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&bm.to_packed_bytes());
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, out)?;
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn read_bitmap_file(path: &Path) -> Result<(RangeSpec, PrimeBitmap)> {
    let bytes = fs::read(path)?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "not a label bitmap"));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap());
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let range = RangeSpec {
        offset: word(0),
        start: word(1),
        end: word(2),
    };
    let nbits = word(3);
    if range.start >= range.end || nbits != range.end - range.start {
        return Err(Error::format(path, "inconsistent header"));
    }
    let bm = PrimeBitmap::from_packed_bytes(range.abs_lo(), range.abs_hi(), &bytes[HEADER_LEN..])
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok((range, bm))
}

/// Lazily sieved labels for a [`RangeSpec`].
///
/// The range is cut into [`LABEL_SEGMENT`]-sized pieces that are sieved on
/// first use; at most `max_resident` of them stay in memory.
#[derive(Debug)]
pub struct LabelStore {
    range: RangeSpec,
    cache_dir: Option<PathBuf>,
    resident: VecDeque<(u64, PrimeBitmap)>,
    max_resident: usize,
    sieved: u64,
}

impl LabelStore {
    pub fn new(range: RangeSpec) -> Self {
        LabelStore {
            range,
            cache_dir: None,
            resident: VecDeque::new(),
            max_resident: 4,
            sieved: 0,
        }
    }

    /// Persist sieved segments under `dir` and reuse them on later runs.
    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn with_max_resident(mut self, n: usize) -> Self {
        self.max_resident = n.max(1);
        self
    }

    pub fn range(&self) -> &RangeSpec {
        &self.range
    }

    /// Number of segments sieved so far (cache hits excluded).
    pub fn segments_sieved(&self) -> u64 {
        self.sieved
    }

    pub fn resident_bits(&self) -> usize {
        self.resident.iter().map(|(_, b)| b.len()).sum()
    }

    fn segment_range(&self, k: u64) -> RangeSpec {
        let start = self.range.start + k * LABEL_SEGMENT;
        RangeSpec {
            offset: self.range.offset,
            start,
            end: (start + LABEL_SEGMENT).min(self.range.end),
        }
    }

    fn segment(&mut self, k: u64) -> Result<&PrimeBitmap> {
        if let Some(pos) = self.resident.iter().position(|(i, _)| *i == k) {
            let hit = self.resident.remove(pos).expect("present");
            self.resident.push_back(hit);
        } else {
            let bm = self.load_or_sieve(k)?;
            if self.resident.len() == self.max_resident {
                self.resident.pop_front();
            }
            self.resident.push_back((k, bm));
        }
        Ok(&self.resident.back().expect("just pushed").1)
    }

    fn load_or_sieve(&mut self, k: u64) -> Result<PrimeBitmap> {
        let seg = self.segment_range(k);
        let path = self.cache_dir.as_ref().map(|d| {
            d.join(format!("labels-{}-{}-{}.bin", seg.offset, seg.start, seg.end))
        });
        if let Some(p) = path.as_ref().filter(|p| p.exists()) {
            let (stored, bm) = read_bitmap_file(p)?;
            if stored == seg {
                return Ok(bm);
            }
        }
        let bm = sieve_range(seg.abs_lo(), seg.abs_hi())?;
        self.sieved += 1;
        if let Some(p) = path {
            fs::create_dir_all(p.parent().expect("cache file has a parent"))?;
            write_bitmap_file(&p, &seg, &bm)?;
        }
        Ok(bm)
    }

    /// Labels for the absolute integers `[lo, hi)`, which must lie inside the range.
    pub fn bitmap(&mut self, lo: u64, hi: u64) -> Result<PrimeBitmap> {
        let (rlo, rhi) = (self.range.abs_lo(), self.range.abs_hi());
        if lo >= hi || lo < rlo || hi > rhi {
            return Err(Error::Coverage {
                lo: rlo,
                hi: rhi,
                value: if lo < rlo { lo } else { hi - 1 },
            });
        }
        let mut labels = Vec::with_capacity((hi - lo) as usize);
        let mut n = lo;
        while n < hi {
            let k = (n - rlo) / LABEL_SEGMENT;
            let seg = self.segment(k)?;
            let stop = hi.min(seg.hi());
            for v in n..stop {
                labels.push(seg.get(v)?);
            }
            n = stop;
        }
        PrimeBitmap::from_labels(lo, &labels)
    }
}
