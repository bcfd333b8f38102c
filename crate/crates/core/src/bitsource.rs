//! Buffered random bits with a deterministic, splittable lineage.
//!
//! Every [`BitSource`] is identified by its lineage: a master seed plus the
//! path of child indices used to split it off from the root source. The bit
//! stream is a pure function of that lineage, so a task tree that splits its
//! sources in a fixed order produces the same bits whatever the scheduler
//! does.
//!
//! Bits come out of a 64-bit word buffer, lowest-order bit first. One
//! generator word is drawn per 64 bits consumed and never earlier, so a
//! source wastes at most the unused tail of its last word.

use std::fmt;
use std::sync::Arc;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Width in bits of one generator word.
pub const WORD_BITS: u32 = 64;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const PER_WORKER_SALT: u64 = 0x5F0C_3A1D_B7E2_9468;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug)]
struct PathLink {
    index: u64,
    parent: Option<Arc<PathLink>>,
}

/// Master seed plus split path. Paths are stored as a shared linked list so
/// splitting is O(1) regardless of depth.
#[derive(Clone)]
pub struct Lineage {
    master_seed: u64,
    tail: Option<Arc<PathLink>>,
    depth: usize,
    key: u64,
}

impl Lineage {
    fn root(master_seed: u64) -> Self {
        Lineage {
            master_seed,
            tail: None,
            depth: 0,
            key: mix64(master_seed ^ GOLDEN_GAMMA),
        }
    }

    fn child(&self, index: u64) -> Self {
        let salt = mix64(index.wrapping_add(GOLDEN_GAMMA.wrapping_mul(self.depth as u64 + 1)));
        Lineage {
            master_seed: self.master_seed,
            tail: Some(Arc::new(PathLink {
                index,
                parent: self.tail.clone(),
            })),
            depth: self.depth + 1,
            key: mix64(self.key.wrapping_add(GOLDEN_GAMMA) ^ salt),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// The split path from the root source, outermost split first.
    pub fn path(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.depth);
        let mut link = self.tail.as_deref();
        while let Some(l) = link {
            out.push(l.index);
            link = l.parent.as_deref();
        }
        out.reverse();
        out
    }
}

impl PartialEq for Lineage {
    fn eq(&self, other: &Self) -> bool {
        self.master_seed == other.master_seed && self.depth == other.depth && self.path() == other.path()
    }
}

impl Eq for Lineage {}

impl fmt::Debug for Lineage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lineage")
            .field("master_seed", &self.master_seed)
            .field("path", &self.path())
            .finish()
    }
}

/// Word and bit counters of one or more sources.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SourceUsage {
    pub sources: u64,
    pub words_drawn: u64,
    pub bits_consumed: u64,
    /// Largest `words_drawn * WORD_BITS - bits_consumed` of any single source.
    pub max_waste_bits: u64,
}

impl SourceUsage {
    pub fn merge(&mut self, other: &SourceUsage) {
        self.sources += other.sources;
        self.words_drawn += other.words_drawn;
        self.bits_consumed += other.bits_consumed;
        self.max_waste_bits = self.max_waste_bits.max(other.max_waste_bits);
    }

    /// Counters accumulated since `earlier`, a snapshot of the same source.
    /// The waste figure is the current one.
    pub fn since(&self, earlier: &SourceUsage) -> SourceUsage {
        SourceUsage {
            sources: self.sources,
            words_drawn: self.words_drawn - earlier.words_drawn,
            bits_consumed: self.bits_consumed - earlier.bits_consumed,
            max_waste_bits: self.max_waste_bits,
        }
    }
}

/// A buffered stream of unbiased random bits.
///
/// Aligned to 128 bytes so sources owned by different workers never share a
/// cache line (or an adjacent-line prefetch pair).
#[repr(align(128))]
#[derive(Clone)]
pub struct BitSource {
    rng: Xoshiro256PlusPlus,
    buffer: u64,
    remaining: u32,
    bits_consumed: u64,
    words_drawn: u64,
    next_child: u64,
    lineage: Lineage,
}

impl BitSource {
    /// A source whose stream depends only on `master_seed` and `split_path`.
    pub fn new(master_seed: u64, split_path: &[u64]) -> Self {
        let lineage = split_path
            .iter()
            .fold(Lineage::root(master_seed), |l, &i| l.child(i));
        Self::from_lineage(lineage)
    }

    /// The legacy one-generator-per-worker scheme: independent of any task
    /// lineage, seeded from the master seed and the worker id only.
    pub fn for_worker(master_seed: u64, worker_id: usize) -> Self {
        Self::new(master_seed ^ PER_WORKER_SALT, &[worker_id as u64])
    }

    fn from_lineage(lineage: Lineage) -> Self {
        BitSource {
            rng: Xoshiro256PlusPlus::seed_from_u64(lineage.key),
            buffer: 0,
            remaining: 0,
            bits_consumed: 0,
            words_drawn: 0,
            next_child: 0,
            lineage,
        }
    }

    #[inline]
    fn refill(&mut self) {
        self.buffer = self.rng.next_u64();
        self.remaining = WORD_BITS;
        self.words_drawn += 1;
    }

    #[inline]
    pub fn next_bit(&mut self) -> bool {
        if self.remaining == 0 {
            self.refill();
        }
        let bit = self.buffer & 1 == 1;
        self.buffer >>= 1;
        self.remaining -= 1;
        self.bits_consumed += 1;
        bit
    }

    /// `count` bits packed into an integer, the first drawn bit in the lowest
    /// position. Equivalent to `count` calls of [`next_bit`](Self::next_bit).
    pub fn next_bits(&mut self, count: u32) -> u64 {
        assert!(count <= 64, "at most 64 bits per call");
        let mut out = 0u64;
        let mut filled = 0u32;
        while filled < count {
            if self.remaining == 0 {
                self.refill();
            }
            let take = (count - filled).min(self.remaining);
            let mask = if take == 64 { u64::MAX } else { (1u64 << take) - 1 };
            out |= (self.buffer & mask) << filled;
            self.buffer = if take == 64 { 0 } else { self.buffer >> take };
            self.remaining -= take;
            filled += take;
        }
        self.bits_consumed += count as u64;
        out
    }

    /// Exactly uniform integer in `[0, bound)` by bit rejection: draw
    /// `ceil(log2(bound))` bits and retry while the value is out of range.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound >= 1, "bound must be positive");
        if bound == 1 {
            return 0;
        }
        let width = 64 - (bound - 1).leading_zeros();
        loop {
            let v = self.next_bits(width);
            if v < bound {
                return v;
            }
        }
    }

    /// Child source with lineage `path ++ [child_index]`. Does not touch the
    /// parent's stream.
    pub fn split(&self, child_index: u64) -> BitSource {
        Self::from_lineage(self.lineage.child(child_index))
    }

    /// Split using the source's own child counter, so successive calls never
    /// reuse an index.
    pub fn spawn_child(&mut self) -> BitSource {
        let idx = self.next_child;
        self.next_child += 1;
        self.split(idx)
    }

    pub fn lineage(&self) -> &Lineage {
        &self.lineage
    }

    pub fn bits_consumed(&self) -> u64 {
        self.bits_consumed
    }

    pub fn words_drawn(&self) -> u64 {
        self.words_drawn
    }

    pub fn bits_remaining(&self) -> u32 {
        self.remaining
    }

    pub fn wasted_bits(&self) -> u64 {
        self.words_drawn * WORD_BITS as u64 - self.bits_consumed
    }

    pub fn usage(&self) -> SourceUsage {
        SourceUsage {
            sources: 1,
            words_drawn: self.words_drawn,
            bits_consumed: self.bits_consumed,
            max_waste_bits: self.wasted_bits(),
        }
    }

    #[cfg(test)]
    fn with_buffer(mut self, word: u64, remaining: u32) -> Self {
        self.buffer = word;
        self.remaining = remaining;
        self
    }
}

impl fmt::Debug for BitSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BitSource")
            .field("lineage", &self.lineage)
            .field("bits_remaining", &self.remaining)
            .field("bits_consumed", &self.bits_consumed)
            .field("words_drawn", &self.words_drawn)
            .finish()
    }
}
