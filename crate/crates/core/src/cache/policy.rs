//! Per-set replacement bookkeeping.
//!
//! Every policy works on one set at a time: a slice of `n_ways` lines plus a
//! set-level word that only tree-PLRU uses. Metadata meaning per policy:
//!
//! * LRU: `meta` is the recency rank, 0 = most recently used.
//! * PLRU: `meta` is unused; the set word holds the tree bits.
//! * RRIP: `meta` is the 2-bit re-reference prediction value.
//! * Random: no metadata.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Line;

const RRPV_MAX: u8 = 3;
const RRPV_INSERT: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplacementPolicy {
    Lru,
    Plru,
    Rrip,
    Random,
}

impl ReplacementPolicy {
    pub fn name(self) -> &'static str {
        match self {
            ReplacementPolicy::Lru => "lru",
            ReplacementPolicy::Plru => "plru",
            ReplacementPolicy::Rrip => "rrip",
            ReplacementPolicy::Random => "random",
        }
    }

    pub(crate) fn on_hit(self, lines: &mut [Line], tree: &mut u64, way: usize) {
        match self {
            ReplacementPolicy::Lru => promote_lru(lines, way),
            ReplacementPolicy::Plru => touch_plru(tree, lines.len(), way),
            ReplacementPolicy::Rrip => lines[way].meta = 0,
            ReplacementPolicy::Random => {}
        }
    }

    /// Called after `lines[way]` has been overwritten with a freshly filled line.
    pub(crate) fn on_fill(self, lines: &mut [Line], tree: &mut u64, way: usize) {
        match self {
            ReplacementPolicy::Lru => {
                let others = lines
                    .iter()
                    .enumerate()
                    .filter(|(w, l)| *w != way && l.valid)
                    .count();
                // The new line enters as the oldest, then gets promoted.
                lines[way].meta = others as u8;
                promote_lru(lines, way);
            }
            ReplacementPolicy::Plru => touch_plru(tree, lines.len(), way),
            ReplacementPolicy::Rrip => lines[way].meta = RRPV_INSERT,
            ReplacementPolicy::Random => {}
        }
    }

    /// Called after `lines[way]` was invalidated; `old_meta` is what it held.
    pub(crate) fn on_invalidate(self, lines: &mut [Line], tree: &mut u64, old_meta: u8) {
        if self == ReplacementPolicy::Lru {
            for line in lines.iter_mut().filter(|l| l.valid && l.meta > old_meta) {
                line.meta -= 1;
            }
        }
        if !lines.iter().any(|l| l.valid) {
            *tree = 0;
        }
    }

    /// Picks the way to fill. Invalid ways win, lowest index first.
    pub(crate) fn choose_way(self, lines: &mut [Line], tree: &u64, rng: &mut ChaCha8Rng) -> usize {
        if let Some(way) = lines.iter().position(|l| !l.valid) {
            return way;
        }
        match self {
            ReplacementPolicy::Lru => lines
                .iter()
                .enumerate()
                .max_by_key(|(_, l)| l.meta)
                .map(|(w, _)| w)
                .unwrap_or(0),
            ReplacementPolicy::Plru => plru_victim(*tree, lines.len()),
            ReplacementPolicy::Rrip => loop {
                if let Some(way) = lines.iter().position(|l| l.meta >= RRPV_MAX) {
                    break way;
                }
                for line in lines.iter_mut() {
                    line.meta += 1;
                }
            },
            ReplacementPolicy::Random => rng.gen_range(0..lines.len()),
        }
    }
}

fn promote_lru(lines: &mut [Line], way: usize) {
    let rank = lines[way].meta;
    for (w, line) in lines.iter_mut().enumerate() {
        if w != way && line.valid && line.meta < rank {
            line.meta += 1;
        }
    }
    lines[way].meta = 0;
}

// Heap-indexed tree: node 1 is the root, node i has children 2i and 2i+1,
// leaves n_ways..2*n_ways-1 are the ways. Bit i set means "victim is right".
fn plru_victim(tree: u64, n_ways: usize) -> usize {
    let mut node = 1usize;
    while node < n_ways {
        let bit = ((tree >> node) & 1) as usize;
        node = 2 * node + bit;
    }
    node - n_ways
}

fn touch_plru(tree: &mut u64, n_ways: usize, way: usize) {
    let mut node = way + n_ways;
    while node > 1 {
        let parent = node / 2;
        let came_from_right = node & 1 == 1;
        if came_from_right {
            *tree &= !(1u64 << parent);
        } else {
            *tree |= 1u64 << parent;
        }
        node = parent;
    }
}
