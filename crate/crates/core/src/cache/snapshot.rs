use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Addr, Origin, PrefetcherState};

/// What a snapshot captures.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotScope {
    /// Lines, replacement metadata and prefetcher state.
    #[default]
    Full,
    /// `(valid, tag)` per line only.
    LinesOnly,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct LineState {
    pub valid: bool,
    pub tag: Addr,
    pub policy_meta: u8,
    pub origin: Origin,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SetState {
    pub lines: Vec<LineState>,
    /// Tree-PLRU bits for the set; zero for other policies.
    pub tree_bits: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct LevelState {
    pub sets: Vec<SetState>,
    pub prefetcher: Option<PrefetcherState>,
}

/// Canonical capture of every cache instance in a hierarchy.
///
/// Levels are ordered private caches by core first, then the shared cache.
/// Fields outside the scope are stored as zero so that equality only sees
/// what the scope captured.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CacheSnapshot {
    pub scope: SnapshotScope,
    pub levels: Vec<LevelState>,
}

impl CacheSnapshot {
    /// Canonical byte encoding; equal snapshots encode identically.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.push(match self.scope {
            SnapshotScope::Full => 0,
            SnapshotScope::LinesOnly => 1,
        });
        out.extend_from_slice(&(self.levels.len() as u32).to_le_bytes());
        for level in &self.levels {
            out.extend_from_slice(&(level.sets.len() as u32).to_le_bytes());
            for set in &level.sets {
                out.extend_from_slice(&(set.lines.len() as u32).to_le_bytes());
                out.extend_from_slice(&set.tree_bits.to_le_bytes());
                for line in &set.lines {
                    out.push(line.valid as u8);
                    out.extend_from_slice(&line.tag.to_le_bytes());
                    out.push(line.policy_meta);
                    out.push(line.origin as u8);
                }
            }
            match &level.prefetcher {
                None => out.push(0),
                Some(PrefetcherState { last_miss: None }) => out.push(1),
                Some(PrefetcherState {
                    last_miss: Some(addr),
                }) => {
                    out.push(2);
                    out.extend_from_slice(&addr.to_le_bytes());
                }
            }
        }
        out
    }

    /// Stable SHA-256 digest of [`CacheSnapshot::to_bytes`].
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }

    /// Addresses held by valid lines of level `level`.
    pub fn resident(&self, level: usize) -> Vec<Addr> {
        self.levels[level]
            .sets
            .iter()
            .flat_map(|s| s.lines.iter())
            .filter(|l| l.valid)
            .map(|l| l.tag)
            .collect()
    }
}
