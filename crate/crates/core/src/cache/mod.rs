//! Behavioral cache simulator.
//!
//! A [`CacheHierarchy`] is either a single cache shared by every core or a
//! two-level inclusive hierarchy: one private direct-mapped L1 per core in
//! front of a shared set-associative L2. Addresses are line addresses and the
//! set index is `addr % n_sets`.

mod policy;
mod prefetch;
mod snapshot;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use policy::ReplacementPolicy;
pub use prefetch::{Prefetcher, PrefetcherKind, PrefetcherState};
pub use snapshot::{CacheSnapshot, LevelState, LineState, SetState, SnapshotScope};

/// A line-granularity physical address.
pub type Addr = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheConfig {
    pub n_sets: usize,
    pub n_ways: usize,
    pub policy: ReplacementPolicy,
    pub prefetcher: PrefetcherKind,
}

impl CacheConfig {
    pub fn new(n_sets: usize, n_ways: usize) -> Self {
        Self {
            n_sets,
            n_ways,
            policy: ReplacementPolicy::Lru,
            prefetcher: PrefetcherKind::None,
        }
    }

    pub fn with_policy(mut self, policy: ReplacementPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_prefetcher(mut self, prefetcher: PrefetcherKind) -> Self {
        self.prefetcher = prefetcher;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_sets == 0 {
            return Err(invalid("n_sets", "must be at least 1"));
        }
        if self.n_ways == 0 {
            return Err(invalid("n_ways", "must be at least 1"));
        }
        if self.n_ways > u8::MAX as usize {
            return Err(invalid("n_ways", "at most 255 ways are supported"));
        }
        if self.policy == ReplacementPolicy::Plru {
            if !self.n_ways.is_power_of_two() {
                return Err(invalid(
                    "n_ways",
                    format!("plru needs a power-of-two way count, got {}", self.n_ways),
                ));
            }
            if self.n_ways > 32 {
                return Err(invalid("n_ways", "plru supports at most 32 ways"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyConfig {
    /// One entry for a single shared cache; `[l1, l2]` for two levels.
    pub levels: Vec<CacheConfig>,
    pub n_cores: usize,
    pub inclusive: bool,
}

impl HierarchyConfig {
    pub fn single(cache: CacheConfig) -> Self {
        Self {
            levels: vec![cache],
            n_cores: 1,
            inclusive: false,
        }
    }

    /// Two cores with private direct-mapped L1s over an inclusive shared L2.
    pub fn two_level(l1_sets: usize, l2: CacheConfig) -> Self {
        Self {
            levels: vec![CacheConfig::new(l1_sets, 1), l2],
            n_cores: 2,
            inclusive: true,
        }
    }

    pub fn is_two_level(&self) -> bool {
        self.levels.len() == 2
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for level in &self.levels {
            level.validate()?;
        }
        match self.levels.len() {
            1 => {
                if self.n_cores != 1 {
                    return Err(invalid("n_cores", "a single-level cache has exactly 1 core"));
                }
            }
            2 => {
                if self.n_cores != 2 {
                    return Err(invalid("n_cores", "a two-level hierarchy has exactly 2 cores"));
                }
                if !self.inclusive {
                    return Err(invalid("inclusive", "two-level hierarchies must be inclusive"));
                }
                if self.levels[0].n_ways != 1 {
                    return Err(invalid("levels", "the private L1 must be direct-mapped"));
                }
            }
            n => return Err(invalid("levels", format!("expected 1 or 2 levels, got {n}"))),
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    #[default]
    Demand,
    Prefetch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccessKind {
    Demand,
    Prefetch,
}

/// Latency as seen by the accessing core.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyClass {
    Hit,
    L1Hit,
    L2Hit,
    Miss,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AccessOutcome {
    pub latency: LatencyClass,
    /// Line displaced from the outermost level by the demand fill.
    pub evicted: Option<Addr>,
    pub prefetch_issued: Option<Addr>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlushOutcome {
    pub changed: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub(crate) struct Line {
    pub valid: bool,
    pub tag: Addr,
    pub meta: u8,
    pub origin: Origin,
}

/// One set-associative cache instance.
#[derive(Clone, Debug)]
struct Cache {
    cfg: CacheConfig,
    lines: Vec<Line>,
    trees: Vec<u64>,
    prefetcher: Prefetcher,
}

impl Cache {
    fn new(cfg: CacheConfig) -> Self {
        Self {
            lines: vec![Line::default(); cfg.n_sets * cfg.n_ways],
            trees: vec![0; cfg.n_sets],
            prefetcher: Prefetcher::new(cfg.prefetcher),
            cfg,
        }
    }

    fn set_of(&self, addr: Addr) -> usize {
        (addr % self.cfg.n_sets as u64) as usize
    }

    fn set_range(&self, set: usize) -> std::ops::Range<usize> {
        set * self.cfg.n_ways..(set + 1) * self.cfg.n_ways
    }

    fn find(&self, addr: Addr) -> Option<usize> {
        let set = self.set_of(addr);
        self.lines[self.set_range(set)]
            .iter()
            .position(|l| l.valid && l.tag == addr)
    }

    fn contains(&self, addr: Addr) -> bool {
        self.find(addr).is_some()
    }

    /// Looks up `addr`, promoting it on a hit.
    fn probe(&mut self, addr: Addr) -> bool {
        let set = self.set_of(addr);
        match self.find(addr) {
            Some(way) => {
                let range = self.set_range(set);
                self.cfg
                    .policy
                    .on_hit(&mut self.lines[range], &mut self.trees[set], way);
                true
            }
            None => false,
        }
    }

    /// Installs `addr` (assumed absent), returning the displaced address.
    fn fill(&mut self, addr: Addr, origin: Origin, rng: &mut ChaCha8Rng) -> Option<Addr> {
        let set = self.set_of(addr);
        let range = self.set_range(set);
        let lines = &mut self.lines[range];
        let tree = &mut self.trees[set];
        let way = self.cfg.policy.choose_way(lines, tree, rng);
        let evicted = lines[way].valid.then_some(lines[way].tag);
        lines[way] = Line {
            valid: true,
            tag: addr,
            meta: 0,
            origin,
        };
        self.cfg.policy.on_fill(lines, tree, way);
        evicted
    }

    fn invalidate(&mut self, addr: Addr) -> bool {
        let set = self.set_of(addr);
        let Some(way) = self.find(addr) else {
            return false;
        };
        let range = self.set_range(set);
        let lines = &mut self.lines[range];
        let old_meta = lines[way].meta;
        lines[way] = Line::default();
        self.cfg
            .policy
            .on_invalidate(lines, &mut self.trees[set], old_meta);
        true
    }

    fn reset(&mut self) {
        self.lines.fill(Line::default());
        self.trees.fill(0);
        self.prefetcher.reset();
    }

    fn capture(&self, scope: SnapshotScope) -> LevelState {
        let full = scope == SnapshotScope::Full;
        let sets = (0..self.cfg.n_sets)
            .map(|set| SetState {
                lines: self.lines[self.set_range(set)]
                    .iter()
                    .map(|l| {
                        if !l.valid {
                            LineState::default()
                        } else if full {
                            LineState {
                                valid: true,
                                tag: l.tag,
                                policy_meta: l.meta,
                                origin: l.origin,
                            }
                        } else {
                            LineState {
                                valid: true,
                                tag: l.tag,
                                ..LineState::default()
                            }
                        }
                    })
                    .collect(),
                tree_bits: if full { self.trees[set] } else { 0 },
            })
            .collect();
        LevelState {
            sets,
            prefetcher: if full { self.prefetcher.state() } else { None },
        }
    }
}

/// A simulated cache hierarchy.
///
/// Behavior is a pure function of the build seed and the operation sequence;
/// the seed only matters for the random replacement policy.
#[derive(Clone, Debug)]
pub struct CacheHierarchy {
    cfg: HierarchyConfig,
    private: Vec<Cache>,
    shared: Cache,
    rng: ChaCha8Rng,
}

impl CacheHierarchy {
    pub fn build(cfg: &HierarchyConfig, seed: u64) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let (private, shared) = if cfg.is_two_level() {
            let l1 = Cache::new(cfg.levels[0].clone());
            (vec![l1; cfg.n_cores], Cache::new(cfg.levels[1].clone()))
        } else {
            (Vec::new(), Cache::new(cfg.levels[0].clone()))
        };
        Ok(Self {
            cfg: cfg.clone(),
            private,
            shared,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn config(&self) -> &HierarchyConfig {
        &self.cfg
    }

    pub fn n_cores(&self) -> usize {
        self.cfg.n_cores
    }

    /// Number of cache instances (private L1s plus the shared cache).
    pub fn n_instances(&self) -> usize {
        self.private.len() + 1
    }

    pub fn access(&mut self, core: usize, addr: Addr, kind: AccessKind) -> AccessOutcome {
        assert!(
            core < self.cfg.n_cores,
            "core {core} out of range for {} cores",
            self.cfg.n_cores
        );
        if self.private.is_empty() {
            self.access_single(addr, kind)
        } else {
            self.access_two_level(core, addr, kind)
        }
    }

    fn access_single(&mut self, addr: Addr, kind: AccessKind) -> AccessOutcome {
        let hit = match kind {
            AccessKind::Demand => self.shared.probe(addr),
            AccessKind::Prefetch => self.shared.contains(addr),
        };
        if hit {
            return AccessOutcome {
                latency: LatencyClass::Hit,
                evicted: None,
                prefetch_issued: None,
            };
        }
        let origin = match kind {
            AccessKind::Demand => Origin::Demand,
            AccessKind::Prefetch => Origin::Prefetch,
        };
        let evicted = self.shared.fill(addr, origin, &mut self.rng);
        let mut prefetch_issued = None;
        if kind == AccessKind::Demand {
            if let Some(target) = self.shared.prefetcher.on_demand_miss(addr) {
                prefetch_issued = Some(target);
                if !self.shared.contains(target) {
                    self.shared.fill(target, Origin::Prefetch, &mut self.rng);
                }
            }
        }
        AccessOutcome {
            latency: LatencyClass::Miss,
            evicted,
            prefetch_issued,
        }
    }

    fn access_two_level(&mut self, core: usize, addr: Addr, kind: AccessKind) -> AccessOutcome {
        let demand = kind == AccessKind::Demand;
        let origin = if demand {
            Origin::Demand
        } else {
            Origin::Prefetch
        };
        let l1_hit = if demand {
            self.private[core].probe(addr)
        } else {
            self.private[core].contains(addr)
        };
        if l1_hit {
            return AccessOutcome {
                latency: LatencyClass::L1Hit,
                evicted: None,
                prefetch_issued: None,
            };
        }

        let mut prefetch_issued = None;
        if demand {
            if let Some(target) = self.private[core].prefetcher.on_demand_miss(addr) {
                prefetch_issued = Some(target);
            }
        }

        let l2_hit = if demand {
            self.shared.probe(addr)
        } else {
            self.shared.contains(addr)
        };
        let mut evicted = None;
        if !l2_hit {
            evicted = self.fill_shared(addr, origin);
            if demand {
                if let Some(target) = self.shared.prefetcher.on_demand_miss(addr) {
                    prefetch_issued.get_or_insert(target);
                    if !self.shared.contains(target) {
                        self.fill_shared(target, Origin::Prefetch);
                    }
                }
            }
        }
        self.private[core].fill(addr, origin, &mut self.rng);

        if let Some(target) = prefetch_issued {
            if self.private[core].cfg.prefetcher != PrefetcherKind::None
                && !self.private[core].contains(target)
            {
                if !self.shared.contains(target) {
                    self.fill_shared(target, Origin::Prefetch);
                }
                self.private[core].fill(target, Origin::Prefetch, &mut self.rng);
            }
        }

        AccessOutcome {
            latency: if l2_hit {
                LatencyClass::L2Hit
            } else {
                LatencyClass::Miss
            },
            evicted,
            prefetch_issued,
        }
    }

    /// Fills the shared level and back-invalidates whatever it displaced.
    fn fill_shared(&mut self, addr: Addr, origin: Origin) -> Option<Addr> {
        let evicted = self.shared.fill(addr, origin, &mut self.rng);
        if let Some(victim) = evicted {
            for l1 in &mut self.private {
                l1.invalidate(victim);
            }
        }
        evicted
    }

    pub fn flush(&mut self, addr: Addr) -> FlushOutcome {
        let mut changed = false;
        for l1 in &mut self.private {
            changed |= l1.invalidate(addr);
        }
        changed |= self.shared.invalidate(addr);
        FlushOutcome { changed }
    }

    pub fn snapshot(&self, scope: SnapshotScope) -> CacheSnapshot {
        let levels = self
            .private
            .iter()
            .chain(std::iter::once(&self.shared))
            .map(|c| c.capture(scope))
            .collect();
        CacheSnapshot { scope, levels }
    }

    /// Clears every line and the prefetchers. The replacement RNG keeps its
    /// stream position.
    pub fn reset(&mut self) {
        for l1 in &mut self.private {
            l1.reset();
        }
        self.shared.reset();
    }

    /// Whether `addr` is resident in any instance.
    pub fn contains(&self, addr: Addr) -> bool {
        self.shared.contains(addr) || self.private.iter().any(|c| c.contains(addr))
    }
}
