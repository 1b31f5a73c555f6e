//! The seventeen tested cache configurations, `no1` through `no17`.

use crate::cache::{CacheConfig, HierarchyConfig, PrefetcherKind};
use crate::env::{AddrRange, EnvConfig};

struct Row {
    hierarchy: HierarchyConfig,
    victim: (u64, u64),
    attacker: (u64, u64),
    flush: bool,
}

fn dm(sets: usize) -> HierarchyConfig {
    HierarchyConfig::single(CacheConfig::new(sets, 1))
}

fn fa(ways: usize) -> HierarchyConfig {
    HierarchyConfig::single(CacheConfig::new(1, ways))
}

fn fa_pf(ways: usize, pf: PrefetcherKind) -> HierarchyConfig {
    HierarchyConfig::single(CacheConfig::new(1, ways).with_prefetcher(pf))
}

fn row(number: usize) -> Option<Row> {
    let r = |hierarchy, victim, attacker, flush| Row {
        hierarchy,
        victim,
        attacker,
        flush,
    };
    Some(match number {
        1 => r(dm(4), (0, 3), (4, 7), false),
        2 => r(
            HierarchyConfig::single(CacheConfig::new(4, 1).with_prefetcher(PrefetcherKind::Nextline)),
            (0, 3),
            (4, 7),
            false,
        ),
        3 => r(dm(4), (0, 3), (0, 3), true),
        4 => r(dm(4), (0, 3), (0, 7), false),
        5 => r(fa(4), (0, 0), (4, 7), false),
        6 => r(fa(4), (0, 0), (0, 3), true),
        7 => r(fa(4), (0, 0), (0, 7), false),
        8 => r(fa(4), (0, 3), (0, 3), true),
        9 => r(fa(4), (0, 3), (0, 7), true),
        10 => r(dm(8), (0, 7), (0, 7), true),
        11 => r(fa(8), (0, 0), (0, 7), true),
        12 => r(fa(8), (0, 0), (0, 15), false),
        13 => r(fa_pf(8, PrefetcherKind::Nextline), (0, 0), (0, 15), false),
        14 => r(fa_pf(8, PrefetcherKind::Stream), (0, 0), (0, 15), false),
        15 => r(HierarchyConfig::single(CacheConfig::new(4, 2)), (0, 3), (4, 11), false),
        16 => r(HierarchyConfig::two_level(4, CacheConfig::new(4, 2)), (0, 3), (4, 11), false),
        17 => r(HierarchyConfig::two_level(8, CacheConfig::new(8, 2)), (0, 7), (8, 23), false),
        _ => return None,
    })
}

pub const PRESET_NAMES: [&str; 17] = [
    "no1", "no2", "no3", "no4", "no5", "no6", "no7", "no8", "no9", "no10", "no11", "no12", "no13",
    "no14", "no15", "no16", "no17",
];

/// Expands `no1`..`no17` into an environment config with default rewards,
/// episode bound and epoch size.
pub fn preset(name: &str) -> Option<EnvConfig> {
    let number: usize = name.strip_prefix("no")?.parse().ok()?;
    let row = row(number)?;
    Some(EnvConfig::new(
        row.hierarchy,
        AddrRange::inclusive(row.victim.0, row.victim.1),
        AddrRange::inclusive(row.attacker.0, row.attacker.1),
        row.flush,
    ))
}
