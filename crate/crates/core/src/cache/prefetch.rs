use serde::{Deserialize, Serialize};

use super::Addr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrefetcherKind {
    None,
    Nextline,
    Stream,
}

impl PrefetcherKind {
    pub fn name(self) -> &'static str {
        match self {
            PrefetcherKind::None => "none",
            PrefetcherKind::Nextline => "nextline",
            PrefetcherKind::Stream => "stream",
        }
    }
}

/// Internal prefetcher state as captured by a full-scope snapshot.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct PrefetcherState {
    pub last_miss: Option<Addr>,
}

/// Demand-miss driven prefetcher.
///
/// Next-line prefetches `addr + 1` on every demand miss. Stream tracks one
/// ascending unit-stride stream: a demand miss at `addr` right after a demand
/// miss at `addr - 1` prefetches `addr + 2`.
#[derive(Clone, Debug)]
pub struct Prefetcher {
    kind: PrefetcherKind,
    last_miss: Option<Addr>,
}

impl Prefetcher {
    pub fn new(kind: PrefetcherKind) -> Self {
        Self {
            kind,
            last_miss: None,
        }
    }

    pub fn kind(&self) -> PrefetcherKind {
        self.kind
    }

    pub fn on_demand_miss(&mut self, addr: Addr) -> Option<Addr> {
        match self.kind {
            PrefetcherKind::None => None,
            PrefetcherKind::Nextline => addr.checked_add(1),
            PrefetcherKind::Stream => {
                let trained = addr > 0 && self.last_miss == Some(addr - 1);
                self.last_miss = Some(addr);
                if trained {
                    addr.checked_add(2)
                } else {
                    None
                }
            }
        }
    }

    pub fn reset(&mut self) {
        self.last_miss = None;
    }

    pub fn state(&self) -> Option<PrefetcherState> {
        match self.kind {
            PrefetcherKind::Stream => Some(PrefetcherState {
                last_miss: self.last_miss,
            }),
            _ => None,
        }
    }
}
