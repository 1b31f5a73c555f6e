//! Cache timing attack exploration: a cache simulator, an attack
//! environment built on it, a PPO learner, and a brute-force oracle.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cache;
pub mod env;
pub mod experiment;
pub mod oracle;
pub mod ppo;

pub use cache::{CacheConfig, CacheHierarchy, HierarchyConfig, LatencyClass, ReplacementPolicy};
pub use env::{Action, AddrRange, AttackEnv, EnvConfig, Secret};
pub use experiment::{preset, ExperimentConfig, Mode};
pub use oracle::AttackPlan;
pub use ppo::{PolicySpec, TrainHyper};
