//! Episodic attack environment over a simulated cache.
//!
//! An episode starts from a cold cache with a freshly drawn secret. The agent
//! accesses or flushes attacker lines, lets the victim touch the secret, and
//! finally guesses. Each step snapshots the cache before and after the action
//! to decide whether the action was useless; with the penalty enabled, useless
//! attacker actions cost an extra `r_useless`.

mod reward;
mod stats;
mod trace;

use std::fmt;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{
    AccessKind, Addr, CacheHierarchy, ConfigError, HierarchyConfig, LatencyClass, SnapshotScope,
};

pub use reward::{classify_useless, compute_reward, RewardConfig};
pub use stats::EpochStats;
pub use trace::{TraceRecord, TraceWriter};

/// Features per history slot: action, 4-way latency one-hot, victim flag, step.
pub const STEP_FEATURES: usize = 7;

const SECRET_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    Config(#[from] ConfigError),
    #[error("illegal action {0}")]
    IllegalAction(Action),
    #[error("action index {index} out of range for {count} actions")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("episode already finished; call reset_episode")]
    EpisodeFinished,
    #[error("trace output: {0}")]
    Trace(#[from] csv::Error),
}

/// Half-open range of line addresses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddrRange {
    pub start: Addr,
    pub end: Addr,
}

impl AddrRange {
    pub fn new(start: Addr, end: Addr) -> Self {
        Self { start, end }
    }

    /// Inclusive bounds, as ranges are usually written in tables.
    pub fn inclusive(first: Addr, last: Addr) -> Self {
        Self {
            start: first,
            end: last + 1,
        }
    }

    pub fn empty() -> Self {
        Self { start: 0, end: 0 }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, addr: Addr) -> bool {
        (self.start..self.end).contains(&addr)
    }

    pub fn iter(&self) -> std::ops::Range<Addr> {
        self.start..self.end
    }
}

/// What the victim does when triggered.
///
/// Multi-address victims access one secret address. A single-address victim
/// either accesses it or does nothing, which makes the secret binary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Secret {
    Addr(Addr),
    NoAccess,
}

impl fmt::Display for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Secret::Addr(a) => write!(f, "{a}"),
            Secret::NoAccess => f.write_str("none"),
        }
    }
}

impl std::str::FromStr for Secret {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "none" {
            Ok(Secret::NoAccess)
        } else {
            s.parse().map(Secret::Addr)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Access,
    Flush,
    Trigger,
    Guess,
}

impl ActionKind {
    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Access => "attacker_access",
            ActionKind::Flush => "attacker_flush",
            ActionKind::Trigger => "victim_trigger",
            ActionKind::Guess => "guess",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Access(Addr),
    Flush(Addr),
    Trigger,
    Guess(Secret),
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Access(_) => ActionKind::Access,
            Action::Flush(_) => ActionKind::Flush,
            Action::Trigger => ActionKind::Trigger,
            Action::Guess(_) => ActionKind::Guess,
        }
    }

    fn operand(&self) -> String {
        match self {
            Action::Access(a) | Action::Flush(a) => a.to_string(),
            Action::Trigger => String::new(),
            Action::Guess(s) => s.to_string(),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Access(a) => write!(f, "access {a}"),
            Action::Flush(a) => write!(f, "flush {a}"),
            Action::Trigger => f.write_str("victim_trigger"),
            Action::Guess(s) => write!(f, "guess {s}"),
        }
    }
}

/// Latency feedback of one step, as the attacker observes it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Observed {
    None,
    Latency(LatencyClass),
}

impl Observed {
    /// Slot in the `{none, hit/l1_hit, l2_hit, miss}` one-hot.
    pub fn one_hot_index(self) -> usize {
        match self {
            Observed::None => 0,
            Observed::Latency(LatencyClass::Hit | LatencyClass::L1Hit) => 1,
            Observed::Latency(LatencyClass::L2Hit) => 2,
            Observed::Latency(LatencyClass::Miss) => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Observed::None => "none",
            Observed::Latency(LatencyClass::Hit) => "hit",
            Observed::Latency(LatencyClass::L1Hit) => "l1_hit",
            Observed::Latency(LatencyClass::L2Hit) => "l2_hit",
            Observed::Latency(LatencyClass::Miss) => "miss",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub hierarchy: HierarchyConfig,
    pub victim_addrs: AddrRange,
    pub attacker_addrs: AddrRange,
    pub flush_enabled: bool,
    pub rewards: RewardConfig,
    pub useless_penalty_enabled: bool,
    pub snapshot_scope: SnapshotScope,
    pub max_episode_len: usize,
    pub epoch_actions: u64,
    pub seed: u64,
}

impl EnvConfig {
    /// Config with default rewards, full snapshots, the penalty enabled and
    /// the default episode bound.
    pub fn new(
        hierarchy: HierarchyConfig,
        victim_addrs: AddrRange,
        attacker_addrs: AddrRange,
        flush_enabled: bool,
    ) -> Self {
        Self {
            max_episode_len: default_max_episode_len(&attacker_addrs),
            hierarchy,
            victim_addrs,
            attacker_addrs,
            flush_enabled,
            rewards: RewardConfig::default(),
            useless_penalty_enabled: true,
            snapshot_scope: SnapshotScope::Full,
            epoch_actions: 3000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.hierarchy.validate()?;
        let bad = |field: &'static str, reason: &str| ConfigError::Invalid {
            field,
            reason: reason.to_string(),
        };
        if self.victim_addrs.is_empty() {
            return Err(bad("victim_addrs", "must contain at least one address"));
        }
        if self.max_episode_len == 0 {
            return Err(bad("max_episode_len", "must be positive"));
        }
        if self.epoch_actions == 0 {
            return Err(bad("epoch_actions", "must be positive"));
        }
        if let Err((field, reason)) = self.rewards.check() {
            return Err(bad(field, reason));
        }
        Ok(())
    }

    /// The values a guess may name, in guess-action order.
    pub fn secret_domain(&self) -> Vec<Secret> {
        if self.victim_addrs.len() == 1 {
            vec![Secret::Addr(self.victim_addrs.start), Secret::NoAccess]
        } else {
            self.victim_addrs.iter().map(Secret::Addr).collect()
        }
    }

    /// Every legal action: accesses ascending, flushes ascending, the
    /// trigger, then guesses in secret-domain order. Indices into this list
    /// are the policy's output indices.
    pub fn legal_actions(&self) -> Vec<Action> {
        let mut actions: Vec<Action> = self.attacker_addrs.iter().map(Action::Access).collect();
        if self.flush_enabled {
            actions.extend(self.attacker_addrs.iter().map(Action::Flush));
        }
        actions.push(Action::Trigger);
        actions.extend(self.secret_domain().into_iter().map(Action::Guess));
        actions
    }

    pub fn n_actions(&self) -> usize {
        let addrs = self.attacker_addrs.len();
        addrs + if self.flush_enabled { addrs } else { 0 } + 1 + self.secret_domain().len()
    }

    pub fn obs_dim(&self) -> usize {
        self.max_episode_len * STEP_FEATURES
    }

    pub fn is_legal(&self, action: &Action) -> bool {
        match *action {
            Action::Access(a) => self.attacker_addrs.contains(a),
            Action::Flush(a) => self.flush_enabled && self.attacker_addrs.contains(a),
            Action::Trigger => true,
            Action::Guess(s) => self.secret_domain().contains(&s),
        }
    }

    pub fn victim_core(&self) -> usize {
        self.hierarchy.n_cores - 1
    }
}

/// `2 * (|attacker_addrs| + 2)`.
pub fn default_max_episode_len(attacker_addrs: &AddrRange) -> usize {
    2 * (attacker_addrs.len() + 2)
}

/// Fixed-length encoding of the current episode's history; every entry is in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub useless: bool,
    pub guess_correct: Option<bool>,
    pub truncated: bool,
    pub observed: Observed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Clone, Copy, Debug, Default)]
struct EpochCounters {
    actions: u64,
    episodes: u64,
    correct: u64,
    useless: u64,
}

pub struct AttackEnv {
    cfg: EnvConfig,
    actions: Vec<Action>,
    secrets: Vec<Secret>,
    cache: CacheHierarchy,
    rng: ChaCha8Rng,
    secret: Secret,
    history: Vec<f64>,
    steps: usize,
    triggered: bool,
    done: bool,
    epoch: EpochCounters,
    epoch_started: Instant,
    global_step: u64,
    episode_index: u64,
    trace: Option<TraceWriter>,
}

impl AttackEnv {
    /// Builds the environment and starts the first episode.
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let cache = CacheHierarchy::build(&cfg.hierarchy, cfg.seed)?;
        let secrets = cfg.secret_domain();
        let mut env = Self {
            actions: cfg.legal_actions(),
            secret: secrets[0],
            secrets,
            cache,
            // Secret draws use a stream independent of the cache's.
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ SECRET_STREAM),
            history: vec![0.0; cfg.obs_dim()],
            steps: 0,
            triggered: false,
            done: false,
            epoch: EpochCounters::default(),
            epoch_started: Instant::now(),
            global_step: 0,
            episode_index: 0,
            trace: None,
            cfg,
        };
        env.reset_episode();
        env.episode_index = 0;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn legal_actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn secret(&self) -> Secret {
        self.secret
    }

    pub fn cache(&self) -> &CacheHierarchy {
        &self.cache
    }

    pub fn steps_in_episode(&self) -> usize {
        self.steps
    }

    pub fn enable_trace<W: Write + Send + 'static>(&mut self, w: W) {
        self.trace = Some(TraceWriter::new(w));
    }

    pub fn flush_trace(&mut self) -> std::io::Result<()> {
        match &mut self.trace {
            Some(t) => t.flush(),
            None => Ok(()),
        }
    }

    /// Clears the cache and history and draws a new secret uniformly.
    pub fn reset_episode(&mut self) -> Observation {
        let idx = self.rng.gen_range(0..self.secrets.len());
        let secret = self.secrets[idx];
        self.reset_with_secret(secret)
    }

    /// Starts an episode with a chosen secret; does not consume the secret RNG.
    pub fn reset_with_secret(&mut self, secret: Secret) -> Observation {
        assert!(self.secrets.contains(&secret), "secret {secret} outside the domain");
        self.cache.reset();
        self.secret = secret;
        self.history.fill(0.0);
        self.steps = 0;
        self.triggered = false;
        self.done = false;
        self.episode_index += 1;
        self.observation()
    }

    pub fn observation(&self) -> Observation {
        Observation(self.history.clone())
    }

    pub fn step_index(&mut self, index: usize) -> Result<StepResult, EnvError> {
        let action = *self.actions.get(index).ok_or(EnvError::IndexOutOfRange {
            index,
            count: self.actions.len(),
        })?;
        self.step(action)
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        if !self.cfg.is_legal(&action) {
            return Err(EnvError::IllegalAction(action));
        }
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let scope = self.cfg.snapshot_scope;
        let pre = self.cache.snapshot(scope);
        let (observed, guess_correct) = self.apply(action);
        let post = self.cache.snapshot(scope);

        let kind = action.kind();
        let useless = classify_useless(kind, &pre, &post);
        let mut reward = compute_reward(
            &self.cfg.rewards,
            kind,
            useless,
            guess_correct,
            self.cfg.useless_penalty_enabled,
        );

        self.record_history(&action, observed);
        self.steps += 1;
        let truncated = guess_correct.is_none() && self.steps >= self.cfg.max_episode_len;
        if truncated {
            reward += self.cfg.rewards.r_wrong;
        }
        let done = guess_correct.is_some() || truncated;

        self.epoch.actions += 1;
        if useless {
            self.epoch.useless += 1;
        }
        if done {
            self.done = true;
            self.epoch.episodes += 1;
            if guess_correct == Some(true) {
                self.epoch.correct += 1;
            }
        }

        self.global_step += 1;
        if let Some(trace) = &mut self.trace {
            trace.write(&TraceRecord {
                step: self.global_step,
                episode: self.episode_index,
                action_kind: kind.name(),
                operand: action.operand(),
                latency_class: observed.name(),
                useless,
                reward,
            })?;
        }

        Ok(StepResult {
            observation: self.observation(),
            reward,
            done,
            info: StepInfo {
                useless,
                guess_correct,
                truncated,
                observed,
            },
        })
    }

    fn apply(&mut self, action: Action) -> (Observed, Option<bool>) {
        match action {
            Action::Access(addr) => {
                let out = self.cache.access(0, addr, AccessKind::Demand);
                (Observed::Latency(out.latency), None)
            }
            Action::Flush(addr) => {
                self.cache.flush(addr);
                (Observed::None, None)
            }
            Action::Trigger => {
                if let Secret::Addr(addr) = self.secret {
                    let core = self.cfg.victim_core();
                    self.cache.access(core, addr, AccessKind::Demand);
                }
                self.triggered = true;
                (Observed::None, None)
            }
            Action::Guess(s) => (Observed::None, Some(s == self.secret)),
        }
    }

    fn record_history(&mut self, action: &Action, observed: Observed) {
        if self.steps >= self.cfg.max_episode_len {
            return;
        }
        let index = self
            .actions
            .iter()
            .position(|a| a == action)
            .expect("legal action is listed");
        let n = self.actions.len() as f64;
        let slot = &mut self.history[self.steps * STEP_FEATURES..(self.steps + 1) * STEP_FEATURES];
        slot.fill(0.0);
        slot[0] = (index as f64 + 1.0) / n;
        slot[1 + observed.one_hot_index()] = 1.0;
        slot[5] = if self.triggered { 1.0 } else { 0.0 };
        slot[6] = (self.steps as f64 + 1.0) / self.cfg.max_episode_len as f64;
    }

    pub fn epoch_complete(&self) -> bool {
        self.epoch.actions >= self.cfg.epoch_actions
    }

    /// Returns the counters accumulated since the last call and restarts
    /// them. An in-progress episode carries over into the next epoch.
    pub fn epoch_stats(&mut self) -> EpochStats {
        let c = std::mem::take(&mut self.epoch);
        let now = Instant::now();
        let wall_time = now.duration_since(self.epoch_started).as_secs_f64();
        self.epoch_started = now;
        EpochStats {
            episodes_completed: c.episodes,
            episodes_correct: c.correct,
            total_actions: c.actions,
            useless_actions: c.useless,
            wall_time,
        }
    }
}

impl fmt::Debug for AttackEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AttackEnv")
            .field("secret", &self.secret)
            .field("steps", &self.steps)
            .field("done", &self.done)
            .finish_non_exhaustive()
    }
}
