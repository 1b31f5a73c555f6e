//! Brute-force ground truth for small configurations.
//!
//! Everything here re-simulates on its own cache instances and never goes
//! through [`crate::env::AttackEnv`], so it can serve as a reference for the
//! environment's detector and for plans extracted from a trained policy.

mod plan;

use std::collections::HashSet;

use thiserror::Error;

use crate::cache::{AccessKind, CacheHierarchy, CacheSnapshot, ConfigError};
use crate::env::{Action, ActionKind, EnvConfig, Observed, Secret};

pub use plan::{AttackPlan, Trace};

/// Default cap on `secrets * actions^depth`, summed over explored depths.
pub const DEFAULT_BUDGET: u64 = 200_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(
        "search budget exceeded at depth {depth}: {cost} simulated prefixes needed, budget is {budget}"
    )]
    BudgetExceeded { depth: usize, cost: u128, budget: u64 },
    #[error("plan line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("action {0} is not legal for this configuration")]
    IllegalAction(Action),
    #[error("plans disagree on the next move for secret {secret} after {step} steps")]
    Ambiguous { secret: Secret, step: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

fn fresh_cache(cfg: &EnvConfig) -> Result<CacheHierarchy, ConfigError> {
    let mut cache = CacheHierarchy::build(&cfg.hierarchy, cfg.seed)?;
    cache.reset();
    Ok(cache)
}

/// Applies a non-guess action under a given secret and reports what the
/// attacker observes.
fn simulate(cache: &mut CacheHierarchy, cfg: &EnvConfig, action: Action, secret: Secret) -> Observed {
    match action {
        Action::Access(a) => Observed::Latency(cache.access(0, a, AccessKind::Demand).latency),
        Action::Flush(a) => {
            cache.flush(a);
            Observed::None
        }
        Action::Trigger => {
            if let Secret::Addr(a) = secret {
                cache.access(cfg.hierarchy.n_cores - 1, a, AccessKind::Demand);
            }
            Observed::None
        }
        Action::Guess(_) => Observed::None,
    }
}

/// Actions a plan prefix may use, in policy index order.
fn prefix_actions(cfg: &EnvConfig) -> Vec<Action> {
    cfg.legal_actions()
        .into_iter()
        .filter(|a| a.kind() != ActionKind::Guess)
        .collect()
}

/// Shortest-then-lexicographic search for a fixed prefix whose traces tell
/// every secret apart, with the default budget.
pub fn search(cfg: &EnvConfig, max_len: usize) -> Result<Option<AttackPlan>, OracleError> {
    search_with_budget(cfg, max_len, DEFAULT_BUDGET)
}

/// Iterative deepening over prefixes of length `0..=max_len`. Before each
/// depth the cumulative cost `sum |secrets| * |actions|^d` is checked against
/// `budget`; exceeding it is an error, not an empty result.
pub fn search_with_budget(
    cfg: &EnvConfig,
    max_len: usize,
    budget: u64,
) -> Result<Option<AttackPlan>, OracleError> {
    cfg.validate()?;
    let actions = prefix_actions(cfg);
    let secrets = cfg.secret_domain();
    let root = fresh_cache(cfg)?;
    let mut spent: u128 = 0;
    for depth in 0..=max_len {
        let cost = secrets.len() as u128 * (actions.len() as u128).saturating_pow(depth as u32);
        spent = spent.saturating_add(cost);
        if spent > budget as u128 {
            return Err(OracleError::BudgetExceeded {
                depth,
                cost: spent,
                budget,
            });
        }
        let worlds: Vec<CacheHierarchy> = secrets.iter().map(|_| root.clone()).collect();
        let mut traces = vec![Vec::with_capacity(depth); secrets.len()];
        let mut prefix = Vec::with_capacity(depth);
        let mut search = Dfs {
            cfg,
            actions: &actions,
            secrets: &secrets,
            depth,
        };
        if search.run(&worlds, &mut traces, &mut prefix) {
            let decode = traces
                .into_iter()
                .zip(&secrets)
                .map(|(t, &s)| (Trace(t), s))
                .collect();
            let prefix = prefix.into_iter().map(|i| actions[i]).collect();
            return Ok(Some(AttackPlan { prefix, decode }));
        }
    }
    Ok(None)
}

struct Dfs<'a> {
    cfg: &'a EnvConfig,
    actions: &'a [Action],
    secrets: &'a [Secret],
    depth: usize,
}

impl Dfs<'_> {
    /// On success `prefix` and `traces` hold the first injective prefix.
    fn run(
        &mut self,
        worlds: &[CacheHierarchy],
        traces: &mut Vec<Vec<Observed>>,
        prefix: &mut Vec<usize>,
    ) -> bool {
        if prefix.len() == self.depth {
            let distinct: HashSet<&Vec<Observed>> = traces.iter().collect();
            return distinct.len() == traces.len();
        }
        for (i, &action) in self.actions.iter().enumerate() {
            let mut next = worlds.to_vec();
            for ((world, trace), &secret) in next.iter_mut().zip(traces.iter_mut()).zip(self.secrets) {
                trace.push(simulate(world, self.cfg, action, secret));
            }
            prefix.push(i);
            if self.run(&next, traces, prefix) {
                return true;
            }
            prefix.pop();
            for trace in traces.iter_mut() {
                trace.pop();
            }
        }
        false
    }
}

/// Fraction of secrets a single plan guesses correctly.
pub fn replay(plan: &AttackPlan, cfg: &EnvConfig) -> Result<f64, OracleError> {
    replay_branches(std::slice::from_ref(plan), cfg)
}

/// Replays a set of plans read as branches of one adaptive attack.
///
/// Under each secret the attack starts from a cold cache; at every step the
/// branches whose actions and traces match the history so far decide the
/// next move: either their next prefix action, or, for a branch that ends
/// here, the guess its decode table gives for the observed trace. Branches
/// that disagree are an error; no matching branch counts as a wrong guess.
/// A plan without decode entries never matches.
pub fn replay_branches(plans: &[AttackPlan], cfg: &EnvConfig) -> Result<f64, OracleError> {
    cfg.validate()?;
    for action in plans.iter().flat_map(|p| &p.prefix) {
        if !cfg.is_legal(action) || action.kind() == ActionKind::Guess {
            return Err(OracleError::IllegalAction(*action));
        }
    }
    let secrets = cfg.secret_domain();
    let mut correct = 0usize;
    for &secret in &secrets {
        let mut cache = fresh_cache(cfg)?;
        let mut actions: Vec<Action> = Vec::new();
        let mut trace: Vec<Observed> = Vec::new();
        let guess = loop {
            let k = actions.len();
            let mut next: Option<Result<Action, Option<Secret>>> = None;
            for p in plans {
                if p.prefix.len() < k || p.prefix[..k] != actions[..] {
                    continue;
                }
                let consistent = p
                    .decode
                    .iter()
                    .any(|(t, _)| t.0.len() >= k && t.0[..k] == trace[..]);
                if !consistent {
                    continue;
                }
                let mv = if p.prefix.len() == k {
                    Err(p.guess_for(&Trace(trace.clone())))
                } else {
                    Ok(p.prefix[k])
                };
                match &next {
                    None => next = Some(mv),
                    Some(prev) if *prev == mv => {}
                    Some(_) => return Err(OracleError::Ambiguous { secret, step: k }),
                }
            }
            match next {
                None => break None,
                Some(Err(guess)) => break guess,
                Some(Ok(action)) => {
                    trace.push(simulate(&mut cache, cfg, action, secret));
                    actions.push(action);
                }
            }
        };
        if guess == Some(secret) {
            correct += 1;
        }
    }
    Ok(correct as f64 / secrets.len() as f64)
}

/// One episode of a recorded action trace.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub secret: Secret,
    pub actions: Vec<Action>,
}

/// Field-by-field comparison of two snapshots.
fn unchanged(pre: &CacheSnapshot, post: &CacheSnapshot) -> bool {
    if pre.levels.len() != post.levels.len() {
        return false;
    }
    for (a, b) in pre.levels.iter().zip(&post.levels) {
        if a.prefetcher != b.prefetcher || a.sets.len() != b.sets.len() {
            return false;
        }
        for (sa, sb) in a.sets.iter().zip(&b.sets) {
            if sa.tree_bits != sb.tree_bits || sa.lines.len() != sb.lines.len() {
                return false;
            }
            for (la, lb) in sa.lines.iter().zip(&sb.lines) {
                if la.valid != lb.valid
                    || la.tag != lb.tag
                    || la.policy_meta != lb.policy_meta
                    || la.origin != lb.origin
                {
                    return false;
                }
            }
        }
    }
    true
}

/// Re-simulates a trace on a fresh cache and flags each step as useless when
/// it is an attacker access or flush whose captured state did not change.
///
/// A single cache instance spans all episodes (reset between them), which is
/// how the environment drives its cache too.
pub fn label_trace(cfg: &EnvConfig, episodes: &[Episode]) -> Result<Vec<Vec<bool>>, OracleError> {
    let mut cache = CacheHierarchy::build(&cfg.hierarchy, cfg.seed)?;
    let scope = cfg.snapshot_scope;
    let mut out = Vec::with_capacity(episodes.len());
    for ep in episodes {
        cache.reset();
        let mut flags = Vec::with_capacity(ep.actions.len());
        for &action in &ep.actions {
            let pre = cache.snapshot(scope);
            simulate(&mut cache, cfg, action, ep.secret);
            let post = cache.snapshot(scope);
            let attacker = matches!(action, Action::Access(_) | Action::Flush(_));
            flags.push(attacker && unchanged(&pre, &post));
        }
        out.push(flags);
    }
    Ok(out)
}
