use std::collections::HashSet;

use cacheprobe::cache::{AccessKind, CacheConfig, CacheHierarchy, HierarchyConfig, LatencyClass};
use cacheprobe::env::{Action, ActionKind, AddrRange, EnvConfig, Observed, Secret};
use cacheprobe::experiment::preset;
use cacheprobe::oracle::{
    replay, replay_branches, search, search_with_budget, AttackPlan, OracleError, Trace,
};
use proptest::prelude::*;

/// Straight enumeration of every prefix of a given length, in the same
/// index order as the action list, with each candidate simulated from
/// scratch for every secret.
fn naive_first_plan(cfg: &EnvConfig, max_len: usize) -> Option<(usize, Vec<Action>)> {
    let actions: Vec<Action> = cfg
        .legal_actions()
        .into_iter()
        .filter(|a| a.kind() != ActionKind::Guess)
        .collect();
    let secrets = cfg.secret_domain();
    for len in 0..=max_len {
        let total = actions.len().pow(len as u32);
        for code in 0..total {
            let mut digits = vec![0; len];
            let mut c = code;
            for d in digits.iter_mut().rev() {
                *d = c % actions.len();
                c /= actions.len();
            }
            let prefix: Vec<Action> = digits.iter().map(|&i| actions[i]).collect();
            let traces: HashSet<Vec<Observed>> = secrets
                .iter()
                .map(|&s| run_prefix(cfg, &prefix, s))
                .collect();
            if traces.len() == secrets.len() {
                return Some((len, prefix));
            }
        }
    }
    None
}

fn run_prefix(cfg: &EnvConfig, prefix: &[Action], secret: Secret) -> Vec<Observed> {
    let mut cache = CacheHierarchy::build(&cfg.hierarchy, cfg.seed).unwrap();
    let victim = cfg.hierarchy.n_cores - 1;
    prefix
        .iter()
        .map(|a| match *a {
            Action::Access(x) => Observed::Latency(cache.access(0, x, AccessKind::Demand).latency),
            Action::Flush(x) => {
                cache.flush(x);
                Observed::None
            }
            Action::Trigger => {
                if let Secret::Addr(x) = secret {
                    cache.access(victim, x, AccessKind::Demand);
                }
                Observed::None
            }
            Action::Guess(_) => unreachable!(),
        })
        .collect()
}

#[test]
fn no1_shortest_plan_is_prime_trigger_probe() {
    let cfg = preset("no1").unwrap();
    let plan = search(&cfg, 10).unwrap().expect("a plan exists");
    assert_eq!(plan.prefix.len(), 7);
    assert_eq!(replay(&plan, &cfg).unwrap(), 1.0);
    assert_eq!(search(&cfg, 6).unwrap(), None);
    assert_eq!(search(&cfg, 2).unwrap(), None);
}

#[test]
fn no3_flush_reload_plan() {
    let cfg = preset("no3").unwrap();
    let plan = search(&cfg, 10).unwrap().expect("a plan exists");
    assert_eq!(
        plan.prefix,
        vec![Action::Trigger, Action::Access(0), Action::Access(1), Action::Access(2)]
    );
    assert_eq!(replay(&plan, &cfg).unwrap(), 1.0);
}

fn small_configs() -> Vec<(&'static str, EnvConfig, usize)> {
    let mut two_sets = EnvConfig::new(
        HierarchyConfig::single(CacheConfig::new(2, 1)),
        AddrRange::inclusive(0, 1),
        AddrRange::inclusive(2, 3),
        true,
    );
    two_sets.max_episode_len = 8;
    vec![
        ("no3", preset("no3").unwrap(), 4),
        ("no5", preset("no5").unwrap(), 6),
        ("no6", preset("no6").unwrap(), 5),
        ("no8", preset("no8").unwrap(), 4),
        ("two_sets", two_sets, 5),
    ]
}

#[test]
fn search_agrees_with_naive_enumeration() {
    for (name, cfg, max_len) in small_configs() {
        let fast = search(&cfg, max_len).unwrap();
        let slow = naive_first_plan(&cfg, max_len);
        match (fast, slow) {
            (Some(plan), Some((len, prefix))) => {
                assert_eq!(plan.prefix.len(), len, "{name}");
                assert_eq!(plan.prefix, prefix, "{name}");
                assert_eq!(replay(&plan, &cfg).unwrap(), 1.0, "{name}");
            }
            (None, None) => {}
            (fast, slow) => panic!("{name}: search {fast:?} vs enumeration {slow:?}"),
        }
    }
}

#[test]
fn one_step_too_short_finds_nothing() {
    for (name, cfg, max_len) in small_configs() {
        if let Some(plan) = search(&cfg, max_len).unwrap() {
            if !plan.prefix.is_empty() {
                assert_eq!(search(&cfg, plan.prefix.len() - 1).unwrap(), None, "{name}");
            }
        }
    }
}

#[test]
fn wrong_decode_lowers_accuracy() {
    let cfg = preset("no3").unwrap();
    let mut plan = search(&cfg, 10).unwrap().unwrap();
    plan.decode[0].1 = plan.decode[1].1;
    assert_eq!(replay(&plan, &cfg).unwrap(), 0.75);
    plan.decode.clear();
    assert_eq!(replay(&plan, &cfg).unwrap(), 0.0);
}

#[test]
fn adaptive_branches_replay() {
    // no3: reload line 0 first; on a hit the secret is 0, otherwise keep
    // probing.
    let cfg = preset("no3").unwrap();
    let short: AttackPlan = "V\nA 0\nDECODE .H->0\n".parse().unwrap();
    let long: AttackPlan = "V\nA 0\nA 1\nA 2\nDECODE .MHM->1\nDECODE .MMH->2\nDECODE .MMM->3\n"
        .parse()
        .unwrap();
    assert_eq!(replay_branches(&[short.clone(), long.clone()], &cfg).unwrap(), 1.0);
    assert_eq!(replay_branches(&[long], &cfg).unwrap(), 0.75);
    assert_eq!(replay_branches(&[short], &cfg).unwrap(), 0.25);
}

#[test]
fn conflicting_branches_are_an_error() {
    let cfg = preset("no3").unwrap();
    let a: AttackPlan = "V\nA 0\nDECODE .H->0\nDECODE .M->1\n".parse().unwrap();
    let b: AttackPlan = "V\nA 0\nA 1\nDECODE .MH->1\n".parse().unwrap();
    assert!(matches!(
        replay_branches(&[a, b], &cfg),
        Err(OracleError::Ambiguous { .. })
    ));
}

#[test]
fn illegal_plan_actions_are_rejected() {
    let cfg = preset("no1").unwrap();
    let plan: AttackPlan = "F 4\nDECODE .->0\n".parse().unwrap();
    assert!(matches!(replay(&plan, &cfg), Err(OracleError::IllegalAction(_))));
}

#[test]
fn large_configs_are_refused() {
    let cfg = preset("no17").unwrap();
    match search(&cfg, 10) {
        Err(OracleError::BudgetExceeded { budget, cost, .. }) => assert!(cost > budget as u128),
        other => panic!("expected a refusal, got {other:?}"),
    }
    let cfg = preset("no1").unwrap();
    assert!(matches!(
        search_with_budget(&cfg, 10, 1000),
        Err(OracleError::BudgetExceeded { .. })
    ));
}

fn action_strategy() -> impl Strategy<Value = Action> {
    prop_oneof![
        (0u64..64).prop_map(Action::Access),
        (0u64..64).prop_map(Action::Flush),
        Just(Action::Trigger),
    ]
}

fn observed_strategy() -> impl Strategy<Value = Observed> {
    prop_oneof![
        Just(Observed::None),
        Just(Observed::Latency(LatencyClass::Hit)),
        Just(Observed::Latency(LatencyClass::L1Hit)),
        Just(Observed::Latency(LatencyClass::L2Hit)),
        Just(Observed::Latency(LatencyClass::Miss)),
    ]
}

fn plan_strategy() -> impl Strategy<Value = AttackPlan> {
    proptest::collection::vec(action_strategy(), 0..8).prop_flat_map(|prefix| {
        let n = prefix.len();
        let entry = (
            proptest::collection::vec(observed_strategy(), n),
            prop_oneof![(0u64..64).prop_map(Secret::Addr), Just(Secret::NoAccess)],
        )
            .prop_map(|(t, s)| (Trace(t), s));
        proptest::collection::vec(entry, 0..5).prop_map(move |decode| AttackPlan {
            prefix: prefix.clone(),
            decode,
        })
    })
}

proptest! {
    #[test]
    fn plan_text_round_trips(plan in plan_strategy()) {
        let text = plan.to_text();
        prop_assert_eq!(AttackPlan::parse(&text).unwrap(), plan);
    }
}
