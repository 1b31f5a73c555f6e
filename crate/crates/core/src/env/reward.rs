use serde::{Deserialize, Serialize};

use super::ActionKind;
use crate::cache::CacheSnapshot;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Charged on every non-guess step.
    pub r_step: f64,
    /// Added to `r_step` when a useless action is penalized.
    pub r_useless: f64,
    pub r_correct: f64,
    pub r_wrong: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            r_step: -0.01,
            r_useless: -0.01,
            r_correct: 1.0,
            r_wrong: -1.0,
        }
    }
}

impl RewardConfig {
    /// Returns the name of the first field violating its sign constraint.
    pub fn check(&self) -> Result<(), (&'static str, &'static str)> {
        if !(self.r_step <= 0.0) {
            return Err(("r_step", "must be <= 0"));
        }
        if !(self.r_useless <= 0.0) {
            return Err(("r_useless", "must be <= 0"));
        }
        if !(self.r_correct > 0.0) {
            return Err(("r_correct", "must be positive"));
        }
        if !(self.r_wrong < 0.0) {
            return Err(("r_wrong", "must be negative"));
        }
        Ok(())
    }
}

/// Reward for one step.
///
/// Guesses earn `r_correct` or `r_wrong`; everything else earns `r_step`,
/// plus `r_useless` when the step was useless and the penalty is enabled.
///
/// Panics if `guess_correct` is present for a non-guess or missing for a guess.
pub fn compute_reward(
    cfg: &RewardConfig,
    kind: ActionKind,
    useless: bool,
    guess_correct: Option<bool>,
    penalty_enabled: bool,
) -> f64 {
    assert_eq!(
        guess_correct.is_some(),
        kind == ActionKind::Guess,
        "guess_correct must be given exactly for guesses"
    );
    match guess_correct {
        Some(true) => cfg.r_correct,
        Some(false) => cfg.r_wrong,
        None if penalty_enabled && useless => cfg.r_step + cfg.r_useless,
        None => cfg.r_step,
    }
}

/// A step is useless when it is an attacker access or flush that left the
/// captured state unchanged. Victim triggers and guesses never are.
///
/// Panics if the snapshots were taken with different scopes.
pub fn classify_useless(kind: ActionKind, pre: &CacheSnapshot, post: &CacheSnapshot) -> bool {
    assert_eq!(pre.scope, post.scope, "snapshots must share a scope");
    matches!(kind, ActionKind::Access | ActionKind::Flush) && pre == post
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::{
        AccessKind, CacheConfig, CacheHierarchy, HierarchyConfig, SnapshotScope,
    };

    #[test]
    fn reward_examples() {
        let cfg = RewardConfig::default();
        assert_eq!(compute_reward(&cfg, ActionKind::Access, true, None, true), -0.02);
        assert_eq!(compute_reward(&cfg, ActionKind::Access, true, None, false), -0.01);
        assert_eq!(compute_reward(&cfg, ActionKind::Guess, false, Some(true), true), 1.0);
        assert_eq!(compute_reward(&cfg, ActionKind::Guess, false, Some(false), true), -1.0);
        assert_eq!(compute_reward(&cfg, ActionKind::Trigger, false, None, true), -0.01);
    }

    #[test]
    #[should_panic]
    fn reward_rejects_missing_guess_outcome() {
        compute_reward(&RewardConfig::default(), ActionKind::Guess, false, None, true);
    }

    #[test]
    fn reward_config_sign_checks() {
        assert!(RewardConfig::default().check().is_ok());
        let bad = RewardConfig {
            r_correct: -1.0,
            ..RewardConfig::default()
        };
        assert_eq!(bad.check().unwrap_err().0, "r_correct");
    }

    fn fa2() -> CacheHierarchy {
        let cfg = HierarchyConfig::single(CacheConfig::new(1, 2));
        CacheHierarchy::build(&cfg, 0).unwrap()
    }

    #[test]
    fn classify_examples() {
        let mut h = fa2();
        let pre = h.snapshot(SnapshotScope::Full);
        h.flush(3);
        let post = h.snapshot(SnapshotScope::Full);
        assert!(classify_useless(ActionKind::Flush, &pre, &post));
        assert!(!classify_useless(ActionKind::Trigger, &pre, &post));
        assert!(!classify_useless(ActionKind::Guess, &pre, &post));

        // Hit to the non-MRU line of a 2-way LRU set.
        h.access(0, 1, AccessKind::Demand);
        h.access(0, 2, AccessKind::Demand);
        for (scope, expected) in [(SnapshotScope::Full, false), (SnapshotScope::LinesOnly, true)] {
            let mut c = h.clone();
            let pre = c.snapshot(scope);
            c.access(0, 1, AccessKind::Demand);
            let post = c.snapshot(scope);
            assert_eq!(classify_useless(ActionKind::Access, &pre, &post), expected);
        }
    }

    #[test]
    #[should_panic]
    fn classify_rejects_mixed_scopes() {
        let h = fa2();
        classify_useless(
            ActionKind::Access,
            &h.snapshot(SnapshotScope::Full),
            &h.snapshot(SnapshotScope::LinesOnly),
        );
    }
}
