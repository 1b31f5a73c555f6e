use serde::{Deserialize, Serialize};

/// Counters for one epoch of environment actions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub episodes_completed: u64,
    pub episodes_correct: u64,
    pub total_actions: u64,
    pub useless_actions: u64,
    pub wall_time: f64,
}

impl EpochStats {
    /// Fraction of completed episodes with a correct guess; 0 when no episode
    /// completed (see [`EpochStats::has_episodes`]).
    pub fn correct_rate(&self) -> f64 {
        if self.episodes_completed == 0 {
            0.0
        } else {
            self.episodes_correct as f64 / self.episodes_completed as f64
        }
    }

    pub fn has_episodes(&self) -> bool {
        self.episodes_completed > 0
    }

    pub fn is_perfect(&self) -> bool {
        self.has_episodes() && self.episodes_correct == self.episodes_completed
    }
}
