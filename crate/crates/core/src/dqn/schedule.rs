use serde::{Deserialize, Serialize};

/// Linear epsilon decay over the first `decay_fraction` of training, flat after.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_fraction: f64,
    pub episodes: usize,
}

impl EpsilonSchedule {
    pub fn value(&self, episode: usize) -> f64 {
        let span = self.decay_fraction * self.episodes as f64;
        if span <= 0.0 {
            return self.end;
        }
        let frac = episode as f64 / span;
        if frac >= 1.0 {
            self.end
        } else {
            self.start + (self.end - self.start) * frac
        }
    }
}

/// Counts gradient steps and reports when the target network is due.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSync {
    pub every: u64,
    steps: u64,
}

impl TargetSync {
    pub fn new(every: u64) -> Self {
        Self { every, steps: 0 }
    }

    pub fn with_steps(every: u64, steps: u64) -> Self {
        Self { every, steps }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Record one gradient step; true when a sync is due after it.
    pub fn tick(&mut self) -> bool {
        self.steps += 1;
        self.every > 0 && self.steps.is_multiple_of(self.every)
    }
}
