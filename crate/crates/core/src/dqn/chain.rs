//! Five-state deterministic chain, a small MDP with a known optimum.
//!
//! States 0..=4; 0 and 4 are terminal. Moving into 0 pays 0.5, moving into
//! 4 pays 1.0, every other move pays nothing. Action 0 moves left, 1 right.
//! Episodes start in a uniformly drawn interior state.

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::rng::SimRng;

use super::trainer::{EnvStep, TrainingEnv};

pub const CHAIN_STATES: usize = 5;
const MAX_STEPS: usize = 50;

#[derive(Debug, Clone)]
pub struct ChainEnv {
    state: usize,
    steps: usize,
}

impl Default for ChainEnv {
    fn default() -> Self {
        Self { state: 2, steps: 0 }
    }
}

impl ChainEnv {
    pub fn one_hot(state: usize) -> Vec<f64> {
        let mut v = vec![0.0; CHAIN_STATES];
        v[state] = 1.0;
        v
    }

    pub fn is_terminal(state: usize) -> bool {
        state == 0 || state == CHAIN_STATES - 1
    }

    /// Deterministic transition: (next state, reward).
    pub fn transition(state: usize, action: usize) -> (usize, f64) {
        let next = if action == 0 { state - 1 } else { state + 1 };
        let reward = match next {
            0 => 0.5,
            s if s == CHAIN_STATES - 1 => 1.0,
            _ => 0.0,
        };
        (next, reward)
    }

    /// Optimal Q-values by value iteration.
    pub fn optimal_q(gamma: f64) -> Vec<[f64; 2]> {
        let mut q = vec![[0.0f64; 2]; CHAIN_STATES];
        for _ in 0..1000 {
            let v: Vec<f64> = q
                .iter()
                .enumerate()
                .map(|(s, qs)| {
                    if Self::is_terminal(s) {
                        0.0
                    } else {
                        qs[0].max(qs[1])
                    }
                })
                .collect();
            for (s, qs) in q
                .iter_mut()
                .enumerate()
                .filter(|(s, _)| !Self::is_terminal(*s))
            {
                for (a, slot) in qs.iter_mut().enumerate() {
                    let (next, r) = Self::transition(s, a);
                    *slot = r + gamma * v[next];
                }
            }
        }
        q
    }
}

impl TrainingEnv for ChainEnv {
    fn n_agents(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        CHAIN_STATES
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut rng = SimRng::seed_from_u64(seed);
        self.state = rng.random_range(1..CHAIN_STATES - 1);
        self.steps = 0;
        Ok(vec![Self::one_hot(self.state)])
    }

    fn step(&mut self, actions: &[usize]) -> Result<EnvStep> {
        let [a] = actions else {
            return Err(Error::Shape {
                expected: "1 action".into(),
                got: format!("{}", actions.len()),
            });
        };
        if Self::is_terminal(self.state) {
            return Err(Error::Validation("step on a finished chain episode".into()));
        }
        let (next, r) = Self::transition(self.state, (*a).min(1));
        self.state = next;
        self.steps += 1;
        let done = Self::is_terminal(next) || self.steps >= MAX_STEPS;
        Ok(EnvStep {
            observations: vec![Self::one_hot(next)],
            rewards: vec![r],
            done: vec![done],
            episode_done: done,
        })
    }

    fn baseline_action(&self, _agent: usize) -> usize {
        0
    }
}
