use std::collections::VecDeque;

use rand::Rng;

use crate::env::Action;

/// One decision step for every learning agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Encoded histories, one `obs_width` block per agent.
    pub obs: Vec<f64>,
    pub state: Vec<f64>,
    pub actions: Vec<Action>,
    /// Behavior probability of each agent's action.
    pub probs: Vec<f64>,
    /// Whether each agent could transmit, i.e. actually chose its action.
    pub feasible: Vec<bool>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub next_state: Vec<f64>,
    pub next_feasible: Vec<bool>,
}

/// Fixed-capacity FIFO of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "replay capacity must be positive");
        Self { items: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }

    /// The most recent `n` transitions in time order.
    pub fn recent(&self, n: usize) -> Vec<&Transition> {
        let start = self.items.len().saturating_sub(n);
        self.items.range(start..).collect()
    }
}
