use rand::Rng;

use crate::env::{Action, Observation};

/// One experience tuple. Terminal samples are not bootstrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSample {
    pub obs: Observation,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Observation,
    pub terminal: bool,
}

/// Fixed-capacity FIFO experience store with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<TransitionSample>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, sample: TransitionSample) {
        if self.items.len() < self.capacity {
            self.items.push(sample);
        } else {
            self.items[self.next] = sample;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Draws `n` samples uniformly with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(
        &'a self,
        n: usize,
        rng: &mut R,
    ) -> Vec<&'a TransitionSample> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}
