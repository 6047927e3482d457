use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Experience;

/// Keeps the `capacity` most recent experiences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Experience>,
    /// Slot the next push overwrites once full.
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, items: Vec::with_capacity(capacity), cursor: 0 }
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

    pub fn push(&mut self, e: Experience) {
        if self.items.len() < self.capacity {
            self.items.push(e);
        } else {
            self.items[self.cursor] = e;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Contents from oldest to newest.
    pub fn iter_chronological(&self) -> impl Iterator<Item = &Experience> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    /// `m` draws uniform over the current contents, with replacement.
    pub fn sample<R: Rng>(&self, m: usize, rng: &mut R) -> Vec<&Experience> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..m).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}
