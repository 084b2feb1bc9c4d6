use rand::Rng;

/// Joint transition stored for the actor-critic trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Per-agent encoded observations.
    pub obs: Vec<Vec<f64>>,
    /// Per-agent `[a_bat, a_heat, a_cons]`.
    pub actions: Vec<[f64; 3]>,
    pub reward: f64,
    pub next_obs: Vec<Vec<f64>>,
    pub state: Vec<f64>,
    pub next_state: Vec<f64>,
    pub done: bool,
    /// Actions come from the LP demonstrator.
    pub demo: bool,
}

/// Fixed-capacity ring with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    items: Vec<T>,
    capacity: usize,
    inserted: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            inserted: 0,
        }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.inserted % self.capacity] = item;
        }
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total insertions, including overwritten items.
    pub fn inserted(&self) -> usize {
        self.inserted
    }

    /// `k` items drawn uniformly with replacement.
    pub fn sample<'a, R: Rng>(&'a self, k: usize, rng: &mut R) -> Vec<&'a T> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..k)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}
