use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Squashed action in `[-1, 1]` per dimension.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next push overwrites once the ring is full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
        }
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

    /// Stores a transition, clipping its action into `[-1, 1]` and evicting
    /// the oldest entry when full.
    pub fn push(&mut self, mut t: Transition) {
        assert_eq!(t.state.len(), t.next_state.len(), "state lengths differ");
        t.action.iter_mut().for_each(|a| *a = a.clamp(-1.0, 1.0));
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Storage-order access; index into [`ReplayBuffer::sample_indices`].
    pub fn get(&self, index: usize) -> &Transition {
        &self.items[index]
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer.iter())
    }

    /// Uniform sample of distinct slots.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        assert!(batch <= self.len(), "batch larger than buffer");
        rand::seq::index::sample(rng, self.len(), batch).into_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tagged(tag: f64) -> Transition {
        Transition {
            state: vec![tag],
            action: vec![3.0 * tag],
            reward: tag,
            next_state: vec![tag],
            done: false,
        }
    }

    #[test]
    fn actions_clipped_on_store() {
        let mut buf = ReplayBuffer::new(2);
        buf.push(tagged(1.0));
        assert_eq!(buf.get(0).action, vec![1.0]);
    }

    #[test]
    fn sampling_without_replacement() {
        let mut buf = ReplayBuffer::new(50);
        (0..50).for_each(|i| buf.push(tagged(i as f64)));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut idx = buf.sample_indices(50, &mut rng);
        idx.sort();
        assert_eq!(idx, (0..50).collect::<Vec<_>>());
    }
}
