//! Ring replay buffer with uniform with-replacement sampling.

use serde::{Deserialize, Serialize};

use crate::numkit::{Rng, Vector};

use super::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Factual,
    Counterfactual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vector,
    pub action: Vector,
    pub reward: f64,
    pub next_state: Vector,
    pub done: bool,
    pub provenance: Provenance,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.state.is_finite()
            && self.action.is_finite()
            && self.reward.is_finite()
            && self.next_state.is_finite()
    }
}

/// FIFO ring of transitions. Sampling is uniform with replacement, so a
/// mini-batch can be drawn even while the buffer holds fewer items than the
/// batch size.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    pushed_factual: u64,
    pushed_counterfactual: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::new(),
            next: 0,
            pushed_factual: 0,
            pushed_counterfactual: 0,
        }
    }

    pub fn push(&mut self, t: Transition) {
        match t.provenance {
            Provenance::Factual => self.pushed_factual += 1,
            Provenance::Counterfactual => self.pushed_counterfactual += 1,
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
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

    /// Total pushes by provenance over the buffer's lifetime (not reduced by
    /// eviction).
    pub fn pushed_counts(&self) -> (u64, u64) {
        (self.pushed_factual, self.pushed_counterfactual)
    }

    /// Counterfactual fraction of the current contents.
    pub fn counterfactual_fraction(&self) -> f64 {
        if self.items.is_empty() {
            return 0.0;
        }
        let cf = self
            .items
            .iter()
            .filter(|t| t.provenance == Provenance::Counterfactual)
            .count();
        cf as f64 / self.items.len() as f64
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn sample(&self, batch: usize, rng: &mut Rng) -> Result<Vec<&Transition>, AgentError> {
        if self.items.is_empty() {
            return Err(AgentError::EmptyBuffer);
        }
        Ok((0..batch).map(|_| &self.items[rng.index(self.items.len())]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(tag: f64, provenance: Provenance) -> Transition {
        Transition {
            state: Vector(vec![tag]),
            action: Vector(vec![0.0]),
            reward: tag,
            next_state: Vector(vec![tag]),
            done: false,
            provenance,
        }
    }

    #[test]
    fn fifo_eviction_at_capacity() {
        let mut buf = ReplayBuffer::new(2);
        buf.push(t(1.0, Provenance::Factual));
        buf.push(t(2.0, Provenance::Factual));
        buf.push(t(3.0, Provenance::Factual));
        let rewards: Vec<f64> = buf.iter().map(|x| x.reward).collect();
        assert_eq!(buf.len(), 2);
        assert!(rewards.contains(&2.0) && rewards.contains(&3.0));
    }

    #[test]
    fn sample_with_replacement_from_small_buffer() {
        let mut buf = ReplayBuffer::new(10);
        for i in 0..3 {
            buf.push(t(i as f64, Provenance::Factual));
        }
        let mut rng = Rng::seed_from(0);
        let batch = buf.sample(5, &mut rng).unwrap();
        assert_eq!(batch.len(), 5);
        assert!(batch.iter().all(|x| x.reward < 3.0));
    }

    #[test]
    fn sample_from_empty_is_error() {
        let buf = ReplayBuffer::new(4);
        let mut rng = Rng::seed_from(0);
        assert!(matches!(buf.sample(1, &mut rng), Err(AgentError::EmptyBuffer)));
    }

    #[test]
    fn sampling_is_uniform_within_binomial_bounds() {
        let n_items = 8;
        let mut buf = ReplayBuffer::new(n_items);
        for i in 0..n_items {
            buf.push(t(i as f64, Provenance::Factual));
        }
        let mut rng = Rng::seed_from(7);
        let draws = 100_000usize;
        let mut counts = vec![0usize; n_items];
        for item in buf.sample(draws, &mut rng).unwrap() {
            counts[item.reward as usize] += 1;
        }
        let p = 1.0 / n_items as f64;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            let dev = (c as f64 - draws as f64 * p).abs();
            assert!(dev < 3.0 * sigma, "item {i} count {c} deviates {dev:.1} (3s = {:.1})", 3.0 * sigma);
        }
    }

    #[test]
    fn provenance_counts_track_pushes() {
        let mut buf = ReplayBuffer::new(2);
        buf.push(t(1.0, Provenance::Factual));
        buf.push(t(2.0, Provenance::Counterfactual));
        buf.push(t(3.0, Provenance::Counterfactual));
        assert_eq!(buf.pushed_counts(), (1, 2));
        // Eviction does not rewrite history.
        buf.push(t(4.0, Provenance::Factual));
        assert_eq!(buf.pushed_counts(), (2, 2));
        assert!((buf.counterfactual_fraction() - 0.5).abs() < 1e-12);
    }
}
