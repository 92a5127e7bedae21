//! Flat transition store with episode boundaries.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
}

/// Transitions within an episode stay contiguous and ordered; eviction under
/// the capacity cap drops whole episodes from the front.
pub struct ReplayBuffer {
    state_dim: usize,
    action_dim: usize,
    capacity: usize,
    transitions: Vec<Transition>,
    /// (start index, length) per stored episode.
    episodes: Vec<(usize, usize)>,
}

impl ReplayBuffer {
    pub fn new(state_dim: usize, action_dim: usize, capacity: usize) -> Self {
        ReplayBuffer { state_dim, action_dim, capacity, transitions: Vec::new(), episodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn episode_count(&self) -> usize {
        self.episodes.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.transitions[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> + Clone {
        self.transitions.iter()
    }

    pub fn push_episode(&mut self, steps: Vec<Transition>) -> Result<()> {
        if steps.is_empty() {
            return Err(Error::Protocol("empty episode pushed to replay buffer".into()));
        }
        for t in &steps {
            if t.state.len() != self.state_dim
                || t.next_state.len() != self.state_dim
                || t.action.len() != self.action_dim
            {
                return Err(Error::ShapeMismatch(
                    "transition dims do not match buffer dims".into(),
                ));
            }
        }
        let start = self.transitions.len();
        let len = steps.len();
        self.transitions.extend(steps);
        self.episodes.push((start, len));
        while self.transitions.len() > self.capacity && self.episodes.len() > 1 {
            let (_, dropped) = self.episodes.remove(0);
            self.transitions.drain(0..dropped);
            for e in &mut self.episodes {
                e.0 -= dropped;
            }
        }
        Ok(())
    }

    /// Uniformly sampled states as a `(k, state_dim)` batch.
    pub fn sample_states(&self, rng: &mut impl Rng, k: usize) -> Result<Tensor> {
        self.sample_recent_states(rng, k, 0)
    }

    /// Uniform samples restricted to the most recent `window` transitions
    /// (0 = whole buffer).
    pub fn sample_recent_states(
        &self,
        rng: &mut impl Rng,
        k: usize,
        window: usize,
    ) -> Result<Tensor> {
        if self.is_empty() {
            return Err(Error::Training("replay buffer is empty".into()));
        }
        let len = self.transitions.len();
        let start = if window == 0 || window >= len { 0 } else { len - window };
        let mut data = Vec::with_capacity(k * self.state_dim);
        for _ in 0..k {
            let i = rng.random_range(start..len);
            data.extend_from_slice(&self.transitions[i].state);
        }
        Tensor::from_vec(&[k, self.state_dim], data)
    }
}
