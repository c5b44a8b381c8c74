//! Experience replay of short trajectory windows.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;

use crate::env::{reward, CutState, EnvSnapshot};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Window of an episode ending with the transition being learned from.
///
/// Only the state at the start of the window is stored; the later states are
/// rebuilt by replaying `actions`, which is exact because the environment is
/// deterministic.
#[derive(Clone, Debug)]
pub struct TransitionSegment {
    pub graph: Arc<Graph>,
    /// Environment at the start of the window.
    pub start: EnvSnapshot,
    /// Decoder state that the acting network had at the start of the window.
    pub start_hidden: Vec<f32>,
    /// Actions from the window start up to and including the learned one.
    pub actions: Vec<usize>,
    /// Reward of the last action.
    pub reward: f64,
    /// Whether the last action ended the episode.
    pub done: bool,
}

impl TransitionSegment {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Structural checks against the BPTT length.
    pub fn validate(&self, bptt_length: usize) -> Result<()> {
        let n = self.graph.n_vertices();
        if self.actions.is_empty() || self.actions.len() > bptt_length + 1 {
            return Err(Error::Argument(format!(
                "segment holds {} actions, expected 1..={}",
                self.actions.len(),
                bptt_length + 1
            )));
        }
        if let Some(&a) = self.actions.iter().find(|&&a| a >= n) {
            return Err(Error::Index {
                vertex: a,
                n_vertices: n,
            });
        }
        if self.start.labels.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: self.start.labels.len(),
            });
        }
        Ok(())
    }

    /// Rebuilds the environment at the window start.
    pub fn start_state(&self) -> Result<CutState> {
        CutState::from_snapshot(&self.graph, &self.start)
    }

    /// Replays the window and returns the reward of every action.
    pub fn replay_rewards(&self) -> Result<Vec<f64>> {
        let mut state = self.start_state()?;
        let n = self.graph.n_vertices();
        self.actions
            .iter()
            .map(|&a| {
                let prev = state.best_cut();
                state.apply_flip(&self.graph, a)?;
                Ok(reward(&state, prev, n))
            })
            .collect()
    }
}

/// FIFO replay memory with uniform sampling.
#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Arc<TransitionSegment>>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Argument("buffer capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
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

    /// Appends a segment, evicting the oldest one when full.
    pub fn push(&mut self, segment: TransitionSegment) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(Arc::new(segment));
    }

    pub fn get(&self, i: usize) -> Option<&Arc<TransitionSegment>> {
        self.items.get(i)
    }

    /// Draws `batch` segments uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<Arc<TransitionSegment>>> {
        if self.items.len() < batch || batch == 0 {
            return Err(Error::NotReady {
                have: self.items.len(),
                need: batch.max(1),
            });
        }
        Ok((0..batch)
            .map(|_| self.items[rng.random_range(0..self.items.len())].clone())
            .collect())
    }
}
