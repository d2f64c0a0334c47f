//! Uniform-replay experience storage.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

/// One environment interaction. Actions are stored in the normalized
/// [-1, 1] policy space.
#[derive(Clone, Debug)]
pub struct Transition<T> {
    pub s: Vec<T>,
    pub a: Vec<T>,
    pub r: T,
    pub s_next: Vec<T>,
    /// True terminal (bootstrapping is masked).
    pub done: bool,
    /// Episode-cap cutoff (bootstrapping continues).
    pub truncated: bool,
}

/// Fixed-capacity FIFO ring with seeded uniform sampling. Storage is flat
/// per field to keep a million transitions cheap.
pub struct ReplayBuffer<T> {
    n: usize,
    m: usize,
    capacity: usize,
    len: usize,
    head: usize,
    states: Vec<T>,
    actions: Vec<T>,
    rewards: Vec<T>,
    next_states: Vec<T>,
    done: Vec<bool>,
    truncated: Vec<bool>,
}

/// A sampled minibatch in matrix form. `bootstrap_mask` is 1 where the
/// target may bootstrap from the next state (not a true terminal) else 0.
pub struct Batch<T> {
    pub states: Array2<T>,
    pub actions: Array2<T>,
    pub rewards: Array1<T>,
    pub next_states: Array2<T>,
    pub bootstrap_mask: Array1<T>,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(n: usize, m: usize, capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            n,
            m,
            capacity,
            len: 0,
            head: 0,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            done: Vec::new(),
            truncated: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, tr: Transition<T>) {
        debug_assert_eq!(tr.s.len(), self.n);
        debug_assert_eq!(tr.a.len(), self.m);
        if self.len < self.capacity {
            self.states.extend_from_slice(&tr.s);
            self.actions.extend_from_slice(&tr.a);
            self.rewards.push(tr.r);
            self.next_states.extend_from_slice(&tr.s_next);
            self.done.push(tr.done);
            self.truncated.push(tr.truncated);
            self.len += 1;
        } else {
            // overwrite the oldest slot
            let i = self.head;
            self.states[i * self.n..(i + 1) * self.n].copy_from_slice(&tr.s);
            self.actions[i * self.m..(i + 1) * self.m].copy_from_slice(&tr.a);
            self.rewards[i] = tr.r;
            self.next_states[i * self.n..(i + 1) * self.n].copy_from_slice(&tr.s_next);
            self.done[i] = tr.done;
            self.truncated[i] = tr.truncated;
        }
        self.head = (self.head + 1) % self.capacity;
    }

    pub fn sample_indices(&self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        use rand::Rng;
        (0..batch).map(|_| rng.gen_range(0..self.len)).collect()
    }

    pub fn gather(&self, idx: &[usize]) -> Batch<T> {
        let b = idx.len();
        let mut states = Array2::zeros((b, self.n));
        let mut actions = Array2::zeros((b, self.m));
        let mut rewards = Array1::zeros(b);
        let mut next_states = Array2::zeros((b, self.n));
        let mut mask = Array1::zeros(b);
        for (row, &i) in idx.iter().enumerate() {
            for k in 0..self.n {
                states[[row, k]] = self.states[i * self.n + k];
                next_states[[row, k]] = self.next_states[i * self.n + k];
            }
            for k in 0..self.m {
                actions[[row, k]] = self.actions[i * self.m + k];
            }
            rewards[row] = self.rewards[i];
            // bootstrap unless this was a true terminal; time-limit cuts keep
            // bootstrapping
            mask[row] = if self.done[i] && !self.truncated[i] { T::zero() } else { T::one() };
        }
        Batch { states, actions, rewards, next_states, bootstrap_mask: mask }
    }

    pub fn sample(&self, batch: usize, rng: &mut ChaCha8Rng) -> Batch<T> {
        let idx = self.sample_indices(batch, rng);
        self.gather(&idx)
    }
}
