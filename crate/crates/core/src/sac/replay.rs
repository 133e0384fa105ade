use ndarray::{Array1, Array2};
use rand::Rng;

use crate::net::Scalar;

use super::SacError;

/// Fixed-capacity circular transition store.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    obs_dim: usize,
    act_dim: usize,
    capacity: usize,
    obs: Vec<f32>,
    act: Vec<f32>,
    rew: Vec<f32>,
    next_obs: Vec<f32>,
    done: Vec<f32>,
    cursor: usize,
    size: usize,
}

/// Transitions gathered for one update. `done` is 1 for terminal
/// transitions, which are not bootstrapped.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<S: Scalar> {
    pub obs: Array2<S>,
    pub act: Array2<S>,
    pub rew: Array1<S>,
    pub next_obs: Array2<S>,
    pub done: Array1<S>,
}

impl<S: Scalar> Batch<S> {
    pub fn len(&self) -> usize {
        self.rew.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rew.is_empty()
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            obs_dim,
            act_dim,
            capacity,
            obs: Vec::new(),
            act: Vec::new(),
            rew: Vec::new(),
            next_obs: Vec::new(),
            done: Vec::new(),
            cursor: 0,
            size: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Slot the next push writes to.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn push(&mut self, obs: &[f64], act: &[f64], rew: f64, next_obs: &[f64], done: bool) {
        assert_eq!(obs.len(), self.obs_dim);
        assert_eq!(next_obs.len(), self.obs_dim);
        assert_eq!(act.len(), self.act_dim);
        let i = self.cursor;
        if self.size < self.capacity {
            // Storage grows lazily until the first wrap.
            self.obs.extend(obs.iter().map(|&v| v as f32));
            self.act.extend(act.iter().map(|&v| v as f32));
            self.rew.push(rew as f32);
            self.next_obs.extend(next_obs.iter().map(|&v| v as f32));
            self.done.push(if done { 1.0 } else { 0.0 });
            self.size += 1;
        } else {
            let (o, a) = (self.obs_dim, self.act_dim);
            for (d, s) in self.obs[i * o..(i + 1) * o].iter_mut().zip(obs) {
                *d = *s as f32;
            }
            for (d, s) in self.act[i * a..(i + 1) * a].iter_mut().zip(act) {
                *d = *s as f32;
            }
            self.rew[i] = rew as f32;
            for (d, s) in self.next_obs[i * o..(i + 1) * o].iter_mut().zip(next_obs) {
                *d = *s as f32;
            }
            self.done[i] = if done { 1.0 } else { 0.0 };
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Reward stored in slot `i`.
    pub fn reward_at(&self, i: usize) -> Option<f32> {
        (i < self.size).then(|| self.rew[i])
    }

    /// Uniform indices into the filled region.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>, SacError> {
        if self.size < n || n == 0 {
            return Err(SacError::BufferTooSmall { size: self.size, batch: n });
        }
        Ok((0..n).map(|_| rng.random_range(0..self.size)).collect())
    }

    pub fn gather<S: Scalar>(&self, idx: &[usize]) -> Batch<S> {
        let (o, a, n) = (self.obs_dim, self.act_dim, idx.len());
        let rows = |src: &[f32], width: usize| {
            let mut v = Vec::with_capacity(n * width);
            for &i in idx {
                v.extend(src[i * width..(i + 1) * width].iter().map(|&x| S::from_f32(x)));
            }
            Array2::from_shape_vec((n, width), v).expect("batch shape")
        };
        Batch {
            obs: rows(&self.obs, o),
            act: rows(&self.act, a),
            rew: idx.iter().map(|&i| S::from_f32(self.rew[i])).collect(),
            next_obs: rows(&self.next_obs, o),
            done: idx.iter().map(|&i| S::from_f32(self.done[i])).collect(),
        }
    }

    pub fn sample<S: Scalar, R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch<S>, SacError> {
        Ok(self.gather(&self.sample_indices(n, rng)?))
    }

    /// Flat views used for checkpointing: observations, actions, rewards,
    /// next observations and done flags, plus cursor and size.
    pub fn raw_parts(&self) -> ([&[f32]; 5], usize, usize) {
        ([&self.obs, &self.act, &self.rew, &self.next_obs, &self.done], self.cursor, self.size)
    }

    pub fn from_raw_parts(
        capacity: usize,
        obs_dim: usize,
        act_dim: usize,
        parts: [Vec<f32>; 5],
        cursor: usize,
        size: usize,
    ) -> Result<Self, SacError> {
        let [obs, act, rew, next_obs, done] = parts;
        let ok = size <= capacity
            && cursor < capacity
            && obs.len() == size * obs_dim
            && next_obs.len() == size * obs_dim
            && act.len() == size * act_dim
            && rew.len() == size
            && done.len() == size;
        if !ok {
            return Err(SacError::Checkpoint("replay buffer parts are inconsistent".into()));
        }
        Ok(ReplayBuffer { obs_dim, act_dim, capacity, obs, act, rew, next_obs, done, cursor, size })
    }
}
