//! Battery-like key buffer between two adjacent stations.
//!
//! A pool holds at most `V_m` keys. Deliveries are refused while the pool is
//! replenishing. A delivery that leaves fewer than `V_i` keys switches it to
//! replenishing, and it serves again once `V_r` keys are back.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::Serialize;

use super::ProtocolError;

/// A key as a string of bits (each entry 0 or 1).
pub type Key = Vec<u8>;

pub fn random_key<R: Rng + ?Sized>(bits: usize, rng: &mut R) -> Key {
    (0..bits).map(|_| rng.random_range(0..2u8)).collect()
}

pub fn xor_keys(a: &[Key], b: &[Key]) -> Vec<Key> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p ^ q).collect())
        .collect()
}

pub fn key_string(key: &[u8]) -> String {
    key.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PoolStatus {
    Serving,
    Replenishing,
}

impl fmt::Display for PoolStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolStatus::Serving => "serving",
            PoolStatus::Replenishing => "replenishing",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Delivery {
    Keys(Vec<Key>),
    /// Not enough keys or not serving; the caller queues the request.
    Backpressure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyPool {
    capacity: usize,
    interruption: usize,
    recovery: usize,
    key_length: usize,
    keys: VecDeque<Key>,
    status: PoolStatus,
    generated: u64,
    delivered: u64,
}

impl KeyPool {
    /// Empty pool with `V_i = V_m / 4` (rounded down) and `V_r = V_m`.
    pub fn new(capacity: usize, key_length: usize) -> Result<Self, ProtocolError> {
        if capacity == 0 || key_length == 0 {
            return Err(ProtocolError::Parameter("pool capacity and key length must be positive".into()));
        }
        Ok(KeyPool {
            capacity,
            interruption: capacity / 4,
            recovery: capacity,
            key_length,
            keys: VecDeque::with_capacity(capacity),
            status: PoolStatus::Serving,
            generated: 0,
            delivered: 0,
        })
    }

    /// Pool pre-filled with `fill` fresh keys.
    pub fn filled<R: Rng + ?Sized>(capacity: usize, key_length: usize, fill: usize, rng: &mut R) -> Result<Self, ProtocolError> {
        let mut pool = Self::new(capacity, key_length)?;
        for _ in 0..fill.min(capacity) {
            pool.add_key(random_key(key_length, rng));
        }
        Ok(pool)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn interruption(&self) -> usize {
        self.interruption
    }

    pub fn recovery(&self) -> usize {
        self.recovery
    }

    pub fn key_length(&self) -> usize {
        self.key_length
    }

    pub fn current(&self) -> usize {
        self.keys.len()
    }

    pub fn status(&self) -> PoolStatus {
        self.status
    }

    pub fn generated(&self) -> u64 {
        self.generated
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn is_full(&self) -> bool {
        self.keys.len() >= self.capacity
    }

    /// Hands out `count` keys, or signals backpressure.
    pub fn deliver(&mut self, count: usize) -> Result<Delivery, ProtocolError> {
        if count > self.capacity {
            return Err(ProtocolError::Unsatisfiable {
                count,
                capacity: self.capacity,
            });
        }
        if self.status == PoolStatus::Replenishing || self.keys.len() < count {
            return Ok(Delivery::Backpressure);
        }
        let keys: Vec<Key> = self.keys.drain(..count).collect();
        self.delivered += count as u64;
        if self.keys.len() < self.interruption {
            self.status = PoolStatus::Replenishing;
        }
        Ok(Delivery::Keys(keys))
    }

    /// Stores a freshly generated key. Returns `false` when the pool is full.
    pub fn add_key(&mut self, key: Key) -> bool {
        if self.is_full() {
            return false;
        }
        self.keys.push_back(key);
        self.generated += 1;
        if self.status == PoolStatus::Replenishing && self.keys.len() >= self.recovery {
            self.status = PoolStatus::Serving;
        }
        true
    }

    /// Whether key generation should run, given the size of the request
    /// waiting on this pool (0 for none). Generation runs while
    /// replenishing, and also while serving when the waiting request does
    /// not fit; without the latter a pool holding between `V_i` and the
    /// request size keys would never refill.
    pub fn wants_generation(&self, waiting: usize) -> bool {
        !self.is_full() && (self.status == PoolStatus::Replenishing || (waiting > 0 && self.keys.len() < waiting))
    }
}
