//! Transition storage with 1:1 online/offline replay mixing.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::TerminationCause;

/// One policy-tick transition. Windows are stored flattened; reward
/// ingredients (velocity estimate, action pair and its predecessor, contact
/// forces) are kept in full precision so the stored rewards can be
/// recomputed exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub window: Box<[f32]>,
    pub next_window: Box<[f32]>,
    pub force_idx: u8,
    pub accel_r: Vec<f64>,
    pub prev_accel_r: Vec<f64>,
    pub r_k: f64,
    pub r_r: f64,
    pub done: bool,
    pub cause: Option<TerminationCause>,
    pub velocity_estimate: f64,
    pub contact_forces: Vec<f64>,
}

impl Transition {
    /// Discount mask for TD targets: zero only on true failures. Episodes cut
    /// by the time limit bootstrap from the value of the final state.
    pub fn bootstrap_mask(&self) -> f64 {
        match (self.done, self.cause) {
            (true, Some(c)) if c.is_failure() => 0.0,
            _ => 1.0,
        }
    }
}

/// Which partition a sampled transition came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRef {
    pub offline: bool,
    pub index: usize,
}

/// Ring-buffer replay with an immutable offline partition.
///
/// With mixing enabled and both partitions populated, every batch holds
/// exactly `ceil(B/2)` online and `floor(B/2)` offline samples; otherwise
/// sampling falls back to the online partition alone (warned once).
#[derive(Debug)]
pub struct ReplayBuffer {
    online: VecDeque<Transition>,
    offline: Vec<Transition>,
    capacity: usize,
    mixing: bool,
    fallback_warned: bool,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, mixing: bool) -> Self {
        ReplayBuffer {
            online: VecDeque::with_capacity(capacity.min(1 << 16)),
            offline: Vec::new(),
            capacity,
            mixing,
            fallback_warned: false,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.online.len() == self.capacity {
            self.online.pop_front();
        }
        self.online.push_back(t);
    }

    pub fn load_offline(&mut self, transitions: Vec<Transition>) {
        self.offline = transitions;
    }

    pub fn online_len(&self) -> usize {
        self.online.len()
    }

    pub fn offline_len(&self) -> usize {
        self.offline.len()
    }

    pub fn get(&self, r: SampleRef) -> &Transition {
        if r.offline {
            &self.offline[r.index]
        } else {
            &self.online[r.index]
        }
    }

    fn partition_len(&self, offline: bool) -> usize {
        if offline {
            self.offline.len()
        } else {
            self.online.len()
        }
    }

    /// Multi-step lookahead from a sampled transition, following the episode
    /// forward inside the same partition (both partitions hold transitions in
    /// episode order). Returns the discounted reward sum over up to `n`
    /// steps, the final transition of the lookahead, and the accumulated
    /// discount `γ^k` for bootstrapping.
    pub fn n_step_target(
        &self,
        start: SampleRef,
        n: usize,
        gamma: f64,
        reward: impl Fn(&Transition) -> f64,
    ) -> (f64, &Transition, f64) {
        let len = self.partition_len(start.offline);
        let mut sum = 0.0;
        let mut discount = 1.0;
        let mut idx = start.index;
        loop {
            let t = self.get(SampleRef {
                offline: start.offline,
                index: idx,
            });
            sum += discount * reward(t);
            discount *= gamma;
            let steps_taken = idx - start.index + 1;
            if t.done || steps_taken >= n || idx + 1 >= len {
                return (sum, t, discount);
            }
            idx += 1;
        }
    }

    /// Sample a batch of references. Mixing is counted, not probabilistic.
    pub fn sample(&mut self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<SampleRef> {
        let mut refs = Vec::with_capacity(batch);
        if self.mixing && !self.offline.is_empty() && !self.online.is_empty() {
            let n_online = batch.div_ceil(2);
            let n_offline = batch / 2;
            for _ in 0..n_online {
                refs.push(SampleRef {
                    offline: false,
                    index: rng.gen_range(0..self.online.len()),
                });
            }
            for _ in 0..n_offline {
                refs.push(SampleRef {
                    offline: true,
                    index: rng.gen_range(0..self.offline.len()),
                });
            }
        } else {
            if self.mixing && self.offline.is_empty() && !self.fallback_warned {
                eprintln!("replay: offline partition empty, sampling online only");
                self.fallback_warned = true;
            }
            for _ in 0..batch {
                refs.push(SampleRef {
                    offline: false,
                    index: rng.gen_range(0..self.online.len()),
                });
            }
        }
        refs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn transition(tag: f64) -> Transition {
        Transition {
            window: vec![tag as f32].into_boxed_slice(),
            next_window: vec![tag as f32].into_boxed_slice(),
            force_idx: 0,
            accel_r: vec![0.0],
            prev_accel_r: vec![0.0],
            r_k: tag,
            r_r: 0.0,
            done: false,
            cause: None,
            velocity_estimate: 0.0,
            contact_forces: Vec::new(),
        }
    }

    #[test]
    fn exact_mixing_counts() {
        let mut buf = ReplayBuffer::new(1000, true);
        for i in 0..50 {
            buf.push(transition(i as f64));
        }
        buf.load_offline((0..30).map(|i| transition(i as f64)).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for batch in [7usize, 8, 64, 255] {
            let refs = buf.sample(batch, &mut rng);
            let offline = refs.iter().filter(|r| r.offline).count();
            let online = refs.len() - offline;
            assert_eq!(online, batch.div_ceil(2));
            assert_eq!(offline, batch / 2);
        }
    }

    #[test]
    fn fallback_to_online_only() {
        let mut buf = ReplayBuffer::new(100, true);
        for i in 0..10 {
            buf.push(transition(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let refs = buf.sample(32, &mut rng);
        assert!(refs.iter().all(|r| !r.offline));
    }

    #[test]
    fn ring_eviction() {
        let mut buf = ReplayBuffer::new(4, false);
        for i in 0..10 {
            buf.push(transition(i as f64));
        }
        assert_eq!(buf.online_len(), 4);
        let oldest = buf.get(SampleRef {
            offline: false,
            index: 0,
        });
        assert_eq!(oldest.r_k, 6.0);
    }

    #[test]
    fn bootstrap_mask_only_zero_on_failures() {
        let mut t = transition(0.0);
        assert_eq!(t.bootstrap_mask(), 1.0);
        t.done = true;
        t.cause = Some(TerminationCause::Timeout);
        assert_eq!(t.bootstrap_mask(), 1.0);
        t.cause = Some(TerminationCause::JointLimit);
        assert_eq!(t.bootstrap_mask(), 0.0);
        t.cause = Some(TerminationCause::GraspLoss);
        assert_eq!(t.bootstrap_mask(), 0.0);
    }
}
