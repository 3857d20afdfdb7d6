//! Experience replay keyed by canonical molecule, ordered by reward.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::env::Trajectory;
use crate::scoring::dedup_key;

#[derive(Debug, Clone)]
struct Entry {
    key: String,
    traj: Trajectory,
    inserted_at: u64,
}

/// Bounded buffer of the best-rewarded molecules: keys unique, the stored
/// reward per key is the maximum observed, lowest reward evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<Entry>,
    counter: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        ReplayBuffer {
            capacity,
            entries: Vec::new(),
            counter: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn min_reward(&self) -> Option<f64> {
        self.entries
            .iter()
            .map(|e| e.traj.reward)
            .min_by(|a, b| a.partial_cmp(b).expect("rewards are finite"))
    }

    /// Insert one trajectory; duplicates keep the higher-reward copy.
    pub fn insert(&mut self, traj: &Trajectory) {
        if self.capacity == 0 {
            return;
        }
        let key = dedup_key(&traj.smiles);
        self.counter += 1;
        if let Some(existing) = self.entries.iter_mut().find(|e| e.key == key) {
            if traj.reward > existing.traj.reward {
                existing.traj = traj.clone();
            }
            return;
        }
        self.entries.push(Entry {
            key,
            traj: traj.clone(),
            inserted_at: self.counter,
        });
        if self.entries.len() > self.capacity {
            // evict the lowest reward, most recent insertion among ties
            let victim = self
                .entries
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    a.traj
                        .reward
                        .partial_cmp(&b.traj.reward)
                        .expect("rewards are finite")
                        .then(b.inserted_at.cmp(&a.inserted_at))
                })
                .map(|(i, _)| i)
                .expect("non-empty");
            self.entries.remove(victim);
        }
    }

    /// Up to `m` distinct entries, uniformly at random. Replayed
    /// trajectories must have their log-probabilities re-evaluated before
    /// any loss computation.
    pub fn sample(&self, m: usize, rng: &mut impl Rng) -> Vec<Trajectory> {
        let take = m.min(self.entries.len());
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.shuffle(rng);
        order
            .into_iter()
            .take(take)
            .map(|i| self.entries[i].traj.clone())
            .collect()
    }

    pub fn rewards_descending(&self) -> Vec<f64> {
        let mut r: Vec<f64> = self.entries.iter().map(|e| e.traj.reward).collect();
        r.sort_unstable_by(|a, b| b.partial_cmp(a).expect("finite"));
        r
    }
}
