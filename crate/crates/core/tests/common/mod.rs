//! Reference computations that share no code with the library.

#![allow(dead_code)]

use proptest::prelude::*;
use statepredict::{TransitionStore, WorldState, WorldStateId};

/// Raw transition counts of a small store, `counts[i][j]` for `i -> j`.
#[derive(Debug, Clone)]
pub struct CountTable {
    pub counts: Vec<Vec<u64>>,
}

impl CountTable {
    pub fn n(&self) -> usize {
        self.counts.len()
    }

    /// Row-normalized probability; rows without observations are uniform.
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        let total: u64 = self.counts[i].iter().sum();
        if total == 0 {
            1.0 / self.n() as f64
        } else {
            self.counts[i][j] as f64 / total as f64
        }
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| (0..self.n()).map(|j| self.prob(i, j)).collect())
            .collect()
    }

    pub fn to_store(&self) -> TransitionStore {
        let mut store = TransitionStore::new();
        let ids: Vec<WorldStateId> = (0..self.n())
            .map(|i| store.intern(world_state(i)))
            .collect();
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                for _ in 0..c {
                    store.record_transition(ids[i], ids[j]).unwrap();
                }
            }
        }
        store
    }
}

pub fn world_state(i: usize) -> WorldState {
    WorldState::bare(format!("root/S{i}").parse().unwrap())
}

/// Count tables with `1..=max_n` states; about a third of the rows stay
/// unobserved so the uniform rule is exercised.
pub fn count_tables(max_n: usize) -> impl Strategy<Value = CountTable> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(
            prop_oneof![
                1 => Just(vec![0u64; n]),
                2 => prop::collection::vec(prop_oneof![2 => Just(0u64), 3 => 1u64..5], n),
            ],
            n,
        )
        .prop_map(|counts| CountTable { counts })
    })
}

/// Probability of ending in each state after `h` steps from `start`, by
/// summing the weights of every path of length `h`.
pub fn path_enumeration(t: &CountTable, start: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; t.n()];
    let mut path = vec![start];
    fn walk(t: &CountTable, path: &mut Vec<usize>, weight: f64, left: usize, out: &mut [f64]) {
        let here = *path.last().unwrap();
        if left == 0 {
            out[here] += weight;
            return;
        }
        for next in 0..t.n() {
            let p = t.prob(here, next);
            if p > 0.0 {
                path.push(next);
                walk(t, path, weight * p, left - 1, out);
                path.pop();
            }
        }
    }
    walk(t, &mut path, 1.0, h, &mut out);
    out
}

/// `e_start^T * M^k` by repeated dense multiplication.
pub fn dense_power_row(m: &[Vec<f64>], start: usize, k: usize) -> Vec<f64> {
    let n = m.len();
    let mut x = vec![0.0; n];
    x[start] = 1.0;
    for _ in 0..k {
        let mut y = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                y[j] += x[i] * m[i][j];
            }
        }
        x = y;
    }
    x
}
