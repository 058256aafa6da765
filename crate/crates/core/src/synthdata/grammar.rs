//! First-order Markov word grammar used to sample synthetic sentences.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, WeightedIndex};

/// Number of strongly preferred successors per word.
const STRONG_SUCCESSORS: usize = 3;
/// Transition weight of a strong successor, relative to the rest.
const STRONG_WEIGHT: f64 = 1.0;
/// Transition weight of every other (non-self) successor.
const BACKGROUND_WEIGHT: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct MarkovGrammar {
    /// Row-stochastic transition matrix, `transitions[from][to]`; no self loops.
    pub transitions: Vec<Vec<f64>>,
    /// Stationary distribution; also the first-word distribution, so every
    /// sentence position is marginally distributed as `stationary`.
    pub stationary: Vec<f64>,
}

impl MarkovGrammar {
    /// Random grammar over `frequent + rare` words. Each rare word is a strong
    /// successor of exactly one word, so it is both infrequent and well
    /// predicted by its left context.
    pub fn generate<R: Rng>(frequent: usize, rare: usize, rng: &mut R) -> Self {
        let n = frequent + rare;
        assert!(
            n > STRONG_SUCCESSORS,
            "grammar needs more words than successors"
        );
        let slots = n * STRONG_SUCCESSORS;
        let mut pool: Vec<usize> = (frequent..n).collect();
        let mut next = 0;
        while pool.len() < slots {
            pool.push(next % frequent.max(1));
            next += 1;
        }
        let successors = loop {
            pool.shuffle(rng);
            let lists: Vec<&[usize]> = pool.chunks(STRONG_SUCCESSORS).collect();
            let valid = lists.iter().enumerate().all(|(from, list)| {
                list.iter().all(|&to| to != from)
                    && (0..list.len()).all(|a| (a + 1..list.len()).all(|b| list[a] != list[b]))
            });
            if valid {
                break lists.iter().map(|l| l.to_vec()).collect::<Vec<_>>();
            }
        };
        let transitions: Vec<Vec<f64>> = successors
            .iter()
            .enumerate()
            .map(|(from, strong)| {
                let mut row: Vec<f64> = (0..n)
                    .map(|to| {
                        if to == from {
                            0.0
                        } else if strong.contains(&to) {
                            STRONG_WEIGHT
                        } else {
                            BACKGROUND_WEIGHT
                        }
                    })
                    .collect();
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= total);
                row
            })
            .collect();
        let stationary = stationary_distribution(&transitions);
        MarkovGrammar {
            transitions,
            stationary,
        }
    }

    pub fn num_words(&self) -> usize {
        self.stationary.len()
    }

    pub fn sample_sentence<R: Rng>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(len);
        let first = WeightedIndex::new(&self.stationary).expect("valid distribution");
        let mut current = first.sample(rng);
        out.push(current);
        for _ in 1..len {
            let row = WeightedIndex::new(&self.transitions[current]).expect("valid row");
            current = row.sample(rng);
            out.push(current);
        }
        out
    }
}

/// Power iteration on `π ← π P` until the change is below 1e-15.
pub fn stationary_distribution(transitions: &[Vec<f64>]) -> Vec<f64> {
    let n = transitions.len();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..100_000 {
        let mut next = vec![0.0; n];
        for (from, row) in transitions.iter().enumerate() {
            for (to, p) in row.iter().enumerate() {
                next[to] += pi[from] * p;
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if delta < 1e-15 {
            break;
        }
    }
    pi
}
