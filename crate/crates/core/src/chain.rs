//! Suffix-labeled stationary Markov chains: the learned model form shared
//! by the learner, the steady-state analysis and the refinement loop.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::abstraction::Symbol;

/// Row sums must match 1 within this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("chain has no states")]
    Empty,
    #[error("state {state} row sums to {sum}, not 1")]
    BadRowSum { state: usize, sum: f64 },
    #[error("transition probability out of range at state {state}: {probability}")]
    BadProbability { state: usize, probability: f64 },
    #[error("state {state} has two successors on symbol {symbol}")]
    NonDeterministic { state: usize, symbol: Symbol },
    #[error("transition violates the suffix rule: {0}")]
    SuffixRule(String),
}

/// One labeled transition: emitting `symbol` from the owning state moves to
/// `target` with the given probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub symbol: Symbol,
    pub target: usize,
    pub probability: f64,
}

/// A stationary DTMC whose states carry suffix-word labels. The transition
/// on `sigma` from state `s` targets the state whose label is the longest
/// suffix of `label(s)·sigma` among all state labels; zero-probability
/// transitions are omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryChain {
    labels: Vec<Vec<Symbol>>,
    transitions: Vec<Vec<Transition>>,
    alphabet: Vec<Symbol>,
}

impl StationaryChain {
    pub fn new(
        labels: Vec<Vec<Symbol>>,
        transitions: Vec<Vec<Transition>>,
        alphabet: Vec<Symbol>,
    ) -> Result<Self, ChainError> {
        if labels.is_empty() {
            return Err(ChainError::Empty);
        }
        assert_eq!(labels.len(), transitions.len());
        let chain = Self {
            labels,
            transitions,
            alphabet,
        };
        chain.validate()?;
        Ok(chain)
    }

    fn validate(&self) -> Result<(), ChainError> {
        for (state, outgoing) in self.transitions.iter().enumerate() {
            let mut sum = 0.0;
            let mut seen: BTreeSet<Symbol> = BTreeSet::new();
            for t in outgoing {
                if !(t.probability > 0.0 && t.probability <= 1.0 + ROW_SUM_TOL) {
                    return Err(ChainError::BadProbability {
                        state,
                        probability: t.probability,
                    });
                }
                if !seen.insert(t.symbol) {
                    return Err(ChainError::NonDeterministic {
                        state,
                        symbol: t.symbol,
                    });
                }
                sum += t.probability;

                // label(target) must be the longest suffix of label(s)·sigma
                // among all state labels.
                let mut word = self.labels[state].clone();
                word.push(t.symbol);
                match self.longest_suffix_state(&word) {
                    Some(best) if best == t.target => {}
                    other => {
                        return Err(ChainError::SuffixRule(format!(
                            "state {state} on symbol {} targets {} but longest-suffix \
                             state is {other:?}",
                            t.symbol, t.target
                        )));
                    }
                }
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(ChainError::BadRowSum { state, sum });
            }
        }
        Ok(())
    }

    /// Builds an order-1 chain from a dense row-stochastic matrix: state `i`
    /// is labeled `⟨i⟩` and emits symbol `j` when moving to state `j`.
    pub fn order1(matrix: &[Vec<f64>]) -> Result<Self, ChainError> {
        let n = matrix.len();
        let labels: Vec<Vec<Symbol>> = (0..n).map(|i| vec![i as Symbol]).collect();
        let transitions = matrix
            .iter()
            .map(|row| {
                assert_eq!(row.len(), n);
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(j, &p)| Transition {
                        symbol: j as Symbol,
                        target: j,
                        probability: p,
                    })
                    .collect()
            })
            .collect();
        Self::new(labels, transitions, (0..n as Symbol).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Vec<Symbol>] {
        &self.labels
    }

    pub fn label(&self, state: usize) -> &[Symbol] {
        &self.labels[state]
    }

    pub fn alphabet(&self) -> &[Symbol] {
        &self.alphabet
    }

    pub fn transitions_from(&self, state: usize) -> &[Transition] {
        &self.transitions[state]
    }

    pub fn transition(&self, state: usize, symbol: Symbol) -> Option<&Transition> {
        self.transitions[state].iter().find(|t| t.symbol == symbol)
    }

    /// Aggregate state-to-state probability, summed over emitted symbols.
    pub fn pair_probability(&self, from: usize, to: usize) -> f64 {
        self.transitions[from]
            .iter()
            .filter(|t| t.target == to)
            .map(|t| t.probability)
            .sum()
    }

    /// Dense row-stochastic matrix view with symbols merged.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for (i, outgoing) in self.transitions.iter().enumerate() {
            for t in outgoing {
                m[i][t.target] += t.probability;
            }
        }
        m
    }

    /// Aggregate edges `(from, to)` with positive probability, in
    /// deterministic order.
    pub fn edges(&self) -> BTreeMap<(usize, usize), f64> {
        let mut edges = BTreeMap::new();
        for (i, outgoing) in self.transitions.iter().enumerate() {
            for t in outgoing {
                *edges.entry((i, t.target)).or_insert(0.0) += t.probability;
            }
        }
        edges
    }

    pub fn state_with_label(&self, label: &[Symbol]) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// The state whose label is the longest suffix of `word`, if any label
    /// is a suffix at all. State labels form a suffix antichain, so the
    /// match is unique.
    pub fn longest_suffix_state(&self, word: &[Symbol]) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, label) in self.labels.iter().enumerate() {
            if label.len() <= word.len() && word[word.len() - label.len()..] == label[..] {
                match best {
                    Some(b) if self.labels[b].len() >= label.len() => {}
                    _ => best = Some(i),
                }
            }
        }
        best
    }

    /// Longest label depth; walks need at most this much history.
    pub fn max_label_len(&self) -> usize {
        self.labels.iter().map(Vec::len).max().unwrap_or(0)
    }
}
