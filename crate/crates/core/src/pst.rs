//! Probabilistic suffix tree learning and the conversion to a
//! suffix-labeled stationary chain.
//!
//! The tree grows from the root: a candidate context is adopted when
//! conditioning on it shifts the empirical next-symbol distribution away
//! from its longest suffix already in the tree by at least the threshold
//! (weighted Kullback-Leibler divergence, natural log). Candidates extend
//! backwards in time while they stay frequent and within the depth bound.

use alloc::collections::btree_map::Entry;
use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use thiserror::Error;

use crate::abstraction::{AbstractTrace, Symbol};
use crate::chain::{ChainError, StationaryChain, Transition};

/// Floor for the divergence denominator when the shorter context has never
/// produced a symbol the longer context has: a fresh symbol is strong
/// evidence to split, so the ratio must stay finite but large.
pub const KL_DENOMINATOR_FLOOR: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("trace has {0} symbols; learning needs at least 2")]
    TraceTooShort(usize),
    #[error("word of length {len} exceeds the counted maximum {max}")]
    WordTooLong { len: usize, max: usize },
    #[error("context has no observed successor")]
    UnseenContext,
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Debug, Clone, Default)]
struct WordCounts {
    occurrences: u64,
    next: BTreeMap<Symbol, u64>,
}

/// Sliding-window occurrence and next-symbol counts for every subword of
/// the trace up to a maximum length. Immutable once built.
#[derive(Debug)]
pub struct SuffixStats<'a> {
    trace: &'a [Symbol],
    alphabet: Vec<Symbol>,
    max_word_len: usize,
    /// `levels[k-1]` holds counts for words of length `k`, keyed by slices
    /// into the trace itself.
    levels: Vec<BTreeMap<&'a [Symbol], WordCounts>>,
    unigram: WordCounts,
}

impl<'a> SuffixStats<'a> {
    pub fn new(trace: &'a AbstractTrace, max_word_len: usize) -> Self {
        let symbols = trace.symbols();
        let mut alphabet: Vec<Symbol> = symbols.to_vec();
        alphabet.sort_unstable();
        alphabet.dedup();

        let length = symbols.len();
        let buildable = max_word_len.min(length);
        let mut levels = Vec::with_capacity(buildable);
        for k in 1..=buildable {
            let mut level: BTreeMap<&[Symbol], WordCounts> = BTreeMap::new();
            for start in 0..=(length - k) {
                let word = &symbols[start..start + k];
                let entry = level.entry(word).or_default();
                entry.occurrences += 1;
                if start + k < length {
                    *entry.next.entry(symbols[start + k]).or_insert(0) += 1;
                }
            }
            levels.push(level);
        }

        let mut unigram = WordCounts {
            occurrences: length as u64 + 1,
            next: BTreeMap::new(),
        };
        for &s in symbols {
            *unigram.next.entry(s).or_insert(0) += 1;
        }

        Self {
            trace: symbols,
            alphabet,
            max_word_len,
            levels,
            unigram,
        }
    }

    pub fn trace_len(&self) -> usize {
        self.trace.len()
    }

    pub fn alphabet(&self) -> &[Symbol] {
        &self.alphabet
    }

    pub fn max_word_len(&self) -> usize {
        self.max_word_len
    }

    fn entry(&self, word: &[Symbol]) -> Result<Option<&WordCounts>, LearnError> {
        if word.is_empty() {
            return Ok(Some(&self.unigram));
        }
        if word.len() > self.max_word_len {
            return Err(LearnError::WordTooLong {
                len: word.len(),
                max: self.max_word_len,
            });
        }
        Ok(self
            .levels
            .get(word.len() - 1)
            .and_then(|level| level.get(word)))
    }

    /// Number of occurrences of `word` as a contiguous subword.
    pub fn occurrences(&self, word: &[Symbol]) -> Result<u64, LearnError> {
        Ok(self.entry(word)?.map_or(0, |e| e.occurrences))
    }

    /// Occurrences divided by the number of windows of the same length,
    /// `len(trace) - |word| + 1`.
    pub fn frequency(&self, word: &[Symbol]) -> Result<f64, LearnError> {
        let occurrences = self.occurrences(word)?;
        if word.len() > self.trace.len() {
            return Ok(0.0);
        }
        let windows = (self.trace.len() - word.len() + 1) as f64;
        Ok(occurrences as f64 / windows)
    }

    /// The exact empirical conditional `Pr(word, sigma) =
    /// count(word·sigma) / sum_tau count(word·tau)`, no smoothing.
    pub fn next_symbol_distribution(
        &self,
        word: &[Symbol],
    ) -> Result<BTreeMap<Symbol, f64>, LearnError> {
        let entry = self.entry(word)?.ok_or(LearnError::UnseenContext)?;
        let total: u64 = entry.next.values().sum();
        if total == 0 {
            return Err(LearnError::UnseenContext);
        }
        Ok(entry
            .next
            .iter()
            .map(|(&sym, &count)| (sym, count as f64 / total as f64))
            .collect())
    }
}

/// Growth thresholds. Algorithm fidelity keeps a single epsilon for both
/// the candidate-frequency cutoff and the divergence threshold; the two are
/// exposed separately for experimentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthParams {
    pub kl_threshold: f64,
    pub frequency_cutoff: f64,
    pub max_depth: usize,
}

impl GrowthParams {
    /// One epsilon for both thresholds, exactly as the growth rule is
    /// usually stated.
    pub fn balanced(epsilon: f64, max_depth: usize) -> Self {
        Self {
            kl_threshold: epsilon,
            frequency_cutoff: epsilon,
            max_depth,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            kl_threshold: self.kl_threshold * factor,
            frequency_cutoff: self.frequency_cutoff * factor,
            max_depth: self.max_depth,
        }
    }
}

/// A probabilistic suffix tree: a suffix-closed set of context words, each
/// carrying its empirical next-symbol distribution. A node's parent is its
/// longest proper suffix.
#[derive(Debug, Clone, PartialEq)]
pub struct Pst {
    nodes: BTreeMap<Vec<Symbol>, BTreeMap<Symbol, f64>>,
    alphabet: Vec<Symbol>,
    params: GrowthParams,
}

impl Pst {
    pub fn nodes(&self) -> impl Iterator<Item = (&Vec<Symbol>, &BTreeMap<Symbol, f64>)> {
        self.nodes.iter()
    }

    pub fn contains(&self, word: &[Symbol]) -> bool {
        self.nodes.contains_key(word)
    }

    pub fn distribution(&self, word: &[Symbol]) -> Option<&BTreeMap<Symbol, f64>> {
        self.nodes.get(word)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_root_only(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn depth(&self) -> usize {
        self.nodes.keys().map(Vec::len).max().unwrap_or(0)
    }

    pub fn alphabet(&self) -> &[Symbol] {
        &self.alphabet
    }

    pub fn params(&self) -> GrowthParams {
        self.params
    }

    /// Suffix closure: every proper suffix of a node is a node.
    pub fn is_suffix_closed(&self) -> bool {
        self.nodes
            .keys()
            .all(|w| w.is_empty() || self.nodes.contains_key(&w[1..]))
    }
}

fn longest_suffix_in<'m, V>(
    nodes: &'m BTreeMap<Vec<Symbol>, V>,
    word: &[Symbol],
) -> (&'m [Symbol], &'m V) {
    for start in 1..=word.len() {
        if let Some((key, value)) = nodes.get_key_value(&word[start..]) {
            return (key.as_slice(), value);
        }
    }
    nodes
        .get_key_value(&[][..])
        .map(|(k, v)| (k.as_slice(), v))
        .expect("tree always contains the root")
}

/// Weighted divergence between a candidate context and its longest suffix
/// already in the tree: `fre(word) * sum_sigma Pr(word,sigma) *
/// ln(Pr(word,sigma) / Pr(suffix,sigma))`.
fn growth_score(
    stats: &SuffixStats,
    word: &[Symbol],
    word_dist: &BTreeMap<Symbol, f64>,
    suffix_dist: &BTreeMap<Symbol, f64>,
) -> Result<f64, LearnError> {
    let mut divergence = 0.0;
    for (&sym, &p) in word_dist {
        let q = suffix_dist.get(&sym).copied().unwrap_or(0.0);
        let denominator = if q > 0.0 { q } else { KL_DENOMINATOR_FLOOR };
        divergence += p * libm::log(p / denominator);
    }
    Ok(stats.frequency(word)? * divergence)
}

/// Grows a probabilistic suffix tree from the trace statistics.
///
/// Candidates start as the single symbols with frequency above the cutoff
/// and are processed first-in-first-out, so the tree grows level by level
/// in deterministic symbol order. A candidate is adopted, together with all
/// its suffixes, when its weighted divergence from its longest suffix in
/// the tree reaches the threshold; it spawns one-symbol-longer candidates
/// while it stays frequent and below the depth bound.
pub fn grow_pst(stats: &SuffixStats, params: &GrowthParams) -> Result<Pst, LearnError> {
    assert!(params.kl_threshold > 0.0 && params.frequency_cutoff > 0.0);
    if stats.trace_len() < 2 {
        return Err(LearnError::TraceTooShort(stats.trace_len()));
    }
    assert!(
        params.max_depth <= stats.max_word_len(),
        "stats were counted only up to length {}",
        stats.max_word_len()
    );

    let mut nodes: BTreeMap<Vec<Symbol>, BTreeMap<Symbol, f64>> = BTreeMap::new();
    nodes.insert(Vec::new(), stats.next_symbol_distribution(&[])?);

    let mut queue: VecDeque<Vec<Symbol>> = VecDeque::new();
    if params.max_depth >= 1 {
        for &sym in stats.alphabet() {
            if stats.frequency(&[sym])? > params.frequency_cutoff {
                queue.push_back(alloc::vec![sym]);
            }
        }
    }

    while let Some(word) = queue.pop_front() {
        // Adoption test against the longest suffix already in the tree. A
        // candidate whose sole occurrences sit at the very end of the trace
        // has no successor statistics and cannot justify a split.
        if let Ok(word_dist) = stats.next_symbol_distribution(&word) {
            let (_, suffix_dist) = longest_suffix_in(&nodes, &word);
            let score = growth_score(stats, &word, &word_dist, suffix_dist)?;
            if score >= params.kl_threshold {
                // Add the word and every missing suffix, each with its own
                // empirical distribution.
                for start in (0..word.len()).rev() {
                    if let Entry::Vacant(entry) = nodes.entry(word[start..].to_vec()) {
                        let dist = stats
                            .next_symbol_distribution(entry.key())
                            .expect("suffix of an adopted context has successors");
                        entry.insert(dist);
                    }
                }
            }
        }

        // Extension: push one-symbol-longer candidates while frequent.
        if word.len() < params.max_depth && stats.frequency(&word)? > params.frequency_cutoff {
            for &sym in stats.alphabet() {
                let mut extended = Vec::with_capacity(word.len() + 1);
                extended.push(sym);
                extended.extend_from_slice(&word);
                if stats.frequency(&extended)? > 0.0 {
                    queue.push_back(extended);
                }
            }
        }
    }

    Ok(Pst {
        nodes,
        alphabet: stats.alphabet().to_vec(),
        params: *params,
    })
}

/// Root-only tree over the trace's observed alphabet; the degenerate model
/// used when a property never fires in training.
pub fn root_only_pst(stats: &SuffixStats, params: &GrowthParams) -> Result<Pst, LearnError> {
    let mut nodes = BTreeMap::new();
    nodes.insert(Vec::new(), stats.next_symbol_distribution(&[])?);
    Ok(Pst {
        nodes,
        alphabet: stats.alphabet().to_vec(),
        params: *params,
    })
}

fn has_child(
    nodes: &BTreeMap<Vec<Symbol>, BTreeMap<Symbol, f64>>,
    word: &[Symbol],
    alphabet: &[Symbol],
) -> bool {
    alphabet.iter().any(|&sym| {
        let mut child = Vec::with_capacity(word.len() + 1);
        child.push(sym);
        child.extend_from_slice(word);
        nodes.contains_key(&child)
    })
}

/// Converts the tree to a probabilistic suffix automaton, a stationary
/// chain whose states are the leaves of the completed tree.
///
/// The completion extends the tree until (a) every internal node has a
/// child for every alphabet symbol, (b) every leaf's longest proper prefix
/// is itself a node, and (c) the node set stays suffix-closed. Added nodes
/// inherit the distribution of their deepest ancestor in the original
/// tree. Together (a)-(c) make the leaf set a complete suffix dictionary:
/// every transition target exists and walking the automaton tracks the
/// longest leaf suffix of the full history.
pub fn pst_to_psa(pst: &Pst) -> Result<StationaryChain, LearnError> {
    let alphabet = pst.alphabet.clone();
    let mut completed: BTreeMap<Vec<Symbol>, BTreeMap<Symbol, f64>> = pst.nodes.clone();

    let inherit = |word: &[Symbol]| -> BTreeMap<Symbol, f64> {
        let (_, dist) = longest_suffix_in(&pst.nodes, word);
        dist.clone()
    };

    loop {
        let mut additions: Vec<Vec<Symbol>> = Vec::new();
        for word in completed.keys() {
            if has_child(&completed, word, &alphabet) {
                // (a) children completion
                for &sym in &alphabet {
                    let mut child = Vec::with_capacity(word.len() + 1);
                    child.push(sym);
                    child.extend_from_slice(word);
                    if !completed.contains_key(&child) {
                        additions.push(child);
                    }
                }
            } else if !word.is_empty() {
                // (b) prefix completion for leaves
                let prefix = word[..word.len() - 1].to_vec();
                if !completed.contains_key(&prefix) {
                    additions.push(prefix);
                }
            }
        }
        if additions.is_empty() {
            break;
        }
        for word in additions {
            // (c) every addition enters with its missing suffixes, shortest
            // first, so the node set stays suffix-closed.
            for start in (0..word.len()).rev() {
                if let Entry::Vacant(entry) = completed.entry(word[start..].to_vec()) {
                    let dist = inherit(entry.key());
                    entry.insert(dist);
                }
            }
        }
    }

    // States are the leaves, ordered by (depth, word) for determinism.
    let mut labels: Vec<Vec<Symbol>> = completed
        .keys()
        .filter(|w| !has_child(&completed, w, &alphabet))
        .cloned()
        .collect();
    labels.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));

    let index_of: BTreeMap<&[Symbol], usize> = labels
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_slice(), i))
        .collect();

    let mut transitions: Vec<Vec<Transition>> = Vec::with_capacity(labels.len());
    for label in &labels {
        let dist = &completed[label];
        let mut outgoing = Vec::with_capacity(dist.len());
        for (&sym, &probability) in dist {
            if probability <= 0.0 {
                continue;
            }
            let mut word = label.clone();
            word.push(sym);
            let target = (1..=word.len())
                .find_map(|start| index_of.get(&word[start - 1..]).copied())
                .or_else(|| index_of.get(&[][..]).copied())
                .expect("completed tree leaves form a suffix dictionary");
            outgoing.push(Transition {
                symbol: sym,
                target,
                probability,
            });
        }
        transitions.push(outgoing);
    }

    Ok(StationaryChain::new(labels, transitions, alphabet)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::AbstractTrace;
    use alloc::vec;
    use rand::RngExt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn trace_of(symbols: Vec<Symbol>) -> AbstractTrace {
        let bits = symbols
            .iter()
            .map(|&s| 32 - (s + 1).leading_zeros() as usize)
            .max()
            .unwrap_or(1);
        AbstractTrace::new(bits.max(1), symbols)
    }

    #[test]
    fn frequency_counts_sliding_windows() {
        let t = trace_of(vec![0, 1, 0]);
        let stats = SuffixStats::new(&t, 2);
        assert_eq!(stats.frequency(&[0]).unwrap(), 2.0 / 3.0);
        assert_eq!(stats.frequency(&[1, 1]).unwrap(), 0.0);
        assert_eq!(stats.occurrences(&[0, 1]).unwrap(), 1);
    }

    #[test]
    fn frequency_of_constant_trace_is_one() {
        let t = trace_of(vec![0; 50]);
        let stats = SuffixStats::new(&t, 3);
        assert_eq!(stats.frequency(&[0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn word_longer_than_counted_max_is_rejected() {
        let t = trace_of(vec![0, 1, 0]);
        let stats = SuffixStats::new(&t, 2);
        assert!(matches!(
            stats.frequency(&[0, 1, 0]),
            Err(LearnError::WordTooLong { len: 3, max: 2 })
        ));
    }

    #[test]
    fn next_symbol_distribution_counts_successor_pairs() {
        let t = trace_of(vec![0, 1, 0, 1, 0]);
        let stats = SuffixStats::new(&t, 2);
        let d = stats.next_symbol_distribution(&[0]).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[&1], 1.0);
    }

    #[test]
    fn next_symbol_distribution_of_constant_trace() {
        let t = trace_of(vec![0, 0, 0]);
        let stats = SuffixStats::new(&t, 2);
        let d = stats.next_symbol_distribution(&[0]).unwrap();
        assert_eq!(d[&0], 1.0);
    }

    #[test]
    fn trailing_occurrence_has_no_successor() {
        // Continuations of 0 in 0,1,0,0: positions 0 and 2 have successors
        // (1 and 0); the occurrence at position 3 ends the trace.
        let t = trace_of(vec![0, 1, 0, 0]);
        let stats = SuffixStats::new(&t, 2);
        let d = stats.next_symbol_distribution(&[0]).unwrap();
        assert_eq!(d[&0], 0.5);
        assert_eq!(d[&1], 0.5);
    }

    #[test]
    fn boundary_correction_invariant() {
        // count(w) = sum_sigma count(w·sigma) + (1 if w ends the trace).
        let t = trace_of(vec![0, 1, 1, 0, 1, 0, 0, 1]);
        let stats = SuffixStats::new(&t, 3);
        for word in [vec![0], vec![1], vec![0, 1], vec![1, 0]] {
            let occurrences = stats.occurrences(&word).unwrap();
            let successors: u64 = stats
                .alphabet()
                .iter()
                .map(|&s| {
                    let mut w = word.clone();
                    w.push(s);
                    stats.occurrences(&w).unwrap()
                })
                .sum();
            assert!(successors <= occurrences);
            assert!(occurrences - successors <= 1);
        }
    }

    #[test]
    fn unseen_context_is_an_error() {
        let t = trace_of(vec![0, 1]);
        let stats = SuffixStats::new(&t, 2);
        assert_eq!(
            stats.next_symbol_distribution(&[1, 1]).unwrap_err(),
            LearnError::UnseenContext
        );
        // `1` occurs, but only at the very end.
        assert_eq!(
            stats.next_symbol_distribution(&[1]).unwrap_err(),
            LearnError::UnseenContext
        );
    }

    /// Brute-force reimplementation of the growth rule, used as the oracle
    /// for the learner: frequencies and conditionals recomputed by direct
    /// scans, same queue discipline.
    mod oracle {
        use super::*;

        fn occurrences(trace: &[Symbol], word: &[Symbol]) -> u64 {
            if word.len() > trace.len() {
                return 0;
            }
            (0..=(trace.len() - word.len()))
                .filter(|&i| &trace[i..i + word.len()] == word)
                .count() as u64
        }

        fn frequency(trace: &[Symbol], word: &[Symbol]) -> f64 {
            occurrences(trace, word) as f64 / (trace.len() - word.len() + 1) as f64
        }

        fn conditional(trace: &[Symbol], word: &[Symbol]) -> Option<BTreeMap<Symbol, f64>> {
            let mut counts: BTreeMap<Symbol, u64> = BTreeMap::new();
            let upper = trace.len().checked_sub(word.len() + 1)?;
            for i in 0..=upper {
                if &trace[i..i + word.len()] == word {
                    *counts.entry(trace[i + word.len()]).or_insert(0) += 1;
                }
            }
            let total: u64 = counts.values().sum();
            if total == 0 {
                return None;
            }
            Some(
                counts
                    .into_iter()
                    .map(|(s, c)| (s, c as f64 / total as f64))
                    .collect(),
            )
        }

        pub fn grow(trace: &[Symbol], epsilon: f64, max_depth: usize) -> BTreeSet<Vec<Symbol>> {
            let mut alphabet: Vec<Symbol> = trace.to_vec();
            alphabet.sort_unstable();
            alphabet.dedup();
            let unigram: BTreeMap<Symbol, f64> = {
                let mut counts: BTreeMap<Symbol, u64> = BTreeMap::new();
                for &s in trace {
                    *counts.entry(s).or_insert(0) += 1;
                }
                counts
                    .into_iter()
                    .map(|(s, c)| (s, c as f64 / trace.len() as f64))
                    .collect()
            };

            let mut tree: BTreeSet<Vec<Symbol>> = BTreeSet::new();
            tree.insert(Vec::new());
            let mut queue: VecDeque<Vec<Symbol>> = alphabet
                .iter()
                .filter(|&&s| frequency(trace, &[s]) > epsilon)
                .map(|&s| vec![s])
                .collect();

            while let Some(word) = queue.pop_front() {
                if let Some(dist) = conditional(trace, &word) {
                    let suffix_dist = (1..=word.len())
                        .map(|i| word[i..].to_vec())
                        .find(|s| tree.contains(s))
                        .map(|s| {
                            if s.is_empty() {
                                unigram.clone()
                            } else {
                                conditional(trace, &s).unwrap()
                            }
                        })
                        .unwrap_or_else(|| unigram.clone());
                    let mut divergence = 0.0;
                    for (&sym, &p) in &dist {
                        let q = suffix_dist.get(&sym).copied().unwrap_or(0.0);
                        let denom = if q > 0.0 { q } else { KL_DENOMINATOR_FLOOR };
                        divergence += p * libm::log(p / denom);
                    }
                    if frequency(trace, &word) * divergence >= epsilon {
                        for start in 0..word.len() {
                            tree.insert(word[start..].to_vec());
                        }
                    }
                }
                if word.len() < max_depth && frequency(trace, &word) > epsilon {
                    for &e in &alphabet {
                        let mut ext = vec![e];
                        ext.extend_from_slice(&word);
                        if frequency(trace, &ext) > 0.0 {
                            queue.push_back(ext);
                        }
                    }
                }
            }
            tree
        }
    }

    fn learn(trace: &AbstractTrace, epsilon: f64, depth: usize) -> Pst {
        let stats = SuffixStats::new(trace, depth);
        grow_pst(&stats, &GrowthParams::balanced(epsilon, depth)).unwrap()
    }

    fn node_set(pst: &Pst) -> BTreeSet<Vec<Symbol>> {
        pst.nodes().map(|(w, _)| w.clone()).collect()
    }

    #[test]
    fn iid_trace_learns_root_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let symbols: Vec<Symbol> = (0..10_000).map(|_| rng.random_range(0..2u32)).collect();
        let pst = learn(&trace_of(symbols), 0.01, 5);
        assert!(pst.is_root_only(), "nodes: {:?}", node_set(&pst));
    }

    #[test]
    fn alternating_trace_learns_depth_one() {
        let symbols: Vec<Symbol> = (0..2000).map(|i| (i % 2) as Symbol).collect();
        let pst = learn(&trace_of(symbols), 0.01, 5);
        assert!(pst.contains(&[0]));
        assert!(pst.contains(&[1]));
        assert_eq!(pst.distribution(&[0]).unwrap()[&1], 1.0);
        assert_eq!(pst.distribution(&[1]).unwrap()[&0], 1.0);
    }

    /// Source where only the context ⟨0,0⟩ shifts the next-symbol law:
    /// after two zeros the next symbol is always 1, otherwise fair coin.
    fn order2_trace(n: usize, seed: u64) -> AbstractTrace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut symbols: Vec<Symbol> = vec![0, 1];
        while symbols.len() < n {
            let k = symbols.len();
            let next = if symbols[k - 2] == 0 && symbols[k - 1] == 0 {
                1
            } else {
                rng.random_range(0..2u32)
            };
            symbols.push(next);
        }
        trace_of(symbols)
    }

    #[test]
    fn order2_source_grows_the_pair_context() {
        let pst = learn(&order2_trace(20_000, 9), 0.01, 5);
        assert!(pst.contains(&[0, 0]), "nodes: {:?}", node_set(&pst));
        assert_eq!(pst.distribution(&[0, 0]).unwrap()[&1], 1.0);
    }

    #[test]
    fn learner_matches_brute_force_oracle() {
        // Structured and random traces, several seeds; the independently
        // recomputed growth must produce the same node set.
        let mut cases: Vec<AbstractTrace> = vec![
            trace_of((0..500).map(|i| (i % 2) as Symbol).collect()),
            order2_trace(3000, 1),
            trace_of(vec![0; 100]),
        ];
        for seed in 0..4 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let symbols: Vec<Symbol> = (0..800).map(|_| rng.random_range(0..3u32)).collect();
            cases.push(trace_of(symbols));
        }
        for (i, trace) in cases.iter().enumerate() {
            for &eps in &[0.05, 0.01] {
                let ours = node_set(&learn(trace, eps, 4));
                let oracle = oracle::grow(trace.symbols(), eps, 4);
                assert_eq!(ours, oracle, "case {i} eps {eps}");
            }
        }
    }

    #[test]
    fn suffix_closure_holds_after_growth() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let symbols: Vec<Symbol> = (0..1500).map(|_| rng.random_range(0..2u32)).collect();
            let pst = learn(&trace_of(symbols), 0.005, 6);
            assert!(pst.is_suffix_closed());
        }
    }

    #[test]
    fn node_distributions_sum_to_one() {
        let pst = learn(&order2_trace(5000, 3), 0.01, 5);
        for (_, dist) in pst.nodes() {
            let sum: f64 = dist.values().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn epsilon_monotonicity_on_structured_sources() {
        for trace in [
            order2_trace(10_000, 5),
            trace_of((0..4000).map(|i| (i % 2) as Symbol).collect()),
        ] {
            let coarse = node_set(&learn(&trace, 0.01, 6));
            let fine = node_set(&learn(&trace, 0.002, 6));
            assert!(
                coarse.is_subset(&fine),
                "coarse tree must be contained in the finer one"
            );
        }
    }

    #[test]
    fn alternating_psa_is_the_two_cycle() {
        let symbols: Vec<Symbol> = (0..2000).map(|i| (i % 2) as Symbol).collect();
        let pst = learn(&trace_of(symbols), 0.01, 5);
        let chain = pst_to_psa(&pst).unwrap();
        assert_eq!(chain.len(), 2);
        let s0 = chain.state_with_label(&[0]).unwrap();
        let s1 = chain.state_with_label(&[1]).unwrap();
        assert_eq!(chain.pair_probability(s0, s1), 1.0);
        assert_eq!(chain.pair_probability(s1, s0), 1.0);
    }

    #[test]
    fn root_only_psa_is_one_state_with_self_loops() {
        let symbols: Vec<Symbol> = {
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            (0..5000)
                .map(|_| {
                    if rng.random_range(0.0..1.0) < 0.7 {
                        0
                    } else {
                        1
                    }
                })
                .collect()
        };
        let trace = trace_of(symbols);
        let pst = learn(&trace, 0.01, 4);
        assert!(pst.is_root_only());
        let chain = pst_to_psa(&pst).unwrap();
        assert_eq!(chain.len(), 1);
        assert_eq!(chain.label(0), &[] as &[Symbol]);
        let row_sum: f64 = chain
            .transitions_from(0)
            .iter()
            .map(|t| t.probability)
            .sum();
        assert!((row_sum - 1.0).abs() <= 1e-12);
        assert!(chain.transitions_from(0).iter().all(|t| t.target == 0));
    }

    #[test]
    fn completion_reproduces_the_three_state_example() {
        // Hand-built tree {ε, 0, 1, 00}: node 0 is internal with a single
        // child, so the conversion must add ⟨1,0⟩ with 0's distribution and
        // produce states {⟨1⟩, ⟨0,0⟩, ⟨1,0⟩}.
        let mut nodes: BTreeMap<Vec<Symbol>, BTreeMap<Symbol, f64>> = BTreeMap::new();
        nodes.insert(vec![], BTreeMap::from([(0u32, 0.6), (1u32, 0.4)]));
        nodes.insert(vec![0], BTreeMap::from([(0u32, 0.7), (1u32, 0.3)]));
        nodes.insert(vec![1], BTreeMap::from([(0u32, 1.0)]));
        nodes.insert(vec![0, 0], BTreeMap::from([(0u32, 0.5), (1u32, 0.5)]));
        let pst = Pst {
            nodes,
            alphabet: vec![0, 1],
            params: GrowthParams::balanced(0.01, 4),
        };
        let chain = pst_to_psa(&pst).unwrap();

        let mut labels: Vec<Vec<Symbol>> = chain.labels().to_vec();
        labels.sort();
        assert_eq!(labels, vec![vec![0, 0], vec![1], vec![1, 0]]);

        let s1 = chain.state_with_label(&[1]).unwrap();
        let s00 = chain.state_with_label(&[0, 0]).unwrap();
        let s10 = chain.state_with_label(&[1, 0]).unwrap();

        // ⟨1,0⟩ inherited the distribution of its deepest ancestor ⟨0⟩.
        let inherited = chain.transitions_from(s10);
        assert_eq!(chain.transition(s10, 0).unwrap().probability, 0.7);
        assert_eq!(chain.transition(s10, 1).unwrap().probability, 0.3);
        assert_eq!(inherited.len(), 2);

        // Walking with suffix matching: from ⟨1,0⟩ on symbol 1 the longest
        // matching suffix of 101 is ⟨1⟩.
        assert_eq!(chain.transition(s10, 1).unwrap().target, s1);
        // From ⟨1,0⟩ on 0 the history 100 ends in ⟨0,0⟩.
        assert_eq!(chain.transition(s10, 0).unwrap().target, s00);
        // From ⟨1⟩ on 0 the history 10 ends in ⟨1,0⟩ (longest match beats ⟨0,0⟩).
        assert_eq!(chain.transition(s1, 0).unwrap().target, s10);
        // From ⟨0,0⟩ on 1 the history 001 ends in ⟨1⟩.
        assert_eq!(chain.transition(s00, 1).unwrap().target, s1);
    }

    #[test]
    fn psa_determinism_and_row_sums_on_random_traces() {
        for seed in 0..6 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 400);
            let n = 2000 + (seed as usize) * 500;
            // Mix of sticky and jumpy regimes to get non-trivial trees.
            let mut symbols: Vec<Symbol> = Vec::with_capacity(n);
            let mut current = 0u32;
            for _ in 0..n {
                if rng.random_range(0.0..1.0) < 0.3 {
                    current = rng.random_range(0..3u32);
                }
                symbols.push(current);
            }
            let trace = trace_of(symbols);
            let pst = learn(&trace, 0.005, 6);
            let chain = pst_to_psa(&pst).unwrap();

            for s in 0..chain.len() {
                let sum: f64 = chain
                    .transitions_from(s)
                    .iter()
                    .map(|t| t.probability)
                    .sum();
                assert!((sum - 1.0).abs() <= 1e-12, "row {s} sums to {sum}");
                // Successor rule checked exhaustively: target label is the
                // longest suffix of label(s)·sigma among all state labels.
                for t in chain.transitions_from(s) {
                    let mut word = chain.label(s).to_vec();
                    word.push(t.symbol);
                    assert_eq!(chain.longest_suffix_state(&word), Some(t.target));
                }
            }
        }
    }

    /// Deterministic seeded walk over a learned chain, emitting symbols.
    fn simulate_chain(chain: &StationaryChain, steps: usize, seed: u64) -> Vec<Symbol> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = 0usize;
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let u: f64 = rng.random_range(0.0..1.0);
            let mut acc = 0.0;
            let outgoing = chain.transitions_from(state);
            let mut chosen = outgoing.last().expect("state has transitions");
            for t in outgoing {
                acc += t.probability;
                if u < acc {
                    chosen = t;
                    break;
                }
            }
            out.push(chosen.symbol);
            state = chosen.target;
        }
        out
    }

    #[test]
    fn relearning_from_generated_trace_recovers_the_state_set() {
        // Known order-1 source, learn, generate from the learned chain,
        // learn again: the state sets agree.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut symbols: Vec<Symbol> = vec![0];
        for _ in 1..60_000 {
            let prev = *symbols.last().unwrap();
            let p1 = if prev == 0 { 0.9 } else { 0.2 };
            symbols.push(if rng.random_range(0.0..1.0) < p1 {
                1
            } else {
                0
            });
        }
        let pst = learn(&trace_of(symbols), 0.01, 8);
        let chain = pst_to_psa(&pst).unwrap();

        let regenerated = simulate_chain(&chain, 60_000, 77);
        let pst2 = learn(&trace_of(regenerated), 0.01, 8);
        let chain2 = pst_to_psa(&pst2).unwrap();

        let mut a: Vec<Vec<Symbol>> = chain.labels().to_vec();
        let mut b: Vec<Vec<Symbol>> = chain2.labels().to_vec();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn short_trace_is_rejected() {
        let t = trace_of(vec![0]);
        let stats = SuffixStats::new(&t, 2);
        assert!(matches!(
            grow_pst(&stats, &GrowthParams::balanced(0.01, 2)),
            Err(LearnError::TraceTooShort(1))
        ));
    }
}
