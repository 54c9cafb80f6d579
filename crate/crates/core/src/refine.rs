//! Validation of reported violations on the testing log, spurious-transition
//! ranking, classification-dataset collection and max-margin linear
//! separation for predicate synthesis.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::abstraction::{symbol_violates, AbstractTrace, Predicate, Sense};
use crate::chain::StationaryChain;
use crate::log::SystemLog;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("no position of the trace matches any state label")]
    NoMatchingState,
    #[error("instance has {got} features, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("hyperplane has no usable coefficient")]
    DegenerateHyperplane,
    #[error("edge ({0}, {1}) does not exist in the chain")]
    EdgeNotInChain(usize, usize),
    #[error("concrete log has {log} rows but abstract trace has {trace}")]
    LengthMismatch { log: usize, trace: usize },
}

/// Walk bookkeeping: per-state visit counts, per-edge transition counts,
/// and the desynchronization diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionCounts {
    pub visits: Vec<u64>,
    pub edges: BTreeMap<(usize, usize), u64>,
    /// Steps before the first state match.
    pub unmatched_prefix: usize,
    pub desyncs_at: Vec<u64>,
    pub total_desyncs: u64,
    /// State occupied when the trace ended, if the walk reached the end.
    pub last_state: Option<usize>,
}

/// Walks the abstract trace against the chain, calling `on_visit(time,
/// state, next_state)` for every synchronized position. `next_state` is
/// `None` when the visit ends the trace or desynchronizes.
///
/// The walk starts at the first position whose history suffix matches a
/// state label. When a (state, symbol) pair has no transition in the
/// chain, the walk re-synchronizes by suffix matching from the next
/// position and counts the event.
fn walk_chain(
    chain: &StationaryChain,
    trace: &AbstractTrace,
    mut on_visit: impl FnMut(usize, usize, Option<usize>),
) -> Result<TransitionCounts, RefineError> {
    let symbols = trace.symbols();
    let window = chain.max_label_len().max(1);
    let find_sync = |from: usize| -> Option<(usize, usize)> {
        for t in from..symbols.len() {
            let lo = (t + 1).saturating_sub(window);
            if let Some(state) = chain.longest_suffix_state(&symbols[lo..=t]) {
                return Some((t, state));
            }
        }
        None
    };

    let (start, mut state) = find_sync(0).ok_or(RefineError::NoMatchingState)?;
    let mut counts = TransitionCounts {
        visits: vec![0; chain.len()],
        edges: BTreeMap::new(),
        unmatched_prefix: start,
        desyncs_at: vec![0; chain.len()],
        total_desyncs: 0,
        last_state: None,
    };

    let mut t = start;
    counts.visits[state] += 1;
    loop {
        if t + 1 >= symbols.len() {
            on_visit(t, state, None);
            counts.last_state = Some(state);
            break;
        }
        let sigma = symbols[t + 1];
        match chain.transition(state, sigma) {
            Some(tr) => {
                on_visit(t, state, Some(tr.target));
                *counts.edges.entry((state, tr.target)).or_insert(0) += 1;
                state = tr.target;
                t += 1;
                counts.visits[state] += 1;
            }
            None => {
                on_visit(t, state, None);
                counts.desyncs_at[state] += 1;
                counts.total_desyncs += 1;
                match find_sync(t + 1) {
                    Some((t2, s2)) => {
                        t = t2;
                        state = s2;
                        counts.visits[state] += 1;
                    }
                    None => break,
                }
            }
        }
    }
    Ok(counts)
}

/// Frequency of property-bit violations in the trace: the estimator of the
/// long-run unsafe probability on held-out data.
pub fn empirical_unsafe_probability(trace: &AbstractTrace, property_bit: usize) -> f64 {
    assert!(!trace.is_empty(), "empirical estimate needs observations");
    let violations = trace
        .symbols()
        .iter()
        .filter(|&&s| symbol_violates(s, property_bit))
        .count();
    violations as f64 / trace.len() as f64
}

/// Confidence attached to a violation report: the probability that a
/// binomial sample at the safety threshold stays strictly below the
/// observed count, `P(Y <= n-1 | Y ~ Binomial(N, r))`. High confidence
/// means the observed violation frequency is inconsistent with any unsafe
/// probability at or below `r`.
pub fn violation_confidence(total: u64, violations: u64, r: f64) -> Result<f64, RefineError> {
    if total == 0 {
        return Err(RefineError::InvalidCounts("empty sample".into()));
    }
    if violations > total {
        return Err(RefineError::InvalidCounts(alloc::format!(
            "{violations} violations in {total} samples"
        )));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(RefineError::InvalidCounts(alloc::format!(
            "threshold r={r} outside (0,1)"
        )));
    }
    if violations == 0 {
        return Ok(0.0);
    }

    let n_total = total as f64;
    let ln_r = libm::log(r);
    let ln_q = libm::log(1.0 - r);
    let ln_pmf = |k: u64| -> f64 {
        libm::lgamma(n_total + 1.0)
            - libm::lgamma(k as f64 + 1.0)
            - libm::lgamma((total - k) as f64 + 1.0)
            + k as f64 * ln_r
            + (total - k) as f64 * ln_q
    };

    // Sum whichever tail is smaller, anchored at its largest term so the
    // accumulation stays in a sane floating range.
    let mean = n_total * r;
    if (violations - 1) as f64 <= mean {
        // Lower tail: alpha = sum_{k=0}^{n-1} pmf(k), terms shrink downward.
        let anchor = violations - 1;
        let mut scaled_sum = 1.0;
        let mut term = 1.0;
        let mut k = anchor;
        while k >= 1 {
            // pmf(k-1) / pmf(k)
            term *= (k as f64 / (n_total - k as f64 + 1.0)) * ((1.0 - r) / r);
            scaled_sum += term;
            if term < 1e-19 * scaled_sum {
                break;
            }
            k -= 1;
        }
        Ok((libm::exp(ln_pmf(anchor)) * scaled_sum).min(1.0))
    } else {
        // Upper tail: alpha = 1 - sum_{k=n}^{N} pmf(k), terms shrink upward.
        let anchor = violations;
        let mut scaled_sum = 1.0;
        let mut term = 1.0;
        let mut k = anchor;
        while k < total {
            // pmf(k+1) / pmf(k)
            term *= ((total - k) as f64 / (k as f64 + 1.0)) * (r / (1.0 - r));
            scaled_sum += term;
            if term < 1e-19 * scaled_sum {
                break;
            }
            k += 1;
        }
        Ok((1.0 - libm::exp(ln_pmf(anchor)) * scaled_sum).max(0.0))
    }
}

/// Walks the testing trace against the learned chain, counting per-state
/// visits and per-edge transitions.
pub fn count_state_transitions(
    chain: &StationaryChain,
    trace: &AbstractTrace,
) -> Result<TransitionCounts, RefineError> {
    walk_chain(chain, trace, |_, _, _| {})
}

/// A model edge whose probability exceeds its empirical estimate on the
/// testing log.
#[derive(Debug, Clone, PartialEq)]
pub struct SpuriousEdge {
    pub from: usize,
    pub to: usize,
    pub model_probability: f64,
    pub observed_probability: f64,
    pub deviation: f64,
}

/// Edges with `P_model(s_i, s_j) - #(s_i,s_j)/#s_i > 0`, sorted by the
/// deviation, largest first. States never visited in the testing log carry
/// no evidence and are skipped.
pub fn rank_spurious(chain: &StationaryChain, counts: &TransitionCounts) -> Vec<SpuriousEdge> {
    let mut ranked: Vec<SpuriousEdge> = chain
        .edges()
        .into_iter()
        .filter_map(|((from, to), model_probability)| {
            if counts.visits[from] == 0 {
                return None;
            }
            let observed = counts.edges.get(&(from, to)).copied().unwrap_or(0) as f64
                / counts.visits[from] as f64;
            let deviation = model_probability - observed;
            (deviation > 0.0).then_some(SpuriousEdge {
                from,
                to,
                model_probability,
                observed_probability: observed,
                deviation,
            })
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.deviation
            .total_cmp(&a.deviation)
            .then_with(|| (a.from, a.to).cmp(&(b.from, b.to)))
    });
    ranked
}

/// Concrete observations labeled by whether the system took the edge of
/// interest: positives transit to the target state, negatives do not.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<String>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

impl LabeledDataset {
    /// Tab-delimited export for offline inspection: label column followed
    /// by the feature columns.
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("label");
        for f in &self.features {
            out.push('\t');
            out.push_str(f);
        }
        out.push('\n');
        for (label, rows) in [("+", &self.positives), ("-", &self.negatives)] {
            for row in rows.iter() {
                out.push_str(label);
                for v in row {
                    out.push('\t');
                    out.push_str(&alloc::format!("{v}"));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Walks the testing trace; at every visit to the edge's source state with
/// a defined successor, the concrete observation at that time becomes a
/// positive instance when the successor is the edge's target, otherwise a
/// negative one.
pub fn collect_classification_data(
    chain: &StationaryChain,
    test_log: &SystemLog,
    test_trace: &AbstractTrace,
    edge: (usize, usize),
) -> Result<LabeledDataset, RefineError> {
    if test_log.len() != test_trace.len() {
        return Err(RefineError::LengthMismatch {
            log: test_log.len(),
            trace: test_trace.len(),
        });
    }
    if chain.pair_probability(edge.0, edge.1) <= 0.0 {
        return Err(RefineError::EdgeNotInChain(edge.0, edge.1));
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    walk_chain(chain, test_trace, |t, state, next| {
        if state != edge.0 {
            return;
        }
        let Some(next) = next else { return };
        let values = test_log.observations()[t].values.clone();
        if next == edge.1 {
            positives.push(values);
        } else {
            negatives.push(values);
        }
    })?;
    Ok(LabeledDataset {
        features: test_log
            .schema()
            .variable_names()
            .map(String::from)
            .collect(),
        positives,
        negatives,
    })
}

/// A separating hyperplane in raw feature units: classifies by the sign of
/// `w·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    pub features: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Geometric margin achieved on the training data.
    pub margin: f64,
    /// Optimization epochs actually used.
    pub iterations: u32,
}

/// Outcome of separator training: failure is a value, not an error, since
/// inseparable data is an expected dead end the driver must route around.
#[derive(Debug, Clone, PartialEq)]
pub enum SeparatorResult {
    Found(Hyperplane),
    Failure,
}

const SVM_COST: f64 = 1e4;
const CONVERGENCE_TOL: f64 = 1e-9;

/// Trains a soft-margin maximum-margin linear classifier by dual
/// coordinate descent, cycling deterministically over the instances.
/// Features are standardized internally; the returned hyperplane is in raw
/// units. Returns [`SeparatorResult::Failure`] unless the classifier
/// reaches zero training error within the epoch budget.
pub fn train_linear_separator(
    data: &LabeledDataset,
    budget: u32,
) -> Result<SeparatorResult, RefineError> {
    let dims = data.features.len();
    for row in data.positives.iter().chain(&data.negatives) {
        if row.len() != dims {
            return Err(RefineError::DimensionMismatch {
                expected: dims,
                got: row.len(),
            });
        }
    }
    if data.positives.is_empty() || data.negatives.is_empty() {
        return Ok(SeparatorResult::Failure);
    }

    let count = data.positives.len() + data.negatives.len();
    let mut mean = vec![0.0; dims];
    let mut scale = vec![0.0; dims];
    for row in data.positives.iter().chain(&data.negatives) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= count as f64;
    }
    for row in data.positives.iter().chain(&data.negatives) {
        for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    for s in scale.iter_mut() {
        *s = libm::sqrt(*s / count as f64);
        if *s < 1e-12 {
            *s = 1.0;
        }
    }

    // Standardized instances with a trailing constant-1 bias feature.
    let instances: Vec<(Vec<f64>, f64)> = data
        .positives
        .iter()
        .map(|r| (r, 1.0))
        .chain(data.negatives.iter().map(|r| (r, -1.0)))
        .map(|(row, y)| {
            let mut x: Vec<f64> = row
                .iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((v, m), s)| (v - m) / s)
                .collect();
            x.push(1.0);
            (x, y)
        })
        .collect();

    let squared_norms: Vec<f64> = instances
        .iter()
        .map(|(x, _)| x.iter().map(|v| v * v).sum())
        .collect();

    let mut alpha = vec![0.0f64; instances.len()];
    let mut w = vec![0.0f64; dims + 1];
    let mut epochs_used = budget;
    for epoch in 0..budget {
        let mut worst = 0.0f64;
        for (i, (x, y)) in instances.iter().enumerate() {
            let decision: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            let gradient = y * decision - 1.0;
            let projected = if alpha[i] <= 0.0 {
                gradient.min(0.0)
            } else if alpha[i] >= SVM_COST {
                gradient.max(0.0)
            } else {
                gradient
            };
            worst = worst.max(projected.abs());
            if projected.abs() > 0.0 {
                let updated = (alpha[i] - gradient / squared_norms[i]).clamp(0.0, SVM_COST);
                let delta = updated - alpha[i];
                if delta != 0.0 {
                    for (wk, xk) in w.iter_mut().zip(x) {
                        *wk += delta * y * xk;
                    }
                    alpha[i] = updated;
                }
            }
        }
        if worst < CONVERGENCE_TOL {
            epochs_used = epoch + 1;
            break;
        }
    }

    // Zero training error or give up: a boundary hit counts as an error.
    let misclassified = instances
        .iter()
        .any(|(x, y)| y * w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() <= 0.0);
    if misclassified {
        return Ok(SeparatorResult::Failure);
    }

    // Back to raw units: w_raw = w/s, b_raw = b - sum(w*m/s).
    let mut weights = vec![0.0; dims];
    let mut bias = w[dims];
    for k in 0..dims {
        weights[k] = w[k] / scale[k];
        bias -= w[k] * mean[k] / scale[k];
    }
    let norm = libm::sqrt(weights.iter().map(|v| v * v).sum::<f64>());
    if norm < 1e-300 {
        return Ok(SeparatorResult::Failure);
    }
    let margin = data
        .positives
        .iter()
        .map(|r| (r, 1.0))
        .chain(data.negatives.iter().map(|r| (r, -1.0)))
        .map(|(row, y)| {
            let d: f64 = weights.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + bias;
            y * d / norm
        })
        .fold(f64::INFINITY, f64::min);

    Ok(SeparatorResult::Found(Hyperplane {
        features: data.features.clone(),
        weights,
        bias,
        margin,
        iterations: epochs_used,
    }))
}

/// Turns `w·x + b >= 0` into a predicate `sum(coeff*var) >= -b`, scaled so
/// the largest-magnitude coefficient is exactly 1 (the sense flips when
/// that coefficient is negative). Coefficients that vanish under the
/// scaling are dropped.
pub fn hyperplane_to_predicate(hyperplane: &Hyperplane) -> Result<Predicate, RefineError> {
    let pivot = hyperplane
        .weights
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);
    if pivot.abs() < 1e-12 {
        return Err(RefineError::DegenerateHyperplane);
    }
    let mut coefficients = BTreeMap::new();
    for (name, &weight) in hyperplane.features.iter().zip(&hyperplane.weights) {
        let scaled = weight / pivot;
        if scaled.abs() >= 1e-12 {
            coefficients.insert(name.clone(), scaled);
        }
    }
    let sense = if pivot > 0.0 { Sense::Ge } else { Sense::Le };
    let offset = -hyperplane.bias / pivot;
    Predicate::new(coefficients, sense, offset).map_err(|_| RefineError::DegenerateHyperplane)
}
