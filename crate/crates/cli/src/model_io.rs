//! The on-disk model format: JSON for lossless round-trips, DOT for
//! visualization. A model document carries the predicate set that defines
//! its alphabet, so it is self-contained evidence.

use serde::{Deserialize, Serialize};
use slarkit_core::abstraction::{parse_predicate, PredicateSet, Symbol};
use slarkit_core::chain::{ChainError, StationaryChain, Transition};
use thiserror::Error;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("model parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error("bad predicate in model: {0}")]
    Predicate(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("transition references state {0} of {1}")]
    BadStateIndex(usize, usize),
}

#[derive(Debug, Serialize, Deserialize)]
struct StateDoc {
    label: Vec<Symbol>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TransitionDoc {
    from: usize,
    symbol: Symbol,
    to: usize,
    probability: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    format_version: u32,
    predicates: Vec<String>,
    alphabet: Vec<Symbol>,
    states: Vec<StateDoc>,
    transitions: Vec<TransitionDoc>,
}

pub fn model_to_json(chain: &StationaryChain, predicates: &PredicateSet) -> String {
    let doc = ModelDoc {
        format_version: MODEL_FORMAT_VERSION,
        predicates: predicates.iter().map(|p| p.render()).collect(),
        alphabet: chain.alphabet().to_vec(),
        states: chain
            .labels()
            .iter()
            .map(|label| StateDoc {
                label: label.clone(),
            })
            .collect(),
        transitions: (0..chain.len())
            .flat_map(|from| {
                chain
                    .transitions_from(from)
                    .iter()
                    .map(move |t| TransitionDoc {
                        from,
                        symbol: t.symbol,
                        to: t.target,
                        probability: t.probability,
                    })
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("model serialization cannot fail")
}

pub fn model_from_json(text: &str) -> Result<(StationaryChain, PredicateSet), ModelIoError> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    if doc.format_version != MODEL_FORMAT_VERSION {
        return Err(ModelIoError::Version(doc.format_version));
    }
    let mut predicates = Vec::with_capacity(doc.predicates.len());
    for text in &doc.predicates {
        predicates.push(parse_predicate(text).map_err(|e| ModelIoError::Predicate(e.to_string()))?);
    }
    let predicates =
        PredicateSet::new(predicates).map_err(|e| ModelIoError::Predicate(e.to_string()))?;

    let n = doc.states.len();
    let mut transitions: Vec<Vec<Transition>> = vec![Vec::new(); n];
    for t in &doc.transitions {
        if t.from >= n || t.to >= n {
            return Err(ModelIoError::BadStateIndex(t.from.max(t.to), n));
        }
        transitions[t.from].push(Transition {
            symbol: t.symbol,
            target: t.to,
            probability: t.probability,
        });
    }
    let labels = doc.states.into_iter().map(|s| s.label).collect();
    let chain = StationaryChain::new(labels, transitions, doc.alphabet)?;
    Ok((chain, predicates))
}

fn label_text(label: &[Symbol]) -> String {
    let inner = label
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(" ");
    format!("⟨{inner}⟩")
}

/// DOT rendering: every state with its suffix label, every transition with
/// its emitted symbol and probability to six decimals.
pub fn model_to_dot(chain: &StationaryChain) -> String {
    let mut out = String::from("digraph model {\n  rankdir=LR;\n  node [shape=circle];\n");
    for (i, label) in chain.labels().iter().enumerate() {
        out.push_str(&format!("  s{i} [label=\"{}\"];\n", label_text(label)));
    }
    for from in 0..chain.len() {
        for t in chain.transitions_from(from) {
            out.push_str(&format!(
                "  s{from} -> s{} [label=\"{} / {:.6}\"];\n",
                t.target, t.symbol, t.probability
            ));
        }
    }
    out.push_str("}\n");
    out
}
