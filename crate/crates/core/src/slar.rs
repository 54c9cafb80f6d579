//! The learn-verify-validate-refine driver: abstract the training log,
//! learn a chain, check the property against its steady state, validate a
//! reported violation on the testing log, and refine the abstraction with a
//! synthesized predicate until a verdict is reached.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::abstraction::{
    abstract_trace, symbol_violates, AbstractTrace, AbstractionError, Predicate, PredicateSet,
    Symbol,
};
use crate::chain::StationaryChain;
use crate::log::{downsample, SystemLog};
use crate::markov::{self, MarkovError, SafetyProperty};
use crate::pst::{grow_pst, pst_to_psa, root_only_pst, GrowthParams, LearnError, SuffixStats};
use crate::refine::{
    collect_classification_data, count_state_transitions, hyperplane_to_predicate, rank_spurious,
    train_linear_separator, violation_confidence, RefineError, SeparatorResult,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SlarError {
    #[error("training and testing logs have different schemas")]
    SchemaMismatch,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    Refine(#[from] RefineError),
}

/// Knobs for one verification run. The pipeline itself is deterministic;
/// the seed is carried for provenance and any future stochastic component.
#[derive(Debug, Clone, PartialEq)]
pub struct SlarConfig {
    /// Divergence threshold for growing the suffix tree.
    pub epsilon: f64,
    /// Candidate-frequency cutoff; `None` keeps it equal to `epsilon`,
    /// which is the standard single-knob reading of the growth rule.
    pub frequency_epsilon: Option<f64>,
    pub max_depth: usize,
    pub downsample_stride: usize,
    /// Epoch budget for the linear separator.
    pub classifier_budget: u32,
    pub max_rounds: usize,
    pub stationary_tolerance: f64,
    pub stationary_max_iterations: u64,
    pub seed: u64,
}

impl Default for SlarConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            frequency_epsilon: None,
            max_depth: 10,
            downsample_stride: 1,
            classifier_budget: 300,
            max_rounds: 20,
            stationary_tolerance: 1e-12,
            stationary_max_iterations: 1_000_000,
            seed: 0,
        }
    }
}

impl SlarConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.epsilon <= 0.0 || !self.epsilon.is_finite() {
            return Err(alloc::format!(
                "epsilon must be positive, got {}",
                self.epsilon
            ));
        }
        if let Some(f) = self.frequency_epsilon {
            if f <= 0.0 || !f.is_finite() {
                return Err(alloc::format!(
                    "frequency epsilon must be positive, got {f}"
                ));
            }
        }
        if self.max_depth < 1 {
            return Err("max depth must be at least 1".into());
        }
        if self.downsample_stride < 1 {
            return Err("downsample stride must be at least 1".into());
        }
        if self.classifier_budget < 1 {
            return Err("classifier budget must be at least 1".into());
        }
        if self.max_rounds < 1 {
            return Err("max rounds must be at least 1".into());
        }
        if !(self.stationary_tolerance > 0.0 && self.stationary_tolerance <= 1e-10) {
            return Err("stationary tolerance must be in (0, 1e-10]".into());
        }
        if self.stationary_max_iterations < 1 {
            return Err("stationary iteration cap must be at least 1".into());
        }
        Ok(())
    }

    pub fn growth_params(&self) -> GrowthParams {
        GrowthParams {
            kl_threshold: self.epsilon,
            frequency_cutoff: self.frequency_epsilon.unwrap_or(self.epsilon),
            max_depth: self.max_depth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Verified,
    Violated,
    Inconclusive,
}

/// What happened in one refinement round.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub round: usize,
    pub epsilon_used: f64,
    /// The growth was retried once with a stricter epsilon because the
    /// tree did not grow.
    pub epsilon_retried: bool,
    pub model_size: usize,
    pub p_learn: f64,
    pub reducible_fallback: bool,
    /// Desynchronizations of the validation walk in this round.
    pub desyncs: u64,
    pub spurious_from: Option<Vec<Symbol>>,
    pub spurious_to: Option<Vec<Symbol>>,
    pub spurious_deviation: Option<f64>,
    pub predicate_added: Option<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// The property never fired in the training log; the verdict rests on
    /// zero observed support.
    pub zero_support: bool,
    /// Some round's chain was reducible and its stationary distribution was
    /// replaced by empirical state-visit frequencies of the training trace.
    pub reducible_fallback: bool,
    pub epsilon_retries: u32,
    pub total_desyncs: u64,
    pub inconclusive_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub outcome: Outcome,
    pub property: SafetyProperty,
    /// Final predicate set; bit positions match the abstraction used in
    /// the last round.
    pub predicates: PredicateSet,
    /// The learned chain, present exactly when the property was verified:
    /// it is the evidence.
    pub chain: Option<StationaryChain>,
    pub p_train: f64,
    pub p_learn: Option<f64>,
    pub p_test: Option<f64>,
    /// Statistical confidence, present exactly when the outcome is
    /// `Violated`.
    pub confidence: Option<f64>,
    pub iterations: Vec<IterationRecord>,
    pub diagnostics: Diagnostics,
}

/// Threshold-selection helper used when calibrating properties from a
/// trusted log: twenty percent above the observed violation frequency,
/// capped at 1. The driver never invents a threshold itself; `r` is always
/// explicit in the property.
pub fn suggested_threshold(p_train: f64) -> f64 {
    (1.2 * p_train).min(1.0)
}

/// Unsafe probability of a learned chain, with the reducible fallback: a
/// chain with several closed classes has no unique stationary
/// distribution, so the empirical state-visit frequencies of the training
/// trace stand in for it. Returns the probability and whether the
/// fallback was applied.
pub fn learned_unsafe_probability(
    chain: &StationaryChain,
    property: &SafetyProperty,
    predicates: &PredicateSet,
    train_trace: &AbstractTrace,
    config: &SlarConfig,
) -> Result<(f64, bool), SlarError> {
    let states = markov::unsafe_states(chain, property, predicates)?;
    match markov::stationary_with(
        chain,
        config.stationary_tolerance,
        config.stationary_max_iterations,
    ) {
        Ok(mu) => Ok((markov::unsafe_mass(&mu, &states), false)),
        Err(MarkovError::ReducibleModel { .. }) => {
            let counts = count_state_transitions(chain, train_trace)?;
            let total: u64 = counts.visits.iter().sum();
            let mass: f64 = states
                .iter()
                .map(|&s| counts.visits[s] as f64 / total as f64)
                .sum();
            Ok((mass, true))
        }
        Err(other) => Err(other.into()),
    }
}

struct RunState {
    predicates: PredicateSet,
    iterations: Vec<IterationRecord>,
    diagnostics: Diagnostics,
    p_train: f64,
    p_test: f64,
}

impl RunState {
    fn report(
        self,
        outcome: Outcome,
        property: &SafetyProperty,
        chain: Option<StationaryChain>,
        p_learn: Option<f64>,
        confidence: Option<f64>,
    ) -> VerificationReport {
        debug_assert_eq!(chain.is_some(), outcome == Outcome::Verified);
        debug_assert_eq!(confidence.is_some(), outcome == Outcome::Violated);
        VerificationReport {
            outcome,
            property: property.clone(),
            predicates: self.predicates,
            chain,
            p_train: self.p_train,
            p_learn,
            p_test: Some(self.p_test),
            confidence,
            iterations: self.iterations,
            diagnostics: self.diagnostics,
        }
    }
}

/// Runs the full loop for one property over a training and a testing log.
///
/// Every algorithmic dead end (no separable spurious edge, round cap, a
/// testing log that never matches a model state) is an `Inconclusive`
/// outcome; hard errors are reserved for ingestion and configuration
/// problems.
pub fn run_slar(
    train: &SystemLog,
    test: &SystemLog,
    property: &SafetyProperty,
    config: &SlarConfig,
) -> Result<VerificationReport, SlarError> {
    config.validate().map_err(SlarError::InvalidConfig)?;
    if train.schema() != test.schema() {
        return Err(SlarError::SchemaMismatch);
    }
    if train.schema().index_of(property.variable()).is_none() {
        return Err(SlarError::Abstraction(AbstractionError::UnknownVariable(
            property.variable().into(),
        )));
    }

    let (train, test) = if config.downsample_stride > 1 {
        (
            downsample(train, config.downsample_stride),
            downsample(test, config.downsample_stride),
        )
    } else {
        (train.clone(), test.clone())
    };

    let mut state = RunState {
        predicates: PredicateSet::new(alloc::vec![property.to_predicate()])?,
        iterations: Vec::new(),
        diagnostics: Diagnostics::default(),
        p_train: 0.0,
        p_test: 0.0,
    };

    // Bit 0 is the property predicate forever, so the train/test violation
    // statistics are fixed across refinement rounds.
    let train_abs = abstract_trace(&train, &state.predicates)?;
    state.p_train = crate::refine::empirical_unsafe_probability(&train_abs, 0);
    let test_abs = abstract_trace(&test, &state.predicates)?;
    let test_total = test_abs.len() as u64;
    let test_violations = test_abs
        .symbols()
        .iter()
        .filter(|&&s| symbol_violates(s, 0))
        .count() as u64;
    state.p_test = test_violations as f64 / test_total as f64;

    if state.p_train == 0.0 {
        // The property never fires in training: no model can be learned
        // about it, and the verdict is safety by absence of evidence.
        state.diagnostics.zero_support = true;
        let stats = SuffixStats::new(&train_abs, config.max_depth);
        let pst = root_only_pst(&stats, &config.growth_params())?;
        let chain = pst_to_psa(&pst)?;
        state.iterations.push(IterationRecord {
            round: 1,
            epsilon_used: config.epsilon,
            epsilon_retried: false,
            model_size: chain.len(),
            p_learn: 0.0,
            reducible_fallback: false,
            desyncs: 0,
            spurious_from: None,
            spurious_to: None,
            spurious_deviation: None,
            predicate_added: None,
        });
        return Ok(state.report(Outcome::Verified, property, Some(chain), Some(0.0), None));
    }

    for round in 1..=config.max_rounds {
        let round_train_abs = if round == 1 {
            train_abs.clone()
        } else {
            abstract_trace(&train, &state.predicates)?
        };
        let stats = SuffixStats::new(&round_train_abs, config.max_depth);
        let mut params = config.growth_params();
        let mut pst = grow_pst(&stats, &params)?;
        let mut retried = false;
        if pst.is_root_only() {
            // The tree did not grow; retry once with a five-fold stricter
            // threshold before giving up on structure.
            params = params.scaled(0.2);
            pst = grow_pst(&stats, &params)?;
            retried = true;
            state.diagnostics.epsilon_retries += 1;
        }
        let chain = pst_to_psa(&pst)?;
        let (p_learn, fallback) = learned_unsafe_probability(
            &chain,
            property,
            &state.predicates,
            &round_train_abs,
            config,
        )?;
        if fallback {
            state.diagnostics.reducible_fallback = true;
        }

        let mut record = IterationRecord {
            round,
            epsilon_used: params.kl_threshold,
            epsilon_retried: retried,
            model_size: chain.len(),
            p_learn,
            reducible_fallback: fallback,
            desyncs: 0,
            spurious_from: None,
            spurious_to: None,
            spurious_deviation: None,
            predicate_added: None,
        };

        if p_learn <= property.threshold() {
            state.iterations.push(record);
            return Ok(state.report(
                Outcome::Verified,
                property,
                Some(chain),
                Some(p_learn),
                None,
            ));
        }

        if state.p_test > property.threshold() {
            let confidence =
                violation_confidence(test_total, test_violations, property.threshold())?;
            state.iterations.push(record);
            return Ok(state.report(
                Outcome::Violated,
                property,
                None,
                Some(p_learn),
                Some(confidence),
            ));
        }

        // The learned model over-approximates the violation while the
        // testing log stays below the threshold: find the transition most
        // inflated by the abstraction and split it.
        let round_test_abs = if round == 1 {
            test_abs.clone()
        } else {
            abstract_trace(&test, &state.predicates)?
        };
        let counts = match count_state_transitions(&chain, &round_test_abs) {
            Ok(counts) => counts,
            Err(RefineError::NoMatchingState) => {
                state.iterations.push(record);
                state.diagnostics.inconclusive_reason =
                    Some("testing log never matches any model state".into());
                return Ok(state.report(
                    Outcome::Inconclusive,
                    property,
                    None,
                    Some(p_learn),
                    None,
                ));
            }
            Err(other) => return Err(other.into()),
        };
        record.desyncs = counts.total_desyncs;
        state.diagnostics.total_desyncs += counts.total_desyncs;

        let ranked = rank_spurious(&chain, &counts);
        let mut refined = false;
        for edge in &ranked {
            let data =
                collect_classification_data(&chain, &test, &round_test_abs, (edge.from, edge.to))?;
            if data.positives.is_empty() || data.negatives.is_empty() {
                continue;
            }
            let SeparatorResult::Found(hyperplane) =
                train_linear_separator(&data, config.classifier_budget)?
            else {
                continue;
            };
            let Ok(predicate) = hyperplane_to_predicate(&hyperplane) else {
                continue;
            };
            if state.predicates.contains_equivalent(&predicate) {
                continue;
            }
            record.spurious_from = Some(chain.label(edge.from).to_vec());
            record.spurious_to = Some(chain.label(edge.to).to_vec());
            record.spurious_deviation = Some(edge.deviation);
            record.predicate_added = Some(predicate.clone());
            state
                .predicates
                .push(predicate)
                .expect("duplicate guard checked above");
            refined = true;
            break;
        }
        state.iterations.push(record);
        if !refined {
            state.diagnostics.inconclusive_reason =
                Some("no spurious transition yielded a separating predicate".into());
            return Ok(state.report(Outcome::Inconclusive, property, None, None, None));
        }
    }

    state.diagnostics.inconclusive_reason = Some("refinement round cap reached".into());
    Ok(state.report(Outcome::Inconclusive, property, None, None, None))
}
