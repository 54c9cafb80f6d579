//! Learn stationary Markov-chain models of a running system from one long
//! training log plus one testing log, and check steady-state safety
//! properties of the form "the long-run probability that a sensor leaves its
//! operating range is at most `r`".
//!
//! The pipeline, end to end:
//!
//! 1. [`log`] ingests delimited sensor logs ([`log::SystemLog`]) and offers
//!    downsampling and train/test splitting.
//! 2. [`abstraction`] maps concrete observations to bit-vector symbols via a
//!    set of linear predicates, giving an [`abstraction::AbstractTrace`].
//! 3. [`pst`] learns a probabilistic suffix tree from the trace and converts
//!    it to a suffix-labeled stationary chain ([`chain::StationaryChain`]).
//! 4. [`markov`] computes terminal components and the stationary
//!    distribution, and sums the mass of unsafe states.
//! 5. [`refine`] validates a reported violation on the testing log, ranks
//!    spurious transitions, and synthesizes a new predicate with a
//!    max-margin linear separator.
//! 6. [`slar`] drives the whole loop until the property is verified (the
//!    learned chain is the evidence), refuted with a binomial confidence, or
//!    the refinement runs out of options.
//!
//! The crate is `no_std` (with `alloc`); all file and process concerns live
//! in the companion CLI crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod abstraction;
pub mod chain;
pub mod log;
pub mod markov;
pub mod pst;
pub mod refine;
pub mod slar;

pub use abstraction::{AbstractTrace, Predicate, PredicateSet, Sense, Symbol};
pub use chain::StationaryChain;
pub use log::{Observation, ObservationSchema, SystemLog, VariableKind};
pub use markov::{Distribution, SafetyProperty};
pub use slar::{Outcome, SlarConfig, VerificationReport};
