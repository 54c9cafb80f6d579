//! Predicate abstraction: linear predicates over schema variables, and the
//! mapping from concrete logs to symbol sequences over a bit-vector
//! alphabet.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::log::{Observation, ObservationSchema, SystemLog};

/// Abstract symbols are bit vectors encoded as integers: bit `i` is the
/// truth of predicate `i`.
pub type Symbol = u32;

/// Symbols are stored in a `u32`, so a predicate set is capped at 32 bits.
pub const MAX_PREDICATES: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbstractionError {
    #[error("variable `{0}` not present in schema")]
    UnknownVariable(String),
    #[error("predicate has no nonzero coefficient")]
    DegeneratePredicate,
    #[error("duplicate predicate: {0}")]
    DuplicatePredicate(String),
    #[error("predicate set is empty")]
    EmptyPredicateSet,
    #[error("predicate syntax error at byte {position}: {reason}")]
    PredicateSyntax { position: usize, reason: String },
}

/// Comparison sense of a predicate. Strictness is preserved exactly as
/// written; no epsilon-fudging at boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Gt,
    Lt,
    Ge,
    Le,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Gt => ">",
            Sense::Lt => "<",
            Sense::Ge => ">=",
            Sense::Le => "<=",
        }
    }

    fn flipped(self) -> Sense {
        match self {
            Sense::Gt => Sense::Lt,
            Sense::Lt => Sense::Gt,
            Sense::Ge => Sense::Le,
            Sense::Le => Sense::Ge,
        }
    }

    fn compare(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Sense::Gt => lhs > rhs,
            Sense::Lt => lhs < rhs,
            Sense::Ge => lhs >= rhs,
            Sense::Le => lhs <= rhs,
        }
    }
}

/// A linear inequality `sum(coeff_i * var_i)  sense  offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    coefficients: BTreeMap<String, f64>,
    offset: f64,
    sense: Sense,
}

impl Predicate {
    pub fn new(
        coefficients: BTreeMap<String, f64>,
        sense: Sense,
        offset: f64,
    ) -> Result<Self, AbstractionError> {
        let coefficients: BTreeMap<String, f64> = coefficients
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .collect();
        if coefficients.is_empty() {
            return Err(AbstractionError::DegeneratePredicate);
        }
        Ok(Self {
            coefficients,
            offset,
            sense,
        })
    }

    /// Single-variable predicate `var sense bound`, the shape all safety
    /// properties start from.
    pub fn single(variable: &str, sense: Sense, bound: f64) -> Self {
        let mut coefficients = BTreeMap::new();
        coefficients.insert(variable.to_string(), 1.0);
        Self {
            coefficients,
            offset: bound,
            sense,
        }
    }

    pub fn coefficients(&self) -> &BTreeMap<String, f64> {
        &self.coefficients
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// Scales so the largest-magnitude coefficient becomes exactly 1,
    /// flipping the sense when that coefficient is negative. Used for
    /// duplicate detection and for reporting classifier output.
    pub fn normalized(&self) -> Predicate {
        let pivot = self
            .coefficients
            .values()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .expect("predicate has at least one coefficient");
        let coefficients = self
            .coefficients
            .iter()
            .map(|(n, c)| (n.clone(), c / pivot))
            .collect();
        Predicate {
            coefficients,
            offset: self.offset / pivot,
            sense: if pivot < 0.0 {
                self.sense.flipped()
            } else {
                self.sense
            },
        }
    }

    /// Equality up to normalization, with a small relative tolerance on the
    /// numbers. Guards the refinement loop against re-adding a predicate.
    pub fn equivalent_to(&self, other: &Predicate) -> bool {
        let a = self.normalized();
        let b = other.normalized();
        if a.sense != b.sense || a.coefficients.len() != b.coefficients.len() {
            return false;
        }
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs()));
        if !close(a.offset, b.offset) {
            return false;
        }
        a.coefficients
            .iter()
            .all(|(name, &c)| b.coefficients.get(name).is_some_and(|&d| close(c, d)))
    }

    /// Renders the predicate in the text syntax accepted by [`parse_predicate`].
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, (name, &coeff)) in self.coefficients.iter().enumerate() {
            if i == 0 {
                if coeff == 1.0 {
                    out.push_str(name);
                } else {
                    out.push_str(&format!("{coeff}*{name}"));
                }
            } else if coeff < 0.0 {
                out.push_str(&format!(" - {}*{name}", -coeff));
            } else {
                out.push_str(&format!(" + {coeff}*{name}"));
            }
        }
        out.push_str(&format!(" {} {}", self.sense.symbol(), self.offset));
        out
    }
}

/// Evaluates `sum(coeff_i * value_i) sense offset` on one observation.
pub fn evaluate_predicate(
    predicate: &Predicate,
    schema: &ObservationSchema,
    observation: &Observation,
) -> Result<bool, AbstractionError> {
    let mut lhs = 0.0;
    for (name, coeff) in &predicate.coefficients {
        let idx = schema
            .index_of(name)
            .ok_or_else(|| AbstractionError::UnknownVariable(name.clone()))?;
        lhs += coeff * observation.values[idx];
    }
    Ok(predicate.sense.compare(lhs, predicate.offset))
}

/// An ordered list of predicates; the order fixes bit positions. New
/// refinement predicates append, never reorder, so earlier models' state
/// labels stay interpretable across iterations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredicateSet {
    predicates: Vec<Predicate>,
}

impl PredicateSet {
    pub fn new(predicates: Vec<Predicate>) -> Result<Self, AbstractionError> {
        let mut set = PredicateSet::default();
        for p in predicates {
            set.push(p)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, predicate: Predicate) -> Result<(), AbstractionError> {
        if self.predicates.iter().any(|p| p.equivalent_to(&predicate)) {
            return Err(AbstractionError::DuplicatePredicate(predicate.render()));
        }
        assert!(
            self.predicates.len() < MAX_PREDICATES,
            "predicate sets are limited to {MAX_PREDICATES} bits"
        );
        self.predicates.push(predicate);
        Ok(())
    }

    pub fn contains_equivalent(&self, predicate: &Predicate) -> bool {
        self.predicates.iter().any(|p| p.equivalent_to(predicate))
    }

    pub fn arity(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Predicate> {
        self.predicates.iter()
    }

    pub fn get(&self, index: usize) -> Option<&Predicate> {
        self.predicates.get(index)
    }
}

/// A symbol sequence over the bit-vector alphabet; same length as the
/// source log.
#[derive(Debug, Clone, PartialEq)]
pub struct AbstractTrace {
    arity: usize,
    symbols: Vec<Symbol>,
}

impl AbstractTrace {
    pub fn new(arity: usize, symbols: Vec<Symbol>) -> Self {
        assert!(arity <= MAX_PREDICATES);
        debug_assert!(symbols.iter().all(|&s| (s as u64) < (1u64 << arity)));
        Self { arity, symbols }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// True when `bit` is set in `symbol`.
pub fn symbol_violates(symbol: Symbol, bit: usize) -> bool {
    symbol & (1 << bit) != 0
}

/// Maps every observation to a symbol: bit `i` of `symbol_t` is the truth
/// of predicate `i` on observation `t`.
pub fn abstract_trace(
    log: &SystemLog,
    predicates: &PredicateSet,
) -> Result<AbstractTrace, AbstractionError> {
    if predicates.is_empty() {
        return Err(AbstractionError::EmptyPredicateSet);
    }
    // Resolve names to column indices once; evaluation is then pure
    // arithmetic over each row.
    type ResolvedTerms = Vec<(usize, f64)>;
    let mut resolved: Vec<(ResolvedTerms, Sense, f64)> = Vec::new();
    for p in predicates.iter() {
        let mut terms = Vec::with_capacity(p.coefficients.len());
        for (name, &coeff) in &p.coefficients {
            let idx = log
                .schema()
                .index_of(name)
                .ok_or_else(|| AbstractionError::UnknownVariable(name.clone()))?;
            terms.push((idx, coeff));
        }
        resolved.push((terms, p.sense, p.offset));
    }

    let symbols = log
        .observations()
        .iter()
        .map(|obs| {
            let mut symbol: Symbol = 0;
            for (bit, (terms, sense, offset)) in resolved.iter().enumerate() {
                let lhs: f64 = terms.iter().map(|&(idx, c)| c * obs.values[idx]).sum();
                if sense.compare(lhs, *offset) {
                    symbol |= 1 << bit;
                }
            }
            symbol
        })
        .collect();
    Ok(AbstractTrace::new(predicates.arity(), symbols))
}

/// Parses the predicate text syntax: `c1*VAR1 [± c2*VAR2 ...] op constant`
/// with `op` one of `>`, `<`, `>=`, `<=`. A bare `VAR` means coefficient 1.
pub fn parse_predicate(text: &str) -> Result<Predicate, AbstractionError> {
    let bytes = text.as_bytes();
    let mut pos = 0usize;

    let skip_ws = |pos: &mut usize| {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
    };
    let err = |position: usize, reason: &str| AbstractionError::PredicateSyntax {
        position,
        reason: reason.to_string(),
    };

    fn take_number(text: &str, pos: &mut usize) -> Option<f64> {
        let bytes = text.as_bytes();
        let start = *pos;
        let mut end = *pos;
        if end < bytes.len() && (bytes[end] == b'-' || bytes[end] == b'+') {
            end += 1;
        }
        while end < bytes.len()
            && (bytes[end].is_ascii_digit()
                || bytes[end] == b'.'
                || bytes[end] == b'e'
                || bytes[end] == b'E'
                || ((bytes[end] == b'-' || bytes[end] == b'+')
                    && (bytes[end - 1] == b'e' || bytes[end - 1] == b'E')))
        {
            end += 1;
        }
        let parsed: f64 = text[start..end].parse().ok()?;
        *pos = end;
        Some(parsed)
    }

    fn take_identifier(text: &str, pos: &mut usize) -> Option<String> {
        let bytes = text.as_bytes();
        let start = *pos;
        if start >= bytes.len() || !(bytes[start].is_ascii_alphabetic() || bytes[start] == b'_') {
            return None;
        }
        let mut end = start + 1;
        while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
            end += 1;
        }
        *pos = end;
        Some(text[start..end].to_string())
    }

    let mut coefficients: BTreeMap<String, f64> = BTreeMap::new();
    let mut pending_sign = 1.0;
    let sense;
    loop {
        skip_ws(&mut pos);
        if pos >= bytes.len() {
            return Err(err(pos, "expected comparison operator"));
        }
        match bytes[pos] {
            b'>' | b'<' => {
                let strict = bytes[pos];
                pos += 1;
                let eq = pos < bytes.len() && bytes[pos] == b'=';
                if eq {
                    pos += 1;
                }
                sense = match (strict, eq) {
                    (b'>', false) => Sense::Gt,
                    (b'>', true) => Sense::Ge,
                    (b'<', false) => Sense::Lt,
                    (b'<', true) => Sense::Le,
                    _ => unreachable!(),
                };
                break;
            }
            b'+' => {
                pending_sign = 1.0;
                pos += 1;
                continue;
            }
            b'-' => {
                pending_sign = -1.0;
                pos += 1;
                continue;
            }
            _ => {}
        }
        // term: NUMBER '*' IDENT or bare IDENT
        let term_start = pos;
        let coeff = if bytes[pos].is_ascii_digit() || bytes[pos] == b'.' {
            let c = take_number(text, &mut pos).ok_or_else(|| err(pos, "bad coefficient"))?;
            skip_ws(&mut pos);
            if pos >= bytes.len() || bytes[pos] != b'*' {
                return Err(err(pos, "expected `*` after coefficient"));
            }
            pos += 1;
            skip_ws(&mut pos);
            c
        } else {
            1.0
        };
        let name = take_identifier(text, &mut pos)
            .ok_or_else(|| err(term_start, "expected variable name"))?;
        *coefficients.entry(name).or_insert(0.0) += pending_sign * coeff;
        pending_sign = 1.0;
    }

    skip_ws(&mut pos);
    let offset = take_number(text, &mut pos).ok_or_else(|| err(pos, "expected constant bound"))?;
    skip_ws(&mut pos);
    if pos != bytes.len() {
        return Err(err(pos, "trailing input"));
    }
    Predicate::new(coefficients, sense, offset)
}
