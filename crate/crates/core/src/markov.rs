//! Structural and steady-state analysis of learned chains: terminal
//! components, the stationary distribution, and the long-run unsafe
//! probability.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::abstraction::{symbol_violates, Predicate, PredicateSet, Sense};
use crate::chain::StationaryChain;

/// Chains up to this size are solved by direct Gaussian elimination on the
/// balance equations; larger ones fall back to damped power iteration.
pub const DIRECT_SOLVE_LIMIT: usize = 2000;

/// Required accuracy of a returned stationary distribution, measured as
/// `max |muP - mu|`.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    /// The chain has several closed recurrent classes, so the stationary
    /// distribution is not unique. Carries the terminal components so the
    /// caller can apply an empirical fallback.
    #[error("chain is reducible: {} terminal components", components.len())]
    ReducibleModel { components: Vec<Vec<usize>> },
    #[error("predicate set does not contain the property predicate")]
    PropertyPredicateMissing,
    #[error("invalid property: {0}")]
    InvalidProperty(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("power iteration did not reach tolerance {tol} in {iterations} iterations")]
    NoConvergence { tol: f64, iterations: u64 },
}

/// A probability distribution over chain states: entries in `[0,1]`
/// summing to 1 within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probabilities: Vec<f64>,
}

impl Distribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self, MarkovError> {
        let mut sum = 0.0;
        for &p in &probabilities {
            if !(-1e-12..=1.0 + 1e-12).contains(&p) {
                return Err(MarkovError::InvalidDistribution(alloc::format!(
                    "entry {p} outside [0,1]"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MarkovError::InvalidDistribution(alloc::format!(
                "sum {sum} != 1"
            )));
        }
        Ok(Self {
            probabilities: probabilities
                .into_iter()
                .map(|p| p.clamp(0.0, 1.0))
                .collect(),
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn get(&self, state: usize) -> f64 {
        self.probabilities[state]
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

/// A stationary safety property: the long-run probability that `variable
/// sense bound` holds must stay at or below `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyProperty {
    variable: String,
    sense: Sense,
    bound: f64,
    threshold: f64,
}

impl SafetyProperty {
    pub fn new(
        variable: String,
        sense: Sense,
        bound: f64,
        threshold: f64,
    ) -> Result<Self, MarkovError> {
        if !matches!(sense, Sense::Gt | Sense::Lt) {
            return Err(MarkovError::InvalidProperty(
                "operating-range properties use strict > or <".into(),
            ));
        }
        if !bound.is_finite() {
            return Err(MarkovError::InvalidProperty("bound must be finite".into()));
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(MarkovError::InvalidProperty(alloc::format!(
                "threshold r={threshold} outside [0,1]"
            )));
        }
        Ok(Self {
            variable,
            sense,
            bound,
            threshold,
        })
    }

    pub fn variable(&self) -> &str {
        &self.variable
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// The predicate whose truth marks an observation as out of range.
    pub fn to_predicate(&self) -> Predicate {
        Predicate::single(&self.variable, self.sense, self.bound)
    }
}

fn adjacency(chain: &StationaryChain) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); chain.len()];
    for (from, _) in chain.labels().iter().enumerate() {
        let mut targets: Vec<usize> = chain
            .transitions_from(from)
            .iter()
            .map(|t| t.target)
            .collect();
        targets.sort_unstable();
        targets.dedup();
        adj[from] = targets;
    }
    adj
}

/// Strongly connected components, iterative Tarjan.
fn strongly_connected_components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    const UNSET: usize = usize::MAX;
    let mut index = vec![UNSET; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next = 0usize;
    let mut components: Vec<Vec<usize>> = Vec::new();

    for root in 0..n {
        if index[root] != UNSET {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut edge)) = call.last_mut() {
            if *edge < adj[v].len() {
                let w = adj[v][*edge];
                *edge += 1;
                if index[w] == UNSET {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut component = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        component.push(w);
                        if w == v {
                            break;
                        }
                    }
                    component.sort_unstable();
                    components.push(component);
                }
            }
        }
    }
    components.sort_by_key(|c| c[0]);
    components
}

/// The closed recurrent classes: strongly connected components with no edge
/// leaving them. The chain is irreducible iff this returns one component
/// containing every state.
pub fn terminal_components(chain: &StationaryChain) -> Vec<Vec<usize>> {
    let adj = adjacency(chain);
    let components = strongly_connected_components(&adj);
    let mut component_of = vec![0usize; chain.len()];
    for (ci, comp) in components.iter().enumerate() {
        for &s in comp {
            component_of[s] = ci;
        }
    }
    let mut has_exit = vec![false; components.len()];
    for (v, targets) in adj.iter().enumerate() {
        for &w in targets {
            if component_of[v] != component_of[w] {
                has_exit[component_of[v]] = true;
            }
        }
    }
    components
        .into_iter()
        .enumerate()
        .filter(|(ci, _)| !has_exit[*ci])
        .map(|(_, c)| c)
        .collect()
}

/// Gaussian elimination with partial pivoting; `a` is consumed.
#[allow(clippy::needless_range_loop)]
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .unwrap();
        if a[pivot_row][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

fn residual(chain: &StationaryChain, mu: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    let mut next = vec![0.0; mu.len()];
    for (i, outgoing) in (0..chain.len()).map(|i| (i, chain.transitions_from(i))) {
        for t in outgoing {
            next[t.target] += mu[i] * t.probability;
        }
    }
    for (a, b) in next.iter().zip(mu) {
        worst = worst.max((a - b).abs());
    }
    worst
}

/// One damped step `mu <- (mu + mu P) / 2`, restricted to the whole state
/// space. The damping keeps periodic chains convergent while preserving
/// the fixed point.
fn damped_step(chain: &StationaryChain, mu: &mut [f64]) {
    let mut next = vec![0.0; mu.len()];
    for (i, &mass) in mu.iter().enumerate() {
        for t in chain.transitions_from(i) {
            next[t.target] += mass * t.probability;
        }
    }
    let mut sum = 0.0;
    for (m, n) in mu.iter_mut().zip(next) {
        *m = 0.5 * (*m + n);
        sum += *m;
    }
    // Guard against drift; the step is mass-preserving up to rounding.
    for m in mu.iter_mut() {
        *m /= sum;
    }
}

fn normalize_clamped(mu: &mut [f64]) {
    let mut sum = 0.0;
    for m in mu.iter_mut() {
        if *m < 0.0 {
            *m = 0.0;
        }
        sum += *m;
    }
    for m in mu.iter_mut() {
        *m /= sum;
    }
}

/// The unique `mu` with `mu P = mu`, supported on the single terminal
/// component; transient states get probability 0. Fails with
/// [`MarkovError::ReducibleModel`] when several terminal components exist.
pub fn stationary_distribution(chain: &StationaryChain) -> Result<Distribution, MarkovError> {
    stationary_with(chain, STATIONARY_RESIDUAL_TOL, 2_000_000)
}

/// [`stationary_distribution`] with an explicit residual tolerance and a
/// cap on the polish iterations.
pub fn stationary_with(
    chain: &StationaryChain,
    residual_tol: f64,
    max_iterations: u64,
) -> Result<Distribution, MarkovError> {
    let terminal = terminal_components(chain);
    if terminal.len() != 1 {
        return Err(MarkovError::ReducibleModel {
            components: terminal,
        });
    }
    let component = &terminal[0];
    let m = component.len();
    let mut full = vec![0.0; chain.len()];

    if m == 1 {
        full[component[0]] = 1.0;
        return Distribution::new(full);
    }

    let mut local_of = vec![usize::MAX; chain.len()];
    for (li, &s) in component.iter().enumerate() {
        local_of[s] = li;
    }
    // The component is closed, so rows restricted to it stay stochastic.
    let mut p = vec![vec![0.0; m]; m];
    for (li, &s) in component.iter().enumerate() {
        for t in chain.transitions_from(s) {
            p[li][local_of[t.target]] += t.probability;
        }
    }

    let mut local = if m <= DIRECT_SOLVE_LIMIT {
        // Balance equations (P^T - I) mu = 0 with the last row replaced by
        // the normalization sum(mu) = 1.
        let mut a = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                a[i][j] = p[j][i] - if i == j { 1.0 } else { 0.0 };
            }
        }
        for cell in a[m - 1].iter_mut() {
            *cell = 1.0;
        }
        let mut b = vec![0.0; m];
        b[m - 1] = 1.0;
        solve_dense(a, b).unwrap_or_else(|| vec![1.0 / m as f64; m])
    } else {
        vec![1.0 / m as f64; m]
    };
    normalize_clamped(&mut local);

    for (li, &s) in component.iter().enumerate() {
        full[s] = local[li];
    }

    // Polish with damped power steps if the direct solve (or the uniform
    // start for big chains) has not reached the required residual yet.
    let mut iterations: u64 = 0;
    while residual(chain, &full) > residual_tol {
        damped_step(chain, &mut full);
        iterations += 1;
        if iterations > max_iterations {
            return Err(MarkovError::NoConvergence {
                tol: residual_tol,
                iterations,
            });
        }
    }
    Distribution::new(full)
}

/// Damped power iteration, exposed as an independent cross-check for the
/// direct solver. Starts uniform on the terminal component.
pub fn stationary_power(
    chain: &StationaryChain,
    tol: f64,
    max_iterations: u64,
) -> Result<Distribution, MarkovError> {
    let terminal = terminal_components(chain);
    if terminal.len() != 1 {
        return Err(MarkovError::ReducibleModel {
            components: terminal,
        });
    }
    let component = &terminal[0];
    let mut mu = vec![0.0; chain.len()];
    for &s in component {
        mu[s] = 1.0 / component.len() as f64;
    }
    for _ in 0..max_iterations {
        if residual(chain, &mu) <= tol {
            return Distribution::new(mu);
        }
        damped_step(chain, &mut mu);
    }
    if residual(chain, &mu) <= tol {
        Distribution::new(mu)
    } else {
        Err(MarkovError::NoConvergence {
            tol,
            iterations: max_iterations,
        })
    }
}

/// States whose label's final symbol violates the property predicate, i.e.
/// whose most recent abstract observation is out of range. The root state
/// (empty label) carries no observation and is never unsafe.
pub fn unsafe_states(
    chain: &StationaryChain,
    property: &SafetyProperty,
    predicates: &PredicateSet,
) -> Result<Vec<usize>, MarkovError> {
    let wanted = property.to_predicate();
    let bit = predicates
        .iter()
        .position(|p| p.equivalent_to(&wanted))
        .ok_or(MarkovError::PropertyPredicateMissing)?;
    Ok(chain
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, label)| label.last().is_some_and(|&sym| symbol_violates(sym, bit)))
        .map(|(i, _)| i)
        .collect())
}

/// Total stationary mass on a set of states.
pub fn unsafe_mass(distribution: &Distribution, states: &[usize]) -> f64 {
    states.iter().map(|&s| distribution.get(s)).sum()
}

/// The long-run probability of being out of range: the stationary mass of
/// the unsafe states.
pub fn unsafe_probability(
    chain: &StationaryChain,
    property: &SafetyProperty,
    predicates: &PredicateSet,
) -> Result<f64, MarkovError> {
    let states = unsafe_states(chain, property, predicates)?;
    let mu = stationary_distribution(chain)?;
    Ok(unsafe_mass(&mu, &states))
}
