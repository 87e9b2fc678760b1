//! Function oracles over orthant vectors.
//!
//! [`KSubFunction`] is the evaluation interface every optimizer and
//! rounder consumes. Two concrete families back it: dense tables for
//! small instances and weighted coverage functions, the standard
//! verifiable monotone family. Wrappers provide uniform rescaling and
//! the residual `g(x) = f(x ⊔ A) − f(A)` used by partial enumeration.

use serde::{Deserialize, Serialize};

use crate::error::{KsubError, Result};
use crate::orthant::{state_count, OrthantVector};

/// Evaluation oracle for a function over `(k+1)^n` assignments.
///
/// Implementations must be pure: the same assignment always evaluates to
/// the same value, and concurrent calls are safe. `monotone` is a claim
/// carried as metadata; validators check it, consumers may rely on it.
pub trait KSubFunction: Sync {
    /// Ground-set size.
    fn n(&self) -> usize;

    /// Number of parts.
    fn k(&self) -> usize;

    /// Evaluates the function at an assignment.
    fn eval(&self, s: &OrthantVector) -> f64;

    /// Whether the instance is advertised as monotone.
    fn monotone(&self) -> bool;

    /// Upper bound on `max_{i,j} f({i -> j}) - f(empty)`.
    fn max_singleton_gain(&self) -> f64;
}

/// Marginal gain of assigning `item` to `part` on top of `at`.
///
/// Errors when the item is already assigned or indices are out of range.
pub fn marginal_gain(
    f: &dyn KSubFunction,
    at: &OrthantVector,
    item: usize,
    part: usize,
) -> Result<f64> {
    if at.n() != f.n() || at.k() != f.k() {
        return Err(KsubError::DimensionMismatch(format!(
            "assignment is {}x{}, function is {}x{}",
            at.n(),
            at.k(),
            f.n(),
            f.k()
        )));
    }
    if item >= f.n() || part >= f.k() {
        return Err(KsubError::Precondition(format!(
            "item {item} / part {part} out of range"
        )));
    }
    if at.is_assigned(item) {
        return Err(KsubError::Precondition(format!(
            "item {item} is already assigned"
        )));
    }
    Ok(f.eval(&at.with(item, part)) - f.eval(at))
}

fn max_singleton_gain_by_probe(f: &dyn KSubFunction) -> f64 {
    let empty = OrthantVector::empty(f.n(), f.k());
    let base = f.eval(&empty);
    let mut best = f64::NEG_INFINITY;
    for i in 0..f.n() {
        for j in 0..f.k() {
            best = best.max(f.eval(&empty.with(i, j)) - base);
        }
    }
    if best.is_finite() {
        best
    } else {
        0.0
    }
}

/// Dense oracle: one stored value per assignment, indexed base-`(k+1)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularFunction {
    n: usize,
    k: usize,
    monotone: bool,
    table: Vec<f64>,
    #[serde(skip)]
    max_gain: std::sync::OnceLock<f64>,
}

impl PartialEq for TabularFunction {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.k == other.k
            && self.monotone == other.monotone
            && self.table == other.table
    }
}


impl TabularFunction {
    /// Builds a table oracle. `table[s.index()]` is the value at `s`; the
    /// table length must be exactly `(k+1)^n`.
    pub fn new(n: usize, k: usize, monotone: bool, table: Vec<f64>) -> Result<Self> {
        let expect = state_count(n, k).ok_or_else(|| {
            KsubError::Precondition("state space overflows u128".to_string())
        })?;
        if table.len() as u128 != expect {
            return Err(KsubError::DimensionMismatch(format!(
                "table has {} entries, expected (k+1)^n = {}",
                table.len(),
                expect
            )));
        }
        Ok(TabularFunction {
            n,
            k,
            monotone,
            table,
            max_gain: std::sync::OnceLock::new(),
        })
    }

    /// Materializes any oracle into a table (caller checks the guard).
    pub fn from_oracle(f: &dyn KSubFunction) -> Self {
        let states = state_count(f.n(), f.k()).expect("state space overflow") as u64;
        let table = (0..states)
            .map(|idx| f.eval(&OrthantVector::from_index(idx as u128, f.n(), f.k())))
            .collect();
        TabularFunction {
            n: f.n(),
            k: f.k(),
            monotone: f.monotone(),
            table,
            max_gain: std::sync::OnceLock::new(),
        }
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn set_monotone_claim(&mut self, claim: bool) {
        self.monotone = claim;
    }

    /// Largest absolute value over all states.
    pub fn max_abs_value(&self) -> f64 {
        self.table.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl KSubFunction for TabularFunction {
    fn n(&self) -> usize {
        self.n
    }

    fn k(&self) -> usize {
        self.k
    }

    fn eval(&self, s: &OrthantVector) -> f64 {
        debug_assert_eq!(s.n(), self.n);
        debug_assert_eq!(s.k(), self.k);
        self.table[s.index() as usize]
    }

    fn monotone(&self) -> bool {
        self.monotone
    }

    fn max_singleton_gain(&self) -> f64 {
        *self
            .max_gain
            .get_or_init(|| max_singleton_gain_by_probe(self))
    }
}

/// Weighted coverage: assigning item `i` to part `j` covers a fixed subset
/// of a weighted universe; the value is the total weight covered by the
/// assigned pairs. Monotone and k-submodular by construction (still
/// validated post hoc wherever the zoo advertises it).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageFunction {
    n: usize,
    k: usize,
    universe_size: usize,
    weights: Vec<f64>,
    /// covers[i * k + j] = universe elements covered by assigning i to j.
    covers: Vec<Vec<usize>>,
    #[serde(skip)]
    max_gain: std::sync::OnceLock<f64>,
}

impl PartialEq for CoverageFunction {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.k == other.k
            && self.universe_size == other.universe_size
            && self.weights == other.weights
            && self.covers == other.covers
    }
}


impl CoverageFunction {
    pub fn new(
        n: usize,
        k: usize,
        universe_size: usize,
        weights: Vec<f64>,
        covers: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if weights.len() != universe_size {
            return Err(KsubError::DimensionMismatch(format!(
                "{} weights for universe of {}",
                weights.len(),
                universe_size
            )));
        }
        if covers.len() != n * k {
            return Err(KsubError::DimensionMismatch(format!(
                "{} cover sets, expected n*k = {}",
                covers.len(),
                n * k
            )));
        }
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(KsubError::Precondition(
                "coverage weights must be finite and nonnegative".to_string(),
            ));
        }
        if covers
            .iter()
            .any(|c| c.iter().any(|&u| u >= universe_size))
        {
            return Err(KsubError::Precondition(
                "cover set references element outside the universe".to_string(),
            ));
        }
        Ok(CoverageFunction {
            n,
            k,
            universe_size,
            weights,
            covers,
            max_gain: std::sync::OnceLock::new(),
        })
    }

    pub fn universe_size(&self) -> usize {
        self.universe_size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cover_of(&self, item: usize, part: usize) -> &[usize] {
        &self.covers[item * self.k + part]
    }

    /// Total weight of the universe (an upper bound on any value).
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

impl KSubFunction for CoverageFunction {
    fn n(&self) -> usize {
        self.n
    }

    fn k(&self) -> usize {
        self.k
    }

    fn eval(&self, s: &OrthantVector) -> f64 {
        let mut covered = vec![false; self.universe_size];
        for (item, part) in s.assigned() {
            for &u in self.cover_of(item, part) {
                covered[u] = true;
            }
        }
        covered
            .iter()
            .zip(&self.weights)
            .filter_map(|(&c, &w)| c.then_some(w))
            .sum()
    }

    fn monotone(&self) -> bool {
        true
    }

    fn max_singleton_gain(&self) -> f64 {
        *self.max_gain.get_or_init(|| {
            let mut best = 0.0f64;
            for cover in &self.covers {
                let gain: f64 = cover.iter().map(|&u| self.weights[u]).sum();
                best = best.max(gain);
            }
            best
        })
    }
}

/// Uniform rescaling `c * f`, used to normalize marginals into `[0, 1]`
/// for the lower-tail harness.
#[derive(Debug, Clone)]
pub struct Scaled<F> {
    inner: F,
    factor: f64,
}

impl<F: KSubFunction> Scaled<F> {
    pub fn new(inner: F, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(KsubError::Config(format!(
                "scale factor must be positive and finite, got {factor}"
            )));
        }
        Ok(Scaled { inner, factor })
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }
}

impl<F: KSubFunction> KSubFunction for Scaled<F> {
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn k(&self) -> usize {
        self.inner.k()
    }

    fn eval(&self, s: &OrthantVector) -> f64 {
        self.factor * self.inner.eval(s)
    }

    fn monotone(&self) -> bool {
        self.inner.monotone()
    }

    fn max_singleton_gain(&self) -> f64 {
        self.factor * self.inner.max_singleton_gain()
    }
}

/// Residual of a base function against a frozen seed assignment:
/// `g(x) = f(x ⊔ seed) − f(seed)` over the items the seed leaves free.
///
/// Reduced item `r` corresponds to base item `free_items[r]`.
pub struct ResidualFunction<'a> {
    base: &'a dyn KSubFunction,
    seed: OrthantVector,
    free_items: Vec<usize>,
    seed_value: f64,
    max_gain: f64,
}

impl<'a> ResidualFunction<'a> {
    pub fn new(base: &'a dyn KSubFunction, seed: OrthantVector) -> Result<Self> {
        if seed.n() != base.n() || seed.k() != base.k() {
            return Err(KsubError::DimensionMismatch(
                "seed does not match the base function".to_string(),
            ));
        }
        let free_items: Vec<usize> = (0..base.n()).filter(|&i| !seed.is_assigned(i)).collect();
        let seed_value = base.eval(&seed);
        let mut max_gain = 0.0f64;
        for &i in &free_items {
            for j in 0..base.k() {
                max_gain = max_gain.max(base.eval(&seed.with(i, j)) - seed_value);
            }
        }
        Ok(ResidualFunction {
            base,
            seed,
            free_items,
            seed_value,
            max_gain,
        })
    }

    pub fn free_items(&self) -> &[usize] {
        &self.free_items
    }

    pub fn seed(&self) -> &OrthantVector {
        &self.seed
    }

    pub fn seed_value(&self) -> f64 {
        self.seed_value
    }

    /// Lifts a reduced assignment back onto the full ground set, merged
    /// with the seed.
    pub fn lift(&self, reduced: &OrthantVector) -> OrthantVector {
        let mut full = self.seed.clone();
        for (r, &item) in self.free_items.iter().enumerate() {
            full.set(item, reduced.part_of(r));
        }
        full
    }
}

impl KSubFunction for ResidualFunction<'_> {
    fn n(&self) -> usize {
        self.free_items.len()
    }

    fn k(&self) -> usize {
        self.base.k()
    }

    fn eval(&self, s: &OrthantVector) -> f64 {
        self.base.eval(&self.lift(s)) - self.seed_value
    }

    fn monotone(&self) -> bool {
        self.base.monotone()
    }

    fn max_singleton_gain(&self) -> f64 {
        self.max_gain
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_tabular() -> TabularFunction {
        // n = 1, k = 2: value 0 unassigned, 3 in part 0, 1 in part 1.
        TabularFunction::new(1, 2, true, vec![0.0, 3.0, 1.0]).unwrap()
    }

    #[test]
    fn marginal_gain_reads_table() {
        let f = tiny_tabular();
        let empty = OrthantVector::empty(1, 2);
        assert_eq!(marginal_gain(&f, &empty, 0, 0).unwrap(), 3.0);
        assert_eq!(marginal_gain(&f, &empty, 0, 1).unwrap(), 1.0);
    }

    #[test]
    fn marginal_gain_rejects_assigned_item() {
        let f = tiny_tabular();
        let s = OrthantVector::empty(1, 2).with(0, 0);
        assert!(matches!(
            marginal_gain(&f, &s, 0, 1),
            Err(KsubError::Precondition(_))
        ));
    }

    #[test]
    fn tabular_rejects_wrong_length() {
        assert!(TabularFunction::new(2, 2, false, vec![0.0; 8]).is_err());
    }

    #[test]
    fn coverage_eval_counts_weight_once() {
        // Two items, one part; both cover element 0.
        let f = CoverageFunction::new(
            2,
            1,
            2,
            vec![5.0, 2.0],
            vec![vec![0], vec![0, 1]],
        )
        .unwrap();
        let mut s = OrthantVector::empty(2, 1);
        s.set(0, Some(0));
        s.set(1, Some(0));
        assert_eq!(f.eval(&s), 7.0);
        assert_eq!(f.max_singleton_gain(), 7.0);
    }

    #[test]
    fn residual_shifts_and_reduces() {
        let f = CoverageFunction::new(
            2,
            1,
            2,
            vec![5.0, 2.0],
            vec![vec![0], vec![0, 1]],
        )
        .unwrap();
        let seed = OrthantVector::empty(2, 1).with(0, 0); // covers weight 5
        let g = ResidualFunction::new(&f, seed).unwrap();
        assert_eq!(g.n(), 1);
        assert_eq!(g.free_items(), &[1]);
        let r = OrthantVector::empty(1, 1).with(0, 0);
        assert_eq!(g.eval(&r), 2.0); // element 0 already covered by the seed
        assert_eq!(g.eval(&OrthantVector::empty(1, 1)), 0.0);
    }

    #[test]
    fn scaled_multiplies_values() {
        let f = Scaled::new(tiny_tabular(), 0.5).unwrap();
        let s = OrthantVector::empty(1, 2).with(0, 0);
        assert_eq!(f.eval(&s), 1.5);
        assert_eq!(f.max_singleton_gain(), 1.5);
    }
}
