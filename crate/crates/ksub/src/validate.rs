//! Exhaustive validators for the two halves of the k-submodularity
//! characterization: submodularity in every orthant and pairwise
//! monotonicity. Both enumerate the full state space under the guard and
//! return a concrete witness on failure.
//!
//! Orthant submodularity over all comparable pairs reduces to adjacent
//! pairs: if `Δ_{e,i} f(x) >= Δ_{e,i} f(x + (e' -> j))` whenever `e != e'`
//! are both unassigned in `x`, the general inequality follows by
//! telescoping along any chain from `x` up to `y`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::function::KSubFunction;
use crate::orthant::{EnumerationGuard, OrthantVector};

/// Concrete counterexample produced by a failed validation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Witness {
    /// `Δ_{e,i} f(lower) < Δ_{e,i} f(upper)` for `lower <= upper`.
    OrthantSubmodularity {
        lower: Vec<u8>,
        upper: Vec<u8>,
        item: usize,
        part: usize,
        lower_gain: f64,
        upper_gain: f64,
    },
    /// `Δ_{e,i} f(state) + Δ_{e,j} f(state) < 0` for parts `i != j`.
    PairwiseMonotonicity {
        state: Vec<u8>,
        item: usize,
        part_a: usize,
        part_b: usize,
        gain_a: f64,
        gain_b: f64,
    },
    /// A single-item marginal is negative on a claimed-monotone instance.
    NegativeMarginal {
        state: Vec<u8>,
        item: usize,
        part: usize,
        gain: f64,
    },
}

impl std::fmt::Display for Witness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Witness::OrthantSubmodularity {
                lower,
                upper,
                item,
                part,
                lower_gain,
                upper_gain,
            } => write!(
                f,
                "orthant submodularity violated: gain of item {item} -> part {part} \
                 is {lower_gain} at {lower:?} but {upper_gain} at {upper:?}"
            ),
            Witness::PairwiseMonotonicity {
                state,
                item,
                part_a,
                part_b,
                gain_a,
                gain_b,
            } => write!(
                f,
                "pairwise monotonicity violated at {state:?}: item {item}, \
                 parts {part_a}/{part_b}, gains {gain_a} + {gain_b} < 0"
            ),
            Witness::NegativeMarginal {
                state,
                item,
                part,
                gain,
            } => write!(
                f,
                "negative marginal at {state:?}: item {item} -> part {part} gains {gain}"
            ),
        }
    }
}

/// Outcome of an exhaustive validation pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ValidationReport {
    Ok,
    Violation(Witness),
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        matches!(self, ValidationReport::Ok)
    }
}

fn first_violation<F>(states: u64, check: F) -> ValidationReport
where
    F: Fn(u64) -> Option<Witness> + Sync,
{
    // find_first keeps the scan deterministic under parallelism.
    match (0..states).into_par_iter().find_map_first(|idx| check(idx)) {
        Some(w) => ValidationReport::Violation(w),
        None => ValidationReport::Ok,
    }
}

/// Checks orthant submodularity and pairwise monotonicity by enumeration.
///
/// Refuses (does not fail) when the state space exceeds the guard.
pub fn validate_ksubmodular(
    f: &dyn KSubFunction,
    guard: EnumerationGuard,
) -> Result<ValidationReport> {
    let n = f.n();
    let k = f.k();
    let states = guard.admit(n, k)?;

    // Pairwise monotonicity: for every state and unassigned item, gains of
    // any two distinct parts must not sum below zero.
    let pairwise = first_violation(states, |idx| {
        let s = OrthantVector::from_index(idx as u128, n, k);
        let base = f.eval(&s);
        for item in 0..n {
            if s.is_assigned(item) {
                continue;
            }
            let gains: Vec<f64> = (0..k).map(|j| f.eval(&s.with(item, j)) - base).collect();
            for a in 0..k {
                for b in (a + 1)..k {
                    if gains[a] + gains[b] < 0.0 {
                        return Some(Witness::PairwiseMonotonicity {
                            state: s.digits().to_vec(),
                            item,
                            part_a: a,
                            part_b: b,
                            gain_a: gains[a],
                            gain_b: gains[b],
                        });
                    }
                }
            }
        }
        None
    });
    if let ValidationReport::Violation(_) = pairwise {
        return Ok(pairwise);
    }

    // Orthant submodularity via adjacent pairs: assigning e' must not
    // increase the marginal gain of any other unassigned item e.
    let orthant = first_violation(states, |idx| {
        let s = OrthantVector::from_index(idx as u128, n, k);
        let base = f.eval(&s);
        for other in 0..n {
            if s.is_assigned(other) {
                continue;
            }
            for oj in 0..k {
                let up = s.with(other, oj);
                let up_base = f.eval(&up);
                for item in 0..n {
                    if item == other || s.is_assigned(item) {
                        continue;
                    }
                    for j in 0..k {
                        let lower_gain = f.eval(&s.with(item, j)) - base;
                        let upper_gain = f.eval(&up.with(item, j)) - up_base;
                        if lower_gain < upper_gain {
                            return Some(Witness::OrthantSubmodularity {
                                lower: s.digits().to_vec(),
                                upper: up.digits().to_vec(),
                                item,
                                part: j,
                                lower_gain,
                                upper_gain,
                            });
                        }
                    }
                }
            }
        }
        None
    });
    Ok(orthant)
}

/// Checks the monotone claim: every single-item marginal gain must be
/// nonnegative at every state.
pub fn validate_monotone(
    f: &dyn KSubFunction,
    guard: EnumerationGuard,
) -> Result<ValidationReport> {
    let n = f.n();
    let k = f.k();
    let states = guard.admit(n, k)?;
    Ok(first_violation(states, |idx| {
        let s = OrthantVector::from_index(idx as u128, n, k);
        let base = f.eval(&s);
        for item in 0..n {
            if s.is_assigned(item) {
                continue;
            }
            for j in 0..k {
                let gain = f.eval(&s.with(item, j)) - base;
                if gain < 0.0 {
                    return Some(Witness::NegativeMarginal {
                        state: s.digits().to_vec(),
                        item,
                        part: j,
                        gain,
                    });
                }
            }
        }
        None
    }))
}

/// Largest single-item marginal gain over all states; the Lemma 4 harness
/// requires it to be at most 1.
pub fn max_marginal_anywhere(f: &dyn KSubFunction, guard: EnumerationGuard) -> Result<f64> {
    let n = f.n();
    let k = f.k();
    let states = guard.admit(n, k)?;
    Ok((0..states)
        .into_par_iter()
        .map(|idx| {
            let s = OrthantVector::from_index(idx as u128, n, k);
            let base = f.eval(&s);
            let mut best = f64::NEG_INFINITY;
            for item in 0..n {
                if s.is_assigned(item) {
                    continue;
                }
                for j in 0..k {
                    best = best.max(f.eval(&s.with(item, j)) - base);
                }
            }
            best
        })
        .reduce(|| f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function::TabularFunction;

    fn tab(table: Vec<f64>, monotone: bool) -> TabularFunction {
        TabularFunction::new(1, 2, monotone, table).unwrap()
    }

    #[test]
    fn valid_single_item_instance() {
        let f = tab(vec![0.0, 3.0, 1.0], true);
        assert!(validate_ksubmodular(&f, EnumerationGuard::default())
            .unwrap()
            .is_ok());
    }

    #[test]
    fn pairwise_violation_is_witnessed() {
        let f = tab(vec![0.0, 3.0, -4.0], false);
        let report = validate_ksubmodular(&f, EnumerationGuard::default()).unwrap();
        match report {
            ValidationReport::Violation(Witness::PairwiseMonotonicity {
                item,
                part_a,
                part_b,
                ..
            }) => {
                assert_eq!(item, 0);
                assert_eq!((part_a, part_b), (0, 1));
            }
            other => panic!("expected pairwise witness, got {other:?}"),
        }
    }

    #[test]
    fn monotone_violation_but_ksubmodular_ok() {
        // Gains 3 and -1 sum to 2 >= 0: pairwise-monotone, not monotone.
        let f = tab(vec![0.0, 3.0, -1.0], true);
        assert!(validate_ksubmodular(&f, EnumerationGuard::default())
            .unwrap()
            .is_ok());
        let report = validate_monotone(&f, EnumerationGuard::default()).unwrap();
        assert!(matches!(
            report,
            ValidationReport::Violation(Witness::NegativeMarginal { .. })
        ));
    }

    #[test]
    fn modular_function_passes() {
        // f(s) = sum of per-(item, part) nonnegative gains.
        let gains = [[1.0, 2.0], [0.5, 0.25]];
        let mut table = vec![0.0; 9];
        for idx in 0..9u128 {
            let s = OrthantVector::from_index(idx, 2, 2);
            table[idx as usize] = s.assigned().map(|(i, j)| gains[i][j]).sum();
        }
        let f = TabularFunction::new(2, 2, true, table).unwrap();
        assert!(validate_ksubmodular(&f, EnumerationGuard::default())
            .unwrap()
            .is_ok());
        assert!(validate_monotone(&f, EnumerationGuard::default())
            .unwrap()
            .is_ok());
    }

    #[test]
    fn guard_refusal_is_an_error() {
        let f = tab(vec![0.0, 3.0, 1.0], true);
        let tight = EnumerationGuard { max_states: 2 };
        assert!(validate_ksubmodular(&f, tight).is_err());
    }

    #[test]
    fn all_zero_function_is_monotone() {
        let f = tab(vec![0.0, 0.0, 0.0], true);
        assert!(validate_monotone(&f, EnumerationGuard::default())
            .unwrap()
            .is_ok());
    }
}
