//! Exhaustive maximization over all feasible integral assignments — the
//! ground-truth oracle behind every approximation-ratio test. Never
//! approximate: refuses via the guard instead of sampling.

use rayon::prelude::*;

use crate::error::Result;
use crate::function::KSubFunction;
use crate::orthant::{EnumerationGuard, OrthantVector};
use crate::polytope::ConstraintSet;

/// Exact maximizer and its value. Ties break toward the lexicographically
/// smallest digit sequence, so the oracle is deterministic regardless of
/// internal parallelism.
pub fn brute_force_max(
    f: &dyn KSubFunction,
    constraints: &ConstraintSet,
    guard: EnumerationGuard,
) -> Result<(OrthantVector, f64)> {
    let n = f.n();
    let k = f.k();
    let states = guard.admit(n, k)?;

    // (value desc, digits asc) is a total order: the fold is associative
    // and yields the same winner under any chunking.
    let better = |a: (OrthantVector, f64), b: (OrthantVector, f64)| -> (OrthantVector, f64) {
        if b.1 > a.1 || (b.1 == a.1 && b.0.digits() < a.0.digits()) {
            b
        } else {
            a
        }
    };

    let best = (0..states)
        .into_par_iter()
        .filter_map(|idx| {
            let s = OrthantVector::from_index(idx as u128, n, k);
            if !constraints.integral_feasible(&s) {
                return None;
            }
            let v = f.eval(&s);
            Some((s, v))
        })
        .reduce(
            || (OrthantVector::empty(n, k), f64::NEG_INFINITY),
            better,
        );
    debug_assert!(best.1.is_finite(), "empty assignment must be feasible");
    Ok(best)
}
