//! The multilinear extension: exact evaluation, exact partial derivatives
//! and mixed second partials for the oracle tier, and seeded Monte-Carlo
//! estimators for everything beyond the enumeration guard.
//!
//! Exact evaluation materializes the function into a dense table once and
//! sweeps all `(k+1)^n` assignment weights; per-item prefix/suffix
//! products give the whole gradient in a single sweep. The sampled path
//! draws one categorical variable per item per sample, item-major, from
//! one seeded stream per call, so estimates are reproducible and pairs of
//! calls with the same seed share their randomness (common random
//! numbers).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{KsubError, Result};
use crate::function::KSubFunction;
use crate::orthant::{EnumerationGuard, OrthantVector};
use crate::point::{FractionalPoint, GradientVector};
use crate::FEAS_TOL;

/// Monte-Carlo estimator settings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EstimatorConfig {
    /// Number of sampled assignments per estimate.
    pub samples: u64,
    /// Stream seed; identical seeds replay identical samples.
    pub seed: u64,
    /// Target relative accuracy (bookkeeping for reports; the sample
    /// count is what actually drives accuracy).
    pub epsilon: f64,
}

impl EstimatorConfig {
    pub fn new(samples: u64, seed: u64, epsilon: f64) -> Result<Self> {
        if samples < 1 {
            return Err(KsubError::Config("samples must be >= 1".to_string()));
        }
        Ok(EstimatorConfig {
            samples,
            seed,
            epsilon,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Samples needed so that `|estimate - F| > epsilon * max|f|` happens with
/// probability at most `failure_prob`.
pub fn samples_for(epsilon: f64, failure_prob: f64) -> u64 {
    (4.0 * (1.0 / failure_prob).ln() / (epsilon * epsilon)).ceil() as u64
}

fn check_dims(f: &dyn KSubFunction, x: &FractionalPoint) -> Result<()> {
    if x.n() != f.n() || x.k() != f.k() {
        return Err(KsubError::DimensionMismatch(format!(
            "point is {}x{}, function is {}x{}",
            x.n(),
            x.k(),
            f.n(),
            f.k()
        )));
    }
    Ok(())
}

fn check_in_base_polytope(x: &FractionalPoint) -> Result<()> {
    for (i, j, v) in x.iter() {
        if !v.is_finite() || v < -FEAS_TOL || v > 1.0 + FEAS_TOL {
            return Err(KsubError::Infeasible(format!(
                "coordinate ({i},{j}) = {v}"
            )));
        }
    }
    for i in 0..x.n() {
        if x.row_sum(i) > 1.0 + FEAS_TOL {
            return Err(KsubError::Infeasible(format!(
                "row {i} sums to {}",
                x.row_sum(i)
            )));
        }
    }
    Ok(())
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Exact oracle for the extension of one function: the value table is
/// enumerated once at construction and reused across evaluations.
pub struct MultilinearExtension {
    n: usize,
    k: usize,
    values: Vec<f64>,
    monotone: bool,
    max_abs: f64,
}

impl MultilinearExtension {
    /// Enumerates `f` under the guard. Refuses on oversized state spaces.
    pub fn build(f: &dyn KSubFunction, guard: EnumerationGuard) -> Result<Self> {
        let n = f.n();
        let k = f.k();
        let states = guard.admit(n, k)?;
        let mut values = Vec::with_capacity(states as usize);
        let mut max_abs = 0.0f64;
        for idx in 0..states {
            let v = f.eval(&OrthantVector::from_index(idx as u128, n, k));
            max_abs = max_abs.max(v.abs());
            values.push(v);
        }
        Ok(MultilinearExtension {
            n,
            k,
            values,
            monotone: f.monotone(),
            max_abs,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn monotone(&self) -> bool {
        self.monotone
    }

    /// Largest `|f|` over all states, the scale in the sampling bound.
    pub fn max_abs_value(&self) -> f64 {
        self.max_abs
    }

    /// Value of the underlying function at an integral assignment.
    pub fn value_at(&self, s: &OrthantVector) -> f64 {
        self.values[s.index() as usize]
    }

    fn check_point(&self, x: &FractionalPoint) -> Result<()> {
        if x.n() != self.n || x.k() != self.k {
            return Err(KsubError::DimensionMismatch(format!(
                "point is {}x{}, extension is {}x{}",
                x.n(),
                x.k(),
                self.n,
                self.k
            )));
        }
        check_in_base_polytope(x)
    }

    /// Exact `F(x)`: the full weighted sum over all assignments.
    pub fn eval(&self, x: &FractionalPoint) -> Result<f64> {
        self.check_point(x)?;
        let n = self.n;
        let base = self.k + 1;
        let resid: Vec<f64> = (0..n).map(|i| 1.0 - x.row_sum(i)).collect();
        let mut total = Compensated::default();
        for (idx, &value) in self.values.iter().enumerate() {
            let mut w = 1.0f64;
            let mut rem = idx;
            for i in 0..n {
                let d = rem % base;
                rem /= base;
                w *= if d == 0 { resid[i] } else { x.get(i, d - 1) };
                if w == 0.0 {
                    break;
                }
            }
            if w != 0.0 {
                total.add(value * w);
            }
        }
        Ok(total.value())
    }

    /// Exact gradient in one sweep via per-item leave-one-out weights.
    pub fn grad(&self, x: &FractionalPoint) -> Result<GradientVector> {
        self.check_point(x)?;
        let n = self.n;
        let k = self.k;
        let base = k + 1;
        let resid: Vec<f64> = (0..n).map(|i| 1.0 - x.row_sum(i)).collect();

        let mut acc = vec![Compensated::default(); n * k];
        let mut digits = vec![0usize; n];
        let mut factors = vec![0.0f64; n];
        let mut prefix = vec![0.0f64; n + 1];
        let mut suffix = vec![0.0f64; n + 1];

        for (idx, &value) in self.values.iter().enumerate() {
            let mut rem = idx;
            for i in 0..n {
                let d = rem % base;
                rem /= base;
                digits[i] = d;
                factors[i] = if d == 0 { resid[i] } else { x.get(i, d - 1) };
            }
            prefix[0] = 1.0;
            for i in 0..n {
                prefix[i + 1] = prefix[i] * factors[i];
            }
            suffix[n] = 1.0;
            for i in (0..n).rev() {
                suffix[i] = suffix[i + 1] * factors[i];
            }
            for i in 0..n {
                let w = prefix[i] * suffix[i + 1];
                if w == 0.0 {
                    continue;
                }
                match digits[i] {
                    0 => {
                        // Unassigned states weigh negatively on every part.
                        for j in 0..k {
                            acc[i * k + j].add(-value * w);
                        }
                    }
                    d => acc[i * k + (d - 1)].add(value * w),
                }
            }
        }
        Ok(GradientVector::dense(
            n,
            k,
            acc.iter().map(|c| c.value()).collect(),
        ))
    }

    /// Exact mixed second partial. Zero when `i1 == i2` by multilinearity.
    pub fn hessian_entry(
        &self,
        x: &FractionalPoint,
        i1: usize,
        j1: usize,
        i2: usize,
        j2: usize,
    ) -> Result<f64> {
        self.check_point(x)?;
        if i1 >= self.n || i2 >= self.n || j1 >= self.k || j2 >= self.k {
            return Err(KsubError::Precondition(
                "hessian index out of range".to_string(),
            ));
        }
        if i1 == i2 {
            return Ok(0.0);
        }
        let n = self.n;
        let base = self.k + 1;
        let resid: Vec<f64> = (0..n).map(|i| 1.0 - x.row_sum(i)).collect();
        let mut total = Compensated::default();
        let mut digits = vec![0usize; n];
        for (idx, &value) in self.values.iter().enumerate() {
            let mut rem = idx;
            for d in digits.iter_mut() {
                *d = rem % base;
                rem /= base;
            }
            let s1 = match digits[i1] {
                0 => -1.0,
                d if d == j1 + 1 => 1.0,
                _ => continue,
            };
            let s2 = match digits[i2] {
                0 => -1.0,
                d if d == j2 + 1 => 1.0,
                _ => continue,
            };
            let mut w = 1.0f64;
            for i in 0..n {
                if i == i1 || i == i2 {
                    continue;
                }
                let d = digits[i];
                w *= if d == 0 { resid[i] } else { x.get(i, d - 1) };
                if w == 0.0 {
                    break;
                }
            }
            if w != 0.0 {
                total.add(s1 * s2 * value * w);
            }
        }
        Ok(total.value())
    }
}

/// One-shot exact `F(x)`. Enumerates `f` each call; use
/// [`MultilinearExtension`] directly inside loops.
pub fn eval_exact(
    f: &dyn KSubFunction,
    x: &FractionalPoint,
    guard: EnumerationGuard,
) -> Result<f64> {
    check_dims(f, x)?;
    MultilinearExtension::build(f, guard)?.eval(x)
}

/// One-shot exact gradient.
pub fn grad_exact(
    f: &dyn KSubFunction,
    x: &FractionalPoint,
    guard: EnumerationGuard,
) -> Result<GradientVector> {
    check_dims(f, x)?;
    MultilinearExtension::build(f, guard)?.grad(x)
}

/// One-shot exact mixed second partial.
pub fn hessian_entry_exact(
    f: &dyn KSubFunction,
    x: &FractionalPoint,
    i1: usize,
    j1: usize,
    i2: usize,
    j2: usize,
    guard: EnumerationGuard,
) -> Result<f64> {
    check_dims(f, x)?;
    MultilinearExtension::build(f, guard)?.hessian_entry(x, i1, j1, i2, j2)
}

/// Draws one assignment: each item independently joins part `j` with
/// probability `x_{i,j}` and stays unassigned with the residual mass.
/// Exactly one uniform draw per item keeps streams aligned across calls.
fn sample_assignment(x: &FractionalPoint, rng: &mut ChaCha12Rng, out: &mut OrthantVector) {
    for i in 0..x.n() {
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        let mut part = None;
        for j in 0..x.k() {
            cum += x.get(i, j);
            if u < cum {
                part = Some(j);
                break;
            }
        }
        out.set(i, part);
    }
}

/// Monte-Carlo estimate of `F(x)`: the mean of `f` over `cfg.samples`
/// independent sampled assignments. Deterministic given the seed.
pub fn eval_sampled(
    f: &dyn KSubFunction,
    x: &FractionalPoint,
    cfg: &EstimatorConfig,
) -> Result<f64> {
    check_dims(f, x)?;
    check_in_base_polytope(x)?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut scratch = OrthantVector::empty(f.n(), f.k());
    let mut total = Compensated::default();
    for _ in 0..cfg.samples {
        sample_assignment(x, &mut rng, &mut scratch);
        total.add(f.eval(&scratch));
    }
    Ok(total.value() / cfg.samples as f64)
}

/// Sampled gradient: per-coordinate forward difference quotients of
/// [`eval_sampled`] with step `delta`, both sides drawn from the same
/// seed (common random numbers). Coordinates whose probe would leave the
/// polytope are marked unavailable.
pub fn grad_sampled(
    f: &dyn KSubFunction,
    x: &FractionalPoint,
    delta: f64,
    cfg: &EstimatorConfig,
) -> Result<GradientVector> {
    check_dims(f, x)?;
    check_in_base_polytope(x)?;
    if !(delta > 0.0) {
        return Err(KsubError::Config(format!(
            "probe step must be positive, got {delta}"
        )));
    }
    let n = f.n();
    let k = f.k();
    let base_est = eval_sampled(f, x, cfg)?;
    let mut entries = vec![0.0f64; n * k];
    let mut available = vec![false; n * k];
    for i in 0..n {
        // Probing any part of item i adds delta to the same row sum.
        if x.row_sum(i) + delta > 1.0 + FEAS_TOL {
            continue;
        }
        for j in 0..k {
            let mut probe = x.clone();
            probe.set(i, j, x.get(i, j) + delta);
            let est = eval_sampled(f, &probe, cfg)?;
            entries[i * k + j] = (est - base_est) / delta;
            available[i * k + j] = true;
        }
    }
    Ok(GradientVector::with_availability(n, k, entries, available))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function::TabularFunction;
    use crate::orthant::state_count;

    fn tiny() -> TabularFunction {
        TabularFunction::new(1, 2, true, vec![0.0, 3.0, 1.0]).unwrap()
    }

    fn guard() -> EnumerationGuard {
        EnumerationGuard::default()
    }

    #[test]
    fn eval_matches_hand_expansion() {
        let f = tiny();
        let x = FractionalPoint::new(1, 2, vec![0.5, 0.25]).unwrap();
        let v = eval_exact(&f, &x, guard()).unwrap();
        assert!((v - 1.75).abs() < 1e-15);
    }

    #[test]
    fn eval_agrees_on_vertices() {
        let f = TabularFunction::new(2, 2, false, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
            .unwrap();
        let ext = MultilinearExtension::build(&f, guard()).unwrap();
        for idx in 0..state_count(2, 2).unwrap() {
            let s = OrthantVector::from_index(idx, 2, 2);
            let x = FractionalPoint::one_hot(&s);
            assert_eq!(ext.eval(&x).unwrap(), f.eval(&s));
        }
    }

    #[test]
    fn constant_function_is_constant() {
        let f = TabularFunction::new(2, 2, true, vec![2.5; 9]).unwrap();
        let x = FractionalPoint::new(2, 2, vec![0.3, 0.4, 0.1, 0.0]).unwrap();
        let v = eval_exact(&f, &x, guard()).unwrap();
        assert!((v - 2.5).abs() < 1e-12);
    }

    #[test]
    fn gradient_of_linear_instance() {
        let f = tiny();
        let x = FractionalPoint::new(1, 2, vec![0.2, 0.3]).unwrap();
        let g = grad_exact(&f, &x, guard()).unwrap();
        assert!((g.entry(0, 0).unwrap() - 3.0).abs() < 1e-12);
        assert!((g.entry(0, 1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_at_origin_is_singleton_gain() {
        let table: Vec<f64> = (0..9).map(|i| (i * i) as f64 * 0.25).collect();
        let f = TabularFunction::new(2, 2, false, table).unwrap();
        let g = grad_exact(&f, &FractionalPoint::zero(2, 2), guard()).unwrap();
        let empty = OrthantVector::empty(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                let expect = f.eval(&empty.with(i, j)) - f.eval(&empty);
                assert!((g.entry(i, j).unwrap() - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hessian_same_item_is_zero() {
        let f = tiny();
        let x = FractionalPoint::new(1, 2, vec![0.5, 0.25]).unwrap();
        assert_eq!(
            hessian_entry_exact(&f, &x, 0, 0, 0, 1, guard()).unwrap(),
            0.0
        );
    }

    #[test]
    fn sampled_is_exact_at_vertices() {
        let f = tiny();
        let s = OrthantVector::empty(1, 2).with(0, 1);
        let x = FractionalPoint::one_hot(&s);
        let cfg = EstimatorConfig::new(7, 99, 0.1).unwrap();
        assert_eq!(eval_sampled(&f, &x, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn sampled_is_seed_deterministic() {
        let f = tiny();
        let x = FractionalPoint::new(1, 2, vec![0.5, 0.25]).unwrap();
        let cfg = EstimatorConfig::new(1, 42, 0.1).unwrap();
        let a = eval_sampled(&f, &x, &cfg).unwrap();
        let b = eval_sampled(&f, &x, &cfg).unwrap();
        assert_eq!(a, b);
        // One sample lands on exactly one table value.
        assert!([0.0, 3.0, 1.0].contains(&a));
    }

    #[test]
    fn sampled_gradient_marks_full_rows_unavailable() {
        let f = tiny();
        let x = FractionalPoint::new(1, 2, vec![0.8, 0.2]).unwrap();
        let cfg = EstimatorConfig::new(10, 7, 0.1).unwrap();
        let g = grad_sampled(&f, &x, 0.25, &cfg).unwrap();
        assert!(!g.is_available(0, 0));
        assert!(!g.is_available(0, 1));
    }

    #[test]
    fn zero_function_has_zero_sampled_gradient() {
        let f = TabularFunction::new(2, 2, true, vec![0.0; 9]).unwrap();
        let x = FractionalPoint::new(2, 2, vec![0.25, 0.25, 0.1, 0.3]).unwrap();
        let cfg = EstimatorConfig::new(50, 3, 0.1).unwrap();
        let g = grad_sampled(&f, &x, 0.25, &cfg).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(g.entry(i, j), Some(0.0));
            }
        }
    }

    #[test]
    fn guard_refuses_oversized_exact_eval() {
        let f = tiny();
        let x = FractionalPoint::zero(1, 2);
        let tight = EnumerationGuard { max_states: 2 };
        assert!(matches!(
            eval_exact(&f, &x, tight),
            Err(KsubError::GuardExceeded { .. })
        ));
    }
}
