//! Feasible regions: the base partition-matroid polytope plus the
//! continuous images of the discrete constraints (total size, individual
//! size, knapsack), coordinate zeroing, and a uniform scale applied to
//! the size/budget caps.
//!
//! Individual-size caps are representable and checkable here, but no
//! optimizer in this crate targets them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{KsubError, Result};
use crate::orthant::OrthantVector;
use crate::point::FractionalPoint;
use crate::FEAS_TOL;

/// Knapsack data: strictly positive per-item costs and a budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knapsack {
    pub costs: Vec<f64>,
    pub budget: f64,
}

/// Which constraint limited a step; `Budget` groups size/knapsack caps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StepBinding {
    /// Direction is zero or nothing binds.
    Unbounded,
    /// A coordinate bound, row sum, or zeroed coordinate.
    Polytope,
    /// Total-size, knapsack, or individual-size cap.
    Budget,
}

/// Declarative feasible region for one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintSet {
    n: usize,
    k: usize,
    total_size_cap: Option<f64>,
    knapsack: Option<Knapsack>,
    individual_caps: Option<Vec<f64>>,
    zeroed: BTreeSet<(usize, usize)>,
    scale: f64,
}

impl ConstraintSet {
    /// Just the base polytope: row sums at most 1.
    pub fn unconstrained(n: usize, k: usize) -> Self {
        ConstraintSet {
            n,
            k,
            total_size_cap: None,
            knapsack: None,
            individual_caps: None,
            zeroed: BTreeSet::new(),
            scale: 1.0,
        }
    }

    pub fn with_total_size(mut self, cap: f64) -> Result<Self> {
        if !(cap >= 0.0) {
            return Err(KsubError::Config(format!(
                "total size cap must be nonnegative, got {cap}"
            )));
        }
        self.total_size_cap = Some(cap);
        Ok(self)
    }

    pub fn with_knapsack(mut self, costs: Vec<f64>, budget: f64) -> Result<Self> {
        if costs.len() != self.n {
            return Err(KsubError::DimensionMismatch(format!(
                "{} costs for {} items",
                costs.len(),
                self.n
            )));
        }
        if costs.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
            return Err(KsubError::Config(
                "knapsack costs must be strictly positive".to_string(),
            ));
        }
        if !(budget >= 0.0) {
            return Err(KsubError::Config(format!(
                "knapsack budget must be nonnegative, got {budget}"
            )));
        }
        self.knapsack = Some(Knapsack { costs, budget });
        Ok(self)
    }

    pub fn with_individual_caps(mut self, caps: Vec<f64>) -> Result<Self> {
        if caps.len() != self.k {
            return Err(KsubError::DimensionMismatch(format!(
                "{} individual caps for {} parts",
                caps.len(),
                self.k
            )));
        }
        if caps.iter().any(|&b| !(b >= 0.0)) {
            return Err(KsubError::Config(
                "individual caps must be nonnegative".to_string(),
            ));
        }
        self.individual_caps = Some(caps);
        Ok(self)
    }

    pub fn with_zeroed(mut self, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        for (i, j) in pairs {
            if i >= self.n || j >= self.k {
                return Err(KsubError::Config(format!(
                    "zeroed pair ({i},{j}) out of range"
                )));
            }
            self.zeroed.insert((i, j));
        }
        Ok(self)
    }

    /// Scales the size cap and budget by `scale` in `(0, 1]`.
    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(KsubError::Config(format!(
                "scale must lie in (0,1], got {scale}"
            )));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn knapsack(&self) -> Option<&Knapsack> {
        self.knapsack.as_ref()
    }

    pub fn total_size_cap(&self) -> Option<f64> {
        self.total_size_cap
    }

    pub fn individual_caps(&self) -> Option<&[f64]> {
        self.individual_caps.as_deref()
    }

    pub fn zeroed(&self) -> &BTreeSet<(usize, usize)> {
        &self.zeroed
    }

    pub fn is_zeroed(&self, item: usize, part: usize) -> bool {
        self.zeroed.contains(&(item, part))
    }

    /// Effective total-size cap after scaling.
    pub fn effective_size_cap(&self) -> Option<f64> {
        self.total_size_cap.map(|b| self.scale * b)
    }

    /// Effective knapsack budget after scaling.
    pub fn effective_budget(&self) -> Option<f64> {
        self.knapsack.as_ref().map(|kn| self.scale * kn.budget)
    }

    fn check_dims(&self, n: usize, k: usize) -> Result<()> {
        if n != self.n || k != self.k {
            return Err(KsubError::DimensionMismatch(format!(
                "point is {n}x{k}, constraints are {}x{}",
                self.n, self.k
            )));
        }
        Ok(())
    }

    /// Membership test for fractional points, with the shared tolerance on
    /// every face.
    pub fn is_feasible(&self, x: &FractionalPoint) -> Result<bool> {
        self.check_dims(x.n(), x.k())?;
        for (i, j, v) in x.iter() {
            if !v.is_finite() || v < -FEAS_TOL || v > 1.0 + FEAS_TOL {
                return Ok(false);
            }
            if v > FEAS_TOL && self.is_zeroed(i, j) {
                return Ok(false);
            }
        }
        for i in 0..self.n {
            if x.row_sum(i) > 1.0 + FEAS_TOL {
                return Ok(false);
            }
        }
        if let Some(cap) = self.effective_size_cap() {
            if x.total() > cap + FEAS_TOL {
                return Ok(false);
            }
        }
        if let Some(kn) = &self.knapsack {
            let spend: f64 = (0..self.n).map(|i| kn.costs[i] * x.row_sum(i)).sum();
            if spend > self.scale * kn.budget + FEAS_TOL {
                return Ok(false);
            }
        }
        if let Some(caps) = &self.individual_caps {
            for j in 0..self.k {
                let col: f64 = (0..self.n).map(|i| x.get(i, j)).sum();
                if col > caps[j] + FEAS_TOL {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Largest `theta >= 0` such that `x + theta * v` stays feasible, for a
    /// nonnegative direction `v` (row-major `n x k`). Returns the binding
    /// constraint kind alongside.
    pub fn max_step_detail(&self, x: &FractionalPoint, v: &[f64]) -> (f64, StepBinding) {
        debug_assert_eq!(v.len(), self.n * self.k);
        debug_assert!(v.iter().all(|&d| d >= 0.0));
        let mut theta = f64::INFINITY;
        let mut binding = StepBinding::Unbounded;
        let mut tighten = |limit: f64, kind: StepBinding| {
            if limit < theta {
                theta = limit;
                binding = kind;
            }
        };

        for (i, j, cur) in x.iter() {
            let d = v[i * self.k + j];
            if d <= 0.0 {
                continue;
            }
            if self.is_zeroed(i, j) {
                tighten(0.0, StepBinding::Polytope);
            } else {
                tighten((1.0 - cur) / d, StepBinding::Polytope);
            }
        }
        for i in 0..self.n {
            let rate: f64 = v[i * self.k..(i + 1) * self.k].iter().sum();
            if rate > 0.0 {
                tighten((1.0 - x.row_sum(i)) / rate, StepBinding::Polytope);
            }
        }
        if let Some(cap) = self.effective_size_cap() {
            let rate: f64 = v.iter().sum();
            if rate > 0.0 {
                tighten((cap - x.total()) / rate, StepBinding::Budget);
            }
        }
        if let Some(kn) = &self.knapsack {
            let rate: f64 = (0..self.n)
                .map(|i| kn.costs[i] * v[i * self.k..(i + 1) * self.k].iter().sum::<f64>())
                .sum();
            if rate > 0.0 {
                let spend: f64 = (0..self.n).map(|i| kn.costs[i] * x.row_sum(i)).sum();
                tighten((self.scale * kn.budget - spend) / rate, StepBinding::Budget);
            }
        }
        if let Some(caps) = &self.individual_caps {
            for j in 0..self.k {
                let rate: f64 = (0..self.n).map(|i| v[i * self.k + j]).sum();
                if rate > 0.0 {
                    let col: f64 = (0..self.n).map(|i| x.get(i, j)).sum();
                    tighten((caps[j] - col) / rate, StepBinding::Budget);
                }
            }
        }
        (theta.max(0.0), binding)
    }

    /// Largest feasible step along `v`; `0` means `x` already sits on the
    /// boundary in that direction.
    pub fn max_step(&self, x: &FractionalPoint, v: &[f64]) -> f64 {
        self.max_step_detail(x, v).0
    }

    /// Discrete-side feasibility of an integral assignment.
    pub fn integral_feasible(&self, s: &OrthantVector) -> bool {
        debug_assert_eq!(s.n(), self.n);
        debug_assert_eq!(s.k(), self.k);
        if s.assigned().any(|(i, j)| self.is_zeroed(i, j)) {
            return false;
        }
        if let Some(cap) = self.effective_size_cap() {
            if s.assigned_count() as f64 > cap + FEAS_TOL {
                return false;
            }
        }
        if let Some(kn) = &self.knapsack {
            let spend: f64 = s.assigned().map(|(i, _)| kn.costs[i]).sum();
            if spend > self.scale * kn.budget + FEAS_TOL {
                return false;
            }
        }
        if let Some(caps) = &self.individual_caps {
            let mut counts = vec![0usize; self.k];
            for (_, j) in s.assigned() {
                counts[j] += 1;
            }
            if (0..self.k).any(|j| counts[j] as f64 > caps[j] + FEAS_TOL) {
                return false;
            }
        }
        true
    }
}
