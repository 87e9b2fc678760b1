//! Fractional points in `[0,1]^{n x k}` and gradient matrices.

use serde::{Deserialize, Serialize};

use crate::error::{KsubError, Result};
use crate::orthant::OrthantVector;
use crate::FEAS_TOL;

/// A point of the partition-matroid polytope: an `n x k` matrix with
/// entries in `[0, 1]` and per-item row sums at most `1` (within the
/// shared feasibility tolerance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalPoint {
    n: usize,
    k: usize,
    coords: Vec<f64>,
}

impl FractionalPoint {
    /// The origin.
    pub fn zero(n: usize, k: usize) -> Self {
        FractionalPoint {
            n,
            k,
            coords: vec![0.0; n * k],
        }
    }

    /// Validated construction from a row-major coordinate matrix.
    pub fn new(n: usize, k: usize, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != n * k {
            return Err(KsubError::DimensionMismatch(format!(
                "{} coordinates for an {n}x{k} point",
                coords.len()
            )));
        }
        let p = FractionalPoint { n, k, coords };
        for (i, j, v) in p.iter() {
            if !v.is_finite() || v < -FEAS_TOL || v > 1.0 + FEAS_TOL {
                return Err(KsubError::Infeasible(format!(
                    "coordinate ({i},{j}) = {v} outside [0,1]"
                )));
            }
        }
        for i in 0..n {
            let rs = p.row_sum(i);
            if rs > 1.0 + FEAS_TOL {
                return Err(KsubError::Infeasible(format!(
                    "row {i} sums to {rs} > 1"
                )));
            }
        }
        Ok(p)
    }

    /// Validated construction from per-item rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != k) {
            return Err(KsubError::DimensionMismatch("ragged rows".to_string()));
        }
        Self::new(n, k, rows.concat())
    }

    /// The indicator point of an integral assignment.
    pub fn one_hot(s: &OrthantVector) -> Self {
        let mut p = FractionalPoint::zero(s.n(), s.k());
        for (i, j) in s.assigned() {
            p.coords[i * s.k() + j] = 1.0;
        }
        p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, item: usize, part: usize) -> f64 {
        self.coords[item * self.k + part]
    }

    pub(crate) fn set(&mut self, item: usize, part: usize, value: f64) {
        self.coords[item * self.k + part] = value;
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn row(&self, item: usize) -> &[f64] {
        &self.coords[item * self.k..(item + 1) * self.k]
    }

    pub fn row_sum(&self, item: usize) -> f64 {
        self.row(item).iter().sum()
    }

    /// Sum of all coordinates.
    pub fn total(&self) -> f64 {
        self.coords.iter().sum()
    }

    /// `(item, part, value)` triples in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let k = self.k;
        self.coords
            .iter()
            .enumerate()
            .map(move |(flat, &v)| (flat / k, flat % k, v))
    }

    /// True when every coordinate is within `tol` of 0 or 1.
    pub fn is_integral(&self, tol: f64) -> bool {
        self.coords
            .iter()
            .all(|&v| v.abs() <= tol || (v - 1.0).abs() <= tol)
    }

    /// Interprets an integral point as an assignment. `None` if any
    /// coordinate is fractional beyond `tol`.
    pub fn to_orthant(&self, tol: f64) -> Option<OrthantVector> {
        let mut s = OrthantVector::empty(self.n, self.k);
        for i in 0..self.n {
            let mut part = None;
            for j in 0..self.k {
                let v = self.get(i, j);
                if (v - 1.0).abs() <= tol {
                    if part.is_some() {
                        return None; // two parts claimed by one item
                    }
                    part = Some(j);
                } else if v.abs() > tol {
                    return None;
                }
            }
            s.set(i, part);
        }
        Some(s)
    }

    /// Entrywise comparison for the gradient-antitonicity property.
    pub fn le(&self, other: &Self) -> bool {
        self.coords
            .iter()
            .zip(&other.coords)
            .all(|(a, b)| a <= b)
    }
}

/// Partial derivatives of the extension at a point, one entry per
/// `(item, part)` coordinate. Sampled estimation can leave entries
/// unavailable when the probe would leave the polytope; consumers treat
/// those as minus infinity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientVector {
    n: usize,
    k: usize,
    entries: Vec<f64>,
    available: Vec<bool>,
}

impl GradientVector {
    pub fn dense(n: usize, k: usize, entries: Vec<f64>) -> Self {
        assert_eq!(entries.len(), n * k);
        let available = vec![true; n * k];
        GradientVector {
            n,
            k,
            entries,
            available,
        }
    }

    pub(crate) fn with_availability(
        n: usize,
        k: usize,
        entries: Vec<f64>,
        available: Vec<bool>,
    ) -> Self {
        assert_eq!(entries.len(), n * k);
        assert_eq!(available.len(), n * k);
        GradientVector {
            n,
            k,
            entries,
            available,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Entry `(item, part)`, or `None` when the estimate is unavailable.
    pub fn entry(&self, item: usize, part: usize) -> Option<f64> {
        let flat = item * self.k + part;
        self.available[flat].then(|| self.entries[flat])
    }

    pub fn is_available(&self, item: usize, part: usize) -> bool {
        self.available[item * self.k + part]
    }

    /// Dense row view; unavailable entries hold unspecified values.
    pub fn row(&self, item: usize) -> &[f64] {
        &self.entries[item * self.k..(item + 1) * self.k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_row_sum_above_one() {
        assert!(FractionalPoint::new(1, 2, vec![0.7, 0.5]).is_err());
        assert!(FractionalPoint::new(1, 2, vec![0.7, 0.3]).is_ok());
    }

    #[test]
    fn one_hot_roundtrip() {
        let s = OrthantVector::from_digits(vec![2, 0, 1], 2).unwrap();
        let p = FractionalPoint::one_hot(&s);
        assert!(p.is_integral(0.0));
        assert_eq!(p.to_orthant(1e-9).unwrap(), s);
        assert_eq!(p.row_sum(1), 0.0);
        assert_eq!(p.total(), 2.0);
    }

    #[test]
    fn fractional_point_is_not_integral() {
        let p = FractionalPoint::new(1, 2, vec![0.5, 0.25]).unwrap();
        assert!(!p.is_integral(1e-9));
        assert!(p.to_orthant(1e-9).is_none());
    }

    #[test]
    fn gradient_availability() {
        let g = GradientVector::with_availability(
            1,
            2,
            vec![3.0, 0.0],
            vec![true, false],
        );
        assert_eq!(g.entry(0, 0), Some(3.0));
        assert_eq!(g.entry(0, 1), None);
    }
}
