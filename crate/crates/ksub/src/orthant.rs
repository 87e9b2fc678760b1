//! Integral solutions: assignments of ground-set items to one of `k` parts.
//!
//! An [`OrthantVector`] stores one digit per item in `{0, 1, ..., k}`,
//! where `0` means unassigned and `j >= 1` means the item sits in part
//! `j - 1` (parts are 0-indexed throughout the public API). The digit
//! sequence doubles as a base-`(k+1)` integer, item 0 least significant,
//! which gives O(1) indexing into dense tables.

use serde::{Deserialize, Serialize};

use crate::error::{KsubError, Result};

/// An assignment of each item to one of `k` disjoint parts or to none.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OrthantVector {
    digits: Vec<u8>,
    k: usize,
}

impl OrthantVector {
    /// The all-unassigned vector on `n` items with `k` parts.
    pub fn empty(n: usize, k: usize) -> Self {
        assert!(k >= 1 && k <= u8::MAX as usize - 1, "k out of range");
        OrthantVector {
            digits: vec![0; n],
            k,
        }
    }

    /// Builds a vector from raw digits (`0` = unassigned, `j+1` = part `j`).
    pub fn from_digits(digits: Vec<u8>, k: usize) -> Result<Self> {
        if digits.iter().any(|&d| d as usize > k) {
            return Err(KsubError::Precondition(format!(
                "digit out of range for k = {k}"
            )));
        }
        Ok(OrthantVector { digits, k })
    }

    /// Decodes the base-`(k+1)` state index into an assignment.
    pub fn from_index(mut index: u128, n: usize, k: usize) -> Self {
        let base = (k + 1) as u128;
        let mut digits = vec![0u8; n];
        for d in digits.iter_mut() {
            *d = (index % base) as u8;
            index /= base;
        }
        OrthantVector { digits, k }
    }

    /// The base-`(k+1)` integer encoding of this assignment.
    pub fn index(&self) -> u128 {
        let base = (self.k + 1) as u128;
        let mut idx = 0u128;
        for &d in self.digits.iter().rev() {
            idx = idx * base + d as u128;
        }
        idx
    }

    pub fn n(&self) -> usize {
        self.digits.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Part of `item` (0-indexed), or `None` if unassigned.
    pub fn part_of(&self, item: usize) -> Option<usize> {
        match self.digits[item] {
            0 => None,
            d => Some(d as usize - 1),
        }
    }

    pub fn is_assigned(&self, item: usize) -> bool {
        self.digits[item] != 0
    }

    /// Assigns `item` to `part` (0-indexed) or clears it with `None`.
    pub fn set(&mut self, item: usize, part: Option<usize>) {
        self.digits[item] = match part {
            None => 0,
            Some(j) => {
                assert!(j < self.k, "part index out of range");
                (j + 1) as u8
            }
        };
    }

    /// Returns a copy with `item` assigned to `part`.
    pub fn with(&self, item: usize, part: usize) -> Self {
        let mut next = self.clone();
        next.set(item, Some(part));
        next
    }

    /// Number of assigned items.
    pub fn assigned_count(&self) -> usize {
        self.digits.iter().filter(|&&d| d != 0).count()
    }

    /// Iterator over `(item, part)` pairs of assigned items.
    pub fn assigned(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.digits
            .iter()
            .enumerate()
            .filter_map(|(i, &d)| (d != 0).then(|| (i, d as usize - 1)))
    }

    /// Raw digit view (`0` = unassigned, `j+1` = part `j`).
    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    /// Partial order of the characterization lemma: `self <= other` iff every
    /// assigned item of `self` is assigned to the same part in `other`.
    pub fn le(&self, other: &Self) -> bool {
        self.digits
            .iter()
            .zip(&other.digits)
            .all(|(&a, &b)| a == 0 || a == b)
    }
}

/// Total number of assignments `(k+1)^n`, or `None` on overflow.
pub fn state_count(n: usize, k: usize) -> Option<u128> {
    let base = (k + 1) as u128;
    let mut count = 1u128;
    for _ in 0..n {
        count = count.checked_mul(base)?;
    }
    Some(count)
}

/// Cap on exhaustive enumeration. Oracles refuse (they never sample) when
/// the state space exceeds it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationGuard {
    pub max_states: u128,
}

impl Default for EnumerationGuard {
    fn default() -> Self {
        EnumerationGuard {
            max_states: 1 << 24,
        }
    }
}

impl EnumerationGuard {
    /// Guard admitting up to `2^bits` states.
    pub fn from_bits(bits: u32) -> Self {
        EnumerationGuard {
            max_states: 1u128 << bits.min(100),
        }
    }

    /// Checks `(k+1)^n` against the cap and returns it on success.
    pub fn admit(&self, n: usize, k: usize) -> Result<u64> {
        let states = state_count(n, k).unwrap_or(u128::MAX);
        if states > self.max_states {
            return Err(KsubError::GuardExceeded {
                states,
                max_states: self.max_states,
            });
        }
        Ok(states as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn index_roundtrip_small() {
        let v = OrthantVector::from_digits(vec![2, 0, 1], 2).unwrap();
        assert_eq!(v.index(), 2 + 0 * 3 + 1 * 9);
        let w = OrthantVector::from_index(v.index(), 3, 2);
        assert_eq!(v, w);
    }

    #[test]
    fn item_zero_is_least_significant() {
        // Digit of item 0 moves the index by 1.
        let a = OrthantVector::from_digits(vec![0, 1], 3).unwrap();
        let b = OrthantVector::from_digits(vec![1, 1], 3).unwrap();
        assert_eq!(b.index(), a.index() + 1);
    }

    #[test]
    fn partial_order() {
        let lo = OrthantVector::from_digits(vec![0, 2, 0], 2).unwrap();
        let hi = OrthantVector::from_digits(vec![1, 2, 0], 2).unwrap();
        let other = OrthantVector::from_digits(vec![1, 1, 0], 2).unwrap();
        assert!(lo.le(&hi));
        assert!(!hi.le(&lo));
        assert!(!lo.le(&other)); // item 1 switched parts
    }

    #[test]
    fn guard_refuses_large_spaces() {
        let guard = EnumerationGuard::default();
        assert!(guard.admit(8, 3).is_ok());
        assert!(matches!(
            guard.admit(30, 3),
            Err(KsubError::GuardExceeded { .. })
        ));
    }

    proptest! {
        #[test]
        fn index_roundtrip(n in 1usize..8, k in 1usize..4, seed in 0u64..1000) {
            let total = state_count(n, k).unwrap();
            let idx = (seed as u128) % total;
            let v = OrthantVector::from_index(idx, n, k);
            prop_assert_eq!(v.index(), idx);
            prop_assert_eq!(v.n(), n);
        }
    }
}
