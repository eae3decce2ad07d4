//! Probability measures on the positive integers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nonnegative weights on `{1, 2, ...}` summing to one, stored sparsely.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    weights: BTreeMap<u64, f64>,
}

impl EmpiricalMeasure {
    /// Normalise arbitrary nonnegative weights. Zero weights are dropped.
    pub fn new(weights: impl IntoIterator<Item = (u64, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (state, w) in weights {
            if state == 0 {
                return Err(Error::InvalidInput(
                    "measures live on the positive integers; state 0 given".into(),
                ));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "weight at state {state} is {w}"
                )));
            }
            if w > 0.0 {
                *map.entry(state).or_insert(0.0) += w;
            }
        }
        let total: f64 = map.values().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("measure has no mass".into()));
        }
        for w in map.values_mut() {
            *w /= total;
        }
        Ok(Self { weights: map })
    }

    pub fn dirac(state: u64) -> Self {
        assert!(state >= 1, "dirac mass at state 0");
        Self {
            weights: BTreeMap::from([(state, 1.0)]),
        }
    }

    /// Dense weights where `dense[k]` is the weight of state `k + 1`.
    pub fn from_dense(dense: &[f64]) -> Result<Self> {
        Self::new(dense.iter().enumerate().map(|(k, &w)| (k as u64 + 1, w)))
    }

    /// Empirical distribution of a set of particle positions.
    pub fn from_positions(positions: &[u64]) -> Result<Self> {
        Self::new(positions.iter().map(|&x| (x, 1.0)))
    }

    pub fn get(&self, state: u64) -> f64 {
        self.weights.get(&state).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.weights.iter().map(|(&k, &w)| (k, w))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn max_state(&self) -> Option<u64> {
        self.weights.keys().next_back().copied()
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    /// `sum_i mu(i) f(i)`.
    pub fn integrate(&self, f: impl Fn(u64) -> f64) -> f64 {
        self.weights.iter().map(|(&k, &w)| w * f(k)).sum()
    }

    /// Dense copy on states `1..=len`, dropping anything above.
    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (&k, &w) in self.weights.range(1..=len as u64) {
            out[k as usize - 1] = w;
        }
        out
    }
}

/// Half the l1 distance between two probability measures; lies in `[0, 1]`.
pub fn tv_distance(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
    0.5 * l1_distance(mu, nu)
}

/// `sum_i |mu(i) - nu(i)|` over the union of supports, i.e. the total
/// variation norm of the signed measure `mu - nu`. Lies in `[0, 2]`.
pub fn l1_distance(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
    let mut a = mu.weights.iter().peekable();
    let mut b = nu.weights.iter().peekable();
    let mut sum = 0.0;
    loop {
        match (a.peek(), b.peek()) {
            (Some(&(&ka, &wa)), Some(&(&kb, &wb))) => {
                if ka == kb {
                    sum += (wa - wb).abs();
                    a.next();
                    b.next();
                } else if ka < kb {
                    sum += wa;
                    a.next();
                } else {
                    sum += wb;
                    b.next();
                }
            }
            (Some(&(_, &wa)), None) => {
                sum += wa;
                a.next();
            }
            (None, Some(&(_, &wb))) => {
                sum += wb;
                b.next();
            }
            (None, None) => break,
        }
    }
    sum.min(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalises_and_rejects_bad_input() {
        let m = EmpiricalMeasure::new([(1, 2.0), (3, 2.0), (5, 0.0)]).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.get(1), 0.5);
        assert!(EmpiricalMeasure::new([(0, 1.0)]).is_err());
        assert!(EmpiricalMeasure::new([(1, -1.0)]).is_err());
        assert!(EmpiricalMeasure::new([(1, f64::NAN)]).is_err());
        assert!(EmpiricalMeasure::new(std::iter::empty()).is_err());
    }

    #[test]
    fn tv_examples() {
        let d1 = EmpiricalMeasure::dirac(1);
        let d2 = EmpiricalMeasure::dirac(2);
        assert_eq!(tv_distance(&d1, &d1), 0.0);
        assert_eq!(tv_distance(&d1, &d2), 1.0);
        assert_eq!(l1_distance(&d1, &d2), 2.0);
    }

    #[test]
    fn tv_of_truncated_geometric() {
        // Truncating geometric(1/2) at n and renormalising scales every
        // kept weight by 1/(1 - 2^-n); the distance is the dropped tail.
        let n = 20;
        let trunc = EmpiricalMeasure::new((1..=n).map(|i| (i, 0.5f64.powi(i as i32)))).unwrap();
        let exact = EmpiricalMeasure::new((1..=200).map(|i| (i, 0.5f64.powi(i as i32)))).unwrap();
        let expected = 0.5f64.powi(n as i32);
        assert!((tv_distance(&trunc, &exact) - expected).abs() < 1e-15);
    }

    #[test]
    fn positions_give_multiples_of_one_over_n() {
        let m = EmpiricalMeasure::from_positions(&[1, 1, 4, 2]).unwrap();
        assert_eq!(m.get(1), 0.5);
        assert_eq!(m.get(4), 0.25);
        assert_eq!(m.to_dense(3), vec![0.5, 0.25, 0.0]);
    }
}
