//! Couple measures and couple-label distributions over a finite entity set.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;
use thiserror::Error;

use crate::graph::{couple_count, couple_index, couples, graph_labels, Graph, Label};

#[derive(Debug, Error, PartialEq)]
pub enum DistributionError {
    #[error("invalid couple weights: {0}")]
    InvalidWeights(String),
    #[error("expected {expected} entries, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("posterior must lie in [0, 1], got {0}")]
    InvalidPosterior(f64),
    #[error("margin must lie in [0, 1], got {0}")]
    InvalidMargin(f64),
    #[error("k = {k} exceeds the {couples} couples")]
    OutOfRange { k: usize, couples: usize },
}

const SUM_TOL: f64 = 1e-12;

/// Probability measure over the couples of `n` entities, stored in
/// lexicographic couple order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoupleMeasure {
    n: usize,
    weights: Vec<f64>,
}

impl CoupleMeasure {
    pub fn new(n: usize, weights: Vec<f64>) -> Result<Self, DistributionError> {
        let expected = couple_count(n);
        if weights.len() != expected {
            return Err(DistributionError::SizeMismatch {
                expected,
                got: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(DistributionError::InvalidWeights(format!(
                "weight {w} is not a probability"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOL * (1.0 + expected as f64).sqrt() {
            return Err(DistributionError::InvalidWeights(format!(
                "weights sum to {total}"
            )));
        }
        Ok(CoupleMeasure { n, weights })
    }

    /// Normalizes non-negative masses to a probability.
    pub fn from_masses(n: usize, masses: Vec<f64>) -> Result<Self, DistributionError> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(DistributionError::InvalidWeights(format!(
                "total mass {total}"
            )));
        }
        Self::new(n, masses.into_iter().map(|m| m / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self, DistributionError> {
        let m = couple_count(n);
        if m == 0 {
            return Err(DistributionError::InvalidWeights(
                "fewer than two entities".into(),
            ));
        }
        Ok(CoupleMeasure {
            n,
            weights: vec![1.0 / m as f64; m],
        })
    }

    /// Uniform on the given couples.
    pub fn uniform_on(n: usize, support: &[(usize, usize)]) -> Result<Self, DistributionError> {
        let mut masses = vec![0.0; couple_count(n)];
        for &(i, j) in support {
            if i == j || i.max(j) >= n {
                return Err(DistributionError::InvalidWeights(format!(
                    "({i}, {j}) is not a couple"
                )));
            }
            masses[couple_index(n, i, j)] = 1.0;
        }
        Self::from_masses(n, masses)
    }

    pub fn point_mass(n: usize, i: usize, j: usize) -> Result<Self, DistributionError> {
        Self::uniform_on(n, &[(i, j)])
    }

    /// Random measure with i.i.d. exponential masses (flat Dirichlet).
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self, DistributionError> {
        let masses = (0..couple_count(n)).map(|_| Exp1.sample(rng)).collect();
        Self::from_masses(n, masses)
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn couple_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[couple_index(self.n, i, j)]
    }

    /// `P(k)`: total mass of the `k` lightest couples.
    pub fn sum_probability(&self, k: usize) -> Result<f64, DistributionError> {
        if k > self.weights.len() {
            return Err(DistributionError::OutOfRange {
                k,
                couples: self.weights.len(),
            });
        }
        Ok(self.cumulative_smallest()[k])
    }

    /// `P(0), P(1), ..., P(|E2|)`, with `P(|E2|) = 1` exactly.
    pub fn cumulative_smallest(&self) -> Vec<f64> {
        let mut sorted = self.weights.clone();
        sorted.sort_by(f64::total_cmp);
        let mut out = Vec::with_capacity(sorted.len() + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for w in sorted {
            acc += w;
            out.push(acc);
        }
        *out.last_mut().expect("non-empty") = 1.0;
        out
    }
}

/// Marginal over couples plus the posterior `eta(x) = P(y = +1 | x)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistributionSpec {
    pub mu: CoupleMeasure,
    pub eta: Vec<f64>,
    /// Set when `eta = (1 + xi * y*) / 2` for a true labelling `y*`.
    pub margin_xi: Option<f64>,
}

impl DistributionSpec {
    pub fn with_posterior(mu: CoupleMeasure, eta: Vec<f64>) -> Result<Self, DistributionError> {
        if eta.len() != mu.couple_count() {
            return Err(DistributionError::SizeMismatch {
                expected: mu.couple_count(),
                got: eta.len(),
            });
        }
        if let Some(&e) = eta.iter().find(|e| !(**e >= 0.0 && **e <= 1.0)) {
            return Err(DistributionError::InvalidPosterior(e));
        }
        Ok(DistributionSpec {
            mu,
            eta,
            margin_xi: None,
        })
    }

    /// `eta = (1 + xi * y*) / 2` for the given true labels.
    pub fn from_labels(
        mu: CoupleMeasure,
        labels: &[Label],
        xi: f64,
    ) -> Result<Self, DistributionError> {
        if !(0.0..=1.0).contains(&xi) {
            return Err(DistributionError::InvalidMargin(xi));
        }
        let eta = labels
            .iter()
            .map(|y| 0.5 * (1.0 + xi * y.value()))
            .collect();
        let mut d = Self::with_posterior(mu, eta)?;
        d.margin_xi = Some(xi);
        Ok(d)
    }

    /// Margin distribution whose true labels are the graph's edges.
    pub fn margin(graph: &Graph, mu: CoupleMeasure, xi: f64) -> Result<Self, DistributionError> {
        if mu.vertex_count() != graph.vertex_count() {
            return Err(DistributionError::SizeMismatch {
                expected: graph.vertex_count(),
                got: mu.vertex_count(),
            });
        }
        Self::from_labels(mu, &graph_labels(graph), xi)
    }

    pub fn vertex_count(&self) -> usize {
        self.mu.vertex_count()
    }

    /// `|2 eta - 1|` per couple.
    pub fn margins(&self) -> impl Iterator<Item = f64> + '_ {
        self.eta.iter().map(|e| (2.0 * e - 1.0).abs())
    }

    /// A Bayes classifier `sign(2 eta - 1)` (ties go to `Similar`).
    pub fn bayes_labels(&self) -> Vec<Label> {
        self.eta
            .iter()
            .map(|&e| {
                if e >= 0.5 {
                    Label::Similar
                } else {
                    Label::Dissimilar
                }
            })
            .collect()
    }

    /// Couples in lexicographic order, aligned with `mu` and `eta`.
    pub fn couples(&self) -> impl Iterator<Item = (usize, usize)> {
        couples(self.vertex_count())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sum_probability_examples() {
        let mu = CoupleMeasure::uniform(3).unwrap();
        assert!((mu.sum_probability(2).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(mu.sum_probability(0).unwrap(), 0.0);
        assert_eq!(mu.sum_probability(3).unwrap(), 1.0);
        assert!(mu.sum_probability(4).is_err());
    }

    #[test]
    fn measure_validation() {
        assert!(CoupleMeasure::new(3, vec![0.5, 0.5]).is_err());
        assert!(CoupleMeasure::new(3, vec![0.5, 0.6, -0.1]).is_err());
        assert!(CoupleMeasure::new(3, vec![0.5, 0.4, 0.0]).is_err());
        let pm = CoupleMeasure::point_mass(4, 2, 1).unwrap();
        assert_eq!(pm.weight(1, 2), 1.0);
        assert_eq!(pm.sum_probability(5).unwrap(), 0.0);
    }

    #[test]
    fn margin_posterior() {
        let g = Graph::new(3, [(0, 1)]).unwrap();
        let d = DistributionSpec::margin(&g, CoupleMeasure::uniform(3).unwrap(), 0.5).unwrap();
        assert_eq!(d.eta, vec![0.75, 0.25, 0.25]);
        assert!(d.margins().all(|m| (m - 0.5).abs() < 1e-15));
        assert_eq!(d.bayes_labels(), graph_labels(&g));
        assert!(DistributionSpec::margin(&g, CoupleMeasure::uniform(3).unwrap(), 1.5).is_err());
    }

    proptest! {
        #[test]
        fn sum_probability_has_nondecreasing_increments(seed in any::<u64>(), n in 2usize..12) {
            let mu = CoupleMeasure::random(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let p = mu.cumulative_smallest();
            for k in 0..p.len().saturating_sub(2) {
                prop_assert!(p[k + 1] - p[k] <= p[k + 2] - p[k + 1] + 1e-15);
            }
            prop_assert!(p.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
