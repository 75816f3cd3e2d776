//! Couple-label data, exact risks over the finite feature space, and clipped
//! empirical risk minimization.

use rand::distributions::WeightedIndex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

pub use crate::loss::{clip, clipped_hinge, hinge, LossKind, LossSpec};

use crate::distribution::{DistributionError, DistributionSpec};
use crate::graph::{couple_count, couple_index, Label};
use crate::optim::{minimize, CoupleObjective, HingeObjective, OptimError, OptimOptions};
use crate::spaces::{
    Embedding, GFunc, GeometryError, SpaceKind, SpaceSpec, HYPERBOLIC_RADIUS_LIMIT,
};

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample size must be positive")]
    ZeroSampleSize,
    #[error("hyperbolic radius {0} exceeds the supported limit {HYPERBOLIC_RADIUS_LIMIT}")]
    PrecisionEnvelope(f64),
    #[error("embedding has {got} entities, data expects {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("sample ({u}, {v}) is not a couple of {n} entities")]
    BadSample { u: usize, v: usize, n: usize },
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Sample {
    pub u: usize,
    pub v: usize,
    pub label: Label,
}

/// A sequence of labelled couples over `n` entities.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dataset {
    pub n: usize,
    pub items: Vec<Sample>,
    /// Seed the items were drawn with, when sampled.
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn new(n: usize, items: Vec<Sample>) -> Result<Self, LearnError> {
        if let Some(s) = items.iter().find(|s| s.u == s.v || s.u.max(s.v) >= n) {
            return Err(LearnError::BadSample { u: s.u, v: s.v, n });
        }
        Ok(Dataset {
            n,
            items,
            seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `(1/S) sum_s l(y_s, h(x_s))` as a couple objective.
    pub fn objective(&self) -> CoupleObjective {
        let w = 1.0 / self.items.len().max(1) as f64;
        CoupleObjective::from_entries(self.n, self.items.iter().map(|s| (s.u, s.v, s.label, w)))
    }
}

/// `S` i.i.d. draws: a couple from `mu`, then `+1` with probability `eta`.
pub fn sample_dataset(dist: &DistributionSpec, s: usize, seed: u64) -> Result<Dataset, LearnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = sample_with(dist, s, &mut rng)?;
    data.seed = Some(seed);
    Ok(data)
}

pub fn sample_with<R: Rng + ?Sized>(
    dist: &DistributionSpec,
    s: usize,
    rng: &mut R,
) -> Result<Dataset, LearnError> {
    if s == 0 {
        return Err(LearnError::ZeroSampleSize);
    }
    let pairs: Vec<(usize, usize)> = dist.couples().collect();
    let index = WeightedIndex::new(dist.mu.weights())
        .map_err(|e| DistributionError::InvalidWeights(e.to_string()))?;
    let items = (0..s)
        .map(|_| {
            let c = rng.sample(&index);
            let label = if rng.gen::<f64>() < dist.eta[c] {
                Label::Similar
            } else {
                Label::Dissimilar
            };
            Sample {
                u: pairs[c].0,
                v: pairs[c].1,
                label,
            }
        })
        .collect();
    Ok(Dataset {
        n: dist.vertex_count(),
        items,
        seed: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Risks {
    pub expected: f64,
    pub clipped_expected: f64,
    pub bayes: f64,
    /// `clipped_expected - bayes`.
    pub excess: f64,
}

/// Bayes risk of the clipped hinge: `sum_x mu(x) (1 - min(M, 1) |2 eta(x) - 1|)`.
pub fn bayes_risk(dist: &DistributionSpec, loss: &LossSpec) -> f64 {
    let m = loss.clip_m.min(1.0);
    dist.mu
        .weights()
        .iter()
        .zip(dist.margins())
        .map(|(w, a)| w * (1.0 - m * a))
        .sum()
}

/// Exact risks of the embedding's scores, summing over every couple.
pub fn risks_exact(
    emb: &Embedding,
    g: &GFunc,
    dist: &DistributionSpec,
    loss: &LossSpec,
) -> Result<Risks, LearnError> {
    if emb.len() != dist.vertex_count() {
        return Err(LearnError::SizeMismatch {
            expected: dist.vertex_count(),
            got: emb.len(),
        });
    }
    Ok(risks_from_distances(&emb.couple_distances(), g, dist, loss))
}

/// Same as [`risks_exact`] from couple distances in lexicographic order.
pub fn risks_from_distances(
    distances: &[f64],
    g: &GFunc,
    dist: &DistributionSpec,
    loss: &LossSpec,
) -> Risks {
    assert_eq!(
        distances.len(),
        dist.mu.couple_count(),
        "one distance per couple"
    );
    let mut expected = 0.0;
    let mut clipped_expected = 0.0;
    for ((&d, &w), &eta) in distances.iter().zip(dist.mu.weights()).zip(&dist.eta) {
        if w == 0.0 {
            continue;
        }
        let h = g.score(d);
        expected += w * (eta * hinge(1.0, h) + (1.0 - eta) * hinge(-1.0, h));
        clipped_expected += w
            * (eta * clipped_hinge(1.0, h, loss.clip_m)
                + (1.0 - eta) * clipped_hinge(-1.0, h, loss.clip_m));
    }
    let bayes = bayes_risk(dist, loss);
    Risks {
        expected,
        clipped_expected,
        bayes,
        excess: clipped_expected - bayes,
    }
}

pub fn empirical_risk(
    emb: &Embedding,
    g: &GFunc,
    data: &Dataset,
    loss: &LossSpec,
    clipped: bool,
) -> Result<f64, LearnError> {
    if data.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    if emb.len() != data.n {
        return Err(LearnError::SizeMismatch {
            expected: data.n,
            got: emb.len(),
        });
    }
    let total: f64 = data
        .items
        .iter()
        .map(|s| loss.eval(s.label.value(), g.score(emb.distance(s.u, s.v)), clipped))
        .sum();
    Ok(total / data.len() as f64)
}

/// Result of [`cerm_train`].
#[derive(Clone, Debug)]
pub struct CermResult {
    pub embedding: Embedding,
    /// Clipped empirical risk of `embedding`.
    pub risk: f64,
    /// `risk` minus the lowest clipped empirical risk seen over all restarts
    /// and the polish run.
    pub eps_hat: f64,
    pub restart_risks: Vec<f64>,
    pub polished_risk: Option<f64>,
}

/// Rejects hyperbolic balls whose coordinates would lose precision.
pub fn check_precision_envelope(space: &SpaceSpec) -> Result<(), LearnError> {
    if space.kind == SpaceKind::Hyperbolic && space.radius > HYPERBOLIC_RADIUS_LIMIT {
        return Err(LearnError::PrecisionEnvelope(space.radius));
    }
    Ok(())
}

/// Multi-restart projected (Riemannian) descent on the clipped empirical risk.
pub fn cerm_train(
    space: &SpaceSpec,
    g: &GFunc,
    data: &Dataset,
    loss: &LossSpec,
    opts: &OptimOptions,
) -> Result<CermResult, LearnError> {
    if data.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    check_precision_envelope(space)?;
    g.validate_for(space)?;
    let couples = data.objective();
    let obj = HingeObjective {
        couples: &couples,
        g: *g,
        clip_m: loss.clip_m,
    };
    let m =
        minimize(space, &obj, opts, None)?.expect("unconstrained runs always report an iterate");
    Ok(CermResult {
        risk: m.value,
        eps_hat: m.eps_hat(),
        restart_risks: m.restart_values.clone(),
        polished_risk: m.polished.as_ref().map(|p| p.0),
        embedding: m.embedding,
    })
}

/// Label counts per couple (lexicographic order): `(positives, negatives)`.
pub fn label_counts(data: &Dataset) -> Vec<(usize, usize)> {
    let mut counts = vec![(0, 0); couple_count(data.n)];
    for s in &data.items {
        let c = &mut counts[couple_index(data.n, s.u, s.v)];
        match s.label {
            Label::Similar => c.0 += 1,
            Label::Dissimilar => c.1 += 1,
        }
    }
    counts
}

/// Minimum clipped empirical risk over a 1-D Euclidean grid, by exhaustive
/// enumeration of every assignment of grid points to entities.
pub fn grid_minimum(
    grid: &[f64],
    g: &GFunc,
    data: &Dataset,
    loss: &LossSpec,
) -> Result<f64, LearnError> {
    if data.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let obj = data.objective();
    let n = data.n;
    let mut idx = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let v = obj.value_at(|i, j| (grid[idx[i]] - grid[idx[j]]).abs(), g, loss.clip_m);
        best = best.min(v);
        let mut k = 0;
        while k < n {
            idx[k] += 1;
            if idx[k] < grid.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == n {
            return Ok(best);
        }
    }
}
