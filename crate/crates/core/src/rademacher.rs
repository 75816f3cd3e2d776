//! Monte-Carlo and exhaustive estimates of the Rademacher complexity of the
//! clipped loss class `{(x, y) -> loss(y, h(x))}`.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bounds::{zeta_m, BoundError, BoundInputs};
use crate::distribution::{CoupleMeasure, DistributionSpec};
use crate::graph::{couple_count, couples, Label};
use crate::learner::{risks_exact, sample_with, Dataset, LearnError, LossSpec};
use crate::optim::{minimize, CoupleObjective, HingeObjective, OptimError, OptimOptions};
use crate::rng;
use crate::spaces::{Embedding, GFunc, SpaceKind, SpaceSpec};

pub const MIN_TRIALS: usize = 30;
/// Largest `|grid|^|V|` the exhaustive estimator enumerates.
pub const GRID_BUDGET: usize = 100_000;
/// Largest number of data tuples averaged exactly.
pub const DATA_BUDGET: usize = 10_000;
/// Fraction of trials allowed to fail before the estimate is rejected.
pub const MAX_DROP_FRACTION: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum RcError {
    #[error("at least {MIN_TRIALS} trials are required, got {0}")]
    TooFewTrials(usize),
    #[error("{dropped} of {trials} trials failed")]
    TooManyDrops { dropped: usize, trials: usize },
    #[error("exhaustive enumeration needs {needed} evaluations, budget is {budget}")]
    Budget { needed: f64, budget: f64 },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SupMethod {
    GradientAscent,
    Exhaustive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RcEstimate {
    pub mean: f64,
    pub std_err: f64,
    /// Trials that entered the mean.
    pub trials: usize,
    pub dropped: usize,
    pub sup_method: SupMethod,
    /// True when the inner supremum is only approached from below, so the
    /// estimate under-approximates the complexity.
    pub lower_estimate: bool,
    /// Per-trial supremum, `None` for dropped trials.
    pub sups: Vec<Option<f64>>,
}

fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Uniform random signs.
pub fn rademacher_signs<R: Rng + ?Sized>(s: usize, rng: &mut R) -> Vec<f64> {
    (0..s)
        .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

/// `(1/S) sum_s sigma_s loss(y_s, h(x_s))` as a couple objective.
pub fn signed_objective(data: &Dataset, signs: &[f64]) -> CoupleObjective {
    let s = data.len() as f64;
    CoupleObjective::from_entries(
        data.n,
        data.items
            .iter()
            .zip(signs)
            .map(|(x, &sg)| (x.u, x.v, x.label, sg / s)),
    )
}

/// Largest signed empirical sum found by multi-restart ascent, optionally
/// restricted to embeddings accepted by `accept`. `None` when no restart
/// produced an accepted embedding.
pub fn ascent_sup(
    space: &SpaceSpec,
    g: &GFunc,
    loss: &LossSpec,
    data: &Dataset,
    signs: &[f64],
    opts: &OptimOptions,
    accept: Option<crate::optim::Accept<'_>>,
) -> Result<Option<f64>, OptimError> {
    let couples = signed_objective(data, signs).negated();
    let obj = HingeObjective {
        couples: &couples,
        g: *g,
        clip_m: loss.clip_m,
    };
    Ok(minimize(space, &obj, opts, accept)?.map(|m| -m.overall_best().0))
}

/// Options for [`rc_monte_carlo`].
#[derive(Clone, Debug, PartialEq)]
pub struct RcOptions {
    pub trials: usize,
    pub seed: u64,
    pub optim: OptimOptions,
    /// Restrict the class to embeddings with exact excess risk at most this.
    pub local_r: Option<f64>,
}

/// Monte-Carlo estimate of `E_{data, sigma} sup_h (1/S) sum sigma_s loss`.
///
/// Trial `t` draws its data, signs and optimizer seed from
/// `rng::stream(seed, t)`; trials run in parallel.
pub fn rc_monte_carlo(
    dist: &DistributionSpec,
    space: &SpaceSpec,
    g: &GFunc,
    loss: &LossSpec,
    s: usize,
    opts: &RcOptions,
) -> Result<RcEstimate, RcError> {
    if opts.trials < MIN_TRIALS {
        return Err(RcError::TooFewTrials(opts.trials));
    }
    if s == 0 {
        return Err(LearnError::ZeroSampleSize.into());
    }
    g.validate_for(space).map_err(LearnError::from)?;
    opts.optim.validate()?;
    let local = opts
        .local_r
        .map(|r| move |e: &Embedding| risks_exact(e, g, dist, loss).is_ok_and(|k| k.excess <= r));
    let accept = local.as_ref().map(|f| f as crate::optim::Accept<'_>);
    let sups: Vec<Option<f64>> = (0..opts.trials)
        .into_par_iter()
        .map(|t| -> Result<Option<f64>, RcError> {
            let mut rng = rng::stream(opts.seed, t as u64);
            let data = sample_with(dist, s, &mut rng)?;
            let signs = rademacher_signs(s, &mut rng);
            let optim = OptimOptions {
                seed: rng.next_u64(),
                ..opts.optim.clone()
            };
            match ascent_sup(space, g, loss, &data, &signs, &optim, accept) {
                Ok(v) => Ok(v),
                Err(OptimError::NonFinite { .. }) => Ok(None),
                Err(e) => Err(e.into()),
            }
        })
        .collect::<Result<_, _>>()?;
    let kept: Vec<f64> = sups.iter().flatten().copied().collect();
    let dropped = sups.len() - kept.len();
    if dropped as f64 > MAX_DROP_FRACTION * opts.trials as f64 {
        return Err(RcError::TooManyDrops {
            dropped,
            trials: opts.trials,
        });
    }
    let (mean, std_err) = mean_and_std_err(&kept);
    Ok(RcEstimate {
        mean,
        std_err,
        trials: kept.len(),
        dropped,
        sup_method: SupMethod::GradientAscent,
        lower_estimate: true,
        sups,
    })
}

/// Losses of every distinct hypothesis of a 1-D grid class.
///
/// Row `e` holds `loss(+1, h_e(c))` and `loss(-1, h_e(c))` for every couple
/// `c`; duplicate rows are removed since only the loss vector matters.
#[derive(Clone, Debug)]
pub struct GridClass {
    n: usize,
    rows: Vec<Vec<f64>>,
}

impl GridClass {
    pub fn new(n: usize, grid: &[f64], g: &GFunc, loss: &LossSpec) -> Result<Self, RcError> {
        if grid.is_empty() || n < 2 {
            return Err(RcError::InvalidInstance(
                "need a non-empty grid and at least two entities".into(),
            ));
        }
        let size = (grid.len() as f64).powi(n as i32);
        if size > GRID_BUDGET as f64 {
            return Err(RcError::Budget {
                needed: size,
                budget: GRID_BUDGET as f64,
            });
        }
        let mut rows = Vec::new();
        let mut idx = vec![0usize; n];
        loop {
            let row: Vec<f64> = couples(n)
                .flat_map(|(i, j)| {
                    let h = g.score((grid[idx[i]] - grid[idx[j]]).abs());
                    [loss.eval(1.0, h, true), loss.eval(-1.0, h, true)]
                })
                .collect();
            rows.push(row);
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
                break;
            }
        }
        rows.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        rows.dedup();
        Ok(GridClass { n, rows })
    }

    pub fn distinct_hypotheses(&self) -> usize {
        self.rows.len()
    }

    fn column(&self, u: usize, v: usize, label: Label) -> usize {
        2 * crate::graph::couple_index(self.n, u, v) + usize::from(label == Label::Dissimilar)
    }

    /// `max_h (1/S) sum_s sigma_s loss(y_s, h(x_s))` over the class.
    pub fn sup(&self, data: &Dataset, signs: &[f64]) -> f64 {
        let mut coef = vec![0.0; 2 * couple_count(self.n)];
        for (x, &sg) in data.items.iter().zip(signs) {
            coef[self.column(x.u, x.v, x.label)] += sg;
        }
        let active: Vec<(usize, f64)> = coef
            .into_iter()
            .enumerate()
            .filter(|(_, c)| *c != 0.0)
            .collect();
        let best = self
            .rows
            .iter()
            .map(|row| active.iter().map(|&(k, c)| c * row[k]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        best / data.len() as f64
    }
}

/// Rademacher complexity of the class of 1-D Euclidean embeddings with every
/// coordinate on `grid`.
///
/// Exact: the supremum is exhaustive and both expectations are finite sums
/// (over sign patterns and over tuples of labelled couples of positive
/// probability, at most [`DATA_BUDGET`] of them).
pub fn rc_brute_force(
    dist: &DistributionSpec,
    grid: &[f64],
    g: &GFunc,
    loss: &LossSpec,
    s: usize,
) -> Result<RcEstimate, RcError> {
    let n = dist.vertex_count();
    if n > 3 || s == 0 || s > 4 {
        return Err(RcError::InvalidInstance(format!(
            "exhaustive estimates need |V| <= 3 and 1 <= S <= 4, got |V| = {n}, S = {s}"
        )));
    }
    let class = GridClass::new(n, grid, g, loss)?;
    let outcomes: Vec<(usize, usize, Label, f64)> = dist
        .couples()
        .zip(dist.mu.weights())
        .zip(&dist.eta)
        .flat_map(|(((u, v), &w), &eta)| {
            [
                (u, v, Label::Similar, w * eta),
                (u, v, Label::Dissimilar, w * (1.0 - eta)),
            ]
        })
        .filter(|o| o.3 > 0.0)
        .collect();
    let sign_patterns: Vec<Vec<f64>> = (0..1usize << s)
        .map(|bits| {
            (0..s)
                .map(|k| if bits >> k & 1 == 1 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect();
    let sign_average = |data: &Dataset| -> f64 {
        sign_patterns
            .iter()
            .map(|sg| class.sup(data, sg))
            .sum::<f64>()
            / sign_patterns.len() as f64
    };
    let tuples = (outcomes.len() as f64).powi(s as i32);
    if tuples > DATA_BUDGET as f64 {
        return Err(RcError::Budget {
            needed: tuples,
            budget: DATA_BUDGET as f64,
        });
    }
    let mut total = 0.0;
    let mut idx = vec![0usize; s];
    loop {
        let items = idx
            .iter()
            .map(|&k| crate::learner::Sample {
                u: outcomes[k].0,
                v: outcomes[k].1,
                label: outcomes[k].2,
            })
            .collect();
        let p: f64 = idx.iter().map(|&k| outcomes[k].3).product();
        total += p * sign_average(&Dataset::new(n, items)?);
        let mut k = 0;
        while k < s {
            idx[k] += 1;
            if idx[k] < outcomes.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == s {
            break;
        }
    }
    Ok(RcEstimate {
        mean: total,
        std_err: 0.0,
        trials: tuples as usize,
        dropped: 0,
        sup_method: SupMethod::Exhaustive,
        lower_estimate: false,
        sups: vec![Some(total)],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalRcRow {
    pub r: f64,
    pub best_m: usize,
    /// `min_m zeta_m(r) / sqrt(S)`.
    pub bound: f64,
}

/// The localized complexity bound `min_m zeta_m(r) / sqrt(S)` for each `r`
/// (`r = inf` allowed).
pub fn local_rc_bound_table(
    inputs: &BoundInputs,
    mu: &CoupleMeasure,
    r_grid: &[f64],
    s: f64,
) -> Result<Vec<LocalRcRow>, RcError> {
    inputs.validate()?;
    if r_grid.is_empty() || r_grid.iter().any(|r| !(*r >= 0.0)) {
        return Err(RcError::InvalidInstance(
            "r grid must be non-empty and non-negative".into(),
        ));
    }
    if !(s >= 1.0) {
        return Err(RcError::InvalidInstance(format!(
            "sample size must be >= 1, got {s}"
        )));
    }
    let cumulative = mu.cumulative_smallest();
    r_grid
        .iter()
        .map(|&r| {
            let mut best = (0, f64::INFINITY);
            for m in 0..=mu.couple_count() {
                let z = zeta_m(r, m, inputs, &cumulative)?;
                if z < best.1 {
                    best = (m, z);
                }
            }
            Ok(LocalRcRow {
                r,
                best_m: best.0,
                bound: best.1 / s.sqrt(),
            })
        })
        .collect()
}

/// `2 L Lambda sqrt(2 / S)`.
pub fn global_rc_bound(inputs: &BoundInputs, s: f64) -> f64 {
    2.0 * inputs.lip_l * inputs.lambda_sq.sqrt() * (2.0 / s).sqrt()
}

/// The embedding space used by [`rc_brute_force`] grids: the 1-D Euclidean
/// ball just containing `grid`.
pub fn grid_space(grid: &[f64]) -> Result<SpaceSpec, RcError> {
    let r = grid.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    SpaceSpec::new(SpaceKind::Euclidean, 1, r.max(f64::MIN_POSITIVE))
        .map_err(|e| RcError::InvalidInstance(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{hinge_params, lambda_sq, LambdaMode};
    use crate::graph::Graph;
    use crate::learner::Sample;
    use approx::assert_relative_eq;

    fn path_dist(n: usize, xi: f64) -> DistributionSpec {
        let g = Graph::new(n, (1..n).map(|i| (i - 1, i))).unwrap();
        DistributionSpec::margin(&g, CoupleMeasure::uniform(n).unwrap(), xi).unwrap()
    }

    fn quick(trials: usize, seed: u64) -> RcOptions {
        RcOptions {
            trials,
            seed,
            optim: OptimOptions {
                restarts: 4,
                steps: 150,
                polish_steps: 50,
                ..OptimOptions::default()
            },
            local_r: None,
        }
    }

    #[test]
    fn singleton_class_is_within_massart() {
        // A tiny ball makes every hypothesis nearly constant.
        let d = path_dist(3, 0.5);
        let space = SpaceSpec::euclidean(1, 1e-6).unwrap();
        let g = GFunc::new(1.0, 0.0).unwrap();
        let loss = LossSpec::default();
        for s in [4, 16, 64] {
            let est = rc_monte_carlo(&d, &space, &g, &loss, s, &quick(60, 3)).unwrap();
            assert!(
                est.mean <= 2.0 * (1.0 / s as f64).sqrt() * 1.1,
                "S={s}: {}",
                est.mean
            );
        }
    }

    #[test]
    fn monte_carlo_is_deterministic_and_flags_lower_estimate() {
        let d = path_dist(3, 0.5);
        let space = SpaceSpec::hyperbolic(2, 2.0).unwrap();
        let g = GFunc::new(1.0, 1.0).unwrap();
        let loss = LossSpec::default();
        let a = rc_monte_carlo(&d, &space, &g, &loss, 8, &quick(30, 9)).unwrap();
        let b = rc_monte_carlo(&d, &space, &g, &loss, 8, &quick(30, 9)).unwrap();
        assert_eq!(a, b);
        assert!(a.lower_estimate && a.std_err >= 0.0 && a.dropped == 0);
        assert!(matches!(
            rc_monte_carlo(&d, &space, &g, &loss, 8, &quick(29, 9)),
            Err(RcError::TooFewTrials(29))
        ));
    }

    #[test]
    fn larger_ball_does_not_shrink_the_estimate() {
        let d = path_dist(4, 0.5);
        let g = GFunc::new(1.0, 1.0).unwrap();
        let loss = LossSpec::default();
        let small = rc_monte_carlo(
            &d,
            &SpaceSpec::euclidean(2, 1.0).unwrap(),
            &g,
            &loss,
            16,
            &quick(100, 1),
        )
        .unwrap();
        let big = rc_monte_carlo(
            &d,
            &SpaceSpec::euclidean(2, 2.0).unwrap(),
            &g,
            &loss,
            16,
            &quick(100, 1),
        )
        .unwrap();
        assert!(
            big.mean >= small.mean - 2.0 * (small.std_err + big.std_err),
            "{} vs {}",
            big.mean,
            small.mean
        );
    }

    #[test]
    fn global_bound_dominates() {
        let loss = LossSpec::default();
        for (n, kind) in [(4, SpaceKind::Euclidean), (4, SpaceKind::Hyperbolic)] {
            let d = path_dist(n, 0.5);
            let space = SpaceSpec::new(kind, 2, 1.0).unwrap();
            let g = GFunc::new(1.0, 1.0).unwrap();
            let lam = lambda_sq(
                LambdaMode::NumericEstimate,
                &space,
                &g,
                n,
                &OptimOptions::default(),
            )
            .unwrap();
            let inputs = BoundInputs::hinge(hinge_params(0.0, 1.0).unwrap(), lam, 0.1, 0.0);
            let est = rc_monte_carlo(&d, &space, &g, &loss, 8, &quick(40, 2)).unwrap();
            assert!(est.mean <= global_rc_bound(&inputs, 8.0) + 3.0 * est.std_err);
        }
    }

    #[test]
    fn grid_sup_matches_single_point_enumeration() {
        // S = 1: sup over the class of sigma * loss(y, h(x)).
        let grid = [-1.0, 0.0, 1.0];
        let g = GFunc::new(1.0, 1.0).unwrap();
        let loss = LossSpec::default();
        let class = GridClass::new(2, &grid, &g, &loss).unwrap();
        // Distances {0, 1, 2} give scores {1, 0, -1}.
        assert_eq!(class.distinct_hypotheses(), 3);
        let one = |label| Dataset::new(2, vec![Sample { u: 0, v: 1, label }]).unwrap();
        assert_eq!(class.sup(&one(Label::Similar), &[1.0]), 2.0);
        assert_eq!(class.sup(&one(Label::Similar), &[-1.0]), 0.0);
        assert_eq!(class.sup(&one(Label::Dissimilar), &[1.0]), 2.0);
        // E_sigma sup = (1/2)(sup loss - inf loss) = 1.
        let d = path_dist(2, 1.0);
        let rc = rc_brute_force(&d, &grid, &g, &loss, 1).unwrap();
        assert_relative_eq!(rc.mean, 1.0, max_relative = 1e-15);
        assert!(!rc.lower_estimate);
    }

    #[test]
    fn zero_width_grid_is_a_singleton() {
        let g = GFunc::new(1.0, 0.5).unwrap();
        let loss = LossSpec::default();
        let d = path_dist(3, 0.4);
        for s in 1..=3 {
            let rc = rc_brute_force(&d, &[0.0], &g, &loss, s).unwrap();
            // A single function has E sum sigma loss = 0.
            assert!(rc.mean.abs() < 1e-15, "S={s}: {}", rc.mean);
        }
    }

    #[test]
    fn brute_force_budget_and_size_checks() {
        let g = GFunc::new(1.0, 1.0).unwrap();
        let loss = LossSpec::default();
        let d = path_dist(3, 0.5);
        let fine: Vec<f64> = (0..=50).map(|k| k as f64 / 25.0 - 1.0).collect();
        assert!(matches!(
            rc_brute_force(&d, &fine, &g, &loss, 2),
            Err(RcError::Budget { .. })
        ));
        assert!(rc_brute_force(&path_dist(4, 0.5), &[0.0, 1.0], &g, &loss, 2).is_err());
        let exact = rc_brute_force(&d, &[-1.0, 0.0, 1.0], &g, &loss, 4).unwrap();
        assert_eq!(exact.trials, 6usize.pow(4));
        assert!(rc_brute_force(&d, &[-1.0, 0.0, 1.0], &g, &loss, 5).is_err());
    }

    #[test]
    fn ascent_reaches_lattice_sup() {
        // With R, tau and the loss kinks on the integer lattice the grid
        // {-1, 0, 1} contains a maximizer of the continuous 1-D class.
        let grid = [-1.0, 0.0, 1.0];
        let g = GFunc::new(1.0, 1.0).unwrap();
        let loss = LossSpec::default();
        let space = grid_space(&grid).unwrap();
        let d = path_dist(3, 0.5);
        let class = GridClass::new(3, &grid, &g, &loss).unwrap();
        let opts = OptimOptions {
            init_fraction: 1.0,
            ..OptimOptions::default()
        };
        for t in 0..20u64 {
            let mut rng = rng::stream(77, t);
            let data = sample_with(&d, 4, &mut rng).unwrap();
            let signs = rademacher_signs(4, &mut rng);
            let exact = class.sup(&data, &signs);
            let found = ascent_sup(
                &space,
                &g,
                &loss,
                &data,
                &signs,
                &OptimOptions {
                    seed: t,
                    ..opts.clone()
                },
                None,
            )
            .unwrap()
            .unwrap();
            assert!(
                found <= exact + 1e-9 && found >= exact - 1e-2,
                "trial {t}: {found} vs {exact}"
            );
        }
    }

    #[test]
    fn local_table_properties() {
        let mu = CoupleMeasure::uniform(5).unwrap();
        let inputs = BoundInputs::hinge(hinge_params(1.0, 2.0).unwrap(), 30.0, 0.1, 0.0);
        let rs = [0.0, 0.01, 0.1, 1.0, 10.0, f64::INFINITY];
        let table = local_rc_bound_table(&inputs, &mu, &rs, 100.0).unwrap();
        for w in table.windows(2) {
            assert!(w[1].bound >= w[0].bound);
        }
        for row in &table {
            assert!(row.best_m == 0 || row.best_m == 10, "{row:?}");
        }
        let last = table.last().unwrap();
        assert_relative_eq!(
            last.bound,
            global_rc_bound(&inputs, 100.0),
            max_relative = 1e-14
        );
        assert!(local_rc_bound_table(&inputs, &mu, &[], 100.0).is_err());
    }

    #[test]
    fn local_restriction_only_keeps_low_excess() {
        // Excess risk ranges over [1/3, 1] on this instance.
        let d = path_dist(3, 0.5);
        let space = SpaceSpec::euclidean(1, 1.0).unwrap();
        let g = GFunc::new(1.0, 1.0).unwrap();
        let loss = LossSpec::default();
        let full = rc_monte_carlo(&d, &space, &g, &loss, 8, &quick(40, 4)).unwrap();
        let opts = RcOptions {
            local_r: Some(0.6),
            ..quick(40, 4)
        };
        let local = rc_monte_carlo(&d, &space, &g, &loss, 8, &opts).unwrap();
        assert!(local.mean <= full.mean + 3.0 * full.std_err);
    }
}
