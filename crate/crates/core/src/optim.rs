//! Weighted couple objectives and the projected Riemannian descent that
//! minimizes them.
//!
//! Every optimization in the crate has the form
//! `F(phi) = sum_c [a+_c l(+1, h_c) + a-_c l(-1, h_c)]` with `h_c` the couple
//! score and `l` the clipped hinge. Empirical risk minimization uses label
//! frequencies as weights; the Rademacher supremum uses negated signed
//! weights.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Label;
use crate::loss::{clipped_hinge, clipped_hinge_slope};
use crate::rng;
use crate::spaces::{
    accumulate_distance_gradient, distance_unchecked, riemannian_grad_norm,
    riemannian_step_in_place, Embedding, GFunc, GeometryError, SpaceSpec,
};

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("objective became non-finite at step {step} of restart {restart}")]
    NonFinite { restart: usize, step: usize },
    #[error("invalid optimizer options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Term {
    i: usize,
    j: usize,
    pos: f64,
    neg: f64,
}

/// Per-couple weights on the `+1` and `-1` losses.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoupleObjective {
    n: usize,
    terms: Vec<Term>,
}

impl CoupleObjective {
    /// Aggregates `(i, j, label, weight)` entries; repeated couples are summed.
    pub fn from_entries<I>(n: usize, entries: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, Label, f64)>,
    {
        let mut acc: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
        for (i, j, y, w) in entries {
            let key = (i.min(j), i.max(j));
            let e = acc.entry(key).or_insert((0.0, 0.0));
            match y {
                Label::Similar => e.0 += w,
                Label::Dissimilar => e.1 += w,
            }
        }
        CoupleObjective {
            n,
            terms: acc
                .into_iter()
                .map(|((i, j), (pos, neg))| Term { i, j, pos, neg })
                .collect(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// `-F`, for turning a maximization into a minimization.
    pub fn negated(&self) -> Self {
        CoupleObjective {
            n: self.n,
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    pos: -t.pos,
                    neg: -t.neg,
                    ..*t
                })
                .collect(),
        }
    }

    pub fn value(&self, emb: &Embedding, g: &GFunc, clip_m: f64) -> f64 {
        self.value_at(|i, j| emb.distance(i, j), g, clip_m)
    }

    /// Objective under an arbitrary distance oracle.
    pub fn value_at<F: Fn(usize, usize) -> f64>(&self, dist: F, g: &GFunc, clip_m: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let h = g.score(dist(t.i, t.j));
                t.pos * clipped_hinge(1.0, h, clip_m) + t.neg * clipped_hinge(-1.0, h, clip_m)
            })
            .sum()
    }

    /// Objective value; the ambient gradient is written into `grad`
    /// (same layout as the embedding coordinates).
    pub fn value_and_grad(&self, emb: &Embedding, g: &GFunc, clip_m: f64, grad: &mut [f64]) -> f64 {
        self.value_and_slope(emb, g, clip_m, grad, false)
    }

    /// Like [`Self::value_and_grad`], except that a term with positive
    /// weight whose score is clipped on the losing side contributes the hinge
    /// subgradient instead of zero, so descent can leave the plateau.
    pub fn value_and_direction(
        &self,
        emb: &Embedding,
        g: &GFunc,
        clip_m: f64,
        grad: &mut [f64],
    ) -> f64 {
        self.value_and_slope(emb, g, clip_m, grad, true)
    }

    fn value_and_slope(
        &self,
        emb: &Embedding,
        g: &GFunc,
        clip_m: f64,
        grad: &mut [f64],
        escape: bool,
    ) -> f64 {
        let slope = |y: f64, h: f64, w: f64| {
            if escape && w > 0.0 && y * h <= -clip_m {
                -y
            } else {
                clipped_hinge_slope(y, h, clip_m)
            }
        };
        let kind = emb.space().kind;
        let k = emb.space().ambient_dim();
        grad.iter_mut().for_each(|v| *v = 0.0);
        let mut total = 0.0;
        for t in &self.terms {
            let (a, b) = (emb.point(t.i), emb.point(t.j));
            let d = distance_unchecked(kind, a, b);
            let h = g.score(d);
            total += t.pos * clipped_hinge(1.0, h, clip_m) + t.neg * clipped_hinge(-1.0, h, clip_m);
            let dl_dh = t.pos * slope(1.0, h, t.pos) + t.neg * slope(-1.0, h, t.neg);
            if dl_dh == 0.0 {
                continue;
            }
            // h = g(tau) - g(d)
            let coef = -dl_dh * g.derivative(d);
            accumulate_distance_gradient(kind, a, b, d, coef, &mut grad[t.i * k..(t.i + 1) * k]);
            accumulate_distance_gradient(kind, b, a, d, coef, &mut grad[t.j * k..(t.j + 1) * k]);
        }
        total
    }
}

/// An almost-everywhere differentiable function of an embedding.
pub trait Objective: Sync {
    fn vertex_count(&self) -> usize;

    /// Value at `emb`; writes the ambient gradient (or another descent
    /// direction where the gradient is uninformative) into `grad`.
    fn value_and_grad(&self, emb: &Embedding, grad: &mut [f64]) -> f64;
}

/// A [`CoupleObjective`] evaluated with the clipped hinge, descending along
/// [`CoupleObjective::value_and_direction`].
#[derive(Clone, Copy, Debug)]
pub struct HingeObjective<'a> {
    pub couples: &'a CoupleObjective,
    pub g: GFunc,
    pub clip_m: f64,
}

impl Objective for HingeObjective<'_> {
    fn vertex_count(&self) -> usize {
        self.couples.vertex_count()
    }

    fn value_and_grad(&self, emb: &Embedding, grad: &mut [f64]) -> f64 {
        self.couples
            .value_and_direction(emb, &self.g, self.clip_m, grad)
    }
}

/// Options of the multi-restart descent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimOptions {
    pub restarts: usize,
    pub steps: usize,
    /// Initial step `eta0`; `None` means `0.1 R`. Step `t` uses `eta0 / sqrt(1 + t)`.
    pub step_size: Option<f64>,
    /// Restarts start uniformly in the ball of radius `init_fraction * R`.
    pub init_fraction: f64,
    /// Steps of the fine polish (`eta0 / 10`) from the best restart.
    pub polish_steps: usize,
    pub seed: u64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            restarts: 8,
            steps: 300,
            step_size: None,
            init_fraction: 0.5,
            polish_steps: 300,
            seed: 0,
        }
    }
}

impl OptimOptions {
    pub fn validate(&self) -> Result<(), OptimError> {
        if self.restarts == 0 {
            return Err(OptimError::InvalidOptions(
                "restarts must be positive".into(),
            ));
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(OptimError::InvalidOptions(format!(
                    "step_size must be positive, got {s}"
                )));
            }
        }
        if !(self.init_fraction > 0.0 && self.init_fraction <= 1.0) {
            return Err(OptimError::InvalidOptions(format!(
                "init_fraction must lie in (0, 1], got {}",
                self.init_fraction
            )));
        }
        Ok(())
    }

    pub fn eta0(&self, space: &SpaceSpec) -> f64 {
        self.step_size.unwrap_or(0.1 * space.radius)
    }
}

/// Outcome of [`minimize`].
#[derive(Clone, Debug)]
pub struct Minimum {
    /// Best iterate of the best restart.
    pub embedding: Embedding,
    pub value: f64,
    pub best_restart: usize,
    /// Best accepted value per restart (`+inf` when a restart had none).
    pub restart_values: Vec<f64>,
    /// Best iterate of the polish run started from `embedding`.
    pub polished: Option<(f64, Embedding)>,
}

impl Minimum {
    /// Lowest value seen anywhere (restarts and polish).
    pub fn overall_best(&self) -> (f64, &Embedding) {
        match &self.polished {
            Some((v, e)) if *v < self.value => (*v, e),
            _ => (self.value, &self.embedding),
        }
    }

    /// `value - overall best`: how far the returned embedding is from the
    /// best objective value found.
    pub fn eps_hat(&self) -> f64 {
        self.value - self.overall_best().0
    }
}

/// Accept-predicate restricting which iterates may be reported.
pub type Accept<'a> = &'a (dyn Fn(&Embedding) -> bool + Sync);

/// Normalized projected descent from `start`: every step moves the point with
/// the largest Riemannian gradient by exactly `eta0 / sqrt(1 + t)` and the
/// rest proportionally. Returns the best accepted iterate.
pub fn descend<O: Objective + ?Sized>(
    obj: &O,
    start: Embedding,
    eta0: f64,
    steps: usize,
    accept: Option<Accept<'_>>,
    restart: usize,
) -> Result<Option<(f64, Embedding)>, OptimError> {
    let space = *start.space();
    let k = space.ambient_dim();
    let n = start.len();
    let mut x = start;
    let mut grad = vec![0.0; n * k];
    let mut best: Option<(f64, Embedding)> = None;
    for t in 0..=steps {
        let v = obj.value_and_grad(&x, &mut grad);
        if !v.is_finite() || grad.iter().any(|c| !c.is_finite()) {
            return Err(OptimError::NonFinite { restart, step: t });
        }
        let improves = best.as_ref().is_none_or(|(b, _)| v < *b);
        if improves && accept.is_none_or(|f| f(&x)) {
            best = Some((v, x.clone()));
        }
        if t == steps {
            break;
        }
        let max_norm = (0..n)
            .map(|i| riemannian_grad_norm(space.kind, x.point(i), &grad[i * k..(i + 1) * k]))
            .fold(0.0, f64::max);
        if max_norm == 0.0 {
            break;
        }
        let scale = eta0 / (1.0 + t as f64).sqrt() / max_norm;
        for i in 0..n {
            riemannian_step_in_place(&space, x.point_mut(i), &grad[i * k..(i + 1) * k], scale)?;
        }
    }
    Ok(best)
}

/// Multi-restart minimization. Restart `r` initializes from
/// `rng::stream(opts.seed, r)`; restarts run in parallel and the winner is
/// the lowest value, ties going to the lower restart index. Returns `None`
/// when no restart produced an accepted iterate.
pub fn minimize<O: Objective + ?Sized>(
    space: &SpaceSpec,
    obj: &O,
    opts: &OptimOptions,
    accept: Option<Accept<'_>>,
) -> Result<Option<Minimum>, OptimError> {
    opts.validate()?;
    space.validate()?;
    let n = obj.vertex_count();
    let eta0 = opts.eta0(space);
    let runs: Vec<Result<Option<(f64, Embedding)>, OptimError>> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(opts.seed, r as u64);
            let start = Embedding::random(*space, n, opts.init_fraction * space.radius, &mut rng);
            descend(obj, start, eta0, opts.steps, accept, r)
        })
        .collect();
    let mut restart_values = Vec::with_capacity(runs.len());
    let mut best: Option<(usize, f64, Embedding)> = None;
    for (r, run) in runs.into_iter().enumerate() {
        match run? {
            Some((v, e)) => {
                restart_values.push(v);
                if best.as_ref().is_none_or(|(_, b, _)| v < *b) {
                    best = Some((r, v, e));
                }
            }
            None => restart_values.push(f64::INFINITY),
        }
    }
    let Some((best_restart, value, embedding)) = best else {
        return Ok(None);
    };
    let polished = if opts.polish_steps > 0 {
        descend(
            obj,
            embedding.clone(),
            eta0 / 10.0,
            opts.polish_steps,
            accept,
            opts.restarts,
        )?
    } else {
        None
    };
    Ok(Some(Minimum {
        embedding,
        value,
        best_restart,
        restart_values,
        polished,
    }))
}
