//! Excess-risk sweep: train CERM on sampled data and compare the measured
//! excess risk with the local bound.

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bounds::{
    bound_local, hinge_params, lambda_sq, noise_exponent_check, BoundError, BoundInputs, LambdaMode,
};
use crate::distribution::DistributionSpec;
use crate::learner::{
    cerm_train, check_precision_envelope, risks_exact, sample_with, LearnError, LossSpec,
};
use crate::optim::OptimOptions;
use crate::rng;
use crate::spaces::{GFunc, SpaceSpec};

pub const MAX_VERTICES: usize = 20;
pub const MAX_SAMPLE_SIZE: usize = 10_000;
pub const MAX_TRIALS: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

/// Noise exponent and constant used for the hinge constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoiseProfile {
    pub alpha: f64,
    pub c: f64,
}

/// The strong low-noise profile `(inf, 3 / min |2 eta - 1|)` when every
/// couple of positive mass has a positive margin, otherwise `(0, 1)`.
pub fn noise_profile(dist: &DistributionSpec) -> NoiseProfile {
    let smallest = dist
        .margins()
        .zip(dist.mu.weights())
        .filter(|(_, w)| **w > 0.0)
        .map(|(a, _)| a)
        .fold(f64::INFINITY, f64::min);
    if smallest > 0.0 && smallest.is_finite() {
        let c = 3.0 / smallest;
        if noise_exponent_check(dist, f64::INFINITY, c) {
            return NoiseProfile {
                alpha: f64::INFINITY,
                c,
            };
        }
    }
    NoiseProfile { alpha: 0.0, c: 1.0 }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub space: SpaceSpec,
    pub g: GFunc,
    pub loss: LossSpec,
    pub sample_sizes: Vec<usize>,
    pub trials: usize,
    /// The bound holds with probability `1 - delta`; the measured excess is
    /// summarized by its empirical `(1 - delta)`-quantile.
    pub delta: f64,
    pub lambda_mode: LambdaMode,
    pub optim: OptimOptions,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrialRow {
    pub s: usize,
    pub trial: usize,
    pub empirical_risk: f64,
    pub excess: f64,
    pub eps_hat: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub s: usize,
    pub excess_quantile: f64,
    pub excess_mean: f64,
    pub max_eps_hat: f64,
    pub bound_local: f64,
    pub bound_global: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub noise: NoiseProfile,
    pub lambda_sq: f64,
    pub trials: Vec<TrialRow>,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }
}

/// Empirical `q`-quantile: the smallest sample value with at least a `q`
/// fraction of the samples at or below it.
pub fn empirical_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[k - 1]
}

impl SweepSpec {
    pub fn validate(&self, dist: &DistributionSpec) -> Result<(), ExperimentError> {
        let n = dist.vertex_count();
        if n > MAX_VERTICES {
            return Err(ExperimentError::Invalid(format!(
                "at most {MAX_VERTICES} entities, got {n}"
            )));
        }
        if self.sample_sizes.is_empty()
            || self
                .sample_sizes
                .iter()
                .any(|&s| s == 0 || s > MAX_SAMPLE_SIZE)
        {
            return Err(ExperimentError::Invalid(format!(
                "sample sizes must lie in 1..={MAX_SAMPLE_SIZE}"
            )));
        }
        if self.trials == 0 || self.trials > MAX_TRIALS {
            return Err(ExperimentError::Invalid(format!(
                "trials must lie in 1..={MAX_TRIALS}"
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ExperimentError::Invalid(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        check_precision_envelope(&self.space)?;
        self.g.validate_for(&self.space).map_err(LearnError::from)?;
        self.optim.validate().map_err(LearnError::from)?;
        Ok(())
    }
}

/// Runs every `(S, trial)` cell in parallel. Cell `(k, t)` draws data and the
/// optimizer seed from `rng::stream(child_seed(seed, k), t)`.
pub fn experiment_excess_risk(
    dist: &DistributionSpec,
    spec: &SweepSpec,
) -> Result<SweepReport, ExperimentError> {
    spec.validate(dist)?;
    let noise = noise_profile(dist);
    let lam = lambda_sq(
        spec.lambda_mode,
        &spec.space,
        &spec.g,
        dist.vertex_count(),
        &spec.optim,
    )?;
    let mut params = hinge_params(noise.alpha, noise.c)?;
    params.clip_m = spec.loss.clip_m;
    params.sup_b = spec.loss.sup();

    let cells: Vec<(usize, usize, usize)> = spec
        .sample_sizes
        .iter()
        .enumerate()
        .flat_map(|(k, &s)| (0..spec.trials).map(move |t| (k, s, t)))
        .collect();
    let trials: Vec<TrialRow> = cells
        .into_par_iter()
        .map(|(k, s, t)| -> Result<TrialRow, ExperimentError> {
            let mut rng = rng::stream(rng::child_seed(spec.seed, k as u64), t as u64);
            let data = sample_with(dist, s, &mut rng)?;
            let optim = OptimOptions {
                seed: rng.next_u64(),
                ..spec.optim.clone()
            };
            let fit = cerm_train(&spec.space, &spec.g, &data, &spec.loss, &optim)?;
            let risks = risks_exact(&fit.embedding, &spec.g, dist, &spec.loss)?;
            Ok(TrialRow {
                s,
                trial: t,
                empirical_risk: fit.risk,
                excess: risks.excess,
                eps_hat: fit.eps_hat,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(spec.sample_sizes.len());
    for (k, &s) in spec.sample_sizes.iter().enumerate() {
        let cell = &trials[k * spec.trials..(k + 1) * spec.trials];
        let excess: Vec<f64> = cell.iter().map(|r| r.excess).collect();
        let max_eps_hat = cell.iter().map(|r| r.eps_hat).fold(0.0, f64::max);
        let inputs = BoundInputs::hinge(params, lam, spec.delta, max_eps_hat);
        let report = bound_local(s as f64, &inputs, &dist.mu)?;
        let excess_quantile = empirical_quantile(&excess, 1.0 - spec.delta);
        rows.push(SweepRow {
            s,
            excess_quantile,
            excess_mean: excess.iter().sum::<f64>() / excess.len() as f64,
            max_eps_hat,
            bound_local: report.total_local,
            bound_global: report.total_global,
            holds: excess_quantile <= report.total_local,
        });
    }
    Ok(SweepReport {
        noise,
        lambda_sq: lam,
        trials,
        rows,
    })
}
