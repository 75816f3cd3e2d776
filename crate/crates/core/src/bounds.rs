//! Generalization-error bounds for clipped ERM over couple-label data.
//!
//! Notation: `L` Lipschitz constant of the margin loss, `B` its supremum on
//! `[-M, M]`, `B0 > B`, `V` and `beta` the variance-bound constants, `Lambda^2`
//! the largest sum of squared couple scores, `S` the sample size and `|E2|`
//! the number of couples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{CoupleMeasure, DistributionError, DistributionSpec};
use crate::extended::{ln_cosh, ExtReal};
use crate::graph::{couple_count, couples};
use crate::optim::{minimize, Objective, OptimError, OptimOptions};
use crate::spaces::{
    accumulate_distance_gradient, distance_unchecked, regular_polygon, Embedding, GFunc,
    GeometryError, SpaceKind, SpaceSpec,
};

#[derive(Debug, Error, PartialEq)]
pub enum BoundError {
    #[error("invalid bound inputs: {0}")]
    InvalidInputs(String),
    #[error("the euclidean_lemma mode applies to Euclidean balls only")]
    ModeMismatch,
    #[error("m = {m} exceeds the {couples} couples")]
    CoupleOutOfRange { m: usize, couples: usize },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Scalar constants shared by every rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundInputs {
    pub lip_l: f64,
    pub sup_b: f64,
    pub sup_b0: f64,
    pub var_const: f64,
    pub var_exp: f64,
    pub clip_m: f64,
    pub delta: f64,
    pub erm_eps: f64,
    pub lambda_sq: f64,
}

impl BoundInputs {
    /// Hinge constants with `B0` a hair above `B`.
    pub fn hinge(params: HingeParams, lambda_sq: f64, delta: f64, erm_eps: f64) -> Self {
        BoundInputs {
            lip_l: params.lip_l,
            sup_b: params.sup_b,
            sup_b0: params.sup_b * (1.0 + 1e-9),
            var_const: params.var_const,
            var_exp: params.var_exp,
            clip_m: params.clip_m,
            delta,
            erm_eps,
            lambda_sq,
        }
    }

    pub fn validate(&self) -> Result<(), BoundError> {
        let nonneg = [
            ("lip_l", self.lip_l),
            ("var_const", self.var_const),
            ("clip_m", self.clip_m),
            ("erm_eps", self.erm_eps),
            ("lambda_sq", self.lambda_sq),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(BoundError::InvalidInputs(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(self.sup_b > 0.0 && self.sup_b0 > self.sup_b && self.sup_b0.is_finite()) {
            return Err(BoundError::InvalidInputs(format!(
                "need 0 < sup_b < sup_b0, got {} and {}",
                self.sup_b, self.sup_b0
            )));
        }
        if !(0.0..=1.0).contains(&self.var_exp) {
            return Err(BoundError::InvalidInputs(format!(
                "var_exp must lie in [0, 1], got {}",
                self.var_exp
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(BoundError::InvalidInputs(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }

    fn degenerate(&self) -> bool {
        self.lip_l * self.lambda_sq * self.var_const == 0.0
    }
}

/// Loss constants of the hinge loss under a noise exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HingeParams {
    pub lip_l: f64,
    pub clip_m: f64,
    pub sup_b: f64,
    pub var_exp: f64,
    pub var_const: f64,
}

/// `L = 1, M = 1, B = 2, beta = alpha / (alpha + 1), V = 6 c^beta`
/// (`alpha = inf` gives `beta = 1`).
pub fn hinge_params(alpha: f64, c: f64) -> Result<HingeParams, BoundError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(BoundError::InvalidInputs(format!(
            "noise constant must be positive, got {c}"
        )));
    }
    if !(alpha >= 0.0) {
        return Err(BoundError::InvalidInputs(format!(
            "noise exponent must be >= 0, got {alpha}"
        )));
    }
    let beta = if alpha.is_infinite() {
        1.0
    } else {
        alpha / (alpha + 1.0)
    };
    Ok(HingeParams {
        lip_l: 1.0,
        clip_m: 1.0,
        sup_b: 2.0,
        var_exp: beta,
        var_const: 6.0 * c.powf(beta),
    })
}

/// Whether `mu(|2 eta - 1| < t) <= (c t)^alpha` holds for every `t > 0`
/// (`alpha = inf`: no mass below `3 / c`), checked exactly over the couples.
pub fn noise_exponent_check(dist: &DistributionSpec, alpha: f64, c: f64) -> bool {
    const SLACK: f64 = 1e-12;
    if alpha == 0.0 {
        return true;
    }
    let weights = dist.mu.weights();
    if alpha.is_infinite() {
        // Relative slack absorbs the rounding in `|2 eta - 1|`.
        let t = 3.0 / c * (1.0 - 1e-12);
        let mass: f64 = weights
            .iter()
            .zip(dist.margins())
            .filter(|(_, a)| *a < t)
            .map(|(w, _)| w)
            .sum();
        return mass <= SLACK;
    }
    let mut pairs: Vec<(f64, f64)> = dist.margins().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Just above each distinct margin value the left side has absorbed it.
    let mut mass = 0.0;
    let mut k = 0;
    while k < pairs.len() {
        let a = pairs[k].0;
        while k < pairs.len() && pairs[k].0 == a {
            mass += pairs[k].1;
            k += 1;
        }
        if mass > (c * a).powf(alpha) + SLACK {
            return false;
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// Every couple at the worst score in the ball.
    WorstMetric,
    /// `(|V| / 8) (2R)^(2q)`, Euclidean balls.
    EuclideanLemma,
    /// Best configuration found by multi-restart ascent (a lower bound).
    NumericEstimate,
}

/// Upper bounds (or, for `NumericEstimate`, an attained value) of
/// `max_phi sum_couples (g(tau) - g(d))^2`.
pub fn lambda_sq(
    mode: LambdaMode,
    space: &SpaceSpec,
    g: &GFunc,
    nvertices: usize,
    opts: &OptimOptions,
) -> Result<f64, BoundError> {
    g.validate_for(space)?;
    let diam = g.eval(2.0 * space.radius);
    let tau = g.eval(g.threshold);
    match mode {
        LambdaMode::WorstMetric => {
            Ok(couple_count(nvertices) as f64 * (diam - tau).max(tau).powi(2))
        }
        LambdaMode::EuclideanLemma => match space.kind {
            SpaceKind::Euclidean => Ok(nvertices as f64 / 8.0 * diam * diam),
            SpaceKind::Hyperbolic => Err(BoundError::ModeMismatch),
        },
        LambdaMode::NumericEstimate => lambda_sq_estimate(space, g, nvertices, opts),
    }
}

/// `-sum_couples (g(tau) - g(d))^2`.
struct NegSquaredScores {
    n: usize,
    g: GFunc,
}

impl Objective for NegSquaredScores {
    fn vertex_count(&self) -> usize {
        self.n
    }

    fn value_and_grad(&self, emb: &Embedding, grad: &mut [f64]) -> f64 {
        let kind = emb.space().kind;
        let k = emb.space().ambient_dim();
        grad.iter_mut().for_each(|v| *v = 0.0);
        let mut total = 0.0;
        for (i, j) in couples(self.n) {
            let (a, b) = (emb.point(i), emb.point(j));
            let d = distance_unchecked(kind, a, b);
            let h = self.g.score(d);
            total -= h * h;
            let coef = 2.0 * h * self.g.derivative(d);
            accumulate_distance_gradient(kind, a, b, d, coef, &mut grad[i * k..(i + 1) * k]);
            accumulate_distance_gradient(kind, b, a, d, coef, &mut grad[j * k..(j + 1) * k]);
        }
        total
    }
}

fn sum_squared_scores(emb: &Embedding, g: &GFunc) -> f64 {
    emb.couple_distances()
        .iter()
        .map(|&d| g.score(d).powi(2))
        .sum()
}

fn lambda_sq_estimate(
    space: &SpaceSpec,
    g: &GFunc,
    n: usize,
    opts: &OptimOptions,
) -> Result<f64, BoundError> {
    if n < 2 {
        return Ok(0.0);
    }
    let obj = NegSquaredScores { n, g: *g };
    let ascent = minimize(space, &obj, opts, None)?
        .map(|m| -m.overall_best().0)
        .unwrap_or(0.0);
    // Witnesses: points on the boundary sphere, and two antipodal clusters.
    let polygon = sum_squared_scores(&regular_polygon(space, n, space.radius), g);
    let mut clusters = regular_polygon(space, 2, space.radius).coords().to_vec();
    let k = space.ambient_dim();
    let (p, q) = (clusters[..k].to_vec(), clusters[k..].to_vec());
    clusters.clear();
    for i in 0..n {
        clusters.extend_from_slice(if i % 2 == 0 { &p } else { &q });
    }
    let antipodal = sum_squared_scores(
        &Embedding::new(*space, clusters.chunks(k).map(<[f64]>::to_vec).collect())?,
        g,
    );
    Ok(ascent.max(polygon).max(antipodal))
}

fn validate_sample_size(s: f64) -> Result<(), BoundError> {
    if !(s >= 1.0 && s.is_finite()) {
        return Err(BoundError::InvalidInputs(format!(
            "sample size must be >= 1, got {s}"
        )));
    }
    Ok(())
}

/// `zeta_m(r) = 2L sqrt(2 Lambda^2 (V r^beta m / (4 Lambda^2) + P(|E2| - m)))`;
/// `cumulative` is `P(0..=|E2|)` from [`CoupleMeasure::cumulative_smallest`].
/// `r = inf` is allowed.
pub fn zeta_m(
    r: f64,
    m: usize,
    inputs: &BoundInputs,
    cumulative: &[f64],
) -> Result<f64, BoundError> {
    let total = cumulative.len() - 1;
    if m > total {
        return Err(BoundError::CoupleOutOfRange { m, couples: total });
    }
    if inputs.degenerate() {
        return Ok(0.0);
    }
    let p = cumulative[total - m];
    let local = if m == 0 {
        0.0
    } else {
        inputs.var_const * r.powf(inputs.var_exp) * m as f64 / 2.0
    };
    Ok(2.0 * inputs.lip_l * (local + 2.0 * inputs.lambda_sq * p).sqrt())
}

/// Positive solution of `r = 30 zeta_m(r) / sqrt(S)`.
///
/// With `K = 60 L / sqrt(S)`, `A = V m / 2` and `C = 2 Lambda^2 P(|E2| - m)`
/// the equation reads `r^(2-beta) = K^2 A + K^2 C r^(-beta)`, whose right
/// side decreases in `r`; the root is bracketed within a factor 2 and found
/// by bisection on `ln r`.
pub fn solve_rate_m(
    s: f64,
    m: usize,
    inputs: &BoundInputs,
    cumulative: &[f64],
) -> Result<f64, BoundError> {
    validate_sample_size(s)?;
    let total = cumulative.len() - 1;
    if m > total {
        return Err(BoundError::CoupleOutOfRange { m, couples: total });
    }
    if inputs.degenerate() {
        return Ok(0.0);
    }
    let beta = inputs.var_exp;
    let k2 = 3600.0 * inputs.lip_l * inputs.lip_l / s;
    let a = if m == 0 {
        0.0
    } else {
        inputs.var_const * m as f64 / 2.0
    };
    let c = 2.0 * inputs.lambda_sq * cumulative[total - m];
    let e = 1.0 / (2.0 - beta);
    if a == 0.0 {
        return Ok((k2 * c).sqrt());
    }
    if c == 0.0 {
        return Ok((k2 * a).powf(e));
    }
    let gap = |r: f64| r.powf(2.0 - beta) - k2 * a - k2 * c * r.powf(-beta);
    let mut lo = (k2 * a).powf(e).max((k2 * c).sqrt());
    let mut hi = (2.0 * k2 * a).powf(e).max((2.0 * k2 * c).sqrt());
    debug_assert!(gap(lo) <= 0.0 && gap(hi) >= 0.0);
    for _ in 0..200 {
        let mid = (0.5 * (lo.ln() + hi.ln())).exp();
        if gap(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The closed form `3 (1800 |E2| L^2 V / S)^(1 / (2 - beta))`, three times the
/// `m = |E2|` fixed point.
pub fn rate_full_closed(s: f64, inputs: &BoundInputs, n_couples: usize) -> f64 {
    3.0 * rate_full_fixed_point(s, inputs, n_couples)
}

/// `(1800 |E2| L^2 V / S)^(1 / (2 - beta))`: the `m = |E2|` fixed point.
pub fn rate_full_fixed_point(s: f64, inputs: &BoundInputs, n_couples: usize) -> f64 {
    (1800.0 * n_couples as f64 * inputs.lip_l.powi(2) * inputs.var_const / s)
        .powf(1.0 / (2.0 - inputs.var_exp))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GlobalBound {
    /// `4 L Lambda sqrt(2 / S)`.
    pub r0: f64,
    /// `B0 sqrt(ln(1/delta) / S)`.
    pub minor: f64,
    pub total: f64,
}

pub fn bound_global(s: f64, inputs: &BoundInputs) -> Result<GlobalBound, BoundError> {
    inputs.validate()?;
    validate_sample_size(s)?;
    let r0 = 4.0 * inputs.lip_l * inputs.lambda_sq.sqrt() * (2.0 / s).sqrt();
    let minor = inputs.sup_b0 * ((1.0 / inputs.delta).ln() / s).sqrt();
    Ok(GlobalBound {
        r0,
        minor,
        total: r0 + minor + inputs.erm_eps,
    })
}

/// `3 (72 (B^(2-beta) v L^2 V) ln(3/delta) / S)^(1/(2-beta))`.
pub fn minor_a(s: f64, inputs: &BoundInputs) -> f64 {
    let beta = inputs.var_exp;
    let lead = inputs
        .sup_b
        .powf(2.0 - beta)
        .max(inputs.lip_l.powi(2) * inputs.var_const);
    3.0 * (72.0 * lead * (3.0 / inputs.delta).ln() / s).powf(1.0 / (2.0 - beta))
}

/// `15 B0 ln(3/delta) / S`.
pub fn minor_b(s: f64, inputs: &BoundInputs) -> f64 {
    15.0 * inputs.sup_b0 * (3.0 / inputs.delta).ln() / s
}

/// Couple counts `m` at which the local rate is evaluated.
pub const FULL_M_SWEEP_LIMIT: usize = 20_000;

pub fn m_grid(n_couples: usize) -> Vec<usize> {
    if n_couples <= FULL_M_SWEEP_LIMIT {
        return (0..=n_couples).collect();
    }
    let mut grid = vec![0, n_couples];
    let mut m = n_couples;
    while m > 0 {
        grid.push(m);
        m /= 2;
    }
    grid.sort_unstable();
    grid.dedup();
    grid
}

/// Local and global rates at one sample size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub s: f64,
    /// `(m, r_m)` over the evaluated grid.
    pub rates: Vec<(usize, f64)>,
    /// Minimizing `m` (smallest on ties).
    pub best_m: usize,
    pub r_min: f64,
    pub r0: f64,
    pub r_full_solved: f64,
    pub r_full_closed: f64,
    pub minor_a: f64,
    pub minor_b: f64,
    /// `max(r_min, a, b) + 3 eps`.
    pub total_local: f64,
    pub total_global: f64,
    pub crossover_s: f64,
}

pub fn bound_local(
    s: f64,
    inputs: &BoundInputs,
    mu: &CoupleMeasure,
) -> Result<RateReport, BoundError> {
    inputs.validate()?;
    validate_sample_size(s)?;
    let cumulative = mu.cumulative_smallest();
    let n_couples = mu.couple_count();
    let rates: Vec<(usize, f64)> = m_grid(n_couples)
        .into_par_iter()
        .map(|m| solve_rate_m(s, m, inputs, &cumulative).map(|r| (m, r)))
        .collect::<Result<_, _>>()?;
    let (best_m, r_min) =
        rates.iter().copied().fold(
            (0, f64::INFINITY),
            |acc, (m, r)| if r < acc.1 { (m, r) } else { acc },
        );
    let a = minor_a(s, inputs);
    let b = minor_b(s, inputs);
    Ok(RateReport {
        s,
        best_m,
        r_min,
        r0: rates[0].1,
        r_full_solved: rates.last().expect("m grid is non-empty").1,
        r_full_closed: rate_full_closed(s, inputs, n_couples),
        minor_a: a,
        minor_b: b,
        total_local: r_min.max(a).max(b) + 3.0 * inputs.erm_eps,
        total_global: bound_global(s, inputs)?.total,
        crossover_s: crossover_s(inputs, n_couples),
        rates,
    })
}

/// Sample size where the `m = 0` and `m = |E2|` fixed points meet:
/// `7200 L^2 Lambda^2 (V |E2| / (4 Lambda^2))^(2/beta)`; `inf` when `beta = 0`.
pub fn crossover_s(inputs: &BoundInputs, n_couples: usize) -> f64 {
    crossover_s_ext(inputs, n_couples).to_f64()
}

pub fn crossover_s_ext(inputs: &BoundInputs, n_couples: usize) -> ExtReal {
    if inputs.var_exp == 0.0 {
        return ExtReal::INFINITY;
    }
    let base = ExtReal::from_f64(inputs.var_const * n_couples as f64 / (4.0 * inputs.lambda_sq));
    ExtReal::from_f64(7200.0 * inputs.lip_l.powi(2) * inputs.lambda_sq)
        * base.powf(2.0 / inputs.var_exp)
}

/// `max eig(sum_c mu_c E_c^2)` for the couple matrices of the old bound.
///
/// Euclidean `E_c^2` has `2` on the two diagonal entries of the couple and
/// `-2` off-diagonal; hyperbolic `E_c^2` has `1/4` on the two diagonal entries.
pub fn edge_matrix_var_norm(kind: SpaceKind, mu: &CoupleMeasure) -> f64 {
    let n = mu.vertex_count();
    let mut m = vec![0.0; n * n];
    for ((i, j), &w) in couples(n).zip(mu.weights()) {
        match kind {
            SpaceKind::Euclidean => {
                m[i * n + i] += 2.0 * w;
                m[j * n + j] += 2.0 * w;
                m[i * n + j] -= 2.0 * w;
                m[j * n + i] -= 2.0 * w;
            }
            SpaceKind::Hyperbolic => {
                m[i * n + i] += 0.25 * w;
                m[j * n + j] += 0.25 * w;
            }
        }
    }
    largest_eigenvalue_psd(&m, n)
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix (row-major)
/// by power iteration, stopping once the Rayleigh quotient is stable and the
/// residual `|Mv - lambda v|` is negligible.
pub fn largest_eigenvalue_psd(m: &[f64], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + ((i as f64 + 1.0) * 0.754_877_666).fract())
        .collect();
    normalize(&mut v);
    let mut w = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..200_000 {
        mat_vec(m, n, &v, &mut w);
        let next: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let residual: f64 = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - next * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        let settled = (next - lambda).abs() <= 1e-15 * next.abs() && residual <= 1e-9 * scale;
        lambda = next;
        if settled {
            break;
        }
        std::mem::swap(&mut v, &mut w);
        if normalize(&mut v) == 0.0 {
            return 0.0;
        }
    }
    lambda
}

fn mat_vec(m: &[f64], n: usize, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = m[i * n..(i + 1) * n]
            .iter()
            .zip(v)
            .map(|(a, b)| a * b)
            .sum();
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Rademacher bound of the spectral (old) analysis, with its ingredients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OldBound {
    pub value: ExtReal,
    pub omega: ExtReal,
    pub sigma: f64,
    pub var_norm: f64,
}

fn old_bound_constants(kind: SpaceKind, radius: f64) -> (ExtReal, f64) {
    match kind {
        SpaceKind::Euclidean => (ExtReal::from_f64(4.0 * radius * radius), 2.0),
        // cosh^2 R + sinh^2 R = cosh 2R
        SpaceKind::Hyperbolic => (ExtReal::from_ln(ln_cosh(2.0 * radius)), 0.5),
    }
}

/// `(omega(R)/S) L_g2 |V| (sqrt(2 S |E|_var ln|V|) + (sigma/3) ln|V|)`.
pub fn old_bound_rc(
    kind: SpaceKind,
    radius: f64,
    mu: &CoupleMeasure,
    s: f64,
    lip_g2: f64,
) -> Result<OldBound, BoundError> {
    validate_sample_size(s)?;
    let n = mu.vertex_count() as f64;
    let (omega, sigma) = old_bound_constants(kind, radius);
    let var_norm = edge_matrix_var_norm(kind, mu);
    let ln_n = n.ln();
    let inner = (2.0 * s * var_norm * ln_n).sqrt() + sigma / 3.0 * ln_n;
    Ok(OldBound {
        value: omega / s * (lip_g2 * n * inner),
        omega,
        sigma,
        var_norm,
    })
}

/// Smallest `S` for which `2 RC_old(S) + B0 sqrt(ln(1/delta)/S) <= target`.
/// In `u = 1/sqrt(S)` this is `a u^2 + b u <= target`.
pub fn old_bound_sample_threshold(
    kind: SpaceKind,
    radius: f64,
    mu: &CoupleMeasure,
    lip_g2: f64,
    sup_b0: f64,
    delta: f64,
    target: f64,
) -> Result<ExtReal, BoundError> {
    if !(target > 0.0) {
        return Err(BoundError::InvalidInputs(format!(
            "target must be positive, got {target}"
        )));
    }
    let n = mu.vertex_count() as f64;
    let (omega, sigma) = old_bound_constants(kind, radius);
    let var_norm = edge_matrix_var_norm(kind, mu);
    let ln_n = n.ln();
    let scale = omega * (2.0 * lip_g2 * n);
    let a = scale * (sigma / 3.0 * ln_n);
    let b = scale * (2.0 * var_norm * ln_n).sqrt()
        + ExtReal::from_f64(sup_b0 * (1.0 / delta).ln().sqrt());
    let t = ExtReal::from_f64(target);
    // u = 2t / (b + sqrt(b^2 + 4 a t))
    let u = t * 2.0 / (b + (b * b + a * t * 4.0).sqrt());
    Ok(ExtReal::ONE / (u * u))
}

/// How the factor `q (2R)^(q-1)` enters the crossover thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzConvention {
    /// `q (2R)^(q-1)`.
    Printed,
    /// `(2R)^(q-1)`.
    DropLeadingQ,
}

/// Sample sizes beyond which hyperbolic CERM provably beats every Euclidean
/// CERM in the plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CrossoverThresholds {
    pub n0: ExtReal,
    pub n_full: ExtReal,
    pub n_minor: ExtReal,
    /// `min(n0, n_full) v n_minor`; zero when `v_min = 0`.
    pub threshold: ExtReal,
    pub v_min: usize,
}

pub fn crossover_thresholds(
    radius: f64,
    q: f64,
    n_couples: usize,
    xi: f64,
    v_min: usize,
    delta: f64,
    convention: LipschitzConvention,
) -> Result<CrossoverThresholds, BoundError> {
    if !(radius > 0.0 && q >= 1.0 && xi > 0.0 && xi <= 1.0 && delta > 0.0 && delta < 1.0) {
        return Err(BoundError::InvalidInputs(format!(
            "need R > 0, q >= 1, xi in (0, 1], delta in (0, 1); got R={radius}, q={q}, xi={xi}, delta={delta}"
        )));
    }
    if v_min == 0 {
        return Ok(CrossoverThresholds {
            n0: ExtReal::ZERO,
            n_full: ExtReal::ZERO,
            n_minor: ExtReal::ZERO,
            threshold: ExtReal::ZERO,
            v_min,
        });
    }
    let two_r = ExtReal::from_f64(2.0 * radius);
    let mut lip = two_r.powf(q - 1.0);
    if convention == LipschitzConvention::Printed {
        lip = lip * q;
    }
    let lip2 = lip * lip;
    let e2 = ExtReal::from_f64(n_couples as f64);
    let e2sq = e2 * e2;
    let v = ExtReal::from_f64(v_min as f64);
    let xi2 = ExtReal::from_f64(xi * xi);
    let n0 = lip2 * e2sq * 97200.0 / (xi2 * v);
    let n_full = lip2 * e2sq * (32.0 * radius * radius) / (xi2 * v * v);
    let n_minor = ExtReal::from_f64(3888.0 * (3.0 / delta).ln()) / (xi2 * v);
    Ok(CrossoverThresholds {
        n0,
        n_full,
        n_minor,
        threshold: n0.min(n_full).max(n_minor),
        v_min,
    })
}
