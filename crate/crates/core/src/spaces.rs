//! Euclidean and hyperbolic balls.
//!
//! Hyperbolic points live on the upper sheet of the hyperboloid
//! `-x0^2 + x1^2 + ... + xn^2 = -1`; the ball origin is `(1, 0, ..., 0)`.
//! Distances are evaluated through the radial/angular decomposition
//! `cosh d - 1 = 2 sinh^2((r1 - r2)/2) + sinh r1 sinh r2 |u1 - u2|^2 / 2`,
//! whose terms are all non-negative, so neither nearby nor far-out points
//! suffer cancellation.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extended::{asinh_from_ln, ln_sinh};
use crate::graph::{couple_index, couples, Graph, Label};

/// Relative tolerance of the hyperboloid constraint.
pub const MANIFOLD_TOL: f64 = 1e-9;
/// Absolute slack allowed on `distance-to-origin <= R`.
pub const BALL_TOL: f64 = 1e-9;
/// Largest hyperbolic radius at which embedding coordinates are trusted.
pub const HYPERBOLIC_RADIUS_LIMIT: f64 = 15.0;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid space: {0}")]
    InvalidSpace(String),
    #[error("invalid g function: {0}")]
    InvalidGFunc(String),
    #[error("point has {got} coordinates, space expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point is off the hyperboloid (relative residual {residual:e})")]
    OffManifold { residual: f64 },
    #[error("point at distance {distance} lies outside the ball of radius {radius}")]
    OutsideBall { distance: f64, radius: f64 },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("input is not a tree: {0}")]
    NotATree(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Euclidean,
    Hyperbolic,
}

/// A closed ball of radius `radius` around the origin of `E^dim` or `H^dim`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub kind: SpaceKind,
    pub dim: usize,
    pub radius: f64,
}

impl SpaceSpec {
    pub fn new(kind: SpaceKind, dim: usize, radius: f64) -> Result<Self, GeometryError> {
        let s = SpaceSpec { kind, dim, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn euclidean(dim: usize, radius: f64) -> Result<Self, GeometryError> {
        Self::new(SpaceKind::Euclidean, dim, radius)
    }

    pub fn hyperbolic(dim: usize, radius: f64) -> Result<Self, GeometryError> {
        Self::new(SpaceKind::Hyperbolic, dim, radius)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(GeometryError::InvalidSpace(format!(
                "radius must be finite and positive, got {}",
                self.radius
            )));
        }
        match self.kind {
            SpaceKind::Euclidean if self.dim == 0 => Err(GeometryError::InvalidSpace(
                "Euclidean dimension must be at least 1".into(),
            )),
            SpaceKind::Hyperbolic if self.dim < 2 => Err(GeometryError::InvalidSpace(
                "hyperbolic dimension must be at least 2".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Number of stored coordinates per point.
    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            SpaceKind::Euclidean => self.dim,
            SpaceKind::Hyperbolic => self.dim + 1,
        }
    }

    pub fn origin(&self) -> Vec<f64> {
        let mut o = vec![0.0; self.ambient_dim()];
        if self.kind == SpaceKind::Hyperbolic {
            o[0] = 1.0;
        }
        o
    }

    /// Point at distance `r` from the origin along the unit direction `dir`
    /// (`dir` has `dim` entries).
    pub fn from_polar(&self, r: f64, dir: &[f64]) -> Vec<f64> {
        debug_assert_eq!(dir.len(), self.dim);
        match self.kind {
            SpaceKind::Euclidean => dir.iter().map(|u| r * u).collect(),
            SpaceKind::Hyperbolic => {
                let mut x = Vec::with_capacity(self.dim + 1);
                x.push(r.cosh());
                x.extend(dir.iter().map(|u| r.sinh() * u));
                x
            }
        }
    }

    /// Checks dimension, the hyperboloid constraint and ball membership.
    pub fn check_point(&self, x: &[f64]) -> Result<(), GeometryError> {
        if x.len() != self.ambient_dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.ambient_dim(),
                got: x.len(),
            });
        }
        if self.kind == SpaceKind::Hyperbolic {
            let residual = hyperboloid_residual(x);
            if !(residual <= MANIFOLD_TOL) || x[0] < 1.0 - MANIFOLD_TOL {
                return Err(GeometryError::OffManifold { residual });
            }
        }
        let r = distance_to_origin(self.kind, x);
        if !(r <= self.radius + BALL_TOL) {
            return Err(GeometryError::OutsideBall {
                distance: r,
                radius: self.radius,
            });
        }
        Ok(())
    }
}

/// `g(t) = t^q` together with the space threshold `tau_X`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GFunc {
    pub exponent: f64,
    pub threshold: f64,
}

impl GFunc {
    pub fn new(exponent: f64, threshold: f64) -> Result<Self, GeometryError> {
        if !(exponent >= 1.0 && exponent.is_finite()) {
            return Err(GeometryError::InvalidGFunc(format!(
                "exponent must be >= 1, got {exponent}"
            )));
        }
        if !(threshold >= 0.0 && threshold.is_finite()) {
            return Err(GeometryError::InvalidGFunc(format!(
                "threshold must be >= 0, got {threshold}"
            )));
        }
        Ok(GFunc {
            exponent,
            threshold,
        })
    }

    /// Also checks `tau_X <= 2R`.
    pub fn validate_for(&self, space: &SpaceSpec) -> Result<(), GeometryError> {
        GFunc::new(self.exponent, self.threshold)?;
        if self.threshold > 2.0 * space.radius {
            return Err(GeometryError::InvalidGFunc(format!(
                "threshold {} exceeds the ball diameter {}",
                self.threshold,
                2.0 * space.radius
            )));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        if self.exponent == 1.0 {
            t
        } else {
            t.powf(self.exponent)
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if self.exponent == 1.0 {
            1.0
        } else {
            self.exponent * t.powf(self.exponent - 1.0)
        }
    }

    /// Couple score `g(tau_X) - g(d)`: positive means "similar".
    pub fn score(&self, d: f64) -> f64 {
        self.eval(self.threshold) - self.eval(d)
    }
}

/// Minkowski bilinear form `-a0 b0 + sum_k ak bk`.
pub fn minkowski_dot(a: &[f64], b: &[f64]) -> f64 {
    -a[0] * b[0] + a[1..].iter().zip(&b[1..]).map(|(x, y)| x * y).sum::<f64>()
}

/// `|<x, x>_M + 1| / x0^2`.
pub fn hyperboloid_residual(x: &[f64]) -> f64 {
    let spatial: f64 = x[1..].iter().map(|v| v * v).sum();
    let x0sq = x[0] * x[0];
    ((spatial + 1.0) - x0sq).abs() / x0sq.max(1.0)
}

/// Recomputes `x0` from the spatial part so the constraint holds to rounding.
pub fn renormalize_hyperboloid(x: &mut [f64]) {
    let spatial: f64 = x[1..].iter().map(|v| v * v).sum();
    x[0] = (1.0 + spatial).sqrt();
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn distance_to_origin(kind: SpaceKind, x: &[f64]) -> f64 {
    match kind {
        SpaceKind::Euclidean => norm(x),
        SpaceKind::Hyperbolic => norm(&x[1..]).asinh(),
    }
}

/// `acosh(1 + w)` accurate for small `w`.
fn acosh1p(w: f64) -> f64 {
    (w + (w * (w + 2.0)).sqrt()).ln_1p()
}

/// Distance without validating the inputs.
pub fn distance_unchecked(kind: SpaceKind, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        SpaceKind::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        SpaceKind::Hyperbolic => {
            let (sa, sb) = (&a[1..], &b[1..]);
            let (na, nb) = (norm(sa), norm(sb));
            let dr = na.asinh() - nb.asinh();
            let radial = 2.0 * (0.5 * dr).sinh().powi(2);
            let angular = if na > 0.0 && nb > 0.0 {
                let du2: f64 = sa
                    .iter()
                    .zip(sb)
                    .map(|(x, y)| {
                        let t = x / na - y / nb;
                        t * t
                    })
                    .sum();
                0.5 * na * nb * du2
            } else {
                0.0
            };
            acosh1p(radial + angular)
        }
    }
}

/// Distance between two validated points of `space`.
pub fn distance(space: &SpaceSpec, a: &[f64], b: &[f64]) -> Result<f64, GeometryError> {
    space.check_point(a)?;
    space.check_point(b)?;
    Ok(distance_unchecked(space.kind, a, b))
}

/// Adds `scale * d/da dist(a, b)` (ambient Euclidean gradient) into `out`,
/// given the precomputed distance `d`. At `d = 0` the zero subgradient is used.
pub fn accumulate_distance_gradient(
    kind: SpaceKind,
    a: &[f64],
    b: &[f64],
    d: f64,
    scale: f64,
    out: &mut [f64],
) {
    if d <= 0.0 || scale == 0.0 {
        return;
    }
    match kind {
        SpaceKind::Euclidean => {
            for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                *o += scale * (x - y) / d;
            }
        }
        SpaceKind::Hyperbolic => {
            // d = acosh(-<a,b>_M);  d(-<a,b>_M)/da = (b0, -b1, ..., -bn).
            let s = scale / d.sinh();
            out[0] += s * b[0];
            for (o, y) in out[1..].iter_mut().zip(&b[1..]) {
                *o -= s * y;
            }
        }
    }
}

/// Norm of the Riemannian gradient at `x` given the ambient Euclidean
/// gradient (the length a unit step would travel).
pub fn riemannian_grad_norm(kind: SpaceKind, x: &[f64], egrad: &[f64]) -> f64 {
    match kind {
        SpaceKind::Euclidean => norm(egrad),
        SpaceKind::Hyperbolic => {
            let mut v = egrad.to_vec();
            v[0] = -v[0];
            let c = minkowski_dot(x, &v);
            for (vi, xi) in v.iter_mut().zip(x) {
                *vi += c * xi;
            }
            minkowski_dot(&v, &v).max(0.0).sqrt()
        }
    }
}

/// Maps `x` into the closed ball: identity inside, otherwise the point on the
/// origin-to-`x` geodesic at distance exactly `R`.
pub fn project_to_ball(space: &SpaceSpec, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    project_in_place(space, &mut y);
    y
}

pub fn project_in_place(space: &SpaceSpec, x: &mut [f64]) {
    match space.kind {
        SpaceKind::Euclidean => {
            let r = norm(x);
            if r > space.radius {
                let f = space.radius / r;
                x.iter_mut().for_each(|v| *v *= f);
            }
        }
        SpaceKind::Hyperbolic => {
            let ns = norm(&x[1..]);
            if ns.asinh() > space.radius {
                let f = space.radius.sinh() / ns;
                x[1..].iter_mut().for_each(|v| *v *= f);
            }
            renormalize_hyperboloid(x);
        }
    }
}

/// One descent step `x <- Proj(Exp_x(-step * grad))` from an ambient
/// Euclidean gradient.
///
/// Hyperbolic: the gradient is converted with the Minkowski metric
/// (`h = J egrad`), projected onto the tangent space at `x`
/// (`v = h + <x, h>_M x`), followed along the exponential map, then
/// renormalized and projected into the ball.
pub fn riemannian_step(
    space: &SpaceSpec,
    x: &[f64],
    egrad: &[f64],
    step: f64,
) -> Result<Vec<f64>, GeometryError> {
    let mut y = x.to_vec();
    riemannian_step_in_place(space, &mut y, egrad, step)?;
    Ok(y)
}

pub fn riemannian_step_in_place(
    space: &SpaceSpec,
    x: &mut [f64],
    egrad: &[f64],
    step: f64,
) -> Result<(), GeometryError> {
    if egrad.iter().any(|g| !g.is_finite()) {
        return Err(GeometryError::NonFiniteGradient);
    }
    if egrad.iter().all(|&g| g == 0.0) || step == 0.0 {
        return Ok(());
    }
    match space.kind {
        SpaceKind::Euclidean => {
            for (v, g) in x.iter_mut().zip(egrad) {
                *v -= step * g;
            }
        }
        SpaceKind::Hyperbolic => {
            let mut v = egrad.to_vec();
            v[0] = -v[0];
            let c = minkowski_dot(x, &v);
            for (vi, xi) in v.iter_mut().zip(x.iter()) {
                *vi += c * xi;
            }
            let vnorm = minkowski_dot(&v, &v).max(0.0).sqrt();
            if vnorm > 0.0 {
                // Past the far side of the ball the geodesic never re-enters,
                // so longer moves only change where projection lands.
                let t = (step * vnorm).min(2.0 * space.radius + 8.0);
                let (ch, sh) = (t.cosh(), t.sinh());
                for (xi, vi) in x.iter_mut().zip(&v) {
                    *xi = ch * *xi - sh * vi / vnorm;
                }
            }
            renormalize_hyperboloid(x);
        }
    }
    project_in_place(space, x);
    Ok(())
}

/// Uniform random point in the ball of radius `r` (hyperbolic: with respect to
/// the hyperbolic volume, radial density `sinh^(n-1)`).
pub fn random_point<R: Rng + ?Sized>(space: &SpaceSpec, r: f64, rng: &mut R) -> Vec<f64> {
    let dir = random_direction(space.dim, rng);
    let u: f64 = rng.gen();
    let rho = match space.kind {
        SpaceKind::Euclidean => r * u.powf(1.0 / space.dim as f64),
        SpaceKind::Hyperbolic => hyperbolic_radius_quantile(space.dim, r, u),
    };
    space.from_polar(rho, &dir)
}

fn random_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Inverse CDF of the radial law with density proportional to
/// `sinh(t)^(dim-1)` on `[0, r]`.
fn hyperbolic_radius_quantile(dim: usize, r: f64, u: f64) -> f64 {
    if dim == 2 {
        return (1.0 + u * (r.cosh() - 1.0)).acosh();
    }
    const STEPS: usize = 2048;
    let h = r / STEPS as f64;
    let dens = |t: f64| t.sinh().powi(dim as i32 - 1);
    let mut cdf = vec![0.0; STEPS + 1];
    for i in 1..=STEPS {
        let (a, b) = ((i - 1) as f64 * h, i as f64 * h);
        cdf[i] = cdf[i - 1] + 0.5 * h * (dens(a) + dens(b));
    }
    let target = u * cdf[STEPS];
    let i = cdf.partition_point(|&c| c < target).clamp(1, STEPS);
    let span = cdf[i] - cdf[i - 1];
    let frac = if span > 0.0 {
        (target - cdf[i - 1]) / span
    } else {
        0.0
    };
    ((i - 1) as f64 + frac) * h
}

/// One point per entity, all inside the ball of `space`.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    space: SpaceSpec,
    coords: Vec<f64>,
}

impl Embedding {
    pub fn new(space: SpaceSpec, points: Vec<Vec<f64>>) -> Result<Self, GeometryError> {
        let mut coords = Vec::with_capacity(points.len() * space.ambient_dim());
        for p in &points {
            space.check_point(p)?;
            coords.extend_from_slice(p);
        }
        Ok(Embedding { space, coords })
    }

    pub(crate) fn from_flat(space: SpaceSpec, coords: Vec<f64>) -> Self {
        debug_assert_eq!(coords.len() % space.ambient_dim(), 0);
        Embedding { space, coords }
    }

    /// Every entity at the origin.
    pub fn at_origin(space: SpaceSpec, n: usize) -> Self {
        let o = space.origin();
        Embedding {
            space,
            coords: o.iter().copied().cycle().take(n * o.len()).collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(
        space: SpaceSpec,
        n: usize,
        init_radius: f64,
        rng: &mut R,
    ) -> Self {
        let mut coords = Vec::with_capacity(n * space.ambient_dim());
        for _ in 0..n {
            coords.extend(random_point(&space, init_radius, rng));
        }
        Embedding { space, coords }
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.space.ambient_dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let k = self.space.ambient_dim();
        &self.coords[i * k..(i + 1) * k]
    }

    pub(crate) fn point_mut(&mut self, i: usize) -> &mut [f64] {
        let k = self.space.ambient_dim();
        &mut self.coords[i * k..(i + 1) * k]
    }

    /// Flat coordinates, `ambient_dim` per entity.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.space.ambient_dim())
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        distance_unchecked(self.space.kind, self.point(i), self.point(j))
    }

    /// Pairwise distances in lexicographic couple order.
    pub fn couple_distances(&self) -> Vec<f64> {
        couples(self.len())
            .map(|(i, j)| self.distance(i, j))
            .collect()
    }

    pub fn max_radius(&self) -> f64 {
        self.points()
            .map(|p| distance_to_origin(self.space.kind, p))
            .fold(0.0, f64::max)
    }

    pub fn max_constraint_residual(&self) -> f64 {
        match self.space.kind {
            SpaceKind::Euclidean => 0.0,
            SpaceKind::Hyperbolic => self.points().map(hyperboloid_residual).fold(0.0, f64::max),
        }
    }

    /// Re-validates every point.
    pub fn validate(&self) -> Result<(), GeometryError> {
        self.points().try_for_each(|p| self.space.check_point(p))
    }

    /// Same points, re-labelled with a (larger) enclosing ball.
    pub fn with_radius(&self, radius: f64) -> Result<Self, GeometryError> {
        let space = SpaceSpec::new(self.space.kind, self.space.dim, radius)?;
        Embedding::new(space, self.points().map(<[f64]>::to_vec).collect())
    }
}

/// Side of the regular hyperbolic `n`-gon with circumradius `r`:
/// `2 asinh(sin(pi/n) sinh r)`, evaluated in log-domain.
pub fn polygon_side_length(n: usize, r: f64) -> f64 {
    assert!(n >= 3 && r > 0.0, "polygon needs n >= 3 and r > 0");
    2.0 * asinh_from_ln((PI / n as f64).sin().ln() + ln_sinh(r))
}

/// `count` points evenly spaced on the circle of radius `r` in the first
/// coordinate plane (a 1-D Euclidean space alternates between `-r` and `r`).
pub fn regular_polygon(space: &SpaceSpec, count: usize, r: f64) -> Embedding {
    let mut coords = Vec::with_capacity(count * space.ambient_dim());
    for k in 0..count {
        let mut dir = vec![0.0; space.dim];
        if space.dim == 1 {
            dir[0] = if k % 2 == 0 { 1.0 } else { -1.0 };
        } else {
            let a = 2.0 * PI * k as f64 / count as f64;
            dir[0] = a.cos();
            dir[1] = a.sin();
        }
        coords.extend(space.from_polar(r, &dir));
    }
    Embedding::from_flat(*space, coords)
}

/// Couples violating the margin condition
/// `y = +1 => score >= 1`, `y = -1 => score <= -1`, `score = g(tau_X) - g(d)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginReport {
    pub violations: Vec<(usize, usize)>,
    pub couples: usize,
}

impl MarginReport {
    pub fn count(&self) -> usize {
        self.violations.len()
    }
}

const MARGIN_SLACK: f64 = 1e-12;

/// `labels` is indexed in lexicographic couple order.
pub fn verify_margin_condition(emb: &Embedding, g: &GFunc, labels: &[Label]) -> MarginReport {
    margin_report_by(emb.len(), g, labels, |i, j| emb.distance(i, j))
}

/// Margin check against an arbitrary distance oracle on `n` entities.
pub fn margin_report_by<F>(n: usize, g: &GFunc, labels: &[Label], dist: F) -> MarginReport
where
    F: Fn(usize, usize) -> f64,
{
    assert_eq!(
        labels.len(),
        crate::graph::couple_count(n),
        "one label per couple"
    );
    let violations = couples(n)
        .filter(|&(i, j)| {
            let s = g.score(dist(i, j));
            match labels[couple_index(n, i, j)] {
                Label::Similar => s < 1.0 - MARGIN_SLACK,
                Label::Dissimilar => s > -1.0 + MARGIN_SLACK,
            }
        })
        .collect();
    MarginReport {
        violations,
        couples: labels.len(),
    }
}

type Lorentz = [[f64; 3]; 3];

const IDENTITY: Lorentz = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn lorentz_mul(a: &Lorentz, b: &Lorentz) -> Lorentz {
    let mut c = [[0.0; 3]; 3];
    for (i, row) in c.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn rotation(angle: f64) -> Lorentz {
    let (c, s) = (angle.cos(), angle.sin());
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn boost(len: f64) -> Lorentz {
    let (ch, sh) = (len.cosh(), len.sinh());
    [[ch, sh, 0.0], [sh, ch, 0.0], [0.0, 0.0, 1.0]]
}

/// Tree placed in the hyperbolic plane with every edge a geodesic of length
/// `scale`.
///
/// Each vertex stores its frame relative to its parent (a rotation followed
/// by a boost). Distances are evaluated by composing these local transforms
/// along the tree path, so their accuracy does not degrade with the distance
/// to the origin the way global hyperboloid coordinates do.
#[derive(Clone, Debug)]
pub struct SarkarEmbedding {
    pub root: usize,
    pub scale: f64,
    /// Largest distance from the origin (the root) to any vertex.
    pub radius: f64,
    parent: Vec<usize>,
    angle: Vec<f64>,
    depth: Vec<usize>,
}

impl SarkarEmbedding {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Hyperbolic distance between vertices `u` and `w`.
    pub fn distance(&self, u: usize, w: usize) -> f64 {
        if u == w {
            return 0.0;
        }
        let (mut a, mut b) = (u, w);
        let mut up = Vec::new();
        let mut down = Vec::new();
        while self.depth[a] > self.depth[b] {
            up.push(a);
            a = self.parent[a];
        }
        while self.depth[b] > self.depth[a] {
            down.push(b);
            b = self.parent[b];
        }
        while a != b {
            up.push(a);
            down.push(b);
            a = self.parent[a];
            b = self.parent[b];
        }
        // Frame of w expressed in the frame of u.
        let mut t = IDENTITY;
        for &v in &up {
            let inv = lorentz_mul(&boost(-self.scale), &rotation(-self.angle[v]));
            t = lorentz_mul(&t, &inv);
        }
        for &v in down.iter().rev() {
            t = lorentz_mul(
                &t,
                &lorentz_mul(&rotation(self.angle[v]), &boost(self.scale)),
            );
        }
        (t[1][0].hypot(t[2][0])).asinh()
    }

    pub fn couple_distances(&self) -> Vec<f64> {
        couples(self.len())
            .map(|(i, j)| self.distance(i, j))
            .collect()
    }

    pub fn verify_margin(&self, g: &GFunc, labels: &[Label]) -> MarginReport {
        margin_report_by(self.len(), g, labels, |i, j| self.distance(i, j))
    }

    /// Hyperboloid coordinates with the root at the origin, inside the ball of
    /// radius `radius`. Coordinates lose angular resolution beyond
    /// [`HYPERBOLIC_RADIUS_LIMIT`]; distances should then be taken from
    /// [`SarkarEmbedding::distance`].
    pub fn embedding(&self) -> Embedding {
        let n = self.len();
        let mut frames: Vec<Option<Lorentz>> = vec![None; n];
        frames[self.root] = Some(IDENTITY);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&v| self.depth[v]);
        let mut coords = Vec::with_capacity(3 * n);
        let mut pts = vec![[0.0; 3]; n];
        for v in order {
            if v != self.root {
                let p = frames[self.parent[v]].expect("parent placed first");
                let local = lorentz_mul(&rotation(self.angle[v]), &boost(self.scale));
                frames[v] = Some(lorentz_mul(&p, &local));
            }
            let f = frames[v].expect("frame assigned");
            let mut p = [f[0][0], f[1][0], f[2][0]];
            renormalize_hyperboloid(&mut p);
            pts[v] = p;
        }
        for p in pts {
            coords.extend_from_slice(&p);
        }
        let space = SpaceSpec::hyperbolic(2, self.radius.max(f64::MIN_POSITIVE) + BALL_TOL)
            .expect("positive radius");
        let mut emb = Embedding::from_flat(space, coords);
        for i in 0..n {
            project_in_place(&space, emb.point_mut(i));
        }
        emb
    }
}

/// Embeds a tree in `H^2`: the tree center sits at the origin, each vertex's
/// neighbours are spread at equal angles `2 pi / deg(v)` around it (the root
/// uses the full circle for its children, other vertices reserve one slot for
/// the parent), and every edge has hyperbolic length `scale`.
pub fn sarkar_tree_embedding(tree: &Graph, scale: f64) -> Result<SarkarEmbedding, GeometryError> {
    if !tree.is_tree() {
        return Err(GeometryError::NotATree(tree.to_string()));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(GeometryError::InvalidSpace(format!(
            "edge length must be positive, got {scale}"
        )));
    }
    let n = tree.vertex_count();
    let root = tree
        .tree_center()
        .map_err(|e| GeometryError::NotATree(e.to_string()))?;
    let mut parent = vec![usize::MAX; n];
    let mut angle = vec![0.0; n];
    let mut depth = vec![0usize; n];
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        let deg = tree.degree(v) as f64;
        // In a child's frame the parent lies at angle pi.
        let (offset, mut slot) = if v == root { (0.0, 0.0) } else { (PI, 1.0) };
        for &c in tree.neighbors(v) {
            if c == parent[v] {
                continue;
            }
            parent[c] = v;
            depth[c] = depth[v] + 1;
            angle[c] = offset + 2.0 * PI * slot / deg;
            slot += 1.0;
            stack.push(c);
        }
    }
    let mut s = SarkarEmbedding {
        root,
        scale,
        radius: 0.0,
        parent,
        angle,
        depth,
    };
    s.radius = (0..n).map(|v| s.distance(root, v)).fold(0.0, f64::max);
    Ok(s)
}

/// A Sarkar embedding at the smallest edge length (found by doubling plus
/// bisection) for which a threshold satisfying the margin condition exists.
#[derive(Clone, Debug)]
pub struct CalibratedSarkar {
    pub sarkar: SarkarEmbedding,
    /// `tau_X` placed midway (in `g`) between the longest edge and the
    /// shortest non-edge.
    pub gfunc: GFunc,
    /// `min_{non-edge} g(d) - max_{edge} g(d)`; at least 2 on success.
    pub gap: f64,
}

const CALIBRATION_SLACK: f64 = 1e-6;
const MAX_SCALE: f64 = 64.0;

fn margin_gap(tree: &Graph, s: &SarkarEmbedding, exponent: f64) -> (f64, f64, f64) {
    let mut max_edge = 0.0f64;
    let mut min_non = f64::INFINITY;
    for (i, j) in couples(tree.vertex_count()) {
        let v = s.distance(i, j).powf(exponent);
        if tree.has_edge(i, j) {
            max_edge = max_edge.max(v);
        } else {
            min_non = min_non.min(v);
        }
    }
    (min_non - max_edge, max_edge, min_non)
}

pub fn calibrate_sarkar(tree: &Graph, exponent: f64) -> Result<CalibratedSarkar, GeometryError> {
    if !(exponent >= 1.0) {
        return Err(GeometryError::InvalidGFunc(format!(
            "exponent must be >= 1, got {exponent}"
        )));
    }
    let feasible = |scale: f64| -> Result<(bool, SarkarEmbedding), GeometryError> {
        let s = sarkar_tree_embedding(tree, scale)?;
        let (gap, _, _) = margin_gap(tree, &s, exponent);
        Ok((gap >= 2.0 + CALIBRATION_SLACK, s))
    };
    let mut hi = 1.0;
    let (mut ok, mut best) = feasible(hi)?;
    let mut lo = 0.0;
    while !ok {
        lo = hi;
        hi *= 2.0;
        if hi > MAX_SCALE {
            return Err(GeometryError::Calibration(format!(
                "no edge length up to {MAX_SCALE} separates edges from non-edges"
            )));
        }
        (ok, best) = feasible(hi)?;
    }
    for _ in 0..60 {
        if hi - lo < 1e-9 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (ok_mid, s) = feasible(mid)?;
        if ok_mid {
            hi = mid;
            best = s;
        } else {
            lo = mid;
        }
    }
    let (gap, max_edge, min_non) = margin_gap(tree, &best, exponent);
    let level = if min_non.is_finite() {
        0.5 * (max_edge + min_non)
    } else {
        max_edge + 1.0
    };
    let gfunc = GFunc::new(exponent, level.powf(1.0 / exponent))?;
    Ok(CalibratedSarkar {
        sarkar: best,
        gfunc,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{complete_ary_tree, graph_labels, star_graph};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hyp() -> SpaceSpec {
        SpaceSpec::hyperbolic(2, 5.0).unwrap()
    }

    #[test]
    fn space_validation() {
        assert!(SpaceSpec::euclidean(0, 1.0).is_err());
        assert!(SpaceSpec::hyperbolic(1, 1.0).is_err());
        assert!(SpaceSpec::euclidean(2, 0.0).is_err());
        assert!(SpaceSpec::euclidean(2, f64::INFINITY).is_err());
        assert!(GFunc::new(0.5, 1.0).is_err());
        let g = GFunc::new(1.0, 3.0).unwrap();
        assert!(g
            .validate_for(&SpaceSpec::euclidean(2, 1.0).unwrap())
            .is_err());
    }

    #[test]
    fn euclidean_distance() {
        let s = SpaceSpec::euclidean(2, 10.0).unwrap();
        assert_eq!(distance(&s, &[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
    }

    #[test]
    fn hyperbolic_distance_examples() {
        let s = hyp();
        let x = s.from_polar(1.3, &[0.6, 0.8]);
        assert_eq!(distance(&s, &x, &x).unwrap(), 0.0);
        let a = [1f64.cosh(), 1f64.sinh(), 0.0];
        let b = [1f64.cosh(), -1f64.sinh(), 0.0];
        assert_relative_eq!(distance(&s, &a, &b).unwrap(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn hyperbolic_distance_matches_minkowski_formula() {
        let s = hyp();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = random_point(&s, 5.0, &mut rng);
            let b = random_point(&s, 5.0, &mut rng);
            let direct = (-minkowski_dot(&a, &b)).max(1.0).acosh();
            let d = distance_unchecked(SpaceKind::Hyperbolic, &a, &b);
            assert!((d - direct).abs() < 1e-7 * (1.0 + d), "{d} vs {direct}");
        }
    }

    #[test]
    fn nearby_points_keep_precision() {
        let s = hyp();
        let a = s.from_polar(3.0, &[1.0, 0.0]);
        let b = s.from_polar(3.0 + 1e-9, &[1.0, 0.0]);
        let d = distance_unchecked(SpaceKind::Hyperbolic, &a, &b);
        assert_relative_eq!(d, 1e-9, max_relative = 1e-6);
    }

    #[test]
    fn off_manifold_is_rejected() {
        let s = hyp();
        assert!(matches!(
            distance(&s, &[1.0, 0.5, 0.0], &s.origin()),
            Err(GeometryError::OffManifold { .. })
        ));
        assert!(matches!(
            distance(&s, &[1.0, 0.0], &s.origin()),
            Err(GeometryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn projection() {
        let e = SpaceSpec::euclidean(2, 1.0).unwrap();
        assert_eq!(project_to_ball(&e, &[2.0, 0.0]), vec![1.0, 0.0]);
        assert_eq!(project_to_ball(&e, &[0.3, -0.2]), vec![0.3, -0.2]);
        let h = SpaceSpec::hyperbolic(2, 1.0).unwrap();
        let far = h.from_polar(3.0, &[0.6, -0.8]);
        let p = project_to_ball(&h, &far);
        assert_relative_eq!(
            distance_to_origin(SpaceKind::Hyperbolic, &p),
            1.0,
            epsilon = 1e-9
        );
        assert_relative_eq!(p[1] / p[2], -0.75, max_relative = 1e-12);
        assert!(hyperboloid_residual(&p) <= 1e-12);
    }

    #[test]
    fn step_examples() {
        let e = SpaceSpec::euclidean(2, 1.0).unwrap();
        assert_eq!(
            riemannian_step(&e, &[0.0, 0.0], &[1.0, 0.0], 0.1).unwrap(),
            vec![-0.1, 0.0]
        );
        let h = hyp();
        let x = h.from_polar(0.7, &[0.0, 1.0]);
        assert_eq!(riemannian_step(&h, &x, &[0.0; 3], 0.5).unwrap(), x);
        assert_eq!(
            riemannian_step(&h, &x, &[f64::NAN, 0.0, 0.0], 0.5),
            Err(GeometryError::NonFiniteGradient)
        );
        let y = riemannian_step(&h, &x, &[0.3, -1.0, 2.0], 0.5).unwrap();
        assert!(hyperboloid_residual(&y) <= 1e-9);
    }

    #[test]
    fn hyperbolic_step_moves_against_distance_gradient() {
        let h = hyp();
        let a = h.from_polar(1.0, &[1.0, 0.0]);
        let b = h.from_polar(1.0, &[0.0, 1.0]);
        let d = distance_unchecked(SpaceKind::Hyperbolic, &a, &b);
        let mut g = vec![0.0; 3];
        accumulate_distance_gradient(SpaceKind::Hyperbolic, &a, &b, d, 1.0, &mut g);
        let a2 = riemannian_step(&h, &a, &g, 0.1).unwrap();
        let d2 = distance_unchecked(SpaceKind::Hyperbolic, &a2, &b);
        // Riemannian gradient of d has unit norm, so the step shortens d by ~0.1.
        assert_relative_eq!(d - d2, 0.1, epsilon = 1e-9);
    }

    #[test]
    fn residual_stays_small_over_many_steps() {
        let h = SpaceSpec::hyperbolic(3, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = random_point(&h, 5.0, &mut rng);
        for _ in 0..10_000 {
            let g: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            riemannian_step_in_place(&h, &mut x, &g, 0.3).unwrap();
            project_in_place(&h, &mut x);
            assert!(hyperboloid_residual(&x) <= 1e-9);
        }
        h.check_point(&x).unwrap();
    }

    #[test]
    fn random_points_lie_in_requested_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for space in [
            SpaceSpec::euclidean(1, 2.0).unwrap(),
            SpaceSpec::euclidean(3, 2.0).unwrap(),
            SpaceSpec::hyperbolic(2, 6.0).unwrap(),
            SpaceSpec::hyperbolic(4, 6.0).unwrap(),
        ] {
            for _ in 0..500 {
                let p = random_point(&space, space.radius / 2.0, &mut rng);
                space.check_point(&p).unwrap();
                assert!(distance_to_origin(space.kind, &p) <= space.radius / 2.0 + 1e-9);
            }
        }
    }

    #[test]
    fn hyperbolic_radial_law_for_dim_three() {
        // CDF of sinh^2 on [0, r]: (sinh t cosh t - t) / (sinh r cosh r - r).
        let r: f64 = 3.0;
        let cdf = |t: f64| (t.sinh() * t.cosh() - t) / (r.sinh() * r.cosh() - r);
        for &u in &[0.05, 0.3, 0.5, 0.9] {
            let t = hyperbolic_radius_quantile(3, r, u);
            assert!((cdf(t) - u).abs() < 1e-4, "u={u} t={t} cdf={}", cdf(t));
        }
    }

    #[test]
    fn polygon_side_examples() {
        // Oracle: the same closed form evaluated directly where sinh(50) is finite.
        let direct = 2.0 * ((PI / 156.0).sin() * 50f64.sinh()).asinh() / 100.0;
        let ratio = polygon_side_length(156, 50.0) / 100.0;
        assert_relative_eq!(ratio, direct, max_relative = 1e-13);
        assert!((ratio - 0.9219).abs() < 1e-3, "{ratio}");
        let mut prev = f64::INFINITY;
        for n in [3, 4, 10, 100, 10_000, 1_000_000] {
            let s = polygon_side_length(n, 2.0);
            assert!(s < prev);
            prev = s;
        }
        assert!(prev < 1e-4);
        let mut prev = 0.0;
        for r in [5.0, 10.0, 20.0, 50.0, 100.0, 400.0, 1000.0] {
            let q = polygon_side_length(12, r) / (2.0 * r);
            assert!(q > prev && q < 1.0);
            prev = q;
        }
        assert!(prev > 0.998);
    }

    #[test]
    fn polygon_side_matches_embedding() {
        let h = SpaceSpec::hyperbolic(2, 4.0).unwrap();
        let poly = regular_polygon(&h, 7, 4.0);
        assert_relative_eq!(
            poly.distance(0, 1),
            polygon_side_length(7, 4.0),
            max_relative = 1e-10
        );
    }

    #[test]
    fn margin_condition_examples() {
        let e = SpaceSpec::euclidean(2, 1.0).unwrap();
        let g = GFunc::new(1.0, 1.0).unwrap();
        let labels = graph_labels(&Graph::new(3, [(0, 1)]).unwrap());
        let same = Embedding::at_origin(e, 3);
        let rep = verify_margin_condition(&same, &g, &labels);
        // Every dissimilar couple violates; the similar one is at score 1.
        assert_eq!(rep.violations, vec![(0, 2), (1, 2)]);

        let g = GFunc::new(1.0, 1.5).unwrap();
        let pair = Embedding::new(e, vec![vec![0.0, 0.0], vec![0.5, 0.0]]).unwrap();
        assert_eq!(
            verify_margin_condition(&pair, &g, &[Label::Similar]).count(),
            0
        );
        assert_eq!(
            verify_margin_condition(&pair, &g, &[Label::Dissimilar]).count(),
            1
        );
    }

    #[test]
    fn sarkar_single_edge() {
        let t = Graph::new(2, [(0, 1)]).unwrap();
        let s = sarkar_tree_embedding(&t, 2.0).unwrap();
        assert_relative_eq!(s.distance(0, 1), 2.0, max_relative = 1e-12);
        assert!(
            sarkar_tree_embedding(&Graph::new(3, [(0, 1), (1, 2), (0, 2)]).unwrap(), 1.0).is_err()
        );
    }

    #[test]
    fn sarkar_star_spreads_leaves() {
        let t = star_graph(5).unwrap();
        let s = sarkar_tree_embedding(&t, 3.0).unwrap();
        for leaf in 1..=5 {
            assert_relative_eq!(s.distance(0, leaf), 3.0, max_relative = 1e-12);
            for other in leaf + 1..=5 {
                assert!(s.distance(leaf, other) > 3.0);
            }
        }
    }

    #[test]
    fn sarkar_edges_have_uniform_length() {
        let t = complete_ary_tree(3, 4).unwrap();
        let s = sarkar_tree_embedding(&t, 2.5).unwrap();
        for &(u, v) in t.edges() {
            assert_relative_eq!(s.distance(u, v), 2.5, max_relative = 1e-9);
        }
        assert!(s.radius <= 2.5 * 3.0 + 1e-9);
        let emb = s.embedding();
        emb.validate().unwrap();
        for (i, j) in couples(t.vertex_count()) {
            assert_relative_eq!(emb.distance(i, j), s.distance(i, j), max_relative = 1e-9);
        }
    }

    #[test]
    fn calibrated_binary_tree_has_no_violations() {
        let t = complete_ary_tree(2, 4).unwrap();
        for q in [1.0, 2.0] {
            let c = calibrate_sarkar(&t, q).unwrap();
            assert!(c.gap >= 2.0);
            let rep = c.sarkar.verify_margin(&c.gfunc, &graph_labels(&t));
            assert_eq!(
                verify_margin_condition(&c.sarkar.embedding(), &c.gfunc, &graph_labels(&t)).count(),
                0
            );
            assert_eq!(rep.count(), 0, "q={q}");
        }
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(seed in any::<u64>(), hyperbolic in any::<bool>(), radius in 0.5f64..8.0) {
            let space = if hyperbolic {
                SpaceSpec::hyperbolic(3, radius).unwrap()
            } else {
                SpaceSpec::euclidean(3, radius).unwrap()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p: Vec<Vec<f64>> = (0..3).map(|_| random_point(&space, radius, &mut rng)).collect();
            let d = |i: usize, j: usize| distance(&space, &p[i], &p[j]).unwrap();
            prop_assert!((d(0, 1) - d(1, 0)).abs() <= 1e-12 * (1.0 + d(0, 1)));
            prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-8);
            prop_assert!(d(0, 1) <= 2.0 * radius + 1e-8);
        }
    }
}
