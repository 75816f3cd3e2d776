//! Worked numbers for the 156-entity tree: when the hyperbolic plane provably
//! beats every Euclidean ball, by the new bounds and by the spectral ones.

use serde::{Deserialize, Serialize};

use crate::bounds::{
    crossover_thresholds, edge_matrix_var_norm, old_bound_sample_threshold, BoundError,
    CrossoverThresholds, LipschitzConvention,
};
use crate::distribution::CoupleMeasure;
use crate::extended::ExtReal;
use crate::graph::{complete_ary_tree, max_disjoint_star_packing, sphere_packing_number};
use crate::spaces::SpaceKind;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExampleParams {
    pub radius: f64,
    pub xi: f64,
    pub delta: f64,
    pub arity: usize,
    pub levels: usize,
    /// Violation count used for the headline thresholds.
    pub v_min: usize,
    pub lip_g2: f64,
    /// `B0` of the old-bound comparison.
    pub sup_b0: f64,
}

impl Default for ExampleParams {
    fn default() -> Self {
        ExampleParams {
            radius: 39.51,
            xi: 0.5,
            delta: 2f64.powi(-10),
            arity: 5,
            levels: 4,
            v_min: 156,
            lip_g2: 1.0,
            sup_b0: 2.0 * (1.0 + 1e-9),
        }
    }
}

/// Thresholds under both readings of the Lipschitz factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdPair {
    pub printed: CrossoverThresholds,
    pub drop_leading_q: CrossoverThresholds,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdSet {
    pub label: &'static str,
    pub v_min: usize,
    pub q1: ThresholdPair,
    pub q2: ThresholdPair,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OldBoundComparison {
    /// `|E|_var` of the uniform couple measure in the hyperbolic case.
    pub var_norm: f64,
    /// `ln omega(R)`, `omega(R) = cosh^2 R + sinh^2 R`.
    pub ln_omega: f64,
    pub old_threshold: ExtReal,
    /// Threshold of the new analysis (`q = 1`, printed factor).
    pub new_threshold: ExtReal,
    pub log10_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExampleReport {
    pub params: ExampleParams,
    pub vertices: usize,
    pub couples: usize,
    /// Uses `params.v_min`.
    pub calibrated: ThresholdSet,
    /// Uses the number of vertex-disjoint `(p(2) + 1)`-stars, a certified
    /// lower bound on the Euclidean violation count.
    pub star_packing: ThresholdSet,
    pub star_packing_exact: bool,
    pub old_bound: OldBoundComparison,
}

fn pair(
    p: &ExampleParams,
    q: f64,
    couples: usize,
    v_min: usize,
) -> Result<ThresholdPair, BoundError> {
    let at = |c| crossover_thresholds(p.radius, q, couples, p.xi, v_min, p.delta, c);
    Ok(ThresholdPair {
        printed: at(LipschitzConvention::Printed)?,
        drop_leading_q: at(LipschitzConvention::DropLeadingQ)?,
    })
}

fn threshold_set(
    p: &ExampleParams,
    label: &'static str,
    couples: usize,
    v_min: usize,
) -> Result<ThresholdSet, BoundError> {
    Ok(ThresholdSet {
        label,
        v_min,
        q1: pair(p, 1.0, couples, v_min)?,
        q2: pair(p, 2.0, couples, v_min)?,
    })
}

/// Old-bound sample size: the smallest `S` at which
/// `2 RC_old(S) + B0 sqrt(ln(1/delta)/S)` drops below the Euclidean excess
/// floor `xi v_min / |E2|` (uniform couple measure, hyperbolic plane).
pub fn old_bound_comparison(p: &ExampleParams) -> Result<OldBoundComparison, BoundError> {
    let tree = complete_ary_tree(p.arity, p.levels)
        .map_err(|e| BoundError::InvalidInputs(e.to_string()))?;
    let n = tree.vertex_count();
    let mu = CoupleMeasure::uniform(n)?;
    let couples = mu.couple_count();
    let target = p.xi * p.v_min as f64 / couples as f64;
    let old_threshold = old_bound_sample_threshold(
        SpaceKind::Hyperbolic,
        p.radius,
        &mu,
        p.lip_g2,
        p.sup_b0,
        p.delta,
        target,
    )?;
    let new_threshold = crossover_thresholds(
        p.radius,
        1.0,
        couples,
        p.xi,
        p.v_min,
        p.delta,
        LipschitzConvention::Printed,
    )?
    .threshold;
    Ok(OldBoundComparison {
        var_norm: edge_matrix_var_norm(SpaceKind::Hyperbolic, &mu),
        ln_omega: crate::extended::ln_cosh(2.0 * p.radius),
        old_threshold,
        new_threshold,
        log10_ratio: old_threshold.log10_abs() - new_threshold.log10_abs(),
    })
}

pub fn example_report(p: &ExampleParams) -> Result<ExampleReport, BoundError> {
    let tree = complete_ary_tree(p.arity, p.levels)
        .map_err(|e| BoundError::InvalidInputs(e.to_string()))?;
    let n = tree.vertex_count();
    let couples = n * (n - 1) / 2;
    let k = sphere_packing_number(2).expect("p(2) is known") + 1;
    let packing = max_disjoint_star_packing(&tree, k)
        .map_err(|e| BoundError::InvalidInputs(e.to_string()))?;
    Ok(ExampleReport {
        params: *p,
        vertices: n,
        couples,
        calibrated: threshold_set(p, "v_min = parameter", couples, p.v_min)?,
        star_packing: threshold_set(p, "v_min = disjoint star packing", couples, packing.count)?,
        star_packing_exact: packing.exact,
        old_bound: old_bound_comparison(p)?,
    })
}
