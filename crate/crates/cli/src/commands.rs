use std::path::PathBuf;

use serde::Serialize;
use serde_json::json;

use embedbound::bounds::{
    bound_global, bound_local, crossover_thresholds, edge_matrix_var_norm, hinge_params, lambda_sq,
    old_bound_rc, BoundInputs, LambdaMode, LipschitzConvention,
};
use embedbound::experiment::{experiment_excess_risk, SweepSpec};
use embedbound::graph::{graph_labels, Graph};
use embedbound::learner::{cerm_train, risks_exact, risks_from_distances, sample_dataset};
use embedbound::optim::OptimOptions;
use embedbound::rademacher::{rc_monte_carlo, RcOptions};
use embedbound::reproduce::{example_report, old_bound_comparison, ExampleParams};
use embedbound::rng;
use embedbound::spaces::{
    calibrate_sarkar, verify_margin_condition, Embedding, GFunc, SpaceKind, SpaceSpec,
};

use crate::config::{self, BoundsConfig, EmbedConfig, EmbedMethod, ExperimentConfig, RcConfig};
use crate::output::{ext_cell, Outputs};
use crate::{Cli, CliError, Command, Reproduction};

/// Radius slack of the default space over the calibrated Sarkar radius.
pub const DEFAULT_RADIUS_FACTOR: f64 = 1.2;

pub fn dispatch(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    match &cli.command {
        Command::Bounds => bounds(cli),
        Command::Embed => embed(cli),
        Command::RcEstimate => rc_estimate(cli),
        Command::Experiment => experiment(cli),
        Command::Reproduce { which } => reproduce(cli, which),
    }
}

fn require_config<T: for<'de> serde::Deserialize<'de>>(
    cli: &Cli,
) -> Result<(T, PathBuf), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Validation("this subcommand needs --config <path>".into()))?;
    config::load(path)
}

fn num(x: f64) -> String {
    x.to_string()
}

/// Space and `g` from the config, or the hyperbolic plane sized from the
/// calibrated Sarkar embedding when the graph is a tree.
fn space_and_g(
    graph: &Graph,
    space: Option<SpaceSpec>,
    g: Option<GFunc>,
) -> Result<(SpaceSpec, GFunc), CliError> {
    if let (Some(s), Some(g)) = (space, g) {
        s.validate()?;
        g.validate_for(&s)?;
        return Ok((s, g));
    }
    if !graph.is_tree() {
        return Err(CliError::Validation(
            "space and g are required unless the graph is a tree".into(),
        ));
    }
    let cal = calibrate_sarkar(graph, g.map_or(1.0, |g| g.exponent))?;
    let s = match space {
        Some(s) => s,
        None => SpaceSpec::hyperbolic(2, DEFAULT_RADIUS_FACTOR * cal.sarkar.radius)?,
    };
    let g = g.unwrap_or(cal.gfunc);
    s.validate()?;
    g.validate_for(&s)?;
    Ok((s, g))
}

fn embedding_csv(out: &mut Outputs, name: &str, emb: &Embedding) {
    let k = emb.space().ambient_dim();
    let mut header = vec!["entity".to_string()];
    header.extend((0..k).map(|c| format!("coord{c}")));
    let rows = (0..emb.len())
        .map(|i| {
            std::iter::once(i.to_string())
                .chain(emb.point(i).iter().map(|&x| num(x)))
                .collect()
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(name, &header, rows);
}

fn bounds(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let (mut cfg, base): (BoundsConfig, _) = require_config(cli)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.optim.seed = cfg.seed;
    let graph = cfg.graph.build(&base)?;
    let mu = cfg.measure.build(&graph)?;
    cfg.space.validate()?;
    cfg.g.validate_for(&cfg.space)?;
    if cfg.sample_sizes.is_empty()
        || cfg
            .sample_sizes
            .iter()
            .any(|s| !(*s >= 1.0 && s.is_finite()))
    {
        return Err(CliError::Validation(
            "sample_sizes must be a non-empty list of values >= 1".into(),
        ));
    }
    let n = graph.vertex_count();
    let params = hinge_params(cfg.noise.alpha.0, cfg.noise.c)?;
    let o = cfg.overrides;
    let lam = match o.lambda_sq {
        Some(l) => l,
        None => lambda_sq(cfg.lambda_mode, &cfg.space, &cfg.g, n, &cfg.optim)?,
    };
    let sup_b = o.sup_b.unwrap_or(params.sup_b);
    let inputs = BoundInputs {
        lip_l: o.lip_l.unwrap_or(params.lip_l),
        sup_b,
        sup_b0: o.sup_b0.unwrap_or(sup_b * (1.0 + 1e-9)),
        var_const: o.var_const.unwrap_or(params.var_const),
        var_exp: o.var_exp.unwrap_or(params.var_exp),
        clip_m: o.clip_m.unwrap_or(params.clip_m),
        delta: cfg.delta,
        erm_eps: cfg.erm_eps,
        lambda_sq: lam,
    };
    inputs.validate()?;
    let thresholds = match (cfg.xi, cfg.v_min) {
        (Some(xi), Some(v)) => Some(crossover_thresholds(
            cfg.space.radius,
            cfg.g.exponent,
            mu.couple_count(),
            xi,
            v,
            cfg.delta,
            LipschitzConvention::Printed,
        )?),
        _ => None,
    };
    let mut rows = Vec::with_capacity(cfg.sample_sizes.len());
    for &s in &cfg.sample_sizes {
        let r = bound_local(s, &inputs, &mu)?;
        let old = old_bound_rc(cfg.space.kind, cfg.space.radius, &mu, s, cfg.lip_g2)?;
        rows.push(vec![
            num(s),
            num(r.r0),
            num(r.r_full_solved),
            num(r.r_full_closed),
            num(r.minor_a),
            num(r.minor_b),
            num(r.total_local),
            num(r.total_global),
            ext_cell(old.value),
            thresholds.map_or(String::new(), |t| ext_cell(t.threshold)),
            num(r.r_min),
            r.best_m.to_string(),
            num(r.crossover_s),
        ]);
    }
    let global_at_first = bound_global(cfg.sample_sizes[0], &inputs)?;
    let mut out = Outputs::new(&cli.out, "bounds", &cfg);
    out.csv(
        "bounds.csv",
        &[
            "S",
            "r0",
            "r_full_solved",
            "r_full_closed",
            "minor_a",
            "minor_b",
            "total_local",
            "total_global",
            "old_bound",
            "threshold",
            "r_min",
            "best_m",
            "crossover_s",
        ],
        rows,
    );
    out.json(
        "bounds.json",
        &json!({
            "vertices": n,
            "couples": mu.couple_count(),
            "inputs": inputs,
            "var_norm": edge_matrix_var_norm(cfg.space.kind, &mu),
            "thresholds": thresholds,
            "global_at_first_s": global_at_first,
        }),
    );
    out.commit()
}

#[derive(Serialize)]
struct EmbedSummary {
    method: EmbedMethod,
    space: SpaceSpec,
    g: GFunc,
    vertices: usize,
    margin_violations: usize,
    couples: usize,
    clipped_expected_risk: f64,
    excess_risk: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sarkar_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    empirical_risk: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    restart_risks: Option<Vec<f64>>,
}

fn embed(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let (mut cfg, base): (EmbedConfig, _) = require_config(cli)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let graph = cfg.graph.build(&base)?;
    let dist = config::distribution(&graph, &cfg.measure, cfg.xi)?;
    let labels = graph_labels(&graph);
    let n = graph.vertex_count();
    match cfg.method {
        EmbedMethod::Sarkar => {
            if cfg.space.is_some() {
                return Err(CliError::Validation(
                    "sarkar chooses its own space; remove `space`".into(),
                ));
            }
            let cal = calibrate_sarkar(&graph, cfg.g.map_or(1.0, |g| g.exponent))?;
            let report = cal.sarkar.verify_margin(&cal.gfunc, &labels);
            let risks =
                risks_from_distances(&cal.sarkar.couple_distances(), &cal.gfunc, &dist, &cfg.loss);
            let emb = cal.sarkar.embedding();
            let summary = EmbedSummary {
                method: cfg.method,
                space: *emb.space(),
                g: cal.gfunc,
                vertices: n,
                margin_violations: report.count(),
                couples: report.couples,
                clipped_expected_risk: risks.clipped_expected,
                excess_risk: risks.excess,
                sarkar_scale: Some(cal.sarkar.scale),
                empirical_risk: None,
                eps_hat: None,
                restart_risks: None,
            };
            let mut out = Outputs::new(&cli.out, "embed", &cfg);
            embedding_csv(&mut out, "embedding.csv", &emb);
            out.json("embed.json", &summary);
            out.commit()
        }
        EmbedMethod::Cerm => {
            let (space, g) = space_and_g(&graph, cfg.space, cfg.g)?;
            cfg.space = Some(space);
            cfg.g = Some(g);
            let data = sample_dataset(&dist, cfg.sample_size, rng::child_seed(cfg.seed, 0))?;
            let optim = OptimOptions {
                seed: rng::child_seed(cfg.seed, 1),
                ..cfg.optim.clone()
            };
            cfg.optim.seed = optim.seed;
            let fit = cerm_train(&space, &g, &data, &cfg.loss, &optim)?;
            let risks = risks_exact(&fit.embedding, &g, &dist, &cfg.loss)?;
            let report = verify_margin_condition(&fit.embedding, &g, &labels);
            let summary = EmbedSummary {
                method: cfg.method,
                space,
                g,
                vertices: n,
                margin_violations: report.count(),
                couples: report.couples,
                clipped_expected_risk: risks.clipped_expected,
                excess_risk: risks.excess,
                sarkar_scale: None,
                empirical_risk: Some(fit.risk),
                eps_hat: Some(fit.eps_hat),
                restart_risks: Some(fit.restart_risks.clone()),
            };
            let mut out = Outputs::new(&cli.out, "embed", &cfg);
            out.csv(
                "dataset.csv",
                &["u", "v", "label"],
                data.items
                    .iter()
                    .map(|s| vec![s.u.to_string(), s.v.to_string(), s.label.sign().to_string()])
                    .collect(),
            );
            out.json(
                "dataset.json",
                &json!({
                    "vertices": n,
                    "sample_size": data.len(),
                    "seed": data.seed,
                    "xi": cfg.xi,
                    "labels": "+1 = similar (edge), -1 = dissimilar",
                }),
            );
            embedding_csv(&mut out, "embedding.csv", &fit.embedding);
            out.json("embed.json", &summary);
            out.commit()
        }
    }
}

fn rc_estimate(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let (mut cfg, base): (RcConfig, _) = require_config(cli)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.optim.seed = cfg.seed;
    let graph = cfg.graph.build(&base)?;
    let dist = config::distribution(&graph, &cfg.measure, cfg.xi)?;
    cfg.space.validate()?;
    cfg.g.validate_for(&cfg.space)?;
    let n = graph.vertex_count();
    let opts = RcOptions {
        trials: cfg.trials,
        seed: cfg.seed,
        optim: cfg.optim.clone(),
        local_r: cfg.local_r,
    };
    let est = rc_monte_carlo(&dist, &cfg.space, &cfg.g, &cfg.loss, cfg.sample_size, &opts)?;
    let s = cfg.sample_size as f64;
    let lip = hinge_params(0.0, 1.0)?.lip_l;
    let lam_worst = lambda_sq(LambdaMode::WorstMetric, &cfg.space, &cfg.g, n, &cfg.optim)?;
    let lam_numeric = lambda_sq(
        LambdaMode::NumericEstimate,
        &cfg.space,
        &cfg.g,
        n,
        &cfg.optim,
    )?;
    let theorem = |lam: f64| 2.0 * lip * lam.sqrt() * (2.0 / s).sqrt();
    let gate = est.mean - 3.0 * est.std_err;
    // The spectral bound assumes g(t) = g2(t^2) on a Euclidean ball.
    let old_applicable = cfg.space.kind == SpaceKind::Euclidean && cfg.g.exponent == 2.0;
    let old = old_bound_rc(cfg.space.kind, cfg.space.radius, &dist.mu, s, cfg.lip_g2)?.value;
    let summary = json!({
        "mean": est.mean,
        "std_err": est.std_err,
        "trials": est.trials,
        "dropped": est.dropped,
        "sup_method": est.sup_method,
        "lower_estimate": est.lower_estimate,
        "local_r": cfg.local_r,
        "lambda_sq_worst_metric": lam_worst,
        "lambda_sq_numeric": lam_numeric,
        "theorem_bound": theorem(lam_worst),
        "theorem_bound_numeric_lambda": theorem(lam_numeric),
        "old_bound": old,
        "old_bound_applicable": old_applicable,
        "within_theorem_bound": gate <= theorem(lam_worst),
        "within_theorem_bound_numeric_lambda": gate <= theorem(lam_numeric),
        "within_old_bound": old_applicable.then(|| gate <= old.to_f64()),
    });
    let mut out = Outputs::new(&cli.out, "rc_estimate", &cfg);
    out.csv(
        "rc_trials.csv",
        &["trial", "sup_value"],
        est.sups
            .iter()
            .enumerate()
            .map(|(t, v)| vec![t.to_string(), v.map_or(String::new(), num)])
            .collect(),
    );
    out.json("rc_summary.json", &summary);
    out.commit()
}

fn experiment(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let (mut cfg, base): (ExperimentConfig, _) = require_config(cli)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.optim.seed = cfg.seed;
    let graph = cfg.graph.build(&base)?;
    let dist = config::distribution(&graph, &cfg.measure, cfg.xi)?;
    let (space, g) = space_and_g(&graph, cfg.space, cfg.g)?;
    cfg.space = Some(space);
    cfg.g = Some(g);
    let spec = SweepSpec {
        space,
        g,
        loss: cfg.loss,
        sample_sizes: cfg.sample_sizes.clone(),
        trials: cfg.trials,
        delta: cfg.delta,
        lambda_mode: cfg.lambda_mode,
        optim: cfg.optim.clone(),
        seed: cfg.seed,
    };
    let report = experiment_excess_risk(&dist, &spec)?;
    let mut out = Outputs::new(&cli.out, "experiment", &cfg);
    out.csv(
        "experiment_trials.csv",
        &["S", "trial", "empirical_risk", "excess", "eps_hat"],
        report
            .trials
            .iter()
            .map(|t| {
                vec![
                    t.s.to_string(),
                    t.trial.to_string(),
                    num(t.empirical_risk),
                    num(t.excess),
                    num(t.eps_hat),
                ]
            })
            .collect(),
    );
    out.csv(
        "experiment_summary.csv",
        &[
            "S",
            "excess_quantile",
            "excess_mean",
            "max_eps_hat",
            "bound_local",
            "bound_global",
            "holds",
        ],
        report
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.s.to_string(),
                    num(r.excess_quantile),
                    num(r.excess_mean),
                    num(r.max_eps_hat),
                    num(r.bound_local),
                    num(r.bound_global),
                    r.holds.to_string(),
                ]
            })
            .collect(),
    );
    out.json(
        "experiment.json",
        &json!({
            "noise": report.noise,
            "lambda_sq": report.lambda_sq,
            "rows": report.rows,
            "all_hold": report.all_hold(),
        }),
    );
    out.commit()
}

fn example_params(cli: &Cli) -> Result<ExampleParams, CliError> {
    match &cli.config {
        Some(path) => Ok(config::load::<ExampleParams>(path)?.0),
        None => Ok(ExampleParams::default()),
    }
}

fn reproduce(cli: &Cli, which: &Reproduction) -> Result<Vec<PathBuf>, CliError> {
    let mut params = example_params(cli)?;
    match which {
        Reproduction::Example43 { v_min } => {
            if let Some(v) = v_min {
                params.v_min = *v;
            }
            let r = example_report(&params)?;
            let headline = json!({
                "threshold_q1": ext_cell(r.calibrated.q1.printed.threshold),
                "threshold_q2": ext_cell(r.calibrated.q2.drop_leading_q.threshold),
                "threshold_q2_printed_factor": ext_cell(r.calibrated.q2.printed.threshold),
                "star_packing_v_min": r.star_packing.v_min,
                "star_packing_threshold_q1": ext_cell(r.star_packing.q1.printed.threshold),
                "star_packing_threshold_q2": ext_cell(r.star_packing.q2.drop_leading_q.threshold),
                "old_bound_threshold": ext_cell(r.old_bound.old_threshold),
            });
            let mut out = Outputs::new(&cli.out, "example43", &params);
            out.json(
                "example43.json",
                &json!({ "headline": headline, "report": r }),
            );
            out.commit()
        }
        Reproduction::Remark62d { lip_g2 } => {
            if let Some(l) = lip_g2 {
                params.lip_g2 = *l;
            }
            let c = old_bound_comparison(&params)?;
            let mut out = Outputs::new(&cli.out, "remark62d", &params);
            out.json("remark62d.json", &c);
            out.commit()
        }
    }
}
