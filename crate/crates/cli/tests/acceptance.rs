//! Acceptance suite. Prints one `PASS` or `FAIL` line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::HashMap;
use std::process::Command;
use std::time::{Duration, Instant};

use embedbound::bounds::{
    edge_matrix_var_norm, lambda_sq, rate_full_closed, solve_rate_m, zeta_m, BoundInputs,
    LambdaMode,
};
use embedbound::distribution::{CoupleMeasure, DistributionSpec};
use embedbound::experiment::{experiment_excess_risk, SweepSpec};
use embedbound::graph::{
    complete_ary_tree, couple_count, graph_labels, max_disjoint_star_packing, path_graph,
    random_recursive_tree, sphere_packing_number, star_graph, Graph,
};
use embedbound::learner::{sample_with, LossSpec};
use embedbound::optim::{CoupleObjective, OptimOptions};
use embedbound::rademacher::{
    ascent_sup, grid_space, rademacher_signs, rc_monte_carlo, GridClass, RcOptions,
};
use embedbound::rng;
use embedbound::spaces::{
    calibrate_sarkar, hyperboloid_residual, polygon_side_length, riemannian_grad_norm,
    riemannian_step_in_place, Embedding, GFunc, SpaceKind, SpaceSpec, HYPERBOLIC_RADIUS_LIMIT,
};
use serde_json::Value;

fn verdict(id: u32, name: &str, pass: bool, detail: &str, start: Instant) -> bool {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!(
        "criterion {id:>2} {tag}: {name} [{detail}; {:.2}s]",
        start.elapsed().as_secs_f64()
    );
    pass
}

fn within(start: Instant, limit: Duration) -> bool {
    start.elapsed() < limit
}

/// Runs the installed binary and returns the parsed JSON file it wrote.
fn reproduce(args: &[&str], file: &str) -> (Value, Duration) {
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_embedbound"))
        .args(["--out", dir.path().to_str().unwrap(), "reproduce"])
        .args(args)
        .output()
        .unwrap();
    let elapsed = t.elapsed();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join(file)).unwrap();
    (serde_json::from_str(&text).unwrap(), elapsed)
}

fn number(v: &Value) -> f64 {
    match v {
        Value::Number(n) => n.as_f64().unwrap(),
        Value::String(s) => s.parse().unwrap(),
        other => panic!("not a number: {other}"),
    }
}

fn criterion_01_example_q1() -> bool {
    let start = Instant::now();
    let (v, elapsed) = reproduce(&["example43"], "example43.json");
    let h = &v["headline"];
    let thr = number(&h["threshold_q1"]);
    let rel = (thr / 1.19e9 - 1.0).abs();
    let both =
        h.get("star_packing_threshold_q1").is_some() && v["report"]["calibrated"]["v_min"] == 156;
    let pass = rel <= 0.02 && elapsed < Duration::from_secs(1) && both;
    let detail = format!(
        "threshold {thr:.4e}, rel err {rel:.4}, star packing v_min {}, run {:.3}s",
        h["star_packing_v_min"],
        elapsed.as_secs_f64()
    );
    verdict(1, "q=1 crossover threshold", pass, &detail, start)
}

fn criterion_02_example_q2() -> bool {
    let start = Instant::now();
    let (v, elapsed) = reproduce(&["example43"], "example43.json");
    let h = &v["headline"];
    let thr = number(&h["threshold_q2"]);
    let rel = (thr / 7.43e12 - 1.0).abs();
    let pass = rel <= 0.10 && elapsed < Duration::from_secs(1);
    let detail = format!(
        "threshold {thr:.4e} (other reading {:.4e}), rel err {rel:.4}, run {:.3}s",
        number(&h["threshold_q2_printed_factor"]),
        elapsed.as_secs_f64()
    );
    verdict(2, "q=2 crossover threshold", pass, &detail, start)
}

fn criterion_03_old_bound_threshold() -> bool {
    let start = Instant::now();
    let (v, _) = reproduce(&["remark62d", "--lip-g2", "1"], "remark62d.json");
    let old = number(&v["old_threshold"]);
    let ratio = number(&v["log10_ratio"]);
    let pass = (1e70..=1e76).contains(&old) && ratio >= 60.0;
    let detail = format!("old threshold {old:.4e}, log10(old/new) {ratio:.2}");
    verdict(3, "old-bound threshold", pass, &detail, start)
}

fn criterion_04_spectra() -> bool {
    let start = Instant::now();
    let mut envelope_ok = true;
    for t in 0..100u64 {
        let n = 5 + (t as usize % 26);
        let mu = CoupleMeasure::random(n, &mut rng::stream(404, t)).unwrap();
        let e2 = couple_count(n) as f64;
        let eu = edge_matrix_var_norm(SpaceKind::Euclidean, &mu);
        let hy = edge_matrix_var_norm(SpaceKind::Hyperbolic, &mu);
        envelope_ok &= eu >= 4.0 / e2 && eu <= 4.0 + 1e-12;
        envelope_ok &= hy >= 1.0 / (2.0 * e2) && hy <= 0.25 + 1e-12;
    }
    let mut worst_gap = 0.0f64;
    let mut sample = String::new();
    for n in 5..=30 {
        let mu = CoupleMeasure::uniform(n).unwrap();
        let e2 = couple_count(n) as f64;
        let eu = edge_matrix_var_norm(SpaceKind::Euclidean, &mu);
        let hy = edge_matrix_var_norm(SpaceKind::Hyperbolic, &mu);
        worst_gap = worst_gap
            .max((eu - 4.0 / e2).abs())
            .max((hy - 1.0 / (2.0 * e2)).abs());
        if n == 5 {
            sample = format!(
                "|V|=5 uniform: {eu:.6} vs {:.6}, {hy:.6} vs {:.6}",
                4.0 / e2,
                1.0 / (2.0 * e2)
            );
        }
    }
    let endpoints_ok = worst_gap <= 1e-8;
    let pass = envelope_ok && endpoints_ok && within(start, Duration::from_secs(10));
    let detail = format!(
        "100 random measures inside envelope: {envelope_ok}; uniform endpoint gap {worst_gap:.3e} ({sample})"
    );
    verdict(4, "edge-matrix spectra", pass, &detail, start)
}

fn criterion_05_fixed_point() -> bool {
    let start = Instant::now();
    let n = 8;
    let mu = CoupleMeasure::random(n, &mut rng::stream(505, 0)).unwrap();
    let p = mu.cumulative_smallest();
    let e2 = couple_count(n);
    let inputs = |beta: f64| BoundInputs {
        lip_l: 1.5,
        sup_b: 2.0,
        sup_b0: 2.0,
        var_const: 3.0,
        var_exp: beta,
        clip_m: 1.0,
        delta: 0.05,
        erm_eps: 0.0,
        lambda_sq: 40.0,
    };
    let sizes: Vec<f64> = (0..=8).map(|k| 10f64.powi(k)).collect();
    let one = inputs(1.0);
    let mut oracle_err = 0.0f64;
    let mut closed_err = 0.0f64;
    for &s in &sizes {
        let r = solve_rate_m(s, e2, &one, &p).unwrap();
        let oracle = 1800.0 * 1.5 * 1.5 * 3.0 * e2 as f64 / s;
        oracle_err = oracle_err.max((r / oracle - 1.0).abs());
        closed_err = closed_err.max((rate_full_closed(s, &one, e2) / (3.0 * r) - 1.0).abs());
    }
    let mut residual = 0.0f64;
    for beta in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let inp = inputs(beta);
        for m in [0, 1, 2, e2 / 2, e2 - 1, e2] {
            for &s in &sizes {
                let r = solve_rate_m(s, m, &inp, &p).unwrap();
                let rhs = 30.0 * zeta_m(r, m, &inp, &p).unwrap() / s.sqrt();
                residual = residual.max((r - rhs).abs() / r);
            }
        }
    }
    let pass = oracle_err <= 1e-8 && closed_err <= 1e-12 && residual <= 1e-10;
    let detail = format!(
        "beta=1 rel err {oracle_err:.2e}, closed/solver-3 {closed_err:.2e}, max relative residual {residual:.2e}"
    );
    verdict(5, "fixed-point consistency", pass, &detail, start)
}

fn criterion_06_rc_bound_validity() -> bool {
    let start = Instant::now();
    let loss = LossSpec::default();
    let optim = OptimOptions {
        restarts: 4,
        steps: 200,
        polish_steps: 100,
        ..OptimOptions::default()
    };
    let mut failures = Vec::new();
    let mut cells = 0;
    let mut tightest = f64::INFINITY;
    for n in [4usize, 8] {
        let tree = random_recursive_tree(n, &mut rng::stream(606, n as u64)).unwrap();
        let dist =
            DistributionSpec::margin(&tree, CoupleMeasure::uniform(n).unwrap(), 0.5).unwrap();
        for kind in [SpaceKind::Euclidean, SpaceKind::Hyperbolic] {
            for radius in [1.0, 5.0] {
                let space = SpaceSpec::new(kind, 2, radius).unwrap();
                let g = GFunc::new(1.0, radius).unwrap();
                let lam = lambda_sq(LambdaMode::NumericEstimate, &space, &g, n, &optim).unwrap();
                for s in [8usize, 32, 128] {
                    let opts = RcOptions {
                        trials: 200,
                        seed: rng::child_seed(606, cells),
                        optim: optim.clone(),
                        local_r: None,
                    };
                    cells += 1;
                    let est = rc_monte_carlo(&dist, &space, &g, &loss, s, &opts).unwrap();
                    let bound = 2.0 * loss_lipschitz() * lam.sqrt() * (2.0 / s as f64).sqrt();
                    tightest = tightest.min(bound / est.mean.max(1e-300));
                    if est.mean > bound + 3.0 * est.std_err || est.trials < 200 {
                        failures.push(format!(
                            "|V|={n} {kind:?} R={radius} S={s}: {} > {bound}",
                            est.mean
                        ));
                    }
                }
            }
        }
    }
    let pass = failures.is_empty() && within(start, Duration::from_secs(600));
    let detail = format!(
        "{cells} cells, smallest bound/estimate ratio {tightest:.3}, violations {failures:?}"
    );
    verdict(6, "Rademacher bound validity", pass, &detail, start)
}

/// The hinge is 1-Lipschitz.
fn loss_lipschitz() -> f64 {
    1.0
}

fn criterion_07_oracle_equivalence() -> bool {
    let start = Instant::now();
    let grid = [-1.0, 0.0, 1.0];
    let g = GFunc::new(1.0, 1.0).unwrap();
    let loss = LossSpec::default();
    let space = grid_space(&grid).unwrap();
    let opts = OptimOptions {
        init_fraction: 1.0,
        ..OptimOptions::default()
    };
    let setups: Vec<(DistributionSpec, GridClass)> = [2usize, 3]
        .iter()
        .map(|&n| {
            let dist = DistributionSpec::margin(
                &path_graph(n).unwrap(),
                CoupleMeasure::uniform(n).unwrap(),
                0.5,
            )
            .unwrap();
            (dist, GridClass::new(n, &grid, &g, &loss).unwrap())
        })
        .collect();
    let trials = 500u64;
    let mut matched = 0;
    let mut overshoot = 0;
    for t in 0..trials {
        let (dist, class) = &setups[(t % 2) as usize];
        let mut r = rng::stream(707, t);
        let s = 1 + (t / 2 % 4) as usize;
        let data = sample_with(dist, s, &mut r).unwrap();
        let signs = rademacher_signs(s, &mut r);
        let exact = class.sup(&data, &signs);
        let o = OptimOptions {
            seed: rng::child_seed(707, t),
            ..opts.clone()
        };
        let found = ascent_sup(&space, &g, &loss, &data, &signs, &o, None)
            .unwrap()
            .unwrap();
        if (found - exact).abs() <= 1e-2 {
            matched += 1;
        }
        if found > exact + 1e-9 {
            overshoot += 1;
        }
    }
    let frac = matched as f64 / trials as f64;
    let pass = frac >= 0.98;
    let detail = format!("{matched}/{trials} within 1e-2, ascent above exhaustive in {overshoot}");
    verdict(7, "ascent versus exhaustive supremum", pass, &detail, start)
}

fn sweep_trees() -> Vec<(&'static str, Graph)> {
    vec![
        ("path10", path_graph(10).unwrap()),
        ("star8", star_graph(8).unwrap()),
        ("binary15", complete_ary_tree(2, 4).unwrap()),
        (
            "random12",
            random_recursive_tree(12, &mut rng::stream(808, 12)).unwrap(),
        ),
        (
            "random20",
            random_recursive_tree(20, &mut rng::stream(808, 20)).unwrap(),
        ),
    ]
}

fn criterion_08_excess_risk_sweep() -> bool {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst = f64::INFINITY;
    let mut runs = 0;
    for (name, tree) in sweep_trees() {
        let n = tree.vertex_count();
        let cal = calibrate_sarkar(&tree, 1.0).unwrap();
        let radius = (1.2 * cal.sarkar.radius).min(HYPERBOLIC_RADIUS_LIMIT);
        let space = SpaceSpec::hyperbolic(2, radius).unwrap();
        for xi in [0.5, 1.0] {
            let dist =
                DistributionSpec::margin(&tree, CoupleMeasure::uniform(n).unwrap(), xi).unwrap();
            let spec = SweepSpec {
                space,
                g: cal.gfunc,
                loss: LossSpec::default(),
                sample_sizes: vec![100, 1000, 10_000],
                trials: 100,
                delta: 0.05,
                lambda_mode: LambdaMode::WorstMetric,
                optim: OptimOptions::default(),
                seed: rng::child_seed(808, runs),
            };
            runs += 1;
            let report = experiment_excess_risk(&dist, &spec).unwrap();
            for row in &report.rows {
                worst = worst.min(row.bound_local - row.excess_quantile);
                if !row.holds {
                    failures.push(format!(
                        "{name} xi={xi} S={}: {} > {}",
                        row.s, row.excess_quantile, row.bound_local
                    ));
                }
            }
        }
    }
    let pass = failures.is_empty() && within(start, Duration::from_secs(1200));
    let detail =
        format!("{runs} sweeps, smallest bound - quantile {worst:.4}, violations {failures:?}");
    verdict(8, "excess-risk validity sweep", pass, &detail, start)
}

fn criterion_09_geometry() -> bool {
    let start = Instant::now();
    let mut violations = 0;
    let mut trees = 0;
    for n in [5usize, 10, 20, 40, 60, 80, 100] {
        for seed in 0..3u64 {
            let tree =
                random_recursive_tree(n, &mut rng::stream(909, 1000 * n as u64 + seed)).unwrap();
            let cal = calibrate_sarkar(&tree, 1.0).unwrap();
            violations += cal
                .sarkar
                .verify_margin(&cal.gfunc, &graph_labels(&tree))
                .count();
            trees += 1;
        }
    }
    let residual = long_run_residual();
    let ratio = polygon_side_length(156, 50.0) / 100.0;
    let oracle = 2.0 * ((std::f64::consts::PI / 156.0).sin() * 50f64.sinh()).asinh() / 100.0;
    let pass = violations == 0
        && residual <= 1e-9
        && (ratio - 0.9219).abs() <= 1e-3
        && (ratio - oracle).abs() <= 1e-12;
    let detail = format!(
        "{trees} Sarkar trees with {violations} violations, residual after 1e4 steps {residual:.2e}, polygon ratio {ratio:.6}"
    );
    verdict(9, "geometry suite", pass, &detail, start)
}

/// Largest hyperboloid residual seen over 10^4 descent steps.
fn long_run_residual() -> f64 {
    let n = 10;
    let space = SpaceSpec::hyperbolic(3, 6.0).unwrap();
    let g = GFunc::new(1.0, 3.0).unwrap();
    let tree = random_recursive_tree(n, &mut rng::stream(910, 0)).unwrap();
    let dist = DistributionSpec::margin(&tree, CoupleMeasure::uniform(n).unwrap(), 1.0).unwrap();
    let data = sample_with(&dist, 200, &mut rng::stream(910, 1)).unwrap();
    let obj: CoupleObjective = data.objective();
    let mut pts: Vec<Vec<f64>> = Embedding::random(space, n, 5.0, &mut rng::stream(910, 2))
        .points()
        .map(<[f64]>::to_vec)
        .collect();
    let k = space.ambient_dim();
    let mut grad = vec![0.0; n * k];
    let mut worst = 0.0f64;
    for t in 0..10_000 {
        let x = Embedding::new(space, pts.clone()).unwrap();
        obj.value_and_grad(&x, &g, 1.0, &mut grad);
        let max_norm = (0..n)
            .map(|i| riemannian_grad_norm(space.kind, &pts[i], &grad[i * k..(i + 1) * k]))
            .fold(0.0, f64::max);
        if max_norm == 0.0 {
            // Restart from a fresh point so the run keeps moving.
            pts = Embedding::random(space, n, 5.0, &mut rng::stream(911, t))
                .points()
                .map(<[f64]>::to_vec)
                .collect();
            continue;
        }
        let scale = 0.5 / (1.0 + t as f64).sqrt() / max_norm;
        for (i, p) in pts.iter_mut().enumerate() {
            riemannian_step_in_place(&space, p, &grad[i * k..(i + 1) * k], scale).unwrap();
            worst = worst.max(hyperboloid_residual(p));
        }
    }
    worst
}

/// Exhaustive packing count by memoized search over used-vertex masks: the
/// lowest free vertex is either left out, a center, or a leaf.
fn brute_force_packing(g: &Graph, k: usize) -> usize {
    fn subsets(
        items: &[usize],
        k: usize,
        start: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            subsets(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    fn go(g: &Graph, k: usize, used: u32, memo: &mut HashMap<u32, usize>) -> usize {
        let n = g.vertex_count();
        let Some(v) = (0..n).find(|&v| used & (1 << v) == 0) else {
            return 0;
        };
        if let Some(&c) = memo.get(&used) {
            return c;
        }
        let free = |u: &usize| used & (1 << u) == 0;
        let mut best = go(g, k, used | (1 << v), memo);
        let mut star = |center: usize, fixed: Option<usize>| {
            let pool: Vec<usize> = g
                .neighbors(center)
                .iter()
                .copied()
                .filter(|u| free(u) && Some(*u) != fixed)
                .collect();
            let need = k - fixed.is_some() as usize;
            let mut picks = Vec::new();
            subsets(&pool, need, 0, &mut Vec::new(), &mut picks);
            picks
                .into_iter()
                .map(|p| {
                    let mask = p
                        .iter()
                        .fold((1u32 << center) | fixed.map_or(0, |f| 1 << f), |m, &u| {
                            m | (1 << u)
                        });
                    1 + go(g, k, used | mask, memo)
                })
                .max()
        };
        if let Some(c) = star(v, None) {
            best = best.max(c);
        }
        for &c in g.neighbors(v).iter().filter(|u| free(u)) {
            if let Some(x) = star(c, Some(v)) {
                best = best.max(x);
            }
        }
        memo.insert(used, best);
        best
    }
    go(g, k, 0, &mut HashMap::new())
}

fn criterion_10_star_packing() -> bool {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    for t in 0..200u64 {
        let n = 2 + (t as usize * 7) % 19;
        let k = 1 + (t as usize) % 6;
        let tree = random_recursive_tree(n, &mut rng::stream(1010, t)).unwrap();
        let dp = max_disjoint_star_packing(&tree, k).unwrap();
        let bf = brute_force_packing(&tree, k);
        if dp.count != bf || !dp.exact {
            mismatches.push(format!("tree {t} (|V|={n}, k={k}): {} vs {bf}", dp.count));
        }
    }
    let k16 = max_disjoint_star_packing(&star_graph(6).unwrap(), 6)
        .unwrap()
        .count;
    let p2 = sphere_packing_number(2);
    let pass = mismatches.is_empty() && k16 == 1 && p2 == Some(5);
    let detail = format!("200 trees, mismatches {mismatches:?}, K_1,6 -> {k16}, p(2) = {p2:?}");
    verdict(10, "star packing", pass, &detail, start)
}

fn main() {
    let criteria: [(u32, fn() -> bool); 10] = [
        (1, criterion_01_example_q1),
        (2, criterion_02_example_q2),
        (3, criterion_03_old_bound_threshold),
        (4, criterion_04_spectra),
        (5, criterion_05_fixed_point),
        (6, criterion_06_rc_bound_validity),
        (7, criterion_07_oracle_equivalence),
        (8, criterion_08_excess_risk_sweep),
        (9, criterion_09_geometry),
        (10, criterion_10_star_packing),
    ];
    let mut failed = Vec::new();
    for (id, run) in criteria {
        match std::panic::catch_unwind(run) {
            Ok(true) => {}
            Ok(false) => failed.push(id),
            Err(_) => {
                println!("criterion {id:>2} FAIL: panicked");
                failed.push(id);
            }
        }
    }
    println!(
        "acceptance: {} passed, {} failed {failed:?}",
        criteria.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
