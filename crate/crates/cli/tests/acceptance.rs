//! End-to-end acceptance gate. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use rieszcap::decay::{
    capacity_curve, decay_ratio, exact_sphere_curve, extrapolate_limit, fractal_probe_table, geometric_grid,
    hausdorff_from_decay, rectifiable_denominator, Scheme, SolverConfig,
};
use rieszcap::density::{
    average_second_order_density, default_floor, first_order_density, ball_counting, log_grid, sample_centers,
    SecondOrderMethod,
};
use rieszcap::energy::{calibrate_diag, sphere_capacity_exact, BoundDirection, DiagPolicy};
use rieszcap::geometry::{sample_sphere, IfsSpec};
use rieszcap::primitives::unit_sphere_area;
use rieszcap::properties::{all_passed, run_suite, Suite, SuiteOptions};
use rieszcap::Execution;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn(&mut Shared) -> Outcome,
}

#[derive(Default)]
struct Shared {
    cantor_sigma_depth10: Option<f64>,
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn sphere_limit_target(d: usize) -> f64 {
    let df = d as f64;
    unit_sphere_area(df + 1.0).unwrap() / unit_sphere_area(df).unwrap()
}

fn oracle_limit(d: usize) -> f64 {
    let grid: Vec<f64> = [0.04, 0.02, 0.01].iter().map(|g| d as f64 - g).collect();
    let curve = exact_sphere_curve(d, &grid).unwrap();
    extrapolate_limit(d as f64, &decay_ratio(&curve), Scheme::Richardson).unwrap().limit
}

fn c1(_: &mut Shared) -> Outcome {
    let mut worst: f64 = 0.0;
    for p in [0.25f64, 0.5, 1.0, 1.5, 1.9] {
        let exact = 2.0 * (1.0 - p / 2.0).powf(1.0 / p);
        worst = worst.max((sphere_capacity_exact(2, p).map_err(|e| e.to_string())? - exact).abs());
    }
    check(worst <= 1e-10, format!("max |cap - 2(1-p/2)^(1/p)| = {worst:.2e}"))
}

fn c2(_: &mut Shared) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for d in 1..=3 {
        let (limit, target) = (oracle_limit(d), sphere_limit_target(d));
        ok &= (limit - target).abs() <= 1e-3;
        parts.push(format!("d={d}: {limit:.6} vs {target:.6}"));
    }
    check(ok, parts.join("; "))
}

fn c3(_: &mut Shared) -> Outcome {
    let n = 2000;
    let grid = geometric_grid(1.0, 0.5, 0.02, 6).map_err(|e| e.to_string())?;
    let p_ref = *grid.last().unwrap();
    let cal = calibrate_diag(1, p_ref, n, DiagPolicy::CellSelfEnergy { c: 1.0 }).map_err(|e| e.to_string())?;
    let cloud = sample_sphere(1, 2, n, 0).map_err(|e| e.to_string())?;
    let solver = SolverConfig { diag: cal.policy, tol: 1e-10, max_iter: 200_000 };
    let curve = capacity_curve(&cloud, &grid, &solver).map_err(|e| e.to_string())?;
    if curve.entries.iter().any(|e| !e.converged) {
        return Err("equilibrium solve did not converge".into());
    }
    let ex = extrapolate_limit(1.0, &decay_ratio(&curve), Scheme::Richardson).map_err(|e| e.to_string())?;
    let h = hausdorff_from_decay(ex.limit, 1.0).map_err(|e| e.to_string())?;
    let two_pi = 2.0 * std::f64::consts::PI;
    check(
        rel(h, two_pi) <= 0.10,
        format!("c = {:.4} (p_ref = {p_ref}), limit = {:.5}, H = {h:.5} vs 2pi = {two_pi:.5} (rel err {:.2e})", cal.constant(), ex.limit, rel(h, two_pi)),
    )
}

fn c4(_: &mut Shared) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for d in 1..=3usize {
        let df = d as f64;
        let c = 1.1 * oracle_limit(d);
        for k in 0..50 {
            let p = df - 0.5 + 0.5 * k as f64 / 50.0;
            let cap = sphere_capacity_exact(d, p).map_err(|e| e.to_string())?;
            worst = worst.max(cap.powf(p) / (c * (df - p)));
        }
    }
    check(worst <= 1.0, format!("max cap^p / (1.1 L (d-p)) = {worst:.5} over 150 samples"))
}

fn c5(_: &mut Shared) -> Outcome {
    let opts = SuiteOptions { seed: 7, instances: 200, ..SuiteOptions::default() };
    let reports = run_suite(Suite::Subadditivity, &opts).map_err(|e| e.to_string())?;
    let equality = &reports[0];
    let min_margin = reports[1..].iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    check(
        all_passed(&reports) && reports.len() == 201,
        format!("{} random instances, min margin {min_margin:.3e}; equality case {}", reports.len() - 1, if equality.passed { "reproduced" } else { "missed" }),
    )
}

fn c6(_: &mut Shared) -> Outcome {
    let opts = SuiteOptions { seed: 11, gotz_cases: 50, ..SuiteOptions::default() };
    let reports = run_suite(Suite::Gotz, &opts).map_err(|e| e.to_string())?;
    let worst = reports.iter().map(|r| r.tolerance - r.margin).fold(0.0, f64::max);
    check(all_passed(&reports) && reports.len() == 50, format!("50 cases, worst relative difference {worst:.2e}"))
}

fn c7(_: &mut Shared) -> Outcome {
    let cloud = sample_sphere(1, 2, 4000, 0).map_err(|e| e.to_string())?;
    let floor = default_floor(&cloud).map_err(|e| e.to_string())?;
    let centers = sample_centers(&cloud, 64, 0).map_err(|e| e.to_string())?;
    let grid = log_grid(0.5, floor * 1.01, 24);
    let mut rho = 0.0;
    for &c in &centers {
        let b = ball_counting(&cloud, cloud.point(c)).map_err(|e| e.to_string())?;
        rho += first_order_density(&b, 1.0, &grid, floor).map_err(|e| e.to_string())?.value;
    }
    rho /= centers.len() as f64;
    let pform = average_second_order_density(&cloud, 1.0, 64, 0, floor, &SecondOrderMethod::p_form(1.0), Execution::default())
        .map_err(|e| e.to_string())?
        .estimate
        .value;
    let logform = average_second_order_density(&cloud, 1.0, 64, 0, floor, &SecondOrderMethod::log_form(floor), Execution::default())
        .map_err(|e| e.to_string())?
        .estimate
        .value;
    check(
        rel(rho, 2.0) <= 0.05 && rel(pform, 2.0) <= 0.05 && rel(logform, pform) <= 0.05,
        format!("rho = {rho:.5}, sigma(p-form) = {pform:.5}, sigma(log-form) = {logform:.5}"),
    )
}

fn cantor_sigma(depth: usize) -> Result<f64, String> {
    let cloud = IfsSpec::cantor().attractor(depth).map_err(|e| e.to_string())?;
    let d = cloud.target_dim();
    let floor = default_floor(&cloud).map_err(|e| e.to_string())?;
    let avg = average_second_order_density(&cloud, d, 256, 0, floor, &SecondOrderMethod::p_form(d), Execution::default())
        .map_err(|e| e.to_string())?;
    Ok(avg.estimate.value)
}

fn c8(shared: &mut Shared) -> Outcome {
    let s: Vec<f64> = [8, 10, 12].iter().map(|&k| cantor_sigma(k)).collect::<Result<_, _>>()?;
    shared.cantor_sigma_depth10 = Some(s[1]);
    let spread = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / s.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    check(
        rel(s[1], 0.9654) <= 0.03 && spread <= 0.03,
        format!("sigma at depths 8/10/12 = {:.5}/{:.5}/{:.5}; depth 10 vs 0.9654: {:.2e}; spread {spread:.2e}", s[0], s[1], s[2], rel(s[1], 0.9654)),
    )
}

fn c9(shared: &mut Shared) -> Outcome {
    let d = IfsSpec::cantor().similarity_dimension();
    let sigma = match shared.cantor_sigma_depth10 {
        Some(s) => s,
        None => cantor_sigma(10)?,
    };
    let fractal = d * sigma;
    let rectifiable = rectifiable_denominator(d).map_err(|e| e.to_string())?;
    check(
        rel(fractal, 0.6091) <= 0.03 && fractal < rectifiable,
        format!("d*sigma = {fractal:.5} (vs 0.6091: {:.2e}) < |S^(d-1)| = {rectifiable:.5}", rel(fractal, 0.6091)),
    )
}

fn c10(_: &mut Shared) -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_rieszcap"))
        .args(["verify", "invariants", "--exact", "--seed", "0"])
        .output()
        .map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout);
    let summary = text.lines().last().unwrap_or("").to_string();
    check(out.status.code() == Some(0), format!("`verify invariants --exact` exit {:?}: {summary}", out.status.code()))
}

fn c11(_: &mut Shared) -> Outcome {
    let spec = IfsSpec::cantor();
    let d = spec.similarity_dimension();
    let grid = geometric_grid(d, 0.5, 0.02, 6).map_err(|e| e.to_string())?;
    let depths: Vec<usize> = (8..=12).collect();
    let par = fractal_probe_table(&spec, &depths, &grid, Execution::Parallel).map_err(|e| e.to_string())?;
    let seq = fractal_probe_table(&spec, &depths, &grid, Execution::Sequential).map_err(|e| e.to_string())?;
    let lower = par.iter().all(|r| r.bound_direction == BoundDirection::Lower);
    let mut monotone = true;
    for j in 0..grid.len() {
        for k in 1..depths.len() {
            monotone &= par[k * grid.len() + j].cap >= par[(k - 1) * grid.len() + j].cap;
        }
    }
    let last = &par[par.len() - 1];
    check(
        par == seq && lower && monotone,
        format!(
            "{} entries, deterministic {}, all lower {lower}, nondecreasing in depth {monotone}; depth 12 ratio at p = {:.3}: {:.4} (fractal target 1/0.6091 = {:.4})",
            par.len(),
            par == seq,
            last.p,
            last.ratio,
            1.0 / 0.6091
        ),
    )
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "sphere oracle exactness", budget: Duration::from_secs(1), run: c1 },
        Criterion { id: 2, name: "decay limit via oracle", budget: Duration::from_secs(1), run: c2 },
        Criterion { id: 3, name: "Hausdorff recovery, numeric circle", budget: Duration::from_secs(300), run: c3 },
        Criterion { id: 4, name: "zero d-capacity bound", budget: Duration::from_secs(1), run: c4 },
        Criterion { id: 5, name: "subadditivity", budget: Duration::from_secs(120), run: c5 },
        Criterion { id: 6, name: "radial energy identity", budget: Duration::from_secs(10), run: c6 },
        Criterion { id: 7, name: "densities on the circle", budget: Duration::from_secs(60), run: c7 },
        Criterion { id: 8, name: "Cantor second-order density", budget: Duration::from_secs(300), run: c8 },
        Criterion { id: 9, name: "fractal vs rectifiable denominators", budget: Duration::from_secs(1), run: c9 },
        Criterion { id: 10, name: "invariant suites under verify", budget: Duration::from_secs(60), run: c10 },
        Criterion { id: 11, name: "Cantor decay probe table", budget: Duration::from_secs(600), run: c11 },
    ];
    let mut shared = Shared::default();
    let mut failures = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = (c.run)(&mut shared);
        let elapsed = start.elapsed();
        let (ok, msg) = match result {
            Ok(m) => (elapsed <= c.budget, m),
            Err(m) => (false, m),
        };
        if !ok {
            failures += 1;
        }
        println!(
            "criterion {:>2} [{}] {}: {msg} ({:.2?}, budget {:?})",
            c.id,
            if ok { "PASS" } else { "FAIL" },
            c.name,
            elapsed,
            c.budget
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
