use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use serde::Serialize;

use rieszcap::decay::{
    capacity_curve, curve_csv, decay_report, exact_sphere_curve, figure_curve, fractal_probe_table, fractal_target,
    geometric_grid, probe_csv, rectifiable_target, Scheme, SolverConfig,
};
use rieszcap::density::{
    ahlfors_constant_on, average_second_order_density, ball_counting, default_eta_schedule, first_order_density,
    log_grid, resolution_floor, sample_centers, second_order_at, trace_csv, DensityEstimate, SecondOrderMethod,
};
use rieszcap::energy::{
    calibrate_diag, kernel_matrix, solve_equilibrium, sphere_capacity_exact, weights_csv, Calibration, DiagPolicy,
};
use rieszcap::geometry::{self, io, IfsSpec, PointCloud};
use rieszcap::primitives::unit_sphere_area;
use rieszcap::properties::{all_passed, report_json, report_text, run_suite, Suite, SuiteOptions};
use rieszcap::{Error, Execution};

use crate::args::{
    CapacityArgs, Cli, Command, DecayArgs, DensityArgs, DensityKindArg, DiagArgs, GenKind, PolicyKind, SchemeArg,
    VerifyArgs,
};
use crate::config::{header, write_file};

pub enum Outcome {
    Pass,
    Fail,
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    rieszcap::exec::force_sequential(cli.sequential);
    let hdr = header(cli);
    match &cli.command {
        Command::Gen(g) => gen(&g.kind, cli.seed, &hdr),
        Command::Capacity(a) => capacity(a, &hdr),
        Command::Decay(a) => decay(a, cli, &hdr),
        Command::Density(a) => density(a, cli.seed, &hdr),
        Command::Verify(a) => verify(a, cli.seed, &hdr),
    }
}

fn exec(cli: &Cli) -> Execution {
    if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_cloud(cloud: &PointCloud, out: Option<&Path>, hdr: &str) -> Result<()> {
    match out {
        Some(path) if path.extension().is_some_and(|e| e == "json") => write_file(path, &io::to_json(cloud)?),
        Some(path) => Ok(io::save_csv(cloud, path, Some(hdr))?),
        None => {
            print!("{}", io::to_csv_string(cloud, Some(hdr)));
            Ok(())
        }
    }
}

fn gen(kind: &GenKind, seed: u64, hdr: &str) -> Result<Outcome> {
    let (cloud, out) = match kind {
        GenKind::Sphere { d, n_points, ambient, out } => {
            (geometry::sample_sphere(*d, ambient.unwrap_or(d + 1), *n_points, seed)?, out)
        }
        GenKind::Cube { d, m, ambient, offset, out } => (geometry::sample_cube(*d, ambient.unwrap_or(*d), *m, offset)?, out),
        GenKind::Union { inputs, out } => {
            let clouds = inputs.iter().map(|p| io::load(p)).collect::<rieszcap::Result<Vec<_>>>()?;
            (geometry::union(&clouds)?, out)
        }
        GenKind::Ifs { set, depth, out } => {
            let spec = if set.cantor {
                IfsSpec::cantor()
            } else if set.dust {
                IfsSpec::planar_dust()
            } else {
                let path = set.spec.as_ref().expect("clap enforces one IFS choice");
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let spec: IfsSpec = serde_json::from_str(&text).context("parsing IFS spec")?;
                spec.validate()?;
                spec
            };
            (spec.attractor(*depth)?, out)
        }
    };
    write_cloud(&cloud, out.out.as_deref(), hdr)?;
    eprintln!(
        "{}: {} points in R^{}, d = {:.6}, total weight {:.12}",
        cloud.label(),
        cloud.len(),
        cloud.ambient_dim(),
        cloud.target_dim(),
        cloud.total_weight()
    );
    Ok(Outcome::Pass)
}

fn integer_dim(d: f64) -> Result<usize> {
    if d >= 1.0 && d.fract() == 0.0 {
        Ok(d as usize)
    } else {
        Err(Error::InvalidArgument(format!("calibration needs an integer dimension, cloud has d = {d}")).into())
    }
}

fn policy_kind(kind: PolicyKind, c: f64) -> DiagPolicy {
    match kind {
        PolicyKind::CellBall => DiagPolicy::CellBall { c },
        PolicyKind::CellSelfEnergy => DiagPolicy::CellSelfEnergy { c },
    }
}

/// Diagonal policy from the flags, calibrating at `p_ref` when requested
/// (or when `default_ref` applies and no constant was given).
fn resolve_policy(diag: &DiagArgs, cloud: &PointCloud, default_ref: Option<f64>) -> Result<(DiagPolicy, Option<Calibration>)> {
    let base = policy_kind(diag.diag_policy, 1.0);
    if let Some(c) = diag.diag_c {
        return Ok((base.with_constant(c), None));
    }
    let d = cloud.target_dim();
    let p_ref = match (diag.calibrate_at, default_ref) {
        (Some(p), _) => Some(p),
        (None, Some(p)) if d.fract() == 0.0 => Some(p),
        _ => None,
    };
    match p_ref {
        Some(p_ref) => {
            let points = diag.calibration_points.unwrap_or(cloud.len());
            let cal = calibrate_diag(integer_dim(d)?, p_ref, points, base)?;
            Ok((cal.policy, Some(cal)))
        }
        None => Ok((base, None)),
    }
}

fn check_exponent(p: f64, d: f64) -> Result<()> {
    if p > 0.0 && p < d {
        Ok(())
    } else {
        Err(Error::ExponentOutOfRange { p, d }.into())
    }
}

#[derive(Serialize)]
struct CapacitySummary {
    header: String,
    label: String,
    p: f64,
    capacity: f64,
    energy: Option<f64>,
    bound_direction: String,
    diag_policy: Option<DiagPolicy>,
    calibration: Option<Calibration>,
    converged: bool,
    iterations: usize,
    gap: Option<f64>,
}

fn capacity(a: &CapacityArgs, hdr: &str) -> Result<Outcome> {
    let summary = if a.exact_sphere {
        let d = a.d.expect("clap requires --d");
        check_exponent(a.p, d as f64)?;
        CapacitySummary {
            header: hdr.to_string(),
            label: format!("sphere(d={d})"),
            p: a.p,
            capacity: sphere_capacity_exact(d, a.p)?,
            energy: None,
            bound_direction: "exact".into(),
            diag_policy: None,
            calibration: None,
            converged: true,
            iterations: 0,
            gap: None,
        }
    } else {
        let path = a.cloud.as_ref().expect("clap requires --cloud");
        let cloud = io::load(path)?;
        check_exponent(a.p, cloud.target_dim())?;
        let (policy, calibration) = resolve_policy(&a.diag, &cloud, None)?;
        let k = kernel_matrix(&cloud, a.p, policy)?;
        if let Some(m) = &a.matrix_out {
            let f = File::create(m).with_context(|| format!("creating {}", m.display()))?;
            k.write_binary(BufWriter::new(f))?;
        }
        let sol = solve_equilibrium(&k, a.diag.tol, a.diag.max_iter)?;
        if let Some(w) = &a.weights_out {
            write_file(w, &weights_csv(&sol.weights, Some(hdr)))?;
        }
        CapacitySummary {
            header: hdr.to_string(),
            label: cloud.label().to_string(),
            p: a.p,
            capacity: sol.capacity(),
            energy: Some(sol.estimate.value),
            bound_direction: sol.estimate.bound_direction.reversed().as_str().into(),
            diag_policy: Some(policy),
            calibration,
            converged: sol.converged,
            iterations: sol.iterations,
            gap: Some(sol.gap),
        }
    };
    let mut text = String::new();
    for line in hdr.lines() {
        let _ = writeln!(text, "# {line}");
    }
    let _ = writeln!(text, "set = {}", summary.label);
    let _ = writeln!(text, "p = {}", summary.p);
    let _ = writeln!(text, "capacity = {}", io::fmt_f64(summary.capacity));
    if let Some(e) = summary.energy {
        let _ = writeln!(text, "energy = {}", io::fmt_f64(e));
    }
    let _ = writeln!(text, "bound_direction = {}", summary.bound_direction);
    if let Some(policy) = summary.diag_policy {
        let _ = writeln!(text, "diag_policy = {policy:?}");
        let _ = writeln!(text, "converged = {} (iterations {}, gap {:.3e})", summary.converged, summary.iterations, summary.gap.unwrap_or(0.0));
    }
    print!("{text}");
    if let Some(out) = &a.out {
        write_file(out, &serde_json::to_string_pretty(&summary)?)?;
    }
    if !summary.converged && !a.allow_nonconverged {
        eprintln!("error: equilibrium solver did not reach tolerance {}; pass --allow-nonconverged to accept", a.diag.tol);
        return Ok(Outcome::Fail);
    }
    Ok(Outcome::Pass)
}

fn scheme(s: SchemeArg) -> Scheme {
    match s {
        SchemeArg::Last => Scheme::Last,
        SchemeArg::LinearInGap => Scheme::LinearInGap,
        SchemeArg::Richardson => Scheme::Richardson,
    }
}

fn grid(a: &DecayArgs, d: f64) -> Result<Vec<f64>> {
    if !a.p.is_empty() {
        return Ok(a.p.clone());
    }
    Ok(geometric_grid(d, a.first_gap.min(0.999 * d), a.last_gap, a.count)?)
}

fn decay(a: &DecayArgs, cli: &Cli, hdr: &str) -> Result<Outcome> {
    if a.figures {
        let dir = a.out_dir.as_ref().expect("clap requires --out-dir");
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for d in 1..=3 {
            let curve = figure_curve(d, a.figure_points)?;
            let path = dir.join(format!("figure_d{d}.csv"));
            write_file(&path, &curve_csv(&curve, Some(hdr)))?;
            println!("wrote {}", path.display());
        }
        return Ok(Outcome::Pass);
    }
    if let Some(name) = &a.ifs {
        return decay_ifs(a, name, cli, hdr);
    }
    let (curve, h_true) = if a.exact_sphere {
        let d = a.d.expect("clap requires --d");
        let g = grid(a, d as f64)?;
        (exact_sphere_curve(d, &g)?, Some(unit_sphere_area(d as f64 + 1.0)?))
    } else {
        let path = a.cloud.as_ref().ok_or_else(|| anyhow!(Error::InvalidArgument("decay needs --cloud, --exact-sphere, --ifs or --figures".into())))?;
        let cloud = io::load(path)?;
        let g = grid(a, cloud.target_dim())?;
        let (policy, cal) = resolve_policy(&a.diag, &cloud, g.last().copied())?;
        if let Some(cal) = &cal {
            println!("# calibrated c = {:.12} at p = {} (relative error {:.2e})", cal.constant(), cal.p_ref, cal.relative_error);
        }
        let solver = SolverConfig { diag: policy, tol: a.diag.tol, max_iter: a.diag.max_iter };
        (capacity_curve(&cloud, &g, &solver)?, None)
    };
    let d = curve.d;
    let report = decay_report(curve, scheme(a.scheme))?;
    emit(a.out.as_deref(), &curve_csv(&report.curve, Some(hdr)))?;
    let mut text = String::new();
    let _ = writeln!(text, "# set = {}", report.curve.source.label);
    let _ = writeln!(text, "# limit ({}) = {:.10}", report.extrapolation.scheme.name(), report.extrapolation.limit);
    let _ = writeln!(text, "# hausdorff_estimate = {:.10}", report.hausdorff);
    if let Some(h) = h_true {
        let _ = writeln!(text, "# hausdorff_exact = {:.10} (limit target {:.10})", h, rectifiable_target(h, d)?);
    }
    let failed = report.curve.entries.iter().filter(|e| !e.is_ok()).count();
    if failed > 0 {
        let _ = writeln!(text, "# failed entries = {failed}");
    }
    if a.out.is_some() {
        print!("{text}");
    } else {
        eprint!("{text}");
    }
    Ok(if failed > 0 { Outcome::Fail } else { Outcome::Pass })
}

fn decay_ifs(a: &DecayArgs, name: &str, cli: &Cli, hdr: &str) -> Result<Outcome> {
    let spec = if name == "dust" { IfsSpec::planar_dust() } else { IfsSpec::cantor() };
    let d = spec.similarity_dimension();
    let g = grid(a, d)?;
    let rows = fractal_probe_table(&spec, &a.depths, &g, exec(cli))?;
    emit(a.out.as_deref(), &probe_csv(&rows, Some(hdr)))?;
    let depth = a.depths.iter().copied().max().unwrap_or(10).min(12);
    let cloud = spec.attractor(depth)?;
    let floor = resolution_floor(&cloud, 3.0, 0.5)?;
    let sigma = average_second_order_density(&cloud, d, 256, cli.seed, floor, &SecondOrderMethod::p_form(d), exec(cli))?
        .estimate
        .value;
    let mut text = String::new();
    let _ = writeln!(text, "# set = {} (d = {d:.6})", cloud.label());
    let _ = writeln!(text, "# sigma_d estimate = {sigma:.6}, d*sigma = {:.6}", d * sigma);
    let _ = writeln!(text, "# fractal target H/(d sigma) = {:.6}", fractal_target(cloud.total_weight(), d, sigma)?);
    let _ = writeln!(text, "# rectifiable-style target H/|S^(d-1)| = {:.6}", rectifiable_target(cloud.total_weight(), d)?);
    let _ = writeln!(text, "# table entries are certified capacity lower bounds; ratios are exploratory");
    if a.out.is_some() {
        print!("{text}");
    } else {
        eprint!("{text}");
    }
    Ok(Outcome::Pass)
}

fn density(a: &DensityArgs, seed: u64, hdr: &str) -> Result<Outcome> {
    let cloud = io::load(&a.cloud)?;
    let d = a.d.unwrap_or(cloud.target_dim());
    let floor = resolution_floor(&cloud, a.floor_factor, a.floor_quantile)?;
    let centers = match a.center {
        Some(c) if c >= cloud.len() => {
            return Err(Error::InvalidArgument(format!("center {c} out of range for {} points", cloud.len())).into())
        }
        Some(c) => vec![c],
        None => sample_centers(&cloud, a.average, seed)?,
    };
    let mut text = String::new();
    let _ = writeln!(text, "# set = {}, d = {d}, floor = {floor:.6e}, centers = {}", cloud.label(), centers.len());
    let estimates: Vec<DensityEstimate> = match a.kind {
        DensityKindArg::Ahlfors => {
            let grid = log_grid(cloud.extent(), floor * (1.0 + 1e-12), 32);
            let c = ahlfors_constant_on(&cloud, d, &grid, Execution::default())?;
            let _ = writeln!(text, "ahlfors_constant = {}", io::fmt_f64(c));
            print!("{text}");
            return Ok(Outcome::Pass);
        }
        DensityKindArg::First => {
            let grid = log_grid(a.r_max, floor * 1.01, 24);
            centers
                .iter()
                .map(|&c| {
                    let b = ball_counting(&cloud, cloud.point(c))?;
                    let mut e = first_order_density(&b, d, &grid, floor)?;
                    e.center = Some(c);
                    Ok(e)
                })
                .collect::<rieszcap::Result<Vec<_>>>()?
        }
        kind => {
            let method = match kind {
                DensityKindArg::SecondLog => SecondOrderMethod::LogForm {
                    eta_schedule: if a.etas.is_empty() { default_eta_schedule(floor) } else { a.etas.clone() },
                },
                _ => SecondOrderMethod::PForm {
                    p_schedule: a.gaps.iter().map(|g| d - g).collect(),
                    scheme: scheme(a.scheme),
                    upper: matches!(kind, DensityKindArg::SecondUpper),
                },
            };
            centers
                .iter()
                .map(|&c| second_order_at(&cloud, c, d, floor, &method))
                .collect::<rieszcap::Result<Vec<_>>>()?
        }
    };
    let n = estimates.len() as f64;
    let mean = estimates.iter().map(|e| e.value).sum::<f64>() / n;
    let std = (estimates.iter().map(|e| (e.value - mean).powi(2)).sum::<f64>() / n).sqrt();
    let _ = writeln!(text, "kind = {}", estimates[0].kind.name());
    let _ = writeln!(text, "value = {}", io::fmt_f64(mean));
    let _ = writeln!(text, "std_across_centers = {}", io::fmt_f64(std));
    if let Some(s) = estimates[0].spread.filter(|_| estimates.len() == 1) {
        let _ = writeln!(text, "fit_scatter = {s:.6}");
    }
    print!("{text}");
    if let Some(out) = &a.out {
        write_file(out, &trace_csv(&estimates, Some(hdr)))?;
    }
    Ok(Outcome::Pass)
}

fn verify(a: &VerifyArgs, seed: u64, hdr: &str) -> Result<Outcome> {
    let suite: Suite = a.suite.parse()?;
    let opts = SuiteOptions {
        seed,
        instances: a.instances,
        gotz_cases: a.cases,
        exact: a.exact,
        dims: a.d.map_or_else(|| vec![1, 2, 3], |d| vec![d]),
    };
    let reports = run_suite(suite, &opts)?;
    for line in hdr.lines() {
        println!("# {line}");
    }
    print!("{}", report_text(&reports));
    if let Some(path) = &a.json {
        write_file(path, &report_json(&reports)?)?;
    }
    Ok(if all_passed(&reports) { Outcome::Pass } else { Outcome::Fail })
}
