//! Executable checks of the structural properties: subadditivity of
//! reciprocal energy, monotonicity of capacity in `p`, dilation and
//! measure scaling, the radial energy identity, density lemmas, and IFS
//! weight conservation.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decay::{capacity_curve, default_grid, exact_sphere_curve, CapacityCurve, SolverConfig};
use crate::density::{
    ball_counting, default_floor, first_order_density, log_grid, second_order_at, SecondOrderMethod,
};
use crate::energy::{
    calibrate_diag, capacity_from_energy, exact_simplex_quadratic_min, gotz_energy, kernel_matrix, trial_energy,
    DiagPolicy, MAX_EXACT_SIZE,
};
use crate::error::{invalid, Error, Result};
use crate::geometry::{sample_cube, sample_sphere, IfsSpec, PointCloud, DEFAULT_POINT_CAP};
use crate::primitives::unit_ball_volume;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub name: String,
    pub passed: bool,
    /// Not applicable to the input; counts as passed.
    pub skipped: bool,
    /// Slack left before the check would fail; negative on failure.
    pub margin: f64,
    /// SHA-256 of the serialized instance.
    pub digest: String,
    pub tolerance: f64,
    pub detail: String,
}

impl PropertyReport {
    fn from_margin(name: impl Into<String>, margin: f64, tolerance: f64, digest: String, detail: String) -> Self {
        Self { name: name.into(), passed: margin >= 0.0, skipped: false, margin, digest, tolerance, detail }
    }

    fn skipped(name: impl Into<String>, digest: String, detail: String) -> Self {
        Self { name: name.into(), passed: true, skipped: true, margin: 0.0, digest, tolerance: 0.0, detail }
    }
}

pub fn digest_of<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("instances serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A nonnegative symmetric matrix with a cover of its index set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubadditivityInstance {
    pub size: usize,
    /// Row-major entries.
    pub g: Vec<f64>,
    /// Index subsets; overlaps and empty parts allowed.
    pub parts: Vec<Vec<usize>>,
    pub seed: u64,
}

impl SubadditivityInstance {
    pub fn new(g: DMatrix<f64>, parts: Vec<Vec<usize>>, seed: u64) -> Result<Self> {
        let size = g.nrows();
        if g.ncols() != size {
            return Err(Error::DimensionMismatch("G must be square".into()));
        }
        if size > MAX_EXACT_SIZE {
            return Err(Error::SizeCap { size, cap: MAX_EXACT_SIZE });
        }
        for i in 0..size {
            for j in 0..size {
                if !(g[(i, j)] >= 0.0) || g[(i, j)] != g[(j, i)] {
                    return Err(invalid("G must be symmetric with nonnegative entries"));
                }
            }
        }
        if parts.iter().flatten().any(|i| *i >= size) {
            return Err(invalid("part index out of range"));
        }
        if (0..size).any(|i| !parts.iter().any(|p| p.contains(&i))) {
            return Err(invalid("parts do not cover every index"));
        }
        let g = (0..size).flat_map(|i| (0..size).map(move |j| (i, j))).map(|(i, j)| g[(i, j)]).collect();
        Ok(Self { size, g, parts, seed })
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.size, self.size, &self.g)
    }

    /// Random instance: `N ≤ n_max`, `G = BᵀB + δI` with `B ≥ 0`, and a
    /// random cover. Some draws use a rank-one `B` and tiny `δ`, parts of
    /// size one, or a part equal to the whole set.
    pub fn random(seed: u64, n_max: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=n_max.clamp(1, MAX_EXACT_SIZE));
        let near_singular = rng.random_bool(0.2);
        let rank = if near_singular { 1 } else { rng.random_range(1..=n) };
        let b: Vec<f64> = (0..rank * n).map(|_| rng.random::<f64>()).collect();
        let delta = if near_singular { 1e-9 } else { rng.random_range(0.0..0.5) };
        let g = DMatrix::from_fn(n, n, |i, j| {
            let s: f64 = (0..rank).map(|r| b[r * n + i] * b[r * n + j]).sum();
            if i == j { s + delta } else { s }
        });
        // make G exactly symmetric
        let g = DMatrix::from_fn(n, n, |i, j| if i <= j { g[(i, j)] } else { g[(j, i)] });
        let n_parts = rng.random_range(1..=4);
        let mut parts: Vec<Vec<usize>> = (0..n_parts)
            .map(|_| {
                if rng.random_bool(0.2) {
                    vec![rng.random_range(0..n)]
                } else {
                    (0..n).filter(|_| rng.random_bool(0.5)).collect()
                }
            })
            .collect();
        if rng.random_bool(0.1) {
            parts.push((0..n).collect());
        }
        for i in 0..n {
            if !parts.iter().any(|p| p.contains(&i)) {
                let k = rng.random_range(0..parts.len());
                parts[k].push(i);
            }
        }
        for p in &mut parts {
            p.sort_unstable();
            p.dedup();
        }
        parts.shuffle(&mut rng);
        Self::new(g, parts, seed)
    }
}

/// Minimum energy `W(E)` of the principal submatrix on `subset`; `∞` for
/// the empty set.
pub fn restricted_energy(g: &DMatrix<f64>, subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return Ok(f64::INFINITY);
    }
    let sub = DMatrix::from_fn(subset.len(), subset.len(), |a, b| g[(subset[a], subset[b])]);
    Ok(exact_simplex_quadratic_min(&sub)?.value)
}

/// `1/W(∪ E_i) ≤ Σ 1/W(E_i) + tol` with exact minima.
pub fn check_subadditivity(inst: &SubadditivityInstance, tol: f64) -> Result<PropertyReport> {
    let g = inst.matrix();
    let union: Vec<usize> = (0..inst.size).collect();
    let lhs = 1.0 / restricted_energy(&g, &union)?;
    let rhs: f64 = inst
        .parts
        .iter()
        .map(|p| restricted_energy(&g, p).map(|w| 1.0 / w))
        .sum::<Result<f64>>()?;
    let margin = if lhs.is_infinite() {
        if rhs.is_infinite() { 0.0 } else { f64::NEG_INFINITY }
    } else if rhs.is_infinite() {
        f64::INFINITY
    } else {
        rhs + tol - lhs
    };
    Ok(PropertyReport::from_margin(
        "subadditivity",
        margin,
        tol,
        digest_of(inst),
        format!("seed={} N={} parts={} 1/W(union)={lhs:.12e} sum={rhs:.12e}", inst.seed, inst.size, inst.parts.len()),
    ))
}

/// Nonincreasing capacity along the curve, up to relative `tol`.
pub fn check_capacity_monotonic(curve: &CapacityCurve, tol: f64) -> PropertyReport {
    let worst = curve.worst_increase();
    let margin = if worst.is_infinite() { tol } else { tol - worst };
    PropertyReport::from_margin(
        "monotonic",
        margin,
        tol,
        digest_of(curve),
        format!("{} ({} entries), worst relative increase {worst:.3e}", curve.source.label, curve.len()),
    )
}

/// Capacity of the cloud's own normalized measure, pairwise energy only.
fn trial_capacity(cloud: &PointCloud, p: f64) -> Result<f64> {
    let k = kernel_matrix(cloud, p, DiagPolicy::Omit)?;
    let w = cloud.probability_weights();
    Ok(capacity_from_energy(trial_energy(&k, &w)?.value, p))
}

/// `cap_p(sE) = s cap_p(E)` for trial measures, to `1e-9` relative.
pub fn check_scaling(cloud: &PointCloud, s: f64, p: f64) -> Result<PropertyReport> {
    const TOL: f64 = 1e-9;
    if !(s > 0.0) {
        return Err(invalid("dilation factor must be positive"));
    }
    let base = trial_capacity(cloud, p)?;
    let dilated = trial_capacity(&cloud.dilate(s)?, p)?;
    let err = (dilated / (s * base) - 1.0).abs();
    Ok(PropertyReport::from_margin(
        "scaling",
        TOL - err,
        TOL,
        digest_of(&(cloud, s, p)),
        format!("{} s={s} p={p} ratio={:.15}", cloud.label(), dilated / base),
    ))
}

/// Radial (ball-counting) energy equals the double sum, `1e-12` relative.
pub fn check_gotz_identity(cloud: &PointCloud, w: &[f64], p: f64, diag: DiagPolicy) -> Result<PropertyReport> {
    const TOL: f64 = 1e-12;
    let direct = trial_energy(&kernel_matrix(cloud, p, diag)?, w)?.value;
    let radial = gotz_energy(cloud, w, p, f64::INFINITY, diag)?;
    let err = if direct == 0.0 { radial.abs() } else { (radial - direct).abs() / direct };
    Ok(PropertyReport::from_margin(
        "gotz",
        TOL - err,
        TOL,
        digest_of(&(cloud, w, p, diag)),
        format!("{} p={p} direct={direct:.15e} radial={radial:.15e}", cloud.label()),
    ))
}

/// First-order density of the unit ball's volume and agreement with the
/// second-order density, both within 5%, averaged over `centers`.
///
/// Skipped when the first-order fit scatters by more than 5%, the sign
/// that the first-order limit does not exist.
pub fn check_density_lemmas(cloud: &PointCloud, centers: &[usize], r_max: f64) -> Result<PropertyReport> {
    const TOL: f64 = 0.05;
    const MAX_SCATTER: f64 = 0.05;
    if centers.is_empty() || centers.iter().any(|c| *c >= cloud.len()) {
        return Err(invalid("centers must be nonempty valid point indices"));
    }
    let d = cloud.target_dim();
    let floor = default_floor(cloud)?;
    let grid = log_grid(r_max, floor * 1.01, 24);
    let method = SecondOrderMethod::p_form(d);
    let digest = digest_of(&(cloud.label(), centers, r_max));
    let mut rho = 0.0;
    let mut sigma = 0.0;
    for &c in centers {
        let b = ball_counting(cloud, cloud.point(c))?;
        let first = first_order_density(&b, d, &grid, floor)?;
        let scatter = first.spread.unwrap_or(0.0);
        if scatter > MAX_SCATTER {
            return Ok(PropertyReport::skipped(
                "density_lemmas",
                digest,
                format!("{}: first-order scatter {scatter:.3} at center {c}, limit not resolved", cloud.label()),
            ));
        }
        rho += first.value;
        sigma += second_order_at(cloud, c, d, floor, &method)?.value;
    }
    let n = centers.len() as f64;
    let (rho, sigma) = (rho / n, sigma / n);
    let ball = unit_ball_volume(d)?;
    let err = (rho / ball - 1.0).abs().max((rho - sigma).abs() / rho);
    Ok(PropertyReport::from_margin(
        "density_lemmas",
        TOL - err,
        TOL,
        digest,
        format!("{}: rho={rho:.6} sigma={sigma:.6} |B^d|={ball:.6}", cloud.label()),
    ))
}

/// `H/(dσ)` is unchanged when every weight is multiplied by `c`.
///
/// `H` is the cloud's total weight and `σ` its averaged second-order density
/// over the given centers. Checked for exact equality.
pub fn check_measure_scaling(cloud: &PointCloud, c: f64, centers: &[usize]) -> Result<PropertyReport> {
    if centers.is_empty() || centers.iter().any(|c| *c >= cloud.len()) {
        return Err(invalid("centers must be nonempty valid point indices"));
    }
    let d = cloud.target_dim();
    let floor = default_floor(cloud)?;
    let method = SecondOrderMethod::p_form(d);
    let ratio = |cl: &PointCloud| -> Result<f64> {
        let mut sigma = 0.0;
        for &i in centers {
            sigma += second_order_at(cl, i, d, floor, &method)?.value;
        }
        Ok(cl.total_weight() / (d * sigma / centers.len() as f64))
    };
    let base = ratio(cloud)?;
    let scaled = ratio(&cloud.scale_weights(c)?)?;
    let margin = if base == scaled { 0.0 } else { -(scaled / base - 1.0).abs() };
    Ok(PropertyReport::from_margin(
        "measure_scaling",
        margin,
        0.0,
        digest_of(&(cloud.label(), c, centers)),
        format!("{} c={c} H/(d sigma)={base:.15e} scaled={scaled:.15e}", cloud.label()),
    ))
}

/// Refinement conserves total weight (to `1e-12`) and each depth-`k` cell's
/// weight equals the sum of its children at depth `k + 1`.
pub fn check_ifs_weights(spec: &IfsSpec, depth: usize) -> Result<PropertyReport> {
    const TOL: f64 = 1e-12;
    let coarse = spec.cells(depth, DEFAULT_POINT_CAP)?;
    let fine = spec.cells(depth + 1, DEFAULT_POINT_CAP)?;
    let n = spec.maps.len();
    let mut err = (fine.weights.iter().sum::<f64>() - 1.0).abs();
    err = err.max((coarse.weights.iter().sum::<f64>() - 1.0).abs());
    // child word j·|coarse| + m refines coarse word m
    for m in 0..coarse.len() {
        let children: f64 = (0..n).map(|j| fine.weights[j * coarse.len() + m]).sum();
        err = err.max((children - coarse.weights[m]).abs());
    }
    Ok(PropertyReport::from_margin(
        "ifs_weights",
        TOL - err,
        TOL,
        digest_of(spec),
        format!("N={n} depth {depth}->{}: worst deviation {err:.3e}", depth + 1),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Subadditivity,
    Gotz,
    Monotonic,
    Scaling,
    MeasureScaling,
    IfsWeights,
    DensityLemmas,
    /// Monotonicity, scaling, measure scaling and IFS weights.
    Invariants,
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "subadditivity" => Suite::Subadditivity,
            "gotz" => Suite::Gotz,
            "monotonic" => Suite::Monotonic,
            "scaling" => Suite::Scaling,
            "measure-scaling" | "measure_scaling" => Suite::MeasureScaling,
            "ifs-weights" | "ifs_weights" => Suite::IfsWeights,
            "density-lemmas" | "density_lemmas" => Suite::DensityLemmas,
            "invariants" => Suite::Invariants,
            "all" => Suite::All,
            other => return Err(invalid(format!("unknown suite '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Random subadditivity instances.
    pub instances: usize,
    /// Random clouds for the radial identity.
    pub gotz_cases: usize,
    /// Monotonicity on exact sphere curves rather than numeric ones.
    pub exact: bool,
    /// Sphere dimensions used by the monotonicity suite.
    pub dims: Vec<usize>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { seed: 0, instances: 200, gotz_cases: 50, exact: true, dims: vec![1, 2, 3] }
    }
}

pub fn run_suite(suite: Suite, opts: &SuiteOptions) -> Result<Vec<PropertyReport>> {
    match suite {
        Suite::Subadditivity => subadditivity_suite(opts),
        Suite::Gotz => gotz_suite(opts),
        Suite::Monotonic => monotonic_suite(opts),
        Suite::Scaling => scaling_suite(),
        Suite::MeasureScaling => measure_scaling_suite(),
        Suite::IfsWeights => ifs_weights_suite(),
        Suite::DensityLemmas => density_lemmas_suite(),
        Suite::Invariants => {
            let mut out = monotonic_suite(opts)?;
            out.extend(scaling_suite()?);
            out.extend(measure_scaling_suite()?);
            out.extend(ifs_weights_suite()?);
            Ok(out)
        }
        Suite::All => {
            let mut out = Vec::new();
            for s in [
                Suite::Subadditivity,
                Suite::Gotz,
                Suite::Invariants,
                Suite::DensityLemmas,
            ] {
                out.extend(run_suite(s, opts)?);
            }
            Ok(out)
        }
    }
}

fn subadditivity_suite(opts: &SuiteOptions) -> Result<Vec<PropertyReport>> {
    const TOL: f64 = 1e-9;
    let mut out = Vec::with_capacity(opts.instances + 1);
    // equality case: disjoint singletons under a diagonal G
    let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
    let eq = SubadditivityInstance::new(g, vec![vec![0], vec![1]], opts.seed)?;
    let mut report = check_subadditivity(&eq, TOL)?;
    report.name = "subadditivity_equality".into();
    let slack = report.margin - TOL;
    report.passed = slack.abs() <= TOL;
    report.margin = TOL - slack.abs();
    out.push(report);
    for k in 0..opts.instances {
        let seed = opts.seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
        out.push(check_subadditivity(&SubadditivityInstance::random(seed, 8)?, TOL)?);
    }
    Ok(out)
}

fn gotz_suite(opts: &SuiteOptions) -> Result<Vec<PropertyReport>> {
    let mut out = Vec::with_capacity(opts.gotz_cases);
    for k in 0..opts.gotz_cases {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(7919).wrapping_add(k as u64));
        let n = rng.random_range(1..=3);
        let count = rng.random_range(2..=60);
        let pts: Vec<Vec<f64>> = (0..count).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
        let raw: Vec<f64> = (0..count).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let p = rng.random_range(0.1..3.0);
        let cloud = PointCloud::new(pts, vec![1.0; count], n, n as f64, format!("random(seed={k})"), k as u64)?;
        let diag = if k % 2 == 0 { DiagPolicy::Omit } else { DiagPolicy::CellBall { c: rng.random_range(0.1..2.0) } };
        out.push(check_gotz_identity(&cloud, &w, p, diag)?);
    }
    Ok(out)
}

fn monotonic_suite(opts: &SuiteOptions) -> Result<Vec<PropertyReport>> {
    let mut out = Vec::new();
    for &d in &opts.dims {
        let df = d as f64;
        if opts.exact {
            let grid: Vec<f64> = (1..200).map(|k| df * k as f64 / 200.0).collect();
            out.push(check_capacity_monotonic(&exact_sphere_curve(d, &grid)?, 1e-10));
        } else {
            let count = if d == 1 { 500 } else { 400 };
            let cal = calibrate_diag(d, df / 2.0, count, DiagPolicy::CellSelfEnergy { c: 1.0 })?;
            let cloud = sample_sphere(d, d + 1, count, opts.seed)?;
            let solver = SolverConfig { diag: cal.policy, tol: 1e-10, max_iter: 200_000 };
            let curve = capacity_curve(&cloud, &default_grid(df, 0.05), &solver)?;
            out.push(check_capacity_monotonic(&curve, 1e-6));
        }
    }
    Ok(out)
}

fn scaling_suite() -> Result<Vec<PropertyReport>> {
    let circle = sample_sphere(1, 2, 100, 0)?;
    let sphere = sample_sphere(2, 3, 150, 1)?;
    let cantor = IfsSpec::cantor().attractor(7)?;
    let pair = PointCloud::new(vec![vec![0.0], vec![1.0]], vec![1.0, 1.0], 1, 1.0, "pair", 0)?;
    Ok(vec![
        check_scaling(&circle, 1.0, 0.5)?,
        check_scaling(&pair, 2.0, 1.0)?,
        check_scaling(&circle, 0.5, 0.5)?,
        check_scaling(&sphere, 3.7, 1.5)?,
        check_scaling(&cantor, 0.1, 0.4)?,
    ])
}

fn measure_scaling_suite() -> Result<Vec<PropertyReport>> {
    let circle = sample_sphere(1, 2, 1000, 0)?;
    let cantor = IfsSpec::cantor().attractor(8)?;
    let centers: Vec<usize> = (0..16).map(|k| k * 13).collect();
    Ok(vec![
        check_measure_scaling(&circle, 2.0, &centers)?,
        check_measure_scaling(&cantor, 2.0, &centers)?,
        check_measure_scaling(&cantor, 0.25, &centers)?,
    ])
}

fn ifs_weights_suite() -> Result<Vec<PropertyReport>> {
    let mut out = Vec::new();
    for spec in [IfsSpec::cantor(), IfsSpec::planar_dust()] {
        for depth in [1, 4, 7] {
            out.push(check_ifs_weights(&spec, depth)?);
        }
    }
    Ok(out)
}

fn density_lemmas_suite() -> Result<Vec<PropertyReport>> {
    let circle = sample_sphere(1, 2, 4000, 0)?;
    let circle_centers: Vec<usize> = (0..8).map(|k| k * 500).collect();
    // side 2.5 so that unit balls about central points stay inside
    let square = sample_cube(2, 2, 200, &[])?.dilate(2.5)?;
    let square_centers: Vec<usize> = [(100, 100), (90, 110), (110, 95)].iter().map(|(i, j)| i * 200 + j).collect();
    let cantor = IfsSpec::cantor().attractor(10)?;
    Ok(vec![
        check_density_lemmas(&circle, &circle_centers, 0.5)?,
        check_density_lemmas(&square, &square_centers, 0.2)?,
        check_density_lemmas(&cantor, &[0, 300, 700], 0.9)?,
    ])
}

/// One block per report.
pub fn report_text(reports: &[PropertyReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let status = if r.skipped { "SKIP" } else if r.passed { "PASS" } else { "FAIL" };
        out.push_str(&format!(
            "[{status}] {}\n  margin: {:.6e}\n  tolerance: {:e}\n  digest: {}\n  {}\n",
            r.name, r.margin, r.tolerance, r.digest, r.detail
        ));
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    let skipped = reports.iter().filter(|r| r.skipped).count();
    out.push_str(&format!(
        "{} checks, {} passed, {failed} failed, {skipped} skipped\n",
        reports.len(),
        reports.len() - failed - skipped
    ));
    out
}

pub fn report_json(reports: &[PropertyReport]) -> Result<String> {
    Ok(serde_json::to_string_pretty(reports)?)
}

pub fn all_passed(reports: &[PropertyReport]) -> bool {
    reports.iter().all(|r| r.passed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn disjoint_singletons_reach_equality() {
        let (g1, g2) = (2.0, 5.0);
        let g = DMatrix::from_row_slice(2, 2, &[g1, 0.0, 0.0, g2]);
        let w_union = restricted_energy(&g, &[0, 1]).unwrap();
        assert_relative_eq!(w_union, g1 * g2 / (g1 + g2), max_relative = 1e-14);
        let inst = SubadditivityInstance::new(g, vec![vec![0], vec![1]], 0).unwrap();
        let r = check_subadditivity(&inst, 1e-9).unwrap();
        assert!(r.passed);
        assert!((r.margin - 1e-9).abs() < 1e-12);
    }

    #[test]
    fn part_equal_to_union_has_zero_slack() {
        let g = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.1, 0.2, 2.0, 0.3, 0.1, 0.3, 1.5]);
        let inst = SubadditivityInstance::new(g, vec![vec![0, 1, 2]], 0).unwrap();
        let r = check_subadditivity(&inst, 0.0).unwrap();
        assert!(r.passed);
        assert_eq!(r.margin, 0.0);
    }

    #[test]
    fn instance_validation() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(SubadditivityInstance::new(g, vec![vec![0, 1]], 0).is_err());
        let g = DMatrix::identity(2, 2);
        assert!(SubadditivityInstance::new(g.clone(), vec![vec![0]], 0).is_err());
        assert!(SubadditivityInstance::new(g.clone(), vec![vec![0, 2]], 0).is_err());
        assert!(SubadditivityInstance::new(DMatrix::identity(13, 13), vec![(0..13).collect()], 0).is_err());
        let inst = SubadditivityInstance::new(g, vec![vec![0, 1], vec![]], 0).unwrap();
        assert!(check_subadditivity(&inst, 1e-9).unwrap().passed);
    }

    #[test]
    fn random_instances_are_valid_and_deterministic() {
        for seed in 0..50 {
            let a = SubadditivityInstance::random(seed, 8).unwrap();
            assert_eq!(a, SubadditivityInstance::random(seed, 8).unwrap());
            assert!(a.size <= 8);
            assert!(check_subadditivity(&a, 1e-9).unwrap().passed);
        }
    }

    #[test]
    fn violated_inequality_fails() {
        // a "cover" whose reciprocal energies are too small cannot be built
        // from a valid instance; tamper with one directly
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let mut inst = SubadditivityInstance::new(g, vec![vec![0], vec![1]], 0).unwrap();
        inst.parts = vec![vec![0]];
        let r = check_subadditivity(&inst, 1e-9).unwrap();
        assert!(!r.passed && r.margin < 0.0);
    }

    #[test]
    fn monotonic_examples() {
        let c = exact_sphere_curve(2, &[0.5, 1.0, 1.5, 1.9]).unwrap();
        assert!(check_capacity_monotonic(&c, 1e-10).passed);
        let single = exact_sphere_curve(2, &[1.0]).unwrap();
        assert!(check_capacity_monotonic(&single, 1e-10).passed);
        let mut bad = c.clone();
        bad.entries[2].cap = 2.0;
        assert!(!check_capacity_monotonic(&bad, 1e-10).passed);
    }

    #[test]
    fn scaling_examples() {
        let pair = PointCloud::new(vec![vec![0.0], vec![1.0]], vec![1.0, 1.0], 1, 1.0, "pair", 0).unwrap();
        let r = check_scaling(&pair, 2.0, 1.0).unwrap();
        assert!(r.passed);
        let r = check_scaling(&pair, 1.0, 1.0).unwrap();
        assert!(r.passed && r.margin == 1e-9);
        assert!(check_scaling(&pair, 0.0, 1.0).is_err());
    }

    #[test]
    fn gotz_examples_under_harness() {
        let two = PointCloud::new(vec![vec![0.0], vec![1.0]], vec![1.0, 1.0], 1, 1.0, "pair", 0).unwrap();
        assert!(check_gotz_identity(&two, &[0.5, 0.5], 1.0, DiagPolicy::Omit).unwrap().passed);
        let circle = sample_sphere(1, 2, 4, 0).unwrap();
        assert!(check_gotz_identity(&circle, &[0.25; 4], 1.0, DiagPolicy::Omit).unwrap().passed);
        assert!(check_gotz_identity(&circle, &[0.25; 4], 0.3, DiagPolicy::CellBall { c: 0.5 }).unwrap().passed);
    }

    #[test]
    fn density_lemmas_skip_cantor() {
        let cantor = IfsSpec::cantor().attractor(9).unwrap();
        let r = check_density_lemmas(&cantor, &[0, 100], 0.9).unwrap();
        assert!(r.skipped && r.passed);
    }

    #[test]
    fn ifs_weights_conserved() {
        assert!(check_ifs_weights(&IfsSpec::cantor(), 5).unwrap().passed);
        assert!(check_ifs_weights(&IfsSpec::planar_dust(), 3).unwrap().passed);
    }

    #[test]
    fn suites_pass() {
        let opts = SuiteOptions { instances: 40, gotz_cases: 20, ..SuiteOptions::default() };
        for suite in [Suite::Subadditivity, Suite::Gotz, Suite::Invariants, Suite::DensityLemmas] {
            let reports = run_suite(suite, &opts).unwrap();
            assert!(all_passed(&reports), "{suite:?}\n{}", report_text(&reports));
        }
    }

    #[test]
    fn reports_render() {
        let reports = run_suite(Suite::IfsWeights, &SuiteOptions::default()).unwrap();
        let text = report_text(&reports);
        assert!(text.contains("[PASS] ifs_weights"));
        let parsed: Vec<PropertyReport> = serde_json::from_str(&report_json(&reports).unwrap()).unwrap();
        assert_eq!(parsed, reports);
        assert_eq!(reports[0].digest.len(), 64);
    }

    #[test]
    fn suite_names_parse() {
        assert_eq!("measure-scaling".parse::<Suite>().unwrap(), Suite::MeasureScaling);
        assert!("bogus".parse::<Suite>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn subadditivity_holds(seed in any::<u64>()) {
            let inst = SubadditivityInstance::random(seed, 8).unwrap();
            prop_assert!(check_subadditivity(&inst, 1e-9).unwrap().passed);
        }

        #[test]
        fn dilation_scales_capacity(s in 0.05f64..20.0, p in 0.1f64..2.5, seed in 0u64..1000) {
            let cloud = sample_sphere(2, 3, 40, seed).unwrap();
            prop_assert!(check_scaling(&cloud, s, p).unwrap().passed);
        }
    }
}
