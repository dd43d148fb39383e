//! Capacity sweeps as `p ↗ d`, decay ratios `cap_p^p / (d - p)`, limit
//! extrapolation and conversion to Hausdorff measure.

use serde::{Deserialize, Serialize};

use crate::energy::{
    kernel_matrix_with, self_similar_energy_bound_with, solve_equilibrium, sphere_capacity_exact,
    BoundDirection, DiagPolicy,
};
use crate::error::{invalid, Error, Result};
use crate::exec::{map_range, Execution};
use crate::geometry::{IfsSpec, PointCloud};
use crate::primitives::{gamma, unit_sphere_area};

/// Starting gap of the default grid `p_k = d - g_0 2^{-k}`.
pub const DEFAULT_FIRST_GAP: f64 = 0.5;

/// Smallest gap `d - p` used by numeric sweeps unless asked otherwise.
pub const DEFAULT_GAP_FLOOR: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityEntry {
    pub p: f64,
    /// NaN when the entry failed; see `error`.
    pub cap: f64,
    pub bound_direction: BoundDirection,
    pub converged: bool,
    pub error: Option<String>,
}

impl CapacityEntry {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSource {
    pub label: String,
    pub method: String,
    pub diag_constant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityCurve {
    pub d: f64,
    pub entries: Vec<CapacityEntry>,
    pub source: CurveSource,
    /// Whether the successful entries are nonincreasing in `p`.
    pub monotone: bool,
}

impl CapacityCurve {
    fn new(d: f64, entries: Vec<CapacityEntry>, source: CurveSource) -> Self {
        let mut curve = Self { d, entries, source, monotone: true };
        curve.monotone = curve.is_nonincreasing(0.0);
        curve
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn p_grid(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.p).collect()
    }

    /// Largest relative increase `cap_{k+1}/cap_k - 1` between successive
    /// successful entries (nonpositive for a nonincreasing curve).
    pub fn worst_increase(&self) -> f64 {
        let ok: Vec<f64> = self.entries.iter().filter(|e| e.is_ok()).map(|e| e.cap).collect();
        ok.windows(2).map(|w| w[1] / w[0] - 1.0).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_nonincreasing(&self, tol: f64) -> bool {
        let worst = self.worst_increase();
        worst.is_infinite() || worst <= tol
    }
}

/// Equilibrium solver settings for numeric sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub diag: DiagPolicy,
    pub tol: f64,
    pub max_iter: usize,
}

impl SolverConfig {
    pub fn new(diag: DiagPolicy) -> Self {
        Self { diag, tol: 1e-8, max_iter: 200_000 }
    }
}

fn check_grid(d: f64, p_grid: &[f64]) -> Result<()> {
    if p_grid.iter().any(|p| !(*p > 0.0 && *p < d)) {
        let p = p_grid.iter().copied().find(|p| !(*p > 0.0 && *p < d)).unwrap_or(f64::NAN);
        return Err(Error::ExponentOutOfRange { p, d });
    }
    if p_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("p grid must be strictly increasing"));
    }
    Ok(())
}

/// One equilibrium capacity per `p`, rebuilding the kernel with the same
/// frozen diagonal constant each time. Failed solves are flagged per entry.
pub fn capacity_curve(cloud: &PointCloud, p_grid: &[f64], solver: &SolverConfig) -> Result<CapacityCurve> {
    let d = cloud.target_dim();
    check_grid(d, p_grid)?;
    let entries = p_grid
        .iter()
        .map(|&p| {
            let solved = kernel_matrix_with(cloud, p, solver.diag, Execution::default())
                .and_then(|k| solve_equilibrium(&k, solver.tol, solver.max_iter));
            match solved {
                Ok(sol) => {
                    if !sol.converged {
                        log::warn!("p = {p}: equilibrium gap {} above tolerance", sol.gap);
                    }
                    CapacityEntry {
                        p,
                        cap: sol.capacity(),
                        bound_direction: sol.estimate.bound_direction.reversed(),
                        converged: sol.converged,
                        error: None,
                    }
                }
                Err(e) => CapacityEntry {
                    p,
                    cap: f64::NAN,
                    bound_direction: BoundDirection::Heuristic,
                    converged: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(CapacityCurve::new(
        d,
        entries,
        CurveSource {
            label: cloud.label().to_string(),
            method: "equilibrium".into(),
            diag_constant: solver.diag.constant(),
        },
    ))
}

/// Closed-form capacities of the unit sphere `S^d`.
pub fn exact_sphere_curve(d: usize, p_grid: &[f64]) -> Result<CapacityCurve> {
    check_grid(d as f64, p_grid)?;
    let entries = p_grid
        .iter()
        .map(|&p| {
            Ok(CapacityEntry {
                p,
                cap: sphere_capacity_exact(d, p)?,
                bound_direction: BoundDirection::Exact,
                converged: true,
                error: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CapacityCurve::new(
        d as f64,
        entries,
        CurveSource { label: format!("sphere(d={d})"), method: "exact".into(), diag_constant: None },
    ))
}

/// Certified lower bounds on the capacity of a strictly self-similar set,
/// from [`self_similar_energy_bound`](crate::energy::self_similar_energy_bound)
/// at the given depth.
pub fn self_similar_curve(spec: &IfsSpec, depth: usize, p_grid: &[f64], exec: Execution) -> Result<CapacityCurve> {
    let d = spec.similarity_dimension();
    check_grid(d, p_grid)?;
    let entries = p_grid
        .iter()
        .map(|&p| {
            let e = self_similar_energy_bound_with(spec, depth, p, exec)?;
            Ok(CapacityEntry {
                p,
                cap: e.capacity(),
                bound_direction: e.bound_direction.reversed(),
                converged: true,
                error: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CapacityCurve::new(
        d,
        entries,
        CurveSource {
            label: format!("ifs(N={},depth={depth})", spec.maps.len()),
            method: "self_similar_bound".into(),
            diag_constant: None,
        },
    ))
}

/// `(p, cap_p^p / (d - p))` for every successful entry.
pub fn decay_ratio(curve: &CapacityCurve) -> Vec<(f64, f64)> {
    curve
        .entries
        .iter()
        .filter(|e| e.is_ok())
        .map(|e| (e.p, e.cap.powf(e.p) / (curve.d - e.p)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Last,
    LinearInGap,
    Richardson,
}

impl Scheme {
    pub fn min_points(self) -> usize {
        match self {
            Scheme::Last => 1,
            Scheme::LinearInGap => 2,
            Scheme::Richardson => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Last => "last",
            Scheme::LinearInGap => "linear_in_gap",
            Scheme::Richardson => "richardson",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(Scheme::Last),
            "linear_in_gap" | "linear" => Ok(Scheme::LinearInGap),
            "richardson" => Ok(Scheme::Richardson),
            other => Err(invalid(format!("unknown extrapolation scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub limit: f64,
    pub scheme: Scheme,
    pub points_used: usize,
    /// Fit residuals for `linear_in_gap`; for the other schemes the difference
    /// to the next-lower-order estimate, a rough error indicator.
    pub residuals: Vec<f64>,
}

/// Extrapolates `value(p)` to `p = d` as a function of the gap `g = d - p`.
///
/// `last` returns the value nearest `d`; `linear_in_gap` fits `a + b g` by
/// least squares over all points; `richardson` passes the quadratic in `g`
/// through the three points nearest `d` and evaluates it at `g = 0`.
pub fn extrapolate_limit(d: f64, ratios: &[(f64, f64)], scheme: Scheme) -> Result<Extrapolation> {
    if ratios.len() < scheme.min_points() {
        return Err(Error::InsufficientPoints {
            scheme: scheme.name(),
            needed: scheme.min_points(),
            got: ratios.len(),
        });
    }
    let mut pts: Vec<(f64, f64)> = ratios.iter().map(|&(p, v)| (d - p, v)).collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n = pts.len();
    let (limit, residuals, used) = match scheme {
        Scheme::Last => {
            let last = pts[n - 1].1;
            let residual = if n > 1 { vec![last - pts[n - 2].1] } else { Vec::new() };
            (last, residual, 1)
        }
        Scheme::LinearInGap => {
            let (a, b) = linear_fit(&pts);
            let res = pts.iter().map(|(g, v)| v - (a + b * g)).collect();
            (a, res, n)
        }
        Scheme::Richardson => {
            let tail = &pts[n - 3..];
            let quad = neville_at_zero(tail);
            let lin = neville_at_zero(&tail[1..]);
            (quad, vec![quad - lin], 3)
        }
    };
    Ok(Extrapolation { limit, scheme, points_used: used, residuals })
}

fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}

// value at x = 0 of the interpolating polynomial through pts
pub(crate) fn neville_at_zero(pts: &[(f64, f64)]) -> f64 {
    let mut t: Vec<f64> = pts.iter().map(|p| p.1).collect();
    for level in 1..pts.len() {
        for i in 0..pts.len() - level {
            let (xi, xj) = (pts[i].0, pts[i + level].0);
            t[i] = (xj * t[i] - xi * t[i + 1]) / (xj - xi);
        }
    }
    t[0]
}

/// `H^d` estimate `limit · |S^{d-1}|`.
pub fn hausdorff_from_decay(limit: f64, d: f64) -> Result<f64> {
    if !(limit >= 0.0) {
        return Err(invalid(format!("decay limit must be nonnegative, got {limit}")));
    }
    Ok(limit * unit_sphere_area(d)?)
}

/// Limit of the decay ratio for a strongly rectifiable set: `H^d / |S^{d-1}|`.
pub fn rectifiable_target(h_measure: f64, d: f64) -> Result<f64> {
    if !(h_measure > 0.0) {
        return Err(invalid("Hausdorff measure must be positive"));
    }
    Ok(h_measure / rectifiable_denominator(d)?)
}

/// Lower bound for the decay ratio of a set with constant second-order
/// density `σ`: `H^d / (d σ)`.
pub fn fractal_target(h_measure: f64, d: f64, sigma: f64) -> Result<f64> {
    if !(h_measure > 0.0 && d > 0.0 && sigma > 0.0) {
        return Err(invalid("fractal target needs positive inputs"));
    }
    Ok(h_measure / (d * sigma))
}

/// `|S^{d-1}| = 2 π^{d/2} / Γ(d/2)`, defined for real `d > 0`.
pub fn rectifiable_denominator(d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(invalid("dimension must be positive"));
    }
    Ok(2.0 * std::f64::consts::PI.powf(d / 2.0) / gamma(d / 2.0)?)
}

/// `p_k = d - g_0 2^{-k}` for `k = 0..=k_max`.
pub fn halving_grid(d: f64, g0: f64, k_max: usize) -> Vec<f64> {
    (0..=k_max).map(|k| d - g0 * 0.5f64.powi(k as i32)).collect()
}

/// Default numeric grid: halving gaps from [`DEFAULT_FIRST_GAP`] while the
/// gap stays at or above `gap_floor`.
pub fn default_grid(d: f64, gap_floor: f64) -> Vec<f64> {
    let mut grid = Vec::new();
    let mut g = DEFAULT_FIRST_GAP;
    while g >= gap_floor {
        grid.push(d - g);
        g *= 0.5;
    }
    grid
}

/// `count` exponents whose gaps decrease geometrically from `first_gap`
/// to `last_gap`, both included.
pub fn geometric_grid(d: f64, first_gap: f64, last_gap: f64, count: usize) -> Result<Vec<f64>> {
    if !(first_gap > last_gap && last_gap > 0.0 && first_gap < d) || count < 2 {
        return Err(invalid("geometric grid needs d > first_gap > last_gap > 0 and count >= 2"));
    }
    let r = (last_gap / first_gap).powf(1.0 / (count - 1) as f64);
    Ok((0..count)
        .map(|k| if k + 1 == count { d - last_gap } else { d - first_gap * r.powi(k as i32) })
        .collect())
}

/// Result of a full sweep: ratios, the extrapolated limit and `Ĥ^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub curve: CapacityCurve,
    pub ratios: Vec<(f64, f64)>,
    pub extrapolation: Extrapolation,
    pub hausdorff: f64,
}

pub fn decay_report(curve: CapacityCurve, scheme: Scheme) -> Result<DecayReport> {
    let ratios = decay_ratio(&curve);
    let extrapolation = extrapolate_limit(curve.d, &ratios, scheme)?;
    let hausdorff = hausdorff_from_decay(extrapolation.limit.max(0.0), curve.d)?;
    Ok(DecayReport { curve, ratios, extrapolation, hausdorff })
}

/// One row of the self-similar decay table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub depth: usize,
    pub p: f64,
    pub cap: f64,
    pub cap_pow_p: f64,
    pub ratio: f64,
    pub bound_direction: BoundDirection,
}

/// Decay ratios of certified capacity lower bounds for every `(depth, p)`,
/// depth-major. Rows for a fixed `p` are nondecreasing in depth.
pub fn fractal_probe_table(spec: &IfsSpec, depths: &[usize], p_grid: &[f64], exec: Execution) -> Result<Vec<ProbeEntry>> {
    let d = spec.similarity_dimension();
    check_grid(d, p_grid)?;
    let jobs: Vec<(usize, f64)> = depths.iter().flat_map(|&k| p_grid.iter().map(move |&p| (k, p))).collect();
    let rows = map_range(exec, jobs.len(), |j| {
        let (depth, p) = jobs[j];
        // parallelism is spent across jobs, each bound is evaluated sequentially
        self_similar_energy_bound_with(spec, depth, p, Execution::Sequential).map(|e| {
            let cap = e.capacity();
            let cap_pow_p = cap.powf(p);
            ProbeEntry {
                depth,
                p,
                cap,
                cap_pow_p,
                ratio: cap_pow_p / (d - p),
                bound_direction: e.bound_direction.reversed(),
            }
        })
    });
    rows.into_iter().collect()
}

/// `p,cap,cap_pow_p,ratio,bound_direction` rows; failed entries are skipped.
pub fn curve_csv(curve: &CapacityCurve, comment: Option<&str>) -> String {
    use crate::geometry::io::fmt_f64;
    let mut out = comment_lines(comment);
    out.push_str("p,cap,cap_pow_p,ratio,bound_direction\n");
    for e in curve.entries.iter().filter(|e| e.is_ok()) {
        let pow = e.cap.powf(e.p);
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(e.p),
            fmt_f64(e.cap),
            fmt_f64(pow),
            fmt_f64(pow / (curve.d - e.p)),
            e.bound_direction.as_str()
        ));
    }
    out
}

/// `depth,p,cap,cap_pow_p,ratio,bound_direction` rows of a probe table.
pub fn probe_csv(rows: &[ProbeEntry], comment: Option<&str>) -> String {
    use crate::geometry::io::fmt_f64;
    let mut out = comment_lines(comment);
    out.push_str("depth,p,cap,cap_pow_p,ratio,bound_direction\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.depth,
            fmt_f64(r.p),
            fmt_f64(r.cap),
            fmt_f64(r.cap_pow_p),
            fmt_f64(r.ratio),
            r.bound_direction.as_str()
        ));
    }
    out
}

pub(crate) fn comment_lines(comment: Option<&str>) -> String {
    let mut out = String::new();
    for line in comment.into_iter().flat_map(str::lines) {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Exact `p ↦ cap_p(S^d)` on `count` equispaced exponents in `(0, d)`, the
/// data behind plots of `cap_p^p` and its slope at `p = d`.
pub fn figure_curve(d: usize, count: usize) -> Result<CapacityCurve> {
    let df = d as f64;
    let grid: Vec<f64> = (1..=count).map(|k| df * k as f64 / (count + 1) as f64).collect();
    exact_sphere_curve(d, &grid)
}
