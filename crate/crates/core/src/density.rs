//! First- and second-order densities of weighted point clouds, averaged over
//! centers, and the upper Ahlfors regularity constant.
//!
//! All integrals are taken against the exact step function
//! `r ↦ μ(B(x, r))` of the cloud, so no quadrature error enters.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decay::{extrapolate_limit, Scheme};
use crate::error::{invalid, Error, Result};
use crate::exec::{map_range, Execution};
use crate::geometry::io::fmt_f64;
use crate::geometry::{local_spacing, PointCloud};
use crate::primitives::distance;

/// Multiple of the spacing quantile below which radii are not trusted.
pub const DEFAULT_FLOOR_FACTOR: f64 = 3.0;
pub const DEFAULT_FLOOR_QUANTILE: f64 = 0.5;
pub const DEFAULT_CENTERS: usize = 256;
/// Gaps `d - p` of the default second-order schedule.
pub const DEFAULT_P_GAPS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// `r ↦ μ(B(x, r))` and its integrals against `r^{-s-1}` on `[lo, 1]`.
pub trait RadialProfile {
    /// Mass of the closed ball of radius `r`.
    fn mass(&self, r: f64) -> f64;

    /// `∫_lo^1 μ(B(x, r)) r^{-s-1} dr` for `lo > 0`, `s > 0`.
    fn integral(&self, lo: f64, s: f64) -> f64;
}

/// Right-continuous step function of a cloud's ball masses about a center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallCountingFunction {
    pub center: Vec<f64>,
    pub sorted_distances: Vec<f64>,
    pub cumulative_weights: Vec<f64>,
}

impl BallCountingFunction {
    /// Weight sitting exactly at the center.
    pub fn atom_weight(&self) -> f64 {
        let k = self.sorted_distances.partition_point(|r| *r <= 0.0);
        if k == 0 {
            0.0
        } else {
            self.cumulative_weights[k - 1]
        }
    }

    pub fn total(&self) -> f64 {
        self.cumulative_weights.last().copied().unwrap_or(0.0)
    }

    fn weight(&self, k: usize) -> f64 {
        self.cumulative_weights[k] - if k == 0 { 0.0 } else { self.cumulative_weights[k - 1] }
    }

    // Σ_{lo_excl < d_k < 1} w_k f(max(d_k, lo)), with the weights recovered
    // from the cumulative sums pointwise
    fn sum_below_one(&self, lo: f64, include_center: bool, f: impl Fn(f64) -> f64) -> f64 {
        let end = self.sorted_distances.partition_point(|r| *r < 1.0);
        let start = if include_center { 0 } else { self.sorted_distances.partition_point(|r| *r <= 0.0) };
        (start..end).map(|k| self.weight(k) * f(self.sorted_distances[k].max(lo))).sum()
    }
}

impl RadialProfile for BallCountingFunction {
    fn mass(&self, r: f64) -> f64 {
        let k = self.sorted_distances.partition_point(|d| *d <= r);
        if k == 0 {
            0.0
        } else {
            self.cumulative_weights[k - 1]
        }
    }

    fn integral(&self, lo: f64, s: f64) -> f64 {
        self.sum_below_one(lo, true, |r| (r.powf(-s) - 1.0) / s)
    }
}

/// Synthetic profile `μ(B(x, r)) = c r^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLaw {
    pub c: f64,
    pub d: f64,
}

impl RadialProfile for PowerLaw {
    fn mass(&self, r: f64) -> f64 {
        self.c * r.powf(self.d)
    }

    fn integral(&self, lo: f64, s: f64) -> f64 {
        let e = self.d - s;
        if e == 0.0 {
            -self.c * lo.ln()
        } else {
            self.c * (1.0 - lo.powf(e)) / e
        }
    }
}

pub fn ball_counting(cloud: &PointCloud, x: &[f64]) -> Result<BallCountingFunction> {
    if x.len() != cloud.ambient_dim() {
        return Err(Error::DimensionMismatch(format!(
            "center has {} coordinates, cloud has {}",
            x.len(),
            cloud.ambient_dim()
        )));
    }
    let mut pairs: Vec<(f64, f64)> = cloud.points().zip(cloud.weights()).map(|(y, w)| (distance(x, y), *w)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    let (sorted_distances, cumulative_weights) = pairs
        .into_iter()
        .map(|(r, w)| {
            acc += w;
            (r, acc)
        })
        .unzip();
    Ok(BallCountingFunction { center: x.to_vec(), sorted_distances, cumulative_weights })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    First,
    SecondPForm,
    SecondLogForm,
    SecondUpper,
}

impl DensityKind {
    pub fn name(self) -> &'static str {
        match self {
            DensityKind::First => "first",
            DensityKind::SecondPForm => "second_p_form",
            DensityKind::SecondLogForm => "second_log_form",
            DensityKind::SecondUpper => "second_upper",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub kind: DensityKind,
    pub value: f64,
    /// Center index, or `None` for an average over centers.
    pub center: Option<usize>,
    /// Radii, exponents or η values the estimate was formed from.
    pub schedule: Vec<f64>,
    /// Per-schedule values.
    pub trace: Vec<f64>,
    pub d: f64,
    /// Relative scatter of the first-order fit, or the across-center
    /// standard deviation of an average.
    pub spread: Option<f64>,
}

/// `factor ×` the `quantile` of the cloud's nearest-neighbor spacings.
pub fn resolution_floor(cloud: &PointCloud, factor: f64, quantile: f64) -> Result<f64> {
    if !(factor > 0.0) || !(0.0..=1.0).contains(&quantile) {
        return Err(invalid("floor factor must be positive and quantile in [0, 1]"));
    }
    let mut h = local_spacing(cloud)?;
    h.sort_by(f64::total_cmp);
    let idx = ((h.len() - 1) as f64 * quantile).round() as usize;
    Ok(factor * h[idx])
}

pub fn default_floor(cloud: &PointCloud) -> Result<f64> {
    resolution_floor(cloud, DEFAULT_FLOOR_FACTOR, DEFAULT_FLOOR_QUANTILE)
}

/// `count` log-spaced values from `hi` down to `lo`.
pub fn log_grid(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let step = (lo / hi).ln() / (count - 1) as f64;
    (0..count).map(|k| if k + 1 == count { lo } else { hi * (step * k as f64).exp() }).collect()
}

/// Least-squares constant fit of `μ(B(x, r)) / r^d` over the radii above
/// `floor`. The relative scatter of the samples about the fit measures
/// whether the limit plausibly exists.
pub fn first_order_density<P: RadialProfile>(profile: &P, d: f64, r_grid: &[f64], floor: f64) -> Result<DensityEstimate> {
    if r_grid.windows(2).any(|w| !(w[1] < w[0])) || r_grid.iter().any(|r| *r > 1.0) {
        return Err(invalid("radius grid must be decreasing within (floor, 1]"));
    }
    let radii: Vec<f64> = r_grid.iter().copied().filter(|r| *r > floor).collect();
    if radii.is_empty() {
        return Err(Error::BelowResolution { floor });
    }
    let trace: Vec<f64> = radii.iter().map(|r| profile.mass(*r) / r.powf(d)).collect();
    let n = trace.len() as f64;
    let mean = trace.iter().sum::<f64>() / n;
    let var = trace.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(DensityEstimate {
        kind: DensityKind::First,
        value: mean,
        center: None,
        schedule: radii,
        trace,
        d,
        spread: Some(if mean > 0.0 { var.sqrt() / mean } else { 0.0 }),
    })
}

/// Literal `(d - p) ∫_0^1 μ(B(x, r)) r^{-p-1} dr` of a step function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawSecondOrder {
    pub value: f64,
    /// Weight at distance zero, left out of `value`.
    pub atom_weight: f64,
}

/// `(d - p) Σ_{0 < d_i < 1} w_i (d_i^{-p} - 1) / p`, atoms at the center
/// excluded and reported.
pub fn second_order_density_p(cloud: &PointCloud, x: &[f64], d: f64, p: f64) -> Result<RawSecondOrder> {
    if !(p > 0.0 && p < d) {
        return Err(Error::ExponentOutOfRange { p, d });
    }
    let b = ball_counting(cloud, x)?;
    let value = (d - p) * b.sum_below_one(0.0, false, |r| (r.powf(-p) - 1.0) / p);
    Ok(RawSecondOrder { value, atom_weight: b.atom_weight() })
}

/// `(d - p) ∫_floor^1 μ(B(x,r)) r^{-p-1} dr / (1 - floor^{d-p})`.
///
/// The weighted mean of `μ(B(x, r)) / r^d` over `[floor, 1]` with weight
/// `∝ r^{d-p-1}`; tends to `σ_d` as `floor → 0` and `p → d`. Each point's
/// mass, including the center's own cell, counts from `floor` outward.
pub fn resolved_second_order_p<P: RadialProfile>(profile: &P, d: f64, p: f64, floor: f64) -> Result<f64> {
    if !(p > 0.0 && p < d) {
        return Err(Error::ExponentOutOfRange { p, d });
    }
    if !(floor > 0.0 && floor < 1.0) {
        return Err(invalid(format!("resolution floor must lie in (0, 1), got {floor}")));
    }
    let s = d - p;
    Ok(s * profile.integral(floor, p) / -(s * floor.ln()).exp_m1())
}

/// `σ_d` (or, with `upper`, `σ̄_d`) from the resolved p-form on an
/// increasing schedule of exponents.
///
/// The limit is extrapolated with `scheme`. The upper variant takes the
/// larger of that limit and the maximum over the tail half of the schedule.
pub fn second_order_density<P: RadialProfile>(
    profile: &P,
    d: f64,
    p_schedule: &[f64],
    floor: f64,
    scheme: Scheme,
    upper: bool,
) -> Result<DensityEstimate> {
    if p_schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("p schedule must increase towards d"));
    }
    let trace = p_schedule
        .iter()
        .map(|&p| resolved_second_order_p(profile, d, p, floor))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = p_schedule.iter().copied().zip(trace.iter().copied()).collect();
    let limit = extrapolate_limit(d, &pairs, scheme)?.limit;
    let (kind, value) = if upper {
        let tail = &trace[trace.len() / 2..];
        (DensityKind::SecondUpper, tail.iter().fold(limit, |a, b| a.max(*b)))
    } else {
        (DensityKind::SecondPForm, limit)
    };
    Ok(DensityEstimate {
        kind,
        value,
        center: None,
        schedule: p_schedule.to_vec(),
        trace,
        d,
        spread: None,
    })
}

/// Log-average form `|log η|^{-1} ∫_η^1 μ(B(x,r)) r^{-d} dr/r` on a
/// decreasing η schedule, extrapolated to `η = 0` by a straight-line fit
/// against `1/|log η|`. A single η is returned as is.
pub fn second_order_density_log<P: RadialProfile>(profile: &P, d: f64, eta_schedule: &[f64]) -> Result<DensityEstimate> {
    if eta_schedule.is_empty() {
        return Err(Error::InsufficientPoints { scheme: "log_form", needed: 1, got: 0 });
    }
    if eta_schedule.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(invalid("η values must lie in (0, 1)"));
    }
    if eta_schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("η schedule must decrease"));
    }
    let trace: Vec<f64> = eta_schedule.iter().map(|&eta| profile.integral(eta, d) / -eta.ln()).collect();
    let value = if trace.len() == 1 {
        trace[0]
    } else {
        // abscissa 1/|log η| plays the role of the gap d - p with d = 0
        let pairs: Vec<(f64, f64)> = eta_schedule.iter().zip(&trace).map(|(e, v)| (1.0 / e.ln(), *v)).collect();
        extrapolate_limit(0.0, &pairs, Scheme::LinearInGap)?.limit
    };
    Ok(DensityEstimate {
        kind: DensityKind::SecondLogForm,
        value,
        center: None,
        schedule: eta_schedule.to_vec(),
        trace,
        d,
        spread: None,
    })
}

/// Default η schedule: the six smallest of twelve log-spaced values
/// between 0.5 and the floor.
pub fn default_eta_schedule(floor: f64) -> Vec<f64> {
    log_grid(0.5, floor, 12).split_off(6)
}

pub fn default_p_schedule(d: f64) -> Vec<f64> {
    DEFAULT_P_GAPS.iter().map(|g| d - g).filter(|p| *p > 0.0).collect()
}

/// Which second-order estimator to average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum SecondOrderMethod {
    PForm { p_schedule: Vec<f64>, scheme: Scheme, upper: bool },
    LogForm { eta_schedule: Vec<f64> },
}

impl SecondOrderMethod {
    /// Default p-form schedule with Richardson extrapolation.
    pub fn p_form(d: f64) -> Self {
        SecondOrderMethod::PForm { p_schedule: default_p_schedule(d), scheme: Scheme::Richardson, upper: false }
    }

    pub fn log_form(floor: f64) -> Self {
        SecondOrderMethod::LogForm { eta_schedule: default_eta_schedule(floor) }
    }

    pub fn evaluate<P: RadialProfile>(&self, profile: &P, d: f64, floor: f64) -> Result<DensityEstimate> {
        match self {
            SecondOrderMethod::PForm { p_schedule, scheme, upper } => {
                second_order_density(profile, d, p_schedule, floor, *scheme, *upper)
            }
            SecondOrderMethod::LogForm { eta_schedule } => second_order_density_log(profile, d, eta_schedule),
        }
    }
}

/// Single-center second-order density at cloud point `index`.
pub fn second_order_at(cloud: &PointCloud, index: usize, d: f64, floor: f64, method: &SecondOrderMethod) -> Result<DensityEstimate> {
    let b = ball_counting(cloud, cloud.point(index))?;
    let mut e = method.evaluate(&b, d, floor)?;
    e.center = Some(index);
    Ok(e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedDensity {
    pub estimate: DensityEstimate,
    pub centers: Vec<usize>,
    pub per_center: Vec<DensityEstimate>,
}

/// `m` point indices drawn with replacement in proportion to the weights
/// (seeded ChaCha8).
pub fn sample_centers(cloud: &PointCloud, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(invalid("need at least one center"));
    }
    let dist = WeightedIndex::new(cloud.weights()).map_err(|e| invalid(format!("cloud weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..m).map(|_| dist.sample(&mut rng)).collect())
}

/// Mean and spread of per-center second-order densities over `m` centers
/// drawn by [`sample_centers`].
pub fn average_second_order_density(
    cloud: &PointCloud,
    d: f64,
    m: usize,
    seed: u64,
    floor: f64,
    method: &SecondOrderMethod,
    exec: Execution,
) -> Result<AveragedDensity> {
    let centers = sample_centers(cloud, m, seed)?;
    let per_center = map_range(exec, m, |k| second_order_at(cloud, centers[k], d, floor, method))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let n = m as f64;
    let mean = per_center.iter().map(|e| e.value).sum::<f64>() / n;
    let var = per_center.iter().map(|e| (e.value - mean).powi(2)).sum::<f64>() / n;
    let trace = (0..per_center[0].trace.len())
        .map(|j| per_center.iter().map(|e| e.trace[j]).sum::<f64>() / n)
        .collect();
    let estimate = DensityEstimate {
        kind: per_center[0].kind,
        value: mean,
        center: None,
        schedule: per_center[0].schedule.clone(),
        trace,
        d,
        spread: Some(var.sqrt()),
    };
    Ok(AveragedDensity { estimate, centers, per_center })
}

/// `max μ(B(x, r)) / r^d` over cloud points `x` and the given radii.
pub fn ahlfors_constant_on(cloud: &PointCloud, d: f64, r_grid: &[f64], exec: Execution) -> Result<f64> {
    if r_grid.iter().any(|r| !(*r > 0.0)) || r_grid.is_empty() {
        return Err(invalid("radius grid must be nonempty and positive"));
    }
    let per_center = map_range(exec, cloud.len(), |i| {
        ball_counting(cloud, cloud.point(i)).map(|b| r_grid.iter().map(|r| b.mass(*r) / r.powf(d)).fold(0.0, f64::max))
    });
    per_center.into_iter().try_fold(0.0, |acc: f64, v| v.map(|v| acc.max(v)))
}

/// Upper Ahlfors constant on 32 log-spaced radii from the default floor up
/// to the cloud's bounding-box diameter.
pub fn ahlfors_constant(cloud: &PointCloud, d: f64) -> Result<f64> {
    let floor = default_floor(cloud)?;
    let diam = cloud.extent();
    if !(diam > floor) {
        return Err(Error::BelowResolution { floor });
    }
    ahlfors_constant_on(cloud, d, &log_grid(diam, floor * (1.0 + 1e-12), 32), Execution::default())
}

/// `center_index,p_or_eta,value` rows for per-center traces.
pub fn trace_csv(estimates: &[DensityEstimate], comment: Option<&str>) -> String {
    let mut out = crate::decay::comment_lines(comment);
    out.push_str("center_index,p_or_eta,value\n");
    for e in estimates {
        let center = e.center.map_or_else(|| "averaged".to_string(), |c| c.to_string());
        for (s, v) in e.schedule.iter().zip(&e.trace) {
            out.push_str(&format!("{center},{},{}\n", fmt_f64(*s), fmt_f64(*v)));
        }
    }
    out
}
