//! Riesz kernel matrices, energies of fixed measures, discrete equilibrium
//! measures, and exact reference values.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::error::{invalid, Error, Result};
use crate::exec::{fill_chunks, map_range, Execution};
use crate::geometry::{local_spacing, IfsSpec, PointCloud, DEFAULT_POINT_CAP};
use crate::primitives::{distance, ln_gamma, unit_ball_self_energy, unit_ball_volume};

/// Largest cloud for which a dense kernel matrix is assembled.
pub const MAX_MATRIX_SIZE: usize = 1 << 14;

/// Largest matrix accepted by [`exact_simplex_quadratic_min`].
pub const MAX_EXACT_SIZE: usize = 12;

const MATRIX_MAGIC: [u8; 4] = *b"RZKM";

/// Which side of the true value an estimate lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundDirection {
    Upper,
    Lower,
    Heuristic,
    Exact,
}

impl BoundDirection {
    /// Direction after the order-reversing map `V -> V^{-1/p}`.
    pub fn reversed(self) -> Self {
        match self {
            BoundDirection::Upper => BoundDirection::Lower,
            BoundDirection::Lower => BoundDirection::Upper,
            other => other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BoundDirection::Upper => "upper",
            BoundDirection::Lower => "lower",
            BoundDirection::Heuristic => "heuristic",
            BoundDirection::Exact => "exact",
        }
    }
}

/// How the singular diagonal `|x_i - x_i|^{-p}` is replaced.
///
/// Point `i` stands for a cell of measure `m_i` (its cloud weight) and
/// nearest-neighbor spacing `h_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiagPolicy {
    /// Diagonal set to zero. Pairwise sums only; admits degenerate minima.
    Omit,
    /// `(c · h_i)^{-p}`.
    CellBall { c: f64 },
    /// Self-energy of the uniform `d`-ball of radius `c · ρ_i`, where
    /// `|B^d| ρ_i^d = m_i`. Carries the `1/(d - p)` blow-up of a genuine
    /// `d`-dimensional cell, so `(d - p)` times the energy has the right limit.
    CellSelfEnergy { c: f64 },
}

impl DiagPolicy {
    /// Recorded direction of trial energies built with this policy. None of
    /// the cell models is a certified bound on the continuum self-interaction.
    pub fn bound_direction(&self) -> BoundDirection {
        BoundDirection::Heuristic
    }

    pub fn constant(&self) -> Option<f64> {
        match *self {
            DiagPolicy::Omit => None,
            DiagPolicy::CellBall { c } | DiagPolicy::CellSelfEnergy { c } => Some(c),
        }
    }

    pub fn with_constant(&self, c: f64) -> Self {
        match self {
            DiagPolicy::Omit => DiagPolicy::Omit,
            DiagPolicy::CellBall { .. } => DiagPolicy::CellBall { c },
            DiagPolicy::CellSelfEnergy { .. } => DiagPolicy::CellSelfEnergy { c },
        }
    }

    fn validate(&self) -> Result<()> {
        match self.constant() {
            Some(c) if !(c > 0.0 && c.is_finite()) => {
                Err(invalid(format!("diagonal constant must be positive, got {c}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyMethod {
    Trial,
    Gotz,
    Equilibrium,
    ExactSimplex,
    SelfSimilarBound,
    SphereOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub value: f64,
    pub p: f64,
    pub bound_direction: BoundDirection,
    pub method: EnergyMethod,
    pub cloud_label: String,
}

impl EnergyEstimate {
    pub fn capacity(&self) -> f64 {
        capacity_from_energy(self.value, self.p)
    }
}

/// Dense symmetric Riesz interaction matrix of a cloud.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    size: usize,
    entries: Vec<f64>,
    p: f64,
    diag_policy: DiagPolicy,
    source: String,
}

impl KernelMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn diag_policy(&self) -> DiagPolicy {
        self.diag_policy
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Builds a matrix from raw row-major entries, checking symmetry to 1e-12.
    pub fn from_entries(size: usize, entries: Vec<f64>, p: f64, diag_policy: DiagPolicy, source: impl Into<String>) -> Result<Self> {
        if entries.len() != size * size {
            return Err(Error::DimensionMismatch(format!("{} entries for a {size}x{size} matrix", entries.len())));
        }
        for i in 0..size {
            for j in 0..i {
                let (a, b) = (entries[i * size + j], entries[j * size + i]);
                if !(a >= 0.0) || (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(invalid(format!("matrix not symmetric nonnegative at ({i},{j})")));
                }
            }
        }
        Ok(Self { size, entries, p, diag_policy, source: source.into() })
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.size).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, w: &[f64], exec: Execution) -> Vec<f64> {
        map_range(exec, self.size, |i| dot(self.row(i), w))
    }

    /// `wᵀ K w`.
    pub fn quad_form(&self, w: &[f64], exec: Execution) -> f64 {
        self.matvec(w, exec).iter().zip(w).map(|(a, b)| a * b).sum()
    }

    fn replace_diagonal(&mut self, diag: &[f64], policy: DiagPolicy) {
        for (i, v) in diag.iter().enumerate() {
            self.entries[i * self.size + i] = *v;
        }
        self.diag_policy = policy;
    }

    /// Little-endian dump: 4-byte magic `RZKM`, `N` as u32, then `N²` f64 row-major.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&MATRIX_MAGIC)?;
        out.write_all(&(self.size as u32).to_le_bytes())?;
        for v in &self.entries {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the entries written by [`KernelMatrix::write_binary`].
    pub fn read_binary_entries<R: Read>(mut input: R) -> Result<(usize, Vec<f64>)> {
        let mut header = [0u8; 8];
        input.read_exact(&mut header)?;
        if header[..4] != MATRIX_MAGIC {
            return Err(Error::Parse("bad matrix magic".into()));
        }
        let size = u32::from_le_bytes(header[4..].try_into().expect("4 bytes")) as usize;
        let mut buf = vec![0u8; size * size * 8];
        input.read_exact(&mut buf)?;
        let entries = buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        Ok((size, entries))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Diagonal entries the policy assigns to `cloud` at exponent `p`.
pub fn diagonal_values(cloud: &PointCloud, p: f64, policy: DiagPolicy) -> Result<Vec<f64>> {
    policy.validate()?;
    match policy {
        DiagPolicy::Omit => Ok(vec![0.0; cloud.len()]),
        DiagPolicy::CellBall { c } => {
            let h = local_spacing(cloud)?;
            Ok(h.iter().map(|h| (c * h).powf(-p)).collect())
        }
        DiagPolicy::CellSelfEnergy { c } => {
            let d = cloud.target_dim();
            let unit = unit_ball_self_energy(d, p)?;
            let ball = unit_ball_volume(d)?;
            cloud
                .weights()
                .iter()
                .map(|m| {
                    if *m <= 0.0 {
                        return Err(invalid("cell self-energy needs positive cell weights"));
                    }
                    let rho = (m / ball).powf(1.0 / d);
                    Ok(unit * (c * rho).powf(-p))
                })
                .collect()
        }
    }
}

pub fn kernel_matrix(cloud: &PointCloud, p: f64, diag_policy: DiagPolicy) -> Result<KernelMatrix> {
    kernel_matrix_with(cloud, p, diag_policy, Execution::default())
}

/// Assembles `K_ij = |x_i - x_j|^{-p}` off the diagonal and the policy's
/// value on it. Rows are filled independently.
pub fn kernel_matrix_with(
    cloud: &PointCloud,
    p: f64,
    diag_policy: DiagPolicy,
    exec: Execution,
) -> Result<KernelMatrix> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(invalid(format!("kernel exponent must be positive, got {p}")));
    }
    let size = cloud.len();
    if size > MAX_MATRIX_SIZE {
        return Err(Error::SizeCap { size, cap: MAX_MATRIX_SIZE });
    }
    let diag = diagonal_values(cloud, p, diag_policy)?;
    let mut entries = vec![0.0; size * size];
    fill_chunks(exec, &mut entries, size, |i, row| {
        let x = cloud.point(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = if i == j { diag[i] } else { distance(x, cloud.point(j)).powf(-p) };
        }
    });
    if let Some(pos) = entries.iter().position(|v| v.is_infinite()) {
        let (i, j) = (pos / size, pos % size);
        return Err(Error::DuplicatePoints { i, j });
    }
    Ok(KernelMatrix {
        size,
        entries,
        p,
        diag_policy,
        source: cloud.label().to_string(),
    })
}

pub(crate) fn check_simplex(w: &[f64], size: usize) -> Result<()> {
    if w.len() != size {
        return Err(Error::DimensionMismatch(format!("{} weights for {size} points", w.len())));
    }
    if w.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::NotOnSimplex("negative or NaN weight".into()));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::NotOnSimplex(format!("weights sum to {s}")));
    }
    Ok(())
}

/// Energy `wᵀ K w` of a fixed probability vector.
pub fn trial_energy(k: &KernelMatrix, w: &[f64]) -> Result<EnergyEstimate> {
    check_simplex(w, k.size)?;
    Ok(EnergyEstimate {
        value: k.quad_form(w, Execution::default()),
        p: k.p,
        bound_direction: k.diag_policy.bound_direction(),
        method: EnergyMethod::Trial,
        cloud_label: k.source.clone(),
    })
}

/// Energy of `w` through the radial form
/// `p ∫_0^{r_max} Σ_i w_i μ(B(x_i, r)) r^{-p-1} dr`.
///
/// Each center's ball-mass step function is integrated piece by piece in
/// closed form. Self-interaction uses the distance `D_ii = K_ii^{-1/p}`
/// implied by `diag_policy`. With `r_max = ∞` this equals the direct double
/// sum `wᵀ K w` for the same policy.
pub fn gotz_energy(
    cloud: &PointCloud,
    w: &[f64],
    p: f64,
    r_max: f64,
    diag_policy: DiagPolicy,
) -> Result<f64> {
    check_simplex(w, cloud.len())?;
    if !(p > 0.0) {
        return Err(invalid(format!("kernel exponent must be positive, got {p}")));
    }
    if !(r_max > 0.0) {
        return Err(invalid("r_max must be positive"));
    }
    let diag = diagonal_values(cloud, p, diag_policy)?;
    let tail = if r_max.is_infinite() { 0.0 } else { r_max.powf(-p) };
    let per_center = map_range(Execution::default(), cloud.len(), |i| {
        let x = cloud.point(i);
        let mut steps: Vec<(f64, f64)> = (0..cloud.len())
            .filter_map(|j| {
                let r = if i == j {
                    if diag[i] == 0.0 {
                        return None;
                    }
                    diag[i].powf(-1.0 / p)
                } else {
                    distance(x, cloud.point(j))
                };
                (r < r_max).then_some((r, w[j]))
            })
            .collect();
        steps.sort_by(|a, b| a.0.total_cmp(&b.0));
        // mass is constant on [r_k, r_{k+1}); p ∫ r^{-p-1} over it is r_k^{-p} - r_{k+1}^{-p}
        let mut mass = 0.0;
        let mut acc = 0.0;
        for k in 0..steps.len() {
            mass += steps[k].1;
            let upper = steps.get(k + 1).map_or(tail, |s| s.0.powf(-p));
            acc += mass * (steps[k].0.powf(-p) - upper);
        }
        w[i] * acc
    });
    let value: f64 = per_center.into_iter().sum();
    if value.is_nan() {
        return Err(Error::DuplicatePoints { i: 0, j: 0 });
    }
    Ok(value)
}

/// Result of the Frank–Wolfe equilibrium solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub weights: Vec<f64>,
    pub estimate: EnergyEstimate,
    pub iterations: usize,
    /// Frank–Wolfe duality gap `∇f(w)·(w - s)` at exit.
    pub gap: f64,
    pub converged: bool,
}

impl EquilibriumSolution {
    pub fn capacity(&self) -> f64 {
        self.estimate.capacity()
    }
}

/// Minimizes `wᵀ K w` over the probability simplex by Frank–Wolfe with away
/// steps and exact line search, starting from the uniform vector.
///
/// Stops once the duality gap is at most `tol · wᵀKw`, which certifies a
/// relative suboptimality of at most `tol`. Returns the last (best) iterate
/// with `converged = false` if `max_iter` is reached first.
pub fn solve_equilibrium(k: &KernelMatrix, tol: f64, max_iter: usize) -> Result<EquilibriumSolution> {
    if matches!(k.diag_policy, DiagPolicy::Omit) {
        return Err(invalid(
            "equilibrium solve needs a cell diagonal policy; omitting the diagonal makes every vertex a zero-energy minimizer",
        ));
    }
    if k.entries.iter().any(|v| !v.is_finite()) {
        return Err(invalid("kernel matrix has non-finite entries"));
    }
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let n = k.size;
    let exec = Execution::default();
    let mut w = vec![1.0 / n as f64; n];
    let mut g = k.matvec(&w, exec);
    let mut f = dot(&g, &w);
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations <= max_iter {
        let (s, gs) = argmin(&g);
        gap = 2.0 * (f - gs);
        if gap <= tol * f {
            converged = true;
            break;
        }
        if iterations == max_iter {
            break;
        }
        iterations += 1;

        let (a, ga) = g
            .iter()
            .enumerate()
            .filter(|(i, _)| w[*i] > 0.0)
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
        let fw_gain = f - gs;
        let away_gain = ga - f;
        let use_away = a != usize::MAX && away_gain > fw_gain && w[a] < 1.0;

        if use_away {
            // direction w - e_a, feasible up to γ = w_a / (1 - w_a)
            let slope = f - ga;
            let curv = f - 2.0 * ga + k.get(a, a);
            let gmax = w[a] / (1.0 - w[a]);
            let gamma = line_step(slope, curv, gmax);
            let row = k.row(a);
            for i in 0..n {
                w[i] *= 1.0 + gamma;
                g[i] = (1.0 + gamma) * g[i] - gamma * row[i];
            }
            if gamma >= gmax {
                w[a] = 0.0;
            } else {
                w[a] -= gamma;
            }
            f += 2.0 * gamma * slope + gamma * gamma * curv;
        } else {
            let slope = gs - f;
            let curv = k.get(s, s) - 2.0 * gs + f;
            let gamma = line_step(slope, curv, 1.0);
            let row = k.row(s);
            for i in 0..n {
                w[i] *= 1.0 - gamma;
                g[i] = (1.0 - gamma) * g[i] + gamma * row[i];
            }
            w[s] += gamma;
            f += 2.0 * gamma * slope + gamma * gamma * curv;
        }
        if iterations % 256 == 0 {
            // resynchronize against accumulated rounding
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= total);
            g = k.matvec(&w, exec);
            f = dot(&g, &w);
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    let value = k.quad_form(&w, exec);
    Ok(EquilibriumSolution {
        weights: w,
        estimate: EnergyEstimate {
            value,
            p: k.p,
            bound_direction: BoundDirection::Heuristic,
            method: EnergyMethod::Equilibrium,
            cloud_label: k.source.clone(),
        },
        iterations,
        gap,
        converged,
    })
}

fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, x)| if *x < acc.1 { (i, *x) } else { acc })
}

// minimizer of γ ↦ 2γ·slope + γ²·curv on [0, gmax]
fn line_step(slope: f64, curv: f64, gmax: f64) -> f64 {
    if curv <= 0.0 {
        return if slope < 0.0 { gmax } else { 0.0 };
    }
    (-slope / curv).clamp(0.0, gmax)
}

/// Global minimizer of `wᵀGw` over the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexMin {
    pub weights: Vec<f64>,
    pub value: f64,
    pub support: Vec<usize>,
}

/// Exact minimum of `wᵀGw` over the probability simplex for `N ≤ 12`.
///
/// Every support set `S` is visited; on each, the stationarity system
/// `[2G_SS 1; 1ᵀ 0][w; -λ] = [0; 1]` is solved and feasible solutions are
/// kept. The smallest value among them is the global minimum: it is attained
/// in the relative interior of some face, where it is stationary.
pub fn exact_simplex_quadratic_min(g: &DMatrix<f64>) -> Result<SimplexMin> {
    let n = g.nrows();
    if g.ncols() != n || n == 0 {
        return Err(Error::DimensionMismatch("matrix must be square and nonempty".into()));
    }
    if n > MAX_EXACT_SIZE {
        return Err(Error::SizeCap { size: n, cap: MAX_EXACT_SIZE });
    }
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (g[(i, j)], g[(j, i)]);
            if !(a >= 0.0) || !a.is_finite() || (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                return Err(invalid("matrix must be symmetric, finite and nonnegative"));
            }
        }
    }
    let mut best: Option<SimplexMin> = None;
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let m = support.len();
        let mut a = DMatrix::zeros(m + 1, m + 1);
        for (r, &i) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate() {
                a[(r, c)] = 2.0 * g[(i, j)];
            }
            a[(r, m)] = 1.0;
            a[(m, r)] = 1.0;
        }
        let mut rhs = DVector::zeros(m + 1);
        rhs[m] = 1.0;
        let Some(sol) = a.lu().solve(&rhs) else { continue };
        if (0..m).any(|r| !sol[r].is_finite() || sol[r] < -1e-12) {
            continue;
        }
        let mut w = vec![0.0; n];
        for (r, &i) in support.iter().enumerate() {
            w[i] = sol[r].max(0.0);
        }
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            continue;
        }
        w.iter_mut().for_each(|v| *v /= total);
        let value = quad(g, &w);
        if best.as_ref().is_none_or(|b| value < b.value) {
            best = Some(SimplexMin { weights: w, value, support });
        }
    }
    best.ok_or_else(|| invalid("no feasible stationary point found"))
}

fn quad(g: &DMatrix<f64>, w: &[f64]) -> f64 {
    let n = w.len();
    let mut acc = 0.0;
    for i in 0..n {
        if w[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            acc += w[i] * g[(i, j)] * w[j];
        }
    }
    acc
}

/// Riesz `p`-capacity of the unit sphere `S^d`, `0 < p < d`:
/// `2 (Γ(d - p/2) Γ(d/2) / (Γ((d-p)/2) Γ(d)))^{1/p}`.
pub fn sphere_capacity_exact(d: usize, p: f64) -> Result<f64> {
    let df = d as f64;
    if d < 1 || !(p > 0.0 && p < df) {
        return Err(Error::ExponentOutOfRange { p, d: df });
    }
    let log_ratio = ln_gamma(df - p / 2.0)? + ln_gamma(df / 2.0)? - ln_gamma((df - p) / 2.0)? - ln_gamma(df)?;
    Ok(2.0 * (log_ratio / p).exp())
}

/// `V^{-1/p}`; infinite energy has capacity zero.
pub fn capacity_from_energy(value: f64, p: f64) -> f64 {
    if value.is_infinite() {
        0.0
    } else {
        value.powf(-1.0 / p)
    }
}

pub fn capacity(v: &EnergyEstimate) -> f64 {
    v.capacity()
}

/// Smallest sphere sample accepted by [`calibrate_diag`].
pub const MIN_CALIBRATION_POINTS: usize = 50;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Calibration {
    pub policy: DiagPolicy,
    pub p_ref: f64,
    pub points: usize,
    pub capacity: f64,
    pub exact: f64,
    pub relative_error: f64,
    pub evaluations: usize,
}

impl Calibration {
    pub fn constant(&self) -> f64 {
        self.policy.constant().expect("calibrated policies carry a constant")
    }
}

/// Finds the constant `c` of `policy` for which the equilibrium capacity of
/// an `N`-point sample of `S^d` at `p_ref` reproduces the exact value.
///
/// Capacity increases with `c`, so `c` is bisected (geometrically) on
/// `[1e-3, 1e2]`. `d = 1` uses the circle lattice; `d ≥ 2` a seed-0 sample.
pub fn calibrate_diag(d: usize, p_ref: f64, count: usize, policy: DiagPolicy) -> Result<Calibration> {
    if matches!(policy, DiagPolicy::Omit) {
        return Err(invalid("the omit policy has no constant to calibrate"));
    }
    if count < MIN_CALIBRATION_POINTS {
        return Err(invalid(format!(
            "calibration needs at least {MIN_CALIBRATION_POINTS} points, got {count}"
        )));
    }
    let exact = sphere_capacity_exact(d, p_ref)?;
    let cloud = crate::geometry::sample_sphere(d, d + 1, count, 0)?;
    let (tol, max_iter) = (1e-10, 100_000);
    let mut k = kernel_matrix(&cloud, p_ref, policy.with_constant(1.0))?;
    let mut evaluations = 0;
    let mut rel_err = |c: f64, k: &mut KernelMatrix| -> Result<(f64, f64)> {
        let pol = policy.with_constant(c);
        k.replace_diagonal(&diagonal_values(&cloud, p_ref, pol)?, pol);
        let cap = solve_equilibrium(k, tol, max_iter)?.capacity();
        evaluations += 1;
        Ok((cap / exact - 1.0, cap))
    };
    let (mut lo, mut hi) = (1e-3_f64, 1e2_f64);
    let (lo_err, _) = rel_err(lo, &mut k)?;
    let (hi_err, _) = rel_err(hi, &mut k)?;
    if !(lo_err < 0.0 && hi_err > 0.0) {
        return Err(Error::CalibrationBracket { lo, hi, lo_err, hi_err });
    }
    let mut c = (lo * hi).sqrt();
    let mut cap = exact;
    let mut err = f64::INFINITY;
    for _ in 0..200 {
        c = (lo * hi).sqrt();
        let (e, v) = rel_err(c, &mut k)?;
        cap = v;
        err = e;
        if e.abs() < 1e-11 || hi / lo - 1.0 < 1e-14 {
            break;
        }
        if e < 0.0 {
            lo = c;
        } else {
            hi = c;
        }
    }
    Ok(Calibration {
        policy: policy.with_constant(c),
        p_ref,
        points: count,
        capacity: cap,
        exact,
        relative_error: err,
        evaluations,
    })
}

/// Certified upper bound on the energy of the natural measure `μ` of a
/// strictly self-similar set, hence on `V_p(A)`.
///
/// Self-similarity gives `I(μ) = X_k + q^k I(μ)` with `q = Σ L_i^{2d-p}` and
/// `X_k` the interaction between distinct depth-`k` cells. Bounding each
/// cell pair by the gap between their hull balls bounds `X_k`, and
/// `I(μ) ≤ X̄_k / (1 - q^k)`. Requires `0 < p < d` and `depth ≥ 1`.
pub fn self_similar_energy_bound(spec: &IfsSpec, depth: usize, p: f64) -> Result<EnergyEstimate> {
    self_similar_energy_bound_with(spec, depth, p, Execution::default())
}

pub fn self_similar_energy_bound_with(
    spec: &IfsSpec,
    depth: usize,
    p: f64,
    exec: Execution,
) -> Result<EnergyEstimate> {
    let d = spec.similarity_dimension();
    if !(p > 0.0 && p < d) {
        return Err(Error::ExponentOutOfRange { p, d });
    }
    if depth == 0 {
        return Err(invalid("self-similar bound needs depth >= 1"));
    }
    let cells = spec.cells(depth, DEFAULT_POINT_CAP)?;
    if cells.len() > MAX_MATRIX_SIZE {
        return Err(Error::SizeCap { size: cells.len(), cap: MAX_MATRIX_SIZE });
    }
    let rows = map_range(exec, cells.len(), |u| {
        let cu = cells.hull_center(u);
        let mut acc = 0.0;
        for v in 0..cells.len() {
            if v != u {
                let gap = distance(cu, cells.hull_center(v)) - cells.hull_radii[u] - cells.hull_radii[v];
                acc += cells.weights[v] * gap.powf(-p);
            }
        }
        cells.weights[u] * acc
    });
    let cross: f64 = rows.into_iter().sum();
    let q: f64 = spec.ratios().iter().map(|l| l.powf(2.0 * d - p)).sum();
    let value = cross / (1.0 - q.powi(depth as i32));
    Ok(EnergyEstimate {
        value,
        p,
        bound_direction: BoundDirection::Upper,
        method: EnergyMethod::SelfSimilarBound,
        cloud_label: format!("ifs(N={},depth={depth})", spec.maps.len()),
    })
}

/// `index,weight` CSV of an equilibrium vector, 17 significant digits.
pub fn weights_csv(weights: &[f64], comment: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
    }
    out.push_str("index,weight\n");
    for (i, w) in weights.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", crate::geometry::io::fmt_f64(*w)));
    }
    out
}
