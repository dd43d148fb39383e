//! Weighted point-cloud discretizations of compact sets: spheres, flat cubes,
//! unions of pieces, and attractors of strictly self-similar iterated
//! function systems carrying their natural measure.

mod ifs;
pub mod io;
mod spacing;

pub use ifs::{IfsCells, IfsSpec, Similarity, DEFAULT_POINT_CAP};
pub use spacing::{local_spacing, local_spacing_brute_force, local_spacing_sweep, BRUTE_FORCE_LIMIT};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::primitives::unit_sphere_area;

/// A finite weighted discretization of a compact set `E ⊂ R^n`.
///
/// Weights are the measures of the cells the points stand for (for example
/// `H^d` of a patch of sphere, or the natural self-similar measure of an IFS
/// cell), not necessarily a probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    n: usize,
    d: f64,
    coords: Vec<f64>,
    weights: Vec<f64>,
    label: String,
    seed: u64,
}

impl PointCloud {
    pub fn new(
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
        n: usize,
        d: f64,
        label: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        if points.iter().any(|p| p.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "every point must have {n} coordinates"
            )));
        }
        let coords = points.into_iter().flatten().collect();
        Self::from_flat(coords, weights, n, d, label, seed)
    }

    pub fn from_flat(
        coords: Vec<f64>,
        weights: Vec<f64>,
        n: usize,
        d: f64,
        label: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(invalid("ambient dimension must be at least 1"));
        }
        if coords.len() != weights.len() * n {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates do not match {} weights in R^{n}",
                coords.len(),
                weights.len()
            )));
        }
        if weights.is_empty() {
            return Err(invalid("a point cloud needs at least one point"));
        }
        if !(d >= 0.0) || !d.is_finite() {
            return Err(invalid(format!("target dimension must be finite and nonnegative, got {d}")));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(invalid("total weight must be positive"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid("coordinates must be finite"));
        }
        Ok(Self {
            n,
            d,
            coords,
            weights,
            label: label.into(),
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn target_dim(&self) -> f64 {
        self.d
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.n..(i + 1) * self.n]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.n)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weights normalized to sum to one.
    pub fn probability_weights(&self) -> Vec<f64> {
        let total = self.total_weight();
        self.weights.iter().map(|w| w / total).collect()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Dilation `x -> s x`. Weights scale by `s^d`, as `H^d` does.
    pub fn dilate(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(invalid(format!("dilation factor must be positive, got {s}")));
        }
        let mut out = self.clone();
        out.coords.iter_mut().for_each(|c| *c *= s);
        let ws = s.powf(self.d);
        out.weights.iter_mut().for_each(|w| *w *= ws);
        out.label = format!("{}*{s}", self.label);
        Ok(out)
    }

    /// Multiplies every weight by `c > 0`, leaving the points in place.
    pub fn scale_weights(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(invalid(format!("weight scale must be positive, got {c}")));
        }
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w *= c);
        Ok(out)
    }

    /// Reorders points (and weights) so that new index `k` holds old `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        if perm.len() != self.len() || perm.iter().any(|&i| i >= self.len() || std::mem::replace(&mut seen[i], true)) {
            return Err(invalid("not a permutation of the cloud indices"));
        }
        let coords = perm.iter().flat_map(|&i| self.point(i).iter().copied()).collect();
        let weights = perm.iter().map(|&i| self.weights[i]).collect();
        Self::from_flat(coords, weights, self.n, self.d, self.label.clone(), self.seed)
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.n];
        let mut hi = vec![f64::NEG_INFINITY; self.n];
        for p in self.points() {
            for k in 0..self.n {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Length of the bounding-box diagonal, an upper bound for the diameter.
    pub fn extent(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        lo.iter()
            .zip(&hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }
}

/// `count` points on the unit sphere `S^d ⊂ R^{d+1}`, embedded in `R^n` by
/// zero padding, each carrying weight `|S^d| / count`.
///
/// `d = 1` uses the deterministic lattice `θ_k = 2πk / count`; higher `d`
/// normalizes standard Gaussian vectors drawn from a seeded ChaCha stream.
pub fn sample_sphere(d: usize, n: usize, count: usize, seed: u64) -> Result<PointCloud> {
    if d < 1 {
        return Err(invalid("sphere dimension must be at least 1"));
    }
    if n < d + 1 {
        return Err(Error::DimensionMismatch(format!(
            "S^{d} needs ambient dimension at least {}, got {n}",
            d + 1
        )));
    }
    if count < 2 {
        return Err(invalid("sphere sampling needs at least 2 points"));
    }
    let area = unit_sphere_area(d as f64 + 1.0)?;
    let mut coords = vec![0.0; count * n];
    if d == 1 {
        for k in 0..count {
            let t = 2.0 * PI * k as f64 / count as f64;
            coords[k * n] = t.cos();
            coords[k * n + 1] = t.sin();
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 0..count {
            let row = &mut coords[k * n..k * n + d + 1];
            let norm = loop {
                for v in row.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    break norm;
                }
            };
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    let weights = vec![area / count as f64; count];
    PointCloud::from_flat(coords, weights, n, d as f64, format!("sphere(d={d},N={count})"), seed)
}

/// Midpoint grid with `m` points per axis on `[0,1]^d`, embedded in the first
/// `d` coordinates of `R^n` and translated by `offset` (empty means zero).
pub fn sample_cube(d: usize, n: usize, m: usize, offset: &[f64]) -> Result<PointCloud> {
    if d < 1 || n < d {
        return Err(Error::DimensionMismatch(format!("cube needs 1 <= d <= n, got d={d}, n={n}")));
    }
    if m < 1 {
        return Err(invalid("cube grid needs at least one point per axis"));
    }
    if !offset.is_empty() && offset.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "offset has {} entries, ambient dimension is {n}",
            offset.len()
        )));
    }
    let count = m
        .checked_pow(d as u32)
        .ok_or(Error::SizeCap { size: usize::MAX, cap: usize::MAX })?;
    let mut coords = vec![0.0; count * n];
    for k in 0..count {
        let mut rest = k;
        let row = &mut coords[k * n..(k + 1) * n];
        for axis in (0..d).rev() {
            let idx = rest % m;
            rest /= m;
            row[axis] = (idx as f64 + 0.5) / m as f64;
        }
        if !offset.is_empty() {
            row.iter_mut().zip(offset).for_each(|(c, o)| *c += o);
        }
    }
    let w = 1.0 / count as f64;
    PointCloud::from_flat(coords, vec![w; count], n, d as f64, format!("cube(d={d},m={m})"), 0)
}

/// Concatenation of clouds sharing ambient and target dimension.
pub fn union(clouds: &[PointCloud]) -> Result<PointCloud> {
    let first = clouds.first().ok_or_else(|| invalid("union of no clouds"))?;
    for c in clouds {
        if c.n != first.n || (c.d - first.d).abs() > 1e-12 {
            return Err(Error::DimensionMismatch(format!(
                "cannot unite {} (n={}, d={}) with {} (n={}, d={})",
                first.label, first.n, first.d, c.label, c.n, c.d
            )));
        }
    }
    if clouds.len() == 1 {
        return Ok(first.clone());
    }
    let coords = clouds.iter().flat_map(|c| c.coords.iter().copied()).collect();
    let weights = clouds.iter().flat_map(|c| c.weights.iter().copied()).collect();
    let label = format!(
        "union({})",
        clouds.iter().map(|c| c.label.as_str()).collect::<Vec<_>>().join("+")
    );
    PointCloud::from_flat(coords, weights, first.n, first.d, label, first.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn circle_lattice() {
        let c = sample_sphere(1, 2, 4, 99).unwrap();
        let expected = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (p, e) in c.points().zip(expected) {
            assert!((p[0] - e[0]).abs() < 1e-15 && (p[1] - e[1]).abs() < 1e-15);
        }
        for w in c.weights() {
            assert_relative_eq!(*w, 2.0 * PI / 4.0, max_relative = 1e-15);
        }
        // same points regardless of seed
        assert_eq!(c.coords(), sample_sphere(1, 2, 4, 3).unwrap().coords());
    }

    #[test]
    fn sphere_total_weight() {
        let c = sample_sphere(2, 3, 1000, 5).unwrap();
        assert_relative_eq!(c.total_weight(), 4.0 * PI, max_relative = 1e-9);
        for p in c.points() {
            let r: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - 1.0).abs() < 1e-12);
        }
        for (seed, count) in [(0, 17), (1, 333), (42, 2)] {
            let c = sample_sphere(3, 5, count, seed).unwrap();
            assert_relative_eq!(c.total_weight(), unit_sphere_area(4.0).unwrap(), max_relative = 1e-9);
        }
    }

    #[test]
    fn embedded_circle() {
        let c = sample_sphere(1, 3, 8, 0).unwrap();
        assert_eq!(c.ambient_dim(), 3);
        assert!(c.points().all(|p| p[2] == 0.0));
        assert_relative_eq!(c.total_weight(), 2.0 * PI, max_relative = 1e-12);
    }

    #[test]
    fn sphere_rejects_bad_dims() {
        assert!(sample_sphere(2, 2, 10, 0).is_err());
        assert!(sample_sphere(0, 2, 10, 0).is_err());
        assert!(sample_sphere(1, 2, 1, 0).is_err());
    }

    #[test]
    fn cube_examples() {
        let c = sample_cube(1, 1, 4, &[]).unwrap();
        let xs: Vec<f64> = c.points().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.125, 0.375, 0.625, 0.875]);
        assert!(c.weights().iter().all(|w| *w == 0.25));

        let sq = sample_cube(2, 2, 3, &[]).unwrap();
        assert_eq!(sq.len(), 9);
        assert_relative_eq!(sq.total_weight(), 1.0, max_relative = 1e-15);

        let seg = sample_cube(1, 2, 2, &[0.0, 1.0]).unwrap();
        let pts: Vec<Vec<f64>> = seg.points().map(|p| p.to_vec()).collect();
        assert_eq!(pts, vec![vec![0.25, 1.0], vec![0.75, 1.0]]);
        assert!(sample_cube(2, 1, 3, &[]).is_err());
        assert!(sample_cube(1, 2, 3, &[1.0]).is_err());
    }

    #[test]
    fn union_examples() {
        let a = sample_sphere(1, 2, 16, 0).unwrap();
        let shifted: Vec<Vec<f64>> = a.points().map(|p| vec![p[0] + 3.0, p[1]]).collect();
        let b = PointCloud::new(shifted, a.weights().to_vec(), 2, 1.0, "circle2", 0).unwrap();
        let u = union(&[a.clone(), b]).unwrap();
        assert_relative_eq!(u.total_weight(), 4.0 * PI, max_relative = 1e-12);
        assert!(u.label().contains("sphere") && u.label().contains("circle2"));

        let single = union(std::slice::from_ref(&a)).unwrap();
        assert_eq!(single, a);

        // touching circles share the point (1, 0) ~ (1, 0)
        let touching: Vec<Vec<f64>> = a.points().map(|p| vec![p[0] + 2.0, p[1]]).collect();
        let t = PointCloud::new(touching, a.weights().to_vec(), 2, 1.0, "touch", 0).unwrap();
        let u = union(&[a.clone(), t]).unwrap();
        assert_relative_eq!(u.total_weight(), 4.0 * PI, max_relative = 1e-12);

        let flat = sample_cube(2, 2, 3, &[]).unwrap();
        assert!(union(&[a, flat]).is_err());
    }

    #[test]
    fn invariants_enforced() {
        assert!(PointCloud::new(vec![vec![0.0]], vec![-1.0], 1, 1.0, "", 0).is_err());
        assert!(PointCloud::new(vec![vec![0.0]], vec![0.0], 1, 1.0, "", 0).is_err());
        assert!(PointCloud::new(vec![], vec![], 1, 1.0, "", 0).is_err());
        assert!(PointCloud::new(vec![vec![0.0, 1.0]], vec![1.0], 1, 1.0, "", 0).is_err());
        assert!(PointCloud::new(vec![vec![f64::NAN]], vec![1.0], 1, 1.0, "", 0).is_err());
    }

    #[test]
    fn dilation_scales_weights() {
        let c = sample_sphere(1, 2, 10, 0).unwrap();
        let s = c.dilate(2.0).unwrap();
        assert_relative_eq!(s.total_weight(), 4.0 * PI, max_relative = 1e-12);
        assert_relative_eq!(s.point(3)[0], 2.0 * c.point(3)[0]);
    }
}
