use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::error::{invalid, Error, Result};
use crate::primitives::distance;

/// Largest number of depth-level cells generated unless the caller raises it.
pub const DEFAULT_POINT_CAP: usize = 1 << 20;

/// A contracting similarity `x -> ratio · rotation · x + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub ratio: f64,
    /// Orthogonal `n×n` matrix, row-major.
    pub rotation: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

impl Similarity {
    pub fn new(ratio: f64, rotation: Vec<Vec<f64>>, offset: Vec<f64>) -> Self {
        Self { ratio, rotation, offset }
    }

    /// `ratio · x + offset` with identity rotation.
    pub fn scaling(ratio: f64, offset: Vec<f64>) -> Self {
        let n = offset.len();
        let rotation = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { ratio, rotation, offset }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let ux: f64 = self.rotation[i].iter().zip(x).map(|(u, v)| u * v).sum();
            *o = self.ratio * ux + self.offset[i];
        }
    }

    fn linear_part(&self) -> DMatrix<f64> {
        let n = self.offset.len();
        DMatrix::from_fn(n, n, |i, j| self.ratio * self.rotation[i][j])
    }

    /// The unique fixed point, solving `(I - L U) x = b`.
    pub fn fixed_point(&self) -> Vec<f64> {
        let n = self.offset.len();
        let a = DMatrix::identity(n, n) - self.linear_part();
        let b = DVector::from_column_slice(&self.offset);
        // I - LU is invertible since ‖LU‖ = L < 1
        let x = a.lu().solve(&b).expect("contraction has a fixed point");
        x.iter().copied().collect()
    }
}

/// A strictly self-similar iterated function system in `R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfsSpec {
    pub n: usize,
    pub maps: Vec<Similarity>,
}

/// Depth-`k` cells of an attractor: one representative point per word, the
/// word's image of the bounding ball, and the natural-measure weight.
#[derive(Debug, Clone)]
pub struct IfsCells {
    pub n: usize,
    pub depth: usize,
    pub dimension: f64,
    pub points: Vec<f64>,
    pub hull_centers: Vec<f64>,
    pub hull_radii: Vec<f64>,
    pub weights: Vec<f64>,
}

impl IfsCells {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.n..(i + 1) * self.n]
    }

    pub fn hull_center(&self, i: usize) -> &[f64] {
        &self.hull_centers[i * self.n..(i + 1) * self.n]
    }
}

impl IfsSpec {
    pub fn new(n: usize, maps: Vec<Similarity>) -> Result<Self> {
        let spec = Self { n, maps };
        spec.validate()?;
        Ok(spec)
    }

    /// Middle-thirds Cantor set: `x/3` and `x/3 + 2/3`.
    pub fn cantor() -> Self {
        Self {
            n: 1,
            maps: vec![
                Similarity::scaling(1.0 / 3.0, vec![0.0]),
                Similarity::scaling(1.0 / 3.0, vec![2.0 / 3.0]),
            ],
        }
    }

    /// Four maps of ratio 1/4 placed at the corners of the unit square; the
    /// attractor has similarity dimension exactly 1.
    pub fn planar_dust() -> Self {
        let corners = [[0.0, 0.0], [0.75, 0.0], [0.0, 0.75], [0.75, 0.75]];
        Self {
            n: 2,
            maps: corners
                .iter()
                .map(|c| Similarity::scaling(0.25, c.to_vec()))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("IFS ambient dimension must be positive"));
        }
        if self.maps.is_empty() {
            return Err(invalid("IFS needs at least one map"));
        }
        for (k, m) in self.maps.iter().enumerate() {
            if !(m.ratio > 0.0 && m.ratio < 1.0) {
                return Err(invalid(format!("map {k}: ratio {} not in (0,1)", m.ratio)));
            }
            if m.offset.len() != self.n
                || m.rotation.len() != self.n
                || m.rotation.iter().any(|r| r.len() != self.n)
            {
                return Err(Error::DimensionMismatch(format!("map {k} is not {0}x{0}", self.n)));
            }
            let u = DMatrix::from_fn(self.n, self.n, |i, j| m.rotation[i][j]);
            let defect = (&u * u.transpose() - DMatrix::identity(self.n, self.n)).amax();
            if defect > 1e-12 {
                return Err(invalid(format!("map {k}: rotation is not orthogonal (defect {defect:.2e})")));
            }
        }
        Ok(())
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.maps.iter().map(|m| m.ratio).collect()
    }

    /// Root `d` of the Moran equation `Σ L_i^d = 1`, by bisection to 1e-12.
    pub fn similarity_dimension(&self) -> f64 {
        similarity_dimension(&self.ratios())
    }

    /// A ball `B(c, R)` mapped into itself by every map: `c` is the mean of the
    /// fixed points and `R = max_i |φ_i(c) - c| / (1 - L_i)`.
    pub fn bounding_ball(&self) -> (Vec<f64>, f64) {
        let fixed: Vec<Vec<f64>> = self.maps.iter().map(|m| m.fixed_point()).collect();
        let mut center = vec![0.0; self.n];
        for f in &fixed {
            center.iter_mut().zip(f).for_each(|(c, v)| *c += v / fixed.len() as f64);
        }
        let mut image = vec![0.0; self.n];
        let mut radius: f64 = 0.0;
        for m in &self.maps {
            m.apply(&center, &mut image);
            radius = radius.max(distance(&image, &center) / (1.0 - m.ratio));
        }
        (center, radius)
    }

    /// Rejects systems whose depth-1 images of the bounding ball intersect.
    pub fn check_disjoint(&self) -> Result<()> {
        let (c, r) = self.bounding_ball();
        let images: Vec<Vec<f64>> = self
            .maps
            .iter()
            .map(|m| {
                let mut out = vec![0.0; self.n];
                m.apply(&c, &mut out);
                out
            })
            .collect();
        for i in 0..self.maps.len() {
            for j in i + 1..self.maps.len() {
                let gap = distance(&images[i], &images[j])
                    - (self.maps[i].ratio + self.maps[j].ratio) * r;
                if !(gap > 0.0) {
                    return Err(Error::OverlappingImages { i, j });
                }
            }
        }
        Ok(())
    }

    /// All depth-`depth` cells, words in lexicographic order.
    pub fn cells(&self, depth: usize, cap: usize) -> Result<IfsCells> {
        self.validate()?;
        self.check_disjoint()?;
        let count = (self.maps.len() as u128).checked_pow(depth as u32).unwrap_or(u128::MAX);
        if count > cap as u128 {
            return Err(Error::SizeCap {
                size: usize::try_from(count).unwrap_or(usize::MAX),
                cap,
            });
        }
        let dimension = self.similarity_dimension();
        let n = self.n;
        let (c, r) = self.bounding_ball();
        let mut points = self.maps[0].fixed_point();
        let mut centers = c;
        let mut radii = vec![r];
        let mut weights = vec![1.0];
        let mut buf = vec![0.0; n];
        for _ in 0..depth {
            let len = weights.len();
            let mut np = Vec::with_capacity(points.len() * self.maps.len());
            let mut nc = Vec::with_capacity(centers.len() * self.maps.len());
            let mut nr = Vec::with_capacity(len * self.maps.len());
            let mut nw = Vec::with_capacity(len * self.maps.len());
            // word i·u: φ_i applied after the deeper maps, so the first letter varies slowest
            for m in &self.maps {
                let mw = m.ratio.powf(dimension);
                for k in 0..len {
                    m.apply(&points[k * n..(k + 1) * n], &mut buf);
                    np.extend_from_slice(&buf);
                    m.apply(&centers[k * n..(k + 1) * n], &mut buf);
                    nc.extend_from_slice(&buf);
                    nr.push(m.ratio * radii[k]);
                    nw.push(mw * weights[k]);
                }
            }
            points = np;
            centers = nc;
            radii = nr;
            weights = nw;
        }
        Ok(IfsCells {
            n,
            depth,
            dimension,
            points,
            hull_centers: centers,
            hull_radii: radii,
            weights,
        })
    }

    /// Point cloud of the attractor at `depth` with the natural probability
    /// measure `Π L_{i_j}^d` on the cells.
    pub fn attractor(&self, depth: usize) -> Result<PointCloud> {
        self.attractor_with_cap(depth, DEFAULT_POINT_CAP)
    }

    pub fn attractor_with_cap(&self, depth: usize, cap: usize) -> Result<PointCloud> {
        let cells = self.cells(depth, cap)?;
        PointCloud::from_flat(
            cells.points,
            cells.weights,
            self.n,
            cells.dimension,
            format!("ifs(N={},depth={depth})", self.maps.len()),
            0,
        )
    }
}

/// Root of `Σ L_i^d = 1` for ratios in `(0,1)`. A single map has no positive
/// root; that degenerate case returns 0 and logs a warning.
pub fn similarity_dimension(ratios: &[f64]) -> f64 {
    if ratios.len() < 2 {
        log::warn!("similarity dimension of a single-map system is 0");
        return 0.0;
    }
    let f = |d: f64| ratios.iter().map(|l| l.powf(d)).sum::<f64>() - 1.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn moran_roots() {
        assert_relative_eq!(
            IfsSpec::cantor().similarity_dimension(),
            2f64.ln() / 3f64.ln(),
            epsilon = 1e-12
        );
        assert!((similarity_dimension(&[0.25; 4]) - 1.0).abs() < 1e-12);
        assert!((similarity_dimension(&[0.25; 2]) - 0.5).abs() < 1e-12);
        assert_eq!(similarity_dimension(&[0.5]), 0.0);
        // many small ratios push the root above 1
        assert!((similarity_dimension(&[0.1; 50]) - 50f64.ln() / 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn moran_permutation_invariant() {
        let a = similarity_dimension(&[0.2, 0.45, 0.3]);
        let b = similarity_dimension(&[0.3, 0.2, 0.45]);
        assert_eq!(a, b);
    }

    #[test]
    fn cantor_cells() {
        let spec = IfsSpec::cantor();
        let c0 = spec.attractor(0).unwrap();
        assert_eq!(c0.len(), 1);
        assert_relative_eq!(c0.weights()[0], 1.0);
        let c2 = spec.attractor(2).unwrap();
        let xs: Vec<f64> = c2.points().map(|p| p[0]).collect();
        let expected = [0.0, 2.0 / 9.0, 2.0 / 3.0, 8.0 / 9.0];
        for (x, e) in xs.iter().zip(expected) {
            assert_relative_eq!(*x, e, epsilon = 1e-15);
        }
        for w in c2.weights() {
            assert_relative_eq!(*w, 0.25, max_relative = 1e-12);
        }
        assert_relative_eq!(c2.target_dim(), 0.630929753571457, epsilon = 1e-12);
    }

    #[test]
    fn cantor_hull() {
        let (c, r) = IfsSpec::cantor().bounding_ball();
        assert_relative_eq!(c[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(r, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn planar_dust_depth_one() {
        let spec = IfsSpec::planar_dust();
        let c = spec.attractor(1).unwrap();
        assert_eq!(c.len(), 4);
        assert!((c.target_dim() - 1.0).abs() < 1e-12);
        for w in c.weights() {
            assert_relative_eq!(*w, 0.25, max_relative = 1e-12);
        }
    }

    #[test]
    fn rotated_maps_allowed() {
        let (s, co) = (0.6f64.sin(), 0.6f64.cos());
        let rot = vec![vec![co, -s], vec![s, co]];
        let spec = IfsSpec::new(
            2,
            vec![
                Similarity::new(0.3, rot.clone(), vec![0.0, 0.0]),
                Similarity::new(0.3, rot, vec![1.0, 0.0]),
            ],
        )
        .unwrap();
        let cloud = spec.attractor(6).unwrap();
        assert_eq!(cloud.len(), 64);
        assert_relative_eq!(cloud.total_weight(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        let bad_ratio = IfsSpec::new(1, vec![Similarity::scaling(1.2, vec![0.0])]);
        assert!(bad_ratio.is_err());
        let skew = IfsSpec::new(
            2,
            vec![Similarity::new(0.3, vec![vec![1.0, 0.1], vec![0.0, 1.0]], vec![0.0, 0.0])],
        );
        assert!(skew.is_err());
        let overlapping = IfsSpec::new(
            1,
            vec![
                Similarity::scaling(0.6, vec![0.0]),
                Similarity::scaling(0.6, vec![0.4]),
            ],
        )
        .unwrap();
        assert!(matches!(overlapping.attractor(2), Err(Error::OverlappingImages { .. })));
        assert!(matches!(
            IfsSpec::cantor().attractor_with_cap(11, 1024),
            Err(Error::SizeCap { .. })
        ));
    }

    #[test]
    fn refinement_weights_aggregate() {
        let spec = IfsSpec::new(
            1,
            vec![
                Similarity::scaling(0.2, vec![0.0]),
                Similarity::scaling(0.35, vec![0.3]),
                Similarity::scaling(0.25, vec![0.75]),
            ],
        )
        .unwrap();
        let n = spec.maps.len();
        for k in 0..7 {
            let coarse = spec.cells(k, DEFAULT_POINT_CAP).unwrap();
            let fine = spec.cells(k + 1, DEFAULT_POINT_CAP).unwrap();
            assert!((fine.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // fine index j = i·n^k + m encodes the word i·u with u the m-th
            // depth-k word; its depth-k ancestor is i followed by u minus its last letter
            let block = n.pow(k as u32);
            let mut agg = vec![0.0; coarse.len()];
            for (j, w) in fine.weights.iter().enumerate() {
                let i = j / block;
                let m = j % block;
                let prefix = if k == 0 { 0 } else { i * n.pow(k as u32 - 1) + m / n };
                agg[prefix] += w;
            }
            for (a, b) in agg.iter().zip(&coarse.weights) {
                assert!((a - b).abs() < 1e-12, "depth {k}: {a} vs {b}");
            }
        }
    }
}
