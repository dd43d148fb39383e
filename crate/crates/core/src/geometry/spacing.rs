use super::PointCloud;
use crate::error::{invalid, Result};
use crate::exec::{map_range, Execution};
use crate::primitives::distance;

/// Clouds up to this size use the exact quadratic scan.
pub const BRUTE_FORCE_LIMIT: usize = 10_000;

/// Distance from each point to its nearest distinct neighbor.
pub fn local_spacing(cloud: &PointCloud) -> Result<Vec<f64>> {
    if cloud.len() <= BRUTE_FORCE_LIMIT {
        local_spacing_brute_force(cloud, Execution::default())
    } else {
        local_spacing_sweep(cloud, Execution::default())
    }
}

pub fn local_spacing_brute_force(cloud: &PointCloud, exec: Execution) -> Result<Vec<f64>> {
    check(cloud)?;
    let out = map_range(exec, cloud.len(), |i| {
        let x = cloud.point(i);
        cloud
            .points()
            .map(|y| distance(x, y))
            .filter(|r| *r > 0.0)
            .fold(f64::INFINITY, f64::min)
    });
    finish(out)
}

/// Sort-and-sweep along the axis of largest spread: candidates are scanned
/// outward in sorted order until the coordinate gap alone exceeds the best
/// distance found. Exact, and close to `N log N` for well spread clouds.
pub fn local_spacing_sweep(cloud: &PointCloud, exec: Execution) -> Result<Vec<f64>> {
    check(cloud)?;
    let (lo, hi) = cloud.bounding_box();
    let axis = (0..cloud.ambient_dim())
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.sort_by(|&a, &b| cloud.point(a)[axis].total_cmp(&cloud.point(b)[axis]));
    let key: Vec<f64> = order.iter().map(|&i| cloud.point(i)[axis]).collect();

    let by_rank = map_range(exec, order.len(), |rank| {
        let x = cloud.point(order[rank]);
        let mut best = f64::INFINITY;
        for other in (0..rank).rev() {
            if key[rank] - key[other] >= best {
                break;
            }
            let r = distance(x, cloud.point(order[other]));
            if r > 0.0 && r < best {
                best = r;
            }
        }
        for other in rank + 1..order.len() {
            if key[other] - key[rank] >= best {
                break;
            }
            let r = distance(x, cloud.point(order[other]));
            if r > 0.0 && r < best {
                best = r;
            }
        }
        best
    });
    let mut out = vec![0.0; cloud.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = by_rank[rank];
    }
    finish(out)
}

fn check(cloud: &PointCloud) -> Result<()> {
    if cloud.len() < 2 {
        return Err(invalid("local spacing needs at least two points"));
    }
    Ok(())
}

fn finish(out: Vec<f64>) -> Result<Vec<f64>> {
    if out.iter().any(|h| h.is_infinite()) {
        return Err(invalid("all points coincide; no distinct neighbor exists"));
    }
    Ok(out)
}
