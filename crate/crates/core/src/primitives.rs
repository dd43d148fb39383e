//! Scalar building blocks: the Riesz kernel, the gamma function and the
//! sphere / ball constants that appear in every limit formula.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};

/// Exponent, target dimension and ambient dimension of a Riesz problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RieszParams {
    pub p: f64,
    pub d: f64,
    pub n: usize,
}

impl RieszParams {
    pub fn new(p: f64, d: f64, n: usize) -> Result<Self> {
        if !(p > 0.0) || !p.is_finite() {
            return Err(invalid(format!("p must be positive, got {p}")));
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(invalid(format!("d must be positive, got {d}")));
        }
        if n == 0 {
            return Err(invalid("ambient dimension n must be at least 1"));
        }
        if d.fract() == 0.0 && d > n as f64 {
            return Err(invalid(format!("integer d = {d} exceeds ambient n = {n}")));
        }
        Ok(Self { p, d, n })
    }

    /// Same parameters, additionally requiring the finite-energy regime `p < d`.
    pub fn subcritical(p: f64, d: f64, n: usize) -> Result<Self> {
        let params = Self::new(p, d, n)?;
        if p >= d {
            return Err(Error::ExponentOutOfRange { p, d });
        }
        Ok(params)
    }

    pub fn gap(&self) -> f64 {
        self.d - self.p
    }
}

pub fn distance(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// `|x - y|^{-p}`, or `f64::INFINITY` when the points coincide.
pub fn riesz_kernel(x: &[f64], y: &[f64], p: f64) -> f64 {
    let r = distance(x, y);
    if r == 0.0 {
        f64::INFINITY
    } else {
        r.powf(-p)
    }
}

pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(invalid(format!("gamma is only defined here for x > 0, got {x}")));
    }
    Ok(statrs::function::gamma::gamma(x))
}

pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(invalid(format!("ln_gamma needs x > 0, got {x}")));
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

/// `B(a, b) = Γ(a)Γ(b)/Γ(a+b)` for positive arguments.
pub fn beta(a: f64, b: f64) -> Result<f64> {
    Ok((ln_gamma(a)? + ln_gamma(b)? - ln_gamma(a + b)?).exp())
}

/// Surface area `|S^{d-1}| = 2 π^{d/2} / Γ(d/2)` of the unit sphere in `R^d`.
pub fn unit_sphere_area(d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(invalid(format!("sphere area needs d > 0, got {d}")));
    }
    Ok(2.0 * PI.powf(d / 2.0) / gamma(d / 2.0)?)
}

/// Volume `|B^d| = π^{d/2} / Γ(d/2 + 1)` of the unit ball in `R^d`.
pub fn unit_ball_volume(d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(invalid(format!("ball volume needs d > 0, got {d}")));
    }
    Ok(PI.powf(d / 2.0) / gamma(d / 2.0 + 1.0)?)
}

/// Riesz `p`-energy `E|X - Y|^{-p}` of two independent uniform points in the
/// unit `d`-ball, for `0 < p < d`:
///
/// `|S^{d-1}| |B^{d-1}| / |B^d|^2 · 2^{d-p} B((d-p+1)/2, (d+1)/2) / (d - p)`.
///
/// A ball of radius `a` has energy `a^{-p}` times this. `(d - p)` times the
/// value tends to `|S^{d-1}| / |B^d|` as `p -> d`.
pub fn unit_ball_self_energy(d: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < d) {
        return Err(Error::ExponentOutOfRange { p, d });
    }
    // |B^{d-1}|, continued to d <= 1 by the same gamma expression
    let lower = PI.powf((d - 1.0) / 2.0) / gamma((d + 1.0) / 2.0)?;
    let bv = unit_ball_volume(d)?;
    let s = unit_sphere_area(d)?;
    let b = beta((d - p + 1.0) / 2.0, (d + 1.0) / 2.0)?;
    Ok(s * lower / (bv * bv) * 2f64.powf(d - p) * b / (d - p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kernel_examples() {
        assert_eq!(riesz_kernel(&[0.0, 0.0], &[1.0, 0.0], 2.0), 1.0);
        assert_eq!(riesz_kernel(&[0.0], &[2.0], 1.0), 0.5);
        assert!(riesz_kernel(&[0.3, 0.1], &[0.3, 0.1], 1.5).is_infinite());
    }

    #[test]
    fn kernel_symmetric_and_homogeneous() {
        let x = [0.2, -1.0, 0.5];
        let y = [1.1, 0.4, -0.3];
        let p = 1.3;
        assert_eq!(riesz_kernel(&x, &y, p), riesz_kernel(&y, &x, p));
        for s in [0.1, 2.0, 7.5] {
            let sx: Vec<f64> = x.iter().map(|v| v * s).collect();
            let sy: Vec<f64> = y.iter().map(|v| v * s).collect();
            assert_relative_eq!(
                riesz_kernel(&sx, &sy, p),
                s.powf(-p) * riesz_kernel(&x, &y, p),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn gamma_values() {
        assert_relative_eq!(gamma(1.0).unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(gamma(0.5).unwrap(), PI.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(gamma(0.5).unwrap(), 1.7724538509, max_relative = 1e-10);
        assert_relative_eq!(gamma(5.0).unwrap(), 24.0, max_relative = 1e-12);
        assert!(gamma(0.0).is_err());
        assert!(gamma(-1.5).is_err());
    }

    #[test]
    fn gamma_recurrence() {
        let mut x = 0.1;
        while x <= 20.0 {
            let lhs = gamma(x + 1.0).unwrap();
            let rhs = x * gamma(x).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
            x += 0.173;
        }
    }

    #[test]
    fn sphere_and_ball_constants() {
        assert_relative_eq!(unit_sphere_area(1.0).unwrap(), 2.0, max_relative = 1e-12);
        assert_relative_eq!(unit_sphere_area(2.0).unwrap(), 2.0 * PI, max_relative = 1e-12);
        assert_relative_eq!(unit_sphere_area(3.0).unwrap(), 4.0 * PI, max_relative = 1e-12);
        assert_relative_eq!(unit_ball_volume(1.0).unwrap(), 2.0, max_relative = 1e-12);
        assert_relative_eq!(unit_ball_volume(2.0).unwrap(), PI, max_relative = 1e-12);
        assert_relative_eq!(unit_ball_volume(3.0).unwrap(), 4.0 * PI / 3.0, max_relative = 1e-12);
        assert!(unit_sphere_area(0.0).is_err());
        assert!(unit_ball_volume(-2.0).is_err());
        let mut d = 0.25;
        while d < 12.0 {
            assert_relative_eq!(
                unit_sphere_area(d).unwrap(),
                d * unit_ball_volume(d).unwrap(),
                max_relative = 1e-12
            );
            d += 0.35;
        }
    }

    #[test]
    fn params_validation() {
        assert!(RieszParams::new(0.5, 1.0, 2).is_ok());
        assert!(RieszParams::new(0.0, 1.0, 2).is_err());
        assert!(RieszParams::new(0.5, 3.0, 2).is_err());
        assert!(RieszParams::subcritical(1.0, 1.0, 2).is_err());
        assert!(RieszParams::new(0.5, 0.63, 1).is_ok());
    }

    #[test]
    fn ball_self_energy_interval() {
        // Uniform measure on [-1, 1]: (1/4)∫∫|x-y|^{-p} = 2^{1-p}/((1-p)(2-p)).
        for p in [0.1, 0.5, 0.9] {
            let expected = 2f64.powf(1.0 - p) / ((1.0 - p) * (2.0 - p));
            assert_relative_eq!(unit_ball_self_energy(1.0, p).unwrap(), expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn ball_self_energy_disk_by_quadrature() {
        // E|X-Y|^{-p} = (1/|B|^2) ∫_0^2 |S^1| r^{1-p} V(r) dr with the lens area V(r).
        let p = 0.7;
        let lens = |r: f64| 2.0 * (r / 2.0).acos() - (r / 2.0) * (4.0 - r * r).sqrt();
        // substitute r = u^{1/(2-p)} to remove the endpoint singularity
        let a = 2.0 - p;
        let umax = 2f64.powf(a);
        let m = 200_000;
        let h = umax / m as f64;
        let mut acc = 0.0;
        for k in 0..m {
            let u = (k as f64 + 0.5) * h;
            let r = u.powf(1.0 / a);
            acc += lens(r) / a;
        }
        let value = 2.0 * PI * acc * h / (PI * PI);
        assert_relative_eq!(unit_ball_self_energy(2.0, p).unwrap(), value, max_relative = 1e-6);
    }

    #[test]
    fn ball_self_energy_limit() {
        for d in [1.0, 2.0, 3.0] {
            let p = d - 1e-7;
            let scaled = (d - p) * unit_ball_self_energy(d, p).unwrap();
            let target = unit_sphere_area(d).unwrap() / unit_ball_volume(d).unwrap();
            assert_relative_eq!(scaled, target, max_relative = 1e-5);
        }
        assert!(unit_ball_self_energy(1.0, 1.0).is_err());
    }
}
