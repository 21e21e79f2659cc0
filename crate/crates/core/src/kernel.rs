//! Epanechnikov kernel, its constants, a rule-of-thumb bandwidth and the
//! weighted local-linear fit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integral constants of a second-order kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    /// `int K^2`.
    pub l2norm_sq: f64,
    /// `int u^2 K(u) du`.
    pub mu2: f64,
    /// `int K'(u)^2 du`.
    pub deriv_l2norm_sq: f64,
}

impl KernelSpec {
    pub fn l2norm(&self) -> f64 {
        self.l2norm_sq.sqrt()
    }

    pub fn deriv_l2norm(&self) -> f64 {
        self.deriv_l2norm_sq.sqrt()
    }
}

/// Positive bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Bandwidth(pub f64);

impl Bandwidth {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h.is_finite() {
            Ok(Self(h))
        } else {
            Err(Error::InvalidArgs(format!("bandwidth must be positive, got {h}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// `0.75 (1 - u^2)` on `[-1, 1]`, zero outside.
#[inline]
pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// `K_h(t) = K(t/h)/h`.
#[inline]
pub fn scaled_kernel(t: f64, h: f64) -> f64 {
    epanechnikov(t / h) / h
}

pub fn kernel_constants() -> KernelSpec {
    KernelSpec { l2norm_sq: 0.6, mu2: 0.2, deriv_l2norm_sq: 1.5 }
}

/// Rule-of-thumb bandwidth from a global quartic pilot fit:
/// `h = [ |K|^2 s^2 (b-a) / (mu2^2 sum m''(x_i)^2) ]^{1/5}` clamped to
/// `[(b-a)/n, (b-a)/2]`, with `s^2 = RSS/(n-5)`.
pub fn rot_bandwidth(x: &[f64], y: &[f64]) -> Result<Bandwidth> {
    let n = x.len();
    if n < 10 || y.len() != n {
        return Err(Error::InvalidArgs(format!(
            "rot_bandwidth needs n >= 10 matching points, got {n} and {}",
            y.len()
        )));
    }
    let (a, b) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if !(b > a) {
        return Err(Error::DegenerateColumn("constant covariate".into()));
    }
    // Work in standardized coordinates u = (x - c)/s for conditioning.
    let c = 0.5 * (a + b);
    let s = 0.5 * (b - a);
    let design = DMatrix::from_fn(n, 5, |i, j| ((x[i] - c) / s).powi(j as i32));
    let qr = design.clone().qr();
    let r = qr.r();
    let rmax = r.diagonal().amax();
    if r.diagonal().iter().any(|d| d.abs() <= 1e-10 * rmax) {
        return Err(Error::SingularPilotFit);
    }
    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::SingularPilotFit)?;
    let resid = &yv - &design * &coef;
    let sigma2 = resid.norm_squared() / (n - 5) as f64;
    let curv: f64 = x
        .iter()
        .map(|&xi| {
            let u = (xi - c) / s;
            let m2 = (2.0 * coef[2] + 6.0 * coef[3] * u + 12.0 * coef[4] * u * u) / (s * s);
            m2 * m2
        })
        .sum();
    let k = kernel_constants();
    let lo = (b - a) / n as f64;
    let hi = (b - a) / 2.0;
    let ybar = yv.mean();
    let yscale = yv.iter().map(|v| (v - ybar).abs()).fold(f64::MIN_POSITIVE, f64::max);
    if (curv / n as f64).sqrt() * s * s <= 1e-9 * yscale {
        return Ok(Bandwidth(hi));
    }
    let h = (k.l2norm_sq * sigma2 * (b - a) / (k.mu2 * k.mu2 * curv)).powf(0.2);
    Ok(Bandwidth(h.clamp(lo, hi)))
}

/// Weighted least-squares line in the centered coordinate `x - x0` with
/// weights `K_h(x_i - x0)`. Returns `(intercept, slope)`.
pub fn local_linear(x: &[f64], y: &[f64], h: Bandwidth, x0: f64) -> Result<(f64, f64)> {
    let h = h.get();
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut first: Option<f64> = None;
    let mut distinct = false;
    for (&xi, &yi) in x.iter().zip(y) {
        let d = xi - x0;
        let w = scaled_kernel(d, h);
        if w <= 0.0 {
            continue;
        }
        match first {
            None => first = Some(xi),
            Some(f) if f != xi => distinct = true,
            _ => {}
        }
        s0 += w;
        s1 += w * d;
        s2 += w * d * d;
        t0 += w * yi;
        t1 += w * d * yi;
    }
    let det = s0 * s2 - s1 * s1;
    if !distinct || !(det > 0.0) {
        return Err(Error::InsufficientLocalData(x0));
    }
    Ok(((s2 * t0 - s1 * t1) / det, (s0 * t1 - s1 * t0) / det))
}

/// Kernel density estimate `(1/(n h)) sum K((x_i - x0)/h)`.
pub fn kde(x: &[f64], h: Bandwidth, x0: f64) -> f64 {
    let h = h.get();
    x.iter().map(|&xi| epanechnikov((xi - x0) / h)).sum::<f64>() / (x.len() as f64 * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn kernel_values() {
        assert_eq!(epanechnikov(0.0), 0.75);
        assert_eq!(epanechnikov(1.0), 0.0);
        assert_eq!(epanechnikov(-1.0), 0.0);
        assert_eq!(epanechnikov(0.5), 0.5625);
        assert_eq!(epanechnikov(1.5), 0.0);
    }

    #[test]
    fn local_linear_reproduces_lines() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        let c = vec![4.2; 30];
        let (m, s) = local_linear(&x, &c, Bandwidth(0.1), 0.33).unwrap();
        assert_abs_diff_eq!(m, 4.2, epsilon = 1e-12);
        assert_abs_diff_eq!(s, 0.0, epsilon = 1e-10);
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let (m, s) = local_linear(&x, &y, Bandwidth(0.2), 0.5).unwrap();
        assert_abs_diff_eq!(m, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn local_linear_needs_two_points() {
        let x = [0.0, 0.5, 1.0];
        let y = [1.0, 2.0, 3.0];
        assert!(matches!(
            local_linear(&x, &y, Bandwidth(0.1), 0.5),
            Err(Error::InsufficientLocalData(_))
        ));
        assert!(local_linear(&x, &y, Bandwidth(0.1), 5.0).is_err());
    }

    #[test]
    fn bandwidth_clamps() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let lin: Vec<f64> = x.iter().map(|v| 1.0 + 3.0 * v).collect();
        let h = rot_bandwidth(&x, &lin).unwrap();
        assert_eq!(h.get(), 0.5);
        let quart: Vec<f64> = x.iter().map(|v| v * v * v * v - v * v).collect();
        assert_abs_diff_eq!(rot_bandwidth(&x, &quart).unwrap().get(), 1.0 / 50.0, epsilon = 1e-15);
        let noisy: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + 0.1 * ((i * 7) % 5) as f64).collect();
        let hn = rot_bandwidth(&x, &noisy).unwrap().get();
        let shifted: Vec<f64> = noisy.iter().map(|v| v + 10.0).collect();
        assert_abs_diff_eq!(rot_bandwidth(&x, &shifted).unwrap().get(), hn, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn symmetric(u in -3.0f64..3.0) {
            prop_assert_eq!(epanechnikov(u), epanechnikov(-u));
        }

        #[test]
        fn affine_in_y(a in -3.0f64..3.0, b in -3.0f64..3.0, x0 in 0.2f64..0.8) {
            let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).fract()).collect();
            let y: Vec<f64> = x.iter().map(|v| (6.0 * v).sin()).collect();
            let ya: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            let (m, s) = local_linear(&x, &y, Bandwidth(0.15), x0).unwrap();
            let (ma, sa) = local_linear(&x, &ya, Bandwidth(0.15), x0).unwrap();
            prop_assert!((ma - (a * m + b)).abs() < 1e-9);
            prop_assert!((sa - a * s).abs() < 1e-7);
        }
    }
}
