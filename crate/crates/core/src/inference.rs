//! Stage two: refit on a selected structure, coefficient covariance,
//! pseudo-responses, spline-backfitted local-linear (SBLL) curves with
//! pointwise intervals and simultaneous confidence bands.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::basis::{spline_basis, BasisBlock, KnotPlacement};
use crate::data::{mean, Dataset};
use crate::error::{Error, Result};
use crate::kernel::{kde, kernel_constants, local_linear, rot_bandwidth, Bandwidth};
use crate::select::ModelStructure;
use crate::sim::Truth;

/// Unpenalized least-squares fit on a selected structure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefitFit {
    pub structure: ModelStructure,
    /// Coefficients of the selected Z columns, aligned with `structure.s_z`.
    pub alpha_star: Vec<f64>,
    /// Coefficients of the pure-linear X columns, aligned with `structure.s_x_pl`.
    pub beta_star: Vec<f64>,
    /// Spline coefficients, aligned with `structure.s_x_nonlinear()`.
    pub gamma_star: Vec<Vec<f64>>,
    /// Spline blocks on centered X, aligned with `structure.s_x_nonlinear()`.
    pub bases: Vec<BasisBlock>,
    pub order: usize,
    pub sigma2_hat: f64,
    pub residuals: Vec<f64>,
    pub y_mean: f64,
    /// Means of all Z columns of the training data.
    pub z_means: Vec<f64>,
    /// Means of all X columns of the training data.
    pub x_means: Vec<f64>,
    pub n: usize,
    /// Columns of the refit design, in coefficient order.
    pub column_labels: Vec<String>,
}

struct RefitDesign {
    matrix: DMatrix<f64>,
    labels: Vec<String>,
    /// Columns belonging to Z and pure-linear X.
    n_linear: usize,
    bases: Vec<BasisBlock>,
}

fn refit_design(
    ds: &Dataset,
    st: &ModelStructure,
    d: usize,
    m: usize,
    placement: KnotPlacement,
) -> Result<RefitDesign> {
    let n = ds.n();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for &k in &st.s_z {
        let z = ds.z_col(k);
        let mu = mean(z);
        cols.push(z.iter().map(|v| v - mu).collect());
        labels.push(ds.column_names.z[k].clone());
    }
    for &l in &st.s_x_pl {
        cols.push(ds.x_col(l).to_vec());
        labels.push(ds.column_names.x[l].clone());
    }
    let n_linear = cols.len();
    let mut bases = Vec::new();
    for l in st.s_x_nonlinear() {
        let name = &ds.column_names.x[l];
        let with_name = |e: Error| match e {
            Error::DegenerateColumn(msg) => Error::DegenerateColumn(format!("{name}: {msg}")),
            other => other,
        };
        let knots = placement.place(ds.x_col(l), m).map_err(with_name)?;
        let b = spline_basis(ds.x_col(l), &knots, d).map_err(with_name)?;
        for j in 0..b.ncols() {
            cols.push(b.values.column(j).iter().copied().collect());
            labels.push(format!("{name}:B{}", j + 1));
        }
        bases.push(b);
    }
    let matrix = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    Ok(RefitDesign { matrix, labels, n_linear, bases })
}

/// Least squares by Householder QR; reports the first column whose diagonal
/// pivot collapses relative to its own norm.
fn qr_solve(x: &DMatrix<f64>, y: &[f64], labels: &[String]) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    if p == 0 {
        return Ok(DVector::zeros(0));
    }
    if p > n {
        return Err(Error::ModelSingular(format!("{p} columns but only {n} rows")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..p {
        let cn = x.column(j).norm();
        if !(r[(j, j)].abs() > 1e-9 * cn.max(f64::MIN_POSITIVE)) {
            return Err(Error::ModelSingular(labels[j].clone()));
        }
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(y);
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| Error::ModelSingular("triangular solve failed".into()))
}

/// Refits a centered dataset on `st` with order-`d` splines on `m` interior
/// knots for every nonlinear index.
pub fn refit(
    ds: &Dataset,
    st: &ModelStructure,
    d: usize,
    m: usize,
    placement: KnotPlacement,
) -> Result<RefitFit> {
    if !ds.is_centered() {
        return Err(Error::InvalidArgs("refit needs a centered dataset".into()));
    }
    let n = ds.n();
    let rd = refit_design(ds, st, d, m, placement)?;
    let coef = qr_solve(&rd.matrix, &ds.y, &rd.labels)?;
    let fitted = &rd.matrix * &coef;
    let residuals: Vec<f64> = ds.y.iter().zip(fitted.iter()).map(|(y, f)| y - f).collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let dof = n as f64 - st.s_z.len() as f64 - st.s_x_active().len() as f64;
    let sigma2_hat = rss / dof.max(1.0);

    let nz = st.s_z.len();
    let npl = st.s_x_pl.len();
    let alpha_star = coef.rows(0, nz).iter().copied().collect();
    let beta_star = coef.rows(nz, npl).iter().copied().collect();
    let mut gamma_star = Vec::new();
    let mut start = rd.n_linear;
    for b in &rd.bases {
        gamma_star.push(coef.rows(start, b.ncols()).iter().copied().collect());
        start += b.ncols();
    }
    Ok(RefitFit {
        structure: st.clone(),
        alpha_star,
        beta_star,
        gamma_star,
        bases: rd.bases,
        order: d,
        sigma2_hat,
        residuals,
        y_mean: ds.y_mean,
        z_means: (0..ds.p1()).map(|k| mean(ds.z_col(k))).collect(),
        x_means: ds.x_means.clone(),
        n,
        column_labels: rd.labels,
    })
}

impl RefitFit {
    /// Position of `l` among the nonlinear indices.
    fn nonlinear_slot(&self, l: usize) -> Result<usize> {
        self.structure
            .s_x_nonlinear()
            .iter()
            .position(|&j| j == l)
            .ok_or(Error::IndexNotNonlinear(l))
    }

    /// `phi*_l` at centered covariate values.
    pub fn component(&self, l: usize, x_centered: &[f64]) -> Result<Vec<f64>> {
        self.component_derivative(l, x_centered, 0)
    }

    /// `k`-th derivative of `phi*_l` at centered covariate values.
    pub fn component_derivative(&self, l: usize, x_centered: &[f64], k: usize) -> Result<Vec<f64>> {
        let s = self.nonlinear_slot(l)?;
        let b = self.bases[s].derivative(x_centered, k);
        Ok((b * DVector::from_column_slice(&self.gamma_star[s])).iter().copied().collect())
    }

    /// Predictions for raw (uncentered) covariate matrices with the training
    /// layout.
    pub fn predict(&self, z: &DMatrix<f64>, x: &DMatrix<f64>) -> Vec<f64> {
        let n = z.nrows().max(x.nrows());
        let mut out = vec![self.y_mean; n];
        for (c, &k) in self.structure.s_z.iter().enumerate() {
            for i in 0..n {
                out[i] += (z[(i, k)] - self.z_means[k]) * self.alpha_star[c];
            }
        }
        for (c, &l) in self.structure.s_x_pl.iter().enumerate() {
            for i in 0..n {
                out[i] += (x[(i, l)] - self.x_means[l]) * self.beta_star[c];
            }
        }
        for l in self.structure.s_x_nonlinear() {
            let xc: Vec<f64> = (0..n).map(|i| x[(i, l)] - self.x_means[l]).collect();
            let phi = self.component(l, &xc).expect("nonlinear index");
            for i in 0..n {
                out[i] += phi[i];
            }
        }
        out
    }
}

/// Estimated covariance of the refit `(alpha*, beta*)`:
/// `sigma^2 [(T - T_hat)'(T - T_hat)]^{-1}`, where `T` stacks the selected Z
/// and pure-linear X columns and `T_hat` is their projection on the spline
/// columns.
pub fn coef_covariance(fit: &RefitFit, ds: &Dataset) -> Result<DMatrix<f64>> {
    let n = ds.n();
    let st = &fit.structure;
    let mut t_cols: Vec<Vec<f64>> = Vec::new();
    for &k in &st.s_z {
        let z = ds.z_col(k);
        let mu = mean(z);
        t_cols.push(z.iter().map(|v| v - mu).collect());
    }
    for &l in &st.s_x_pl {
        t_cols.push(ds.x_col(l).to_vec());
    }
    let t = DMatrix::from_fn(n, t_cols.len(), |i, j| t_cols[j][i]);
    let blocks: Vec<DMatrix<f64>> = st
        .s_x_nonlinear()
        .iter()
        .zip(&fit.bases)
        .map(|(&l, b)| b.transform(ds.x_col(l)))
        .collect();
    let width: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut s = DMatrix::zeros(n, width);
    let mut start = 0;
    for b in &blocks {
        s.columns_mut(start, b.ncols()).copy_from(b);
        start += b.ncols();
    }
    let resid = if width == 0 {
        t
    } else {
        let qm = s.qr().q();
        &t - &qm * (qm.transpose() * &t)
    };
    let gram = resid.transpose() * &resid;
    let inv = gram
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::ModelSingular("linear block collinear with spline block".into()))?;
    let cov = inv * fit.sigma2_hat;
    Ok((&cov + cov.transpose()) * 0.5)
}

/// Standard errors of `(alpha*, beta*)` in the order `s_z` then `s_x_pl`.
pub fn standard_errors(fit: &RefitFit, ds: &Dataset) -> Result<Vec<f64>> {
    let cov = coef_covariance(fit, ds)?;
    Ok(cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect())
}

/// `Y - sum Z alpha* - sum X beta* - sum_{l'' != l} phi*_{l''}` on the
/// centered dataset.
pub fn pseudo_responses(ds: &Dataset, fit: &RefitFit, l: usize) -> Result<Vec<f64>> {
    fit.nonlinear_slot(l)?;
    let n = ds.n();
    let mut y = ds.y.clone();
    for (c, &k) in fit.structure.s_z.iter().enumerate() {
        let zc = ds.z_col(k);
        let mu = mean(zc);
        for i in 0..n {
            y[i] -= (zc[i] - mu) * fit.alpha_star[c];
        }
    }
    for (c, &j) in fit.structure.s_x_pl.iter().enumerate() {
        let xc = ds.x_col(j);
        for i in 0..n {
            y[i] -= xc[i] * fit.beta_star[c];
        }
    }
    for j in fit.structure.s_x_nonlinear() {
        if j == l {
            continue;
        }
        let phi = fit.component(j, ds.x_col(j))?;
        for i in 0..n {
            y[i] -= phi[i];
        }
    }
    Ok(y)
}

/// Where a curve is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GridSpec {
    /// Points in original covariate units; all must lie in the interior.
    Explicit(Vec<f64>),
    /// This many equally spaced points spanning the interior.
    Uniform(usize),
    /// The sample covariate values inside the interior, sorted.
    SampleInterior,
}

/// SBLL estimate with its bias, standard error, pointwise CI and SCB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbllCurve {
    pub index: usize,
    pub name: String,
    /// Evaluation points in original covariate units.
    pub grid: Vec<f64>,
    pub estimate: Vec<f64>,
    /// `b(x) h^2`.
    pub bias: Vec<f64>,
    /// `v(x) / sqrt(n h)`.
    pub stderr: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub scb_lo: Vec<f64>,
    pub scb_hi: Vec<f64>,
    pub h: Bandwidth,
    /// `(a + h, b - h)` in original units.
    pub interior: (f64, f64),
    pub alpha: f64,
}

/// `sqrt(ln h^-2) + ln(|K'| / (2 pi |K|)) / sqrt(ln h^-2)` for a bandwidth
/// relative to a unit-length support.
pub fn tau_n(h_rel: f64) -> f64 {
    let k = kernel_constants();
    let root = (-2.0 * h_rel.ln()).sqrt();
    root + (k.deriv_l2norm() / (2.0 * std::f64::consts::PI * k.l2norm())).ln() / root
}

/// SCB half-width multiplier `tau_n - ln(-ln(1-alpha)/2) / sqrt(ln h^-2)`.
pub fn scb_multiplier(h_rel: f64, alpha: f64) -> f64 {
    let root = (-2.0 * h_rel.ln()).sqrt();
    tau_n(h_rel) - (-0.5 * (1.0 - alpha).ln()).ln() / root
}

/// Ingredients shared by the feasible and oracle curves.
struct CurveInputs<'a> {
    x: &'a [f64],
    y: &'a [f64],
    offset: f64,
    h: Bandwidth,
    sigma: f64,
    index: usize,
    name: String,
    alpha: f64,
}

fn build_curve(
    inp: CurveInputs<'_>,
    grid: &GridSpec,
    second_derivative: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<SbllCurve> {
    if !(inp.alpha > 0.0 && inp.alpha < 1.0) {
        return Err(Error::InvalidArgs(format!("alpha must be in (0, 1), got {}", inp.alpha)));
    }
    let x = inp.x;
    let n = x.len();
    let h = inp.h.get();
    let (a, b) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let (lo, hi) = (a + h, b - h);
    if !(lo < hi) {
        return Err(Error::BandwidthTooLarge { x: h, lo: a + inp.offset, hi: b + inp.offset });
    }
    let pts: Vec<f64> = match grid {
        GridSpec::Explicit(v) => v.iter().map(|g| g - inp.offset).collect(),
        GridSpec::Uniform(k) if *k >= 2 => {
            (0..*k).map(|i| lo + (hi - lo) * i as f64 / (*k - 1) as f64).collect()
        }
        GridSpec::Uniform(k) => {
            return Err(Error::InvalidArgs(format!("uniform grid needs >= 2 points, got {k}")));
        }
        GridSpec::SampleInterior => {
            let mut v: Vec<f64> = x.iter().copied().filter(|&v| v >= lo && v <= hi).collect();
            v.sort_by(f64::total_cmp);
            v
        }
    };
    let slack = 1e-12 * (b - a);
    if let Some(&bad) = pts.iter().find(|&&p| p < lo - slack || p > hi + slack) {
        return Err(Error::BandwidthTooLarge {
            x: bad + inp.offset,
            lo: lo + inp.offset,
            hi: hi + inp.offset,
        });
    }
    let k = kernel_constants();
    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(1.0 - inp.alpha / 2.0);
    let q = scb_multiplier(h / (b - a), inp.alpha);
    let d2 = second_derivative(&pts)?;
    let m = pts.len();
    let mut c = SbllCurve {
        index: inp.index,
        name: inp.name,
        grid: pts.iter().map(|p| p + inp.offset).collect(),
        estimate: Vec::with_capacity(m),
        bias: Vec::with_capacity(m),
        stderr: Vec::with_capacity(m),
        ci_lo: Vec::with_capacity(m),
        ci_hi: Vec::with_capacity(m),
        scb_lo: Vec::with_capacity(m),
        scb_hi: Vec::with_capacity(m),
        h: inp.h,
        interior: (lo + inp.offset, hi + inp.offset),
        alpha: inp.alpha,
    };
    for (i, &p) in pts.iter().enumerate() {
        let (est, _) = local_linear(x, inp.y, inp.h, p)?;
        let f = kde(x, inp.h, p);
        let v = k.l2norm() * inp.sigma / f.sqrt();
        let se = v / (n as f64 * h).sqrt();
        let bias = k.mu2 * d2[i] / 2.0 * h * h;
        c.estimate.push(est);
        c.bias.push(bias);
        c.stderr.push(se);
        c.ci_lo.push(est - bias - z * se);
        c.ci_hi.push(est - bias + z * se);
        c.scb_lo.push(est - q * se);
        c.scb_hi.push(est + q * se);
    }
    Ok(c)
}

/// Local-linear estimates of the pseudo-response at arbitrary centered points.
pub fn sbll_estimates(x: &[f64], y: &[f64], h: Bandwidth, at: &[f64]) -> Result<Vec<f64>> {
    at.iter().map(|&p| local_linear(x, y, h, p).map(|r| r.0)).collect()
}

/// Options for [`sbll_curve`] beyond the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbllOptions {
    pub alpha: f64,
    /// Bandwidth override; `None` uses the rule of thumb on the pseudo-responses.
    pub bandwidth: Option<Bandwidth>,
}

impl Default for SbllOptions {
    fn default() -> Self {
        Self { alpha: 0.05, bandwidth: None }
    }
}

/// SBLL curve for nonlinear index `l` on a centered dataset.
pub fn sbll_curve(
    ds: &Dataset,
    fit: &RefitFit,
    l: usize,
    grid: &GridSpec,
    opts: SbllOptions,
) -> Result<SbllCurve> {
    let y = pseudo_responses(ds, fit, l)?;
    let x = ds.x_col(l);
    let h = match opts.bandwidth {
        Some(h) => h,
        None => rot_bandwidth(x, &y)?,
    };
    let inp = CurveInputs {
        x,
        y: &y,
        offset: ds.x_means[l],
        h,
        sigma: fit.sigma2_hat.sqrt(),
        index: l,
        name: ds.column_names.x[l].clone(),
        alpha: opts.alpha,
    };
    build_curve(inp, grid, &|pts| fit.component_derivative(l, pts, 2))
}

/// Oracle pseudo-responses on a centered dataset: the centered response minus
/// the true linear part and every other true component (each centered at its
/// sample mean).
pub fn oracle_pseudo_responses(ds: &Dataset, truth: &Truth, l: usize) -> Vec<f64> {
    let n = ds.n();
    let mut y = ds.y.clone();
    for (k, &a) in truth.alpha.iter().enumerate() {
        if a != 0.0 {
            let zc = ds.z_col(k);
            let mu = mean(zc);
            for i in 0..n {
                y[i] -= (zc[i] - mu) * a;
            }
        }
    }
    for (j, comp) in truth.phi.iter().enumerate() {
        if j == l || comp.is_zero() {
            continue;
        }
        let raw: Vec<f64> =
            ds.x_col(j).iter().map(|&xc| comp.eval(xc + ds.x_means[j])).collect();
        let mu = mean(&raw);
        for i in 0..n {
            y[i] -= raw[i] - mu;
        }
    }
    y
}

/// Infeasible benchmark curve: true nuisance components, true `sigma` and the
/// true second derivative.
pub fn oracle_sbll(
    ds: &Dataset,
    truth: &Truth,
    l: usize,
    grid: &GridSpec,
    opts: SbllOptions,
) -> Result<SbllCurve> {
    let y = oracle_pseudo_responses(ds, truth, l);
    let x = ds.x_col(l);
    let h = match opts.bandwidth {
        Some(h) => h,
        None => rot_bandwidth(x, &y)?,
    };
    let offset = ds.x_means[l];
    let comp = truth.phi[l];
    let inp = CurveInputs {
        x,
        y: &y,
        offset,
        h,
        sigma: truth.sigma,
        index: l,
        name: ds.column_names.x[l].clone(),
        alpha: opts.alpha,
    };
    build_curve(inp, grid, &|pts| Ok(pts.iter().map(|&p| comp.d2(p + offset)).collect()))
}

/// Writes `x, estimate, bias, stderr, ci_lo, ci_hi, scb_lo, scb_hi`.
pub fn write_curve_csv(curve: &SbllCurve, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "estimate", "bias", "stderr", "ci_lo", "ci_hi", "scb_lo", "scb_hi"])?;
    for i in 0..curve.grid.len() {
        w.write_record(
            [
                curve.grid[i],
                curve.estimate[i],
                curve.bias[i],
                curve.stderr[i],
                curve.ci_lo[i],
                curve.ci_hi[i],
                curve.scb_lo[i],
                curve.scb_hi[i],
            ]
            .iter()
            .map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{center, ColumnNames};
    use approx::assert_abs_diff_eq;

    #[test]
    fn band_multipliers() {
        // ||K'||^2 = 1.5, ||K||^2 = 0.6 for the Epanechnikov kernel.
        let c = (2.0 * 10f64.ln()).sqrt();
        let tau = c + (1.5f64.sqrt() / (2.0 * std::f64::consts::PI * 0.6f64.sqrt())).ln() / c;
        assert_abs_diff_eq!(tau_n(0.1), tau, epsilon = 1e-12);
        assert_abs_diff_eq!(tau_n(0.1), 1.5030, epsilon = 5e-4);
        let extra = -(-0.5 * 0.95f64.ln()).ln() / c;
        assert_abs_diff_eq!(scb_multiplier(0.1, 0.05), tau + extra, epsilon = 1e-12);
        assert_abs_diff_eq!(scb_multiplier(0.1, 0.05), 3.2100, epsilon = 5e-4);
    }

    fn dataset(y: Vec<f64>, z: DMatrix<f64>, x: DMatrix<f64>) -> Dataset {
        let names = ColumnNames::generic(z.ncols(), x.ncols());
        center(&Dataset::new(y, z, x, names).unwrap()).unwrap()
    }

    #[test]
    fn z_only_refit_is_ols() {
        let n = 12;
        let z = DMatrix::from_fn(n, 2, |i, k| ((i * (k + 1) + k) % 3 == 0) as u8 as f64);
        let y: Vec<f64> = (0..n).map(|i| 1.0 + 2.0 * z[(i, 0)] - z[(i, 1)] + 0.1 * (i as f64).sin()).collect();
        let ds = dataset(y.clone(), z.clone(), DMatrix::zeros(n, 0));
        let st = ModelStructure { s_z: vec![0, 1], ..Default::default() };
        let fit = refit(&ds, &st, 4, 4, KnotPlacement::Quantile).unwrap();
        // Oracle: OLS with intercept via normal equations.
        let xm = DMatrix::from_fn(n, 3, |i, j| if j == 0 { 1.0 } else { z[(i, j - 1)] });
        let b = (xm.transpose() * &xm).try_inverse().unwrap() * xm.transpose() * DVector::from_vec(y);
        assert_abs_diff_eq!(fit.alpha_star[0], b[1], epsilon = 1e-10);
        assert_abs_diff_eq!(fit.alpha_star[1], b[2], epsilon = 1e-10);
    }

    #[test]
    fn duplicate_column_is_singular() {
        let n = 10;
        let z = DMatrix::from_fn(n, 2, |i, _| (i % 3 == 0) as u8 as f64);
        let y: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let ds = dataset(y, z, DMatrix::zeros(n, 0));
        let st = ModelStructure { s_z: vec![0, 1], ..Default::default() };
        match refit(&ds, &st, 4, 4, KnotPlacement::Quantile) {
            Err(Error::ModelSingular(c)) => assert_eq!(c, "z_2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn noiseless_spline_response_is_reproduced() {
        let n = 60;
        let xs: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.7548).fract() - 0.5).collect();
        let xc: Vec<f64> = {
            let m = mean(&xs);
            xs.iter().map(|v| v - m).collect()
        };
        let knots = crate::basis::place_knots(&xc, 3).unwrap();
        let b = spline_basis(&xc, &knots, 2).unwrap();
        let g = DVector::from_vec(vec![0.5, -1.0, 2.0, 0.3]);
        let y: Vec<f64> = (&b.values * g).iter().copied().collect();
        let ds = dataset(y, DMatrix::zeros(n, 0), DMatrix::from_column_slice(n, 1, &xs));
        let st = ModelStructure { s_x_pn: vec![0], ..Default::default() };
        let fit = refit(&ds, &st, 2, 3, KnotPlacement::Quantile).unwrap();
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-8));
        assert!(fit.sigma2_hat < 1e-16);
    }

    #[test]
    fn pseudo_response_identity() {
        let n = 80;
        let xs = DMatrix::from_fn(n, 2, |i, j| ((i as f64 + 0.3) * (0.618 + 0.1 * j as f64)).fract() - 0.5);
        let z = DMatrix::from_fn(n, 1, |i, _| (i % 4 == 0) as u8 as f64);
        let y: Vec<f64> = (0..n)
            .map(|i| 2.0 * z[(i, 0)] + (6.0 * xs[(i, 0)]).sin() + xs[(i, 1)].powi(2) + 0.01 * (i as f64).cos())
            .collect();
        let ds = dataset(y, z, xs);
        let st = ModelStructure { s_z: vec![0], s_x_pn: vec![0, 1], ..Default::default() };
        let fit = refit(&ds, &st, 4, 4, KnotPlacement::Quantile).unwrap();
        for l in [0, 1] {
            let yl = pseudo_responses(&ds, &fit, l).unwrap();
            let phi = fit.component(l, ds.x_col(l)).unwrap();
            for i in 0..n {
                assert_abs_diff_eq!(yl[i], fit.residuals[i] + phi[i], epsilon = 1e-12);
            }
        }
        assert!(matches!(pseudo_responses(&ds, &fit, 5), Err(Error::IndexNotNonlinear(5))));
        let cov = coef_covariance(&fit, &ds).unwrap();
        assert_eq!(cov.shape(), (1, 1));
        assert!(cov[(0, 0)] > 0.0);
    }

    #[test]
    fn covariance_without_splines_is_ols() {
        let n = 30;
        let z = DMatrix::from_fn(n, 2, |i, k| ((i + k) % 3 == 0) as u8 as f64);
        let y: Vec<f64> = (0..n).map(|i| z[(i, 0)] + (i as f64 * 0.37).sin()).collect();
        let ds = dataset(y, z, DMatrix::zeros(n, 0));
        let st = ModelStructure { s_z: vec![0, 1], ..Default::default() };
        let fit = refit(&ds, &st, 4, 4, KnotPlacement::Quantile).unwrap();
        let t = DMatrix::from_fn(n, 2, |i, k| {
            let c = ds.z_col(k);
            c[i] - mean(c)
        });
        let want = (t.transpose() * &t).try_inverse().unwrap() * fit.sigma2_hat;
        let got = coef_covariance(&fit, &ds).unwrap();
        assert!((got - want).amax() < 1e-12);
    }
}
