//! Grouped penalized least squares by cyclic group coordinate descent.
//!
//! The objective is
//!
//! ```text
//! L(theta) = 1/2 |y - D theta|^2 + sum_m lambda_{class(m)} w_m |theta_m|
//! ```
//!
//! with the one-half scaling on the residual sum of squares, so the KKT
//! conditions read `D_m' r = lambda w theta_m / |theta_m|` on active groups and
//! `|D_m' r| <= lambda w` on zero groups. A group with weight `+inf` is
//! excluded and stays exactly zero.
//!
//! Each group update minimizes the objective exactly over that group. Scalar
//! groups use soft thresholding. Wider groups use the spectral decomposition
//! of `D_m' D_m`, obtained once from the thin QR factor of the block, and a
//! one-dimensional secular equation for the group norm.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::col;
use crate::error::{Error, Result};

/// Which penalty parameter governs a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupClass {
    Zlinear,
    Xlinear,
    Xspline,
}

/// One block of the design, as supplied to [`GroupedDesign::new`].
#[derive(Debug, Clone)]
pub struct DesignBlock {
    pub label: String,
    pub class: GroupClass,
    /// Covariate index within its block (`k` for Z, `l` for X).
    pub index: usize,
    pub values: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub label: String,
    pub class: GroupClass,
    pub index: usize,
    /// First column in the assembled design.
    pub start: usize,
    pub width: usize,
}

#[derive(Debug, Clone)]
struct GroupFactor {
    /// Upper-triangular thin QR factor, `D_m = Q R`.
    r: DMatrix<f64>,
    gram: DMatrix<f64>,
    /// Eigenvalues of `R'R = D_m' D_m` and their eigenvectors.
    evals: DVector<f64>,
    evecs: DMatrix<f64>,
}

impl GroupFactor {
    fn new(block: &DMatrix<f64>) -> Self {
        let r = block.clone().qr().r();
        let gram = r.transpose() * &r;
        let eig = SymmetricEigen::new(gram.clone());
        Self { r, gram, evals: eig.eigenvalues, evecs: eig.eigenvectors }
    }
}

/// Column-major design assembled from ordered groups, with cached per-group
/// factorizations and the response.
#[derive(Debug, Clone)]
pub struct GroupedDesign {
    matrix: DMatrix<f64>,
    groups: Vec<Group>,
    factors: Vec<GroupFactor>,
    y: Vec<f64>,
}

impl GroupedDesign {
    pub fn new(blocks: Vec<DesignBlock>, y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        let total: usize = blocks.iter().map(|b| b.values.ncols()).sum();
        let mut matrix = DMatrix::zeros(n, total);
        let mut groups = Vec::with_capacity(blocks.len());
        let mut factors = Vec::with_capacity(blocks.len());
        let mut start = 0;
        for b in blocks {
            let w = b.values.ncols();
            if b.values.nrows() != n || w == 0 {
                return Err(Error::InvalidArgs(format!(
                    "block {} has shape {}x{}, expected {n} rows and at least one column",
                    b.label,
                    b.values.nrows(),
                    w
                )));
            }
            if b.class != GroupClass::Xspline && w != 1 {
                return Err(Error::InvalidArgs(format!("linear block {} must be one column", b.label)));
            }
            matrix.columns_mut(start, w).copy_from(&b.values);
            factors.push(GroupFactor::new(&b.values));
            groups.push(Group { label: b.label, class: b.class, index: b.index, start, width: w });
            start += w;
        }
        Ok(Self { matrix, groups, factors, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn response(&self) -> &[f64] {
        &self.y
    }

    pub fn set_response(&mut self, y: Vec<f64>) {
        assert_eq!(y.len(), self.n());
        self.y = y;
    }

    /// Columns of group `m`.
    pub fn block(&self, m: usize) -> DMatrix<f64> {
        let g = &self.groups[m];
        self.matrix.columns(g.start, g.width).into_owned()
    }

    /// Upper-triangular thin QR factor of group `m`.
    pub fn r_factor(&self, m: usize) -> &DMatrix<f64> {
        &self.factors[m].r
    }

    /// Design restricted to the listed groups (in the given order), keeping
    /// the cached factors.
    pub fn subset(&self, which: &[usize], y: Vec<f64>) -> GroupedDesign {
        let n = self.n();
        let total: usize = which.iter().map(|&m| self.groups[m].width).sum();
        let mut matrix = DMatrix::zeros(n, total);
        let mut groups = Vec::with_capacity(which.len());
        let mut factors = Vec::with_capacity(which.len());
        let mut start = 0;
        for &m in which {
            let g = &self.groups[m];
            matrix
                .columns_mut(start, g.width)
                .copy_from(&self.matrix.columns(g.start, g.width));
            groups.push(Group { start, ..g.clone() });
            factors.push(self.factors[m].clone());
            start += g.width;
        }
        GroupedDesign { matrix, groups, factors, y }
    }

    /// `D_m' v` for group `m`.
    fn group_dot(&self, m: usize, v: &[f64]) -> DVector<f64> {
        let g = &self.groups[m];
        DVector::from_fn(g.width, |j, _| dot(col(&self.matrix, g.start + j), v))
    }

    /// `D theta`.
    pub fn predict(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (j, &t) in theta.iter().enumerate() {
            if t != 0.0 {
                axpy(t, col(&self.matrix, j), &mut out);
            }
        }
        out
    }

    pub fn residual(&self, theta: &[f64]) -> Vec<f64> {
        let fit = self.predict(theta);
        self.y.iter().zip(fit).map(|(y, f)| y - f).collect()
    }

    /// Flattens a coefficient triple into this design's column order.
    pub fn flatten(&self, c: &CoefTriple) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols()];
        for g in &self.groups {
            match g.class {
                GroupClass::Zlinear => out[g.start] = c.alpha[g.index],
                GroupClass::Xlinear => out[g.start] = c.beta[g.index],
                GroupClass::Xspline => {
                    out[g.start..g.start + g.width].copy_from_slice(&c.gamma[g.index])
                }
            }
        }
        out
    }

    /// Writes this design's coefficients into `c`, leaving other entries alone.
    pub fn scatter(&self, theta: &[f64], c: &mut CoefTriple) {
        for g in &self.groups {
            match g.class {
                GroupClass::Zlinear => c.alpha[g.index] = theta[g.start],
                GroupClass::Xlinear => c.beta[g.index] = theta[g.start],
                GroupClass::Xspline => {
                    c.gamma[g.index].copy_from_slice(&theta[g.start..g.start + g.width])
                }
            }
        }
    }

    /// Weights in group order taken from per-block weight vectors.
    pub fn align_weights(&self, w: &BlockWeights) -> Vec<f64> {
        self.groups
            .iter()
            .map(|g| match g.class {
                GroupClass::Zlinear => w.alpha[g.index],
                GroupClass::Xlinear => w.beta[g.index],
                GroupClass::Xspline => w.gamma[g.index],
            })
            .collect()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    acc.iter().sum::<f64>() + tail
}

#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Per-class penalty levels and per-group weights (in design group order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub lambda_z: f64,
    pub lambda_xl: f64,
    pub lambda_xs: f64,
    pub weights: Vec<f64>,
}

impl PenaltySpec {
    /// The same `lambda` for all three classes.
    pub fn common(lambda: f64, weights: Vec<f64>) -> Self {
        Self { lambda_z: lambda, lambda_xl: lambda, lambda_xs: lambda, weights }
    }

    pub fn lambda(&self, class: GroupClass) -> f64 {
        match class {
            GroupClass::Zlinear => self.lambda_z,
            GroupClass::Xlinear => self.lambda_xl,
            GroupClass::Xspline => self.lambda_xs,
        }
    }

    /// Threshold `lambda w` of group `m`; `None` marks an excluded group.
    fn threshold(&self, design: &GroupedDesign, m: usize) -> Option<f64> {
        let w = self.weights[m];
        if w == f64::INFINITY {
            None
        } else {
            Some(self.lambda(design.groups[m].class) * w)
        }
    }
}

/// Coefficients of the additive partially linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefTriple {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
}

impl CoefTriple {
    pub fn zeros(p1: usize, p2: usize, nn: usize) -> Self {
        Self { alpha: vec![0.0; p1], beta: vec![0.0; p2], gamma: vec![vec![0.0; nn]; p2] }
    }

    pub fn gamma_norm(&self, l: usize) -> f64 {
        self.gamma[l].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Squared Euclidean distance to `other`.
    pub fn dist_sq(&self, other: &CoefTriple) -> f64 {
        let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        sq(&self.alpha, &other.alpha)
            + sq(&self.beta, &other.beta)
            + self.gamma.iter().zip(&other.gamma).map(|(a, b)| sq(a, b)).sum::<f64>()
    }
}

/// Per-block weights shaped like a [`CoefTriple`] (one weight per spline group).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockWeights {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl BlockWeights {
    pub fn ones(p1: usize, p2: usize) -> Self {
        Self { alpha: vec![1.0; p1], beta: vec![1.0; p2], gamma: vec![1.0; p2] }
    }
}

fn reciprocal(v: f64) -> f64 {
    if v > 0.0 {
        1.0 / v
    } else {
        f64::INFINITY
    }
}

/// `1/|alpha_k|`, `1/|beta_l|`, `1/|gamma_l|`, with `+inf` for zero estimates.
pub fn adaptive_weights(initial: &CoefTriple) -> BlockWeights {
    BlockWeights {
        alpha: initial.alpha.iter().map(|a| reciprocal(a.abs())).collect(),
        beta: initial.beta.iter().map(|b| reciprocal(b.abs())).collect(),
        gamma: (0..initial.gamma.len()).map(|l| reciprocal(initial.gamma_norm(l))).collect(),
    }
}

/// `(1 - t/|z|)_+ z`.
pub fn group_soft_threshold(z: &[f64], t: f64) -> Vec<f64> {
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= t {
        return vec![0.0; z.len()];
    }
    let s = 1.0 - t / norm;
    z.iter().map(|v| s * v).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Bound on the largest coefficient change in a full sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Bound on [`kkt_residual`]; `None` means `10 * tol`.
    pub kkt_tol: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_sweeps: 10_000, kkt_tol: None }
    }
}

impl SolverOptions {
    fn kkt_bound(&self) -> f64 {
        self.kkt_tol.unwrap_or(10.0 * self.tol)
    }
}

/// Output of [`fit_flat`].
#[derive(Debug, Clone, PartialEq)]
pub struct FlatFit {
    pub theta: Vec<f64>,
    pub sweeps: usize,
    pub kkt: f64,
    pub objective: f64,
}

/// Objective value; excluded groups contribute zero when their coefficients
/// are zero and `+inf` otherwise.
pub fn objective(design: &GroupedDesign, pen: &PenaltySpec, theta: &[f64]) -> f64 {
    let r = design.residual(theta);
    objective_from(design, pen, theta, &r)
}

fn objective_from(design: &GroupedDesign, pen: &PenaltySpec, theta: &[f64], r: &[f64]) -> f64 {
    let mut obj = 0.5 * dot(r, r);
    for (m, g) in design.groups.iter().enumerate() {
        let norm = norm_of(&theta[g.start..g.start + g.width]);
        if norm == 0.0 {
            continue;
        }
        match pen.threshold(design, m) {
            Some(t) => obj += t * norm,
            None => return f64::INFINITY,
        }
    }
    obj
}

fn norm_of(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest violation of the KKT system over all groups.
pub fn kkt_residual(design: &GroupedDesign, pen: &PenaltySpec, theta: &[f64]) -> f64 {
    let r = design.residual(theta);
    kkt_from(design, pen, theta, &r)
}

fn kkt_from(design: &GroupedDesign, pen: &PenaltySpec, theta: &[f64], r: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for (m, g) in design.groups.iter().enumerate() {
        let th = &theta[g.start..g.start + g.width];
        let norm = norm_of(th);
        let t = match pen.threshold(design, m) {
            Some(t) => t,
            None if norm == 0.0 => continue,
            None => return f64::INFINITY,
        };
        let grad = design.group_dot(m, r);
        let v = if norm > 0.0 {
            grad.iter()
                .zip(th)
                .map(|(gj, tj)| (gj - t * tj / norm).powi(2))
                .sum::<f64>()
                .sqrt()
        } else {
            (grad.norm() - t).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Exact minimizer of `1/2 theta' A theta - c' theta + t |theta|` where
/// `A = V diag(e) V'`.
fn group_minimizer(f: &GroupFactor, c: &DVector<f64>, t: f64) -> DVector<f64> {
    let w = c.len();
    if w == 1 {
        let a = f.evals[0];
        if a <= 0.0 {
            return DVector::zeros(1);
        }
        let v = c[0];
        return DVector::from_element(1, v.signum() * (v.abs() - t).max(0.0) / a);
    }
    let cn = c.norm();
    if cn <= t {
        return DVector::zeros(w);
    }
    let emax = f.evals.amax();
    let cut = 1e-12 * emax.max(f64::MIN_POSITIVE);
    let chat = f.evecs.transpose() * c;
    let keep: Vec<usize> = (0..w).filter(|&j| f.evals[j] > cut).collect();
    if keep.is_empty() {
        return DVector::zeros(w);
    }
    let mut coef = DVector::zeros(w);
    if t == 0.0 {
        for &j in &keep {
            coef[j] = chat[j] / f.evals[j];
        }
        return &f.evecs * coef;
    }
    // Solve q(rho) = 1 with q = 1/|v(rho)|, v_j = chat_j / (e_j rho + t).
    let emin = keep.iter().map(|&j| f.evals[j]).fold(f64::INFINITY, f64::min);
    let ckeep = keep.iter().map(|&j| chat[j] * chat[j]).sum::<f64>().sqrt();
    if ckeep <= t {
        return DVector::zeros(w);
    }
    let mut lo = (ckeep - t) / emax;
    let mut hi = (ckeep - t) / emin;
    let eval = |rho: f64| -> (f64, f64) {
        let (mut s, mut ds) = (0.0, 0.0);
        for &j in &keep {
            let den = f.evals[j] * rho + t;
            let a = chat[j] * chat[j];
            s += a / (den * den);
            ds -= 2.0 * a * f.evals[j] / (den * den * den);
        }
        // q = s^{-1/2}, q' = -1/2 s^{-3/2} s'
        let q = s.powf(-0.5);
        (q - 1.0, -0.5 * q * q * q * ds)
    };
    let mut rho = lo;
    for _ in 0..100 {
        let (g, dg) = eval(rho);
        if g == 0.0 {
            break;
        }
        if g < 0.0 {
            lo = rho;
        } else {
            hi = rho;
        }
        let mut next = rho - g / dg;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - rho).abs() <= 1e-15 * rho.abs().max(f64::MIN_POSITIVE) {
            rho = next;
            break;
        }
        rho = next;
    }
    for &j in &keep {
        coef[j] = chat[j] * rho / (f.evals[j] * rho + t);
    }
    &f.evecs * coef
}

struct State<'a> {
    design: &'a GroupedDesign,
    pen: &'a PenaltySpec,
    theta: Vec<f64>,
    r: Vec<f64>,
}

impl State<'_> {
    /// Exact update of group `m`; returns the largest coefficient change.
    fn update(&mut self, m: usize) -> f64 {
        let d = self.design;
        let g = &d.groups[m];
        let was_zero = self.theta[g.start..g.start + g.width].iter().all(|&v| v == 0.0);
        if was_zero {
            // A zero group stays zero when its gradient is inside the ball.
            let Some(t) = self.pen.threshold(d, m) else { return 0.0 };
            let cols = &d.matrix.as_slice()[g.start * d.n()..(g.start + g.width) * d.n()];
            let norm_sq: f64 = cols.chunks_exact(d.n()).map(|c| dot(c, &self.r).powi(2)).sum();
            if norm_sq <= t * t {
                return 0.0;
            }
        }
        let old: Vec<f64> = self.theta[g.start..g.start + g.width].to_vec();
        let new = match self.pen.threshold(d, m) {
            None => DVector::zeros(g.width),
            Some(t) => {
                let f = &d.factors[m];
                let mut c = d.group_dot(m, &self.r);
                if !was_zero {
                    c += &f.gram * DVector::from_column_slice(&old);
                }
                let mut new = group_minimizer(f, &c, t);
                if new.norm() < 1e-14 {
                    new.fill(0.0);
                }
                new
            }
        };
        let mut change = 0.0f64;
        for j in 0..g.width {
            let delta = new[j] - old[j];
            if delta != 0.0 {
                axpy(-delta, col(&d.matrix, g.start + j), &mut self.r);
                self.theta[g.start + j] = new[j];
                change = change.max(delta.abs());
            }
        }
        change
    }

    fn is_active(&self, m: usize) -> bool {
        let g = &self.design.groups[m];
        self.theta[g.start..g.start + g.width].iter().any(|&v| v != 0.0)
    }

    fn objective(&self) -> f64 {
        objective_from(self.design, self.pen, &self.theta, &self.r)
    }
}

/// Minimizes the penalized objective from `init` (flat, design column order).
pub fn fit_flat(
    design: &GroupedDesign,
    pen: &PenaltySpec,
    init: &[f64],
    opts: &SolverOptions,
) -> Result<FlatFit> {
    if pen.weights.len() != design.groups.len() {
        return Err(Error::InvalidArgs(format!(
            "{} weights for {} groups",
            pen.weights.len(),
            design.groups.len()
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgs("tol must be positive".into()));
    }
    let mut theta = init.to_vec();
    for (m, g) in design.groups.iter().enumerate() {
        if pen.weights[m] == f64::INFINITY {
            theta[g.start..g.start + g.width].fill(0.0);
        }
    }
    let r = design.residual(&theta);
    let mut st = State { design, pen, theta, r };
    let ngroups = design.groups.len();
    let mut sweeps = 0;
    let mut last_obj = st.objective();
    let mut last_kkt = f64::INFINITY;
    loop {
        // Full sweep on a freshly recomputed residual.
        st.r = design.residual(&st.theta);
        let mut change = 0.0f64;
        for m in 0..ngroups {
            change = change.max(st.update(m));
        }
        sweeps += 1;
        let obj = st.objective();
        if !obj.is_finite() {
            return Err(Error::NonFiniteObjective(sweeps));
        }
        debug_assert!(obj <= last_obj + 1e-9 * last_obj.abs().max(1.0), "objective rose");
        last_obj = obj;
        if change < opts.tol {
            last_kkt = kkt_from(design, pen, &st.theta, &st.r);
            if last_kkt <= opts.kkt_bound() {
                return Ok(FlatFit { theta: st.theta, sweeps, kkt: last_kkt, objective: obj });
            }
        }
        if sweeps >= opts.max_sweeps {
            break;
        }
        // Cycle the active set to convergence.
        let active: Vec<usize> = (0..ngroups).filter(|&m| st.is_active(m)).collect();
        if active.is_empty() {
            continue;
        }
        loop {
            let mut change = 0.0f64;
            for &m in &active {
                change = change.max(st.update(m));
            }
            sweeps += 1;
            let obj = st.objective();
            if !obj.is_finite() {
                return Err(Error::NonFiniteObjective(sweeps));
            }
            debug_assert!(obj <= last_obj + 1e-9 * last_obj.abs().max(1.0), "objective rose");
            last_obj = obj;
            if change < 0.1 * opts.tol || sweeps >= opts.max_sweeps {
                break;
            }
        }
        if sweeps >= opts.max_sweeps {
            break;
        }
    }
    if !last_kkt.is_finite() {
        last_kkt = kkt_from(design, pen, &st.theta, &design.residual(&st.theta));
    }
    Err(Error::DidNotConverge { sweeps, kkt: last_kkt, last: st.theta })
}

/// [`fit_flat`] on coefficient triples. Entries of `init` not covered by the
/// design are carried through unchanged.
pub fn fit_penalized(
    design: &GroupedDesign,
    pen: &PenaltySpec,
    init: &CoefTriple,
    opts: &SolverOptions,
) -> Result<CoefTriple> {
    let fit = fit_flat(design, pen, &design.flatten(init), opts)?;
    let mut out = init.clone();
    design.scatter(&fit.theta, &mut out);
    Ok(out)
}

/// Residual of `y` after least squares on the unpenalized (zero-threshold)
/// groups, or `y` itself when there are none.
fn unpenalized_residual(design: &GroupedDesign, weights: &[f64]) -> Vec<f64> {
    let free: Vec<usize> = (0..design.groups.len()).filter(|&m| weights[m] == 0.0).collect();
    if free.is_empty() {
        return design.y.clone();
    }
    let sub = design.subset(&free, design.y.clone());
    let x = sub.matrix.clone();
    let y = DVector::from_column_slice(&sub.y);
    match x.svd(true, true).solve(&y, 1e-12) {
        Ok(beta) => sub.residual(beta.as_slice()),
        Err(_) => design.y.clone(),
    }
}

/// Largest `lambda` at which some penalized group can leave zero:
/// `max_m |D_m' r0| / w_m` over groups with finite positive weight, where `r0`
/// is the response after fitting any unpenalized groups.
pub fn lambda_max(design: &GroupedDesign, weights: &[f64]) -> Result<f64> {
    let r0 = unpenalized_residual(design, weights);
    let mut best: Option<f64> = None;
    for (m, &w) in weights.iter().enumerate() {
        if w.is_finite() && w > 0.0 {
            let v = design.group_dot(m, &r0).norm() / w;
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    }
    best.ok_or(Error::AllGroupsExcluded)
}

/// `n_points` log-spaced values from `lambda_max` down to `1e-4 lambda_max`.
pub fn lambda_path(design: &GroupedDesign, weights: &[f64], n_points: usize) -> Result<Vec<f64>> {
    if n_points < 2 {
        return Err(Error::InvalidArgs("lambda path needs at least 2 points".into()));
    }
    let top = lambda_max(design, weights)?;
    if !(top > 0.0) {
        return Err(Error::AllGroupsExcluded);
    }
    let ratio = 1e-4f64;
    Ok((0..n_points)
        .map(|i| top * ratio.powf(i as f64 / (n_points - 1) as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    fn random_design(rng: &mut ChaCha20Rng, n: usize, widths: &[usize]) -> GroupedDesign {
        let blocks = widths
            .iter()
            .enumerate()
            .map(|(m, &w)| DesignBlock {
                label: format!("g{m}"),
                class: if w == 1 { GroupClass::Xlinear } else { GroupClass::Xspline },
                index: m,
                values: DMatrix::from_fn(n, w, |_, _| rng.sample(StandardNormal)),
            })
            .collect();
        let y = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        GroupedDesign::new(blocks, y).unwrap()
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(group_soft_threshold(&[3.0, 4.0], 0.0), vec![3.0, 4.0]);
        assert_eq!(group_soft_threshold(&[3.0, 4.0], 5.0), vec![0.0, 0.0]);
        let v = group_soft_threshold(&[3.0, 4.0], 2.5);
        assert_abs_diff_eq!(v[0], 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn adaptive_weight_examples() {
        let c = CoefTriple {
            alpha: vec![0.5, 0.0],
            beta: vec![-4.0],
            gamma: vec![vec![0.6, 0.8], vec![0.3, 0.4], vec![0.0, 0.0]],
        };
        let w = adaptive_weights(&c);
        assert_eq!(w.alpha, vec![2.0, f64::INFINITY]);
        assert_eq!(w.beta, vec![0.25]);
        assert_abs_diff_eq!(w.gamma[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.gamma[1], 2.0, epsilon = 1e-15);
        assert_eq!(w.gamma[2], f64::INFINITY);
    }

    #[test]
    fn r_factor_reproduces_gram() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let d = random_design(&mut rng, 25, &[1, 4, 3]);
        for m in 0..3 {
            let b = d.block(m);
            let r = d.r_factor(m);
            assert!((r.transpose() * r - b.transpose() * &b).amax() < 1e-10);
        }
    }

    #[test]
    fn kkt_matches_direct_subgradient() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let widths = [1, 1, 3, 5, 2, 1, 4, 3, 5, 5];
        let d = random_design(&mut rng, 20, &widths);
        let theta: Vec<f64> = (0..d.ncols())
            .map(|j| if j % 4 == 0 { 0.0 } else { rng.sample(StandardNormal) })
            .collect();
        let pen = PenaltySpec { lambda_z: 0.0, lambda_xl: 0.7, lambda_xs: 1.3, weights: vec![1.0; 10] };
        // Oracle: dense residual and gradient, then the definition.
        let x = d.matrix().clone();
        let r = DVector::from_column_slice(d.response()) - &x * DVector::from_column_slice(&theta);
        let grad = x.transpose() * r;
        let mut want = 0.0f64;
        for g in d.groups() {
            let t = if g.class == GroupClass::Xlinear { 0.7 } else { 1.3 };
            let th = DVector::from_column_slice(&theta[g.start..g.start + g.width]);
            let gr = grad.rows(g.start, g.width).into_owned();
            let v = if th.norm() > 0.0 { (gr - th.scale(t / th.norm())).norm() } else { (gr.norm() - t).max(0.0) };
            want = want.max(v);
        }
        assert_abs_diff_eq!(kkt_residual(&d, &pen, &theta), want, epsilon = 1e-12);
    }

    #[test]
    fn zero_is_optimal_above_lambda_max() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let d = random_design(&mut rng, 40, &[1, 3, 1, 4]);
        let w = vec![1.0, 2.0, 0.5, 1.0];
        let top = lambda_max(&d, &w).unwrap();
        let pen = PenaltySpec::common(top * 1.0001, w.clone());
        let fit = fit_flat(&d, &pen, &vec![0.0; d.ncols()], &SolverOptions::default()).unwrap();
        assert!(fit.theta.iter().all(|&v| v == 0.0));
        assert_eq!(kkt_residual(&d, &pen, &fit.theta), 0.0);
        let pen = PenaltySpec::common(top * 0.9, w);
        let fit = fit_flat(&d, &pen, &vec![0.0; d.ncols()], &SolverOptions::default()).unwrap();
        assert!(fit.theta.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn path_shape() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let d = random_design(&mut rng, 30, &[2, 1]);
        let p = lambda_path(&d, &[1.0, 1.0], 2).unwrap();
        assert_abs_diff_eq!(p[1], 1e-4 * p[0], epsilon = 1e-15 * p[0]);
        let p = lambda_path(&d, &[1.0, 1.0], 50).unwrap();
        assert!(p.windows(2).all(|w| w[1] < w[0]));
        assert!(matches!(
            lambda_path(&d, &[f64::INFINITY, f64::INFINITY], 5),
            Err(Error::AllGroupsExcluded)
        ));
    }

    #[test]
    fn one_orthonormal_group_lambda_max() {
        // D'D = I: lambda_max is |D'y|.
        let d = GroupedDesign::new(
            vec![DesignBlock {
                label: "g".into(),
                class: GroupClass::Xspline,
                index: 0,
                values: DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
            }],
            vec![3.0, 4.0, 7.0],
        )
        .unwrap();
        assert_abs_diff_eq!(lambda_max(&d, &[1.0]).unwrap(), 5.0, epsilon = 1e-14);
        let fit = fit_flat(&d, &PenaltySpec::common(2.5, vec![1.0]), &[0.0, 0.0], &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(fit.theta[0], 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.theta[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn excluded_groups_stay_zero_and_permutation_invariance() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let widths = [1, 3, 2, 1, 4];
        let d = random_design(&mut rng, 60, &widths);
        let w = vec![1.0, f64::INFINITY, 0.8, 1.5, 1.0];
        let pen = PenaltySpec::common(2.0, w.clone());
        let init: Vec<f64> = (0..d.ncols()).map(|_| rng.random::<f64>()).collect();
        let fit = fit_flat(&d, &pen, &init, &SolverOptions::default()).unwrap();
        let g1 = &d.groups()[1];
        assert!(fit.theta[g1.start..g1.start + g1.width].iter().all(|&v| v == 0.0));

        let order = [4, 2, 0, 3, 1];
        let dp = d.subset(&order, d.response().to_vec());
        let pp = PenaltySpec::common(2.0, order.iter().map(|&m| w[m]).collect());
        let fp = fit_flat(&dp, &pp, &vec![0.0; dp.ncols()], &SolverOptions::default()).unwrap();
        for (k, &m) in order.iter().enumerate() {
            let a = &d.groups()[m];
            let b = &dp.groups()[k];
            for j in 0..a.width {
                assert_abs_diff_eq!(fit.theta[a.start + j], fp.theta[b.start + j], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn warm_start_no_worse_than_cold() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let d = random_design(&mut rng, 50, &[1, 1, 3, 3, 4, 1]);
        let w = vec![1.0; 6];
        let path = lambda_path(&d, &w, 10).unwrap();
        let opts = SolverOptions::default();
        let mut warm = vec![0.0; d.ncols()];
        for &lam in &path {
            let pen = PenaltySpec::common(lam, w.clone());
            let fw = fit_flat(&d, &pen, &warm, &opts).unwrap();
            let fc = fit_flat(&d, &pen, &vec![0.0; d.ncols()], &opts).unwrap();
            assert!(fw.objective <= fc.objective + 1e-10 * fc.objective.abs().max(1.0));
            warm = fw.theta;
        }
    }

    #[test]
    fn beats_random_feasible_points() {
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        for _ in 0..3 {
            let d = random_design(&mut rng, 30, &[3; 5]);
            let pen = PenaltySpec::common(3.0, vec![1.0; 5]);
            let fit = fit_flat(&d, &pen, &vec![0.0; 15], &SolverOptions::default()).unwrap();
            for _ in 0..10_000 {
                let pt: Vec<f64> = fit
                    .theta
                    .iter()
                    .map(|v| v + 0.3 * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                assert!(fit.objective <= objective(&d, &pen, &pt) + 1e-12);
            }
        }
    }

    #[test]
    fn non_convergence_reports_last_iterate() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let d = random_design(&mut rng, 30, &[3, 3, 1]);
        let pen = PenaltySpec::common(0.5, vec![1.0; 3]);
        let opts = SolverOptions { tol: 1e-7, max_sweeps: 1, kkt_tol: Some(1e-300) };
        match fit_flat(&d, &pen, &[0.0; 7], &opts) {
            Err(Error::DidNotConverge { last, sweeps, .. }) => {
                assert_eq!(last.len(), 7);
                assert!(sweeps >= 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
