//! Stage one: structure selection by adaptive group LASSO.
//!
//! The selection design stacks, in order, the linear Z columns, the linear X
//! columns and one piecewise-constant spline group per X column. Step 0 fits
//! the plain group LASSO with a common penalty level chosen by BIC. Each
//! outer iteration then revisits the Z, X-linear and X-spline blocks in turn:
//! a group LASSO path on the block gives adaptive weights, and an adaptive
//! path picks the block's penalty (BIC for the two linear blocks, EBIC for
//! the spline block). Indices are classified from exact zeros of the result.

use serde::{Deserialize, Serialize};

use crate::basis::{spline_basis, BasisBlock, KnotPlacement, rule_of_thumb_knots};
use crate::data::{center, mean, Dataset};
use crate::error::{Error, Result};
use crate::inference::{refit, RefitFit};
use crate::solver::{
    fit_flat, lambda_path, objective, CoefTriple, DesignBlock, GroupClass, GroupedDesign,
    PenaltySpec, SolverOptions,
};

/// `ln(rss) + df ln(p_total) ln(n) / (2n)`.
pub fn bic(rss: f64, df: usize, n: usize, p_total: usize) -> Result<f64> {
    check_criterion_args(rss, n, p_total)?;
    let nf = n as f64;
    Ok(rss.ln() + df as f64 * (p_total as f64).ln() * nf.ln() / (2.0 * nf))
}

/// `ln(rss) + df ln(n) / n + df ln(p_total) / n`.
pub fn ebic(rss: f64, df: usize, n: usize, p_total: usize) -> Result<f64> {
    check_criterion_args(rss, n, p_total)?;
    let nf = n as f64;
    let d = df as f64;
    Ok(rss.ln() + d * nf.ln() / nf + d * (p_total as f64).ln() / nf)
}

fn check_criterion_args(rss: f64, n: usize, p_total: usize) -> Result<()> {
    if !(rss > 0.0) || n < 2 || p_total < 1 {
        return Err(Error::InvalidArgs(format!(
            "criterion needs rss > 0, n >= 2, p_total >= 1 (got {rss}, {n}, {p_total})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Criterion {
    Bic,
    Ebic,
}

impl Criterion {
    pub fn score(self, rss: f64, df: usize, n: usize, p_total: usize) -> Result<f64> {
        match self {
            Criterion::Bic => bic(rss, df, n, p_total),
            Criterion::Ebic => ebic(rss, df, n, p_total),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningPoint {
    pub lambda: f64,
    pub rss: f64,
    pub df: usize,
    pub score: f64,
}

/// One penalty-level search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    /// Which fit this search belongs to, e.g. `step0` or `iter1/beta/adaptive`.
    pub stage: String,
    pub criterion: Criterion,
    pub points: Vec<TuningPoint>,
    pub chosen: usize,
}

impl TuningReport {
    pub fn chosen_lambda(&self) -> f64 {
        self.points[self.chosen].lambda
    }
}

/// Selected index sets (0-based).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelStructure {
    pub s_z: Vec<usize>,
    pub s_x_pl: Vec<usize>,
    pub s_x_ln: Vec<usize>,
    pub s_x_pn: Vec<usize>,
}

impl ModelStructure {
    /// Indices with a nonlinear part (LN and PN), sorted.
    pub fn s_x_nonlinear(&self) -> Vec<usize> {
        sorted_union(&self.s_x_ln, &self.s_x_pn)
    }

    /// Indices with a linear part (PL and LN), sorted.
    pub fn s_x_linear(&self) -> Vec<usize> {
        sorted_union(&self.s_x_pl, &self.s_x_ln)
    }

    /// Every active X index, sorted.
    pub fn s_x_active(&self) -> Vec<usize> {
        sorted_union(&self.s_x_linear(), &self.s_x_pn)
    }

    pub fn is_empty(&self) -> bool {
        self.s_z.is_empty() && self.s_x_active().is_empty()
    }

    pub fn is_nonlinear(&self, l: usize) -> bool {
        self.s_x_ln.contains(&l) || self.s_x_pn.contains(&l)
    }
}

fn sorted_union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = a.iter().chain(b).copied().collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Index sets from exact zeros of a coefficient triple.
pub fn classify(theta: &CoefTriple) -> ModelStructure {
    let mut s = ModelStructure {
        s_z: (0..theta.alpha.len()).filter(|&k| theta.alpha[k] != 0.0).collect(),
        ..Default::default()
    };
    for l in 0..theta.beta.len() {
        let lin = theta.beta[l] != 0.0;
        let nonlin = theta.gamma.get(l).is_some_and(|g| g.iter().any(|&v| v != 0.0));
        match (lin, nonlin) {
            (true, false) => s.s_x_pl.push(l),
            (true, true) => s.s_x_ln.push(l),
            (false, true) => s.s_x_pn.push(l),
            (false, false) => {}
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Variant {
    Smile,
    Saplm,
    Slm,
    Oracle,
}

impl Variant {
    /// Whether the variant can carry linear X terms.
    pub fn has_linear_x(self) -> bool {
        !matches!(self, Variant::Saplm)
    }

    fn has_spline_x(self) -> bool {
        !matches!(self, Variant::Slm)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Smile => "SMILE",
            Variant::Saplm => "SAPLM",
            Variant::Slm => "SLM",
            Variant::Oracle => "ORACLE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnotKeyword {
    Auto,
}

/// Interior knot count: a number, or `"auto"` for the rule of thumb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KnotCount {
    Fixed(usize),
    Keyword(KnotKeyword),
}

impl KnotCount {
    /// Resolves `auto` with the rule of thumb for order `d` and `s` nonlinear
    /// components.
    pub fn resolve(self, n: usize, d: usize, s: usize) -> Result<usize> {
        match self {
            KnotCount::Fixed(k) if k >= 1 => Ok(k),
            KnotCount::Fixed(k) => Err(Error::InvalidN(k)),
            KnotCount::Keyword(KnotKeyword::Auto) => rule_of_thumb_knots(n, d, s.max(1)),
        }
    }
}

/// How the blocks not being tuned enter a block update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefitOthers {
    /// Held at their current values.
    Fixed,
    /// Their currently active groups are refit without penalty.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub n_knots_select: KnotCount,
    pub n_knots_refit: KnotCount,
    pub refit_order: usize,
    pub delta0: f64,
    pub outer_iters: usize,
    pub lambda_grid_size: usize,
    pub variant: Variant,
    pub refit_others: RefitOthers,
    pub knot_placement: KnotPlacement,
    /// Scale the linear columns to unit second moment during selection.
    pub standardize: bool,
    /// Orthonormalize each spline block so its penalty acts on fitted
    /// values. `None` does so for SAPLM only.
    pub orthonormal_splines: Option<bool>,
    /// A path stops once the model size exceeds this fraction of `n`.
    pub max_df_fraction: f64,
    pub solver_tol: f64,
    pub max_sweeps: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            n_knots_select: KnotCount::Fixed(4),
            n_knots_refit: KnotCount::Fixed(4),
            refit_order: 4,
            delta0: 1e-6,
            outer_iters: 3,
            lambda_grid_size: 50,
            variant: Variant::Smile,
            refit_others: RefitOthers::Fixed,
            knot_placement: KnotPlacement::Quantile,
            standardize: true,
            orthonormal_splines: None,
            max_df_fraction: 0.5,
            solver_tol: 1e-7,
            max_sweeps: 10_000,
        }
    }
}

impl SelectionConfig {
    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Selection design on a centered dataset.
#[derive(Debug, Clone)]
pub struct SelectionDesign {
    pub design: GroupedDesign,
    /// Spline blocks per X column (`None` when the variant has no spline block).
    pub bases: Vec<Option<BasisBlock>>,
    pub z_means: Vec<f64>,
    pub z_scales: Vec<f64>,
    pub x_scales: Vec<f64>,
    /// Maps working spline coefficients back to basis coefficients.
    pub spline_maps: Vec<Option<nalgebra::DMatrix<f64>>>,
    pub n_knots: usize,
    /// Column count of the full variant design, used by the criteria.
    pub p_total: usize,
    pub p1: usize,
    pub p2: usize,
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt()
}

impl SelectionDesign {
    pub fn build(ds: &Dataset, cfg: &SelectionConfig, variant: Variant) -> Result<Self> {
        if !ds.is_centered() {
            return Err(Error::InvalidArgs("selection needs a centered dataset".into()));
        }
        let (n, p1, p2) = (ds.n(), ds.p1(), ds.p2());
        let nn = cfg.n_knots_select.resolve(n, 4, 1)?;
        let mut blocks = Vec::new();
        let mut z_means = vec![0.0; p1];
        let mut z_scales = vec![1.0; p1];
        for k in 0..p1 {
            let zc = ds.z_col(k);
            let m = mean(zc);
            let centered: Vec<f64> = zc.iter().map(|v| v - m).collect();
            let s = rms(&centered);
            z_means[k] = m;
            if !(s > 1e-12) {
                continue; // constant column cannot be selected
            }
            let scale = if cfg.standardize { s } else { 1.0 };
            z_scales[k] = scale;
            blocks.push(DesignBlock {
                label: ds.column_names.z[k].clone(),
                class: GroupClass::Zlinear,
                index: k,
                values: nalgebra::DMatrix::from_iterator(n, 1, centered.iter().map(|v| v / scale)),
            });
        }
        let mut x_scales = vec![1.0; p2];
        let mut bases = vec![None; p2];
        let mut spline_maps = vec![None; p2];
        let orthonormal = cfg.orthonormal_splines.unwrap_or(variant == Variant::Saplm);
        if variant.has_linear_x() {
            for l in 0..p2 {
                let xc = ds.x_col(l);
                let s = rms(xc);
                if !(s > 1e-12) {
                    return Err(Error::DegenerateColumn(ds.column_names.x[l].clone()));
                }
                let scale = if cfg.standardize { s } else { 1.0 };
                x_scales[l] = scale;
                blocks.push(DesignBlock {
                    label: ds.column_names.x[l].clone(),
                    class: GroupClass::Xlinear,
                    index: l,
                    values: nalgebra::DMatrix::from_iterator(n, 1, xc.iter().map(|v| v / scale)),
                });
            }
        }
        if variant.has_spline_x() {
            for l in 0..p2 {
                let xc = ds.x_col(l);
                let knots = cfg.knot_placement.place(xc, nn).map_err(|e| name_error(e, &ds.column_names.x[l]))?;
                let b = spline_basis(xc, &knots, 1).map_err(|e| name_error(e, &ds.column_names.x[l]))?;
                let values = if orthonormal {
                    let (q, map) = orthonormalize(&b.values)
                        .ok_or_else(|| Error::DegenerateColumn(format!("{}:spline", ds.column_names.x[l])))?;
                    spline_maps[l] = Some(map);
                    q
                } else {
                    b.values.clone()
                };
                blocks.push(DesignBlock {
                    label: format!("{}:spline", ds.column_names.x[l]),
                    class: GroupClass::Xspline,
                    index: l,
                    values,
                });
                bases[l] = Some(b);
            }
        }
        let p_total = p1
            + if variant.has_linear_x() { p2 } else { 0 }
            + if variant.has_spline_x() { p2 * nn } else { 0 };
        let design = GroupedDesign::new(blocks, ds.y.clone())?;
        Ok(Self { design, bases, z_means, z_scales, x_scales, spline_maps, n_knots: nn, p_total, p1, p2 })
    }

    fn groups_of(&self, class: GroupClass) -> Vec<usize> {
        (0..self.design.groups().len())
            .filter(|&m| self.design.groups()[m].class == class)
            .collect()
    }

    /// Maps working (standardized) coefficients to the original scale.
    pub fn to_original(&self, theta: &[f64]) -> CoefTriple {
        let mut c = CoefTriple::zeros(self.p1, self.p2, self.n_knots);
        self.design.scatter(theta, &mut c);
        for k in 0..self.p1 {
            c.alpha[k] /= self.z_scales[k];
        }
        for l in 0..self.p2 {
            c.beta[l] /= self.x_scales[l];
            if let Some(map) = &self.spline_maps[l] {
                let g = map * nalgebra::DVector::from_column_slice(&c.gamma[l]);
                c.gamma[l] = g.as_slice().to_vec();
            }
        }
        c
    }
}

/// `B = Q R` with `Q' Q = n I`; returns `(Q, R^{-1})` so that `B g = Q (R g)`.
fn orthonormalize(b: &nalgebra::DMatrix<f64>) -> Option<(nalgebra::DMatrix<f64>, nalgebra::DMatrix<f64>)> {
    let sn = (b.nrows() as f64).sqrt();
    let qr = b.clone().qr();
    let r = qr.r() / sn;
    let scale = b.column_iter().map(|c| c.norm()).fold(0.0, f64::max) / sn;
    if (0..r.ncols()).any(|j| !(r[(j, j)].abs() > 1e-10 * scale)) {
        return None;
    }
    let rinv = r.clone().try_inverse()?;
    Some((qr.q() * sn, rinv))
}

fn name_error(e: Error, name: &str) -> Error {
    match e {
        Error::DegenerateColumn(msg) => Error::DegenerateColumn(format!("{name}: {msg}")),
        other => other,
    }
}

/// Output of [`smile_select`].
#[derive(Debug, Clone)]
pub struct SelectionResult {
    /// Final coefficients on the original scale of Z and X.
    pub coefs: CoefTriple,
    pub structure: ModelStructure,
    pub tuning: Vec<TuningReport>,
    /// Step-0 group LASSO coefficients on the original scale.
    pub initial: CoefTriple,
    pub outer_iterations: usize,
    pub n_knots: usize,
}

struct Selector<'a> {
    sd: &'a SelectionDesign,
    cfg: &'a SelectionConfig,
    opts: SolverOptions,
    n: usize,
    tuning: Vec<TuningReport>,
}

fn active_width(design: &GroupedDesign, theta: &[f64]) -> usize {
    design
        .groups()
        .iter()
        .filter(|g| theta[g.start..g.start + g.width].iter().any(|&v| v != 0.0))
        .map(|g| g.width)
        .sum()
}

impl Selector<'_> {
    /// Runs a penalty path on `sub` and returns the coefficients at the
    /// criterion minimum, or `None` when no group can enter.
    fn path(
        &mut self,
        sub: &GroupedDesign,
        weights: &[f64],
        criterion: Criterion,
        df_offset: usize,
        stage: String,
    ) -> Result<Option<(Vec<f64>, f64)>> {
        let path = match lambda_path(sub, weights, self.cfg.lambda_grid_size) {
            Ok(p) => p,
            Err(Error::AllGroupsExcluded) => return Ok(None),
            Err(e) => return Err(e),
        };
        let ynorm = sub.response().iter().map(|v| v * v).sum::<f64>().sqrt();
        let opts = SolverOptions {
            kkt_tol: Some(1e-7 * (self.n as f64).sqrt() * ynorm.max(1e-300)),
            ..self.opts
        };
        let max_df = (self.cfg.max_df_fraction * self.n as f64).floor() as usize;
        let mut warm = vec![0.0; sub.ncols()];
        let mut points = Vec::with_capacity(path.len());
        let mut best: Option<(f64, Vec<f64>, f64)> = None;
        for &lam in &path {
            let pen = PenaltySpec::common(lam, weights.to_vec());
            let fit = fit_flat(sub, &pen, &warm, &opts)?;
            let r = sub.residual(&fit.theta);
            let rss = r.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
            let df = df_offset + active_width(sub, &fit.theta);
            if df > max_df && !points.is_empty() {
                break;
            }
            let score = criterion.score(rss, df, self.n, self.sd.p_total)?;
            points.push(TuningPoint { lambda: lam, rss, df, score });
            if best.as_ref().is_none_or(|b| score < b.0) {
                best = Some((score, fit.theta.clone(), lam));
            }
            warm = fit.theta;
        }
        let chosen = points
            .iter()
            .position(|p| Some(p.score) == best.as_ref().map(|b| b.0))
            .unwrap_or(0);
        self.tuning.push(TuningReport { stage, criterion, points, chosen });
        Ok(best.map(|(_, th, lam)| (th, lam)))
    }

    /// Re-tunes one block; updates `theta` and records the final penalty.
    fn block_step(
        &mut self,
        theta: &mut [f64],
        class: GroupClass,
        iter: usize,
        final_lambda: &mut [f64; 3],
        final_weights: &mut [f64],
    ) -> Result<()> {
        let design = &self.sd.design;
        let block = self.sd.groups_of(class);
        if block.is_empty() {
            return Ok(());
        }
        let (criterion, name, slot) = match class {
            GroupClass::Zlinear => (Criterion::Bic, "alpha", 0),
            GroupClass::Xlinear => (Criterion::Bic, "beta", 1),
            GroupClass::Xspline => (Criterion::Ebic, "gamma", 2),
        };
        let is_active = |m: usize, th: &[f64]| {
            let g = &design.groups()[m];
            th[g.start..g.start + g.width].iter().any(|&v| v != 0.0)
        };
        let (members, response, df_offset) = match self.cfg.refit_others {
            RefitOthers::Fixed => {
                let mut others = theta.to_vec();
                for &m in &block {
                    let g = &design.groups()[m];
                    others[g.start..g.start + g.width].fill(0.0);
                }
                let offset = active_width(design, &others);
                (block.clone(), design.residual(&others), offset)
            }
            RefitOthers::Free => {
                let mut members = block.clone();
                members.extend(
                    (0..design.groups().len())
                        .filter(|m| !block.contains(m) && is_active(*m, theta)),
                );
                (members, design.response().to_vec(), 0)
            }
        };
        let sub = design.subset(&members, response);
        let nb = block.len();
        let mut unit = vec![0.0; members.len()];
        unit[..nb].fill(1.0);

        let glasso = self.path(&sub, &unit, criterion, df_offset, format!("iter{iter}/{name}/group"))?;
        let mut weights = vec![f64::INFINITY; members.len()];
        weights[nb..].fill(0.0);
        if let Some((th, _)) = &glasso {
            for (k, g) in sub.groups().iter().take(nb).enumerate() {
                let norm = th[g.start..g.start + g.width].iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    weights[k] = 1.0 / norm;
                }
            }
        }
        let adaptive =
            self.path(&sub, &weights, criterion, df_offset, format!("iter{iter}/{name}/adaptive"))?;
        for (k, &m) in block.iter().enumerate() {
            final_weights[m] = weights[k];
        }
        match adaptive {
            Some((th, lam)) => {
                final_lambda[slot] = lam;
                for (k, &m) in members.iter().enumerate() {
                    let (gs, gd) = (&sub.groups()[k], &design.groups()[m]);
                    theta[gd.start..gd.start + gd.width]
                        .copy_from_slice(&th[gs.start..gs.start + gs.width]);
                }
            }
            None => {
                for &m in &block {
                    let g = &design.groups()[m];
                    theta[g.start..g.start + g.width].fill(0.0);
                }
            }
        }
        Ok(())
    }
}

/// Runs the selection stage on a centered dataset.
pub fn smile_select(ds: &Dataset, cfg: &SelectionConfig) -> Result<SelectionResult> {
    let variant = match cfg.variant {
        Variant::Oracle => {
            return Err(Error::InvalidArgs("ORACLE has no selection stage".into()));
        }
        v => v,
    };
    let sd = SelectionDesign::build(ds, cfg, variant)?;
    select_on(&sd, cfg)
}

/// Selection on a prebuilt design.
pub fn select_on(sd: &SelectionDesign, cfg: &SelectionConfig) -> Result<SelectionResult> {
    let design = &sd.design;
    let ng = design.groups().len();
    let mut sel = Selector {
        sd,
        cfg,
        opts: SolverOptions { tol: cfg.solver_tol, max_sweeps: cfg.max_sweeps, kkt_tol: None },
        n: design.n(),
        tuning: Vec::new(),
    };
    let mut theta = vec![0.0; design.ncols()];
    if ng == 0 {
        let coefs = sd.to_original(&theta);
        return Ok(SelectionResult {
            structure: classify(&coefs),
            initial: coefs.clone(),
            coefs,
            tuning: Vec::new(),
            outer_iterations: 0,
            n_knots: sd.n_knots,
        });
    }

    // Step 0: group LASSO with a common penalty level.
    if let Some((th, _)) = sel.path(design, &vec![1.0; ng], Criterion::Bic, 0, "step0".into())? {
        theta = th;
    }
    let initial = theta.clone();

    let mut final_lambda = [0.0f64; 3];
    let mut final_weights = vec![f64::INFINITY; ng];
    let mut iterations = 0;
    for iter in 1..=cfg.outer_iters {
        let prev = theta.clone();
        for class in [GroupClass::Zlinear, GroupClass::Xlinear, GroupClass::Xspline] {
            sel.block_step(&mut theta, class, iter, &mut final_lambda, &mut final_weights)?;
        }
        iterations = iter;
        let change: f64 = theta.iter().zip(&prev).map(|(a, b)| (a - b).powi(2)).sum();
        if change < cfg.delta0 {
            break;
        }
    }

    // The final point must not be worse than the initializer under the final
    // penalty; otherwise polish jointly from the better start.
    let pen = PenaltySpec {
        lambda_z: final_lambda[0],
        lambda_xl: final_lambda[1],
        lambda_xs: final_lambda[2],
        weights: final_weights,
    };
    let l_final = objective(design, &pen, &theta);
    let l_init = objective(design, &pen, &initial);
    if l_init.is_finite() && l_final > l_init {
        let fit = fit_flat(design, &pen, &initial, &sel.opts)?;
        theta = fit.theta;
    }

    let coefs = sd.to_original(&theta);
    let structure = classify(&coefs);
    Ok(SelectionResult {
        coefs,
        structure,
        tuning: sel.tuning,
        initial: sd.to_original(&initial),
        outer_iterations: iterations,
        n_knots: sd.n_knots,
    })
}

/// A variant fitted end to end: selection (unless ORACLE) and refit.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub variant: Variant,
    pub selection: Option<SelectionResult>,
    pub structure: ModelStructure,
    pub refit: RefitFit,
}

impl FittedModel {
    /// Predicted responses for raw (uncentered) covariates.
    pub fn predict(&self, z: &nalgebra::DMatrix<f64>, x: &nalgebra::DMatrix<f64>) -> Vec<f64> {
        self.refit.predict(z, x)
    }
}

/// Fits a variant on a raw or centered dataset. ORACLE needs `truth`.
pub fn fit_variant(
    ds: &Dataset,
    cfg: &SelectionConfig,
    variant: Variant,
    truth: Option<&ModelStructure>,
) -> Result<FittedModel> {
    let centered;
    let ds = if ds.is_centered() {
        ds
    } else {
        centered = center(ds)?;
        &centered
    };
    let (selection, structure) = match variant {
        Variant::Oracle => {
            let t = truth.ok_or_else(|| Error::InvalidArgs("ORACLE needs the true structure".into()))?;
            (None, t.clone())
        }
        v => {
            let cfg = SelectionConfig { variant: v, ..cfg.clone() };
            let s = smile_select(ds, &cfg)?;
            let st = s.structure.clone();
            (Some(s), st)
        }
    };
    let s = structure.s_x_nonlinear().len();
    let m = cfg.n_knots_refit.resolve(ds.n(), cfg.refit_order, s)?;
    let fit = refit(ds, &structure, cfg.refit_order, m, cfg.knot_placement)?;
    Ok(FittedModel { variant, selection, structure, refit: fit })
}
