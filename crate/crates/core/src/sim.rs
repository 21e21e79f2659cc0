//! Data-generating processes, selection and estimation metrics, and the
//! replicated experiment runner.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{center, mean, ColumnNames, Dataset, Seed};
use crate::error::{Error, Result};
use crate::inference::{oracle_sbll, sbll_curve, sbll_estimates, GridSpec, SbllOptions};
use crate::kernel::rot_bandwidth;
use crate::inference::pseudo_responses;
use crate::select::{fit_variant, FittedModel, ModelStructure, SelectionConfig, Variant};

/// A univariate component function with known centering constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Component {
    Zero,
    /// `slope * x`.
    Linear { slope: f64 },
    /// `cos2 cos^2(pi x) + sin2 sin^2(pi x) - offset`.
    Trig { cos2: f64, sin2: f64, offset: f64 },
    /// `a1 x + a2 x^2 - offset`.
    Quadratic { a1: f64, a2: f64, offset: f64 },
    /// `scale sin(2 pi x) / (2 - sin(2 pi x)) - offset`.
    SineRatio { scale: f64, offset: f64 },
}

impl Component {
    pub fn is_zero(&self) -> bool {
        matches!(self, Component::Zero)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Component::Zero => 0.0,
            Component::Linear { slope } => slope * x,
            Component::Trig { cos2, sin2, offset } => {
                let (s, c) = (PI * x).sin_cos();
                cos2 * c * c + sin2 * s * s - offset
            }
            Component::Quadratic { a1, a2, offset } => a1 * x + a2 * x * x - offset,
            Component::SineRatio { scale, offset } => {
                let g = (2.0 * PI * x).sin();
                scale * g / (2.0 - g) - offset
            }
        }
    }

    /// Second derivative.
    pub fn d2(&self, x: f64) -> f64 {
        match *self {
            Component::Zero | Component::Linear { .. } => 0.0,
            Component::Trig { cos2, sin2, .. } => 2.0 * PI * PI * (sin2 - cos2) * (2.0 * PI * x).cos(),
            Component::Quadratic { a2, .. } => 2.0 * a2,
            Component::SineRatio { scale, .. } => {
                let w = 2.0 * PI;
                let g = (w * x).sin();
                let g1 = w * (w * x).cos();
                let g2 = -w * w * g;
                let den = 2.0 - g;
                scale * (2.0 * g2 / (den * den) + 4.0 * g1 * g1 / (den * den * den))
            }
        }
    }
}

/// Which model generates the response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scenario {
    /// Additive partially linear: three Z effects, one pure-linear, one pure
    /// nonlinear and one linear-plus-nonlinear X effect.
    Aplm,
    /// Purely additive: three nonlinear X effects, no Z effect.
    Am,
    /// Purely linear: three linear X effects, no Z effect.
    Lm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub n: usize,
    pub p1: usize,
    pub p2: usize,
    pub sigma: f64,
    pub scenario: Scenario,
    pub seed: Seed,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 50 || !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgs(format!(
                "DGP needs n >= 50 and finite sigma >= 0 (got n={}, sigma={})",
                self.n, self.sigma
            )));
        }
        Truth::for_spec(self).map(|_| ())
    }
}

/// The generating model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub structure: ModelStructure,
    /// Z coefficients (all `p1`).
    pub alpha: Vec<f64>,
    /// Linear slopes of X components with a linear part (zero otherwise).
    pub beta: Vec<f64>,
    /// Component functions of raw X (all `p2`).
    pub phi: Vec<Component>,
    pub sigma: f64,
}

impl Truth {
    pub fn for_spec(spec: &DgpSpec) -> Result<Truth> {
        let (p1, p2) = (spec.p1, spec.p2);
        let mut alpha = vec![0.0; p1];
        let mut beta = vec![0.0; p2];
        let mut phi = vec![Component::Zero; p2];
        let mut st = ModelStructure::default();
        if p2 < 3 {
            return Err(Error::InvalidArgs(format!("scenario needs p2 >= 3, got {p2}")));
        }
        let quad = Component::Quadratic { a1: 6.0, a2: 18.0, offset: 1.5 };
        match spec.scenario {
            Scenario::Aplm => {
                if p1 < 3 {
                    return Err(Error::InvalidArgs(format!("APLM needs p1 >= 3, got {p1}")));
                }
                alpha[..3].copy_from_slice(&[3.0, 4.0, -2.0]);
                st.s_z = vec![0, 1, 2];
                phi[0] = Component::Linear { slope: 9.0 };
                phi[1] = Component::Trig { cos2: -1.5, sin2: 3.0, offset: 0.75 };
                phi[2] = quad;
                beta[0] = 9.0;
                beta[2] = 6.0;
                st.s_x_pl = vec![0];
                st.s_x_pn = vec![1];
                st.s_x_ln = vec![2];
            }
            Scenario::Am => {
                // E{sin/(2 - sin)} over a period is -1 + 2/sqrt(3).
                let off = 8.0 * (-1.0 + 2.0 / 3f64.sqrt());
                phi[0] = Component::SineRatio { scale: 8.0, offset: off };
                phi[1] = Component::Trig { cos2: -3.0, sin2: 6.0, offset: 1.5 };
                phi[2] = quad;
                beta[2] = 6.0;
                st.s_x_pn = vec![0, 1];
                st.s_x_ln = vec![2];
            }
            Scenario::Lm => {
                for (l, b) in [3.0, 4.0, -2.0].into_iter().enumerate() {
                    phi[l] = Component::Linear { slope: b };
                    beta[l] = b;
                }
                st.s_x_pl = vec![0, 1, 2];
            }
        }
        Ok(Truth { structure: st, alpha, beta, phi, sigma: spec.sigma })
    }

    /// Noise-free mean response for raw covariates.
    pub fn mean_response(&self, z: &DMatrix<f64>, x: &DMatrix<f64>) -> Vec<f64> {
        let n = z.nrows().max(x.nrows());
        (0..n)
            .map(|i| {
                let lin: f64 = self.alpha.iter().enumerate().map(|(k, a)| a * z[(i, k)]).sum();
                let add: f64 = self.phi.iter().enumerate().map(|(l, c)| c.eval(x[(i, l)])).sum();
                lin + add
            })
            .collect()
    }
}

/// Draws a dataset: `Z = I(U > 0.75)`, `X ~ U[-0.5, 0.5]`, `eps ~ N(0, sigma^2)`.
pub fn generate(spec: &DgpSpec) -> Result<(Dataset, Truth)> {
    spec.validate()?;
    let truth = Truth::for_spec(spec)?;
    let mut rng = spec.seed.rng();
    let (n, p1, p2) = (spec.n, spec.p1, spec.p2);
    let z = DMatrix::from_fn(n, p1, |_, _| 0.0);
    let x = DMatrix::from_fn(n, p2, |_, _| 0.0);
    let (mut z, mut x) = (z, x);
    // Row-major draw order keeps the stream layout independent of storage.
    for i in 0..n {
        for k in 0..p1 {
            z[(i, k)] = if rng.random::<f64>() > 0.75 { 1.0 } else { 0.0 };
        }
        for l in 0..p2 {
            x[(i, l)] = rng.random::<f64>() - 0.5;
        }
    }
    let mu = truth.mean_response(&z, &x);
    let y: Vec<f64> = mu
        .iter()
        .map(|m| m + spec.sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let ds = Dataset::new(y, z, x, ColumnNames::generic(p1, p2))?;
    Ok((ds, truth))
}

/// Numerators and denominators of the ten selection percentages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionCounts {
    /// `(hits, reference size)` per metric, in [`METRIC_NAMES`] order.
    pub counts: [(usize, usize); 10],
}

/// Column order of the selection tables.
pub const METRIC_NAMES: [&str; 10] =
    ["corrZ", "corrZ0", "corrL", "corrN", "corrLN", "corrX0", "Zto0", "LtoN", "NtoL", "Xto0"];

impl SelectionCounts {
    pub fn add(&mut self, other: &SelectionCounts) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.0 += b.0;
            a.1 += b.1;
        }
    }

    /// Percentages; `None` where the reference set is empty.
    pub fn percentages(&self) -> [Option<f64>; 10] {
        self.counts.map(|(h, d)| (d > 0).then(|| 100.0 * h as f64 / d as f64))
    }
}

/// Selection accuracy of `est` against `truth` over `p1` Z and `p2` X indices.
///
/// Reference sets: corrZ and Zto0 use the active Z set; corrZ0 the inactive
/// Z set; corrL and LtoN the pure-linear X set; corrN and NtoL the pure
/// nonlinear set; corrLN the linear-plus-nonlinear set; corrX0 the inactive X
/// set; Xto0 the active X set. LtoN counts pure-linear indices given a
/// nonlinear part, NtoL pure-nonlinear indices given a linear part.
pub fn selection_metrics(truth: &ModelStructure, est: &ModelStructure, p1: usize, p2: usize) -> SelectionCounts {
    let has = |v: &[usize], i: usize| v.contains(&i);
    let t_active = truth.s_x_active();
    let e_active = est.s_x_active();
    let e_nonlin = est.s_x_nonlinear();
    let e_lin = est.s_x_linear();
    let z_inactive: Vec<usize> = (0..p1).filter(|k| !has(&truth.s_z, *k)).collect();
    let x_inactive: Vec<usize> = (0..p2).filter(|l| !has(&t_active, *l)).collect();
    let count = |refset: &[usize], pred: &dyn Fn(usize) -> bool| {
        (refset.iter().filter(|&&i| pred(i)).count(), refset.len())
    };
    SelectionCounts {
        counts: [
            count(&truth.s_z, &|k| has(&est.s_z, k)),
            count(&z_inactive, &|k| !has(&est.s_z, k)),
            count(&truth.s_x_pl, &|l| has(&est.s_x_pl, l)),
            count(&truth.s_x_pn, &|l| has(&est.s_x_pn, l)),
            count(&truth.s_x_ln, &|l| has(&est.s_x_ln, l)),
            count(&x_inactive, &|l| !has(&e_active, l)),
            count(&truth.s_z, &|k| !has(&est.s_z, k)),
            count(&truth.s_x_pl, &|l| has(&e_nonlin, l)),
            count(&truth.s_x_pn, &|l| has(&e_lin, l)),
            count(&t_active, &|l| !has(&e_active, l)),
        ],
    }
}

/// `mean (est - truth)^2`.
pub fn amse(estimate: &[f64], truth: &[f64]) -> f64 {
    estimate.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).sum::<f64>() / estimate.len() as f64
}

/// Truth of component `l` at the sample points, centered at its sample mean.
pub fn centered_truth(ds: &Dataset, truth: &Truth, l: usize) -> Vec<f64> {
    let off = ds.x_means[l];
    let raw: Vec<f64> = ds.x_col(l).iter().map(|&x| truth.phi[l].eval(x + off)).collect();
    let mu = mean(&raw);
    raw.iter().map(|v| v - mu).collect()
}

/// Estimate of component `l` at every sample point of a centered dataset:
/// SBLL for nonlinear indices, the refit line for pure-linear ones, zero
/// otherwise.
pub fn component_estimate(ds: &Dataset, model: &FittedModel, l: usize) -> Result<Vec<f64>> {
    let st = &model.structure;
    let x = ds.x_col(l);
    if st.is_nonlinear(l) {
        let y = pseudo_responses(ds, &model.refit, l)?;
        let h = rot_bandwidth(x, &y)?;
        return sbll_estimates(x, &y, h, x);
    }
    if let Some(c) = st.s_x_pl.iter().position(|&j| j == l) {
        let b = model.refit.beta_star[c];
        return Ok(x.iter().map(|v| v * b).collect());
    }
    Ok(vec![0.0; x.len()])
}

/// Seeded partition of `0..n` into `folds` near-equal disjoint folds.
pub fn cv_folds(n: usize, folds: usize, seed: Seed) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed.rng());
    let mut out = vec![Vec::new(); folds];
    for (pos, i) in idx.into_iter().enumerate() {
        out[pos % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

/// `folds`-fold cross-validated mean squared prediction error of a variant
/// on a raw dataset, averaged over folds.
pub fn cv_mspe(
    ds: &Dataset,
    cfg: &SelectionConfig,
    variant: Variant,
    truth: Option<&ModelStructure>,
    folds: usize,
    seed: Seed,
) -> Result<f64> {
    if ds.is_centered() {
        return Err(Error::AlreadyCentered);
    }
    let n = ds.n();
    if folds < 2 || n < folds {
        return Err(Error::InvalidArgs(format!("cannot split {n} rows into {folds} folds")));
    }
    let parts = cv_folds(n, folds, seed);
    let mut total = 0.0;
    for (f, test) in parts.iter().enumerate() {
        let train: Vec<usize> = (0..n).filter(|i| test.binary_search(i).is_err()).collect();
        let tr = ds.subset(&train)?;
        let te = ds.subset(test)?;
        let model = fit_variant(&tr, cfg, variant, truth).map_err(|e| fold_error(e, f))?;
        let pred = model.predict(&te.z, &te.x);
        total += amse(&pred, &te.y);
    }
    Ok(total / folds as f64)
}

fn fold_error(e: Error, fold: usize) -> Error {
    match e {
        Error::InvalidArgs(m) => Error::InvalidArgs(format!("fold {fold}: {m}")),
        Error::ModelSingular(m) => Error::ModelSingular(format!("fold {fold}: {m}")),
        other => other,
    }
}

/// Whether the centered truth lies inside the SCB at every interior sample
/// point of component `l`. Unselected nonlinear components are not covered.
pub fn scb_covers(ds: &Dataset, truth: &Truth, model: &FittedModel, l: usize, alpha: f64) -> Result<bool> {
    if !model.structure.is_nonlinear(l) {
        return Ok(false);
    }
    let curve = sbll_curve(
        ds,
        &model.refit,
        l,
        &GridSpec::SampleInterior,
        SbllOptions { alpha, bandwidth: None },
    )?;
    let t = centered_truth(ds, truth, l);
    let x = ds.x_col(l);
    let off = ds.x_means[l];
    let mut order: Vec<usize> = (0..x.len())
        .filter(|&i| x[i] + off >= curve.interior.0 && x[i] + off <= curve.interior.1)
        .collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    Ok(order
        .iter()
        .zip(0..curve.grid.len())
        .all(|(&i, g)| t[i] >= curve.scb_lo[g] && t[i] <= curve.scb_hi[g]))
}

/// Largest interior distance between the SBLL curve of component `l` and
/// the oracle curve built from the true nuisance components, both at the
/// feasible rule-of-thumb bandwidth.
pub fn oracle_sup_distance(ds: &Dataset, truth: &Truth, model: &FittedModel, l: usize) -> Result<f64> {
    if !model.structure.is_nonlinear(l) {
        return Err(Error::IndexNotNonlinear(l));
    }
    let y = pseudo_responses(ds, &model.refit, l)?;
    let h = rot_bandwidth(ds.x_col(l), &y)?;
    let opts = SbllOptions { alpha: 0.05, bandwidth: Some(h) };
    let feasible = sbll_curve(ds, &model.refit, l, &GridSpec::SampleInterior, opts)?;
    let oracle = oracle_sbll(ds, truth, l, &GridSpec::SampleInterior, opts)?;
    Ok(feasible
        .estimate
        .iter()
        .zip(&oracle.estimate)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Experiment configuration (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p1: usize,
    pub p2: usize,
    pub sigma: f64,
    pub scenario: Scenario,
    pub reps: usize,
    pub seed: u64,
    pub variants: Vec<Variant>,
    pub selection: SelectionConfig,
    /// Variants whose CV-MSPE is computed (empty disables CV).
    pub cv_variants: Vec<Variant>,
    pub cv_folds: usize,
    /// Compute SCB coverage for the nonlinear components.
    pub coverage: bool,
    pub alpha: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 300,
            p1: 200,
            p2: 200,
            sigma: 0.5,
            scenario: Scenario::Aplm,
            reps: 100,
            seed: 1,
            variants: vec![Variant::Smile, Variant::Saplm, Variant::Slm, Variant::Oracle],
            selection: SelectionConfig::default(),
            cv_variants: vec![],
            cv_folds: 10,
            coverage: false,
            alpha: 0.05,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Checks everything a replicate would otherwise reject.
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidArgs("reps must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgs(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !self.cv_variants.is_empty() && (self.cv_folds < 2 || self.cv_folds > self.n) {
            return Err(Error::InvalidArgs(format!("cv_folds must be in 2..=n, got {}", self.cv_folds)));
        }
        if let Some(v) = self.cv_variants.iter().find(|v| !self.variants.contains(v)) {
            return Err(Error::InvalidArgs(format!("cv variant {} is not among the fitted variants", v.name())));
        }
        self.dgp(0).validate()
    }

    pub fn dgp(&self, rep: usize) -> DgpSpec {
        DgpSpec {
            n: self.n,
            p1: self.p1,
            p2: self.p2,
            sigma: self.sigma,
            scenario: self.scenario,
            seed: Seed(self.seed).derive(rep as u64),
        }
    }
}

/// Per-replicate, per-variant results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub rep: usize,
    pub variant: Variant,
    pub structure: ModelStructure,
    pub selection: SelectionCounts,
    /// `(alpha_1 - truth)^2`, zero estimate when unselected; `None` if `p1 = 0`.
    pub sq_err_alpha1: Option<f64>,
    /// `(beta_1 - truth)^2` from the pure-linear refit coefficient; `None`
    /// for variants without linear X terms.
    pub sq_err_beta1: Option<f64>,
    /// AMSE of the first three components.
    pub amse: [f64; 3],
    pub cv_mspe: Option<f64>,
    /// SCB coverage of the truly nonlinear components among the first three.
    pub covered: [Option<bool>; 3],
}

fn replicate(cfg: &ExperimentConfig, rep: usize) -> Result<Vec<ReplicateRecord>> {
    let spec = cfg.dgp(rep);
    let (raw, truth) = generate(&spec)?;
    let ds = center(&raw)?;
    let mut out = Vec::with_capacity(cfg.variants.len());
    for &variant in &cfg.variants {
        let model = fit_variant(&ds, &cfg.selection, variant, Some(&truth.structure))?;
        let st = &model.structure;
        let sq_err_alpha1 = (cfg.p1 > 0).then(|| {
            let a = st.s_z.iter().position(|&k| k == 0).map_or(0.0, |c| model.refit.alpha_star[c]);
            (a - truth.alpha[0]).powi(2)
        });
        let b = st.s_x_pl.iter().position(|&l| l == 0).map_or(0.0, |c| model.refit.beta_star[c]);
        let mut amse_v = [0.0; 3];
        for (l, slot) in amse_v.iter_mut().enumerate() {
            let est = component_estimate(&ds, &model, l)?;
            *slot = amse(&est, &centered_truth(&ds, &truth, l));
        }
        let cv = if cfg.cv_variants.contains(&variant) {
            Some(cv_mspe(&raw, &cfg.selection, variant, Some(&truth.structure), cfg.cv_folds, spec.seed)?)
        } else {
            None
        };
        let mut covered = [None; 3];
        if cfg.coverage {
            for (l, slot) in covered.iter_mut().enumerate() {
                if truth.structure.is_nonlinear(l) {
                    *slot = Some(scb_covers(&ds, &truth, &model, l, cfg.alpha)?);
                }
            }
        }
        out.push(ReplicateRecord {
            rep,
            variant,
            structure: st.clone(),
            selection: selection_metrics(&truth.structure, st, cfg.p1, cfg.p2),
            sq_err_alpha1,
            sq_err_beta1: variant.has_linear_x().then(|| (b - truth.beta[0]).powi(2)),
            amse: amse_v,
            cv_mspe: cv,
            covered,
        });
    }
    Ok(out)
}

/// Aggregates for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub selection: [Option<f64>; 10],
    pub mse_alpha1: Option<f64>,
    pub mse_beta1: Option<f64>,
    pub amse: [f64; 3],
    pub cv_mspe: Option<f64>,
    pub coverage: [Option<f64>; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub records: Vec<ReplicateRecord>,
    pub summaries: Vec<VariantSummary>,
}

fn mean_of(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (c > 0).then(|| s / c as f64)
}

fn summarize(variant: Variant, recs: &[&ReplicateRecord]) -> VariantSummary {
    let mut counts = SelectionCounts::default();
    for r in recs {
        counts.add(&r.selection);
    }
    let coverage = [0, 1, 2].map(|l| {
        mean_of(recs.iter().filter_map(|r| r.covered[l]).map(|c| if c { 100.0 } else { 0.0 }))
    });
    VariantSummary {
        variant,
        selection: counts.percentages(),
        mse_alpha1: mean_of(recs.iter().filter_map(|r| r.sq_err_alpha1)),
        mse_beta1: mean_of(recs.iter().filter_map(|r| r.sq_err_beta1)),
        amse: [0, 1, 2].map(|l| mean_of(recs.iter().map(|r| r.amse[l])).unwrap_or(f64::NAN)),
        cv_mspe: mean_of(recs.iter().filter_map(|r| r.cv_mspe)),
        coverage,
    }
}

/// Runs every replicate (in parallel) and aggregates per variant. The
/// result does not depend on the thread schedule.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let per_rep: Vec<Result<Vec<ReplicateRecord>>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| replicate(cfg, rep).map_err(|e| Error::Replicate { rep, source: Box::new(e) }))
        .collect();
    let mut records = Vec::new();
    for r in per_rep {
        records.extend(r?);
    }
    let summaries = cfg
        .variants
        .iter()
        .map(|&v| {
            let recs: Vec<&ReplicateRecord> = records.iter().filter(|r| r.variant == v).collect();
            summarize(v, &recs)
        })
        .collect();
    Ok(ExperimentResult { config: cfg.clone(), records, summaries })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

/// Writes `table_selection.csv`, `table_estimation.csv`,
/// `table_coverage.csv`, `replicates.csv` and `summary.json` into `dir`.
pub fn write_experiment(res: &ExperimentResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_path(dir.join("table_selection.csv"))?;
    let mut header = vec!["method".to_string()];
    header.extend(METRIC_NAMES.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for s in &res.summaries {
        let mut row = vec![s.variant.name().to_string()];
        row.extend(s.selection.iter().map(|v| fmt_opt(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("table_estimation.csv"))?;
    w.write_record(["method", "MSE_alpha1", "MSE_beta1", "AMSE_phi1", "AMSE_phi2", "AMSE_phi3", "CV_MSPE"])?;
    for s in &res.summaries {
        w.write_record([
            s.variant.name().to_string(),
            fmt_opt(s.mse_alpha1),
            fmt_opt(s.mse_beta1),
            fmt_opt(Some(s.amse[0])),
            fmt_opt(Some(s.amse[1])),
            fmt_opt(Some(s.amse[2])),
            fmt_opt(s.cv_mspe),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("table_coverage.csv"))?;
    w.write_record(["method", "phi1", "phi2", "phi3"])?;
    for s in &res.summaries {
        let mut row = vec![s.variant.name().to_string()];
        row.extend(s.coverage.iter().map(|v| fmt_opt(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("replicates.csv"))?;
    let mut header: Vec<String> = ["rep", "method"].iter().map(|s| s.to_string()).collect();
    header.extend(METRIC_NAMES.iter().map(|s| format!("{s}_hits")));
    header.extend(
        ["sq_err_alpha1", "sq_err_beta1", "amse_phi1", "amse_phi2", "amse_phi3", "cv_mspe", "cov_phi1", "cov_phi2", "cov_phi3"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for r in &res.records {
        let mut row = vec![r.rep.to_string(), r.variant.name().to_string()];
        row.extend(r.selection.counts.iter().map(|(h, d)| format!("{h}/{d}")));
        row.push(fmt_opt(r.sq_err_alpha1));
        row.push(fmt_opt(r.sq_err_beta1));
        row.extend(r.amse.iter().map(|v| fmt_opt(Some(*v))));
        row.push(fmt_opt(r.cv_mspe));
        row.extend(r.covered.iter().map(|c| c.map_or("NA".into(), |b| (b as u8).to_string())));
        w.write_record(&row)?;
    }
    w.flush()?;

    #[derive(Serialize)]
    struct Summary<'a> {
        config: &'a ExperimentConfig,
        summaries: &'a [VariantSummary],
    }
    let text = serde_json::to_string_pretty(&Summary { config: &res.config, summaries: &res.summaries })?;
    std::fs::write(dir.join("summary.json"), text + "\n")?;
    Ok(())
}
