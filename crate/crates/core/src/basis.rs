//! Knot placement and centered, standardized spline design blocks.
//!
//! Order 1 gives the piecewise-constant basis used for selection; orders 2 to
//! 4 give B-spline bases (order 4 is cubic) used for refitting. Every block
//! column has empirical mean 0 and empirical second moment 1 on the sample it
//! was built from, and the block remembers the transformation so that new
//! points can be mapped consistently.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interior knots plus the boundary `(a, b)` of the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    pub interior: Vec<f64>,
    pub boundary: (f64, f64),
}

impl KnotVector {
    pub fn new(interior: Vec<f64>, boundary: (f64, f64)) -> Result<Self> {
        let (a, b) = boundary;
        if interior.is_empty() {
            return Err(Error::InvalidN(0));
        }
        if !(a < b) {
            return Err(Error::DegenerateColumn(format!("boundary ({a}, {b}) is empty")));
        }
        let mut prev = a;
        for &k in &interior {
            if !(k > prev) {
                return Err(Error::DegenerateColumn(format!(
                    "knots not strictly increasing at {k}"
                )));
            }
            prev = k;
        }
        if !(b > prev) {
            return Err(Error::DegenerateColumn(format!("last knot {prev} not below {b}")));
        }
        Ok(Self { interior, boundary })
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    /// `a, interior..., b`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.interior.len() + 2);
        v.push(self.boundary.0);
        v.extend_from_slice(&self.interior);
        v.push(self.boundary.1);
        v
    }

    /// Index of the bin holding `x`, `0..=N`. Bins are left-closed, the last
    /// one is closed at `b`; points outside `[a, b]` go to the end bins.
    pub fn bin_of(&self, x: f64) -> usize {
        self.interior.partition_point(|&k| k <= x)
    }

    /// Knot sequence with each boundary repeated `d` times.
    pub fn extended(&self, d: usize) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.interior.len() + 2 * d);
        t.extend(std::iter::repeat_n(self.boundary.0, d));
        t.extend_from_slice(&self.interior);
        t.extend(std::iter::repeat_n(self.boundary.1, d));
        t
    }
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

fn sorted_checked(x_col: &[f64], n_interior: usize) -> Result<Vec<f64>> {
    if n_interior == 0 {
        return Err(Error::InvalidN(n_interior));
    }
    let mut s = x_col.to_vec();
    s.sort_by(f64::total_cmp);
    let distinct = 1 + s.windows(2).filter(|w| w[1] > w[0]).count();
    if s.is_empty() || distinct < n_interior + 2 {
        return Err(Error::DegenerateColumn(format!(
            "{distinct} distinct values, need at least {}",
            n_interior + 2
        )));
    }
    Ok(s)
}

/// Interior knots at the `j/(N+1)` sample quantiles, boundary at the sample range.
pub fn place_knots(x_col: &[f64], n_interior: usize) -> Result<KnotVector> {
    let s = sorted_checked(x_col, n_interior)?;
    let interior = (1..=n_interior)
        .map(|j| quantile_sorted(&s, j as f64 / (n_interior + 1) as f64))
        .collect();
    KnotVector::new(interior, (s[0], s[s.len() - 1]))
}

/// Interior knots evenly spaced over the sample range.
pub fn place_knots_uniform(x_col: &[f64], n_interior: usize) -> Result<KnotVector> {
    let s = sorted_checked(x_col, n_interior)?;
    let (a, b) = (s[0], s[s.len() - 1]);
    let interior = (1..=n_interior)
        .map(|j| a + (b - a) * j as f64 / (n_interior + 1) as f64)
        .collect();
    KnotVector::new(interior, (a, b))
}

/// How interior knots are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotPlacement {
    #[default]
    Quantile,
    Uniform,
}

impl KnotPlacement {
    pub fn place(self, x_col: &[f64], n_interior: usize) -> Result<KnotVector> {
        match self {
            KnotPlacement::Quantile => place_knots(x_col, n_interior),
            KnotPlacement::Uniform => place_knots_uniform(x_col, n_interior),
        }
    }
}

/// `min(floor(n^{max(1/(2d), 4/(10d-5))} ln n), floor(n/(4s))) + 1`.
pub fn rule_of_thumb_knots(n: usize, d: usize, s: usize) -> Result<usize> {
    if n < 8 || d < 2 || s < 1 {
        return Err(Error::InvalidArgs(format!(
            "rule_of_thumb_knots needs n >= 8, d >= 2, s >= 1 (got {n}, {d}, {s})"
        )));
    }
    let nf = n as f64;
    let df = d as f64;
    let expo = (1.0 / (2.0 * df)).max(4.0 / (10.0 * df - 5.0));
    let a = (nf.powf(expo) * nf.ln()).floor() as usize;
    let b = n / (4 * s);
    Ok(a.min(b) + 1)
}

/// A centered, standardized spline design block for one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisBlock {
    /// `n x M` design on the training sample.
    #[serde(skip)]
    pub values: DMatrix<f64>,
    pub order: usize,
    pub knots: KnotVector,
    /// Norms of the centered columns before standardization.
    pub col_norms: Vec<f64>,
    /// Means of the raw columns (zero for order 1).
    pub col_means: Vec<f64>,
    /// Order 1 only: weight on the previous bin indicator, `c_J / c_{J-1}`.
    pub bin_ratios: Vec<f64>,
}

impl BasisBlock {
    pub fn ncols(&self) -> usize {
        self.col_norms.len()
    }

    /// Design rows for new points using the training-sample transformation.
    /// Points are clamped to the boundary.
    pub fn transform(&self, x: &[f64]) -> DMatrix<f64> {
        self.derivative(x, 0)
    }

    /// `k`-th derivative of the block columns at `x`. For order 1 only `k = 0`
    /// is meaningful; higher derivatives are zero there.
    pub fn derivative(&self, x: &[f64], k: usize) -> DMatrix<f64> {
        let m = self.ncols();
        let mut out = DMatrix::zeros(x.len(), m);
        if self.order == 1 {
            if k > 0 {
                return out;
            }
            for (i, &xi) in x.iter().enumerate() {
                let bin = self.knots.bin_of(xi);
                for j in 0..m {
                    let jj = j + 1;
                    let v = if bin == jj {
                        1.0
                    } else if bin == jj - 1 {
                        -self.bin_ratios[j]
                    } else {
                        0.0
                    };
                    out[(i, j)] = v / self.col_norms[j];
                }
            }
            return out;
        }
        let t = self.knots.extended(self.order);
        let (a, b) = self.knots.boundary;
        for (i, &xi) in x.iter().enumerate() {
            let xc = xi.clamp(a, b);
            let raw = bspline_derivs(&t, self.order, xc, k);
            for j in 0..m {
                let centered = if k == 0 { raw[j + 1] - self.col_means[j] } else { raw[j + 1] };
                out[(i, j)] = centered / self.col_norms[j];
            }
        }
        out
    }
}

/// Values of all `len(t) - m` order-`m` B-splines at `x` via Cox-de Boor.
/// The right end `x = t_last` is assigned to the last non-degenerate interval.
pub fn bspline_values(t: &[f64], m: usize, x: f64) -> Vec<f64> {
    let last = t[t.len() - 1];
    let mut cur: Vec<f64> = (0..t.len() - 1)
        .map(|i| {
            let inside = t[i] <= x && x < t[i + 1];
            let right_end = x == last && t[i] < t[i + 1] && t[i + 1] == last;
            if inside || right_end {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for o in 2..=m {
        let next: Vec<f64> = (0..t.len() - o)
            .map(|i| {
                let mut v = 0.0;
                let d1 = t[i + o - 1] - t[i];
                if d1 > 0.0 {
                    v += (x - t[i]) / d1 * cur[i];
                }
                let d2 = t[i + o] - t[i + 1];
                if d2 > 0.0 {
                    v += (t[i + o] - x) / d2 * cur[i + 1];
                }
                v
            })
            .collect();
        cur = next;
    }
    cur
}

/// `k`-th derivative of all order-`d` B-splines on knots `t` at `x`.
pub fn bspline_derivs(t: &[f64], d: usize, x: f64, k: usize) -> Vec<f64> {
    if k >= d {
        return vec![0.0; t.len() - d];
    }
    let mut cur = bspline_values(t, d - k, x);
    for m in (d - k + 1)..=d {
        let next: Vec<f64> = (0..t.len() - m)
            .map(|i| {
                let mut v = 0.0;
                let d1 = t[i + m - 1] - t[i];
                if d1 > 0.0 {
                    v += cur[i] / d1;
                }
                let d2 = t[i + m] - t[i + 1];
                if d2 > 0.0 {
                    v -= cur[i + 1] / d2;
                }
                (m - 1) as f64 * v
            })
            .collect();
        cur = next;
    }
    cur
}

fn bin_counts(x_col: &[f64], knots: &KnotVector) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; knots.n_interior() + 1];
    for &x in x_col {
        counts[knots.bin_of(x)] += 1;
    }
    match counts.iter().position(|&c| c == 0) {
        Some(j) => Err(Error::EmptyBin(j)),
        None => Ok(counts),
    }
}

fn rms(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    (v.map(|a| a * a).sum::<f64>() / n as f64).sqrt()
}

/// Piecewise-constant block: `b_J = I_J - (c_J / c_{J-1}) I_{J-1}` for
/// `J = 1..N`, divided by its empirical norm. `c_J` is the bin count, which
/// makes every column exactly mean zero.
pub fn constant_basis(x_col: &[f64], knots: &KnotVector) -> Result<BasisBlock> {
    let n = x_col.len();
    let counts = bin_counts(x_col, knots)?;
    let nk = knots.n_interior();
    let bins: Vec<usize> = x_col.iter().map(|&x| knots.bin_of(x)).collect();
    let ratios: Vec<f64> = (1..=nk).map(|j| counts[j] as f64 / counts[j - 1] as f64).collect();
    let mut values = DMatrix::zeros(n, nk);
    let mut norms = Vec::with_capacity(nk);
    for j in 0..nk {
        let jj = j + 1;
        let raw = |b: usize| {
            if b == jj {
                1.0
            } else if b == jj - 1 {
                -ratios[j]
            } else {
                0.0
            }
        };
        // From bin counts, so the value does not depend on row order.
        let ss = counts[jj] as f64 + ratios[j] * ratios[j] * counts[jj - 1] as f64;
        let norm = (ss / n as f64).sqrt();
        for (i, &b) in bins.iter().enumerate() {
            values[(i, j)] = raw(b) / norm;
        }
        norms.push(norm);
    }
    Ok(BasisBlock {
        values,
        order: 1,
        knots: knots.clone(),
        col_norms: norms,
        col_means: vec![0.0; nk],
        bin_ratios: ratios,
    })
}

/// Order-`d` B-spline block (`d` in 2..=4): the first of the `N + d` raw
/// columns is dropped, the rest are centered and scaled, giving `N + d - 1`.
pub fn bspline_basis(x_col: &[f64], knots: &KnotVector, d: usize) -> Result<BasisBlock> {
    if !(2..=4).contains(&d) {
        return Err(Error::UnsupportedOrder(d));
    }
    let n = x_col.len();
    bin_counts(x_col, knots)?;
    let t = knots.extended(d);
    let m = knots.n_interior() + d - 1;
    let mut values = DMatrix::zeros(n, m);
    for (i, &x) in x_col.iter().enumerate() {
        let raw = bspline_values(&t, d, x);
        for j in 0..m {
            values[(i, j)] = raw[j + 1];
        }
    }
    let mut means = Vec::with_capacity(m);
    let mut norms = Vec::with_capacity(m);
    for j in 0..m {
        let mut c = values.column_mut(j);
        let mu = c.sum() / n as f64;
        c.add_scalar_mut(-mu);
        let norm = rms(c.iter().copied(), n);
        if !(norm > 0.0) {
            return Err(Error::DegenerateColumn(format!("basis column {j} is constant")));
        }
        c.scale_mut(1.0 / norm);
        means.push(mu);
        norms.push(norm);
    }
    Ok(BasisBlock {
        values,
        order: d,
        knots: knots.clone(),
        col_norms: norms,
        col_means: means,
        bin_ratios: Vec::new(),
    })
}

/// Dispatches on the order: 1 gives [`constant_basis`], 2..=4 [`bspline_basis`].
pub fn spline_basis(x_col: &[f64], knots: &KnotVector, d: usize) -> Result<BasisBlock> {
    match d {
        1 => constant_basis(x_col, knots),
        _ => bspline_basis(x_col, knots, d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn check_standardized(b: &BasisBlock) {
        let n = b.values.nrows() as f64;
        for c in b.values.column_iter() {
            assert!(c.sum().abs() <= n * 1e-10);
            assert_abs_diff_eq!(c.norm_squared() / n, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn median_knot() {
        let x: Vec<f64> = (1..=9).map(f64::from).collect();
        let k = place_knots(&x, 1).unwrap();
        assert_eq!(k.interior, vec![5.0]);
        assert_eq!(k.boundary, (1.0, 9.0));
        let x: Vec<f64> = (0..=10).map(f64::from).collect();
        assert_eq!(place_knots(&x, 1).unwrap().interior, vec![5.0]);
    }

    #[test]
    fn quartile_knots_on_grid() {
        let x: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let k = place_knots(&x, 3).unwrap();
        for (got, want) in k.interior.iter().zip([0.25, 0.5, 0.75]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-14);
        }
    }

    #[test]
    fn knot_errors() {
        assert!(matches!(place_knots(&[1.0, 2.0, 3.0], 0), Err(Error::InvalidN(0))));
        assert!(matches!(
            place_knots(&[1.0, 1.0, 2.0, 2.0], 1),
            Err(Error::DegenerateColumn(_))
        ));
        assert!(matches!(place_knots(&[3.0; 5], 1), Err(Error::DegenerateColumn(_))));
    }

    #[test]
    fn constant_basis_two_bins() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let k = KnotVector::new(vec![2.5], (1.0, 4.0)).unwrap();
        let b = constant_basis(&x, &k).unwrap();
        assert_eq!(b.values.as_slice(), &[-1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn constant_basis_unequal_bins_is_centered() {
        let x = [0.0, 0.1, 0.2, 0.3, 0.6, 0.9, 1.0];
        let k = KnotVector::new(vec![0.25, 0.5], (0.0, 1.0)).unwrap();
        let b = constant_basis(&x, &k).unwrap();
        assert_eq!(b.ncols(), 2);
        check_standardized(&b);
    }

    #[test]
    fn empty_middle_bin() {
        let x = [0.0, 0.1, 0.9, 1.0];
        let k = KnotVector::new(vec![0.3, 0.6], (0.0, 1.0)).unwrap();
        assert!(matches!(constant_basis(&x, &k), Err(Error::EmptyBin(1))));
    }

    #[test]
    fn linear_bspline_by_hand() {
        // Order 2, one knot at 0.5 on [0, 1]: hats at 0, 0.5, 1.
        let x: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let k = KnotVector::new(vec![0.5], (0.0, 1.0)).unwrap();
        let b = bspline_basis(&x, &k, 2).unwrap();
        assert_eq!(b.ncols(), 2);
        check_standardized(&b);
        let hat = |c: f64, xv: f64| (1.0 - (xv - c).abs() / 0.5).max(0.0);
        for (j, c) in [0.5, 1.0].into_iter().enumerate() {
            let raw: Vec<f64> = x.iter().map(|&v| hat(c, v)).collect();
            let mu = raw.iter().sum::<f64>() / 11.0;
            let sd = (raw.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / 11.0).sqrt();
            for i in 0..11 {
                assert_abs_diff_eq!(b.values[(i, j)], (raw[i] - mu) / sd, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cubic_with_four_knots_has_seven_columns() {
        let x: Vec<f64> = (0..200).map(|i| (i as f64 * 0.618).fract()).collect();
        let k = place_knots(&x, 4).unwrap();
        let b = bspline_basis(&x, &k, 4).unwrap();
        assert_eq!(b.ncols(), 7);
        check_standardized(&b);
        let again = b.transform(&x);
        assert!((again - &b.values).amax() < 1e-12);
    }

    #[test]
    fn unsupported_order() {
        let k = KnotVector::new(vec![0.5], (0.0, 1.0)).unwrap();
        assert!(matches!(bspline_basis(&[0.0, 0.4, 0.6, 1.0], &k, 5), Err(Error::UnsupportedOrder(5))));
    }

    #[test]
    fn rule_of_thumb_examples() {
        assert_eq!(rule_of_thumb_knots(500, 4, 3).unwrap(), 14);
        assert_eq!(rule_of_thumb_knots(100, 2, 10).unwrap(), 3);
        assert_eq!(rule_of_thumb_knots(100, 2, 1000).unwrap(), 1);
        assert!(rule_of_thumb_knots(7, 2, 1).is_err());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let k = KnotVector::new(vec![0.2, 0.45, 0.7], (0.0, 1.0)).unwrap();
        let t = k.extended(4);
        let h = 1e-5;
        for &x in &[0.1, 0.33, 0.5, 0.88] {
            let d1 = bspline_derivs(&t, 4, x, 1);
            let d2 = bspline_derivs(&t, 4, x, 2);
            let p = bspline_values(&t, 4, x + h);
            let m = bspline_values(&t, 4, x - h);
            let c = bspline_values(&t, 4, x);
            for i in 0..d1.len() {
                assert_abs_diff_eq!(d1[i], (p[i] - m[i]) / (2.0 * h), epsilon = 1e-6);
                assert_abs_diff_eq!(d2[i], (p[i] - 2.0 * c[i] + m[i]) / (h * h), epsilon = 1e-3);
            }
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity(x in 0.0f64..=1.0, d in 2usize..=4) {
            let k = KnotVector::new(vec![0.15, 0.4, 0.41, 0.8], (0.0, 1.0)).unwrap();
            let v = bspline_values(&k.extended(d), d, x);
            prop_assert!(v.iter().all(|&b| b >= 0.0));
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn constant_basis_permutation_equivariant(
            seed in any::<u64>(),
            n in 40usize..80,
            shift in 1usize..39,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let k = place_knots(&x, 3).unwrap();
            let b = constant_basis(&x, &k).unwrap();
            let n = x.len();
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let xp: Vec<f64> = perm.iter().map(|&i| x[i]).collect();
            let bp = constant_basis(&xp, &k).unwrap();
            for (r, &i) in perm.iter().enumerate() {
                for j in 0..b.ncols() {
                    prop_assert_eq!(bp.values[(r, j)], b.values[(i, j)]);
                }
            }
            // piecewise constant within bins
            for i in 0..n {
                for i2 in 0..n {
                    if k.bin_of(x[i]) == k.bin_of(x[i2]) {
                        for j in 0..b.ncols() {
                            prop_assert_eq!(b.values[(i, j)], b.values[(i2, j)]);
                        }
                    }
                }
            }
        }
    }
}
