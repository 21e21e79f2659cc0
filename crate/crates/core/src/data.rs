//! Dataset representation, CSV ingestion and centering.
//!
//! A [`Dataset`] holds a response `y`, a block of linear covariates `z`
//! (typically binary, `p1` columns) and a block of continuous covariates `x`
//! (`p2` columns). The continuous block and the response are centered before
//! selection; the offsets are kept so that predictions can be mapped back.

use std::collections::HashSet;
use std::hash::{Hash, Hasher};
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seed for every random stream in the crate.
///
/// Streams come from ChaCha20, so a seed reproduces the same draws on every
/// platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

impl Seed {
    pub fn rng(self) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(self.0)
    }

    /// Stream for replicate `index`: `seed + index`.
    pub fn derive(self, index: u64) -> Seed {
        Seed(self.0.wrapping_add(index))
    }
}

/// Names of the response and covariate columns, in role order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ColumnNames {
    pub response: String,
    pub z: Vec<String>,
    pub x: Vec<String>,
}

impl ColumnNames {
    /// `y`, `z_1..z_p1`, `x_1..x_p2`.
    pub fn generic(p1: usize, p2: usize) -> Self {
        Self {
            response: "y".into(),
            z: (1..=p1).map(|k| format!("z_{k}")).collect(),
            x: (1..=p2).map(|l| format!("x_{l}")).collect(),
        }
    }
}

/// Assignment of CSV columns to roles. Columns not named are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleMap {
    pub response: String,
    #[serde(default)]
    pub z: Vec<String>,
    #[serde(default)]
    pub x: Vec<String>,
}

impl RoleMap {
    /// Reads the JSON sidecar `{"response": "...", "z": [...], "x": [...]}`.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Derives roles from header prefixes: `y` is the response, `z_*` and
    /// `x_*` are covariates, anything else is ignored.
    pub fn from_prefixes(header: &[String]) -> Result<Self> {
        let response = header
            .iter()
            .find(|h| h.as_str() == "y")
            .cloned()
            .ok_or_else(|| Error::MissingColumn("y".into()))?;
        let z: Vec<String> = header.iter().filter(|h| h.starts_with("z_")).cloned().collect();
        let x: Vec<String> = header.iter().filter(|h| h.starts_with("x_")).cloned().collect();
        if z.is_empty() && x.is_empty() {
            return Err(Error::MissingColumn("z_* or x_*".into()));
        }
        Ok(Self { response, z, x })
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for name in std::iter::once(&self.response).chain(&self.z).chain(&self.x) {
            if !seen.insert(name) {
                return Err(Error::InvalidArgs(format!(
                    "column `{name}` assigned to more than one role"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub y: Vec<f64>,
    /// `n x p1`, never centered or scaled.
    pub z: DMatrix<f64>,
    /// `n x p2`.
    pub x: DMatrix<f64>,
    pub y_mean: f64,
    pub x_means: Vec<f64>,
    pub column_names: ColumnNames,
    centered: bool,
}

impl Dataset {
    pub fn new(
        y: Vec<f64>,
        z: DMatrix<f64>,
        x: DMatrix<f64>,
        column_names: ColumnNames,
    ) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::InvalidArgs(format!("need n >= 2, got {n}")));
        }
        if z.nrows() != n || x.nrows() != n {
            return Err(Error::InvalidArgs(format!(
                "row mismatch: y has {n}, z has {}, x has {}",
                z.nrows(),
                x.nrows()
            )));
        }
        if column_names.z.len() != z.ncols() || column_names.x.len() != x.ncols() {
            return Err(Error::InvalidArgs("column names do not match matrix widths".into()));
        }
        let check = |vals: &[f64], name: &str| -> Result<()> {
            match vals.iter().position(|v| !v.is_finite()) {
                Some(row) => Err(Error::NonNumericCell { row, col: name.to_string() }),
                None => Ok(()),
            }
        };
        check(&y, &column_names.response)?;
        for (k, name) in column_names.z.iter().enumerate() {
            check(col(&z, k), name)?;
        }
        for (l, name) in column_names.x.iter().enumerate() {
            check(col(&x, l), name)?;
        }
        let p2 = x.ncols();
        Ok(Self {
            y,
            z,
            x,
            y_mean: 0.0,
            x_means: vec![0.0; p2],
            column_names,
            centered: false,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p1(&self) -> usize {
        self.z.ncols()
    }

    pub fn p2(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn z_col(&self, k: usize) -> &[f64] {
        col(&self.z, k)
    }

    pub fn x_col(&self, l: usize) -> &[f64] {
        col(&self.x, l)
    }

    /// Rows `idx` of this dataset, uncentered copies of the raw values.
    ///
    /// Panics if the dataset is centered; subsetting is done on raw data.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        assert!(!self.centered, "subset() works on raw data");
        let y = idx.iter().map(|&i| self.y[i]).collect();
        let z = DMatrix::from_fn(idx.len(), self.p1(), |i, k| self.z[(idx[i], k)]);
        let x = DMatrix::from_fn(idx.len(), self.p2(), |i, l| self.x[(idx[i], l)]);
        Dataset::new(y, z, x, self.column_names.clone())
    }

    /// Stable 64-bit fingerprint of every value, used for reproducibility checks.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for v in self.y.iter().chain(self.z.iter()).chain(self.x.iter()) {
            v.to_bits().hash(&mut h);
        }
        self.y_mean.to_bits().hash(&mut h);
        h.finish()
    }
}

/// Contiguous slice of column `j` of a column-major matrix.
pub(crate) fn col(m: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = m.nrows();
    &m.as_slice()[j * n..(j + 1) * n]
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Centers `y` and every column of `x`; `z` is left untouched.
pub fn center(ds: &Dataset) -> Result<Dataset> {
    if ds.centered {
        return Err(Error::AlreadyCentered);
    }
    let mut out = ds.clone();
    let y_mean = mean(&out.y);
    out.y.iter_mut().for_each(|v| *v -= y_mean);
    out.y_mean = y_mean;
    let n = out.n();
    for l in 0..out.p2() {
        let m = mean(col(&out.x, l));
        out.x.as_mut_slice()[l * n..(l + 1) * n]
            .iter_mut()
            .for_each(|v| *v -= m);
        out.x_means[l] = m;
    }
    out.centered = true;
    Ok(out)
}

/// Loads a CSV with a header row, assigning columns by `roles`.
pub fn load_csv(path: impl AsRef<Path>, roles: &RoleMap) -> Result<Dataset> {
    roles.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let y_idx = find(&roles.response)?;
    let z_idx = roles.z.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let x_idx = roles.x.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut y = Vec::new();
    let mut zvals: Vec<Vec<f64>> = vec![Vec::new(); z_idx.len()];
    let mut xvals: Vec<Vec<f64>> = vec![Vec::new(); x_idx.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = |j: usize| -> Result<f64> {
            rec.get(j)
                .map(str::trim)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumericCell { row, col: header[j].clone() })
        };
        y.push(cell(y_idx)?);
        for (dst, &j) in zvals.iter_mut().zip(&z_idx) {
            dst.push(cell(j)?);
        }
        for (dst, &j) in xvals.iter_mut().zip(&x_idx) {
            dst.push(cell(j)?);
        }
    }
    if y.is_empty() {
        return Err(Error::EmptyFile);
    }
    let n = y.len();
    let z = DMatrix::from_iterator(n, zvals.len(), zvals.into_iter().flatten());
    let x = DMatrix::from_iterator(n, xvals.len(), xvals.into_iter().flatten());
    let names = ColumnNames {
        response: roles.response.clone(),
        z: roles.z.clone(),
        x: roles.x.clone(),
    };
    Dataset::new(y, z, x, names)
}

/// Writes the raw values with a header in role order.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![ds.column_names.response.clone()];
    header.extend(ds.column_names.z.iter().cloned());
    header.extend(ds.column_names.x.iter().cloned());
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec = vec![ds.y[i].to_string()];
        rec.extend((0..ds.p1()).map(|k| ds.z[(i, k)].to_string()));
        rec.extend((0..ds.p2()).map(|l| ds.x[(i, l)].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads just the header row of a CSV file.
pub fn read_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    Ok(rdr.headers()?.iter().map(|s| s.trim().to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn toy(y: Vec<f64>, x: Vec<f64>) -> Dataset {
        let n = y.len();
        Dataset::new(
            y,
            DMatrix::zeros(n, 0),
            DMatrix::from_column_slice(n, 1, &x),
            ColumnNames { response: "y".into(), z: vec![], x: vec!["x".into()] },
        )
        .unwrap()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn roles() -> RoleMap {
        RoleMap { response: "y".into(), z: vec!["z".into()], x: vec!["x".into()] }
    }

    #[test]
    fn loads_three_rows() {
        let f = write_tmp("y,z,x\n1,0,0.5\n2,1,0.1\n3,0,0.9\n");
        let ds = load_csv(f.path(), &roles()).unwrap();
        assert_eq!((ds.n(), ds.p1(), ds.p2()), (3, 1, 1));
        assert_eq!(ds.y, vec![1.0, 2.0, 3.0]);
        assert_eq!(ds.z_col(0), &[0.0, 1.0, 0.0]);
        assert!(!ds.is_centered());
    }

    #[test]
    fn blank_cell_is_non_numeric() {
        let f = write_tmp("y,z,x\n1,0,0.5\n2,,0.1\n");
        match load_csv(f.path(), &roles()) {
            Err(Error::NonNumericCell { row, col }) => {
                assert_eq!(row, 1);
                assert_eq!(col, "z");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_empty_file() {
        let f = write_tmp("y,x\n1,2\n");
        assert!(matches!(load_csv(f.path(), &roles()), Err(Error::MissingColumn(c)) if c == "z"));
        let f = write_tmp("y,z,x\n");
        assert!(matches!(load_csv(f.path(), &roles()), Err(Error::EmptyFile)));
    }

    #[test]
    fn prefix_roles() {
        let header: Vec<String> =
            ["id", "y", "z_a", "x_b", "x_c"].iter().map(|s| s.to_string()).collect();
        let r = RoleMap::from_prefixes(&header).unwrap();
        assert_eq!(r.z, vec!["z_a"]);
        assert_eq!(r.x, vec!["x_b", "x_c"]);
    }

    #[test]
    fn centering_examples() {
        let ds = center(&toy(vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 6.0])).unwrap();
        assert_eq!(ds.y, vec![-1.5, -0.5, 0.5, 1.5]);
        assert_eq!(ds.x_col(0), &[-2.0, -1.0, 0.0, 3.0]);
        assert_eq!(ds.x_means, vec![3.0]);

        let ds = center(&toy(vec![1.0, 2.0, 3.0], vec![0.5, -0.5, 0.0])).unwrap();
        assert_eq!(ds.y, vec![-1.0, 0.0, 1.0]);
        assert_eq!(ds.y_mean, 2.0);
        assert_eq!(ds.x_col(0), &[0.5, -0.5, 0.0]);
        assert_eq!(ds.x_means, vec![0.0]);
    }

    #[test]
    fn center_twice_is_rejected_and_z_untouched() {
        let n = 3;
        let ds = Dataset::new(
            vec![1.0, 2.0, 4.0],
            DMatrix::from_column_slice(n, 1, &[1.0, 1.0, 0.0]),
            DMatrix::from_column_slice(n, 1, &[0.1, 0.2, 0.6]),
            ColumnNames::generic(1, 1),
        )
        .unwrap();
        let c = center(&ds).unwrap();
        assert_eq!(c.z_col(0), &[1.0, 1.0, 0.0]);
        assert!(matches!(center(&c), Err(Error::AlreadyCentered)));
    }

    #[test]
    fn n_must_be_two() {
        assert!(Dataset::new(
            vec![1.0],
            DMatrix::zeros(1, 0),
            DMatrix::zeros(1, 0),
            ColumnNames::generic(0, 0)
        )
        .is_err());
    }

    #[test]
    fn seed_streams() {
        use rand::Rng;
        let a: u64 = Seed(7).rng().random();
        let b: u64 = Seed(7).rng().random();
        let c: u64 = Seed(7).derive(1).rng().random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
