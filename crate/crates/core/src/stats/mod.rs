//! Conditional-independence tests and Gaussian BIC structure scores.

mod score;

pub use score::{bic_graph, rss_direct, BicScore, InterventionalBicScore, LocalScore};

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::ingest::Table;

/// Ridge added to the diagonal when a covariance block is singular.
pub const RIDGE: f64 = 1e-10;

/// Counters for numerical fallbacks, surfaced in run reports.
#[derive(Debug, Default)]
pub struct Warnings {
    ridge: AtomicU64,
    empty_rows: AtomicU64,
    degenerate: AtomicU64,
}

impl Warnings {
    pub fn ridge_fallbacks(&self) -> u64 {
        self.ridge.load(Ordering::Relaxed)
    }
    pub fn empty_eligible(&self) -> u64 {
        self.empty_rows.load(Ordering::Relaxed)
    }
    pub fn degenerate_columns(&self) -> u64 {
        self.degenerate.load(Ordering::Relaxed)
    }
    pub fn total(&self) -> u64 {
        self.ridge_fallbacks() + self.empty_eligible() + self.degenerate_columns()
    }
    pub(crate) fn note_ridge(&self) {
        self.ridge.fetch_add(1, Ordering::Relaxed);
    }
    pub(crate) fn note_empty(&self) {
        self.empty_rows.fetch_add(1, Ordering::Relaxed);
    }
    pub fn note_degenerate(&self) {
        self.degenerate.fetch_add(1, Ordering::Relaxed);
    }
}

/// Column-major numeric data with variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Data("dataset names and columns differ in count".into()));
        }
        if let Some(c) = columns.first() {
            if columns.iter().any(|x| x.len() != c.len()) {
                return Err(Error::Data("dataset columns differ in length".into()));
            }
        }
        Ok(Dataset { names, columns })
    }

    /// The named columns of `table`, restricted to rows where `mask` is true.
    pub fn from_table(table: &Table, names: &[String], mask: Option<&[bool]>) -> Result<Self> {
        let rows: Vec<usize> = (0..table.n_rows()).filter(|&r| mask.is_none_or(|m| m[r])).collect();
        let mut columns = Vec::with_capacity(names.len());
        for n in names {
            let c = table.schema.require(n)?;
            columns.push(rows.iter().map(|&r| table.get(r, c)).collect());
        }
        Dataset::new(names.to_vec(), columns)
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect(),
        }
    }

    pub fn select_vars(&self, vars: &[usize]) -> Dataset {
        Dataset {
            names: vars.iter().map(|&v| self.names[v].clone()).collect(),
            columns: vars.iter().map(|&v| self.columns[v].clone()).collect(),
        }
    }
}

/// Sample size, mean and unbiased covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSuffStat {
    pub n: usize,
    pub mean: Vec<f64>,
    /// Row-major p x p.
    pub cov: Vec<f64>,
}

impl GaussianSuffStat {
    /// Single-pass Welford accumulation over the given rows (all rows when `None`).
    pub fn from_dataset(data: &Dataset, rows: Option<&[usize]>) -> Result<Self> {
        let p = data.n_vars();
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => r,
            None => {
                all = (0..data.n_rows()).collect();
                &all
            }
        };
        if rows.len() < 2 {
            return Err(Error::Data(format!(
                "sufficient statistics need at least 2 rows, got {}",
                rows.len()
            )));
        }
        let mut mean = vec![0.0; p];
        let mut m2 = vec![0.0; p * p];
        let mut delta = vec![0.0; p];
        for (k, &r) in rows.iter().enumerate() {
            let kf = (k + 1) as f64;
            for v in 0..p {
                delta[v] = data.columns[v][r] - mean[v];
                mean[v] += delta[v] / kf;
            }
            for a in 0..p {
                let after = data.columns[a][r] - mean[a];
                for b in a..p {
                    m2[a * p + b] += delta[b] * after;
                }
            }
        }
        let denom = (rows.len() - 1) as f64;
        let mut cov = vec![0.0; p * p];
        for a in 0..p {
            for b in a..p {
                let c = m2[a * p + b] / denom;
                cov[a * p + b] = c;
                cov[b * p + a] = c;
            }
        }
        Ok(GaussianSuffStat {
            n: rows.len(),
            mean,
            cov,
        })
    }

    pub fn from_table(table: &Table, columns: &[String]) -> Result<Self> {
        Self::from_dataset(&Dataset::from_table(table, columns, None)?, None)
    }

    /// Builds a statistic directly from a covariance matrix (e.g. an analytic one).
    pub fn from_covariance(n: usize, cov: Vec<f64>) -> Self {
        let p = (cov.len() as f64).sqrt() as usize;
        GaussianSuffStat {
            n,
            mean: vec![0.0; p],
            cov,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cov_at(&self, a: usize, b: usize) -> f64 {
        self.cov[a * self.dim() + b]
    }

    pub(crate) fn block(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.cov_at(idx[a], idx[b]))
    }
}

/// Inverse of a symmetric block, with the ridge fallback when singular.
fn spd_inverse(m: DMatrix<f64>, warnings: &Warnings) -> DMatrix<f64> {
    if let Some(ch) = m.clone().cholesky() {
        let inv = ch.inverse();
        if inv.iter().all(|v| v.is_finite()) {
            return inv;
        }
    }
    warnings.note_ridge();
    let n = m.nrows();
    let ridged = m + DMatrix::identity(n, n) * RIDGE;
    match ridged.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => ridged.pseudo_inverse(1e-14).unwrap_or_else(|_| DMatrix::zeros(n, n)),
    }
}

/// Solves `a x = b` for symmetric `a`, with the ridge fallback.
pub(crate) fn spd_solve(a: DMatrix<f64>, b: DVector<f64>, warnings: &Warnings) -> DVector<f64> {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(&b);
        if x.iter().all(|v| v.is_finite()) {
            return x;
        }
    }
    warnings.note_ridge();
    let n = a.nrows();
    let ridged = a + DMatrix::identity(n, n) * RIDGE;
    match ridged.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => ridged
            .pseudo_inverse(1e-14)
            .map(|p| p * b)
            .unwrap_or_else(|_| DVector::zeros(n)),
    }
}

/// Correlation of the residuals of `i` and `j` after regressing both on `s`.
pub fn partial_correlation(i: usize, j: usize, s: &[usize], stat: &GaussianSuffStat, warnings: &Warnings) -> Result<f64> {
    if i == j || s.contains(&i) || s.contains(&j) {
        return Err(Error::Data(format!("invalid partial correlation query ({i}, {j} | {s:?})")));
    }
    let r = if s.is_empty() {
        let (vi, vj) = (stat.cov_at(i, i), stat.cov_at(j, j));
        if vi > 0.0 && vj > 0.0 {
            stat.cov_at(i, j) / (vi * vj).sqrt()
        } else {
            warnings.note_ridge();
            0.0
        }
    } else {
        let mut idx = vec![i, j];
        idx.extend_from_slice(s);
        let prec = spd_inverse(stat.block(&idx), warnings);
        let d = prec[(0, 0)] * prec[(1, 1)];
        if d > 0.0 {
            -prec[(0, 1)] / d.sqrt()
        } else {
            0.0
        }
    };
    Ok(r.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub independent: bool,
}

/// Two-sided p-value of a standard normal statistic.
pub fn normal_two_sided_p(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
    }
}

/// Fisher-z statistic for a partial correlation `r` at sample size `n` with `k` conditioning variables.
pub fn fisher_z_from_r(r: f64, n: usize, k: usize, alpha: f64) -> Result<CiTestResult> {
    let dof = n as f64 - k as f64 - 3.0;
    if dof <= 0.0 {
        return Err(Error::Data(format!(
            "Fisher-z needs n - |S| - 3 > 0 (n = {n}, |S| = {k})"
        )));
    }
    if r.abs() >= 1.0 {
        return Ok(CiTestResult {
            statistic: f64::INFINITY.copysign(r),
            p_value: 0.0,
            independent: false,
        });
    }
    let z = 0.5 * dof.sqrt() * ((1.0 + r) / (1.0 - r)).ln();
    let p = normal_two_sided_p(z);
    Ok(CiTestResult {
        statistic: z,
        p_value: p,
        independent: p > alpha,
    })
}

pub fn fisher_z_test(
    i: usize,
    j: usize,
    s: &[usize],
    stat: &GaussianSuffStat,
    alpha: f64,
    warnings: &Warnings,
) -> Result<CiTestResult> {
    let r = partial_correlation(i, j, s, stat, warnings)?;
    fisher_z_from_r(r, stat.n, s.len(), alpha)
}
