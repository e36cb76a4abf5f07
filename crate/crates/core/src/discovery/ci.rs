use crate::error::Result;
use crate::graph::Dag;
use crate::stats::{fisher_z_test, partial_correlation, Dataset, GaussianSuffStat, Warnings};

/// Answers "is `i` independent of `j` given `s`?".
pub trait CiTest: Sync {
    fn n_vars(&self) -> usize;
    fn independent(&self, i: usize, j: usize, s: &[usize]) -> Result<bool>;
    fn warnings(&self) -> Option<&Warnings> {
        None
    }
}

pub struct FisherZ {
    pub stat: GaussianSuffStat,
    pub alpha: f64,
    warnings: Warnings,
}

impl FisherZ {
    pub fn new(data: &Dataset, alpha: f64) -> Result<Self> {
        Ok(FisherZ {
            stat: GaussianSuffStat::from_dataset(data, None)?,
            alpha,
            warnings: Warnings::default(),
        })
    }

    pub fn from_stat(stat: GaussianSuffStat, alpha: f64) -> Self {
        FisherZ {
            stat,
            alpha,
            warnings: Warnings::default(),
        }
    }
}

impl CiTest for FisherZ {
    fn n_vars(&self) -> usize {
        self.stat.dim()
    }

    fn independent(&self, i: usize, j: usize, s: &[usize]) -> Result<bool> {
        Ok(fisher_z_test(i, j, s, &self.stat, self.alpha, &self.warnings)?.independent)
    }

    fn warnings(&self) -> Option<&Warnings> {
        Some(&self.warnings)
    }
}

/// Vanishing partial correlation of an exact covariance matrix.
pub struct CovarianceOracle {
    stat: GaussianSuffStat,
    pub tol: f64,
    warnings: Warnings,
}

impl CovarianceOracle {
    pub fn new(cov: Vec<f64>) -> Self {
        CovarianceOracle {
            stat: GaussianSuffStat::from_covariance(usize::MAX, cov),
            tol: 1e-10,
            warnings: Warnings::default(),
        }
    }
}

impl CiTest for CovarianceOracle {
    fn n_vars(&self) -> usize {
        self.stat.dim()
    }

    fn independent(&self, i: usize, j: usize, s: &[usize]) -> Result<bool> {
        Ok(partial_correlation(i, j, s, &self.stat, &self.warnings)?.abs() < self.tol)
    }

    fn warnings(&self) -> Option<&Warnings> {
        Some(&self.warnings)
    }
}

/// d-separation in a known DAG.
pub struct DSeparationOracle(pub Dag);

impl CiTest for DSeparationOracle {
    fn n_vars(&self) -> usize {
        self.0.n()
    }

    fn independent(&self, i: usize, j: usize, s: &[usize]) -> Result<bool> {
        Ok(self.0.d_separated(i, j, s))
    }
}
