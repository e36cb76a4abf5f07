use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};

use super::{spd_solve, Dataset, GaussianSuffStat, Warnings};
use crate::error::{Error, Result};
use crate::graph::Dag;

/// A decomposable structure score; higher is better.
pub trait LocalScore: Sync {
    fn n_vars(&self) -> usize;
    /// `parents` must be sorted and exclude `node`.
    fn local(&self, node: usize, parents: &[usize]) -> f64;
    fn warnings(&self) -> &Warnings;
}

/// Residual sum of squares of `node` on `parents`, from the covariance.
fn rss(stat: &GaussianSuffStat, node: usize, parents: &[usize], warnings: &Warnings) -> f64 {
    let syy = stat.cov_at(node, node);
    let explained = if parents.is_empty() {
        0.0
    } else {
        let a = stat.block(parents);
        let b = DVector::from_iterator(parents.len(), parents.iter().map(|&p| stat.cov_at(p, node)));
        let beta = spd_solve(a, b.clone(), warnings);
        beta.dot(&b)
    };
    (stat.n as f64 - 1.0) * (syy - explained)
}

fn gaussian_bic(stat: &GaussianSuffStat, node: usize, parents: &[usize], warnings: &Warnings) -> f64 {
    let n = stat.n as f64;
    let r = rss(stat, node, parents, warnings).max(f64::MIN_POSITIVE);
    let k = parents.len() as f64 + 2.0;
    -0.5 * n * (r / n).ln() - 0.5 * k * n.ln()
}

type Cache = Mutex<HashMap<(usize, Vec<usize>), f64>>;

/// Gaussian BIC on the full data.
pub struct BicScore {
    stat: Arc<GaussianSuffStat>,
    warnings: Warnings,
    cache: Cache,
}

impl BicScore {
    pub fn new(data: &Dataset) -> Result<Self> {
        Ok(Self::from_stat(GaussianSuffStat::from_dataset(data, None)?))
    }

    pub fn from_stat(stat: GaussianSuffStat) -> Self {
        BicScore {
            stat: Arc::new(stat),
            warnings: Warnings::default(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn stat(&self) -> &GaussianSuffStat {
        &self.stat
    }
}

impl LocalScore for BicScore {
    fn n_vars(&self) -> usize {
        self.stat.dim()
    }

    fn local(&self, node: usize, parents: &[usize]) -> f64 {
        let key = (node, parents.to_vec());
        if let Some(&v) = self.cache.lock().unwrap().get(&key) {
            return v;
        }
        let v = gaussian_bic(&self.stat, node, parents, &self.warnings);
        self.cache.lock().unwrap().insert(key, v);
        v
    }

    fn warnings(&self) -> &Warnings {
        &self.warnings
    }
}

/// Gaussian BIC where each node is scored only on rows in which it was
/// not an intervention target.
pub struct InterventionalBicScore {
    n_vars: usize,
    /// Per node: statistic over its eligible rows, `None` when no row is eligible.
    per_node: Vec<Option<Arc<GaussianSuffStat>>>,
    warnings: Warnings,
    cache: Cache,
}

impl InterventionalBicScore {
    /// `targets[r]` lists the variables intervened on in row `r`.
    pub fn new(data: &Dataset, targets: &[Vec<usize>]) -> Result<Self> {
        let p = data.n_vars();
        if targets.len() != data.n_rows() {
            return Err(Error::Data(format!(
                "intervention targets given for {} rows, data has {}",
                targets.len(),
                data.n_rows()
            )));
        }
        if let Some(bad) = targets.iter().flatten().find(|&&t| t >= p) {
            return Err(Error::Data(format!("intervention target index {bad} out of range")));
        }
        let warnings = Warnings::default();
        // statistics are shared between nodes with identical eligible row sets
        let sets: Vec<BTreeSet<usize>> = targets.iter().map(|t| t.iter().copied().collect()).collect();
        let mut by_rows: BTreeMap<Vec<usize>, Option<Arc<GaussianSuffStat>>> = BTreeMap::new();
        let mut per_node = Vec::with_capacity(p);
        for node in 0..p {
            let rows: Vec<usize> = (0..data.n_rows()).filter(|&r| !sets[r].contains(&node)).collect();
            if !by_rows.contains_key(&rows) {
                let stat = if rows.len() < 2 {
                    None
                } else if rows.len() == data.n_rows() {
                    Some(Arc::new(GaussianSuffStat::from_dataset(data, None)?))
                } else {
                    Some(Arc::new(GaussianSuffStat::from_dataset(data, Some(&rows))?))
                };
                by_rows.insert(rows.clone(), stat);
            }
            per_node.push(by_rows[&rows].clone());
        }
        Ok(InterventionalBicScore {
            n_vars: p,
            per_node,
            warnings,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Number of rows a node is scored on.
    pub fn eligible_rows(&self, node: usize) -> usize {
        self.per_node[node].as_ref().map_or(0, |s| s.n)
    }
}

impl LocalScore for InterventionalBicScore {
    fn n_vars(&self) -> usize {
        self.n_vars
    }

    fn local(&self, node: usize, parents: &[usize]) -> f64 {
        let Some(stat) = &self.per_node[node] else {
            self.warnings.note_empty();
            return 0.0;
        };
        let key = (node, parents.to_vec());
        if let Some(&v) = self.cache.lock().unwrap().get(&key) {
            return v;
        }
        let v = gaussian_bic(stat, node, parents, &self.warnings);
        self.cache.lock().unwrap().insert(key, v);
        v
    }

    fn warnings(&self) -> &Warnings {
        &self.warnings
    }
}

/// Sum of local scores over all nodes of `dag`.
pub fn bic_graph(dag: &Dag, score: &dyn LocalScore) -> f64 {
    (0..dag.n()).map(|v| score.local(v, &dag.parents(v))).sum()
}

/// Least-squares residual sum of squares computed from raw rows, with an intercept.
pub fn rss_direct(data: &Dataset, node: usize, parents: &[usize]) -> f64 {
    let n = data.n_rows();
    let x = DMatrix::from_fn(n, parents.len() + 1, |r, c| if c == 0 { 1.0 } else { data.columns[parents[c - 1]][r] });
    let y = DVector::from_column_slice(&data.columns[node]);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let beta = xtx.cholesky().map(|c| c.solve(&xty)).unwrap_or_else(|| DVector::zeros(parents.len() + 1));
    let res = y - x * beta;
    res.dot(&res)
}
