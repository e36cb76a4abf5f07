use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use super::Design;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng};

/// One node of a regression tree; leaves have no children.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub feature: usize,
    pub threshold: f64,
    pub left: Option<usize>,
    pub right: Option<usize>,
    /// Mean of the training targets reaching this node.
    pub value: f64,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.left.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features tried per split; `None` tries all.
    pub max_features: Option<usize>,
}

/// Regression tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            let n = &self.nodes[k];
            match (n.left, n.right) {
                (Some(l), Some(r)) => k = if x[n.feature] <= n.threshold { l } else { r },
                _ => return n.value,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, k: usize) -> usize {
            match (t.nodes[k].left, t.nodes[k].right) {
                (Some(l), Some(r)) => 1 + go(t, l).max(go(t, r)),
                _ => 0,
            }
        }
        go(self, 0)
    }
}

struct Split {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Best variance-reduction split over `features`. Thresholds are midpoints
/// between consecutive distinct values; ties keep the earliest candidate.
fn best_split(x: &[Vec<f64>], y: &[f64], rows: &[usize], features: &[usize], min_leaf: usize) -> Option<Split> {
    let n = rows.len();
    let total: f64 = rows.iter().map(|&r| y[r]).sum();
    let mut best: Option<Split> = None;
    let mut order = rows.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += y[order[k]];
            let nl = k + 1;
            let nr = n - nl;
            let (lo, hi) = (x[order[k]][f], x[order[k + 1]][f]);
            if nl < min_leaf || nr < min_leaf || lo == hi {
                continue;
            }
            let right_sum = total - left_sum;
            // SSE reduction up to a constant: sum^2/n per child minus parent.
            let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64 - total * total / n as f64;
            if gain > 1e-12 * (1.0 + total.abs()) && best.as_ref().is_none_or(|b| gain > b.gain) {
                let mid = lo + (hi - lo) / 2.0;
                best = Some(Split {
                    gain,
                    feature: f,
                    threshold: if mid < hi { mid } else { lo },
                });
            }
        }
    }
    best
}

/// CART regression tree on `rows` (indices may repeat, as in a bootstrap).
pub fn fit_tree<R: Rng>(x: &[Vec<f64>], y: &[f64], rows: &[usize], params: &TreeParams, r: &mut R) -> Tree {
    let d = x.first().map_or(0, Vec::len);
    let mut tree = Tree { nodes: Vec::new() };
    let mut stack = vec![(rows.to_vec(), 0usize, None::<(usize, bool)>)];
    while let Some((idx, depth, parent)) = stack.pop() {
        let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        let me = tree.nodes.len();
        tree.nodes.push(TreeNode {
            feature: 0,
            threshold: 0.0,
            left: None,
            right: None,
            value: mean,
        });
        if let Some((p, is_left)) = parent {
            if is_left {
                tree.nodes[p].left = Some(me);
            } else {
                tree.nodes[p].right = Some(me);
            }
        }
        let can_split = idx.len() >= 2 * params.min_leaf.max(1) && params.max_depth.is_none_or(|m| depth < m);
        if !can_split {
            continue;
        }
        let features: Vec<usize> = match params.max_features {
            Some(k) if k < d => {
                let mut f = sample(r, d, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        };
        let Some(split) = best_split(x, y, &idx, &features, params.min_leaf.max(1)) else { continue };
        tree.nodes[me].feature = split.feature;
        tree.nodes[me].threshold = split.threshold;
        let (left, right): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][split.feature] <= split.threshold);
        // Right pushed first so the left subtree is numbered first.
        stack.push((right, depth + 1, Some((me, false))));
        stack.push((left, depth + 1, Some((me, true))));
    }
    tree
}

/// Row indices in a canonical order (by features, then target), so that
/// bootstraps do not depend on how the caller ordered the rows.
fn canonical_rows(x: &[Vec<f64>], y: &[f64]) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..y.len()).collect();
    rows.sort_by(|&a, &b| {
        x[a].iter()
            .zip(&x[b])
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(y[a].total_cmp(&y[b]))
    });
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfConfig {
    pub n_trees: usize,
    pub min_leaf: usize,
    /// Features per split; `None` uses floor(sqrt(d)), at least 1.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            n_trees: 100,
            min_leaf: 2,
            max_features: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
}

pub fn rf_train(design: &Design, config: &RfConfig, seed: u64) -> Result<RandomForest> {
    design.check_trainable()?;
    if config.n_trees == 0 {
        return Err(Error::Config("random forest needs at least one tree".into()));
    }
    let d = design.n_features();
    let mtry = config.max_features.unwrap_or(((d as f64).sqrt().floor() as usize).max(1));
    let params = TreeParams {
        max_depth: None,
        min_leaf: config.min_leaf,
        max_features: Some(mtry),
    };
    let canon = canonical_rows(&design.x, &design.y);
    let n = canon.len();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng(derive_seed(seed, t as u64));
            let rows: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| canon[r.random_range(0..n)]).collect()
            } else {
                canon.clone()
            };
            fit_tree(&design.x, &design.y, &rows, &params, &mut r)
        })
        .collect();
    Ok(RandomForest {
        feature_names: design.feature_names.clone(),
        trees,
    })
}

impl RandomForest {
    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter()
            .map(|row| self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_estimators: 100,
            max_depth: 20,
            learning_rate: 0.1,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gbt {
    pub feature_names: Vec<String>,
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Training MSE after the initial constant and after each round.
    pub train_loss: Vec<f64>,
}

/// Squared-error gradient boosting: each round fits a tree to the residuals.
pub fn gbt_train(design: &Design, config: &GbtConfig, seed: u64) -> Result<Gbt> {
    design.check_trainable()?;
    if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
        return Err(Error::Config("boosting learning rate must be positive".into()));
    }
    let y = &design.y;
    let n = y.len();
    let init = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![init; n];
    let mse = |p: &[f64]| p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
    let mut train_loss = vec![mse(&pred)];
    let params = TreeParams {
        max_depth: Some(config.max_depth),
        min_leaf: config.min_leaf,
        max_features: None,
    };
    let rows: Vec<usize> = (0..n).collect();
    // No sampling happens with all features and no subsampling; the stream
    // exists so the signature matches the other learners.
    let mut r = rng(seed);
    let mut trees = Vec::with_capacity(config.n_estimators);
    for _ in 0..config.n_estimators {
        let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        let tree = fit_tree(&design.x, &resid, &rows, &params, &mut r);
        for (p, row) in pred.iter_mut().zip(&design.x) {
            *p += config.learning_rate * tree.predict_row(row);
        }
        train_loss.push(mse(&pred));
        trees.push(tree);
    }
    Ok(Gbt {
        feature_names: design.feature_names.clone(),
        init,
        learning_rate: config.learning_rate,
        trees,
        train_loss,
    })
}

impl Gbt {
    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter()
            .map(|row| self.init + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>())
            .collect()
    }
}
