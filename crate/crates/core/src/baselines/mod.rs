//! Non-causal comparison models and the random-edge control.

mod mlp;
mod tree;

pub use mlp::{best_of, mlp_grid, mlp_grid_search, mlp_train, validation_split, GridEntry, GridResult, Mlp, MlpConfig};
pub use tree::{fit_tree, gbt_train, rf_train, Gbt, GbtConfig, RandomForest, RfConfig, Tree, TreeNode, TreeParams};

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::gnn::GraphSkeleton;
use crate::ingest::Table;
use crate::rng::rng;

/// Flat feature rows and targets; the target column is never a feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub feature_names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Design {
    /// Rows where `mask` is true (all rows if `None`).
    pub fn from_table(table: &Table, mask: Option<&[bool]>) -> Result<Self> {
        let target = table.schema.target_index()?;
        let cols: Vec<usize> = (0..table.n_cols()).filter(|&c| c != target).collect();
        let feature_names = cols.iter().map(|&c| table.schema.columns[c].name.clone()).collect();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for r in 0..table.n_rows() {
            if mask.is_some_and(|m| !m[r]) {
                continue;
            }
            let row = table.row(r);
            x.push(cols.iter().map(|&c| row[c]).collect());
            y.push(row[target]);
        }
        Ok(Design { feature_names, x, y })
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn subset(&self, rows: &[usize]) -> Design {
        Design {
            feature_names: self.feature_names.clone(),
            x: rows.iter().map(|&r| self.x[r].clone()).collect(),
            y: rows.iter().map(|&r| self.y[r]).collect(),
        }
    }

    pub(crate) fn check_trainable(&self) -> Result<()> {
        if self.y.is_empty() {
            return Err(Error::Data("no training rows".into()));
        }
        if self.x.iter().any(|r| r.len() != self.n_features()) {
            return Err(Error::Data("ragged feature rows".into()));
        }
        if self.y.iter().chain(self.x.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite training values".into()));
        }
        Ok(())
    }
}

pub const RANDOM_SKELETON_EDGES: usize = 50;

/// `n_edges` distinct directed non-self edges, uniform without replacement
/// over ordered pairs. Cycles are allowed.
pub fn random_skeleton(labels: Vec<String>, n_edges: usize, target: &str, seed: u64) -> Result<GraphSkeleton> {
    let n = labels.len();
    let pairs = n * n.saturating_sub(1);
    if n_edges > pairs {
        return Err(Error::Config(format!("cannot draw {n_edges} distinct edges over {n} nodes")));
    }
    let t = labels
        .iter()
        .position(|l| l == target)
        .ok_or_else(|| Error::Graph(format!("target '{target}' is not a node")))?;
    let mut picks = sample(&mut rng(seed), pairs, n_edges).into_vec();
    picks.sort_unstable();
    let edges = picks
        .into_iter()
        .map(|k| {
            let a = k / (n - 1);
            let r = k % (n - 1);
            let b = if r < a { r } else { r + 1 };
            (a, b, 1.0)
        })
        .collect();
    GraphSkeleton::from_indices(labels, edges, t)
}
