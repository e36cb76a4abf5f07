use std::collections::{BTreeSet, HashMap};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::graph::EdgeList;
use crate::ingest::Table;

/// Directed edges over the columns of a model-ready table, with a target node.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSkeleton {
    labels: Vec<String>,
    edges: Vec<(usize, usize, f64)>,
    target: usize,
}

/// Which nodes a node listens to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Neighbourhood {
    #[default]
    Parents,
    Ancestors,
}

impl Neighbourhood {
    pub fn as_str(self) -> &'static str {
        match self {
            Neighbourhood::Parents => "parents",
            Neighbourhood::Ancestors => "ancestors",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "parents" => Ok(Neighbourhood::Parents),
            "ancestors" => Ok(Neighbourhood::Ancestors),
            _ => Err(Error::Usage(format!("unknown neighbourhood '{s}' (parents|ancestors)"))),
        }
    }
}

impl GraphSkeleton {
    pub fn from_indices(labels: Vec<String>, edges: Vec<(usize, usize, f64)>, target: usize) -> Result<Self> {
        let n = labels.len();
        if labels.iter().collect::<BTreeSet<_>>().len() != n {
            return Err(Error::Graph("duplicate node label".into()));
        }
        if target >= n {
            return Err(Error::Graph(format!("target index {target} out of range")));
        }
        let mut seen = BTreeSet::new();
        for &(a, b, w) in &edges {
            if a >= n || b >= n {
                return Err(Error::Graph(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::Graph(format!("self edge on '{}'", labels[a])));
            }
            if !w.is_finite() {
                return Err(Error::Graph("non-finite edge attribute".into()));
            }
            if !seen.insert((a, b)) {
                return Err(Error::Graph(format!("duplicate edge {} -> {}", labels[a], labels[b])));
            }
        }
        Ok(GraphSkeleton { labels, edges, target })
    }

    /// Resolves edge endpoints by name. Every endpoint must be a node.
    pub fn from_edge_list(labels: Vec<String>, list: &EdgeList, target: &str) -> Result<Self> {
        let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let find = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Graph(format!("edge endpoint '{name}' is not a table column")))
        };
        let edges = list
            .edges
            .iter()
            .map(|(a, b, w)| Ok((find(a)?, find(b)?, *w)))
            .collect::<Result<Vec<_>>>()?;
        let t = find(target)?;
        GraphSkeleton::from_indices(labels, edges, t)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn target_label(&self) -> &str {
        &self.labels[self.target]
    }

    pub fn to_edge_list(&self) -> EdgeList {
        EdgeList {
            edges: self
                .edges
                .iter()
                .map(|&(a, b, w)| (self.labels[a].clone(), self.labels[b].clone(), w))
                .collect(),
        }
    }

    /// Per-node incoming neighbours with edge attributes, ordered by label.
    ///
    /// `Ancestors` lists every node with a directed path into the node, using
    /// the direct edge's attribute where one exists and 1.0 otherwise.
    /// `self_attr` adds a self-loop with that attribute.
    pub fn neighbours(&self, mode: Neighbourhood, self_attr: Option<f64>) -> Vec<Vec<(usize, f64)>> {
        let n = self.n();
        let mut direct: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(a, b, w) in &self.edges {
            direct[b].push((a, w));
        }
        let mut out: Vec<Vec<(usize, f64)>> = match mode {
            Neighbourhood::Parents => direct,
            Neighbourhood::Ancestors => (0..n)
                .map(|i| {
                    let mut reach = BTreeSet::new();
                    let mut stack: Vec<usize> = direct[i].iter().map(|&(p, _)| p).collect();
                    while let Some(v) = stack.pop() {
                        if v != i && reach.insert(v) {
                            stack.extend(direct[v].iter().map(|&(p, _)| p));
                        }
                    }
                    reach
                        .into_iter()
                        .map(|a| {
                            let w = direct[i].iter().find(|&&(p, _)| p == a).map_or(1.0, |&(_, w)| w);
                            (a, w)
                        })
                        .collect()
                })
                .collect(),
        };
        for (i, nb) in out.iter_mut().enumerate() {
            if let Some(a) = self_attr {
                nb.push((i, a));
            }
            nb.sort_by(|x, y| self.labels[x.0].cmp(&self.labels[y.0]).then(x.1.total_cmp(&y.1)));
        }
        out
    }
}

/// One table row as a graph: a scalar feature per node, target masked to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInstance {
    /// Aligned with the skeleton's labels.
    pub features: Vec<f64>,
    /// Raw-unit target value.
    pub label: f64,
    pub field_id: String,
    pub date: NaiveDate,
    pub treatment: String,
}

/// One instance per row, matching columns to nodes by name.
pub fn build_instances(table: &Table, skeleton: &GraphSkeleton) -> Result<Vec<GraphInstance>> {
    let names = table.schema.names();
    let table_set: BTreeSet<&String> = names.iter().collect();
    let node_set: BTreeSet<&String> = skeleton.labels().iter().collect();
    if table_set != node_set {
        let missing: Vec<&&String> = node_set.difference(&table_set).collect();
        let extra: Vec<&&String> = table_set.difference(&node_set).collect();
        return Err(Error::Schema(format!(
            "table columns do not match skeleton nodes (missing {missing:?}, unexpected {extra:?})"
        )));
    }
    let cols: Vec<usize> = skeleton
        .labels()
        .iter()
        .map(|l| table.schema.require(l))
        .collect::<Result<_>>()?;
    let target = skeleton.target();
    (0..table.n_rows())
        .map(|r| {
            let row = table.row(r);
            let mut features: Vec<f64> = cols.iter().map(|&c| row[c]).collect();
            let label = features[target];
            features[target] = 0.0;
            if !label.is_finite() || features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("row {r} has non-finite values")));
            }
            Ok(GraphInstance {
                features,
                label,
                field_id: table.field_id[r].clone(),
                date: table.dates[r],
                treatment: table.treatment[r].clone(),
            })
        })
        .collect()
}
