use std::collections::BTreeSet;

use super::dag::{check_labels, is_acyclic, topological_order, Dag};
use crate::error::{Error, Result};

/// Partially directed acyclic graph. Undirected edges are stored once as `(min, max)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cpdag {
    labels: Vec<String>,
    directed: BTreeSet<(usize, usize)>,
    undirected: BTreeSet<(usize, usize)>,
}

/// Status of an unordered node pair `(i, j)` with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairStatus {
    Absent,
    Undirected,
    /// i -> j
    Forward,
    /// j -> i
    Backward,
}

impl Cpdag {
    pub fn new(
        labels: Vec<String>,
        directed: impl IntoIterator<Item = (usize, usize)>,
        undirected: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        check_labels(&labels)?;
        let n = labels.len();
        let directed: BTreeSet<_> = directed.into_iter().collect();
        let undirected: BTreeSet<_> = undirected.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        for &(a, b) in directed.iter().chain(undirected.iter()) {
            if a >= n || b >= n {
                return Err(Error::Graph(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::Graph(format!("self-loop on '{}'", labels[a])));
            }
        }
        for &(a, b) in &directed {
            if undirected.contains(&(a.min(b), a.max(b))) || directed.contains(&(b, a)) {
                return Err(Error::Graph(format!(
                    "pair {} / {} carries more than one edge",
                    labels[a], labels[b]
                )));
            }
        }
        if !is_acyclic(n, &directed) {
            return Err(Error::Graph("directed part contains a cycle".into()));
        }
        Ok(Cpdag {
            labels,
            directed,
            undirected,
        })
    }

    /// Every edge of `dag`, all directed.
    pub fn from_dag(dag: &Dag) -> Self {
        Cpdag {
            labels: dag.labels().to_vec(),
            directed: dag.edges().clone(),
            undirected: BTreeSet::new(),
        }
    }

    pub fn empty(labels: Vec<String>) -> Result<Self> {
        Self::new(labels, [], [])
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn directed(&self) -> &BTreeSet<(usize, usize)> {
        &self.directed
    }

    pub fn undirected(&self) -> &BTreeSet<(usize, usize)> {
        &self.undirected
    }

    pub fn n_edges(&self) -> usize {
        self.directed.len() + self.undirected.len()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.directed.contains(&(a, b))
            || self.directed.contains(&(b, a))
            || self.undirected.contains(&(a.min(b), a.max(b)))
    }

    pub fn status(&self, i: usize, j: usize) -> PairStatus {
        let (a, b) = (i.min(j), i.max(j));
        let st = if self.undirected.contains(&(a, b)) {
            PairStatus::Undirected
        } else if self.directed.contains(&(a, b)) {
            PairStatus::Forward
        } else if self.directed.contains(&(b, a)) {
            PairStatus::Backward
        } else {
            PairStatus::Absent
        };
        if i <= j {
            st
        } else {
            match st {
                PairStatus::Forward => PairStatus::Backward,
                PairStatus::Backward => PairStatus::Forward,
                s => s,
            }
        }
    }

    /// Skeleton as unordered pairs.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.directed
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .chain(self.undirected.iter().copied())
            .collect()
    }

    fn to_mats(&self) -> Mats {
        let n = self.n();
        let mut m = Mats {
            n,
            dir: vec![vec![false; n]; n],
            und: vec![vec![false; n]; n],
        };
        for &(a, b) in &self.directed {
            m.dir[a][b] = true;
        }
        for &(a, b) in &self.undirected {
            m.und[a][b] = true;
            m.und[b][a] = true;
        }
        m
    }

    fn from_mats(labels: Vec<String>, m: &Mats) -> Self {
        let mut directed = BTreeSet::new();
        let mut undirected = BTreeSet::new();
        for a in 0..m.n {
            for b in 0..m.n {
                if m.dir[a][b] {
                    directed.insert((a, b));
                }
                if a < b && m.und[a][b] {
                    undirected.insert((a, b));
                }
            }
        }
        Cpdag {
            labels,
            directed,
            undirected,
        }
    }

    /// Orients every undirected edge incident to one of `nodes` as it is in
    /// `dag`, then re-applies the orientation rules.
    pub fn orient_from(&self, dag: &Dag, nodes: &BTreeSet<usize>) -> Cpdag {
        let mut m = self.to_mats();
        for &(a, b) in &self.undirected {
            if nodes.contains(&a) || nodes.contains(&b) {
                m.und[a][b] = false;
                m.und[b][a] = false;
                if dag.has_edge(a, b) {
                    m.dir[a][b] = true;
                } else {
                    m.dir[b][a] = true;
                }
            }
        }
        meek_closure(&Cpdag::from_mats(self.labels.clone(), &m))
    }
}

struct Mats {
    n: usize,
    dir: Vec<Vec<bool>>,
    und: Vec<Vec<bool>>,
}

impl Mats {
    fn adj(&self, a: usize, b: usize) -> bool {
        self.dir[a][b] || self.dir[b][a] || self.und[a][b]
    }

    fn orient(&mut self, a: usize, b: usize) {
        self.und[a][b] = false;
        self.und[b][a] = false;
        self.dir[a][b] = true;
    }

    fn rule1(&self, b: usize, c: usize) -> bool {
        (0..self.n).any(|a| a != c && self.dir[a][b] && !self.adj(a, c))
    }

    fn rule2(&self, a: usize, b: usize) -> bool {
        (0..self.n).any(|c| self.dir[a][c] && self.dir[c][b])
    }

    fn rule3(&self, a: usize, b: usize) -> bool {
        let cands: Vec<usize> = (0..self.n).filter(|&c| self.und[a][c] && self.dir[c][b]).collect();
        for (k, &c) in cands.iter().enumerate() {
            for &d in &cands[k + 1..] {
                if !self.adj(c, d) {
                    return true;
                }
            }
        }
        false
    }

    fn rule4(&self, a: usize, b: usize) -> bool {
        for d in 0..self.n {
            if !self.dir[d][b] || !self.adj(a, d) || d == a {
                continue;
            }
            for c in 0..self.n {
                if c != a && c != b && self.dir[c][d] && self.adj(a, c) && !self.adj(b, c) {
                    return true;
                }
            }
        }
        false
    }
}

/// All unshielded colliders `(a, c, b)` with `a -> c <- b`, `a < b`.
pub fn v_structures(dag: &Dag) -> BTreeSet<(usize, usize, usize)> {
    let mut out = BTreeSet::new();
    for c in 0..dag.n() {
        let ps = dag.parents(c);
        for (k, &a) in ps.iter().enumerate() {
            for &b in &ps[k + 1..] {
                if !dag.adjacent(a, b) {
                    out.insert((a.min(b), c, a.max(b)));
                }
            }
        }
    }
    out
}

/// The completed partially directed graph of the Markov equivalence class of `dag`.
pub fn cpdag_of(dag: &Dag) -> Cpdag {
    let vs = v_structures(dag);
    let mut compelled = BTreeSet::new();
    for &(a, c, b) in &vs {
        compelled.insert((a, c));
        compelled.insert((b, c));
    }
    let undirected = dag
        .edges()
        .iter()
        .filter(|e| !compelled.contains(e))
        .map(|&(a, b)| (a.min(b), a.max(b)));
    let pattern = Cpdag::new(dag.labels().to_vec(), compelled.clone(), undirected.collect::<Vec<_>>())
        .expect("pattern of a DAG is a valid PDAG");
    meek_closure(&pattern)
}

/// Applies orientation rules R1-R4 until nothing changes.
pub fn meek_closure(g: &Cpdag) -> Cpdag {
    let mut m = g.to_mats();
    loop {
        let mut changed = false;
        for a in 0..m.n {
            for b in 0..m.n {
                if !m.und[a][b] {
                    continue;
                }
                if m.rule1(a, b) || m.rule2(a, b) || m.rule3(a, b) || m.rule4(a, b) {
                    m.orient(a, b);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Cpdag::from_mats(g.labels.clone(), &m)
}

/// Result of extending a PDAG to a DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extension {
    pub dag: Dag,
    /// True when no consistent extension existed and the remaining
    /// undirected edges were oriented along a topological label order.
    pub fallback: bool,
}

/// Dor-Tarsi sink elimination. Among admissible sinks, the one with the
/// greatest label is removed first, so `x - y` becomes `x -> y`.
pub fn consistent_extension(g: &Cpdag) -> Extension {
    let n = g.n();
    let mut m = g.to_mats();
    let mut alive = vec![true; n];
    let mut out: BTreeSet<(usize, usize)> = g.directed.clone();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| g.labels[b].cmp(&g.labels[a]));
    let mut remaining = n;
    while remaining > 0 {
        let sink = order.iter().copied().find(|&x| {
            if !alive[x] {
                return false;
            }
            if (0..n).any(|y| alive[y] && m.dir[x][y]) {
                return false;
            }
            let nbrs: Vec<usize> = (0..n).filter(|&y| y != x && alive[y] && m.adj(x, y)).collect();
            nbrs.iter().filter(|&&y| m.und[x][y]).all(|&y| {
                nbrs.iter().all(|&z| z == y || m.adj(y, z))
            })
        });
        let Some(x) = sink else {
            return fallback_extension(g, &m, &alive, out);
        };
        for y in 0..n {
            if alive[y] && m.und[x][y] {
                m.und[x][y] = false;
                m.und[y][x] = false;
                out.insert((y, x));
            }
        }
        alive[x] = false;
        remaining -= 1;
    }
    Extension {
        dag: Dag::new(g.labels.clone(), out).expect("Dor-Tarsi output is acyclic"),
        fallback: false,
    }
}

fn fallback_extension(g: &Cpdag, m: &Mats, alive: &[bool], mut out: BTreeSet<(usize, usize)>) -> Extension {
    // order nodes topologically over the directed part, ties by label
    let topo = topological_order(&g.labels, &out).expect("directed part is acyclic");
    let mut rank = vec![0usize; g.n()];
    for (r, &v) in topo.iter().enumerate() {
        rank[v] = r;
    }
    for a in 0..g.n() {
        for b in (a + 1)..g.n() {
            if alive[a] && alive[b] && m.und[a][b] {
                if rank[a] < rank[b] {
                    out.insert((a, b));
                } else {
                    out.insert((b, a));
                }
            }
        }
    }
    Extension {
        dag: Dag::new(g.labels.clone(), out).expect("rank-ordered orientation is acyclic"),
        fallback: true,
    }
}

/// Structural Hamming distance: node pairs whose edge status differs.
pub fn shd(a: &Cpdag, b: &Cpdag) -> usize {
    assert_eq!(a.n(), b.n(), "shd requires graphs over the same nodes");
    let mut d = 0;
    for i in 0..a.n() {
        for j in (i + 1)..a.n() {
            if a.status(i, j) != b.status(i, j) {
                d += 1;
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn chain_is_fully_undirected() {
        let d = Dag::new(labels(&["X", "Y", "Z"]), [(0, 1), (1, 2)]).unwrap();
        let c = cpdag_of(&d);
        assert!(c.directed().is_empty());
        assert_eq!(c.undirected(), &BTreeSet::from([(0, 1), (1, 2)]));
        assert!(v_structures(&d).is_empty());
    }

    #[test]
    fn collider_is_fully_directed() {
        let d = Dag::new(labels(&["X", "Y", "Z"]), [(0, 2), (1, 2)]).unwrap();
        let c = cpdag_of(&d);
        assert_eq!(c.directed(), &BTreeSet::from([(0, 2), (1, 2)]));
        assert!(c.undirected().is_empty());
        assert_eq!(v_structures(&d), BTreeSet::from([(0, 2, 1)]));
    }

    #[test]
    fn rule1_orients_away_from_arrow() {
        let g = Cpdag::new(labels(&["a", "b", "c"]), [(0, 1)], [(1, 2)]).unwrap();
        let c = meek_closure(&g);
        assert_eq!(c.directed(), &BTreeSet::from([(0, 1), (1, 2)]));
    }

    #[test]
    fn rule2_orients_along_directed_path() {
        let g = Cpdag::new(labels(&["a", "b", "c"]), [(0, 1), (1, 2)], [(0, 2)]).unwrap();
        let c = meek_closure(&g);
        assert!(c.directed().contains(&(0, 2)));
        assert!(c.undirected().is_empty());
    }

    #[test]
    fn rule3_orients_into_double_collider() {
        // a - c1 -> b, a - c2 -> b, a - b, c1 and c2 nonadjacent
        let g = Cpdag::new(
            labels(&["a", "b", "c1", "c2"]),
            [(2, 1), (3, 1)],
            [(0, 1), (0, 2), (0, 3)],
        )
        .unwrap();
        let c = meek_closure(&g);
        assert!(c.directed().contains(&(0, 1)));
    }

    #[test]
    fn extension_of_single_edge_follows_label_order() {
        let g = Cpdag::new(labels(&["X", "Y"]), [], [(0, 1)]).unwrap();
        let e = consistent_extension(&g);
        assert!(!e.fallback);
        assert_eq!(e.dag.edges(), &BTreeSet::from([(0, 1)]));
    }

    #[test]
    fn extension_of_directed_graph_is_identity() {
        let d = Dag::new(labels(&["a", "b", "c"]), [(0, 2), (1, 2)]).unwrap();
        let e = consistent_extension(&Cpdag::from_dag(&d));
        assert_eq!(e.dag, d);
    }

    #[test]
    fn extension_falls_back_on_unextendable_pattern() {
        // 4-cycle of undirected edges has no consistent extension without a new v-structure
        let g = Cpdag::new(labels(&["a", "b", "c", "d"]), [], [(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let e = consistent_extension(&g);
        assert!(e.fallback);
        assert_eq!(e.dag.edges().len(), 4);
    }

    #[test]
    fn shd_counts_pair_differences() {
        let l = labels(&["a", "b", "c"]);
        let g1 = Cpdag::new(l.clone(), [(0, 1)], [(1, 2)]).unwrap();
        assert_eq!(shd(&g1, &g1), 0);
        let g2 = Cpdag::new(l.clone(), [(1, 0)], [(1, 2)]).unwrap();
        assert_eq!(shd(&g1, &g2), 1);
        let g3 = Cpdag::empty(l).unwrap();
        assert_eq!(shd(&g1, &g3), 2);
    }

    #[test]
    fn cpdag_rejects_double_edges() {
        assert!(Cpdag::new(labels(&["a", "b"]), [(0, 1)], [(0, 1)]).is_err());
        assert!(Cpdag::new(labels(&["a", "b"]), [(0, 1), (1, 0)], []).is_err());
    }
}
