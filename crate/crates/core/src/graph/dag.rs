use std::collections::{BTreeSet, HashSet, VecDeque};

use crate::error::{Error, Result};

/// A directed acyclic graph over labelled nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dag {
    labels: Vec<String>,
    edges: BTreeSet<(usize, usize)>,
}

impl Dag {
    pub fn empty(labels: Vec<String>) -> Result<Self> {
        Self::new(labels, std::iter::empty())
    }

    pub fn new(labels: Vec<String>, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        check_labels(&labels)?;
        let n = labels.len();
        let edges: BTreeSet<(usize, usize)> = edges.into_iter().collect();
        for &(a, b) in &edges {
            if a >= n || b >= n {
                return Err(Error::Graph(format!("edge ({a}, {b}) out of range for {n} nodes")));
            }
            if a == b {
                return Err(Error::Graph(format!("self-loop on '{}'", labels[a])));
            }
        }
        if !is_acyclic(n, &edges) {
            return Err(Error::Graph("edge set contains a directed cycle".into()));
        }
        Ok(Dag { labels, edges })
    }

    /// Builds a DAG from label-keyed edges.
    pub fn from_named_edges<S: AsRef<str>>(labels: Vec<String>, edges: &[(S, S)]) -> Result<Self> {
        let mut idx = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            let ia = index_of(&labels, a.as_ref())?;
            let ib = index_of(&labels, b.as_ref())?;
            idx.push((ia, ib));
        }
        Self::new(labels, idx)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a, b))
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.has_edge(a, b) || self.has_edge(b, a)
    }

    /// In-neighbors, sorted by index.
    pub fn parents(&self, i: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.1 == i).map(|e| e.0).collect()
    }

    pub fn in_neighbors(&self, i: usize) -> BTreeSet<usize> {
        self.parents(i).into_iter().collect()
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        self.edges.range((i, 0)..(i + 1, 0)).map(|e| e.1).collect()
    }

    /// True when adding `a -> b` would close a directed cycle.
    pub fn would_create_cycle(&self, a: usize, b: usize) -> bool {
        a == b || self.reaches(b, a)
    }

    /// Directed reachability from `from` to `to` (a node reaches itself).
    pub fn reaches(&self, from: usize, to: usize) -> bool {
        if from == to {
            return true;
        }
        let mut seen = vec![false; self.n()];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(u) = stack.pop() {
            for c in self.children(u) {
                if c == to {
                    return true;
                }
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        false
    }

    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<()> {
        if self.would_create_cycle(a, b) {
            return Err(Error::Graph(format!(
                "adding {} -> {} creates a cycle",
                self.labels[a], self.labels[b]
            )));
        }
        self.edges.insert((a, b));
        Ok(())
    }

    pub fn remove_edge(&mut self, a: usize, b: usize) -> bool {
        self.edges.remove(&(a, b))
    }

    pub fn ancestors(&self, i: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut stack = self.parents(i);
        while let Some(p) = stack.pop() {
            if out.insert(p) {
                stack.extend(self.parents(p));
            }
        }
        out
    }

    /// Kahn's algorithm; ties resolved by label order.
    pub fn topological_sort(&self) -> Result<Vec<usize>> {
        topological_order(&self.labels, &self.edges)
    }

    /// The sub-DAG induced on `nodes`, with nodes in the given order.
    pub fn induced(&self, nodes: &[usize]) -> Dag {
        let labels = nodes.iter().map(|&i| self.labels[i].clone()).collect();
        let pos = |x: usize| nodes.iter().position(|&v| v == x);
        let edges = self
            .edges
            .iter()
            .filter_map(|&(a, b)| Some((pos(a)?, pos(b)?)))
            .collect::<Vec<_>>();
        Dag::new(labels, edges).expect("induced subgraph of a DAG is a DAG")
    }

    /// d-separation of `x` and `y` given `z`, via the moralized ancestral graph.
    pub fn d_separated(&self, x: usize, y: usize, z: &[usize]) -> bool {
        let n = self.n();
        let mut keep: BTreeSet<usize> = [x, y].into_iter().chain(z.iter().copied()).collect();
        for v in keep.clone() {
            keep.extend(self.ancestors(v));
        }
        let mut adj = vec![HashSet::new(); n];
        for &(a, b) in &self.edges {
            if keep.contains(&a) && keep.contains(&b) {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        for &v in &keep {
            let ps: Vec<usize> = self.parents(v).into_iter().filter(|p| keep.contains(p)).collect();
            for (k, &p) in ps.iter().enumerate() {
                for &q in &ps[k + 1..] {
                    adj[p].insert(q);
                    adj[q].insert(p);
                }
            }
        }
        let blocked: HashSet<usize> = z.iter().copied().collect();
        if blocked.contains(&x) || blocked.contains(&y) {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([x]);
        seen[x] = true;
        while let Some(u) = queue.pop_front() {
            if u == y {
                return false;
            }
            for &w in &adj[u] {
                if !seen[w] && !blocked.contains(&w) {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        true
    }
}

pub(crate) fn check_labels(labels: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::Graph(format!("duplicate node label '{l}'")));
        }
    }
    Ok(())
}

pub(crate) fn index_of(labels: &[String], name: &str) -> Result<usize> {
    labels
        .iter()
        .position(|l| l == name)
        .ok_or_else(|| Error::Graph(format!("unknown node '{name}'")))
}

/// Acyclicity of an arbitrary directed edge set on `n` nodes.
pub fn is_acyclic(n: usize, edges: &BTreeSet<(usize, usize)>) -> bool {
    let mut indeg = vec![0usize; n];
    let mut out = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a == b {
            return false;
        }
        indeg[b] += 1;
        out[a].push(b);
    }
    let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(u) = stack.pop() {
        seen += 1;
        for &v in &out[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                stack.push(v);
            }
        }
    }
    seen == n
}

pub(crate) fn topological_order(labels: &[String], edges: &BTreeSet<(usize, usize)>) -> Result<Vec<usize>> {
    let n = labels.len();
    let mut indeg = vec![0usize; n];
    for &(_, b) in edges {
        indeg[b] += 1;
    }
    let mut ready: BTreeSet<(&str, usize)> = (0..n)
        .filter(|&i| indeg[i] == 0)
        .map(|i| (labels[i].as_str(), i))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(first) = ready.pop_first() {
        let u = first.1;
        order.push(u);
        for &(a, b) in edges.range((u, 0)..(u + 1, 0)) {
            debug_assert_eq!(a, u);
            indeg[b] -= 1;
            if indeg[b] == 0 {
                ready.insert((labels[b].as_str(), b));
            }
        }
    }
    if order.len() != n {
        return Err(Error::Graph("cannot sort: graph contains a cycle".into()));
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn chain_ancestors() {
        let d = Dag::new(labels(&["A", "B", "C"]), [(0, 1), (1, 2)]).unwrap();
        assert_eq!(d.ancestors(2), BTreeSet::from([0, 1]));
        assert_eq!(d.in_neighbors(2), BTreeSet::from([1]));
    }

    #[test]
    fn empty_graph_has_no_ancestors() {
        let d = Dag::empty(labels(&["x", "y"])).unwrap();
        assert!(d.ancestors(0).is_empty());
        assert_eq!(d.topological_sort().unwrap(), vec![0, 1]);
    }

    #[test]
    fn rejects_cycles_and_self_loops() {
        assert!(Dag::new(labels(&["a", "b"]), [(0, 1), (1, 0)]).is_err());
        assert!(Dag::new(labels(&["a"]), [(0, 0)]).is_err());
        assert!(Dag::empty(labels(&["a", "a"])).is_err());
        let mut d = Dag::new(labels(&["a", "b", "c"]), [(0, 1), (1, 2)]).unwrap();
        assert!(d.add_edge(2, 0).is_err());
    }

    #[test]
    fn topo_sort_breaks_ties_by_label() {
        let d = Dag::new(labels(&["z", "b", "a"]), [(0, 1)]).unwrap();
        // ready set initially {z, a}; 'a' first, then z, then b
        assert_eq!(d.topological_sort().unwrap(), vec![2, 0, 1]);
    }

    #[test]
    fn d_separation_basics() {
        // x -> z <- y, z -> w
        let d = Dag::new(labels(&["x", "y", "z", "w"]), [(0, 2), (1, 2), (2, 3)]).unwrap();
        assert!(d.d_separated(0, 1, &[]));
        assert!(!d.d_separated(0, 1, &[2]));
        assert!(!d.d_separated(0, 1, &[3]));
        assert!(d.d_separated(0, 3, &[2]));
    }
}
