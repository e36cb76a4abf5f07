use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::cpdag::Cpdag;
use super::dag::Dag;
use crate::error::{Error, Result};

/// Directed edges with one scalar attribute each (edge existence = 1.0).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    pub edges: Vec<(String, String, f64)>,
}

impl EdgeList {
    pub fn from_dag(dag: &Dag) -> Self {
        let edges = dag
            .edges()
            .iter()
            .map(|&(a, b)| (dag.label(a).to_string(), dag.label(b).to_string(), 1.0))
            .collect();
        EdgeList { edges }
    }

    /// One `src<TAB>dst<TAB>attr` line per edge.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (a, b, w) in &self.edges {
            writeln!(s, "{a}\t{b}\t{w}").unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() < 2 || parts.len() > 3 {
                return Err(Error::Data(format!("edge list line {}: expected src<TAB>dst<TAB>attr", ln + 1)));
            }
            let w = match parts.get(2) {
                Some(v) => v
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Data(format!("edge list line {}: bad attribute '{v}'", ln + 1)))?,
                None => 1.0,
            };
            edges.push((parts[0].to_string(), parts[1].to_string(), w));
        }
        Ok(EdgeList { edges })
    }
}

/// CPDAG edge list: `src<TAB>dst<TAB>attr<TAB>directed|undirected`.
pub fn cpdag_to_text(g: &Cpdag) -> String {
    let l = g.labels();
    let mut s = String::new();
    for &(a, b) in g.directed() {
        writeln!(s, "{}\t{}\t1\tdirected", l[a], l[b]).unwrap();
    }
    for &(a, b) in g.undirected() {
        writeln!(s, "{}\t{}\t1\tundirected", l[a], l[b]).unwrap();
    }
    s
}

pub fn parse_cpdag_text(labels: Vec<String>, text: &str) -> Result<Cpdag> {
    let mut dir = Vec::new();
    let mut und = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 4 {
            return Err(Error::Data(format!("cpdag line {}: expected 4 tab-separated fields", ln + 1)));
        }
        let a = super::dag::index_of(&labels, parts[0])?;
        let b = super::dag::index_of(&labels, parts[1])?;
        match parts[3] {
            "directed" => dir.push((a, b)),
            "undirected" => und.push((a, b)),
            other => return Err(Error::Data(format!("cpdag line {}: unknown kind '{other}'", ln + 1))),
        }
    }
    Cpdag::new(labels, dir, und)
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn role_style(role: &str) -> &'static str {
    match role {
        "target" => "shape=doubleoctagon, style=filled, fillcolor=\"#f4a261\"",
        "soil" => "shape=ellipse, style=filled, fillcolor=\"#a8dadc\"",
        "management" => "shape=box, style=filled, fillcolor=\"#e9c46a\"",
        _ => "shape=ellipse",
    }
}

/// DOT digraph; undirected edges carry `dir=none`. Output order is fixed by node index.
pub fn to_dot(g: &Cpdag, roles: Option<&BTreeMap<String, String>>) -> String {
    let mut s = String::from("digraph causal {\n  rankdir=LR;\n");
    for l in g.labels() {
        let style = roles
            .and_then(|r| r.get(l))
            .map(|r| role_style(r))
            .unwrap_or("shape=ellipse");
        writeln!(s, "  {} [{}];", quote(l), style).unwrap();
    }
    let l = g.labels();
    for &(a, b) in g.directed() {
        writeln!(s, "  {} -> {};", quote(&l[a]), quote(&l[b])).unwrap();
    }
    for &(a, b) in g.undirected() {
        writeln!(s, "  {} -> {} [dir=none];", quote(&l[a]), quote(&l[b])).unwrap();
    }
    s.push_str("}\n");
    s
}

pub fn dag_to_dot(d: &Dag, roles: Option<&BTreeMap<String, String>>) -> String {
    to_dot(&Cpdag::from_dag(d), roles)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn empty_graph_dot_has_only_nodes() {
        let g = Cpdag::empty(labels(&["a", "b"])).unwrap();
        let dot = to_dot(&g, None);
        assert!(dot.starts_with("digraph"));
        assert!(!dot.contains("->"));
        assert_eq!(dot.matches("shape=").count(), 2);
    }

    #[test]
    fn single_edge_dot() {
        let d = Dag::new(labels(&["a", "b"]), [(0, 1)]).unwrap();
        let dot = dag_to_dot(&d, None);
        assert_eq!(dot.matches("->").count(), 1);
        assert!(dot.contains("\"a\" -> \"b\";"));
    }

    #[test]
    fn undirected_edges_render_without_arrowhead() {
        let g = Cpdag::new(labels(&["a", "b"]), [], [(0, 1)]).unwrap();
        assert!(to_dot(&g, None).contains("[dir=none]"));
    }

    #[test]
    fn edge_list_text_round_trip() {
        let d = Dag::new(labels(&["x=1", "y"]), [(0, 1)]).unwrap();
        let el = EdgeList::from_dag(&d);
        assert_eq!(el.to_text(), "x=1\ty\t1\n");
        assert_eq!(EdgeList::parse(&el.to_text()).unwrap(), el);
        assert!(EdgeList::parse("a b c d\n").is_err());
    }

    #[test]
    fn cpdag_text_round_trip() {
        let g = Cpdag::new(labels(&["a", "b", "c"]), [(0, 2)], [(1, 2)]).unwrap();
        let back = parse_cpdag_text(labels(&["a", "b", "c"]), &cpdag_to_text(&g)).unwrap();
        assert_eq!(back, g);
    }
}
