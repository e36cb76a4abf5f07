use std::collections::BTreeSet;

use super::pc::{label_order, unpermute};
use super::{degenerate_columns, DiscoveryConfig};
use crate::error::{Error, Result};
use crate::graph::{consistent_extension, cpdag_of, Cpdag, Dag};
use crate::stats::{bic_graph, BicScore, Dataset, InterventionalBicScore, LocalScore};

/// Minimum score gain for a move to be accepted; guards against rounding noise.
const MIN_GAIN: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SearchOutput {
    pub cpdag: Cpdag,
    /// The DAG member the search ended on.
    pub dag: Dag,
    /// Total score after the start and after every accepted move.
    pub trajectory: Vec<f64>,
    pub warnings: u64,
}

fn with(parents: &[usize], extra: usize) -> Vec<usize> {
    let mut p = parents.to_vec();
    p.push(extra);
    p.sort_unstable();
    p
}

fn without(parents: &[usize], gone: usize) -> Vec<usize> {
    parents.iter().copied().filter(|&p| p != gone).collect()
}

/// Keeps the best `(gain, edge)`; equal gains go to the smaller edge.
fn consider(best: &mut Option<(f64, (usize, usize))>, gain: f64, edge: (usize, usize)) {
    if gain <= MIN_GAIN {
        return;
    }
    let better = match *best {
        None => true,
        Some((g, e)) => gain > g || (gain == g && edge < e),
    };
    if better {
        *best = Some((gain, edge));
    }
}

/// Greedy single-edge additions until no addition improves the score.
fn forward(dag: &mut Dag, score: &dyn LocalScore, max_parents: usize, active: &[bool], traj: &mut Vec<f64>) -> bool {
    let n = dag.n();
    let mut changed = false;
    loop {
        let mut best = None;
        for child in (0..n).filter(|&c| active[c]) {
            let pa = dag.parents(child);
            if pa.len() >= max_parents {
                continue;
            }
            let base = score.local(child, &pa);
            for parent in (0..n).filter(|&p| active[p] && p != child) {
                if dag.adjacent(parent, child) || dag.would_create_cycle(parent, child) {
                    continue;
                }
                consider(&mut best, score.local(child, &with(&pa, parent)) - base, (parent, child));
            }
        }
        let Some((_, (a, b))) = best else { return changed };
        dag.add_edge(a, b).expect("candidate checked for cycles");
        traj.push(bic_graph(dag, score));
        changed = true;
    }
}

fn is_clique(g: &Cpdag, nodes: &[usize]) -> bool {
    nodes
        .iter()
        .enumerate()
        .all(|(k, &a)| nodes[k + 1..].iter().all(|&b| g.adjacent(a, b)))
}

struct Deletion {
    gain: f64,
    edge: (usize, usize),
    /// Undirected neighbours of the child that become its children.
    heads: Vec<usize>,
}

/// Scores removing `x - y` (or `x -> y`) for every admissible split of the
/// child's undirected neighbours adjacent to `x`; each split is one family
/// of consistent extensions.
fn deletions(g: &Cpdag, score: &dyn LocalScore) -> Vec<Deletion> {
    let n = g.n();
    let mut out = Vec::new();
    for x in 0..n {
        for y in 0..n {
            if x == y || !(g.directed().contains(&(x, y)) || g.undirected().contains(&(x.min(y), x.max(y)))) {
                continue;
            }
            let parents: Vec<usize> = (0..n).filter(|&p| p != x && g.directed().contains(&(p, y))).collect();
            let shared: Vec<usize> = (0..n)
                .filter(|&h| h != x && g.undirected().contains(&(h.min(y), h.max(y))) && g.adjacent(h, x))
                .collect();
            if shared.len() > 12 {
                continue;
            }
            for mask in 0u32..(1 << shared.len()) {
                let heads: Vec<usize> = (0..shared.len()).filter(|k| mask & (1 << k) != 0).map(|k| shared[k]).collect();
                let rest: Vec<usize> = (0..shared.len()).filter(|k| mask & (1 << k) == 0).map(|k| shared[k]).collect();
                if !is_clique(g, &rest) {
                    continue;
                }
                let mut cond: Vec<usize> = parents.iter().chain(&rest).copied().collect();
                cond.sort_unstable();
                let gain = score.local(y, &cond) - score.local(y, &with(&cond, x));
                if gain > MIN_GAIN {
                    out.push(Deletion {
                        gain,
                        edge: (x, y),
                        heads,
                    });
                }
            }
        }
    }
    out.sort_by(|a, b| {
        b.gain
            .total_cmp(&a.gain)
            .then(a.edge.cmp(&b.edge))
            .then(a.heads.cmp(&b.heads))
    });
    out
}

/// The graph after a deletion, as a DAG, or `None` if the move is not realizable.
fn apply_deletion(g: &Cpdag, d: &Deletion) -> Option<Dag> {
    let (x, y) = d.edge;
    let mut directed = g.directed().clone();
    let mut undirected = g.undirected().clone();
    directed.remove(&(x, y));
    undirected.remove(&(x.min(y), x.max(y)));
    for &h in &d.heads {
        for from in [y, x] {
            if undirected.remove(&(from.min(h), from.max(h))) {
                directed.insert((from, h));
            }
        }
    }
    let pdag = Cpdag::new(g.labels().to_vec(), directed, undirected).ok()?;
    let ext = consistent_extension(&pdag);
    (!ext.fallback).then_some(ext.dag)
}

/// Greedy deletions over equivalence classes; returns the final extension.
fn backward_on_classes(
    start: &Dag,
    score: &dyn LocalScore,
    class_of: &dyn Fn(&Dag) -> Cpdag,
    traj: &mut Vec<f64>,
) -> (Dag, bool) {
    let mut class = class_of(start);
    let mut dag = consistent_extension(&class).dag;
    let mut changed = false;
    loop {
        let current = bic_graph(&dag, score);
        let next = deletions(&class, score).into_iter().find_map(|d| {
            let cand = apply_deletion(&class, &d)?;
            let s = bic_graph(&cand, score);
            (s > current + MIN_GAIN).then_some((cand, s))
        });
        let Some((cand, s)) = next else { return (dag, changed) };
        class = class_of(&cand);
        dag = consistent_extension(&class).dag;
        traj.push(s);
        changed = true;
    }
}

/// Greedy single-edge reversals that keep the graph acyclic.
fn turning(dag: &mut Dag, score: &dyn LocalScore, max_parents: usize, traj: &mut Vec<f64>) -> bool {
    let mut changed = false;
    loop {
        let mut best = None;
        for &(a, b) in dag.edges() {
            let pa_a = dag.parents(a);
            if pa_a.len() >= max_parents {
                continue;
            }
            let mut trial = dag.clone();
            trial.remove_edge(a, b);
            if trial.would_create_cycle(b, a) {
                continue;
            }
            let pa_b = dag.parents(b);
            let gain = score.local(b, &without(&pa_b, a)) + score.local(a, &with(&pa_a, b))
                - score.local(b, &pa_b)
                - score.local(a, &pa_a);
            consider(&mut best, gain, (a, b));
        }
        let Some((_, (a, b))) = best else { return changed };
        dag.remove_edge(a, b);
        dag.add_edge(b, a).expect("reversal checked for cycles");
        traj.push(bic_graph(dag, score));
        changed = true;
    }
}

/// Forward additions in DAG space, mapping to the equivalence class, then
/// backward deletions scored on the best extension of the class.
pub fn ges_with_score(labels: Vec<String>, score: &dyn LocalScore, max_parents: usize, active: &[bool]) -> Result<SearchOutput> {
    let mut dag = Dag::empty(labels)?;
    let mut trajectory = vec![bic_graph(&dag, score)];
    forward(&mut dag, score, max_parents, active, &mut trajectory);
    let (dag, _) = backward_on_classes(&dag, score, &cpdag_of, &mut trajectory);
    Ok(SearchOutput {
        cpdag: cpdag_of(&dag),
        dag,
        trajectory,
        warnings: score.warnings().total(),
    })
}

/// Forward, backward and turning phases iterated to a fixed point with an
/// interventional score; edges at intervened nodes keep the found orientation.
pub fn gies_with_score(
    labels: Vec<String>,
    score: &dyn LocalScore,
    max_parents: usize,
    active: &[bool],
    intervened: &BTreeSet<usize>,
) -> Result<SearchOutput> {
    let mut dag = Dag::empty(labels)?;
    let mut trajectory = vec![bic_graph(&dag, score)];
    let class_of = |d: &Dag| cpdag_of(d).orient_from(d, intervened);
    for _ in 0..1000 {
        let mut changed = forward(&mut dag, score, max_parents, active, &mut trajectory);
        let (after, deleted) = backward_on_classes(&dag, score, &class_of, &mut trajectory);
        dag = after;
        changed |= deleted;
        changed |= turning(&mut dag, score, max_parents, &mut trajectory);
        if !changed {
            break;
        }
    }
    let cpdag = class_of(&dag);
    Ok(SearchOutput {
        cpdag,
        dag,
        trajectory,
        warnings: score.warnings().total(),
    })
}

fn active_columns(data: &Dataset) -> (Vec<bool>, u64) {
    let deg = degenerate_columns(data);
    let skipped = deg.iter().filter(|&&d| d).count() as u64;
    (deg.into_iter().map(|d| !d).collect(), skipped)
}

pub fn ges(data: &Dataset, config: &DiscoveryConfig) -> Result<SearchOutput> {
    config.validate()?;
    let order = label_order(&data.names);
    let sorted = data.select_vars(&order);
    let (active, skipped) = active_columns(&sorted);
    let score = BicScore::new(&sorted)?;
    let mut out = ges_with_score(sorted.names.clone(), &score, config.max_parents, &active)?;
    restore(&mut out, &order, &data.names)?;
    out.warnings += skipped;
    Ok(out)
}

/// `targets[r]` lists the column indices intervened on in row `r`.
///
/// Without any intervention this is exactly [`ges`].
pub fn gies(data: &Dataset, targets: Option<&[Vec<usize>]>, config: &DiscoveryConfig) -> Result<SearchOutput> {
    config.validate()?;
    if !config.use_interventions {
        return ges(data, config);
    }
    let targets = targets.ok_or_else(|| Error::Data("GIES needs per-row intervention targets".into()))?;
    if targets.iter().all(Vec::is_empty) {
        return ges(data, config);
    }
    let order = label_order(&data.names);
    let mut position = vec![0; order.len()];
    for (new, &old) in order.iter().enumerate() {
        position[old] = new;
    }
    let sorted = data.select_vars(&order);
    let remapped: Vec<Vec<usize>> = targets
        .iter()
        .map(|t| t.iter().map(|&v| position[v]).collect())
        .collect();
    let intervened: BTreeSet<usize> = remapped.iter().flatten().copied().collect();
    let (active, skipped) = active_columns(&sorted);
    let score = InterventionalBicScore::new(&sorted, &remapped)?;
    let mut out = gies_with_score(sorted.names.clone(), &score, config.max_parents, &active, &intervened)?;
    restore(&mut out, &order, &data.names)?;
    out.warnings += skipped;
    Ok(out)
}

fn restore(out: &mut SearchOutput, order: &[usize], names: &[String]) -> Result<()> {
    out.cpdag = unpermute(&out.cpdag, order, names)?;
    out.dag = Dag::new(names.to_vec(), out.dag.edges().iter().map(|&(a, b)| (order[a], order[b])))?;
    Ok(())
}
