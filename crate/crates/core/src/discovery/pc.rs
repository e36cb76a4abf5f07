use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::ci::{CiTest, FisherZ};
use super::{degenerate_columns, DiscoveryConfig};
use crate::error::{Error, Result};
use crate::graph::{is_acyclic, meek_closure, Cpdag};
use crate::stats::Dataset;

#[derive(Debug, Clone)]
pub struct PcOutput {
    pub cpdag: Cpdag,
    /// Separating set for every removed pair `(a, b)`, `a < b`.
    pub sepsets: BTreeMap<(usize, usize), Vec<usize>>,
    pub n_tests: usize,
}

/// Calls `f` on each `k`-subset of `items` in lexicographic order until it returns `Some`.
fn first_subset<T>(items: &[usize], k: usize, mut f: impl FnMut(&[usize]) -> Result<Option<T>>) -> Result<Option<T>> {
    if k > items.len() {
        return Ok(None);
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut subset = vec![0; k];
    loop {
        for (s, &i) in subset.iter_mut().zip(&idx) {
            *s = items[i];
        }
        if let Some(t) = f(&subset)? {
            return Ok(Some(t));
        }
        // advance
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(None);
            }
            pos -= 1;
            if idx[pos] < items.len() - k + pos {
                idx[pos] += 1;
                for q in pos + 1..k {
                    idx[q] = idx[q - 1] + 1;
                }
                break;
            }
        }
    }
}

/// PC with the order-stable skeleton phase, on node indices `0..test.n_vars()`.
///
/// Nodes flagged in `skip` start isolated.
pub fn pc_with_test(labels: Vec<String>, test: &dyn CiTest, max_cond_size: usize, skip: &[bool]) -> Result<PcOutput> {
    let n = test.n_vars();
    if labels.len() != n || skip.len() != n {
        return Err(Error::Data("PC: labels, test and skip flags disagree in size".into()));
    }
    let mut adj: Vec<BTreeSet<usize>> = (0..n)
        .map(|i| {
            if skip[i] {
                BTreeSet::new()
            } else {
                (0..n).filter(|&j| j != i && !skip[j]).collect()
            }
        })
        .collect();
    let mut sepsets = BTreeMap::new();
    let mut n_tests = 0usize;
    for level in 0..=max_cond_size {
        let frozen = adj.clone();
        if !frozen.iter().any(|a| a.len() > level) {
            break;
        }
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| frozen[i].iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect();
        let results: Vec<Result<(Option<Vec<usize>>, usize)>> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let mut count = 0;
                for (x, y) in [(i, j), (j, i)] {
                    let cands: Vec<usize> = frozen[x].iter().copied().filter(|&c| c != y).collect();
                    let found = first_subset(&cands, level, |s| {
                        count += 1;
                        Ok(test.independent(i, j, s)?.then(|| s.to_vec()))
                    })?;
                    if found.is_some() {
                        return Ok((found, count));
                    }
                }
                Ok((None, count))
            })
            .collect();
        for (&(i, j), res) in pairs.iter().zip(results) {
            let (sep, count) = res?;
            n_tests += count;
            if let Some(s) = sep {
                adj[i].remove(&j);
                adj[j].remove(&i);
                sepsets.insert((i, j), s);
            }
        }
    }

    // collider orientation from separating sets
    let mut directed: BTreeSet<(usize, usize)> = BTreeSet::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if adj[a].contains(&b) {
                continue;
            }
            let Some(sep) = sepsets.get(&(a, b)) else { continue };
            for &c in adj[a].intersection(&adj[b]) {
                if sep.contains(&c) {
                    continue;
                }
                for x in [a, b] {
                    if directed.contains(&(c, x)) || directed.contains(&(x, c)) {
                        continue;
                    }
                    directed.insert((x, c));
                    if !is_acyclic(n, &directed) {
                        directed.remove(&(x, c));
                    }
                }
            }
        }
    }
    let undirected: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| adj[i].iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
        .filter(|&(i, j)| !directed.contains(&(i, j)) && !directed.contains(&(j, i)))
        .collect();
    let cpdag = meek_closure(&Cpdag::new(labels, directed, undirected)?);
    Ok(PcOutput {
        cpdag,
        sepsets,
        n_tests,
    })
}

/// Sorting permutation of labels, so results do not depend on column order.
pub(crate) fn label_order(names: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| names[a].cmp(&names[b]));
    order
}

/// Relabels a graph computed on `order`-permuted columns back to the input order.
pub(crate) fn unpermute(g: &Cpdag, order: &[usize], names: &[String]) -> Result<Cpdag> {
    Cpdag::new(
        names.to_vec(),
        g.directed().iter().map(|&(a, b)| (order[a], order[b])),
        g.undirected().iter().map(|&(a, b)| (order[a], order[b])),
    )
}

/// PC with Fisher-z tests on `data`.
pub fn pc(data: &Dataset, config: &DiscoveryConfig) -> Result<(Cpdag, u64)> {
    config.validate()?;
    let order = label_order(&data.names);
    let sorted = data.select_vars(&order);
    let skip = degenerate_columns(&sorted);
    let test = FisherZ::new(&sorted, config.alpha)?;
    for _ in skip.iter().filter(|&&s| s) {
        test.warnings().unwrap().note_degenerate();
    }
    let out = pc_with_test(sorted.names.clone(), &test, config.max_cond_size, &skip)?;
    let warnings = test.warnings().unwrap().total();
    Ok((unpermute(&out.cpdag, &order, &data.names)?, warnings))
}
