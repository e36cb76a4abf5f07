//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

pub mod layers;

use std::collections::{BTreeMap, BTreeSet};

use soc_causal::graph::{v_structures, Cpdag, Dag};

pub fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i}")).collect()
}

/// Every labelled DAG on `n` nodes, by brute force over pair states.
pub fn all_dags(n: usize) -> Vec<Dag> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b))).collect();
    let total = 3usize.pow(pairs.len() as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut c = code;
        let mut edges = Vec::new();
        for &(a, b) in &pairs {
            match c % 3 {
                1 => edges.push((a, b)),
                2 => edges.push((b, a)),
                _ => {}
            }
            c /= 3;
        }
        if let Ok(d) = Dag::new(labels(n), edges) {
            out.push(d);
        }
    }
    out
}

pub fn skeleton(d: &Dag) -> BTreeSet<(usize, usize)> {
    d.edges().iter().map(|&(a, b)| (a.min(b), a.max(b))).collect()
}

/// Markov equivalence by the skeleton + v-structure characterization.
pub fn markov_equivalent(a: &Dag, b: &Dag) -> bool {
    skeleton(a) == skeleton(b) && v_structures(a) == v_structures(b)
}

/// Equivalence classes keyed by (skeleton, v-structures).
pub fn classes(dags: &[Dag]) -> BTreeMap<(Vec<(usize, usize)>, Vec<(usize, usize, usize)>), Vec<Dag>> {
    let mut m: BTreeMap<_, Vec<Dag>> = BTreeMap::new();
    for d in dags {
        let key = (
            skeleton(d).into_iter().collect::<Vec<_>>(),
            v_structures(d).into_iter().collect::<Vec<_>>(),
        );
        m.entry(key).or_default().push(d.clone());
    }
    m
}

/// CPDAG as the edge-direction intersection over an enumerated class.
pub fn cpdag_by_enumeration(class: &[Dag]) -> Cpdag {
    let first = &class[0];
    let mut dir = Vec::new();
    let mut und = Vec::new();
    for (a, b) in skeleton(first) {
        let fwd = class.iter().all(|d| d.has_edge(a, b));
        let bwd = class.iter().all(|d| d.has_edge(b, a));
        if fwd {
            dir.push((a, b));
        } else if bwd {
            dir.push((b, a));
        } else {
            und.push((a, b));
        }
    }
    Cpdag::new(first.labels().to_vec(), dir, und).unwrap()
}

/// All DAG extensions of a PDAG: orient every undirected edge both ways,
/// keep acyclic results with the PDAG's directed edges and no new v-structures.
pub fn extensions(g: &Cpdag) -> BTreeSet<Vec<(usize, usize)>> {
    let und: Vec<(usize, usize)> = g.undirected().iter().copied().collect();
    let mut base_dir = g.directed().clone();
    let pattern_vs = {
        // v-structures already present among directed edges with nonadjacent tails
        let mut vs = BTreeSet::new();
        for c in 0..g.n() {
            let ps: Vec<usize> = g.directed().iter().filter(|e| e.1 == c).map(|e| e.0).collect();
            for (k, &a) in ps.iter().enumerate() {
                for &b in &ps[k + 1..] {
                    if !g.adjacent(a, b) {
                        vs.insert((a.min(b), c, a.max(b)));
                    }
                }
            }
        }
        vs
    };
    let mut out = BTreeSet::new();
    for mask in 0..(1u32 << und.len()) {
        let mut edges = std::mem::take(&mut base_dir);
        let keep = edges.clone();
        for (k, &(a, b)) in und.iter().enumerate() {
            if mask >> k & 1 == 1 {
                edges.insert((a, b));
            } else {
                edges.insert((b, a));
            }
        }
        if let Ok(d) = Dag::new(g.labels().to_vec(), edges.iter().copied()) {
            if v_structures(&d) == pattern_vs {
                out.insert(edges.iter().copied().collect());
            }
        }
        base_dir = keep;
    }
    out
}

/// Reachability by repeated boolean squaring of (I + A).
pub fn closure_by_squaring(n: usize, edges: &BTreeSet<(usize, usize)>) -> Vec<Vec<bool>> {
    let mut r = vec![vec![false; n]; n];
    for i in 0..n {
        r[i][i] = true;
    }
    for &(a, b) in edges {
        r[a][b] = true;
    }
    let mut steps = 1;
    while steps < n {
        let mut nr = vec![vec![false; n]; n];
        for i in 0..n {
            for k in 0..n {
                if r[i][k] {
                    for j in 0..n {
                        if r[k][j] {
                            nr[i][j] = true;
                        }
                    }
                }
            }
        }
        r = nr;
        steps *= 2;
    }
    r
}

/// Brute-force v-structure scan over every ordered triple.
pub fn v_structures_brute(d: &Dag) -> BTreeSet<(usize, usize, usize)> {
    let n = d.n();
    let mut out = BTreeSet::new();
    for a in 0..n {
        for b in (a + 1)..n {
            for c in 0..n {
                if c != a && c != b && d.has_edge(a, c) && d.has_edge(b, c) && !d.adjacent(a, b) {
                    out.insert((a, c, b));
                }
            }
        }
    }
    out
}

/// Standard-normal draws from a seeded generator.
pub fn normals(seed: u64, n: usize) -> Vec<f64> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Gaussian elimination with partial pivoting; small dense systems only.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n).max_by(|&x, &y| a[x][k].abs().total_cmp(&a[y][k].abs())).unwrap();
        a.swap(k, piv);
        b.swap(k, piv);
        for r in (k + 1)..n {
            let f = a[r][k] / a[k][k];
            for c in k..n {
                a[r][c] -= f * a[k][c];
            }
            b[r] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = ((k + 1)..n).map(|c| a[k][c] * x[c]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

/// Residuals of `y` after least squares on `xs` with an intercept.
pub fn ols_residuals(y: &[f64], xs: &[&[f64]]) -> Vec<f64> {
    let n = y.len();
    let design: Vec<Vec<f64>> = (0..n)
        .map(|r| std::iter::once(1.0).chain(xs.iter().map(|x| x[r])).collect())
        .collect();
    let k = xs.len() + 1;
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for r in 0..n {
        for a in 0..k {
            xty[a] += design[r][a] * y[r];
            for b in 0..k {
                xtx[a][b] += design[r][a] * design[r][b];
            }
        }
    }
    let beta = solve_dense(xtx, xty);
    (0..n)
        .map(|r| y[r] - (0..k).map(|a| design[r][a] * beta[a]).sum::<f64>())
        .collect()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}
