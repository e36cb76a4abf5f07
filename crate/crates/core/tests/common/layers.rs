//! Literal per-node recomputations of the two message-passing layers.

use chrono::NaiveDate;
use rand::Rng;
use soc_causal::diff::{finite_diff_check, FdReport, Params, Tape, Tensor};
use soc_causal::gnn::{node_inputs, GnnConfig, GnnModel, GraphInstance, GraphSkeleton, ModelKind, Neighbourhood};
use soc_causal::rng::rng;

pub fn random_edges(r: &mut impl Rng, n: usize, p: f64, attrs: &[f64]) -> Vec<(usize, usize, f64)> {
    let mut e = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && r.random_bool(p) {
                e.push((a, b, attrs[r.random_range(0..attrs.len())]));
            }
        }
    }
    e
}

pub fn random_matrix(r: &mut impl Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| r.random_range(-1.0..1.0)).collect()).collect()
}

pub fn to_tensor(m: &[Vec<f64>]) -> Tensor {
    Tensor::new(m.len(), m[0].len(), m.iter().flatten().copied().collect())
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

/// Per node, per batch row, straight from the update rule.
pub fn naive_sage(h: &[Vec<Vec<f64>>], parents: &[Vec<usize>], w: &[Vec<f64>], b: &[f64], relu: bool) -> Vec<Vec<Vec<f64>>> {
    let n = h.len();
    let batch = h[0].len();
    let d = h[0][0].len();
    let mut out = vec![vec![vec![0.0; b.len()]; batch]; n];
    for i in 0..n {
        for r in 0..batch {
            let mut agg = vec![0.0; d];
            for &u in &parents[i] {
                for k in 0..d {
                    agg[k] += h[u][r][k];
                }
            }
            if !parents[i].is_empty() {
                for v in agg.iter_mut() {
                    *v /= parents[i].len() as f64;
                }
            }
            let x: Vec<f64> = h[i][r].iter().chain(&agg).copied().collect();
            for o in 0..b.len() {
                let mut s = b[o];
                for k in 0..x.len() {
                    s += w[o][k] * x[k];
                }
                out[i][r][o] = if relu { s.max(0.0) } else { s };
            }
        }
    }
    out
}

/// Literal per-edge filter application.
pub fn naive_ecc(
    h: &[Vec<Vec<f64>>],
    nbrs: &[Vec<(usize, f64)>],
    fw: &[f64],
    fb: &[f64],
    bias: &[f64],
    relu: bool,
) -> Vec<Vec<Vec<f64>>> {
    let n = h.len();
    let batch = h[0].len();
    let din = h[0][0].len();
    let dout = bias.len();
    let mut out = vec![vec![vec![0.0; dout]; batch]; n];
    for i in 0..n {
        for r in 0..batch {
            for o in 0..dout {
                let mut s = 0.0;
                for &(j, e) in &nbrs[i] {
                    for k in 0..din {
                        let f = e * fw[o * din + k] + fb[o * din + k];
                        s += f * h[j][r][k];
                    }
                }
                if !nbrs[i].is_empty() {
                    s /= nbrs[i].len() as f64;
                }
                s += bias[o];
                out[i][r][o] = if relu { s.max(0.0) } else { s };
            }
        }
    }
    out
}

pub fn instance(features: Vec<f64>, label: f64) -> GraphInstance {
    GraphInstance {
        features,
        label,
        field_id: "f".into(),
        date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
        treatment: "t".into(),
    }
}

pub fn random_instances(r: &mut impl Rng, n_nodes: usize, target: usize, count: usize) -> Vec<GraphInstance> {
    (0..count)
        .map(|_| {
            let mut f: Vec<f64> = (0..n_nodes).map(|_| r.random_range(0.0..1.0)).collect();
            let y = f.iter().sum::<f64>();
            f[target] = 0.0;
            instance(f, y)
        })
        .collect()
}

/// Whole-model finite-difference report on a random kink-free draw.
pub fn model_gradient_report(kind: ModelKind, seed: u64, neighbourhood: Neighbourhood) -> FdReport {
    let mut r = rng(700 + seed);
    // Redraw until no ReLU input sits within reach of the step (1e-5 times
    // parameter-scale slopes), where central differences are meaningless.
    for _attempt in 0..50 {
        let n = r.random_range(3..7);
        let target = r.random_range(0..n);
        let names = (0..n).map(|i| format!("n{i}")).collect();
        let skel = GraphSkeleton::from_indices(names, random_edges(&mut r, n, 0.3, &[1.0]), target).unwrap();
        let mut cfg = GnnConfig::new(kind);
        cfg.hidden = 3;
        cfg.seed = seed;
        cfg.neighbourhood = neighbourhood;
        let mut m = GnnModel::new(skel, &cfg).unwrap();
        // Nonzero biases so every path carries signal.
        for t in m.params.tensors.iter_mut() {
            for v in t.data.iter_mut().filter(|v| **v == 0.0) {
                *v = r.random_range(-0.5..0.5);
            }
        }
        let inst = random_instances(&mut r, n, target, 4);
        let inputs = node_inputs(&inst, n);
        let mut probe = Tape::new();
        m.forward_tape(&m.params, &mut probe, &inputs);
        if probe.relu_margin() < 1e-3 {
            continue;
        }
        let labels: Vec<f64> = inst.iter().map(|g| g.label).collect();
        let report = finite_diff_check(
            &m.params,
            &|p: &Params, tape: &mut Tape| {
                let out = m.forward_tape(p, tape, &inputs);
                tape.mse(out, &labels)
            },
            1e-5,
            1e-4,
        );
        return report;
    }
    panic!("no kink-free draw for {kind:?} seed {seed}");
}
