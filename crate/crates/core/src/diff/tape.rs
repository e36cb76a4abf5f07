use std::collections::HashMap;

use super::tensor::{gemm, Tensor};
use super::Params;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(usize),
    /// `x w^T`
    MatMulT(Var, Var),
    /// `x + b` with `b` a 1 x cols row broadcast over rows.
    AddRow(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Concat(Var, Var),
    Mean(Vec<Var>),
    /// Filter matrix `reshape(attr * w + b)` to `rows x cols`.
    EdgeFilter { w: Var, b: Var, attr: f64 },
    /// Mean squared error against fixed targets.
    Mse(Var, Vec<f64>),
}

/// Define-by-run record of a computation, differentiated in reverse.
#[derive(Default)]
pub struct Tape {
    values: Vec<Tensor>,
    ops: Vec<Op>,
    params: HashMap<usize, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "not a scalar");
        t.data[0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    /// Parameter `index` of `params`; recorded once per tape.
    pub fn param(&mut self, params: &Params, index: usize) -> Var {
        if let Some(&v) = self.params.get(&index) {
            return v;
        }
        let v = self.push(params.tensors[index].clone(), Op::Param(index));
        self.params.insert(index, v);
        v
    }

    /// `x w^T` for `x: B x in`, `w: out x in`.
    pub fn matmul_t(&mut self, x: Var, w: Var) -> Var {
        let (xv, wv) = (self.value(x), self.value(w));
        let mut out = Tensor::zeros(xv.rows, wv.rows);
        gemm(1.0, xv, false, wv, true, &mut out);
        self.push(out, Op::MatMulT(x, w))
    }

    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(b));
        assert_eq!((bv.rows, bv.cols), (1, xv.cols), "bias shape");
        let mut out = xv.clone();
        for r in 0..out.rows {
            for (o, bb) in out.data[r * out.cols..(r + 1) * out.cols].iter_mut().zip(&bv.data) {
                *o += bb;
            }
        }
        self.push(out, Op::AddRow(x, b))
    }

    /// Dense layer `x W^T + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let h = self.matmul_t(x, w);
        self.add_row(h, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let mut out = self.value(a).clone();
        out.data.iter_mut().for_each(|v| *v *= c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.data.iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(out, Op::Relu(a))
    }

    /// Column-wise concatenation `[a, b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.rows, bv.rows, "concat row mismatch");
        let cols = av.cols + bv.cols;
        let mut out = Tensor::zeros(av.rows, cols);
        for r in 0..av.rows {
            out.data[r * cols..r * cols + av.cols].copy_from_slice(&av.data[r * av.cols..(r + 1) * av.cols]);
            out.data[r * cols + av.cols..(r + 1) * cols].copy_from_slice(&bv.data[r * bv.cols..(r + 1) * bv.cols]);
        }
        self.push(out, Op::Concat(a, b))
    }

    /// Elementwise mean of equally shaped values.
    pub fn mean(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "mean of nothing");
        let mut out = self.value(xs[0]).clone();
        for &x in &xs[1..] {
            out.add_assign(self.value(x));
        }
        let inv = 1.0 / xs.len() as f64;
        out.data.iter_mut().for_each(|v| *v *= inv);
        self.push(out, Op::Mean(xs.to_vec()))
    }

    /// `rows x cols` matrix whose row-major entries are `attr * w + b`,
    /// with `w` and `b` both `(rows * cols) x 1`.
    pub fn edge_filter(&mut self, w: Var, b: Var, attr: f64, rows: usize, cols: usize) -> Var {
        let (wv, bv) = (self.value(w), self.value(b));
        assert_eq!(wv.len(), rows * cols, "filter weight size");
        assert_eq!(bv.len(), rows * cols, "filter bias size");
        let data = wv.data.iter().zip(&bv.data).map(|(a, c)| attr * a + c).collect();
        self.push(Tensor::new(rows, cols, data), Op::EdgeFilter { w, b, attr })
    }

    /// Mean over all entries of `(pred - target)^2`.
    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Var {
        let pv = self.value(pred);
        assert_eq!(pv.len(), target.len(), "mse length mismatch");
        let loss = pv.data.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / target.len() as f64;
        self.push(Tensor::new(1, 1, vec![loss]), Op::Mse(pred, target.to_vec()))
    }

    /// Smallest `|x|` over all ReLU inputs on the tape; finite differences
    /// with a step below this never cross a kink.
    pub fn relu_margin(&self) -> f64 {
        self.ops
            .iter()
            .filter_map(|op| match op {
                Op::Relu(a) => Some(self.value(*a).data.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))),
                _ => None,
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Gradient of the scalar `root` with respect to every recorded value.
    pub fn backward(&self, root: Var) -> Vec<Option<Tensor>> {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.values.len()];
        let rv = self.value(root);
        grads[root.0] = Some(Tensor::filled(rv.rows, rv.cols, 1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.ops[i] {
                Op::Constant | Op::Param(_) => {}
                Op::MatMulT(x, w) => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let mut gx = Tensor::zeros(xv.rows, xv.cols);
                    gemm(1.0, &g, false, wv, false, &mut gx);
                    let mut gw = Tensor::zeros(wv.rows, wv.cols);
                    gemm(1.0, &g, true, xv, false, &mut gw);
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *w, gw);
                }
                Op::AddRow(x, b) => {
                    let mut gb = Tensor::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (acc, v) in gb.data.iter_mut().zip(&g.data[r * g.cols..(r + 1) * g.cols]) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *b, gb);
                    accumulate(&mut grads, *x, g.clone());
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Scale(a, c) => {
                    let mut ga = g.clone();
                    ga.data.iter_mut().for_each(|v| *v *= c);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let mut ga = g.clone();
                    for (v, x) in ga.data.iter_mut().zip(&self.value(*a).data) {
                        if *x <= 0.0 {
                            *v = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Concat(a, b) => {
                    let (ac, bc) = (self.value(*a).cols, self.value(*b).cols);
                    let mut ga = Tensor::zeros(g.rows, ac);
                    let mut gb = Tensor::zeros(g.rows, bc);
                    for r in 0..g.rows {
                        ga.data[r * ac..(r + 1) * ac].copy_from_slice(&g.data[r * g.cols..r * g.cols + ac]);
                        gb.data[r * bc..(r + 1) * bc].copy_from_slice(&g.data[r * g.cols + ac..(r + 1) * g.cols]);
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Mean(xs) => {
                    let mut share = g.clone();
                    let inv = 1.0 / xs.len() as f64;
                    share.data.iter_mut().for_each(|v| *v *= inv);
                    for &x in xs {
                        accumulate(&mut grads, x, share.clone());
                    }
                }
                Op::EdgeFilter { w, b, attr } => {
                    let flat = Tensor::new(g.len(), 1, g.data.clone());
                    let mut gw = flat.clone();
                    gw.data.iter_mut().for_each(|v| *v *= attr);
                    accumulate(&mut grads, *w, gw);
                    accumulate(&mut grads, *b, flat);
                }
                Op::Mse(p, target) => {
                    let pv = self.value(*p);
                    let k = 2.0 * g.data[0] / target.len() as f64;
                    let data = pv.data.iter().zip(target).map(|(x, t)| k * (x - t)).collect();
                    accumulate(&mut grads, *p, Tensor::new(pv.rows, pv.cols, data));
                }
            }
            grads[i] = Some(g);
        }
        grads
    }

    /// Gradients for every parameter of `params` (zeros for unused ones).
    pub fn param_grads(&self, root: Var, params: &Params) -> Vec<Tensor> {
        let grads = self.backward(root);
        let mut out: Vec<Tensor> = params.tensors.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect();
        for (i, op) in self.ops.iter().enumerate() {
            if let (Op::Param(p), Some(g)) = (op, &grads[i]) {
                out[*p].add_assign(g);
            }
        }
        out
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot => *slot = Some(g),
    }
}
