//! Small reverse-mode differentiation engine over dense f64 matrices.

mod tape;
mod tensor;

pub use tape::{Tape, Var};
pub use tensor::Tensor;

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Named trainable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl Params {
    pub fn push(&mut self, name: &str, t: Tensor) -> usize {
        self.names.push(name.to_string());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn n_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    pub fn zeroed(&self) -> Params {
        Params {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect(),
        }
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &Params, lr: f64) -> Self {
        let zeros = params.zeroed().tensors;
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

pub fn adam_step(params: &mut Params, grads: &[Tensor], state: &mut AdamState) {
    assert_eq!(grads.len(), params.tensors.len(), "gradient count");
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (k, p) in params.tensors.iter_mut().enumerate() {
        let (m, v, g) = (&mut state.m[k], &mut state.v[k], &grads[k]);
        for i in 0..p.data.len() {
            m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * g.data[i];
            v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * g.data[i] * g.data[i];
            let mhat = m.data[i] / c1;
            let vhat = v.data[i] / c2;
            p.data[i] -= state.lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
}

pub fn mse(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len());
    pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64
}

pub fn mae(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len());
    pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// (parameter name, flat index) of the worst entry.
    pub worst: Option<(String, usize)>,
    pub n_checked: usize,
    pub pass: bool,
}

/// Compares reverse-mode gradients of `loss` with central differences of step `h`.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-3)`.
pub fn finite_diff_check(params: &Params, loss: &dyn Fn(&Params, &mut Tape) -> Var, h: f64, tol: f64) -> FdReport {
    let mut tape = Tape::new();
    let root = loss(params, &mut tape);
    let analytic = tape.param_grads(root, params);
    let eval = |p: &Params| {
        let mut t = Tape::new();
        let r = loss(p, &mut t);
        t.scalar(r)
    };
    let mut probe = params.clone();
    let mut worst = None;
    let mut max_rel = 0.0f64;
    let mut n = 0;
    for k in 0..params.tensors.len() {
        for i in 0..params.tensors[k].len() {
            let orig = params.tensors[k].data[i];
            probe.tensors[k].data[i] = orig + h;
            let up = eval(&probe);
            probe.tensors[k].data[i] = orig - h;
            let down = eval(&probe);
            probe.tensors[k].data[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k].data[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            n += 1;
            if rel > max_rel || rel.is_nan() {
                max_rel = if rel.is_nan() { f64::INFINITY } else { rel };
                worst = Some((params.names[k].clone(), i));
            }
        }
    }
    FdReport {
        max_rel_error: max_rel,
        worst,
        n_checked: n,
        pass: max_rel < tol,
    }
}

const MAGIC: &[u8; 4] = b"SOCP";
const VERSION: u32 = 1;

/// Flat checkpoint: magic `SOCP`, u32 version, u32 tensor count, then per
/// tensor a u32 rank, u64 dims and little-endian f64 values.
pub fn write_params<W: Write>(params: &Params, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(params.tensors.len() as u32).to_le_bytes())?;
    for t in &params.tensors {
        out.write_all(&2u32.to_le_bytes())?;
        out.write_all(&(t.rows as u64).to_le_bytes())?;
        out.write_all(&(t.cols as u64).to_le_bytes())?;
        for v in &t.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads tensors written by [`write_params`]; names come from the caller's template.
pub fn read_params<R: Read>(mut input: R, names: &[String]) -> Result<Params> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Data("not a parameter checkpoint".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(Error::Data(format!("unsupported checkpoint version {version}")));
    }
    let count = read_u32(&mut input)? as usize;
    if count != names.len() {
        return Err(Error::Data(format!(
            "checkpoint holds {count} tensors, model expects {}",
            names.len()
        )));
    }
    let mut params = Params::default();
    for name in names {
        let rank = read_u32(&mut input)? as usize;
        let dims: Vec<usize> = (0..rank).map(|_| read_u64(&mut input).map(|d| d as usize)).collect::<Result<_>>()?;
        let (rows, cols) = match dims.as_slice() {
            [r, c] => (*r, *c),
            [r] => (*r, 1),
            _ => return Err(Error::Data(format!("tensor '{name}' has unsupported rank {rank}"))),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let mut b = [0u8; 8];
            input.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        params.push(name, Tensor::new(rows, cols, data));
    }
    Ok(params)
}
