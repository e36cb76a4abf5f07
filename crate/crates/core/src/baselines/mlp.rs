use rand::seq::SliceRandom;

use super::Design;
use crate::diff::{adam_step, mse, AdamState, Params, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::gnn::TargetScaling;
use crate::rng::{derive_seed, rng, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub feature_names: Vec<String>,
    pub hidden: Vec<usize>,
    pub params: Params,
    pub scaling: TargetScaling,
}

fn rows_tensor(x: &[Vec<f64>]) -> Tensor {
    let d = x.first().map_or(0, Vec::len);
    Tensor::new(x.len(), d, x.iter().flatten().copied().collect())
}

impl Mlp {
    pub fn new(feature_names: Vec<String>, hidden: &[usize], seed: u64) -> Self {
        let mut r = rng(derive_seed(seed, tag("mlp-init")));
        let mut params = Params::default();
        let mut input = feature_names.len();
        for (k, &h) in hidden.iter().chain(std::iter::once(&1)).enumerate() {
            params.push(&format!("dense{k}.weight"), Tensor::glorot(h, input, input, h, &mut r));
            params.push(&format!("dense{k}.bias"), Tensor::zeros(1, h));
            input = h;
        }
        Mlp {
            feature_names,
            hidden: hidden.to_vec(),
            params,
            scaling: TargetScaling::IDENTITY,
        }
    }

    /// Standardized output for a `batch x d` input.
    pub fn forward_tape(&self, params: &Params, tape: &mut Tape, x: Var) -> Var {
        let layers = self.hidden.len() + 1;
        let mut h = x;
        for k in 0..layers {
            let (w, b) = (tape.param(params, 2 * k), tape.param(params, 2 * k + 1));
            h = tape.linear(h, w, b);
            if k + 1 < layers {
                h = tape.relu(h);
            }
        }
        h
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<f64> {
        if x.is_empty() {
            return Vec::new();
        }
        let mut tape = Tape::new();
        let xv = tape.constant(rows_tensor(x));
        let out = self.forward_tape(&self.params, &mut tape, xv);
        tape.value(out)
            .data
            .iter()
            .map(|z| self.scaling.mean + self.scaling.sd * z)
            .collect()
    }
}

/// Full-batch Adam on standardized targets; returns the model and per-epoch loss.
pub fn mlp_train(design: &Design, config: &MlpConfig, seed: u64) -> Result<(Mlp, Vec<f64>)> {
    design.check_trainable()?;
    if !(config.lr.is_finite() && config.lr >= 0.0) || config.hidden.contains(&0) {
        return Err(Error::Config("MLP needs lr >= 0 and positive widths".into()));
    }
    let mut model = Mlp::new(design.feature_names.clone(), &config.hidden, seed);
    model.scaling = TargetScaling::fit(&design.y);
    let z: Vec<f64> = design.y.iter().map(|y| (y - model.scaling.mean) / model.scaling.sd).collect();
    let x = rows_tensor(&design.x);
    let mut adam = AdamState::new(&model.params, config.lr);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let out = model.forward_tape(&model.params, &mut tape, xv);
        let loss = tape.mse(out, &z);
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Numeric(format!("MLP training loss became {value} at epoch {epoch}")));
        }
        history.push(value);
        let grads = tape.param_grads(loss, &model.params);
        adam_step(&mut model.params, &grads, &mut adam);
    }
    Ok((model, history))
}

pub const GRID_DEPTHS: [usize; 3] = [1, 2, 3];
pub const GRID_WIDTHS: [usize; 3] = [16, 64, 128];
pub const GRID_LRS: [f64; 2] = [1e-3, 1e-2];

/// Every grid point, in a fixed order.
pub fn mlp_grid(epochs: usize) -> Vec<MlpConfig> {
    let mut out = Vec::new();
    for &depth in &GRID_DEPTHS {
        for &width in &GRID_WIDTHS {
            for &lr in &GRID_LRS {
                out.push(MlpConfig {
                    hidden: vec![width; depth],
                    lr,
                    epochs,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridEntry {
    pub config: MlpConfig,
    pub validation_mse: f64,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: MlpConfig,
    pub log: Vec<GridEntry>,
    /// Refit on the whole training design with the best configuration.
    pub model: Mlp,
}

/// Seeded 80/20 row split of the training design: (fit rows, validation rows).
pub fn validation_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng(derive_seed(seed, tag("mlp-validation"))));
    let n_val = ((n as f64) * 0.2).round().max(1.0) as usize;
    let n_val = n_val.min(n.saturating_sub(1));
    let (val, fit) = idx.split_at(n_val);
    let (mut fit, mut val) = (fit.to_vec(), val.to_vec());
    fit.sort_unstable();
    val.sort_unstable();
    (fit, val)
}

/// Scores every configuration on a held-out 20% of the training rows, picks the
/// lowest validation MSE (first on ties), and refits it on all training rows.
pub fn mlp_grid_search(design: &Design, grid: &[MlpConfig], seed: u64) -> Result<GridResult> {
    design.check_trainable()?;
    if grid.is_empty() {
        return Err(Error::Config("empty MLP grid".into()));
    }
    if design.y.len() < 2 {
        return Err(Error::Data("grid search needs at least two training rows".into()));
    }
    let (fit_rows, val_rows) = validation_split(design.y.len(), seed);
    let fit = design.subset(&fit_rows);
    let val = design.subset(&val_rows);
    let mut log = Vec::with_capacity(grid.len());
    for config in grid {
        let (m, _) = mlp_train(&fit, config, seed)?;
        log.push(GridEntry {
            config: config.clone(),
            validation_mse: mse(&m.predict(&val.x), &val.y),
        });
    }
    let best = best_of(&log).clone();
    let (model, _) = mlp_train(design, &best, seed)?;
    Ok(GridResult { best, log, model })
}

/// Lowest validation MSE; the earliest entry wins ties.
pub fn best_of(log: &[GridEntry]) -> &MlpConfig {
    let mut best = &log[0];
    for e in &log[1..] {
        if e.validation_mse < best.validation_mse {
            best = e;
        }
    }
    &best.config
}
