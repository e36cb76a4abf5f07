//! Skeleton-conditioned graph regressors: one graph per table row, nodes are
//! columns, readout at the target node.

mod layers;
mod skeleton;

pub use layers::{ecc_conv, sage_conv};
pub use skeleton::{build_instances, GraphInstance, GraphSkeleton, Neighbourhood};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::diff::{adam_step, read_params, write_params, AdamState, Params, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::EdgeList;
use crate::rng::{derive_seed, rng, tag};

pub const SAGE_LAYERS: usize = 3;
pub const SAGE_HEAD_LAYERS: usize = 3;
pub const ECC_LAYERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Sage,
    Ecc,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Sage => "sage",
            ModelKind::Ecc => "ecc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sage" => Ok(ModelKind::Sage),
            "ecc" => Ok(ModelKind::Ecc),
            _ => Err(Error::Usage(format!("unknown model '{s}' (sage|ecc)"))),
        }
    }

    pub fn default_lr(self) -> f64 {
        match self {
            ModelKind::Sage => 0.0015,
            ModelKind::Ecc => 0.0020,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnConfig {
    pub kind: ModelKind,
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub neighbourhood: Neighbourhood,
    /// ECC only: attribute of the added self-loop, or `None` for no self-loop.
    pub self_loop_attr: Option<f64>,
    /// SAGE only: keep at most this many neighbours per node (seeded). Off by default.
    pub sage_sample: Option<usize>,
    /// Rows per Adam step; `None` is full batch.
    pub batch_size: Option<usize>,
}

impl GnnConfig {
    pub fn new(kind: ModelKind) -> Self {
        GnnConfig {
            kind,
            hidden: 16,
            lr: kind.default_lr(),
            epochs: 500,
            seed: 0,
            neighbourhood: Neighbourhood::Parents,
            self_loop_attr: Some(0.0),
            sage_sample: None,
            batch_size: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        if self.batch_size == Some(0) || self.sage_sample == Some(0) {
            return Err(Error::Config("batch size and sample size must be positive".into()));
        }
        Ok(())
    }
}

/// Affine map from the network output to raw target units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetScaling {
    pub mean: f64,
    pub sd: f64,
}

impl TargetScaling {
    pub const IDENTITY: TargetScaling = TargetScaling { mean: 0.0, sd: 1.0 };

    /// Mean and population standard deviation; a flat target keeps unit scale.
    pub fn fit(labels: &[f64]) -> Self {
        let n = labels.len() as f64;
        let mean = labels.iter().sum::<f64>() / n;
        let var = labels.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        let sd = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        TargetScaling { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    pub kind: ModelKind,
    pub hidden: usize,
    pub skeleton: GraphSkeleton,
    pub neighbourhood: Neighbourhood,
    pub self_loop_attr: Option<f64>,
    pub sage_sample: Option<usize>,
    pub seed: u64,
    pub params: Params,
    pub scaling: TargetScaling,
    /// Incoming neighbours per node, fixed at construction.
    neighbours: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean squared error on standardized targets, before each epoch's updates.
    pub loss_history: Vec<f64>,
}

fn sage_param_layout(hidden: usize) -> Vec<(String, usize, usize)> {
    let mut v = Vec::new();
    let mut input = 1;
    for k in 0..SAGE_LAYERS {
        v.push((format!("conv{k}.weight"), hidden, 2 * input));
        v.push((format!("conv{k}.bias"), 1, hidden));
        input = hidden;
    }
    for k in 0..SAGE_HEAD_LAYERS {
        let out = if k + 1 == SAGE_HEAD_LAYERS { 1 } else { hidden };
        v.push((format!("head{k}.weight"), out, hidden));
        v.push((format!("head{k}.bias"), 1, out));
    }
    v
}

fn ecc_param_layout(hidden: usize) -> Vec<(String, usize, usize)> {
    let mut v = Vec::new();
    let mut input = 1;
    for k in 0..ECC_LAYERS {
        v.push((format!("conv{k}.filter_weight"), hidden * input, 1));
        v.push((format!("conv{k}.filter_bias"), hidden * input, 1));
        v.push((format!("conv{k}.bias"), 1, hidden));
        input = hidden;
    }
    v.push(("head.weight".into(), 1, hidden));
    v.push(("head.bias".into(), 1, 1));
    v
}

fn layout(kind: ModelKind, hidden: usize) -> Vec<(String, usize, usize)> {
    match kind {
        ModelKind::Sage => sage_param_layout(hidden),
        ModelKind::Ecc => ecc_param_layout(hidden),
    }
}

/// Per-node `batch x 1` input columns, aligned with the skeleton labels.
pub fn node_inputs(instances: &[GraphInstance], n_nodes: usize) -> Vec<Tensor> {
    (0..n_nodes)
        .map(|i| Tensor::column(&instances.iter().map(|g| g.features[i]).collect::<Vec<_>>()))
        .collect()
}

impl GnnModel {
    /// Glorot weights, zero biases. ECC filter networks get Glorot entries in
    /// both the attribute weight and the offset, sized like an `out x in` matrix.
    pub fn new(skeleton: GraphSkeleton, config: &GnnConfig) -> Result<Self> {
        config.validate()?;
        let mut r = rng(derive_seed(config.seed, tag("gnn-init")));
        let mut params = Params::default();
        for (name, rows, cols) in layout(config.kind, config.hidden) {
            let t = if name.ends_with(".bias") && !name.contains("filter") {
                Tensor::zeros(rows, cols)
            } else if name.contains("filter") {
                let input = if name.starts_with("conv0") { 1 } else { config.hidden };
                Tensor::glorot(rows, cols, input, config.hidden, &mut r)
            } else {
                Tensor::glorot(rows, cols, cols, rows, &mut r)
            };
            params.push(&name, t);
        }
        let self_loop_attr = match config.kind {
            ModelKind::Sage => None,
            ModelKind::Ecc => config.self_loop_attr,
        };
        let mut neighbours = skeleton.neighbours(config.neighbourhood, self_loop_attr);
        if let (ModelKind::Sage, Some(k)) = (config.kind, config.sage_sample) {
            let mut sr = rng(derive_seed(config.seed, tag("gnn-sample")));
            for nb in neighbours.iter_mut().filter(|nb| nb.len() > k) {
                nb.shuffle(&mut sr);
                nb.truncate(k);
                nb.sort_by(|x, y| skeleton.labels()[x.0].cmp(&skeleton.labels()[y.0]));
            }
        }
        Ok(GnnModel {
            kind: config.kind,
            hidden: config.hidden,
            skeleton,
            neighbourhood: config.neighbourhood,
            self_loop_attr,
            sage_sample: config.sage_sample,
            seed: config.seed,
            params,
            scaling: TargetScaling::IDENTITY,
            neighbours,
        })
    }

    pub fn neighbours(&self) -> &[Vec<(usize, f64)>] {
        &self.neighbours
    }

    fn depth(&self) -> usize {
        match self.kind {
            ModelKind::Sage => SAGE_LAYERS,
            ModelKind::Ecc => ECC_LAYERS,
        }
    }

    /// Nodes whose embedding at each layer can reach the target readout.
    /// Entry 0 is the input layer, the last entry is `[target]`.
    pub fn receptive_field(&self) -> Vec<Vec<usize>> {
        let n = self.skeleton.n();
        let depth = self.depth();
        let mut needed = vec![vec![false; n]; depth + 1];
        needed[depth][self.skeleton.target()] = true;
        for l in (0..depth).rev() {
            for i in 0..n {
                if needed[l + 1][i] {
                    if self.kind == ModelKind::Sage {
                        needed[l][i] = true;
                    }
                    for &(j, _) in &self.neighbours[i] {
                        needed[l][j] = true;
                    }
                }
            }
        }
        needed
            .into_iter()
            .map(|m| m.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect())
            .collect()
    }

    /// Standardized output, `batch x 1`, built on `tape` from `params`.
    pub fn forward_tape(&self, params: &Params, tape: &mut Tape, inputs: &[Tensor]) -> Var {
        let field = self.receptive_field();
        let n = self.skeleton.n();
        let batch = inputs.first().map_or(0, |t| t.rows);
        let mut h: Vec<Option<Var>> = vec![None; n];
        for &i in &field[0] {
            h[i] = Some(tape.constant(inputs[i].clone()));
        }
        let target = self.skeleton.target();
        let emb = match self.kind {
            ModelKind::Sage => {
                let nb: Vec<Vec<usize>> = self.neighbours.iter().map(|v| v.iter().map(|&(j, _)| j).collect()).collect();
                for k in 0..SAGE_LAYERS {
                    let (w, b) = (tape.param(params, 2 * k), tape.param(params, 2 * k + 1));
                    h = sage_conv(tape, &h, &nb, w, b, k + 1 < SAGE_LAYERS, &field[k + 1]);
                }
                let mut x = h[target].expect("target embedding");
                let base = 2 * SAGE_LAYERS;
                for k in 0..SAGE_HEAD_LAYERS {
                    let (w, b) = (tape.param(params, base + 2 * k), tape.param(params, base + 2 * k + 1));
                    x = tape.linear(x, w, b);
                    if k + 1 < SAGE_HEAD_LAYERS {
                        x = tape.relu(x);
                    }
                }
                x
            }
            ModelKind::Ecc => {
                for k in 0..ECC_LAYERS {
                    let fw = tape.param(params, 3 * k);
                    let fb = tape.param(params, 3 * k + 1);
                    let b = tape.param(params, 3 * k + 2);
                    h = ecc_conv(
                        tape,
                        &h,
                        &self.neighbours,
                        fw,
                        fb,
                        b,
                        self.hidden,
                        batch,
                        k + 1 < ECC_LAYERS,
                        &field[k + 1],
                    );
                }
                let x = h[target].expect("target embedding");
                let (w, b) = (tape.param(params, 3 * ECC_LAYERS), tape.param(params, 3 * ECC_LAYERS + 1));
                tape.linear(x, w, b)
            }
        };
        emb
    }

    /// Raw-unit predictions, in instance order.
    pub fn predict(&self, instances: &[GraphInstance]) -> Vec<f64> {
        if instances.is_empty() {
            return Vec::new();
        }
        let inputs = node_inputs(instances, self.skeleton.n());
        let mut tape = Tape::new();
        let out = self.forward_tape(&self.params, &mut tape, &inputs);
        tape.value(out)
            .data
            .iter()
            .map(|z| self.scaling.mean + self.scaling.sd * z)
            .collect()
    }

    /// Adam on the mean squared error of standardized targets.
    pub fn train(&mut self, instances: &[GraphInstance], config: &GnnConfig) -> Result<TrainReport> {
        config.validate()?;
        if instances.is_empty() {
            return Err(Error::Data("training needs at least one instance".into()));
        }
        let labels: Vec<f64> = instances.iter().map(|g| g.label).collect();
        self.scaling = TargetScaling::fit(&labels);
        let z: Vec<f64> = labels.iter().map(|y| (y - self.scaling.mean) / self.scaling.sd).collect();
        let n_nodes = self.skeleton.n();
        let full_inputs = node_inputs(instances, n_nodes);
        let mut adam = AdamState::new(&self.params, config.lr);
        let mut history = Vec::with_capacity(config.epochs);
        let mut order: Vec<usize> = (0..instances.len()).collect();
        for epoch in 0..config.epochs {
            let batches: Vec<Vec<usize>> = match config.batch_size {
                None => vec![order.clone()],
                Some(bs) => {
                    order.shuffle(&mut rng(derive_seed(config.seed, epoch as u64)));
                    order.chunks(bs).map(<[usize]>::to_vec).collect()
                }
            };
            let mut epoch_loss = 0.0;
            for batch in &batches {
                let (inputs, targets) = if batches.len() == 1 {
                    (full_inputs.clone(), z.clone())
                } else {
                    let sub: Vec<GraphInstance> = batch.iter().map(|&i| instances[i].clone()).collect();
                    (node_inputs(&sub, n_nodes), batch.iter().map(|&i| z[i]).collect())
                };
                let mut tape = Tape::new();
                let out = self.forward_tape(&self.params, &mut tape, &inputs);
                let loss = tape.mse(out, &targets);
                let value = tape.scalar(loss);
                if !value.is_finite() {
                    return Err(Error::Numeric(format!(
                        "{} training loss became {value} at epoch {epoch} (lr {})",
                        self.kind.as_str(),
                        config.lr
                    )));
                }
                epoch_loss += value * batch.len() as f64;
                let grads = tape.param_grads(loss, &self.params);
                adam_step(&mut self.params, &grads, &mut adam);
            }
            history.push(epoch_loss / instances.len() as f64);
        }
        if !self.params.all_finite() {
            return Err(Error::Numeric(format!("{} parameters became non-finite", self.kind.as_str())));
        }
        Ok(TrainReport { loss_history: history })
    }

    /// Writes the parameter file at `path` and a text sidecar at `path.meta`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        write_params(&self.params, &mut bytes)?;
        std::fs::write(path, bytes)?;
        std::fs::write(meta_path(path), self.meta_text())?;
        Ok(())
    }

    fn meta_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "format = soc-gnn").unwrap();
        writeln!(s, "version = 1").unwrap();
        writeln!(s, "kind = {}", self.kind.as_str()).unwrap();
        writeln!(s, "hidden = {}", self.hidden).unwrap();
        writeln!(s, "neighbourhood = {}", self.neighbourhood.as_str()).unwrap();
        match self.self_loop_attr {
            Some(a) => writeln!(s, "self_loop_attr = {a:?}").unwrap(),
            None => writeln!(s, "self_loop_attr = none").unwrap(),
        }
        if let Some(k) = self.sage_sample {
            writeln!(s, "sage_sample = {k}").unwrap();
        }
        writeln!(s, "seed = {}", self.seed).unwrap();
        writeln!(s, "target_mean = {:?}", self.scaling.mean).unwrap();
        writeln!(s, "target_sd = {:?}", self.scaling.sd).unwrap();
        writeln!(s, "target = {}", self.skeleton.target_label()).unwrap();
        for l in self.skeleton.labels() {
            writeln!(s, "node = {l}").unwrap();
        }
        for (a, b, w) in self.skeleton.to_edge_list().edges {
            writeln!(s, "edge = {a}\t{b}\t{w:?}").unwrap();
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta = std::fs::read_to_string(meta_path(path))?;
        let mut kind = None;
        let mut hidden = None;
        let mut neighbourhood = Neighbourhood::Parents;
        let mut self_loop_attr = None;
        let mut scaling = TargetScaling::IDENTITY;
        let mut sage_sample = None;
        let mut seed = 0;
        let mut target = None;
        let mut labels = Vec::new();
        let mut edges = String::new();
        let bad = |k: &str| Error::Data(format!("checkpoint metadata: bad value for '{k}'"));
        for line in meta.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::Data(format!("checkpoint metadata: malformed line '{line}'")))?;
            match k {
                "format" if v != "soc-gnn" => return Err(bad(k)),
                "version" if v != "1" => return Err(bad(k)),
                "format" | "version" => {}
                "kind" => kind = Some(ModelKind::parse(v)?),
                "hidden" => hidden = Some(v.parse::<usize>().map_err(|_| bad(k))?),
                "neighbourhood" => neighbourhood = Neighbourhood::parse(v)?,
                "self_loop_attr" => {
                    self_loop_attr = if v == "none" { None } else { Some(v.parse().map_err(|_| bad(k))?) }
                }
                "sage_sample" => sage_sample = Some(v.parse().map_err(|_| bad(k))?),
                "seed" => seed = v.parse().map_err(|_| bad(k))?,
                "target_mean" => scaling.mean = v.parse().map_err(|_| bad(k))?,
                "target_sd" => scaling.sd = v.parse().map_err(|_| bad(k))?,
                "target" => target = Some(v.to_string()),
                "node" => labels.push(v.to_string()),
                "edge" => {
                    edges.push_str(v);
                    edges.push('\n');
                }
                _ => return Err(Error::Data(format!("checkpoint metadata: unknown key '{k}'"))),
            }
        }
        let kind = kind.ok_or_else(|| bad("kind"))?;
        let target = target.ok_or_else(|| bad("target"))?;
        let skeleton = GraphSkeleton::from_edge_list(labels, &EdgeList::parse(&edges)?, &target)?;
        let mut config = GnnConfig::new(kind);
        config.hidden = hidden.ok_or_else(|| bad("hidden"))?;
        config.neighbourhood = neighbourhood;
        config.self_loop_attr = self_loop_attr;
        config.sage_sample = sage_sample;
        config.seed = seed;
        let mut model = GnnModel::new(skeleton, &config)?;
        let bytes = std::fs::read(path)?;
        let params = read_params(bytes.as_slice(), &model.params.names)?;
        for (loaded, expected) in params.tensors.iter().zip(&model.params.tensors) {
            if loaded.shape() != expected.shape() {
                return Err(Error::Data("checkpoint tensor shapes do not match the model".into()));
            }
        }
        model.params = params;
        model.scaling = scaling;
        Ok(model)
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}
