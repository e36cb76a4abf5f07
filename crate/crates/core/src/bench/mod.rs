//! Treatment-split experiment: discovery on training systems, skeleton-conditioned
//! GNNs against non-causal baselines, evaluation on the held-out system.

mod config;
mod report;

pub use config::BenchConfig;
pub use report::{
    causal_ordering_holds, distribution_summary, histograms_csv, median, render_report, summarise, write_outputs, Histogram,
    MethodSummary, Report,
};

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::baselines::{gbt_train, mlp_grid, mlp_grid_search, random_skeleton, rf_train, Design, GbtConfig, RfConfig};
use crate::diff::write_params;
use crate::discovery::{ges, gies, pc, Algorithm};
use crate::error::{Error, Result, StageExt};
use crate::gnn::{build_instances, GnnConfig, GnnModel, GraphInstance, GraphSkeleton, ModelKind};
use crate::graph::{consistent_extension, Cpdag, Dag, EdgeList};
use crate::ingest::{prepare, Prepared, Table};
use crate::rng::{derive_seed, tag};
use crate::scm::{farm_benchmark, sample_benchmark, true_cpdag, EnvironmentSpec, ScmSpec, BENCHMARK_START};
use crate::stats::Dataset;

/// Row masks for a treatment-based split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train_treatments: Vec<String>,
    pub test_treatments: Vec<String>,
    pub train_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
    pub train_fields: usize,
    pub test_fields: usize,
}

impl Split {
    pub fn train_rows(&self) -> usize {
        self.train_mask.iter().filter(|&&b| b).count()
    }

    pub fn test_rows(&self) -> usize {
        self.test_mask.iter().filter(|&&b| b).count()
    }
}

pub fn split_by_treatment(table: &Table, train: &[String], test: &[String]) -> Result<Split> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config("train and test treatment sets must both be non-empty".into()));
    }
    if let Some(t) = train.iter().find(|t| test.contains(t)) {
        return Err(Error::Config(format!("treatment '{t}' is in both train and test sets")));
    }
    let train_mask = table.treatment_mask(train);
    let test_mask = table.treatment_mask(test);
    let fields = |mask: &[bool]| {
        table
            .field_id
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(f, _)| f.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    };
    let split = Split {
        train_treatments: train.to_vec(),
        test_treatments: test.to_vec(),
        train_fields: fields(&train_mask),
        test_fields: fields(&test_mask),
        train_mask,
        test_mask,
    };
    if split.train_rows() == 0 || split.test_rows() == 0 {
        return Err(Error::Data(format!(
            "split leaves {} training and {} test rows",
            split.train_rows(),
            split.test_rows()
        )));
    }
    Ok(split)
}

/// `(MSE, MAE)` in the units of `labels`.
pub fn evaluate(predictions: &[f64], labels: &[f64]) -> Result<(f64, f64)> {
    if predictions.len() != labels.len() || labels.is_empty() {
        return Err(Error::Data(format!(
            "cannot score {} predictions against {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    Ok((crate::diff::mse(predictions, labels), crate::diff::mae(predictions, labels)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SkeletonSource {
    Discovered(Algorithm),
    Random,
    Truth,
}

impl SkeletonSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SkeletonSource::Discovered(a) => a.as_str(),
            SkeletonSource::Random => "random",
            SkeletonSource::Truth => "truth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Gnn(SkeletonSource, ModelKindKey),
    Gbt,
    Mlp,
    Rf,
}

/// Orderable mirror of [`ModelKind`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKindKey {
    Ecc,
    Sage,
}

impl From<ModelKindKey> for ModelKind {
    fn from(k: ModelKindKey) -> Self {
        match k {
            ModelKindKey::Ecc => ModelKind::Ecc,
            ModelKindKey::Sage => ModelKind::Sage,
        }
    }
}

impl Method {
    /// Causal-skeleton GNNs first, then the non-causal comparisons.
    pub fn matrix() -> Vec<Method> {
        let mut v = Vec::new();
        for a in Algorithm::ALL {
            v.push(Method::Gnn(SkeletonSource::Discovered(a), ModelKindKey::Ecc));
            v.push(Method::Gnn(SkeletonSource::Discovered(a), ModelKindKey::Sage));
        }
        v.push(Method::Gnn(SkeletonSource::Random, ModelKindKey::Sage));
        v.extend([Method::Gbt, Method::Mlp, Method::Rf]);
        v
    }

    /// GNNs on the true graph, reported separately as a reference.
    pub fn reference() -> Vec<Method> {
        vec![
            Method::Gnn(SkeletonSource::Truth, ModelKindKey::Ecc),
            Method::Gnn(SkeletonSource::Truth, ModelKindKey::Sage),
        ]
    }

    pub fn name(self) -> String {
        match self {
            Method::Gnn(src, kind) => {
                let s = match src {
                    SkeletonSource::Discovered(a) => a.as_str().to_uppercase(),
                    SkeletonSource::Random => "Random edges".into(),
                    SkeletonSource::Truth => "True graph".into(),
                };
                let m = match kind {
                    ModelKindKey::Ecc => "ECC MPNN",
                    ModelKindKey::Sage => "GraphSAGE",
                };
                format!("{s} + {m}")
            }
            Method::Gbt => "Gradient boosting".into(),
            Method::Mlp => "MLP".into(),
            Method::Rf => "Random forest".into(),
        }
    }

    /// Uses a causal-discovery or true skeleton.
    pub fn causal(self) -> bool {
        matches!(self, Method::Gnn(SkeletonSource::Discovered(_) | SkeletonSource::Truth, _))
    }

    pub fn skeleton(self) -> &'static str {
        match self {
            Method::Gnn(s, _) => s.as_str(),
            _ => "none",
        }
    }

    pub fn model(self) -> &'static str {
        match self {
            Method::Gnn(_, k) => ModelKind::from(k).as_str(),
            Method::Gbt => "gbt",
            Method::Mlp => "mlp",
            Method::Rf => "rf",
        }
    }

    pub fn key(self) -> String {
        format!("{}-{}", self.skeleton(), self.model())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub seed: u64,
    pub mse: f64,
    pub mae: f64,
    pub warnings: u64,
    /// `None` on success, else the failure message.
    pub failure: Option<String>,
    /// Hash of every fitted parameter.
    pub fit_hash: String,
    pub note: String,
}

/// One fit stage's consumed rows and fitted artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub stage: String,
    pub rows: usize,
    pub row_hash: String,
    pub fit_hash: String,
}

#[derive(Debug, Clone)]
pub struct DiscoveredGraph {
    pub cpdag: Cpdag,
    pub dag: Dag,
    pub warnings: u64,
    /// True when the class had no consistent extension and a fallback orientation was used.
    pub fallback: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the identities (field, date) of the rows selected by `mask`.
pub fn row_set_hash(table: &Table, mask: &[bool]) -> String {
    let mut keys: Vec<String> = (0..table.n_rows())
        .filter(|&r| mask[r])
        .map(|r| format!("{}|{}", table.field_id[r], table.dates[r]))
        .collect();
    keys.sort();
    sha256_hex(keys.join("\n").as_bytes())
}

/// Everything shared by the cells of one matrix run.
#[derive(Debug, Clone)]
pub struct BenchData {
    pub scm: ScmSpec,
    pub envs: Vec<EnvironmentSpec>,
    pub raw: Table,
    pub prepared: Prepared,
    pub split: Split,
    pub labels: Vec<String>,
    pub train_instances: Vec<GraphInstance>,
    pub test_instances: Vec<GraphInstance>,
    pub train_design: Design,
    pub test_design: Design,
    pub graphs: BTreeMap<Algorithm, DiscoveredGraph>,
    pub audit: Vec<AuditEntry>,
}

/// Samples the configured farm benchmark.
pub fn synthesize(config: &BenchConfig) -> Result<(ScmSpec, Vec<EnvironmentSpec>, Table)> {
    let (scm, envs) = farm_benchmark(&config.farm).stage("scm_synth", "farm_benchmark")?;
    let raw = sample_benchmark(&scm, &envs, BENCHMARK_START).stage("scm_synth", "sample_benchmark")?;
    Ok((scm, envs, raw))
}

/// Runs discovery on the SCM columns of the training rows.
pub fn discover_all(
    table: &Table,
    train_mask: &[bool],
    scm: &ScmSpec,
    envs: &[EnvironmentSpec],
    config: &BenchConfig,
) -> Result<BTreeMap<Algorithm, DiscoveredGraph>> {
    let names = scm.labels().to_vec();
    let data = Dataset::from_table(table, &names, Some(train_mask)).stage("discovery", "dataset")?;
    let by_field: BTreeMap<String, Vec<usize>> = envs
        .iter()
        .flat_map(|e| {
            let idx: Vec<usize> = e.targets().iter().filter_map(|t| names.iter().position(|n| n == t)).collect();
            e.field_ids().into_iter().map(move |f| (f, idx.clone()))
        })
        .collect();
    let targets: Vec<Vec<usize>> = (0..table.n_rows())
        .filter(|&r| train_mask[r])
        .map(|r| by_field.get(&table.field_id[r]).cloned().unwrap_or_default())
        .collect();
    let mut out = BTreeMap::new();
    for alg in Algorithm::ALL {
        let (cpdag, warnings) = match alg {
            Algorithm::Pc => pc(&data, &config.discovery).stage("discovery", "pc")?,
            Algorithm::Ges => {
                let o = ges(&data, &config.discovery).stage("discovery", "ges")?;
                (o.cpdag, o.warnings)
            }
            Algorithm::Gies => {
                let o = gies(&data, Some(&targets), &config.discovery).stage("discovery", "gies")?;
                (o.cpdag, o.warnings)
            }
        };
        let ext = consistent_extension(&cpdag);
        out.insert(
            alg,
            DiscoveredGraph {
                cpdag,
                dag: ext.dag,
                warnings,
                fallback: ext.fallback,
            },
        );
    }
    Ok(out)
}

impl BenchData {
    pub fn generate(config: &BenchConfig) -> Result<Self> {
        let (scm, envs, raw) = synthesize(config)?;
        BenchData::from_raw(scm, envs, raw, config)
    }

    /// Preprocessing, split, discovery and instance building for a given raw table.
    pub fn from_raw(scm: ScmSpec, envs: Vec<EnvironmentSpec>, raw: Table, config: &BenchConfig) -> Result<Self> {
        config.validate()?;
        let vocab: Vec<String> = envs.iter().flat_map(EnvironmentSpec::field_ids).collect();
        let prepared = prepare(&raw, &vocab, &config.train_treatments, &config.lag_windows).stage("tabular_ingest", "prepare")?;
        let table = &prepared.table;
        let split = split_by_treatment(table, &config.train_treatments, &config.test_treatments)
            .stage("bench_harness", "split_by_treatment")?;
        if prepared.train_mask.iter().zip(&split.test_mask).any(|(a, b)| *a && *b) || prepared.train_mask != split.train_mask {
            return Err(Error::Data("scaler rows differ from training rows".into()).in_stage("bench_harness", "audit"));
        }
        let graphs = discover_all(table, &split.train_mask, &scm, &envs, config)?;

        let labels = table.schema.names();
        let target = scm.target_label().to_string();
        let empty = GraphSkeleton::from_edge_list(labels.clone(), &EdgeList { edges: vec![] }, &target)
            .stage("causal_gnn", "skeleton")?;
        let instances = build_instances(table, &empty).stage("causal_gnn", "build_instances")?;
        let pick = |mask: &[bool]| -> Vec<GraphInstance> {
            instances.iter().zip(mask).filter(|(_, &m)| m).map(|(g, _)| g.clone()).collect()
        };
        let train_instances = pick(&split.train_mask);
        let test_instances = pick(&split.test_mask);
        let train_design = Design::from_table(table, Some(&split.train_mask)).stage("baselines", "design")?;
        let test_design = Design::from_table(table, Some(&split.test_mask)).stage("baselines", "design")?;

        let train_hash = row_set_hash(table, &split.train_mask);
        let rows = split.train_rows();
        let mut audit = vec![AuditEntry {
            stage: "scaler".into(),
            rows: prepared.scaler.fitted_on,
            row_hash: row_set_hash(table, &prepared.train_mask),
            fit_hash: sha256_hex(prepared.scaler.to_text().as_bytes()),
        }];
        for (alg, g) in &graphs {
            audit.push(AuditEntry {
                stage: format!("discovery-{}", alg.as_str()),
                rows,
                row_hash: train_hash.clone(),
                fit_hash: sha256_hex(crate::graph::cpdag_to_text(&g.cpdag).as_bytes()),
            });
        }
        Ok(BenchData {
            scm,
            envs,
            raw,
            prepared,
            split,
            labels,
            train_instances,
            test_instances,
            train_design,
            test_design,
            graphs,
            audit,
        })
    }

    pub fn target_label(&self) -> &str {
        self.scm.target_label()
    }

    pub fn test_labels(&self) -> &[f64] {
        &self.test_design.y
    }

    /// GNN skeleton over all model-ready columns for a skeleton source.
    pub fn skeleton(&self, source: SkeletonSource, seed: u64, config: &BenchConfig) -> Result<GraphSkeleton> {
        let target = self.target_label();
        match source {
            SkeletonSource::Discovered(a) => {
                let dag = &self.graphs[&a].dag;
                GraphSkeleton::from_edge_list(self.labels.clone(), &EdgeList::from_dag(dag), target)
            }
            SkeletonSource::Truth => GraphSkeleton::from_edge_list(self.labels.clone(), &EdgeList::from_dag(&self.scm.dag), target),
            SkeletonSource::Random => random_skeleton(self.labels.clone(), config.random_edges, target, seed),
        }
    }

    pub fn true_cpdag(&self) -> Cpdag {
        true_cpdag(&self.scm)
    }
}

/// Seed for one cell, independent of execution order.
pub fn cell_seed(master: u64, method: Method, seed_index: u64) -> u64 {
    derive_seed(derive_seed(master, tag(&method.key())), seed_index)
}

fn params_bytes(p: &crate::diff::Params) -> Vec<u8> {
    let mut b = Vec::new();
    write_params(p, &mut b).expect("writing to memory");
    b
}

fn trees_bytes(trees: &[crate::baselines::Tree]) -> Vec<u8> {
    let mut b = Vec::new();
    for t in trees {
        for n in &t.nodes {
            b.extend_from_slice(&(n.feature as u64).to_le_bytes());
            b.extend_from_slice(&n.threshold.to_le_bytes());
            b.extend_from_slice(&n.left.map_or(u64::MAX, |v| v as u64).to_le_bytes());
            b.extend_from_slice(&n.right.map_or(u64::MAX, |v| v as u64).to_le_bytes());
            b.extend_from_slice(&n.value.to_le_bytes());
        }
        b.push(0xff);
    }
    b
}

struct Fitted {
    predictions: Vec<f64>,
    fit_hash: String,
    warnings: u64,
    note: String,
}

fn fit_and_predict(data: &BenchData, method: Method, seed: u64, config: &BenchConfig) -> Result<Fitted> {
    match method {
        Method::Gnn(source, key) => {
            let kind = ModelKind::from(key);
            let skeleton = data.skeleton(source, seed, config).stage("causal_gnn", "skeleton")?;
            let mut cfg = GnnConfig::new(kind);
            cfg.hidden = config.gnn_hidden;
            cfg.epochs = config.gnn_epochs;
            cfg.lr = match kind {
                ModelKind::Sage => config.sage_lr,
                ModelKind::Ecc => config.ecc_lr,
            };
            cfg.seed = seed;
            cfg.neighbourhood = config.neighbourhood;
            cfg.self_loop_attr = config.ecc_self_loops.then_some(0.0);
            cfg.batch_size = config.batch_size;
            let mut model = GnnModel::new(skeleton, &cfg).stage("causal_gnn", "model")?;
            let report = model.train(&data.train_instances, &cfg).stage("causal_gnn", "train")?;
            let mut bytes = params_bytes(&model.params);
            bytes.extend_from_slice(&model.scaling.mean.to_le_bytes());
            bytes.extend_from_slice(&model.scaling.sd.to_le_bytes());
            let warnings = match source {
                SkeletonSource::Discovered(a) => data.graphs[&a].warnings,
                _ => 0,
            };
            let first = report.loss_history.first().copied().unwrap_or(f64::NAN);
            let last = report.loss_history.last().copied().unwrap_or(f64::NAN);
            Ok(Fitted {
                predictions: model.predict(&data.test_instances),
                fit_hash: sha256_hex(&bytes),
                warnings,
                note: format!("train loss {first:.4} -> {last:.4}"),
            })
        }
        Method::Gbt => {
            let m = gbt_train(
                &data.train_design,
                &GbtConfig {
                    n_estimators: config.gbt_rounds,
                    max_depth: config.gbt_max_depth,
                    learning_rate: config.gbt_lr,
                    min_leaf: 1,
                },
                seed,
            )
            .stage("baselines", "gbt_train")?;
            let mut bytes = trees_bytes(&m.trees);
            bytes.extend_from_slice(&m.init.to_le_bytes());
            Ok(Fitted {
                predictions: m.predict(&data.test_design.x),
                fit_hash: sha256_hex(&bytes),
                warnings: 0,
                note: String::new(),
            })
        }
        Method::Rf => {
            let m = rf_train(
                &data.train_design,
                &RfConfig {
                    n_trees: config.rf_trees,
                    min_leaf: config.rf_min_leaf,
                    ..RfConfig::default()
                },
                seed,
            )
            .stage("baselines", "rf_train")?;
            Ok(Fitted {
                predictions: m.predict(&data.test_design.x),
                fit_hash: sha256_hex(&trees_bytes(&m.trees)),
                warnings: 0,
                note: String::new(),
            })
        }
        Method::Mlp => {
            let res = mlp_grid_search(&data.train_design, &mlp_grid(config.mlp_epochs), seed).stage("baselines", "mlp_grid_search")?;
            let mut bytes = params_bytes(&res.model.params);
            bytes.extend_from_slice(&res.model.scaling.mean.to_le_bytes());
            bytes.extend_from_slice(&res.model.scaling.sd.to_le_bytes());
            Ok(Fitted {
                predictions: res.model.predict(&data.test_design.x),
                fit_hash: sha256_hex(&bytes),
                warnings: 0,
                note: format!("grid pick: layers {:?}, lr {}", res.best.hidden, res.best.lr),
            })
        }
    }
}

/// Trains and scores one cell; failures become a failed row.
pub fn run_cell(data: &BenchData, method: Method, seed_index: u64, config: &BenchConfig) -> ResultRow {
    let seed = cell_seed(config.master_seed, method, seed_index);
    let outcome = fit_and_predict(data, method, seed, config).and_then(|f| {
        let (mse, mae) = evaluate(&f.predictions, data.test_labels())?;
        Ok((f, mse, mae))
    });
    match outcome {
        Ok((f, mse, mae)) => ResultRow {
            method,
            seed: seed_index,
            mse,
            mae,
            warnings: f.warnings,
            failure: None,
            fit_hash: f.fit_hash,
            note: f.note,
        },
        Err(e) => ResultRow {
            method,
            seed: seed_index,
            mse: f64::NAN,
            mae: f64::NAN,
            warnings: 0,
            failure: Some(e.to_string()),
            fit_hash: String::new(),
            note: String::new(),
        },
    }
}

#[derive(Debug, Clone)]
pub struct MatrixOutput {
    /// Methods in matrix order, then seeds ascending.
    pub rows: Vec<ResultRow>,
    /// Reference GNNs on the true graph, same ordering.
    pub reference: Vec<ResultRow>,
}

/// Every method over `config.seeds` seeds on a bounded worker pool; the output
/// order does not depend on scheduling.
pub fn run_matrix(data: &BenchData, config: &BenchConfig) -> Result<MatrixOutput> {
    config.validate()?;
    let cells: Vec<(Method, u64)> = Method::matrix()
        .into_iter()
        .chain(Method::reference())
        .flat_map(|m| (0..config.seeds as u64).map(move |s| (m, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<ResultRow> = pool.install(|| cells.par_iter().map(|&(m, s)| run_cell(data, m, s, config)).collect());
    let reference_methods = Method::reference();
    let (reference, rows) = results.into_iter().partition(|r| reference_methods.contains(&r.method));
    Ok(MatrixOutput { rows, reference })
}
