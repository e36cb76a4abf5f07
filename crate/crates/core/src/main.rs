use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use soc_causal::baselines::{gbt_train, mlp_grid, mlp_grid_search, random_skeleton, rf_train, Design, GbtConfig, RfConfig};
use soc_causal::bench::{self, BenchConfig, BenchData};
use soc_causal::config::KeyValues;
use soc_causal::discovery::Algorithm;
use soc_causal::error::{Error, Result, StageExt};
use soc_causal::gnn::{build_instances, GnnConfig, GnnModel, GraphSkeleton, ModelKind};
use soc_causal::graph::{dag_to_dot, parse_cpdag_text, to_dot, EdgeList};
use soc_causal::ingest::io::{load_table, save_table};
use soc_causal::ingest::{prepare, Table};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "soc-causal", version, about = "Causal discovery and graph neural regression for soil carbon")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Key-value config file (`section.key = value`); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (default 1).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the synthetic farm benchmark to raw.csv.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Benchmark sampling seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Days per field.
        #[arg(long)]
        days: Option<usize>,
    },
    /// Build the model-ready table (merge, encode, lags, train-fitted scaling).
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Raw CSV with a `.schema` sidecar.
        #[arg(long)]
        input: PathBuf,
    },
    /// Run causal discovery on the training rows.
    Discover {
        #[command(flatten)]
        common: Common,
        /// Raw or model-ready CSV with a `.schema` sidecar.
        #[arg(long)]
        input: PathBuf,
        /// pc, ges, gies or all.
        #[arg(long, default_value = "all")]
        algorithm: String,
        /// CI test level.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Train a GNN on the training rows of a model-ready table.
    Train {
        #[command(flatten)]
        common: Common,
        /// Model-ready CSV.
        #[arg(long)]
        input: PathBuf,
        /// Edge list (`src<TAB>dst<TAB>attr`).
        #[arg(long)]
        skeleton: PathBuf,
        /// sage or ecc.
        #[arg(long, default_value = "ecc")]
        model: String,
        /// Adam learning rate (model default if absent).
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint path; metadata goes next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trained GNN on the test rows.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Checkpoint written by `train`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the full method matrix and write the report.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        master_seed: Option<u64>,
        /// GNN training epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Render a CPDAG or edge list as Graphviz DOT.
    ExportDot {
        #[command(flatten)]
        common: Common,
        /// CPDAG text (4 columns) or edge list (2-3 columns).
        #[arg(long)]
        input: PathBuf,
        /// Output DOT path (default: <out-dir>/<input stem>.dot).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and score one non-causal comparison model.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// mlp, rf, gbt or random-sage.
        #[arg(long)]
        model: String,
        #[arg(long)]
        seed: Option<u64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Ingest { .. } => "ingest",
            Command::Discover { .. } => "discover",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Bench { .. } => "bench",
            Command::ExportDot { .. } => "export-dot",
            Command::Baseline { .. } => "baseline",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Synth { common, .. }
            | Command::Ingest { common, .. }
            | Command::Discover { common, .. }
            | Command::Train { common, .. }
            | Command::Eval { common, .. }
            | Command::Bench { common, .. }
            | Command::ExportDot { common, .. }
            | Command::Baseline { common, .. } => common,
        }
    }

    /// Flag values as config entries; these win over the config file.
    fn overrides(&self) -> Result<KeyValues> {
        let mut kv = KeyValues::new();
        if let Some(j) = self.common().jobs {
            kv.set("run.jobs", j);
        }
        match self {
            Command::Synth { seed, days, .. } => {
                if let Some(s) = seed {
                    kv.set("benchmark.seed", s);
                }
                if let Some(d) = days {
                    kv.set("benchmark.n_days", d);
                }
            }
            Command::Discover { alpha, .. } => {
                if let Some(a) = alpha {
                    kv.set("discovery.alpha", a);
                }
            }
            Command::Train {
                model,
                lr,
                epochs,
                hidden,
                seed,
                ..
            } => {
                let kind = ModelKind::parse(model)?;
                if let Some(lr) = lr {
                    kv.set(&format!("gnn.{}_lr", kind.as_str()), lr);
                }
                if let Some(e) = epochs {
                    kv.set("gnn.epochs", e);
                }
                if let Some(h) = hidden {
                    kv.set("gnn.hidden", h);
                }
                if let Some(s) = seed {
                    kv.set("run.master_seed", s);
                }
            }
            Command::Bench {
                seeds,
                master_seed,
                epochs,
                ..
            } => {
                if let Some(s) = seeds {
                    kv.set("run.seeds", s);
                }
                if let Some(s) = master_seed {
                    kv.set("run.master_seed", s);
                }
                if let Some(e) = epochs {
                    kv.set("gnn.epochs", e);
                }
            }
            Command::Baseline { seed, .. } => {
                if let Some(s) = seed {
                    kv.set("run.master_seed", s);
                }
            }
            Command::Ingest { .. } | Command::Eval { .. } | Command::ExportDot { .. } => {}
        }
        Ok(kv)
    }
}

fn effective_config(cmd: &Command) -> Result<BenchConfig> {
    let mut kv = match &cmd.common().config {
        Some(p) => KeyValues::parse(
            &fs::read_to_string(p).map_err(|e| Error::Usage(format!("cannot read config '{}': {e}", p.display())))?,
        )?,
        None => KeyValues::new(),
    };
    kv.merge(&cmd.overrides()?);
    BenchConfig::from_kv(&kv)
}

/// Effective config and version stamp; timestamps only go to run_metadata.txt.
fn write_run_files(dir: &Path, cmd: &Command, config: &BenchConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = format!("# soc-causal {VERSION} {}\n", cmd.name());
    text.push_str(&config.to_kv().to_text());
    fs::write(dir.join("effective_config.txt"), text)?;
    fs::write(dir.join("version.txt"), format!("soc-causal {VERSION}\n"))?;
    fs::write(
        dir.join("run_metadata.txt"),
        format!("command = {}\nfinished_utc = {}\n", cmd.name(), chrono::Utc::now().to_rfc3339()),
    )?;
    Ok(())
}

fn load(path: &Path) -> Result<Table> {
    load_table(path).stage("tabular_ingest", "load_table")
}

/// Per-row intervention targets of the configured benchmark, restricted to `mask`.
fn row_targets(table: &Table, config: &BenchConfig) -> Result<(soc_causal::scm::ScmSpec, Vec<soc_causal::scm::EnvironmentSpec>)> {
    let (scm, envs) = soc_causal::scm::farm_benchmark(&config.farm).stage("scm_synth", "farm_benchmark")?;
    for l in scm.labels() {
        table.schema.require(l).stage("discovery", "columns")?;
    }
    Ok((scm, envs))
}

fn train_test(table: &Table, config: &BenchConfig) -> Result<bench::Split> {
    bench::split_by_treatment(table, &config.train_treatments, &config.test_treatments).stage("bench_harness", "split_by_treatment")
}

fn write_metrics(dir: &Path, name: &str, mse: f64, mae: f64, rows: usize) -> Result<()> {
    println!("{name}: test MSE {mse:.6}, MAE {mae:.6} over {rows} rows");
    fs::write(dir.join("metrics.txt"), format!("model = {name}\nrows = {rows}\nmse = {mse:.6}\nmae = {mae:.6}\n"))?;
    Ok(())
}

fn run(cmd: &Command) -> Result<()> {
    let config = effective_config(cmd)?;
    let out = cmd.common().out_dir.clone();
    match cmd {
        Command::Synth { .. } => {
            let (scm, envs, raw) = bench::synthesize(&config)?;
            save_table(&raw, &out, "raw").stage("tabular_ingest", "save_table")?;
            fs::write(out.join("truth.edges"), EdgeList::from_dag(&scm.dag).to_text())?;
            fs::write(out.join("truth.dot"), dag_to_dot(&scm.dag, Some(&scm.role_map())))?;
            println!("synth: {} rows from {} environments -> {}", raw.n_rows(), envs.len(), out.join("raw.csv").display());
        }
        Command::Ingest { input, .. } => {
            let raw = load(input)?;
            let vocab: Vec<String> = {
                let mut v: Vec<String> = raw.field_id.clone();
                v.sort();
                v.dedup();
                v
            };
            let p = prepare(&raw, &vocab, &config.train_treatments, &config.lag_windows).stage("tabular_ingest", "prepare")?;
            save_table(&p.table, &out, "prepared").stage("tabular_ingest", "save_table")?;
            fs::write(out.join("scaler.txt"), p.scaler.to_text())?;
            println!(
                "ingest: {} rows x {} columns, scaler fitted on {} rows",
                p.table.n_rows(),
                p.table.n_cols(),
                p.scaler.fitted_on
            );
        }
        Command::Discover { input, algorithm, .. } => {
            let table = load(input)?;
            let (scm, envs) = row_targets(&table, &config)?;
            let split = train_test(&table, &config)?;
            let graphs = bench::discover_all(&table, &split.train_mask, &scm, &envs, &config)?;
            let wanted: Vec<Algorithm> = if algorithm == "all" {
                Algorithm::ALL.to_vec()
            } else {
                vec![Algorithm::parse(algorithm)?]
            };
            fs::create_dir_all(&out)?;
            let truth = scm.dag.clone();
            for a in wanted {
                let g = &graphs[&a];
                let stem = a.as_str();
                fs::write(out.join(format!("{stem}.cpdag")), soc_causal::graph::cpdag_to_text(&g.cpdag))?;
                fs::write(out.join(format!("{stem}.edges")), EdgeList::from_dag(&g.dag).to_text())?;
                fs::write(out.join(format!("{stem}.dot")), to_dot(&g.cpdag, Some(&scm.role_map())))?;
                println!(
                    "discover {stem}: {} edges, SHD to truth {}, {} warnings",
                    g.cpdag.n_edges(),
                    soc_causal::graph::shd(&soc_causal::graph::cpdag_of(&truth), &g.cpdag),
                    g.warnings
                );
            }
        }
        Command::Train { input, skeleton, model, out: ckpt, .. } => {
            let table = load(input)?;
            let split = train_test(&table, &config)?;
            let kind = ModelKind::parse(model)?;
            let edges = EdgeList::parse(&fs::read_to_string(skeleton)?)?;
            let target = table.schema.target.clone().ok_or_else(|| Error::Schema("table has no target column".into()))?;
            let sk = GraphSkeleton::from_edge_list(table.schema.names(), &edges, &target).stage("causal_gnn", "skeleton")?;
            let instances = build_instances(&table, &sk).stage("causal_gnn", "build_instances")?;
            let train: Vec<_> = instances.into_iter().zip(&split.train_mask).filter(|(_, &m)| m).map(|(g, _)| g).collect();
            let mut cfg = GnnConfig::new(kind);
            cfg.hidden = config.gnn_hidden;
            cfg.epochs = config.gnn_epochs;
            cfg.lr = if kind == ModelKind::Sage { config.sage_lr } else { config.ecc_lr };
            cfg.seed = config.master_seed;
            cfg.neighbourhood = config.neighbourhood;
            cfg.self_loop_attr = config.ecc_self_loops.then_some(0.0);
            cfg.batch_size = config.batch_size;
            let mut m = GnnModel::new(sk, &cfg).stage("causal_gnn", "model")?;
            let report = m.train(&train, &cfg).stage("causal_gnn", "train")?;
            if let Some(parent) = ckpt.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            m.save(ckpt).stage("causal_gnn", "save")?;
            println!(
                "train {}: {} rows, loss {:.4} -> {:.4}, saved {}",
                kind.as_str(),
                train.len(),
                report.loss_history.first().copied().unwrap_or(f64::NAN),
                report.loss_history.last().copied().unwrap_or(f64::NAN),
                ckpt.display()
            );
        }
        Command::Eval { input, model, .. } => {
            let table = load(input)?;
            let split = train_test(&table, &config)?;
            let m = GnnModel::load(model).stage("causal_gnn", "load")?;
            let instances = build_instances(&table, &m.skeleton).stage("causal_gnn", "build_instances")?;
            let test: Vec<_> = instances.into_iter().zip(&split.test_mask).filter(|(_, &mk)| mk).map(|(g, _)| g).collect();
            let labels: Vec<f64> = test.iter().map(|g| g.label).collect();
            let (mse, mae) = bench::evaluate(&m.predict(&test), &labels)?;
            fs::create_dir_all(&out)?;
            write_metrics(&out, m.kind.as_str(), mse, mae, labels.len())?;
        }
        Command::Bench { .. } => {
            println!("bench: generating benchmark and running discovery");
            let data = BenchData::generate(&config)?;
            println!(
                "bench: {} train rows, {} test rows; running {} seeds",
                data.split.train_rows(),
                data.split.test_rows(),
                config.seeds
            );
            let matrix = bench::run_matrix(&data, &config)?;
            let report = bench::render_report(&config, &data, &matrix);
            bench::write_outputs(&out, &report, &data)?;
            for s in &report.summaries {
                println!("  {:<28} MSE {:.4}  MAE {:.4}", s.method.name(), s.median_mse, s.median_mae);
            }
            println!("bench: wrote {}", out.join("report.md").display());
        }
        Command::ExportDot { input, out: dot_out, .. } => {
            let text = fs::read_to_string(input)?;
            let four = text.lines().any(|l| l.split('\t').count() == 4);
            let dot = if four {
                let mut labels: Vec<String> = text
                    .lines()
                    .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
                    .flat_map(|l| l.split('\t').take(2).map(String::from).collect::<Vec<_>>())
                    .collect();
                labels.sort();
                labels.dedup();
                to_dot(&parse_cpdag_text(labels, &text)?, None)
            } else {
                let edges = EdgeList::parse(&text)?;
                let mut labels: Vec<String> = edges.edges.iter().flat_map(|(a, b, _)| [a.clone(), b.clone()]).collect();
                labels.sort();
                labels.dedup();
                let named: Vec<(String, String)> = edges.edges.iter().map(|(a, b, _)| (a.clone(), b.clone())).collect();
                dag_to_dot(&soc_causal::graph::Dag::from_named_edges(labels, &named)?, None)
            };
            let path = dot_out.clone().unwrap_or_else(|| {
                out.join(format!("{}.dot", input.file_stem().and_then(|s| s.to_str()).unwrap_or("graph")))
            });
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(&path, dot)?;
            println!("export-dot: wrote {}", path.display());
        }
        Command::Baseline { input, model, .. } => {
            let table = load(input)?;
            let split = train_test(&table, &config)?;
            let train = Design::from_table(&table, Some(&split.train_mask))?;
            let test = Design::from_table(&table, Some(&split.test_mask))?;
            let seed = config.master_seed;
            let preds = match model.as_str() {
                "mlp" => mlp_grid_search(&train, &mlp_grid(config.mlp_epochs), seed).stage("baselines", "mlp_grid_search")?.model.predict(&test.x),
                "rf" => rf_train(&train, &RfConfig { n_trees: config.rf_trees, min_leaf: config.rf_min_leaf, ..RfConfig::default() }, seed)
                    .stage("baselines", "rf_train")?
                    .predict(&test.x),
                "gbt" => gbt_train(
                    &train,
                    &GbtConfig {
                        n_estimators: config.gbt_rounds,
                        max_depth: config.gbt_max_depth,
                        learning_rate: config.gbt_lr,
                        min_leaf: 1,
                    },
                    seed,
                )
                .stage("baselines", "gbt_train")?
                .predict(&test.x),
                "random-sage" => {
                    let target = table.schema.target.clone().ok_or_else(|| Error::Schema("table has no target column".into()))?;
                    let sk = random_skeleton(table.schema.names(), config.random_edges, &target, seed).stage("baselines", "random_skeleton")?;
                    let instances = build_instances(&table, &sk).stage("causal_gnn", "build_instances")?;
                    let (tr, te): (Vec<_>, Vec<_>) = instances.into_iter().zip(&split.train_mask).partition(|(_, &m)| m);
                    let tr: Vec<_> = tr.into_iter().map(|(g, _)| g).collect();
                    let te: Vec<_> = te
                        .into_iter()
                        .map(|(g, _)| g)
                        .filter(|g| config.test_treatments.contains(&g.treatment))
                        .collect();
                    let mut cfg = GnnConfig::new(ModelKind::Sage);
                    cfg.hidden = config.gnn_hidden;
                    cfg.epochs = config.gnn_epochs;
                    cfg.lr = config.sage_lr;
                    cfg.seed = seed;
                    cfg.batch_size = config.batch_size;
                    let mut m = GnnModel::new(sk, &cfg).stage("causal_gnn", "model")?;
                    m.train(&tr, &cfg).stage("causal_gnn", "train")?;
                    m.predict(&te)
                }
                other => return Err(Error::Usage(format!("unknown baseline '{other}' (mlp|rf|gbt|random-sage)"))),
            };
            let (mse, mae) = bench::evaluate(&preds, &test.y)?;
            fs::create_dir_all(&out)?;
            write_metrics(&out, model, mse, mae, test.y.len())?;
        }
    }
    write_run_files(&out, cmd, &config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.exit_code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
