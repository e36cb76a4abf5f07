use crate::config::{read_into, KeyValues};
use crate::discovery::DiscoveryConfig;
use crate::error::{Error, Result};
use crate::gnn::{ModelKind, Neighbourhood};
use crate::ingest::DEFAULT_LAG_WINDOWS;
use crate::scm::FarmParams;

use super::sha256_hex;

/// Every knob of a matrix run. Rendered as `section.key = value` text.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub farm: FarmParams,
    pub train_treatments: Vec<String>,
    pub test_treatments: Vec<String>,
    pub lag_windows: Vec<i64>,
    pub discovery: DiscoveryConfig,
    pub gnn_hidden: usize,
    pub gnn_epochs: usize,
    pub sage_lr: f64,
    pub ecc_lr: f64,
    pub neighbourhood: Neighbourhood,
    pub ecc_self_loops: bool,
    pub batch_size: Option<usize>,
    pub random_edges: usize,
    pub gbt_rounds: usize,
    pub gbt_max_depth: usize,
    pub gbt_lr: f64,
    pub rf_trees: usize,
    pub rf_min_leaf: usize,
    pub mlp_epochs: usize,
    pub seeds: usize,
    pub master_seed: u64,
    pub jobs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            farm: FarmParams::default(),
            train_treatments: vec!["red".into(), "blue".into()],
            test_treatments: vec!["green".into()],
            lag_windows: DEFAULT_LAG_WINDOWS.to_vec(),
            discovery: DiscoveryConfig::default(),
            gnn_hidden: 16,
            gnn_epochs: 500,
            sage_lr: ModelKind::Sage.default_lr(),
            ecc_lr: ModelKind::Ecc.default_lr(),
            neighbourhood: Neighbourhood::Parents,
            ecc_self_loops: true,
            batch_size: None,
            random_edges: crate::baselines::RANDOM_SKELETON_EDGES,
            gbt_rounds: 100,
            gbt_max_depth: 20,
            gbt_lr: 0.1,
            rf_trees: 100,
            rf_min_leaf: 2,
            mlp_epochs: 300,
            seeds: 5,
            master_seed: 0,
            jobs: 1,
        }
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        self.discovery.validate()?;
        if self.seeds == 0 {
            return Err(Error::Config("run.seeds must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("run.jobs must be at least 1".into()));
        }
        if self.gnn_hidden == 0 || self.batch_size == Some(0) {
            return Err(Error::Config("gnn.hidden and gnn.batch_size must be positive".into()));
        }
        if self.train_treatments.is_empty() || self.test_treatments.is_empty() {
            return Err(Error::Config("split.train and split.test must both be non-empty".into()));
        }
        if self.lag_windows.iter().any(|&w| w <= 0) {
            return Err(Error::Config("ingest.lag_windows must be positive".into()));
        }
        for lr in [self.sage_lr, self.ecc_lr, self.gbt_lr] {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(Error::Config(format!("learning rate {lr} is not a non-negative number")));
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let f = &self.farm;
        let mut kv = KeyValues::new();
        kv.set("benchmark.n_days", f.n_days);
        kv.set("benchmark.seed", f.seed);
        kv.set("benchmark.plough_rate_red", f.plough_rate_red);
        kv.set("benchmark.plough_rate_blue", f.plough_rate_blue);
        kv.set("benchmark.ph_noise", f.ph_noise);
        kv.set("benchmark.nitrogen_noise", f.nitrogen_noise);
        kv.set("benchmark.carbon_noise", f.carbon_noise);
        kv.set("benchmark.n_red", f.n_red);
        kv.set("benchmark.n_blue", f.n_blue);
        kv.set("benchmark.n_green", f.n_green);
        kv.set("split.train", self.train_treatments.join(","));
        kv.set("split.test", self.test_treatments.join(","));
        kv.set("ingest.lag_windows", join(&self.lag_windows));
        kv.set("discovery.alpha", self.discovery.alpha);
        kv.set("discovery.max_cond_size", self.discovery.max_cond_size);
        kv.set("discovery.max_parents", self.discovery.max_parents);
        kv.set("discovery.use_interventions", self.discovery.use_interventions);
        kv.set("gnn.hidden", self.gnn_hidden);
        kv.set("gnn.epochs", self.gnn_epochs);
        kv.set("gnn.sage_lr", self.sage_lr);
        kv.set("gnn.ecc_lr", self.ecc_lr);
        kv.set("gnn.neighbourhood", self.neighbourhood.as_str());
        kv.set("gnn.ecc_self_loops", self.ecc_self_loops);
        kv.set("gnn.batch_size", self.batch_size.map_or("full".to_string(), |b| b.to_string()));
        kv.set("baselines.random_edges", self.random_edges);
        kv.set("baselines.gbt_rounds", self.gbt_rounds);
        kv.set("baselines.gbt_max_depth", self.gbt_max_depth);
        kv.set("baselines.gbt_lr", self.gbt_lr);
        kv.set("baselines.rf_trees", self.rf_trees);
        kv.set("baselines.rf_min_leaf", self.rf_min_leaf);
        kv.set("baselines.mlp_epochs", self.mlp_epochs);
        kv.set("run.seeds", self.seeds);
        kv.set("run.master_seed", self.master_seed);
        kv.set("run.jobs", self.jobs);
        kv
    }

    /// Defaults overridden by `kv`; unknown keys are rejected.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut c = BenchConfig::default();
        let known = c.to_kv();
        if let Some(k) = kv.keys().find(|k| !known.contains(k)) {
            return Err(Error::Config(format!("unknown config key '{k}'")));
        }
        let f = &mut c.farm;
        read_into(kv, "benchmark.n_days", &mut f.n_days)?;
        read_into(kv, "benchmark.seed", &mut f.seed)?;
        read_into(kv, "benchmark.plough_rate_red", &mut f.plough_rate_red)?;
        read_into(kv, "benchmark.plough_rate_blue", &mut f.plough_rate_blue)?;
        read_into(kv, "benchmark.ph_noise", &mut f.ph_noise)?;
        read_into(kv, "benchmark.nitrogen_noise", &mut f.nitrogen_noise)?;
        read_into(kv, "benchmark.carbon_noise", &mut f.carbon_noise)?;
        read_into(kv, "benchmark.n_red", &mut f.n_red)?;
        read_into(kv, "benchmark.n_blue", &mut f.n_blue)?;
        read_into(kv, "benchmark.n_green", &mut f.n_green)?;
        if let Some(v) = kv.list("split.train") {
            c.train_treatments = v;
        }
        if let Some(v) = kv.list("split.test") {
            c.test_treatments = v;
        }
        if let Some(v) = kv.list("ingest.lag_windows") {
            c.lag_windows = v
                .iter()
                .map(|s| s.parse().map_err(|_| Error::Config(format!("ingest.lag_windows: bad window '{s}'"))))
                .collect::<Result<_>>()?;
        }
        read_into(kv, "discovery.alpha", &mut c.discovery.alpha)?;
        read_into(kv, "discovery.max_cond_size", &mut c.discovery.max_cond_size)?;
        read_into(kv, "discovery.max_parents", &mut c.discovery.max_parents)?;
        read_into(kv, "discovery.use_interventions", &mut c.discovery.use_interventions)?;
        read_into(kv, "gnn.hidden", &mut c.gnn_hidden)?;
        read_into(kv, "gnn.epochs", &mut c.gnn_epochs)?;
        read_into(kv, "gnn.sage_lr", &mut c.sage_lr)?;
        read_into(kv, "gnn.ecc_lr", &mut c.ecc_lr)?;
        if let Some(v) = kv.get("gnn.neighbourhood") {
            c.neighbourhood = Neighbourhood::parse(v).map_err(|_| Error::Config(format!("gnn.neighbourhood: '{v}'")))?;
        }
        read_into(kv, "gnn.ecc_self_loops", &mut c.ecc_self_loops)?;
        if let Some(v) = kv.get("gnn.batch_size") {
            c.batch_size = if v == "full" {
                None
            } else {
                Some(v.parse().map_err(|_| Error::Config(format!("gnn.batch_size: '{v}'")))?)
            };
        }
        read_into(kv, "baselines.random_edges", &mut c.random_edges)?;
        read_into(kv, "baselines.gbt_rounds", &mut c.gbt_rounds)?;
        read_into(kv, "baselines.gbt_max_depth", &mut c.gbt_max_depth)?;
        read_into(kv, "baselines.gbt_lr", &mut c.gbt_lr)?;
        read_into(kv, "baselines.rf_trees", &mut c.rf_trees)?;
        read_into(kv, "baselines.rf_min_leaf", &mut c.rf_min_leaf)?;
        read_into(kv, "baselines.mlp_epochs", &mut c.mlp_epochs)?;
        read_into(kv, "run.seeds", &mut c.seeds)?;
        read_into(kv, "run.master_seed", &mut c.master_seed)?;
        read_into(kv, "run.jobs", &mut c.jobs)?;
        c.validate()?;
        Ok(c)
    }

    /// Hash of the effective configuration, excluding the worker count.
    pub fn hash(&self) -> String {
        let mut kv = self.to_kv();
        kv.set("run.jobs", "-");
        sha256_hex(kv.to_text().as_bytes())
    }
}
