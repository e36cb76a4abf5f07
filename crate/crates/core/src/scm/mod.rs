//! Structural causal models with linear-Gaussian soil nodes and Bernoulli
//! management events, plus the synthetic farm benchmark.

mod farm;

pub use farm::{default_farm_benchmark, farm_benchmark, FarmParams, BENCHMARK_START};

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{cpdag_of, Cpdag, Dag};
use crate::ingest::{Cadence, ColumnSpec, Schema, Table};
use crate::rng::{derive_seed, rng, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Management,
    Soil,
    Target,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Management => "management",
            Role::Soil => "soil",
            Role::Target => "target",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mechanism {
    /// `intercept + sum(w * parent) + noise_sd * N(0, 1)`.
    LinearGaussian {
        weights: Vec<(String, f64)>,
        intercept: f64,
        noise_sd: f64,
    },
    /// Daily occurrence with probability `sigmoid(logit(base_rate) + sum(w * parent))`.
    BernoulliEvent {
        base_rate: f64,
        logit_weights: Vec<(String, f64)>,
    },
    /// Hard intervention to a fixed value.
    Constant(f64),
}

impl Mechanism {
    pub fn gaussian_root(mean: f64, sd: f64) -> Self {
        Mechanism::LinearGaussian {
            weights: Vec::new(),
            intercept: mean,
            noise_sd: sd,
        }
    }

    pub fn event(rate: f64) -> Self {
        Mechanism::BernoulliEvent {
            base_rate: rate,
            logit_weights: Vec::new(),
        }
    }

    fn parent_names(&self) -> Vec<&str> {
        match self {
            Mechanism::LinearGaussian { weights, .. } => weights.iter().map(|w| w.0.as_str()).collect(),
            Mechanism::BernoulliEvent { logit_weights, .. } => logit_weights.iter().map(|w| w.0.as_str()).collect(),
            Mechanism::Constant(_) => Vec::new(),
        }
    }

    fn check(&self, node: &str, intervention: bool) -> Result<()> {
        match *self {
            Mechanism::LinearGaussian { noise_sd, intercept, .. } => {
                if !(noise_sd > 0.0 && noise_sd.is_finite() && intercept.is_finite()) {
                    return Err(Error::Config(format!("'{node}': noise sd must be positive and finite")));
                }
            }
            Mechanism::BernoulliEvent { base_rate, .. } => {
                let ok = if intervention {
                    (0.0..=1.0).contains(&base_rate)
                } else {
                    base_rate > 0.0 && base_rate < 1.0
                };
                if !ok {
                    return Err(Error::Config(format!("'{node}': event rate {base_rate} out of range")));
                }
            }
            Mechanism::Constant(v) => {
                if !v.is_finite() {
                    return Err(Error::Config(format!("'{node}': constant must be finite")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScmSpec {
    pub dag: Dag,
    /// Indexed like the DAG's nodes.
    pub mechanisms: Vec<Mechanism>,
    pub roles: Vec<Role>,
}

impl ScmSpec {
    pub fn new(dag: Dag, mechanisms: Vec<Mechanism>, roles: Vec<Role>) -> Result<Self> {
        let s = ScmSpec { dag, mechanisms, roles };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dag.n();
        if self.mechanisms.len() != n || self.roles.len() != n {
            return Err(Error::Config("every SCM node needs one mechanism and one role".into()));
        }
        if self.roles.iter().filter(|&&r| r == Role::Target).count() != 1 {
            return Err(Error::Config("SCM needs exactly one target node".into()));
        }
        for v in 0..n {
            let label = self.dag.label(v);
            self.mechanisms[v].check(label, false)?;
            let mut named: Vec<&str> = self.mechanisms[v].parent_names();
            named.sort_unstable();
            let mut actual: Vec<&str> = self.dag.parents(v).iter().map(|&p| self.dag.label(p)).collect();
            actual.sort_unstable();
            if named != actual {
                return Err(Error::Config(format!(
                    "mechanism parents of '{label}' {named:?} differ from DAG parents {actual:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> &[String] {
        self.dag.labels()
    }

    pub fn target(&self) -> usize {
        self.roles.iter().position(|&r| r == Role::Target).unwrap()
    }

    pub fn target_label(&self) -> &str {
        self.dag.label(self.target())
    }

    pub fn role_map(&self) -> BTreeMap<String, String> {
        self.labels()
            .iter()
            .zip(&self.roles)
            .map(|(l, r)| (l.clone(), r.as_str().to_string()))
            .collect()
    }

    /// The model with the listed mechanisms replaced; replaced nodes lose their parents.
    pub fn intervened(&self, interventions: &[(String, Mechanism)]) -> Result<ScmSpec> {
        let mut mech = self.mechanisms.clone();
        let mut edges = self.dag.edges().clone();
        for (node, m) in interventions {
            let v = self
                .dag
                .index(node)
                .ok_or_else(|| Error::Config(format!("intervention target '{node}' not in the SCM")))?;
            m.check(node, true)?;
            for name in m.parent_names() {
                let p = self
                    .dag
                    .index(name)
                    .ok_or_else(|| Error::Config(format!("unknown parent '{name}' in intervention")))?;
                edges.insert((p, v));
            }
            edges.retain(|&(p, c)| c != v || m.parent_names().contains(&self.dag.label(p)));
            mech[v] = m.clone();
        }
        let dag = Dag::new(self.labels().to_vec(), edges)?;
        Ok(ScmSpec {
            dag,
            mechanisms: mech,
            roles: self.roles.clone(),
        })
    }

    /// Model restricted to `nodes`; parents outside the set are dropped along with their terms.
    pub fn sub_scm(&self, nodes: &[usize]) -> Result<ScmSpec> {
        let mut nodes = nodes.to_vec();
        nodes.sort_unstable();
        nodes.dedup();
        let keep: Vec<&str> = nodes.iter().map(|&v| self.dag.label(v)).collect();
        let dag = self.dag.induced(&nodes);
        let filter = |ws: &[(String, f64)]| ws.iter().filter(|w| keep.contains(&w.0.as_str())).cloned().collect();
        let mechanisms = nodes
            .iter()
            .map(|&v| match &self.mechanisms[v] {
                Mechanism::LinearGaussian {
                    weights,
                    intercept,
                    noise_sd,
                } => Mechanism::LinearGaussian {
                    weights: filter(weights),
                    intercept: *intercept,
                    noise_sd: *noise_sd,
                },
                Mechanism::BernoulliEvent {
                    base_rate,
                    logit_weights,
                } => Mechanism::BernoulliEvent {
                    base_rate: *base_rate,
                    logit_weights: filter(logit_weights),
                },
                Mechanism::Constant(c) => Mechanism::Constant(*c),
            })
            .collect();
        // a sub-model without the target keeps its roles but nominates a stand-in target
        let mut roles: Vec<Role> = nodes.iter().map(|&v| self.roles[v]).collect();
        if !roles.contains(&Role::Target) {
            if let Some(last) = roles.last_mut() {
                *last = Role::Target;
            }
        }
        Ok(ScmSpec {
            dag,
            mechanisms,
            roles,
        })
    }

    /// Exact mean and covariance (row-major) implied by the model.
    ///
    /// Requires event nodes to be roots, so every non-constant node is a linear
    /// function of independent noises.
    pub fn analytic_moments(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.dag.n();
        let order = self.dag.topological_sort()?;
        // x = mu + A e, where e are independent unit-variance noises (one per node)
        let mut mean = vec![0.0; n];
        let mut load = vec![vec![0.0; n]; n];
        for &v in &order {
            match &self.mechanisms[v] {
                Mechanism::LinearGaussian {
                    weights,
                    intercept,
                    noise_sd,
                } => {
                    mean[v] = *intercept;
                    load[v][v] = *noise_sd;
                    for (name, w) in weights {
                        let p = self.dag.index(name).unwrap();
                        mean[v] += w * mean[p];
                        for e in 0..n {
                            load[v][e] += w * load[p][e];
                        }
                    }
                }
                Mechanism::BernoulliEvent {
                    base_rate,
                    logit_weights,
                } => {
                    if !logit_weights.is_empty() {
                        return Err(Error::Config(format!(
                            "analytic moments need event node '{}' to be a root",
                            self.dag.label(v)
                        )));
                    }
                    mean[v] = *base_rate;
                    load[v][v] = (base_rate * (1.0 - base_rate)).sqrt();
                }
                Mechanism::Constant(c) => mean[v] = *c,
            }
        }
        let mut cov = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                cov[a * n + b] = (0..n).map(|e| load[a][e] * load[b][e]).sum();
            }
        }
        Ok((mean, cov))
    }

    pub fn schema(&self) -> Result<Schema> {
        let cols = self
            .labels()
            .iter()
            .zip(&self.roles)
            .map(|(l, r)| match r {
                Role::Management => ColumnSpec::event(l),
                _ => ColumnSpec::continuous(l, Cadence::Daily),
            })
            .collect();
        Schema::new(cols, Some(self.target_label()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    /// Environment name; field ids derive from it.
    pub name: String,
    pub treatment: String,
    pub interventions: Vec<(String, Mechanism)>,
    pub n_fields: usize,
    pub n_days: usize,
    pub seed: u64,
}

impl EnvironmentSpec {
    pub fn field_ids(&self) -> Vec<String> {
        if self.n_fields == 1 {
            vec![self.name.clone()]
        } else {
            (1..=self.n_fields).map(|k| format!("{}_f{k}", self.name)).collect()
        }
    }

    /// Seed for one field, derived from the environment seed and the field id.
    pub fn field_seed(&self, field: &str) -> u64 {
        derive_seed(self.seed, tag(field))
    }

    /// Intervened node labels.
    pub fn targets(&self) -> Vec<String> {
        self.interventions.iter().map(|i| i.0.clone()).collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn draw_row<R: Rng>(scm: &ScmSpec, order: &[usize], rng: &mut R, row: &mut [f64]) {
    for &v in order {
        row[v] = match &scm.mechanisms[v] {
            Mechanism::LinearGaussian {
                weights,
                intercept,
                noise_sd,
            } => {
                let z: f64 = StandardNormal.sample(rng);
                let mut x = intercept + noise_sd * z;
                for (name, w) in weights {
                    x += w * row[scm.dag.index(name).unwrap()];
                }
                x
            }
            Mechanism::BernoulliEvent {
                base_rate,
                logit_weights,
            } => {
                let p = if logit_weights.is_empty() {
                    *base_rate
                } else {
                    let logit = (base_rate / (1.0 - base_rate)).ln()
                        + logit_weights
                            .iter()
                            .map(|(name, w)| w * row[scm.dag.index(name).unwrap()])
                            .sum::<f64>();
                    sigmoid(logit)
                };
                let u: f64 = rng.random();
                if u < p {
                    1.0
                } else {
                    0.0
                }
            }
            Mechanism::Constant(c) => *c,
        };
    }
}

/// Ancestral sampling of one environment: `n_days` daily rows for each of its fields.
pub fn sample_environment(scm: &ScmSpec, env: &EnvironmentSpec, start: NaiveDate) -> Result<Table> {
    let model = scm.intervened(&env.interventions)?;
    let order = model.dag.topological_sort()?;
    let n = model.dag.n();
    let fields = env.field_ids();
    let rows = fields.len() * env.n_days;
    let mut values = vec![0.0; rows * n];
    let (mut dates, mut field_id, mut treatment) = (Vec::with_capacity(rows), Vec::with_capacity(rows), Vec::with_capacity(rows));
    for (f, field) in fields.iter().enumerate() {
        let mut r = rng(env.field_seed(field));
        for d in 0..env.n_days {
            let at = (f * env.n_days + d) * n;
            draw_row(&model, &order, &mut r, &mut values[at..at + n]);
            dates.push(start + Days::new(d as u64));
            field_id.push(field.clone());
            treatment.push(env.treatment.clone());
        }
    }
    Table::new(model.schema()?, values, dates, field_id, treatment)
}

/// All environments stacked and sorted by (field, date).
pub fn sample_benchmark(scm: &ScmSpec, envs: &[EnvironmentSpec], start: NaiveDate) -> Result<Table> {
    let parts: Vec<Table> = envs
        .iter()
        .map(|e| sample_environment(scm, e, start))
        .collect::<Result<_>>()?;
    Ok(Table::concat(&parts)?.sorted())
}

pub fn true_cpdag(scm: &ScmSpec) -> Cpdag {
    cpdag_of(&scm.dag)
}
