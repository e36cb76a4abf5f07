use chrono::NaiveDate;

use super::{EnvironmentSpec, Mechanism, Role, ScmSpec};
use crate::error::Result;
use crate::graph::Dag;
use crate::rng::derive_seed;

pub const BENCHMARK_START: NaiveDate = match NaiveDate::from_ymd_opt(2013, 4, 1) {
    Some(d) => d,
    None => panic!("invalid start date"),
};

/// Free parameters of the synthetic farm. Noise levels are not calibrated to any real site.
#[derive(Debug, Clone, PartialEq)]
pub struct FarmParams {
    pub n_days: usize,
    pub seed: u64,
    /// Daily plough probability in the two ploughed training systems.
    pub plough_rate_red: f64,
    pub plough_rate_blue: f64,
    pub ph_noise: f64,
    pub nitrogen_noise: f64,
    pub carbon_noise: f64,
    pub n_red: usize,
    pub n_blue: usize,
    pub n_green: usize,
}

impl Default for FarmParams {
    fn default() -> Self {
        FarmParams {
            n_days: 120,
            seed: 0,
            plough_rate_red: 0.95,
            plough_rate_blue: 0.92,
            ph_noise: 0.12,
            nitrogen_noise: 0.02,
            carbon_noise: 0.15,
            n_red: 7,
            n_blue: 8,
            n_green: 7,
        }
    }
}

fn lg(weights: &[(&str, f64)], intercept: f64, noise_sd: f64) -> Mechanism {
    Mechanism::LinearGaussian {
        weights: weights.iter().map(|&(n, w)| (n.to_string(), w)).collect(),
        intercept,
        noise_sd,
    }
}

pub fn default_farm_benchmark() -> (ScmSpec, Vec<EnvironmentSpec>) {
    farm_benchmark(&FarmParams::default()).expect("default benchmark parameters are valid")
}

/// Twelve-node farm model and its 22 single-field environments
/// (ploughed red and blue systems for training, unploughed green for testing).
pub fn farm_benchmark(p: &FarmParams) -> Result<(ScmSpec, Vec<EnvironmentSpec>)> {
    let nodes: [(&str, Role, Mechanism); 12] = [
        ("fertilize", Role::Management, Mechanism::event(0.30)),
        ("manure", Role::Management, Mechanism::event(0.15)),
        ("plough", Role::Management, Mechanism::event(0.50)),
        ("lime", Role::Management, Mechanism::event(0.10)),
        ("graze", Role::Management, Mechanism::event(0.40)),
        ("sow", Role::Management, Mechanism::event(0.20)),
        ("moisture", Role::Soil, Mechanism::gaussian_root(30.0, 4.0)),
        ("pH", Role::Soil, lg(&[("plough", -0.6), ("lime", 0.5)], 6.4, p.ph_noise)),
        (
            "totalN",
            Role::Soil,
            lg(&[("fertilize", 0.08), ("manure", 0.06)], 0.25, p.nitrogen_noise),
        ),
        ("bulk_density", Role::Soil, lg(&[("graze", 0.08), ("plough", -0.1)], 1.1, 0.05)),
        ("plant_cover", Role::Soil, lg(&[("sow", 0.3), ("moisture", 0.01)], 0.4, 0.05)),
        ("totalC", Role::Target, lg(&[("pH", 0.8), ("totalN", 5.5)], -2.5, p.carbon_noise)),
    ];
    let labels: Vec<String> = nodes.iter().map(|n| n.0.to_string()).collect();
    let mut edges = Vec::new();
    for (name, _, m) in &nodes {
        for parent in m.parent_names() {
            edges.push((parent.to_string(), name.to_string()));
        }
    }
    let dag = Dag::from_named_edges(labels, &edges)?;
    let scm = ScmSpec::new(
        dag,
        nodes.iter().map(|n| n.2.clone()).collect(),
        nodes.iter().map(|n| n.1).collect(),
    )?;

    let mut envs = Vec::new();
    let groups: [(&str, usize, Mechanism); 3] = [
        ("red", p.n_red, Mechanism::event(p.plough_rate_red)),
        ("blue", p.n_blue, Mechanism::event(p.plough_rate_blue)),
        ("green", p.n_green, Mechanism::Constant(0.0)),
    ];
    for (treatment, count, plough) in groups {
        for k in 1..=count {
            let name = format!("{treatment}_{k:02}");
            envs.push(EnvironmentSpec {
                seed: derive_seed(p.seed, envs.len() as u64),
                name,
                treatment: treatment.to_string(),
                interventions: vec![("plough".to_string(), plough.clone())],
                n_fields: 1,
                n_days: p.n_days,
            });
        }
    }
    Ok((scm, envs))
}
