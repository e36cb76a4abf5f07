//! Constraint-based (PC) and score-based (GES, GIES) structure learning.

mod ci;
mod pc;
mod search;

pub use ci::{CiTest, CovarianceOracle, DSeparationOracle, FisherZ};
pub use pc::{pc, pc_with_test, PcOutput};
pub use search::{ges, ges_with_score, gies, gies_with_score, SearchOutput};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Pc,
    Ges,
    Gies,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Pc => "pc",
            Algorithm::Ges => "ges",
            Algorithm::Gies => "gies",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pc" => Ok(Algorithm::Pc),
            "ges" => Ok(Algorithm::Ges),
            "gies" => Ok(Algorithm::Gies),
            _ => Err(Error::Usage(format!("unknown discovery algorithm '{s}'"))),
        }
    }

    pub const ALL: [Algorithm; 3] = [Algorithm::Pc, Algorithm::Ges, Algorithm::Gies];
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryConfig {
    pub alpha: f64,
    pub max_cond_size: usize,
    pub max_parents: usize,
    pub use_interventions: bool,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            alpha: 0.05,
            max_cond_size: 3,
            max_parents: 5,
            use_interventions: true,
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.max_parents == 0 {
            return Err(Error::Config("max_parents must be at least 1".into()));
        }
        Ok(())
    }
}

/// Columns with zero sample variance; they take part in no test or score.
pub(crate) fn degenerate_columns(data: &crate::stats::Dataset) -> Vec<bool> {
    data.columns
        .iter()
        .map(|c| c.iter().all(|&v| v == c[0]))
        .collect()
}
