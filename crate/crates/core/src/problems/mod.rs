//! Problem families implementing the refinable-sampler contract.

pub mod brownian;
pub mod nested;
pub mod region;
pub mod sde;
pub mod synthetic;

use nested::NestedModelSpec;
use sde::GbmSpec;
use synthetic::SyntheticSpec;

/// Everything needed to build one sampler family.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Nested(NestedModelSpec),
    Gbm(GbmSpec),
    Synthetic(SyntheticSpec),
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Nested(_) => "nested",
            ProblemSpec::Gbm(_) => "gbm",
            ProblemSpec::Synthetic(_) => "synthetic",
        }
    }

    /// Work growth rate of the hierarchy.
    pub fn gamma(&self) -> f64 {
        match self {
            ProblemSpec::Nested(s) => f64::from(s.gamma),
            ProblemSpec::Gbm(s) => f64::from(s.gamma),
            ProblemSpec::Synthetic(s) => s.gamma,
        }
    }
}
