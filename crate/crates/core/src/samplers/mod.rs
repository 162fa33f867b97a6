//! Sampling designs over a finite population.

mod bmvi;
mod lpm;
mod srs;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::IndexSet;
use crate::models::ModelError;

pub use bmvi::{bmvi_sample, bmvi_scores};
pub use lpm::{lpm_sample, lpm_sample_observed, lpm_update_pair, InclusionState};
pub use srs::srs_sample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("sample size {k} out of range 1..={available}")]
    SizeOutOfRange { k: usize, available: usize },
    #[error("inclusion probabilities ({0}, {1}) must lie in [0, 1]")]
    ProbabilityOutOfRange(f64, f64),
    #[error("both inclusion probabilities ({0}, {1}) are already decided")]
    AlreadyDecided(f64, f64),
    #[error("local pivotal method needs at least 2 candidates, got {0}")]
    TooFewCandidates(usize),
    #[error("candidate {0} is also in the prior set")]
    OverlapsPrior(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Srs,
    Lpm,
    Bmvi,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 3] = [SamplerKind::Srs, SamplerKind::Lpm, SamplerKind::Bmvi];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Srs => "srs",
            SamplerKind::Lpm => "lpm",
            SamplerKind::Bmvi => "bmvi",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "srs" => Ok(SamplerKind::Srs),
            "lpm" => Ok(SamplerKind::Lpm),
            "bmvi" => Ok(SamplerKind::Bmvi),
            other => Err(format!("unknown sampler `{other}` (expected srs, lpm or bmvi)")),
        }
    }
}

/// Points chosen by one design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub selected: IndexSet,
    pub method: SamplerKind,
}

fn check_size(k: usize, available: usize) -> Result<(), SamplerError> {
    if k == 0 || k > available {
        Err(SamplerError::SizeOutOfRange { k, available })
    } else {
        Ok(())
    }
}
