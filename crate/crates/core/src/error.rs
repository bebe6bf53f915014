use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dyadic::DyadicInterval;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("generation {n} exceeds the depth budget {budget}")]
    DepthBudget { n: u32, budget: u32 },

    #[error("invalid dyadic interval (n={n}, k={k})")]
    InvalidInterval { n: u32, k: u64 },

    #[error("interval {interval} is not at generation {expected}")]
    WrongLevel {
        interval: DyadicInterval,
        expected: u32,
    },

    #[error("no sign assigned to block interval {0}")]
    MissingSign(DyadicInterval),

    #[error("family violates Jones' compatibility conditions: {0}")]
    JonesViolation(String),

    #[error("cover level {m} is too coarse; halves live at generation {required}")]
    CoverTooCoarse { m: u32, required: u32 },

    #[error("zero diagonal entry at {0} although a positive diagonal floor was claimed")]
    ZeroDiagonal(DyadicInterval),

    #[error("contraction {0} is not below 1")]
    NotContractive(String),

    #[error("contraction witness violated: {0}")]
    WitnessViolation(String),

    #[error("infeasible within depth: {0}")]
    Infeasible(Box<InfeasibleReport>),

    #[error("verification failed: {0}")]
    VerificationFailed(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn infeasible(report: InfeasibleReport) -> Self {
        Error::Infeasible(Box::new(report))
    }

    /// True for errors caused by malformed input rather than by the mathematics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::DepthBudget { .. }
                | Error::InvalidInterval { .. }
                | Error::WrongLevel { .. }
                | Error::MissingSign(_)
                | Error::Parse(_)
                | Error::Json(_)
                | Error::Precondition(_)
                | Error::CoverTooCoarse { .. }
                | Error::ZeroDiagonal(_)
        )
    }
}

/// Structured description of a construction that ran out of room at the
/// configured Haar depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfeasibleReport {
    pub stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<DyadicInterval>,
    /// Smallest value reached, as an exact rational string.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub achieved: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<String>,
    pub depth: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggested_depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub achievable_index_depth: Option<u32>,
    pub detail: String,
}

impl fmt::Display for InfeasibleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at depth {}", self.stage, self.depth)?;
        if let Some(index) = &self.index {
            write!(f, ", index {index}")?;
        }
        if let (Some(achieved), Some(budget)) = (&self.achieved, &self.budget) {
            write!(f, ", best {achieved} vs budget {budget}")?;
        }
        if let Some(depth) = self.suggested_depth {
            write!(f, ", try depth >= {depth}")?;
        }
        if let Some(depth) = self.achievable_index_depth {
            write!(f, ", achievable index depth {depth}")?;
        }
        write!(f, ": {}", self.detail)
    }
}
