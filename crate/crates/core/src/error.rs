use std::fmt;

use serde::{Deserialize, Serialize};

/// Constraint families of the joint energy-minimization problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintFamily {
    /// One edge UE per slot, binary indicators.
    Schedule,
    /// Edge transmit power budget.
    EdgePower,
    /// AirComp transmit power budget `|b|^2 <= P`.
    AircompPower,
    /// Per-slot aggregation MSE threshold.
    Mse,
    /// Total offloaded data per edge UE.
    Data,
    /// Per-slot BS computing capacity.
    Compute,
    /// Per-slot achievable rate.
    Rate,
    /// No data offloaded in a slot the UE is not scheduled in.
    Coupling,
}

impl fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Schedule => "schedule",
            Self::EdgePower => "edge power",
            Self::AircompPower => "aircomp power",
            Self::Mse => "mse",
            Self::Data => "data demand",
            Self::Compute => "compute capacity",
            Self::Rate => "rate",
            Self::Coupling => "schedule/offload coupling",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate slot {slot}: {reason}")]
    DegenerateSlot { slot: usize, reason: String },
    #[error("infeasible instance: {family} violated ({detail})")]
    Infeasible {
        family: ConstraintFamily,
        detail: String,
    },
    #[error("usage: {0}")]
    Usage(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn infeasible(family: ConstraintFamily, detail: impl Into<String>) -> Self {
        Self::Infeasible {
            family,
            detail: detail.into(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Parse(format!("{other:?}")),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
