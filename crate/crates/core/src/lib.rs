//! Energy-minimizing resource allocation for a wireless system where some
//! users aggregate a function over the air while others offload tasks to an
//! edge server in scheduled time slots, on a shared channel.

pub mod baselines;
pub mod bcd;
pub mod config;
pub mod error;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod scenario;
pub mod subsolvers;

pub use bcd::{complexity_estimate, initialize_feasible, run_bcd, IterationTrace, TerminationReason};
pub use config::{Preset, SystemConfig};
pub use error::{ConstraintFamily, Error, Result};
pub use model::{check_feasibility, energy, DecisionSet, EnergyBreakdown, FeasibilityReport};
pub use scenario::{build_scenario, Scenario};
