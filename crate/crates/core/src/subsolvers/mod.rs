//! Block solvers for the three variable groups of the BCD loop:
//! Rx-scaling and offload amounts (`omega`), AirComp/edge powers (`theta`),
//! and the relaxed edge schedule (`xi`), plus max-value rounding.

pub mod kernel;
mod omega;
mod theta;
mod xi;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{ConstraintFamily, Error, Result};
use crate::model::{check_feasibility, edge_interference, required_sinr, DecisionSet, FeasibilityReport};
use crate::scenario::Scenario;

pub use kernel::{convex_kernel_minimize, KernelSettings, SolveStatus};
pub use omega::solve_block_omega;
pub use theta::{solve_block_theta, solve_edge_power};
pub use xi::{schedule_candidates, solve_block_xi, ScheduleCandidates};

/// Result of one block solve.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub decisions: DecisionSet,
    /// Block objective in joules.
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Constraint family responsible for an `Infeasible` status.
    pub violated: Option<ConstraintFamily>,
}

/// Compact record of a [`SolveOutcome`] for traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockStatus {
    pub status: SolveStatus,
    /// Absent for infeasible solves.
    pub objective: Option<f64>,
    pub iterations: usize,
    pub kkt_residual: Option<f64>,
}

impl SolveOutcome {
    pub fn summary(&self) -> BlockStatus {
        BlockStatus {
            status: self.status,
            objective: self.objective.is_finite().then_some(self.objective),
            iterations: self.iterations,
            kkt_residual: self.kkt_residual.is_finite().then_some(self.kkt_residual),
        }
    }

    pub fn is_infeasible(&self) -> bool {
        self.status == SolveStatus::Infeasible
    }

    pub(crate) fn infeasible(decisions: DecisionSet, family: ConstraintFamily) -> Self {
        Self {
            decisions,
            objective: f64::NAN,
            status: SolveStatus::Infeasible,
            iterations: 0,
            kkt_residual: f64::INFINITY,
            violated: Some(family),
        }
    }
}

pub(crate) fn kernel_settings(config: &SystemConfig) -> KernelSettings {
    KernelSettings {
        feas_tol: config.solver_feas_tol,
        opt_tol: config.solver_opt_tol,
        ..KernelSettings::default()
    }
}

/// Merge per-slot statuses: the worst one wins.
pub(crate) fn worst_status(a: SolveStatus, b: SolveStatus) -> SolveStatus {
    use SolveStatus::*;
    match (a, b) {
        (Infeasible, _) | (_, Infeasible) => Infeasible,
        (FeasibleSuboptimal, _) | (_, FeasibleSuboptimal) => FeasibleSuboptimal,
        _ => Optimal,
    }
}

/// MSE-minimizing Rx-scaling for `slot`:
/// `eta = sum_j conj(b_j h_j) / (sum_j |b_j h_j|^2 + sum_k alpha_k^2 p_k |h_k|^2 + sigma^2)`.
pub fn eta_closed_form(
    config: &SystemConfig,
    scenario: &Scenario,
    decisions: &DecisionSet,
    slot: usize,
) -> Result<Complex64> {
    let mut numerator = Complex64::new(0.0, 0.0);
    let mut received = 0.0;
    for j in 0..decisions.num_aircomp() {
        let c = decisions.tx_scaling[[j, slot]] * scenario.aircomp_channel(j, slot);
        numerator += c.conj();
        received += c.norm_sqr();
    }
    let denominator = received + edge_interference(scenario, decisions, slot) + config.noise_power;
    if !(denominator > 0.0) {
        return Err(Error::DegenerateSlot {
            slot,
            reason: "no signal, interference or noise power".into(),
        });
    }
    Ok(numerator / denominator)
}

/// Minimum edge power that carries `bits` in `slot` against `interference`
/// (received AirComp power plus noise), from the rate constraint at equality.
pub(crate) fn min_edge_power(
    config: &SystemConfig,
    scenario: &Scenario,
    k: usize,
    slot: usize,
    bits: f64,
    interference: f64,
) -> f64 {
    if bits <= 0.0 {
        return 0.0;
    }
    required_sinr(config, bits) * interference / scenario.edge_channel(k, slot).norm_sqr()
}

/// Max-value rounding of a relaxed schedule.
///
/// Each slot goes to the UE with the largest weight, the lowest index winning
/// ties (weights within `1e-9` of the maximum). Offload amounts and powers of
/// unscheduled pairs are zeroed. The report lists whatever data, compute or
/// MSE violations the rounding induced; the caller repairs them.
pub fn round_schedule(
    config: &SystemConfig,
    scenario: &Scenario,
    relaxed: &DecisionSet,
) -> Result<(DecisionSet, FeasibilityReport)> {
    relaxed.check_shape(scenario)?;
    let mut d = relaxed.clone();
    let (k_total, slots) = d.alpha.dim();
    for i in 0..slots {
        let max = (0..k_total).map(|k| relaxed.alpha[[k, i]]).fold(f64::NEG_INFINITY, f64::max);
        let winner = (0..k_total)
            .find(|&k| relaxed.alpha[[k, i]] >= max - 1e-9)
            .expect("at least one edge UE");
        for k in 0..k_total {
            if k == winner {
                d.alpha[[k, i]] = 1.0;
            } else {
                d.alpha[[k, i]] = 0.0;
                d.offload_bits[[k, i]] = 0.0;
                d.edge_power[[k, i]] = 0.0;
            }
        }
    }
    d.relaxed = false;
    let report = check_feasibility(config, scenario, &d, config.solver_feas_tol)?;
    Ok((d, report))
}


#[cfg(test)]
mod tests {
    use super::testutil::manual_scenario;
    use super::*;
    use crate::model::mse_analytic;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eta_exact_inversion() {
        let mut cfg = SystemConfig::desk();
        cfg.noise_power = 0.0;
        let sc = manual_scenario(&[vec![c(2.0, 0.0)]], &[vec![c(1.0, 0.0)]]);
        let mut d = DecisionSet::zeros(1, 1, 1);
        d.tx_scaling[[0, 0]] = c(1.0, 0.0);
        d.alpha[[0, 0]] = 1.0;
        let eta = eta_closed_form(&cfg, &sc, &d, 0).unwrap();
        assert_relative_eq!(eta.re, 0.5);
        assert_relative_eq!(eta.im, 0.0);
        d.rx_scaling[0] = eta;
        assert!(mse_analytic(&cfg, &sc, &d, 0) < 1e-30);
    }

    #[test]
    fn eta_zero_without_aircomp_power() {
        let cfg = SystemConfig::desk();
        let sc = manual_scenario(&[vec![c(2.0, 1.0)]], &[vec![c(1.0, 0.0)]]);
        let d = DecisionSet::zeros(1, 1, 1);
        assert_eq!(eta_closed_form(&cfg, &sc, &d, 0).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn eta_degenerate_slot() {
        let mut cfg = SystemConfig::desk();
        cfg.noise_power = 0.0;
        let sc = manual_scenario(&[vec![c(2.0, 1.0)]], &[vec![c(1.0, 0.0)]]);
        let d = DecisionSet::zeros(1, 1, 1);
        assert!(matches!(
            eta_closed_form(&cfg, &sc, &d, 0),
            Err(Error::DegenerateSlot { slot: 0, .. })
        ));
    }

    fn rounding_case(alpha: &[f64]) -> DecisionSet {
        let mut d = DecisionSet::zeros(1, alpha.len(), 1);
        for (k, a) in alpha.iter().enumerate() {
            d.alpha[[k, 0]] = *a;
            d.offload_bits[[k, 0]] = 10.0;
            d.edge_power[[k, 0]] = 0.1;
        }
        d.relaxed = true;
        d
    }

    fn rounding_scenario(k: usize) -> (SystemConfig, Scenario) {
        let cfg = SystemConfig {
            num_slots: 1,
            horizon: 1.0,
            num_aircomp: 1,
            num_edge: k,
            ..SystemConfig::desk()
        };
        let sc = manual_scenario(&[vec![c(1e-6, 0.0)]], &vec![vec![c(1e-6, 0.0)]; k]);
        (cfg, sc)
    }

    #[test]
    fn rounding_picks_max_and_breaks_ties_low() {
        let (cfg, sc) = rounding_scenario(2);
        let (d, _) = round_schedule(&cfg, &sc, &rounding_case(&[0.6, 0.4])).unwrap();
        assert_eq!(d.alpha.column(0).to_vec(), vec![1.0, 0.0]);
        assert_eq!(d.offload_bits[[1, 0]], 0.0);
        assert!(!d.relaxed);
        let (d, _) = round_schedule(&cfg, &sc, &rounding_case(&[0.5, 0.5])).unwrap();
        assert_eq!(d.alpha.column(0).to_vec(), vec![1.0, 0.0]);
        let (d, _) = round_schedule(&cfg, &sc, &rounding_case(&[0.5 - 1e-12, 0.5 + 1e-12])).unwrap();
        assert_eq!(d.alpha.column(0).to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn rounding_reports_induced_data_shortfall() {
        let (mut cfg, sc) = rounding_scenario(2);
        cfg.data_demand = 10.0;
        let (_, report) = round_schedule(&cfg, &sc, &rounding_case(&[0.6, 0.4])).unwrap();
        // UE 1 lost its only slot
        assert_relative_eq!(report.data, 1.0);
    }

    proptest::proptest! {
        #[test]
        fn rounding_yields_one_ue_per_slot(
            raw in proptest::collection::vec(0.0f64..1.0, 4 * 6),
        ) {
            let (k, slots) = (4, 6);
            let cfg = SystemConfig { num_slots: slots, horizon: 6.0, num_aircomp: 1, num_edge: k, ..SystemConfig::desk() };
            let sc = manual_scenario(&[vec![c(1e-6, 0.0); slots]], &vec![vec![c(1e-6, 0.0); slots]; k]);
            let mut d = DecisionSet::zeros(1, k, slots);
            for i in 0..slots {
                let col: Vec<f64> = (0..k).map(|kk| raw[kk * slots + i] + 1e-3).collect();
                let total: f64 = col.iter().sum();
                for kk in 0..k {
                    d.alpha[[kk, i]] = col[kk] / total;
                }
            }
            d.relaxed = true;
            let (r, report) = round_schedule(&cfg, &sc, &d).unwrap();
            proptest::prop_assert_eq!(report.schedule, 0.0);
            for i in 0..slots {
                let ones = (0..k).filter(|&kk| r.alpha[[kk, i]] == 1.0).count();
                let zeros = (0..k).filter(|&kk| r.alpha[[kk, i]] == 0.0).count();
                proptest::prop_assert_eq!((ones, zeros), (1, k - 1));
            }
        }
    }
}
