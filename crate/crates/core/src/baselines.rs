//! Comparison schemes. Each freezes one decision and optimizes the rest with
//! the same blocks the joint optimizer uses, so the energy gap isolates the
//! frozen decision.

use num_complex::Complex64;
use rand::Rng;

use crate::bcd::{descend, initialize_feasible, IterationTrace, PowerBlock, ACCEPT_TOL};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::model::{aircomp_interference, check_feasibility, energy, required_sinr, DecisionSet, EnergyBreakdown};
use crate::scenario::Scenario;
use crate::subsolvers::{eta_closed_form, solve_block_theta};

/// Round-robin schedule with each demand split equally over the UE's slots.
/// Only `eta` and the powers are optimized, once.
pub fn equal_offloading<R: Rng + ?Sized>(
    config: &SystemConfig,
    scenario: &Scenario,
    rng: &mut R,
) -> Result<(DecisionSet, EnergyBreakdown)> {
    let mut d = initialize_feasible(config, scenario, rng)?;
    for i in 0..d.num_slots() {
        d.rx_scaling[i] = eta_closed_form(config, scenario, &d, i)?;
    }
    let out = solve_block_theta(config, scenario, &d)?;
    if let Some(family) = out.violated {
        return Err(Error::infeasible(family, "equal split cannot be powered"));
    }
    let report = check_feasibility(config, scenario, &out.decisions, ACCEPT_TOL)?;
    if !report.feasible {
        let (family, residual) = report.worst();
        return Err(Error::infeasible(family, format!("equal split residual {residual:.3e}")));
    }
    let e = energy(config, &out.decisions);
    Ok((out.decisions, e))
}

/// AirComp scaling of the channel-inversion scheme for UE `j` in `slot`:
/// `sqrt(P_A) * min_l |h_l| / sqrt(|h_j|^2 + sigma^2)` in magnitude, with the
/// phase of `h_j` (or of `conj(h_j)` when `conjugate_phase` is set).
pub fn inversion_scaling(config: &SystemConfig, scenario: &Scenario, j: usize, slot: usize) -> Complex64 {
    let weakest = (0..scenario.num_aircomp())
        .map(|l| scenario.aircomp_channel(l, slot).norm())
        .fold(f64::INFINITY, f64::min);
    let h = scenario.aircomp_channel(j, slot);
    let magnitude = config.p_max_aircomp.sqrt() * weakest / (h.norm_sqr() + config.noise_power).sqrt();
    let unit = if h.norm() > 0.0 { h / h.norm() } else { Complex64::new(1.0, 0.0) };
    magnitude * if config.conjugate_phase { unit.conj() } else { unit }
}

/// Channel-inversion AirComp scaling, everything else optimized.
pub fn channel_inversion(config: &SystemConfig, scenario: &Scenario) -> Result<(DecisionSet, EnergyBreakdown)> {
    let (d, _) = channel_inversion_traced(config, scenario)?;
    let e = energy(config, &d);
    Ok((d, e))
}

/// [`channel_inversion`] with the descent trace.
pub fn channel_inversion_traced(config: &SystemConfig, scenario: &Scenario) -> Result<(DecisionSet, IterationTrace)> {
    config.validate()?;
    scenario.check_against(config)?;
    let (j_total, k_total, slots) = (config.num_aircomp, config.num_edge, config.num_slots);
    let mut d = DecisionSet::zeros(j_total, k_total, slots);
    d.set_round_robin();
    for k in 0..k_total {
        let owned = (0..slots).filter(|&i| d.alpha[[k, i]] == 1.0).count();
        for i in 0..slots {
            if d.alpha[[k, i]] == 1.0 {
                d.offload_bits[[k, i]] = config.data_demand / owned as f64;
            }
        }
    }
    for i in 0..slots {
        for j in 0..j_total {
            d.tx_scaling[[j, i]] = inversion_scaling(config, scenario, j, i);
        }
    }
    // minimum powers for the frozen scaling; eta does not enter the rate
    for i in 0..slots {
        let interference = aircomp_interference(scenario, &d, i) + config.noise_power;
        for k in 0..k_total {
            let l = d.offload_bits[[k, i]];
            if l > 0.0 {
                d.edge_power[[k, i]] =
                    required_sinr(config, l) * interference / scenario.edge_channel(k, i).norm_sqr();
            }
        }
    }
    for i in 0..slots {
        d.rx_scaling[i] = eta_closed_form(config, scenario, &d, i)?;
    }
    let report = check_feasibility(config, scenario, &d, ACCEPT_TOL)?;
    if !report.feasible {
        let (family, residual) = report.worst();
        return Err(Error::infeasible(
            family,
            format!("frozen inversion scaling leaves residual {residual:.3e} at the best eta"),
        ));
    }
    descend(config, scenario, d, PowerBlock::EdgeOnly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_scenario, stream_rng, INIT_STREAM};
    use crate::subsolvers::testutil::manual_scenario;
    use approx::assert_relative_eq;

    #[test]
    fn equal_gains_use_full_budget() {
        let cfg = SystemConfig {
            num_slots: 1,
            horizon: 1.0,
            num_aircomp: 3,
            num_edge: 1,
            noise_power: 0.0,
            ..SystemConfig::desk()
        };
        let h = |ph: f64| Complex64::from_polar(2e-6, ph);
        let sc = manual_scenario(&[vec![h(0.1)], vec![h(1.0)], vec![h(-2.0)]], &[vec![h(0.0)]]);
        for j in 0..3 {
            let b = inversion_scaling(&cfg, &sc, j, 0);
            assert_relative_eq!(b.norm_sqr(), cfg.p_max_aircomp, max_relative = 1e-12);
            assert_relative_eq!(b.arg(), sc.aircomp_channel(j, 0).arg(), epsilon = 1e-12);
        }
        let cfg = SystemConfig {
            conjugate_phase: true,
            ..cfg
        };
        assert_relative_eq!(inversion_scaling(&cfg, &sc, 1, 0).arg(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn inversion_scaling_within_budget() {
        let cfg = SystemConfig::desk();
        for seed in 0..5 {
            let sc = build_scenario(&cfg, seed).unwrap();
            for i in 0..cfg.num_slots {
                for j in 0..cfg.num_aircomp {
                    assert!(inversion_scaling(&cfg, &sc, j, i).norm_sqr() <= cfg.p_max_aircomp);
                }
            }
        }
    }

    #[test]
    fn single_edge_ue_takes_every_slot() {
        let cfg = SystemConfig {
            num_edge: 1,
            ..SystemConfig::desk()
        };
        let sc = build_scenario(&cfg, 2).unwrap();
        let (d, _) = equal_offloading(&cfg, &sc, &mut stream_rng(2, INIT_STREAM)).unwrap();
        for i in 0..cfg.num_slots {
            assert_eq!(d.alpha[[0, i]], 1.0);
            assert_relative_eq!(d.offload_bits[[0, i]], cfg.data_demand / cfg.num_slots as f64);
        }
    }
}
