//! Rx-scaling and offload-amount block.
//!
//! `eta` only enters the MSE constraint, so each slot takes the MSE-minimizing
//! closed form. The offload amounts then solve
//!
//! ```text
//!     minimize    sum_i gamma (c0 sum_k alpha_k(i) l_k(i))^3 / (T/I)^2
//!     subject to  sum_i alpha_k(i) l_k(i) >= D_k
//!                 c0 sum_k alpha_k(i) l_k(i) <= (T/I) f_max
//!                 0 <= l_k(i) <= min(rate cap, alpha_k(i) L_max)
//! ```
//!
//! The rate cap of a pair is the largest amount any edge power allowed by
//! the power budget and the MSE threshold (with the current `eta` and `b`)
//! could carry, so the power-control block can always follow.

use crate::config::SystemConfig;
use crate::error::{ConstraintFamily, Result};
use crate::model::{aircomp_interference, mse_analytic, shannon_bits, DecisionSet};
use crate::scenario::Scenario;

use super::kernel::{convex_kernel_minimize, CompositeObjective, ConstraintSet, CubicTerm, SolveStatus};
use super::{eta_closed_form, kernel_settings, SolveOutcome};

/// Relative margin kept below the power that exactly exhausts a budget.
const CAP_MARGIN: f64 = 1e-6;

pub fn solve_block_omega(config: &SystemConfig, scenario: &Scenario, decisions: &DecisionSet) -> Result<SolveOutcome> {
    scenario.check_against(config)?;
    decisions.check_shape(scenario)?;
    let mut d = decisions.clone();
    let (k_total, slots) = d.alpha.dim();

    for i in 0..slots {
        d.rx_scaling[i] = eta_closed_form(config, scenario, &d, i)?;
        if mse_analytic(config, scenario, &d, i) > config.mse_threshold * (1.0 + config.solver_feas_tol) {
            return Ok(SolveOutcome::infeasible(d, ConstraintFamily::Mse));
        }
    }

    let caps = offload_caps(config, scenario, &d);
    let l_max = config.max_bits_per_slot();
    let demand = config.data_demand;

    // variable per pair with positive weight and capacity
    let mut index = vec![None; k_total * slots];
    let mut pairs = Vec::new();
    let mut fixed = vec![0.0; k_total * slots];
    for k in 0..k_total {
        let deliverable: f64 = (0..slots).map(|i| d.alpha[[k, i]] * caps[k * slots + i]).sum();
        if deliverable < demand * (1.0 - config.solver_feas_tol) {
            return Ok(SolveOutcome::infeasible(d, ConstraintFamily::Data));
        }
        let tight = demand > 0.0 && deliverable <= demand * (1.0 + 1e-9);
        for i in 0..slots {
            let cap = caps[k * slots + i];
            if d.alpha[[k, i]] <= 0.0 || cap <= 0.0 || demand == 0.0 {
                continue;
            }
            if tight {
                fixed[k * slots + i] = cap * demand / deliverable;
            } else {
                index[k * slots + i] = Some(pairs.len());
                pairs.push((k, i));
            }
        }
    }

    let mut status = SolveStatus::Optimal;
    let mut iterations = 0;
    let mut kkt_residual = 0.0;
    let mut solution = fixed.clone();

    if !pairs.is_empty() {
        // work in units of L_max bits
        let n = pairs.len();
        let mut cs = ConstraintSet::new(n);
        for (v, &(k, i)) in pairs.iter().enumerate() {
            cs.bounds(v, 0.0, caps[k * slots + i] / l_max);
        }
        for k in 0..k_total {
            let row: Vec<(usize, f64)> = (0..slots)
                .filter_map(|i| index[k * slots + i].map(|v| (v, -d.alpha[[k, i]])))
                .collect();
            if row.is_empty() {
                continue;
            }
            let fixed_part: f64 = (0..slots).map(|i| d.alpha[[k, i]] * fixed[k * slots + i]).sum::<f64>() / l_max;
            let scale = 1.0 / (demand / l_max);
            let row = row.into_iter().map(|(v, a)| (v, a * scale)).collect();
            cs.less_equal(row, -(demand / l_max - fixed_part) * scale);
        }
        let mut cubes = Vec::new();
        let mut reference = 0.0;
        for i in 0..slots {
            let weights: Vec<(usize, f64)> = (0..k_total)
                .filter_map(|k| index[k * slots + i].map(|v| (v, d.alpha[[k, i]])))
                .collect();
            if weights.is_empty() {
                continue;
            }
            let fixed_load: f64 = (0..k_total).map(|k| d.alpha[[k, i]] * fixed[k * slots + i]).sum::<f64>() / l_max;
            if weights.len() > 1 || fixed_load > 0.0 {
                cs.less_equal(weights.clone(), 1.0 - fixed_load);
            }
            let current: f64 = (0..k_total)
                .map(|k| d.alpha[[k, i]] * decisions.offload_bits[[k, i]])
                .sum::<f64>()
                / l_max;
            reference += current.powi(3);
            cubes.push(CubicTerm {
                coef: 1.0,
                weights,
            });
        }
        if reference <= 0.0 {
            reference = cubes.len() as f64 * (demand / l_max / slots as f64).powi(3).max(f64::MIN_POSITIVE);
        }
        for c in &mut cubes {
            c.coef = 1.0 / reference;
        }
        let objective = CompositeObjective {
            cubes,
            ..Default::default()
        };
        let start: Vec<f64> = pairs
            .iter()
            .map(|&(k, i)| decisions.offload_bits[[k, i]] / l_max)
            .collect();
        let sol = convex_kernel_minimize(&objective, &cs, &start, &kernel_settings(config));
        if sol.status == SolveStatus::Infeasible {
            return Ok(SolveOutcome::infeasible(d, ConstraintFamily::Data));
        }
        status = sol.status;
        iterations = sol.iterations;
        kkt_residual = sol.kkt_residual;
        for (v, &(k, i)) in pairs.iter().enumerate() {
            let cap = caps[k * slots + i];
            solution[k * slots + i] = (sol.x[v] * l_max).clamp(0.0, cap);
        }
    }

    for k in 0..k_total {
        for i in 0..slots {
            d.offload_bits[[k, i]] = solution[k * slots + i];
        }
    }
    let objective = crate::model::energy(config, &d).e_comp;
    Ok(SolveOutcome {
        decisions: d,
        objective,
        status,
        iterations,
        kkt_residual,
        violated: None,
    })
}

/// Per-pair upper bound on offloaded bits, row-major `k * I + i`.
fn offload_caps(config: &SystemConfig, scenario: &Scenario, d: &DecisionSet) -> Vec<f64> {
    let (k_total, slots) = d.alpha.dim();
    let l_max = config.max_bits_per_slot();
    let mut caps = vec![0.0; k_total * slots];
    for i in 0..slots {
        let eta_sq = d.rx_scaling[i].norm_sqr();
        let interference = aircomp_interference(scenario, d, i) + config.noise_power;
        let mse = mse_analytic(config, scenario, d, i);
        for k in 0..k_total {
            let alpha = d.alpha[[k, i]];
            if alpha <= 0.0 {
                continue;
            }
            let gain = scenario.edge_channel(k, i).norm_sqr();
            let own = alpha * alpha * d.edge_power[[k, i]] * gain;
            let mse_room = config.mse_threshold - (mse - eta_sq * own);
            let p_mse = if eta_sq > 0.0 {
                (mse_room / (eta_sq * alpha * alpha * gain)).max(0.0)
            } else {
                f64::INFINITY
            };
            let p_cap = config.p_max_edge.min(p_mse) * (1.0 - CAP_MARGIN);
            let rate = shannon_bits(config, p_cap * gain / interference);
            caps[k * slots + i] = rate.min(alpha * l_max);
        }
    }
    caps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subsolvers::testutil::manual_scenario;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn setup(slots: usize, demand: f64) -> (SystemConfig, Scenario, DecisionSet) {
        let cfg = SystemConfig {
            num_slots: slots,
            horizon: slots as f64,
            num_aircomp: 1,
            num_edge: 1,
            data_demand: demand,
            mse_threshold: 1.0,
            ..SystemConfig::desk()
        };
        let h = Complex64::new(1e-6, 0.0);
        let sc = manual_scenario(&[vec![h; slots]], &[vec![h; slots]]);
        let mut d = DecisionSet::zeros(1, 1, slots);
        d.set_round_robin();
        for i in 0..slots {
            d.tx_scaling[[0, i]] = Complex64::new(1e-3, 0.0);
        }
        (cfg, sc, d)
    }

    #[test]
    fn spreads_load_equally() {
        let (cfg, sc, mut d) = setup(4, 4e5);
        // lopsided start
        d.offload_bits[[0, 0]] = 4e5;
        let out = solve_block_omega(&cfg, &sc, &d).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        for i in 0..4 {
            assert_relative_eq!(out.decisions.offload_bits[[0, i]], 1e5, max_relative = 1e-4);
        }
        // brute-force grid over the first three slots, last takes the rest
        let tau = cfg.slot_duration();
        let cost = |l: &[f64]| -> f64 {
            l.iter()
                .map(|x| cfg.capacitance * (cfg.cycles_per_bit * x).powi(3) / (tau * tau))
                .sum()
        };
        let mut best = f64::INFINITY;
        let step = 2e4;
        for a in 0..=20 {
            for b in 0..=20 - a {
                for c in 0..=20 - a - b {
                    let l = [a as f64 * step, b as f64 * step, c as f64 * step, 4e5 - (a + b + c) as f64 * step];
                    best = best.min(cost(&l));
                }
            }
        }
        assert!(out.objective <= best * (1.0 + 1e-6));
    }

    #[test]
    fn zero_demand_offloads_nothing() {
        let (cfg, sc, d) = setup(3, 0.0);
        let out = solve_block_omega(&cfg, &sc, &d).unwrap();
        assert!(out.decisions.offload_bits.iter().all(|&l| l == 0.0));
        assert_eq!(out.objective, 0.0);
    }

    #[test]
    fn single_slot_takes_all_demand() {
        let (cfg, sc, d) = setup(1, 2e5);
        let out = solve_block_omega(&cfg, &sc, &d).unwrap();
        assert_relative_eq!(out.decisions.offload_bits[[0, 0]], 2e5, max_relative = 1e-6);
        assert!(out.decisions.rx_scaling[0].norm() > 0.0);
    }

    #[test]
    fn demand_beyond_capacity_is_infeasible() {
        let (cfg, sc, d) = setup(1, 1e12);
        let out = solve_block_omega(&cfg, &sc, &d).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
        assert_eq!(out.violated, Some(ConstraintFamily::Data));
    }

    #[test]
    fn mse_out_of_reach_is_infeasible() {
        let (mut cfg, sc, d) = setup(2, 1e5);
        cfg.mse_threshold = 1e-9;
        let out = solve_block_omega(&cfg, &sc, &d).unwrap();
        assert_eq!(out.violated, Some(ConstraintFamily::Mse));
    }
}
