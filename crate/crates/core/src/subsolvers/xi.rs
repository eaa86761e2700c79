//! Relaxed edge scheduling block.
//!
//! Offload amounts and powers are tied to the schedule: once a pair loses
//! its slot the old `l` and `p` say nothing about what it would cost to give
//! the slot to somebody else. The block therefore prices every pair with a
//! candidate table first. UE `k` offloads `l_k = D_k / n_k` in each slot it
//! gets, `n_k` being its current slot count, at the minimum power that rate
//! needs against the current AirComp signal. The relaxed schedule then solves
//!
//! ```text
//!     minimize    sum_i [ tau sum_k alpha_k(i) p_k(i) + gamma (c0 sum_k alpha_k(i) l_k)^3 / tau^2 ]
//!     subject to  sum_k alpha_k(i) = 1,  alpha >= 0
//!                 sum_i alpha_k(i) l_k = D_k
//! ```
//!
//! over the pairs that respect the power budget, the compute capacity and
//! the MSE threshold on their own. Because every slot is a convex
//! combination of admissible pairs, and both the MSE and the load are at most
//! the largest single-pair value, the relaxed point satisfies those
//! constraints too.

use ndarray::Array2;

use crate::config::SystemConfig;
use crate::error::{ConstraintFamily, Result};
use crate::model::{aircomp_interference, computation_energy, mse_analytic, required_sinr, DecisionSet};
use crate::scenario::Scenario;

use super::kernel::{convex_kernel_minimize, CompositeObjective, ConstraintSet, CubicTerm, SolveStatus};
use super::{kernel_settings, SolveOutcome};

/// Per-pair offload amount, power and admissibility used to price schedules.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleCandidates {
    /// `(K, I)` bits.
    pub bits: Array2<f64>,
    /// `(K, I)` watts.
    pub power: Array2<f64>,
    pub allowed: Array2<bool>,
}

/// Candidate tables for the current `b`, `eta` and schedule.
pub fn schedule_candidates(config: &SystemConfig, scenario: &Scenario, decisions: &DecisionSet) -> Result<ScheduleCandidates> {
    scenario.check_against(config)?;
    decisions.check_shape(scenario)?;
    let (k_total, slots) = decisions.alpha.dim();
    let tol = config.solver_feas_tol;
    let l_max = config.max_bits_per_slot();
    let mut bits = Array2::zeros((k_total, slots));
    let mut power = Array2::zeros((k_total, slots));
    let mut allowed = Array2::from_elem((k_total, slots), false);

    let mut base = decisions.clone();
    base.edge_power.fill(0.0);
    for k in 0..k_total {
        let owned = (0..slots).filter(|&i| decisions.alpha[[k, i]] > 0.5).count();
        let share = if owned > 0 {
            config.data_demand / owned as f64
        } else {
            config.data_demand * k_total as f64 / slots as f64
        };
        for i in 0..slots {
            bits[[k, i]] = share;
        }
    }
    for i in 0..slots {
        let interference = aircomp_interference(scenario, decisions, i) + config.noise_power;
        let eta_sq = decisions.rx_scaling[i].norm_sqr();
        let mse_base = mse_analytic(config, scenario, &base, i);
        for k in 0..k_total {
            let gain = scenario.edge_channel(k, i).norm_sqr();
            let p = required_sinr(config, bits[[k, i]]) * interference / gain;
            power[[k, i]] = p;
            allowed[[k, i]] = p <= config.p_max_edge * (1.0 + tol)
                && bits[[k, i]] <= l_max * (1.0 + tol)
                && mse_base + eta_sq * gain * p <= config.mse_threshold * (1.0 + tol);
        }
    }
    Ok(ScheduleCandidates { bits, power, allowed })
}

/// Relaxed schedule over the candidate tables. The returned decisions carry
/// the fractional `alpha` with the candidate `l` and `p` and are flagged
/// `relaxed`.
pub fn solve_block_xi(
    config: &SystemConfig,
    scenario: &Scenario,
    decisions: &DecisionSet,
    candidates: &ScheduleCandidates,
) -> Result<SolveOutcome> {
    scenario.check_against(config)?;
    decisions.check_shape(scenario)?;
    let (k_total, slots) = decisions.alpha.dim();
    let mut d = decisions.clone();
    d.relaxed = true;
    if config.data_demand == 0.0 {
        // nothing to offload: every schedule costs nothing
        d.offload_bits.fill(0.0);
        d.edge_power.fill(0.0);
        return Ok(SolveOutcome {
            decisions: d,
            objective: 0.0,
            status: SolveStatus::Optimal,
            iterations: 0,
            kkt_residual: 0.0,
            violated: None,
        });
    }

    let tau = config.slot_duration();
    let l_max = config.max_bits_per_slot();
    let mut index = Array2::from_elem((k_total, slots), usize::MAX);
    let mut pairs = Vec::new();
    for i in 0..slots {
        for k in 0..k_total {
            if candidates.allowed[[k, i]] {
                index[[k, i]] = pairs.len();
                pairs.push((k, i));
            }
        }
    }
    let n = pairs.len();
    let mut cs = ConstraintSet::new(n);
    for i in 0..slots {
        let slot_vars: Vec<usize> = (0..k_total).map(|k| index[[k, i]]).filter(|&v| v != usize::MAX).collect();
        if slot_vars.is_empty() {
            return Ok(SolveOutcome::infeasible(d, ConstraintFamily::Schedule));
        }
        cs.simplex(&slot_vars, 1.0);
    }
    for k in 0..k_total {
        let row: Vec<(usize, f64)> = (0..slots)
            .filter(|&i| index[[k, i]] != usize::MAX)
            .map(|i| (index[[k, i]], candidates.bits[[k, i]] / config.data_demand))
            .collect();
        if row.is_empty() {
            return Ok(SolveOutcome::infeasible(d, ConstraintFamily::Data));
        }
        cs.equal(row, 1.0);
    }

    // costs relative to the dearest admissible choice in every slot
    let mut reference = 0.0;
    for i in 0..slots {
        let worst = (0..k_total)
            .filter(|&k| candidates.allowed[[k, i]])
            .map(|k| tau * candidates.power[[k, i]] + computation_energy(config, candidates.bits[[k, i]]))
            .fold(0.0, f64::max);
        reference += worst;
    }
    if !(reference > 0.0) {
        reference = 1.0;
    }
    let cube_coef = computation_energy(config, l_max) / reference;
    let mut objective = CompositeObjective::default();
    for (v, &(k, i)) in pairs.iter().enumerate() {
        objective.linear.push((v, tau * candidates.power[[k, i]] / reference));
    }
    for i in 0..slots {
        let weights: Vec<(usize, f64)> = (0..k_total)
            .filter(|&k| candidates.allowed[[k, i]])
            .map(|k| (index[[k, i]], candidates.bits[[k, i]] / l_max))
            .collect();
        objective.cubes.push(CubicTerm {
            coef: cube_coef,
            weights,
        });
    }

    let start: Vec<f64> = pairs.iter().map(|&(k, i)| decisions.alpha[[k, i]]).collect();
    let sol = convex_kernel_minimize(&objective, &cs, &start, &kernel_settings(config));
    if sol.status == SolveStatus::Infeasible {
        return Ok(SolveOutcome::infeasible(d, ConstraintFamily::Data));
    }
    d.alpha.fill(0.0);
    d.offload_bits.fill(0.0);
    d.edge_power.fill(0.0);
    for (v, &(k, i)) in pairs.iter().enumerate() {
        d.alpha[[k, i]] = sol.x[v].max(0.0);
        d.offload_bits[[k, i]] = candidates.bits[[k, i]];
        d.edge_power[[k, i]] = candidates.power[[k, i]];
    }
    Ok(SolveOutcome {
        objective: relaxed_energy(config, &d),
        decisions: d,
        status: sol.status,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
        violated: None,
    })
}

/// Edge transmission plus computation energy of a (possibly fractional)
/// schedule.
fn relaxed_energy(config: &SystemConfig, d: &DecisionSet) -> f64 {
    let e = crate::model::energy(config, d);
    e.e_edge_tran + e.e_comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subsolvers::round_schedule;
    use crate::subsolvers::testutil::manual_scenario;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn setup(edge: &[Vec<f64>], demand: f64) -> (SystemConfig, Scenario, DecisionSet) {
        let k = edge.len();
        let slots = edge[0].len();
        let cfg = SystemConfig {
            num_slots: slots,
            horizon: slots as f64,
            num_aircomp: 1,
            num_edge: k,
            data_demand: demand,
            mse_threshold: 1.0,
            ..SystemConfig::desk()
        };
        let air = vec![vec![c(3e-6); slots]];
        let edge: Vec<Vec<Complex64>> = edge.iter().map(|row| row.iter().map(|&g| c(g)).collect()).collect();
        let sc = manual_scenario(&air, &edge);
        let mut d = DecisionSet::zeros(1, k, slots);
        d.set_round_robin();
        for i in 0..slots {
            d.tx_scaling[[0, i]] = c(0.2);
            d.rx_scaling[i] = c(1.0 / 3e-6 / 0.2 * 0.9);
        }
        (cfg, sc, d)
    }

    #[test]
    fn symmetric_instance_splits_evenly() {
        let (cfg, sc, d) = setup(&[vec![1e-6; 4], vec![1e-6; 4]], 4e5);
        let cand = schedule_candidates(&cfg, &sc, &d).unwrap();
        assert!(cand.allowed.iter().all(|&a| a));
        assert_relative_eq!(cand.bits[[0, 0]], 2e5);
        let out = solve_block_xi(&cfg, &sc, &d, &cand).unwrap();
        assert!(out.decisions.relaxed);
        for a in out.decisions.alpha.iter() {
            assert_relative_eq!(*a, 0.5, epsilon = 1e-3);
        }
    }

    #[test]
    fn moves_slots_to_stronger_channels() {
        // round robin gives UE 0 the slots where UE 1 is strong and vice versa
        let (cfg, sc, d) = setup(&[vec![3e-7, 1e-6, 3e-7, 1e-6], vec![1e-6, 3e-7, 1e-6, 3e-7]], 4e5);
        let cand = schedule_candidates(&cfg, &sc, &d).unwrap();
        let out = solve_block_xi(&cfg, &sc, &d, &cand).unwrap();
        let (r, report) = round_schedule(&cfg, &sc, &out.decisions).unwrap();
        assert_eq!(r.alpha.row(0).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(r.alpha.row(1).to_vec(), vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(report.data, 0.0);
    }

    #[test]
    fn matches_dense_scan() {
        // I = K = 2 leaves one free parameter: x = alpha_0(0) = alpha_1(1)
        let (cfg, sc, d) = setup(&[vec![4e-7, 9e-7], vec![6e-7, 5e-7]], 3e5);
        let cand = schedule_candidates(&cfg, &sc, &d).unwrap();
        let out = solve_block_xi(&cfg, &sc, &d, &cand).unwrap();
        let tau = cfg.slot_duration();
        let cost = |x: f64| {
            let a = [[x, 1.0 - x], [1.0 - x, x]];
            (0..2)
                .map(|i| {
                    let load: f64 = (0..2).map(|k| a[k][i] * cand.bits[[k, i]]).sum();
                    let edge: f64 = (0..2).map(|k| a[k][i] * cand.power[[k, i]]).sum();
                    tau * edge + computation_energy(&cfg, load)
                })
                .sum::<f64>()
        };
        let best = (0..=10_000).map(|s| cost(s as f64 * 1e-4)).fold(f64::INFINITY, f64::min);
        assert!(out.objective <= best * (1.0 + 1e-6), "{} vs {}", out.objective, best);
        assert!(out.objective >= best * (1.0 - 1e-4));
    }

    #[test]
    fn zero_demand_is_free() {
        let (cfg, sc, d) = setup(&[vec![1e-6; 3], vec![1e-6; 3]], 0.0);
        let cand = schedule_candidates(&cfg, &sc, &d).unwrap();
        let out = solve_block_xi(&cfg, &sc, &d, &cand).unwrap();
        assert_eq!(out.objective, 0.0);
        assert_eq!(out.decisions.alpha, d.alpha);
    }

    #[test]
    fn power_budget_excludes_pairs() {
        let (mut cfg, sc, d) = setup(&[vec![1e-6, 1e-9], vec![1e-6, 1e-6]], 2e5);
        cfg.p_max_edge = 0.5;
        let cand = schedule_candidates(&cfg, &sc, &d).unwrap();
        assert!(!cand.allowed[[0, 1]]);
        assert!(cand.allowed[[0, 0]]);
    }
}
