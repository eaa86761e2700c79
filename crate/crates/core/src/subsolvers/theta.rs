//! AirComp transmit scaling and edge power block.
//!
//! With `eta` fixed, only the magnitude of `b_j` matters once its phase is
//! aligned to `conj(eta h_j)`. In the received-amplitude variables
//! `x_j = |eta h_j| |b_j|` and `y_k = |eta|^2 |h_k|^2 p_k` each slot is the
//! convex QCQP
//!
//! ```text
//!     minimize    tau sum_j x_j^2 / |eta h_j|^2 + tau sum_k alpha_k y_k / (|eta|^2 |h_k|^2)
//!     subject to  sum_j (x_j - 1)^2 + |eta|^2 sigma^2 + sum_k alpha_k^2 y_k <= zeta
//!                 y_k >= c_k (sum_j x_j^2 + |eta|^2 sigma^2)
//!                 0 <= x_j <= sqrt(P_A) |eta h_j|,  0 <= y_k <= P_E |eta|^2 |h_k|^2
//! ```
//!
//! where `c_k = 2^(l_k / (tau B)) - 1`. The edge powers are then reset to the
//! exact minimum the rate constraint allows for the returned `b`.

use num_complex::Complex64;

use crate::config::SystemConfig;
use crate::error::{ConstraintFamily, Result};
use crate::model::{aircomp_interference, energy, mse_analytic, required_sinr, DecisionSet};
use crate::scenario::Scenario;

use super::kernel::{convex_kernel_minimize, CompositeObjective, ConstraintSet, QuadraticConstraint, SolveStatus};
use super::{kernel_settings, min_edge_power, worst_status, SolveOutcome};

pub fn solve_block_theta(config: &SystemConfig, scenario: &Scenario, decisions: &DecisionSet) -> Result<SolveOutcome> {
    scenario.check_against(config)?;
    decisions.check_shape(scenario)?;
    let mut d = decisions.clone();
    let mut status = SolveStatus::Optimal;
    let mut iterations = 0;
    let mut kkt_residual: f64 = 0.0;
    for i in 0..d.num_slots() {
        match solve_slot(config, scenario, &mut d, i) {
            Ok((s, it, kkt)) => {
                status = worst_status(status, s);
                iterations += it;
                kkt_residual = kkt_residual.max(kkt);
            }
            Err(family) => return Ok(SolveOutcome::infeasible(d, family)),
        }
    }
    let e = energy(config, &d);
    Ok(SolveOutcome {
        decisions: d,
        objective: e.e_edge_tran + e.e_aircomp_tran,
        status,
        iterations,
        kkt_residual,
        violated: None,
    })
}

/// Edge powers only, with `b` and `eta` frozen: every pair gets the minimum
/// power its offload amount needs.
pub fn solve_edge_power(config: &SystemConfig, scenario: &Scenario, decisions: &DecisionSet) -> Result<SolveOutcome> {
    scenario.check_against(config)?;
    decisions.check_shape(scenario)?;
    let mut d = decisions.clone();
    let tol = config.solver_feas_tol;
    for i in 0..d.num_slots() {
        let interference = aircomp_interference(scenario, &d, i) + config.noise_power;
        for k in 0..d.num_edge() {
            let p = if d.alpha[[k, i]] > 0.0 {
                min_edge_power(config, scenario, k, i, d.offload_bits[[k, i]], interference)
            } else {
                0.0
            };
            if p > config.p_max_edge * (1.0 + tol) {
                return Ok(SolveOutcome::infeasible(d, ConstraintFamily::Rate));
            }
            d.edge_power[[k, i]] = p;
        }
        if mse_analytic(config, scenario, &d, i) > config.mse_threshold * (1.0 + tol) {
            return Ok(SolveOutcome::infeasible(d, ConstraintFamily::Mse));
        }
    }
    let e = energy(config, &d);
    Ok(SolveOutcome {
        decisions: d,
        objective: e.e_edge_tran,
        status: SolveStatus::Optimal,
        iterations: 0,
        kkt_residual: 0.0,
        violated: None,
    })
}

type SlotResult = std::result::Result<(SolveStatus, usize, f64), ConstraintFamily>;

fn solve_slot(config: &SystemConfig, scenario: &Scenario, d: &mut DecisionSet, i: usize) -> SlotResult {
    let tol = config.solver_feas_tol;
    let tau = config.slot_duration();
    let eta = d.rx_scaling[i];
    let eta_abs = eta.norm();
    let eta_sq = eta_abs * eta_abs;
    let nu = eta_sq * config.noise_power;

    // AirComp UEs whose amplitude can move the estimate
    let air: Vec<usize> = (0..d.num_aircomp())
        .filter(|&j| eta_abs * scenario.aircomp_channel(j, i).norm() > 0.0)
        .collect();
    let amp: Vec<f64> = air.iter().map(|&j| eta_abs * scenario.aircomp_channel(j, i).norm()).collect();
    let previous: Vec<f64> = air.iter().map(|&j| d.tx_scaling[[j, i]].norm()).collect();
    for j in 0..d.num_aircomp() {
        d.tx_scaling[[j, i]] = Complex64::new(0.0, 0.0);
    }
    // edge UEs that must carry data
    let mut edge = Vec::new();
    for k in 0..d.num_edge() {
        if d.alpha[[k, i]] > 0.0 && d.offload_bits[[k, i]] > 0.0 {
            edge.push(k);
        } else {
            d.edge_power[[k, i]] = 0.0;
        }
    }
    let sinr: Vec<f64> = edge.iter().map(|&k| required_sinr(config, d.offload_bits[[k, i]])).collect();
    let gain = |k: usize| scenario.edge_channel(k, i).norm_sqr();

    let mut status = SolveStatus::Optimal;
    let mut iterations = 0;
    let mut kkt = 0.0;
    if !air.is_empty() {
        let na = air.len();
        let n = na + edge.len();
        let scale = tau
            * (amp.iter().map(|a| 1.0 / (a * a)).sum::<f64>()
                + edge.iter().map(|&k| d.alpha[[k, i]] / (eta_sq * gain(k))).sum::<f64>());

        let mut objective = CompositeObjective::default();
        let mut cs = ConstraintSet::new(n);
        let mut mse = QuadraticConstraint {
            constant: (d.num_aircomp() - na) as f64 + nu - config.mse_threshold,
            ..Default::default()
        };
        for (v, a) in amp.iter().enumerate() {
            objective.quadratic.push((v, v, 2.0 * tau / (a * a) / scale));
            cs.bounds(v, 0.0, config.p_max_aircomp.sqrt() * a);
            mse.quadratic.push((v, v, 2.0));
            mse.linear.push((v, -2.0));
            mse.constant += 1.0;
        }
        for (e, &k) in edge.iter().enumerate() {
            let v = na + e;
            let alpha = d.alpha[[k, i]];
            objective.linear.push((v, tau * alpha / (eta_sq * gain(k)) / scale));
            cs.bounds(v, 0.0, config.p_max_edge * eta_sq * gain(k));
            mse.linear.push((v, alpha * alpha));
        }
        cs.quadratic(mse);
        for (e, &c) in sinr.iter().enumerate() {
            let w = 1.0 / c.max(1.0);
            let mut rate = QuadraticConstraint {
                constant: w * c * nu,
                linear: vec![(na + e, -w)],
                ..Default::default()
            };
            for v in 0..na {
                rate.quadratic.push((v, v, 2.0 * w * c));
            }
            cs.quadratic(rate);
        }

        let mut start = Vec::with_capacity(n);
        for (v, b) in previous.iter().enumerate() {
            start.push(amp[v] * b.min(config.p_max_aircomp.sqrt()));
        }
        for &k in &edge {
            start.push(eta_sq * gain(k) * d.edge_power[[k, i]].min(config.p_max_edge));
        }
        let sol = convex_kernel_minimize(&objective, &cs, &start, &kernel_settings(config));
        if sol.status == SolveStatus::Infeasible {
            let rate_blocked = edge
                .iter()
                .zip(&sinr)
                .any(|(&k, c)| c * nu > config.p_max_edge * eta_sq * gain(k) * (1.0 + tol));
            return Err(if rate_blocked { ConstraintFamily::Rate } else { ConstraintFamily::Mse });
        }
        status = sol.status;
        iterations = sol.iterations;
        kkt = sol.kkt_residual;
        for (v, &j) in air.iter().enumerate() {
            let h = scenario.aircomp_channel(j, i);
            let beta = (sol.x[v] / amp[v]).clamp(0.0, config.p_max_aircomp.sqrt());
            d.tx_scaling[[j, i]] = (eta * h).conj() / (eta_abs * h.norm()) * beta;
        }
    }

    let interference = aircomp_interference(scenario, d, i) + config.noise_power;
    for (e, &k) in edge.iter().enumerate() {
        let p = sinr[e] * interference / gain(k);
        if p > config.p_max_edge * (1.0 + tol) {
            return Err(ConstraintFamily::Rate);
        }
        d.edge_power[[k, i]] = p.min(config.p_max_edge);
    }
    if mse_analytic(config, scenario, d, i) > config.mse_threshold * (1.0 + tol) {
        return Err(ConstraintFamily::Mse);
    }
    Ok((status, iterations, kkt))
}
