//! Decision variables, the AirComp MSE, constraint residuals and the energy
//! model.

use std::path::Path;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{ConstraintFamily, Error, Result};
use crate::scenario::Scenario;

/// Every optimization variable for all slots.
///
/// Edge arrays are `K x I`, AirComp arrays `J x I`. Offloaded bits are only
/// credited in slots the UE is scheduled in: `l[k][i] <= alpha[k][i] * L_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSet {
    /// Scheduling weights; binary unless `relaxed`.
    pub alpha: Array2<f64>,
    pub relaxed: bool,
    /// Bits offloaded per (edge UE, slot).
    pub offload_bits: Array2<f64>,
    /// Edge transmit power in watts per (edge UE, slot).
    pub edge_power: Array2<f64>,
    /// AirComp Tx-scaling `b` per (AirComp UE, slot).
    pub tx_scaling: Array2<Complex64>,
    /// Rx-scaling `eta` per slot.
    pub rx_scaling: Array1<Complex64>,
    /// Interference slack `psi >= |b|^2`, only present after a power-control solve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<Array2<f64>>,
}

impl DecisionSet {
    pub fn zeros(num_aircomp: usize, num_edge: usize, num_slots: usize) -> Self {
        Self {
            alpha: Array2::zeros((num_edge, num_slots)),
            relaxed: false,
            offload_bits: Array2::zeros((num_edge, num_slots)),
            edge_power: Array2::zeros((num_edge, num_slots)),
            tx_scaling: Array2::zeros((num_aircomp, num_slots)),
            rx_scaling: Array1::zeros(num_slots),
            slack: None,
        }
    }

    pub fn num_edge(&self) -> usize {
        self.alpha.nrows()
    }

    pub fn num_aircomp(&self) -> usize {
        self.tx_scaling.nrows()
    }

    pub fn num_slots(&self) -> usize {
        self.rx_scaling.len()
    }

    /// The edge UE scheduled in `slot` for a binary schedule.
    pub fn scheduled(&self, slot: usize) -> Option<usize> {
        (0..self.num_edge()).find(|&k| self.alpha[[k, slot]] == 1.0)
    }

    /// Round-robin binary schedule: slot `i` goes to UE `i mod K`.
    pub fn set_round_robin(&mut self) {
        let k_total = self.num_edge();
        self.alpha.fill(0.0);
        for i in 0..self.num_slots() {
            self.alpha[[i % k_total, i]] = 1.0;
        }
        self.relaxed = false;
    }

    pub fn check_shape(&self, scenario: &Scenario) -> Result<()> {
        let (j, k, i) = (scenario.num_aircomp(), scenario.num_edge(), scenario.num_slots());
        let ok = self.alpha.dim() == (k, i)
            && self.offload_bits.dim() == (k, i)
            && self.edge_power.dim() == (k, i)
            && self.tx_scaling.dim() == (j, i)
            && self.rx_scaling.len() == i
            && self.slack.as_ref().is_none_or(|s| s.dim() == (j, i));
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "decision arrays do not match scenario J={j} K={k} I={i}"
            )))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("decisions serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Energy terms in joules.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub e_edge_tran: f64,
    pub e_aircomp_tran: f64,
    pub e_comp: f64,
    pub total: f64,
}

/// Worst normalized violation of each constraint family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub schedule: f64,
    pub edge_power: f64,
    pub aircomp_power: f64,
    pub mse: f64,
    pub data: f64,
    pub compute: f64,
    pub rate: f64,
    pub coupling: f64,
    pub tolerance: f64,
    pub feasible: bool,
}

impl FeasibilityReport {
    pub fn residuals(&self) -> [(ConstraintFamily, f64); 8] {
        use ConstraintFamily::*;
        [
            (Schedule, self.schedule),
            (EdgePower, self.edge_power),
            (AircompPower, self.aircomp_power),
            (Mse, self.mse),
            (Data, self.data),
            (Compute, self.compute),
            (Rate, self.rate),
            (Coupling, self.coupling),
        ]
    }

    /// The family with the largest residual.
    pub fn worst(&self) -> (ConstraintFamily, f64) {
        self.residuals()
            .into_iter()
            .fold((ConstraintFamily::Schedule, f64::NEG_INFINITY), |acc, r| {
                if r.1 > acc.1 {
                    r
                } else {
                    acc
                }
            })
    }
}

/// Aggregation MSE of `slot` in closed form:
/// `sum_j |eta b_j h_j - 1|^2 + |eta|^2 sigma^2 + sum_k |eta|^2 alpha_k^2 p_k |h_k|^2`.
pub fn mse_analytic(config: &SystemConfig, scenario: &Scenario, decisions: &DecisionSet, slot: usize) -> f64 {
    let eta = decisions.rx_scaling[slot];
    let eta_sq = eta.norm_sqr();
    let aggregation: f64 = (0..decisions.num_aircomp())
        .map(|j| (eta * decisions.tx_scaling[[j, slot]] * scenario.aircomp_channel(j, slot) - 1.0).norm_sqr())
        .sum();
    aggregation + eta_sq * (config.noise_power + edge_interference(scenario, decisions, slot))
}

/// Received edge power `sum_k alpha_k^2 p_k |h_k|^2` in `slot`.
pub fn edge_interference(scenario: &Scenario, decisions: &DecisionSet, slot: usize) -> f64 {
    (0..decisions.num_edge())
        .map(|k| {
            let a = decisions.alpha[[k, slot]];
            a * a * decisions.edge_power[[k, slot]] * scenario.edge_channel(k, slot).norm_sqr()
        })
        .sum()
}

/// Received AirComp power `sum_j |h_j b_j|^2` in `slot`.
pub fn aircomp_interference(scenario: &Scenario, decisions: &DecisionSet, slot: usize) -> f64 {
    (0..decisions.num_aircomp())
        .map(|j| (scenario.aircomp_channel(j, slot) * decisions.tx_scaling[[j, slot]]).norm_sqr())
        .sum()
}

/// Distribution of the unit-variance data symbols in [`mse_monte_carlo`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolDistribution {
    /// Circularly-symmetric complex Gaussian.
    Gaussian,
    /// Equiprobable real `+1 / -1`.
    Antipodal,
}

fn draw_symbol<R: Rng + ?Sized>(rng: &mut R, dist: SymbolDistribution) -> Complex64 {
    match dist {
        SymbolDistribution::Gaussian => {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        }
        SymbolDistribution::Antipodal => {
            if rng.random::<bool>() {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(-1.0, 0.0)
            }
        }
    }
}

/// Empirical MSE of the received sum in `slot`: the sample mean of
/// `|eta * y - sum_j s_j|^2` over fresh symbol and noise draws.
///
/// Test oracle only; the optimizer never calls it.
pub fn mse_monte_carlo<R: Rng + ?Sized>(
    config: &SystemConfig,
    scenario: &Scenario,
    decisions: &DecisionSet,
    slot: usize,
    samples: usize,
    dist: SymbolDistribution,
    rng: &mut R,
) -> f64 {
    assert!(samples >= 1, "at least one sample");
    let eta = decisions.rx_scaling[slot];
    let air: Vec<Complex64> = (0..decisions.num_aircomp())
        .map(|j| scenario.aircomp_channel(j, slot) * decisions.tx_scaling[[j, slot]])
        .collect();
    let edge: Vec<Complex64> = (0..decisions.num_edge())
        .filter(|&k| decisions.alpha[[k, slot]] != 0.0)
        .map(|k| {
            scenario.edge_channel(k, slot) * decisions.alpha[[k, slot]] * decisions.edge_power[[k, slot]].sqrt()
        })
        .collect();
    let noise_std = config.noise_power.sqrt();
    let mut acc = 0.0;
    for _ in 0..samples {
        let mut received = Complex64::new(0.0, 0.0);
        let mut target = Complex64::new(0.0, 0.0);
        for c in &air {
            let s = draw_symbol(rng, dist);
            received += c * s;
            target += s;
        }
        for c in &edge {
            received += c * draw_symbol(rng, dist);
        }
        received += draw_symbol(rng, SymbolDistribution::Gaussian) * noise_std;
        acc += (eta * received - target).norm_sqr();
    }
    acc / samples as f64
}

/// The three energy terms and their sum.
pub fn energy(config: &SystemConfig, decisions: &DecisionSet) -> EnergyBreakdown {
    let tau = config.slot_duration();
    let e_edge_tran = (&decisions.alpha * &decisions.edge_power).sum() * tau;
    let e_aircomp_tran = decisions.tx_scaling.iter().map(|b| b.norm_sqr()).sum::<f64>() * tau;
    let e_comp = (0..decisions.num_slots())
        .map(|i| computation_energy(config, slot_load(decisions, i)))
        .sum();
    EnergyBreakdown {
        e_edge_tran,
        e_aircomp_tran,
        e_comp,
        total: e_edge_tran + e_aircomp_tran + e_comp,
    }
}

/// Bits processed by the BS in `slot`: `sum_k alpha_k l_k`.
pub fn slot_load(decisions: &DecisionSet, slot: usize) -> f64 {
    (0..decisions.num_edge())
        .map(|k| decisions.alpha[[k, slot]] * decisions.offload_bits[[k, slot]])
        .sum()
}

/// CPU energy for processing `bits` within one slot.
pub fn computation_energy(config: &SystemConfig, bits: f64) -> f64 {
    let tau = config.slot_duration();
    config.capacitance * (config.cycles_per_bit * bits).powi(3) / (tau * tau)
}

/// Bits edge UE `k` can deliver in `slot` with its current power, treating
/// the AirComp signal as interference.
pub fn rate_capacity_bits(
    config: &SystemConfig,
    scenario: &Scenario,
    decisions: &DecisionSet,
    k: usize,
    slot: usize,
) -> f64 {
    let signal = decisions.edge_power[[k, slot]] * scenario.edge_channel(k, slot).norm_sqr();
    let interference = aircomp_interference(scenario, decisions, slot) + config.noise_power;
    shannon_bits(config, signal / interference)
}

/// `(T/I) B log2(1 + sinr)`.
pub fn shannon_bits(config: &SystemConfig, sinr: f64) -> f64 {
    config.slot_duration() * config.bandwidth * sinr.ln_1p() / std::f64::consts::LN_2
}

/// The SINR needed to carry `bits` in one slot: `2^(bits I / (T B)) - 1`.
pub fn required_sinr(config: &SystemConfig, bits: f64) -> f64 {
    (bits / (config.slot_duration() * config.bandwidth) * std::f64::consts::LN_2).exp_m1()
}

/// Normalized residual of every constraint family.
///
/// Power residuals are relative to the budget, MSE to the threshold, data to
/// `D_k`, compute to `(T/I) f_max`, rate to the offloaded amount and the
/// schedule/offload coupling to the per-slot compute limit in bits.
pub fn check_feasibility(
    config: &SystemConfig,
    scenario: &Scenario,
    decisions: &DecisionSet,
    tol: f64,
) -> Result<FeasibilityReport> {
    scenario.check_against(config)?;
    decisions.check_shape(scenario)?;
    let (k_total, slots) = decisions.alpha.dim();
    let tau = config.slot_duration();
    let l_max = config.max_bits_per_slot();
    let pos = |x: f64| x.max(0.0);

    let mut schedule: f64 = 0.0;
    for i in 0..slots {
        let mut sum = 0.0;
        for k in 0..k_total {
            let a = decisions.alpha[[k, i]];
            sum += a;
            schedule = schedule.max(a.abs().min((1.0 - a).abs()));
        }
        schedule = schedule.max((sum - 1.0).abs());
    }

    let edge_power = decisions
        .edge_power
        .iter()
        .map(|&p| pos(p - config.p_max_edge).max(pos(-p)) / config.p_max_edge)
        .fold(0.0, f64::max);
    let aircomp_power = decisions
        .tx_scaling
        .iter()
        .map(|b| pos(b.norm_sqr() - config.p_max_aircomp) / config.p_max_aircomp)
        .fold(0.0, f64::max);
    let mse = (0..slots)
        .map(|i| pos(mse_analytic(config, scenario, decisions, i) - config.mse_threshold) / config.mse_threshold)
        .fold(0.0, f64::max);

    let mut data: f64 = 0.0;
    if config.data_demand > 0.0 {
        for k in 0..k_total {
            let delivered: f64 = (0..slots)
                .map(|i| decisions.alpha[[k, i]] * decisions.offload_bits[[k, i]])
                .sum();
            data = data.max(pos(config.data_demand - delivered) / config.data_demand);
        }
    }

    let compute = (0..slots)
        .map(|i| pos(config.cycles_per_bit * slot_load(decisions, i) - tau * config.max_cpu_freq) / (tau * config.max_cpu_freq))
        .fold(0.0, f64::max);

    let mut rate: f64 = 0.0;
    let mut coupling: f64 = 0.0;
    for k in 0..k_total {
        for i in 0..slots {
            let l = decisions.offload_bits[[k, i]];
            if l > 0.0 {
                let cap = rate_capacity_bits(config, scenario, decisions, k, i);
                rate = rate.max(pos(l - cap) / l);
            }
            coupling = coupling
                .max(pos(l - decisions.alpha[[k, i]] * l_max) / l_max)
                .max(pos(-l) / l_max);
        }
    }

    let mut report = FeasibilityReport {
        schedule,
        edge_power,
        aircomp_power,
        mse,
        data,
        compute,
        rate,
        coupling,
        tolerance: tol,
        feasible: false,
    };
    report.feasible = report.residuals().iter().all(|(_, r)| *r <= tol);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    use crate::scenario::Role;

    /// One-slot scenario with explicit channels; AirComp UEs first.
    pub(crate) fn manual_scenario(aircomp: &[Complex64], edge: &[Complex64]) -> Scenario {
        let s = aircomp.len() + edge.len();
        let mut channels = Array2::zeros((s, 1));
        for (u, h) in aircomp.iter().chain(edge).enumerate() {
            channels[[u, 0]] = *h;
        }
        Scenario {
            bs_position: [0.0, 0.0],
            ue_positions: (0..s).map(|u| [1.0 + u as f64, 0.0]).collect(),
            ue_roles: (0..s)
                .map(|u| if u < aircomp.len() { Role::AirComp } else { Role::Edge })
                .collect(),
            channels,
        }
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn mse_case() -> (SystemConfig, Scenario, DecisionSet) {
        let cfg = SystemConfig {
            noise_power: 0.1,
            num_slots: 1,
            horizon: 1.0,
            num_aircomp: 2,
            num_edge: 1,
            ..SystemConfig::desk()
        };
        let sc = manual_scenario(&[c(1.0), c(0.5)], &[c(0.5)]);
        let mut d = DecisionSet::zeros(2, 1, 1);
        d.tx_scaling = array![[c(1.0)], [c(1.0)]];
        d.rx_scaling = array![c(1.0)];
        d.alpha[[0, 0]] = 1.0;
        d.edge_power[[0, 0]] = 0.04;
        (cfg, sc, d)
    }

    #[test]
    fn mse_reference_value() {
        let (cfg, sc, d) = mse_case();
        assert_relative_eq!(mse_analytic(&cfg, &sc, &d, 0), 0.36, epsilon = 1e-12);
    }

    #[test]
    fn mse_zero_eta_is_j() {
        let (cfg, sc, mut d) = mse_case();
        d.rx_scaling[0] = c(0.0);
        assert_relative_eq!(mse_analytic(&cfg, &sc, &d, 0), 2.0);
    }

    #[test]
    fn mse_perfect_inversion() {
        let mut cfg = SystemConfig::desk();
        cfg.noise_power = 0.0;
        let h = Complex64::new(0.3, -0.4);
        let sc = manual_scenario(&[h], &[c(1.0)]);
        let mut d = DecisionSet::zeros(1, 1, 1);
        d.rx_scaling[0] = c(2.0);
        d.tx_scaling[[0, 0]] = 1.0 / (h * 2.0);
        d.alpha[[0, 0]] = 1.0;
        assert!(mse_analytic(&cfg, &sc, &d, 0) < 1e-24);
        let mut rng = crate::scenario::stream_rng(1, 0);
        let est = mse_monte_carlo(&cfg, &sc, &d, 0, 1000, SymbolDistribution::Gaussian, &mut rng);
        assert!(est < 1e-20);
    }

    #[test]
    fn monte_carlo_tracks_analytic_for_both_symbol_laws() {
        let (cfg, sc, d) = mse_case();
        let mut rng = crate::scenario::stream_rng(5, 0);
        for dist in [SymbolDistribution::Gaussian, SymbolDistribution::Antipodal] {
            let est = mse_monte_carlo(&cfg, &sc, &d, 0, 400_000, dist, &mut rng);
            assert!((est - 0.36).abs() / 0.36 < 0.01, "{dist:?}: {est}");
        }
    }

    #[test]
    fn energy_terms() {
        let mut cfg = SystemConfig::desk();
        cfg.horizon = 1.0;
        cfg.num_slots = 1;
        let mut d = DecisionSet::zeros(2, 2, 1);
        assert_eq!(energy(&cfg, &d), EnergyBreakdown::default());

        d.alpha[[1, 0]] = 1.0;
        d.edge_power[[1, 0]] = 1.0;
        d.edge_power[[0, 0]] = 5.0; // unscheduled, not charged
        assert_relative_eq!(energy(&cfg, &d).total, 1.0);

        d.edge_power.fill(0.0);
        d.offload_bits[[1, 0]] = 3e4;
        let e = energy(&cfg, &d);
        // gamma (c0 l)^3 / tau^2 recomputed per slot
        let oracle = 1e-27 * (1e3f64 * 3e4).powi(3) / 1.0;
        assert_relative_eq!(e.e_comp, oracle, max_relative = 1e-12);
        assert_relative_eq!(e.e_comp, 2.7e-5, max_relative = 1e-12);
    }

    #[test]
    fn rate_capacity_values() {
        let mut cfg = SystemConfig::desk();
        cfg.horizon = 1.0;
        cfg.num_slots = 1;
        cfg.noise_power = 1.0;
        let sc = manual_scenario(&[c(1.0)], &[c(1.0)]);
        let mut d = DecisionSet::zeros(1, 1, 1);
        assert_eq!(rate_capacity_bits(&cfg, &sc, &d, 0, 0), 0.0);
        d.edge_power[[0, 0]] = 3.0;
        assert_relative_eq!(rate_capacity_bits(&cfg, &sc, &d, 0, 0), 1e7, max_relative = 1e-12);
        // AirComp power counts as interference
        d.tx_scaling[[0, 0]] = c(1.0);
        d.edge_power[[0, 0]] = 6.0;
        assert_relative_eq!(rate_capacity_bits(&cfg, &sc, &d, 0, 0), 1e7, max_relative = 1e-12);
        assert_relative_eq!(required_sinr(&cfg, 1e7), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn feasibility_residuals() {
        let cfg = SystemConfig {
            horizon: 2.0,
            num_slots: 2,
            num_aircomp: 1,
            num_edge: 1,
            data_demand: 100.0,
            noise_power: 1e-15,
            ..SystemConfig::desk()
        };
        let mut sc = manual_scenario(&[c(1e-6)], &[c(1e-6)]);
        sc.channels = Array2::from_elem((2, 2), c(1e-6));
        let mut d = DecisionSet::zeros(1, 1, 2);
        d.set_round_robin();
        d.offload_bits.fill(50.0);
        d.edge_power.fill(cfg.p_max_edge);
        let r = check_feasibility(&cfg, &sc, &d, 1e-6).unwrap();
        assert_eq!(r.data, 0.0);
        assert_eq!(r.edge_power, 0.0);

        d.edge_power[[0, 1]] = 2.0 * cfg.p_max_edge;
        let r = check_feasibility(&cfg, &sc, &d, 1e-6).unwrap();
        assert_relative_eq!(r.edge_power, 1.0);
        assert!(!r.feasible);
        assert_eq!(r.worst().0, ConstraintFamily::EdgePower);
        assert_eq!(r, check_feasibility(&cfg, &sc, &d, 1e-6).unwrap());

        let bad = DecisionSet::zeros(1, 2, 2);
        assert!(matches!(check_feasibility(&cfg, &sc, &bad, 1e-6), Err(Error::Shape(_))));
    }
}
