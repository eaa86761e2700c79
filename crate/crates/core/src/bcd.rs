//! Block coordinate descent over the three variable groups.
//!
//! Every pass runs the Rx-scaling/offload block, then the power block, then
//! the relaxed schedule block followed by max-value rounding. A rounded
//! schedule that differs from the incumbent is repaired by re-running the
//! first two blocks on it. A pass only replaces the incumbent with a point
//! that passes the feasibility check and has lower total energy, so the
//! energy sequence of the trace never increases.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{ConstraintFamily, Error, Result};
use crate::model::{
    aircomp_interference, check_feasibility, energy, mse_analytic, required_sinr, DecisionSet, EnergyBreakdown,
    FeasibilityReport,
};
use crate::scenario::Scenario;
use crate::subsolvers::{
    eta_closed_form, round_schedule, schedule_candidates, solve_block_omega, solve_block_theta, solve_block_xi,
    solve_edge_power, BlockStatus, SolveOutcome,
};

/// Tolerance of the feasibility check that gates every accepted point.
pub const ACCEPT_TOL: f64 = 1e-6;

/// Random shrink attempts per slot when drawing the initial AirComp scaling.
const SHRINK_ATTEMPTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    /// Relative energy decrease of a pass fell below the threshold.
    Converged,
    /// Hit `bcd_max_iters`.
    IterationCap,
    /// A pass produced no feasible point at all, not even for the incumbent
    /// schedule.
    Aborted,
}

/// One BCD pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Incumbent after the pass.
    pub energy: EnergyBreakdown,
    /// Best point the pass produced, accepted or not.
    pub candidate_total: Option<f64>,
    pub omega: Option<BlockStatus>,
    pub theta: Option<BlockStatus>,
    pub xi: Option<BlockStatus>,
    pub schedule_changed: bool,
    pub accepted: bool,
    pub feasibility: FeasibilityReport,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub initial: EnergyBreakdown,
    pub records: Vec<IterationRecord>,
    pub termination: TerminationReason,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// Total energy of the initial point followed by every pass.
    pub fn totals(&self) -> Vec<f64> {
        std::iter::once(self.initial.total)
            .chain(self.records.iter().map(|r| r.energy.total))
            .collect()
    }

    /// One JSON object per line: a header with the initial energy, one line
    /// per pass, and a footer with the termination reason.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        out.push_str(&serde_json::json!({ "initial": self.initial }).to_string());
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out.push_str(&serde_json::json!({ "termination": self.termination }).to_string());
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let parse = |line: &str| serde_json::from_str::<serde_json::Value>(line).map_err(|e| Error::Parse(e.to_string()));
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.len() < 2 {
            return Err(Error::Parse("trace needs a header and a footer line".into()));
        }
        let mut header = parse(lines[0])?;
        let initial = serde_json::from_value(header["initial"].take()).map_err(|e| Error::Parse(e.to_string()))?;
        let mut footer = parse(lines[lines.len() - 1])?;
        let termination =
            serde_json::from_value(footer["termination"].take()).map_err(|e| Error::Parse(e.to_string()))?;
        let records = lines[1..lines.len() - 1]
            .iter()
            .map(|l| serde_json::from_str(l).map_err(|e| Error::Parse(e.to_string())))
            .collect::<Result<_>>()?;
        Ok(Self {
            initial,
            records,
            termination,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }
}

/// Which power block a descent run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PowerBlock {
    /// AirComp scaling and edge powers jointly.
    Joint,
    /// Edge powers only, AirComp scaling frozen.
    EdgeOnly,
}

impl PowerBlock {
    fn solve(self, config: &SystemConfig, scenario: &Scenario, d: &DecisionSet) -> Result<SolveOutcome> {
        match self {
            PowerBlock::Joint => solve_block_theta(config, scenario, d),
            PowerBlock::EdgeOnly => solve_edge_power(config, scenario, d),
        }
    }
}

/// Feasible starting point.
///
/// Round-robin schedule, equal split of each demand over the UE's slots, and
/// an AirComp scaling that inverts the channels towards a common amplitude
/// with random per-UE weights in `[0.75, 1.25]`, as large as the budget
/// allows, then shrunk by random factors while the slot stays feasible. Edge
/// powers are the minimum the rate needs; `eta` is the closed form.
pub fn initialize_feasible<R: Rng + ?Sized>(
    config: &SystemConfig,
    scenario: &Scenario,
    rng: &mut R,
) -> Result<DecisionSet> {
    config.validate()?;
    scenario.check_against(config)?;
    let (j_total, k_total, slots) = (config.num_aircomp, config.num_edge, config.num_slots);
    let mut d = DecisionSet::zeros(j_total, k_total, slots);
    d.set_round_robin();
    let l_max = config.max_bits_per_slot();
    for k in 0..k_total {
        let owned = (0..slots).filter(|&i| d.alpha[[k, i]] == 1.0).count();
        if owned == 0 {
            if config.data_demand > 0.0 {
                return Err(Error::infeasible(
                    ConstraintFamily::Data,
                    format!("edge UE {k} gets no slot with K={k_total} > I={slots}"),
                ));
            }
            continue;
        }
        let share = config.data_demand / owned as f64;
        if share > l_max * (1.0 + config.solver_feas_tol) {
            return Err(Error::infeasible(
                ConstraintFamily::Compute,
                format!("edge UE {k} needs {share:.4e} bits per slot, capacity is {l_max:.4e}"),
            ));
        }
        for i in 0..slots {
            if d.alpha[[k, i]] == 1.0 {
                d.offload_bits[[k, i]] = share;
            }
        }
    }

    for i in 0..slots {
        let weights: Vec<f64> = (0..j_total).map(|_| rng.random_range(0.75..=1.25)).collect();
        let shrink: Vec<f64> = (0..SHRINK_ATTEMPTS).map(|_| rng.random_range(0.5..=0.9)).collect();
        let mut result = setup_slot(config, scenario, &mut d, i, &weights, &shrink);
        if result.is_err() {
            result = setup_slot(config, scenario, &mut d, i, &vec![1.0; j_total], &shrink);
        }
        if let Err(family) = result {
            return Err(Error::infeasible(
                family,
                format!("no feasible initial point in slot {i}"),
            ));
        }
    }
    let report = check_feasibility(config, scenario, &d, ACCEPT_TOL)?;
    if !report.feasible {
        let (family, residual) = report.worst();
        return Err(Error::infeasible(family, format!("initial point residual {residual:.3e}")));
    }
    Ok(d)
}

/// Fill slot `i` for inversion weights `w`; the shrink factors are tried in
/// order until one breaks feasibility.
fn setup_slot(
    config: &SystemConfig,
    scenario: &Scenario,
    d: &mut DecisionSet,
    i: usize,
    weights: &[f64],
    shrink: &[f64],
) -> std::result::Result<(), ConstraintFamily> {
    let r_max = weights
        .iter()
        .enumerate()
        .map(|(j, w)| config.p_max_aircomp.sqrt() * scenario.aircomp_channel(j, i).norm() / w)
        .fold(f64::INFINITY, f64::min);
    let mut r_max = if r_max.is_finite() { r_max } else { 0.0 };
    // the received AirComp power is interference to the scheduled edge UE
    let spread: f64 = weights.iter().map(|w| w * w).sum();
    for k in 0..d.num_edge() {
        let l = d.offload_bits[[k, i]];
        if d.alpha[[k, i]] > 0.0 && l > 0.0 && spread > 0.0 {
            let room = config.p_max_edge * scenario.edge_channel(k, i).norm_sqr() / required_sinr(config, l)
                - config.noise_power;
            if room <= 0.0 {
                return Err(ConstraintFamily::Rate);
            }
            r_max = r_max.min((room / spread).sqrt() * (1.0 - 1e-9));
        }
    }
    apply_amplitude(config, scenario, d, i, weights, r_max)?;
    let mut r = r_max;
    for f in shrink {
        let mut trial = d.clone();
        if apply_amplitude(config, scenario, &mut trial, i, weights, r * f).is_err() {
            break;
        }
        r *= f;
        *d = trial;
    }
    Ok(())
}

fn apply_amplitude(
    config: &SystemConfig,
    scenario: &Scenario,
    d: &mut DecisionSet,
    i: usize,
    weights: &[f64],
    r: f64,
) -> std::result::Result<(), ConstraintFamily> {
    let tol = config.solver_feas_tol;
    for (j, w) in weights.iter().enumerate() {
        let h = scenario.aircomp_channel(j, i);
        d.tx_scaling[[j, i]] = h.conj() / h.norm_sqr() * (r * w);
        // budget edge cases from rounding
        let b = d.tx_scaling[[j, i]];
        if b.norm_sqr() > config.p_max_aircomp {
            d.tx_scaling[[j, i]] = b / b.norm() * config.p_max_aircomp.sqrt();
        }
    }
    let interference = aircomp_interference(scenario, d, i) + config.noise_power;
    for k in 0..d.num_edge() {
        let l = d.offload_bits[[k, i]];
        let p = if d.alpha[[k, i]] > 0.0 && l > 0.0 {
            required_sinr(config, l) * interference / scenario.edge_channel(k, i).norm_sqr()
        } else {
            0.0
        };
        if p > config.p_max_edge * (1.0 + tol) {
            return Err(ConstraintFamily::Rate);
        }
        d.edge_power[[k, i]] = p.min(config.p_max_edge);
    }
    d.rx_scaling[i] = eta_closed_form(config, scenario, d, i).map_err(|_| ConstraintFamily::Mse)?;
    if mse_analytic(config, scenario, d, i) > config.mse_threshold * (1.0 + tol) {
        return Err(ConstraintFamily::Mse);
    }
    Ok(())
}

/// Joint optimization from a randomized feasible start.
pub fn run_bcd<R: Rng + ?Sized>(
    config: &SystemConfig,
    scenario: &Scenario,
    rng: &mut R,
) -> Result<(DecisionSet, IterationTrace)> {
    let start = initialize_feasible(config, scenario, rng)?;
    descend(config, scenario, start, PowerBlock::Joint)
}

/// A candidate that survived a block chain.
struct Candidate {
    decisions: DecisionSet,
    total: f64,
}

fn evaluate(config: &SystemConfig, scenario: &Scenario, d: DecisionSet) -> Result<Option<Candidate>> {
    let report = check_feasibility(config, scenario, &d, ACCEPT_TOL)?;
    if !report.feasible {
        return Ok(None);
    }
    let total = energy(config, &d).total;
    Ok(Some(Candidate { decisions: d, total }))
}

fn better(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if b.total < a.total { b } else { a }),
        (a, b) => a.or(b),
    }
}

/// The BCD loop from a feasible starting point.
pub(crate) fn descend(
    config: &SystemConfig,
    scenario: &Scenario,
    start: DecisionSet,
    power: PowerBlock,
) -> Result<(DecisionSet, IterationTrace)> {
    let mut incumbent = start;
    let mut current = energy(config, &incumbent);
    let initial = current;
    let mut records = Vec::new();
    let mut termination = TerminationReason::IterationCap;

    for iteration in 1..=config.bcd_max_iters {
        let clock = Instant::now();
        let previous = current.total;

        // offload amounts and Rx scaling, then powers
        let omega = solve_block_omega(config, scenario, &incumbent)?;
        let mut theta_status = None;
        let mut best = None;
        if !omega.is_infeasible() {
            let theta = power.solve(config, scenario, &omega.decisions)?;
            theta_status = Some(theta.summary());
            if !theta.is_infeasible() {
                best = evaluate(config, scenario, theta.decisions)?;
            }
        }
        // keep the old offload amounts, refresh eta and the powers only
        {
            let mut held = incumbent.clone();
            for i in 0..held.num_slots() {
                held.rx_scaling[i] = eta_closed_form(config, scenario, &held, i)?;
            }
            let theta = power.solve(config, scenario, &held)?;
            if theta_status.is_none() {
                theta_status = Some(theta.summary());
            }
            if !theta.is_infeasible() {
                best = better(best, evaluate(config, scenario, theta.decisions)?);
            }
        }
        let aborted = best.is_none();
        let base = best.map(|c| c.decisions).unwrap_or_else(|| incumbent.clone());
        let base_total = energy(config, &base).total;
        let mut best = if aborted {
            None
        } else {
            Some(Candidate {
                decisions: base.clone(),
                total: base_total,
            })
        };

        // schedule
        let candidates = schedule_candidates(config, scenario, &base)?;
        let xi = solve_block_xi(config, scenario, &base, &candidates)?;
        let mut schedule_changed = false;
        if !xi.is_infeasible() {
            let (rounded, _) = round_schedule(config, scenario, &xi.decisions)?;
            schedule_changed = rounded.alpha != base.alpha;
            if schedule_changed {
                let repaired = solve_block_omega(config, scenario, &rounded)?;
                if !repaired.is_infeasible() {
                    let powered = power.solve(config, scenario, &repaired.decisions)?;
                    if !powered.is_infeasible() {
                        best = better(best, evaluate(config, scenario, powered.decisions)?);
                    }
                }
            }
        }

        let candidate_total = best.as_ref().map(|c| c.total);
        let accepted = matches!(&best, Some(c) if c.total <= previous);
        if accepted {
            incumbent = best.expect("accepted candidate").decisions;
            current = energy(config, &incumbent);
        }
        let feasibility = check_feasibility(config, scenario, &incumbent, ACCEPT_TOL)?;
        records.push(IterationRecord {
            iteration,
            energy: current,
            candidate_total,
            omega: Some(omega.summary()),
            theta: theta_status,
            xi: Some(xi.summary()),
            schedule_changed,
            accepted,
            feasibility,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        });

        if aborted && candidate_total.is_none() {
            termination = TerminationReason::Aborted;
            break;
        }
        let converged = if previous == 0.0 {
            true
        } else {
            ((previous - current.total) / previous).abs() < config.bcd_epsilon
        };
        if converged {
            termination = TerminationReason::Converged;
            break;
        }
    }

    Ok((
        incumbent,
        IterationTrace {
            initial,
            records,
            termination,
        },
    ))
}

/// Interior-point operation counts per BCD iteration, `n^3.5` for a block
/// with `n` decision variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub omega: f64,
    pub theta: f64,
    pub xi: f64,
    /// Iteration count the total is scaled by.
    pub iterations: usize,
    pub total: f64,
}

/// Operation-count estimate with `bcd_max_iters` iterations.
pub fn complexity_estimate(config: &SystemConfig) -> ComplexityReport {
    let i = config.num_slots as f64;
    let j = config.num_aircomp as f64;
    let k = config.num_edge as f64;
    let omega = (i * (1.0 + k)).powf(3.5);
    let theta = (i * (2.0 * j + k)).powf(3.5);
    let xi = (i * k).powf(3.5);
    let iterations = config.bcd_max_iters;
    ComplexityReport {
        omega,
        theta,
        xi,
        iterations,
        total: iterations as f64 * (omega + theta + xi),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_scenario, stream_rng, INIT_STREAM};

    fn desk_small() -> SystemConfig {
        SystemConfig {
            num_slots: 8,
            horizon: 8.0,
            num_aircomp: 3,
            num_edge: 3,
            data_demand: 3e5,
            ..SystemConfig::desk()
        }
    }

    #[test]
    fn initial_point_is_feasible_and_seeded() {
        let cfg = desk_small();
        let sc = build_scenario(&cfg, 5).unwrap();
        let a = initialize_feasible(&cfg, &sc, &mut stream_rng(5, INIT_STREAM)).unwrap();
        let b = initialize_feasible(&cfg, &sc, &mut stream_rng(6, INIT_STREAM)).unwrap();
        assert!(check_feasibility(&cfg, &sc, &a, ACCEPT_TOL).unwrap().feasible);
        assert!(check_feasibility(&cfg, &sc, &b, ACCEPT_TOL).unwrap().feasible);
        assert_ne!(a.tx_scaling, b.tx_scaling);
        let again = initialize_feasible(&cfg, &sc, &mut stream_rng(5, INIT_STREAM)).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn excessive_demand_is_reported() {
        let mut cfg = desk_small();
        cfg.data_demand = 1e12;
        let sc = build_scenario(&cfg, 5).unwrap();
        let err = initialize_feasible(&cfg, &sc, &mut stream_rng(5, INIT_STREAM)).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }), "{err}");
    }

    #[test]
    fn descent_is_monotone_and_feasible() {
        let cfg = desk_small();
        let sc = build_scenario(&cfg, 9).unwrap();
        let (d, trace) = run_bcd(&cfg, &sc, &mut stream_rng(9, INIT_STREAM)).unwrap();
        let totals = trace.totals();
        for w in totals.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-6), "{totals:?}");
        }
        assert!(check_feasibility(&cfg, &sc, &d, ACCEPT_TOL).unwrap().feasible);
        assert_ne!(trace.termination, TerminationReason::Aborted);
        assert!(!d.relaxed);
    }

    #[test]
    fn loose_threshold_stops_after_one_pass() {
        let mut cfg = desk_small();
        cfg.bcd_epsilon = 1.0;
        let sc = build_scenario(&cfg, 3).unwrap();
        let (_, trace) = run_bcd(&cfg, &sc, &mut stream_rng(3, INIT_STREAM)).unwrap();
        assert_eq!(trace.iterations(), 1);
        assert_eq!(trace.termination, TerminationReason::Converged);
    }

    #[test]
    fn trace_jsonl_roundtrip() {
        let cfg = desk_small();
        let sc = build_scenario(&cfg, 4).unwrap();
        let (_, trace) = run_bcd(&cfg, &sc, &mut stream_rng(4, INIT_STREAM)).unwrap();
        let text = trace.to_jsonl();
        assert_eq!(text.lines().count(), trace.iterations() + 2);
        assert_eq!(IterationTrace::from_jsonl(&text).unwrap(), trace);
    }

    #[test]
    fn complexity_counts() {
        let mut cfg = SystemConfig::full();
        let r = complexity_estimate(&cfg);
        assert_eq!(r.omega, 2200f64.powf(3.5));
        assert_eq!(r.total, 50.0 * (r.omega + r.theta + r.xi));
        cfg.num_slots = 1;
        cfg.num_aircomp = 0;
        cfg.num_edge = 1;
        let r = complexity_estimate(&cfg);
        assert_eq!((r.omega, r.theta, r.xi), (2f64.powf(3.5), 1.0, 1.0));
    }
}
