//! Independent reference solvers used to check the optimizer: exhaustive
//! active-set enumeration for small QPs, a grid search over the Rx scaling,
//! water-filling for the offload split, and a brute-force search over tiny
//! instances.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use rand::Rng;

use crate::config::SystemConfig;
use crate::error::Result;
use crate::model::{computation_energy, mse_analytic, required_sinr, DecisionSet};
use crate::scenario::{build_scenario, Scenario};
use crate::subsolvers::kernel::{CompositeObjective, ConstraintSet, KernelSolution};
use crate::subsolvers::{convex_kernel_minimize, eta_closed_form, KernelSettings};

/// `minimize 1/2 x'Qx + c'x  s.t.  A x <= b,  E x = f` with `Q` positive
/// definite.
#[derive(Debug, Clone)]
pub struct DenseQp {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub e: DMatrix<f64>,
    pub f: DVector<f64>,
}

impl DenseQp {
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x)
    }
}

/// Optimal `(x, objective)` by trying every subset of active inequalities and
/// keeping the KKT points; `None` when no subset yields a feasible point.
pub fn qp_active_set(qp: &DenseQp, tol: f64) -> Option<(DVector<f64>, f64)> {
    let n = qp.q.nrows();
    let m = qp.a.nrows();
    let p = qp.e.nrows();
    assert!(m <= 20, "enumeration over 2^{m} subsets");
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1u32 << m) {
        let active: Vec<usize> = (0..m).filter(|&r| mask & (1 << r) != 0).collect();
        let rows = active.len() + p;
        if rows > n {
            continue;
        }
        // [Q G'; G 0] [x; mu] = [-c; h]
        let size = n + rows;
        let mut kkt = DMatrix::zeros(size, size);
        let mut rhs = DVector::zeros(size);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.q);
        rhs.rows_mut(0, n).copy_from(&(-&qp.c));
        for (r, &row) in active.iter().enumerate() {
            for col in 0..n {
                kkt[(n + r, col)] = qp.a[(row, col)];
                kkt[(col, n + r)] = qp.a[(row, col)];
            }
            rhs[n + r] = qp.b[row];
        }
        for r in 0..p {
            for col in 0..n {
                kkt[(n + active.len() + r, col)] = qp.e[(r, col)];
                kkt[(col, n + active.len() + r)] = qp.e[(r, col)];
            }
            rhs[n + active.len() + r] = qp.f[r];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        let primal = (&qp.a * &x - &qp.b).iter().all(|v| *v <= tol);
        let dual = (0..active.len()).all(|r| sol[n + r] >= -tol);
        if primal && dual {
            let obj = qp.objective(&x);
            if best.as_ref().is_none_or(|(_, o)| obj < *o) {
                best = Some((x, obj));
            }
        }
    }
    best
}

/// Lowest MSE of `slot` over a `points x points` grid of complex `eta`
/// centred on the closed form with half-width `2 |eta*|` in each axis.
pub fn eta_grid_search(
    config: &SystemConfig,
    scenario: &Scenario,
    decisions: &DecisionSet,
    slot: usize,
    points: usize,
) -> Result<(Complex64, f64)> {
    let star = eta_closed_form(config, scenario, decisions, slot)?;
    let half = 2.0 * star.norm().max(f64::MIN_POSITIVE);
    let mut d = decisions.clone();
    let mut best = (star, f64::INFINITY);
    let step = 2.0 * half / (points - 1) as f64;
    for a in 0..points {
        for b in 0..points {
            let eta = Complex64::new(star.re - half + a as f64 * step, star.im - half + b as f64 * step);
            d.rx_scaling[slot] = eta;
            let mse = mse_analytic(config, scenario, &d, slot);
            if mse < best.1 {
                best = (eta, mse);
            }
        }
    }
    Ok(best)
}

/// Minimizer of `sum_i l_i^3` subject to `sum_i l_i = total`,
/// `0 <= l_i <= caps_i`: `l_i = min(caps_i, level)`, with the level found by
/// bisection. `None` if the caps cannot hold the total.
pub fn water_fill(caps: &[f64], total: f64) -> Option<Vec<f64>> {
    let room: f64 = caps.iter().sum();
    if room < total {
        return None;
    }
    let fill = |level: f64| caps.iter().map(|c| c.min(level)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, caps.iter().cloned().fold(0.0, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if fill(mid) < total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(caps.iter().map(|c| c.min(hi)).collect())
}

/// Grid resolution of [`brute_force_energy`] per dimension.
pub const GRID_POINTS: usize = 20;

/// Best total energy of a tiny instance found by exhaustive search.
///
/// Every schedule is enumerated. A UE with two slots splits its demand on a
/// grid; AirComp magnitudes and the edge power take grid values in every slot,
/// with AirComp phases aligned and `eta` at its closed form. Points that break
/// any constraint are dropped. The AirComp magnitude grid spans
/// `[0, min(sqrt(P_A), 3 sqrt(J sigma^2 / zeta) / |h_j|)]`; the power grid
/// spans `[0, 1.05 p_hi]` where `p_hi` is the power the rate needs when every
/// AirComp UE sits at the top of its grid.
///
/// Feasible only for small `K^I`; slots are searched independently once the
/// split is fixed since they only couple through the demand.
pub fn brute_force_energy(config: &SystemConfig, scenario: &Scenario) -> Result<Option<f64>> {
    scenario.check_against(config)?;
    let (j_total, k_total, slots) = (config.num_aircomp, config.num_edge, config.num_slots);
    let schedules = k_total.pow(slots as u32);
    let mut best: Option<f64> = None;
    for code in 0..schedules {
        let owner: Vec<usize> = (0..slots).map(|i| code / k_total.pow(i as u32) % k_total).collect();
        let Some(splits) = demand_splits(config, &owner, k_total) else { continue };
        // cache slot costs by (slot, bits)
        let mut cache: Vec<Vec<(f64, Option<f64>)>> = vec![Vec::new(); slots];
        for split in splits {
            let mut total = 0.0;
            let mut ok = true;
            for i in 0..slots {
                let bits = split[i];
                let cost = match cache[i].iter().find(|(b, _)| *b == bits) {
                    Some((_, c)) => *c,
                    None => {
                        let c = slot_search(config, scenario, i, owner[i], bits, j_total, k_total);
                        cache[i].push((bits, c));
                        c
                    }
                };
                match cost {
                    Some(c) => total += c,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok && best.is_none_or(|b| total < b) {
                best = Some(total);
            }
        }
    }
    Ok(best)
}

/// Candidate per-slot offload amounts for a schedule.
fn demand_splits(config: &SystemConfig, owner: &[usize], k_total: usize) -> Option<Vec<Vec<f64>>> {
    let slots = owner.len();
    let demand = config.data_demand;
    let l_max = config.max_bits_per_slot();
    let mut per_ue: Vec<Vec<Vec<f64>>> = Vec::new();
    for k in 0..k_total {
        let mine: Vec<usize> = (0..slots).filter(|&i| owner[i] == k).collect();
        let options: Vec<Vec<f64>> = match mine.len() {
            0 if demand > 0.0 => return None,
            0 => vec![vec![0.0; slots]],
            1 => {
                let mut v = vec![0.0; slots];
                v[mine[0]] = demand;
                vec![v]
            }
            2 => (0..GRID_POINTS)
                .map(|g| {
                    let mut v = vec![0.0; slots];
                    let first = demand * g as f64 / (GRID_POINTS - 1) as f64;
                    v[mine[0]] = first;
                    v[mine[1]] = demand - first;
                    v
                })
                .collect(),
            _ => unimplemented!("brute force handles at most two slots per UE"),
        };
        let options: Vec<Vec<f64>> = options.into_iter().filter(|v| v.iter().all(|&l| l <= l_max)).collect();
        if options.is_empty() {
            return None;
        }
        per_ue.push(options);
    }
    let mut combos = vec![vec![0.0; slots]];
    for options in per_ue {
        let mut next = Vec::new();
        for base in &combos {
            for o in &options {
                next.push(base.iter().zip(o).map(|(a, b)| a + b).collect());
            }
        }
        combos = next;
    }
    Some(combos)
}

/// Cheapest grid point of one slot, or `None` if no grid point is feasible.
fn slot_search(
    config: &SystemConfig,
    scenario: &Scenario,
    slot: usize,
    owner: usize,
    bits: f64,
    j_total: usize,
    k_total: usize,
) -> Option<f64> {
    let tau = config.slot_duration();
    let mut d = DecisionSet::zeros(j_total, k_total, 1);
    let sub = single_slot(scenario, slot);
    d.alpha[[owner, 0]] = 1.0;
    d.offload_bits[[owner, 0]] = bits;

    let tops: Vec<f64> = (0..j_total)
        .map(|j| {
            let h = sub.aircomp_channel(j, 0).norm();
            config
                .p_max_aircomp
                .sqrt()
                .min(3.0 * (j_total as f64 * config.noise_power / config.mse_threshold).sqrt() / h)
        })
        .collect();
    let gain = sub.edge_channel(owner, 0).norm_sqr();
    let c = required_sinr(config, bits);
    let received_top: f64 = (0..j_total).map(|j| tops[j] * tops[j] * sub.aircomp_channel(j, 0).norm_sqr()).sum();
    let p_top = 1.05 * c * (received_top + config.noise_power) / gain;
    let p_grid: Vec<f64> = (0..GRID_POINTS).map(|g| p_top * g as f64 / (GRID_POINTS - 1) as f64).collect();

    let mut cfg = config.clone();
    cfg.num_slots = 1;
    cfg.horizon = tau;
    let mut best: Option<f64> = None;
    let combos = GRID_POINTS.pow(j_total as u32);
    for code in 0..combos {
        let mut air = 0.0;
        for j in 0..j_total {
            let g = code / GRID_POINTS.pow(j as u32) % GRID_POINTS;
            let beta = tops[j] * g as f64 / (GRID_POINTS - 1) as f64;
            let h = sub.aircomp_channel(j, 0);
            d.tx_scaling[[j, 0]] = if h.norm() > 0.0 { h.conj() / h.norm() * beta } else { Complex64::new(0.0, 0.0) };
            air += beta * beta;
        }
        let received: f64 = (0..j_total).map(|j| (sub.aircomp_channel(j, 0) * d.tx_scaling[[j, 0]]).norm_sqr()).sum();
        for &p in &p_grid {
            if p > config.p_max_edge {
                break;
            }
            if bits > 0.0 && tau * config.bandwidth * (p * gain / (received + config.noise_power)).ln_1p() / std::f64::consts::LN_2 < bits {
                continue;
            }
            d.edge_power[[owner, 0]] = p;
            // the first power meeting the rate is the cheapest and the
            // least harmful to the MSE
            let Ok(eta) = eta_closed_form(&cfg, &sub, &d, 0) else { break };
            d.rx_scaling[0] = eta;
            if mse_analytic(&cfg, &sub, &d, 0) <= config.mse_threshold {
                let e = tau * (air + p) + computation_energy(config, bits);
                if best.is_none_or(|b| e < b) {
                    best = Some(e);
                }
            }
            break;
        }
    }
    best
}

/// Scenario restricted to one slot.
fn single_slot(scenario: &Scenario, slot: usize) -> Scenario {
    let mut s = scenario.clone();
    s.channels = scenario.channels.slice(ndarray::s![.., slot..slot + 1]).to_owned();
    s
}

/// Random strictly convex QP with `1..=max_n` variables, up to six linear
/// inequalities and at most one equality, all satisfied by some point in
/// `[-1, 1]^n`.
pub fn random_qp<R: Rng + ?Sized>(rng: &mut R, max_n: usize) -> DenseQp {
    let n = rng.random_range(1..=max_n);
    let m = rng.random_range(0..=6);
    let p = if n >= 2 { rng.random_range(0..=1) } else { 0 };
    let mut u = |rows: usize, cols: usize, lo: f64, hi: f64| {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
    };
    let root = u(n, n, -1.0, 1.0);
    let q = root.transpose() * root + DMatrix::identity(n, n) * 0.1;
    let c = u(n, 1, -2.0, 2.0).column(0).into_owned();
    let x0 = u(n, 1, -1.0, 1.0).column(0).into_owned();
    let a = u(m, n, -1.0, 1.0);
    let slack = u(m, 1, 0.0, 1.0).column(0).into_owned();
    let b = &a * &x0 + slack;
    let e = u(p, n, -1.0, 1.0);
    let f = &e * &x0;
    DenseQp { q, c, a, b, e, f }
}

/// Solve `qp` with the interior-point kernel from the origin.
pub fn kernel_qp(qp: &DenseQp, settings: &KernelSettings) -> KernelSolution {
    let n = qp.q.nrows();
    let objective = CompositeObjective {
        linear: (0..n).map(|i| (i, qp.c[i])).collect(),
        quadratic: (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).map(|(a, b)| (a, b, qp.q[(a, b)])).collect(),
        ..Default::default()
    };
    let mut cons = ConstraintSet::new(n);
    for r in 0..qp.a.nrows() {
        cons.less_equal((0..n).map(|i| (i, qp.a[(r, i)])).collect(), qp.b[r]);
    }
    for r in 0..qp.e.nrows() {
        cons.equal((0..n).map(|i| (i, qp.e[(r, i)])).collect(), qp.f[r]);
    }
    convex_kernel_minimize(&objective, &cons, &vec![0.0; n], settings)
}

/// A single-slot system with random decisions, for checking the MSE model.
#[derive(Debug, Clone)]
pub struct SlotInstance {
    pub config: SystemConfig,
    pub scenario: Scenario,
    pub decisions: DecisionSet,
}

/// Random slot with `J <= max_j`, `K <= max_k` on the desk geometry: AirComp
/// scalings uniform in the budget disc, a random (possibly idle) scheduled
/// edge UE at a random power, and `eta` a random perturbation of its optimum.
pub fn random_slot_instance<R: Rng + ?Sized>(rng: &mut R, max_j: usize, max_k: usize) -> Result<SlotInstance> {
    let config = SystemConfig {
        num_slots: 1,
        horizon: 1.0,
        num_aircomp: rng.random_range(1..=max_j),
        num_edge: rng.random_range(1..=max_k),
        ..SystemConfig::desk()
    };
    let scenario = build_scenario(&config, rng.random())?;
    let mut d = DecisionSet::zeros(config.num_aircomp, config.num_edge, 1);
    for j in 0..config.num_aircomp {
        let r = config.p_max_aircomp.sqrt() * rng.random::<f64>().sqrt();
        d.tx_scaling[[j, 0]] = Complex64::from_polar(r, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
    }
    let pick = rng.random_range(0..=config.num_edge);
    if pick < config.num_edge {
        d.alpha[[pick, 0]] = 1.0;
        d.edge_power[[pick, 0]] = config.p_max_edge * rng.random::<f64>();
    }
    let star = eta_closed_form(&config, &scenario, &d, 0)?;
    d.rx_scaling[0] = star * Complex64::from_polar(rng.random_range(0.5..1.5), rng.random_range(-0.5..0.5));
    Ok(SlotInstance {
        config,
        scenario,
        decisions: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;
    use nalgebra::dvector;

    #[test]
    fn active_set_box_qp() {
        // min (x-2)^2 + (y+1)^2 on [0,1]^2 -> (1, 0)
        let qp = DenseQp {
            q: dmatrix![2.0, 0.0; 0.0, 2.0],
            c: dvector![-4.0, 2.0],
            a: dmatrix![1.0, 0.0; 0.0, 1.0; -1.0, 0.0; 0.0, -1.0],
            b: dvector![1.0, 1.0, 0.0, 0.0],
            e: DMatrix::zeros(0, 2),
            f: DVector::zeros(0),
        };
        let (x, obj) = qp_active_set(&qp, 1e-12).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(obj + 5.0, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn water_fill_levels() {
        let l = water_fill(&[1.0, 5.0, 5.0], 7.0).unwrap();
        assert_relative_eq!(l[0], 1.0);
        assert_relative_eq!(l[1], 3.0, epsilon = 1e-9);
        assert!(water_fill(&[1.0, 1.0], 3.0).is_none());
    }

    #[test]
    fn kernel_matches_enumeration_on_random_qps() {
        let mut rng = crate::scenario::stream_rng(11, 0);
        let settings = KernelSettings {
            feas_tol: 1e-10,
            opt_tol: 1e-10,
            ..Default::default()
        };
        for _ in 0..30 {
            let qp = random_qp(&mut rng, 5);
            let (_, want) = qp_active_set(&qp, 1e-9).unwrap();
            let got = kernel_qp(&qp, &settings);
            assert!((got.objective - want).abs() <= 1e-6 * want.abs().max(1.0), "{} vs {want}", got.objective);
        }
    }
}
