//! Dense log-barrier interior-point method for small smooth convex programs.
//!
//! ```text
//!     minimize    f0(x)
//!     subject to  lo <= x <= hi
//!                 a_i' x  = b_i
//!                 a_i' x <= b_i
//!                 1/2 x' P_i x + q_i' x + r_i <= 0
//! ```
//!
//! Equalities are eliminated once through a nullspace basis. A phase-I
//! problem finds a strictly feasible start when the caller's point is not
//! one. Each centering step is a damped Newton method; the barrier weight
//! grows geometrically until the duality-gap bound `m / t` drops below the
//! optimality tolerance.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Sparse coefficient list `(index, value)`.
pub type SparseVec = Vec<(usize, f64)>;

/// Symmetric matrix as triplets; both `(a, b)` and `(b, a)` must be listed
/// for off-diagonal entries.
pub type Triplets = Vec<(usize, usize, f64)>;

/// Smooth convex objective with first and second derivatives.
pub trait SmoothConvex {
    fn value(&self, x: &[f64]) -> f64;
    fn add_gradient(&self, x: &[f64], scale: f64, grad: &mut [f64]);
    fn add_hessian(&self, x: &[f64], scale: f64, hess: &mut DMatrix<f64>);
}

/// `c (w' x)^3`, convex where `w' x >= 0`.
#[derive(Debug, Clone)]
pub struct CubicTerm {
    pub coef: f64,
    pub weights: SparseVec,
}

/// `constant + lin' x + 1/2 x' Q x + sum_c c (w_c' x)^3`.
#[derive(Debug, Clone, Default)]
pub struct CompositeObjective {
    pub constant: f64,
    pub linear: SparseVec,
    pub quadratic: Triplets,
    pub cubes: Vec<CubicTerm>,
}

fn dot(a: &SparseVec, x: &[f64]) -> f64 {
    a.iter().map(|&(i, v)| v * x[i]).sum()
}

fn quad_form(q: &Triplets, x: &[f64]) -> f64 {
    0.5 * q.iter().map(|&(a, b, v)| v * x[a] * x[b]).sum::<f64>()
}

impl SmoothConvex for CompositeObjective {
    fn value(&self, x: &[f64]) -> f64 {
        self.constant
            + dot(&self.linear, x)
            + quad_form(&self.quadratic, x)
            + self.cubes.iter().map(|c| c.coef * dot(&c.weights, x).powi(3)).sum::<f64>()
    }

    fn add_gradient(&self, x: &[f64], scale: f64, grad: &mut [f64]) {
        for &(i, v) in &self.linear {
            grad[i] += scale * v;
        }
        for &(a, b, v) in &self.quadratic {
            grad[a] += scale * v * x[b];
        }
        for c in &self.cubes {
            let s = dot(&c.weights, x);
            let f = scale * 3.0 * c.coef * s * s;
            for &(i, w) in &c.weights {
                grad[i] += f * w;
            }
        }
    }

    fn add_hessian(&self, x: &[f64], scale: f64, hess: &mut DMatrix<f64>) {
        for &(a, b, v) in &self.quadratic {
            hess[(a, b)] += scale * v;
        }
        for c in &self.cubes {
            let f = scale * 6.0 * c.coef * dot(&c.weights, x);
            for &(a, wa) in &c.weights {
                for &(b, wb) in &c.weights {
                    hess[(a, b)] += f * wa * wb;
                }
            }
        }
    }
}

/// `1/2 x' P x + q' x + r <= 0` with `P` positive semidefinite.
#[derive(Debug, Clone, Default)]
pub struct QuadraticConstraint {
    pub quadratic: Triplets,
    pub linear: SparseVec,
    pub constant: f64,
}

/// Feasible-set descriptor.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    n: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    equalities: Vec<(SparseVec, f64)>,
    inequalities: Vec<(SparseVec, f64)>,
    quadratics: Vec<QuadraticConstraint>,
}

impl ConstraintSet {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            equalities: Vec::new(),
            inequalities: Vec::new(),
            quadratics: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bounds(&mut self, i: usize, lo: f64, hi: f64) -> &mut Self {
        self.lower[i] = lo;
        self.upper[i] = hi;
        self
    }

    /// `x_idx >= 0` and `sum x_idx = total`.
    pub fn simplex(&mut self, idx: &[usize], total: f64) -> &mut Self {
        for &i in idx {
            self.lower[i] = self.lower[i].max(0.0);
        }
        self.equalities.push((idx.iter().map(|&i| (i, 1.0)).collect(), total));
        self
    }

    pub fn equal(&mut self, a: SparseVec, b: f64) -> &mut Self {
        self.equalities.push((a, b));
        self
    }

    pub fn less_equal(&mut self, a: SparseVec, b: f64) -> &mut Self {
        self.inequalities.push((a, b));
        self
    }

    pub fn quadratic(&mut self, q: QuadraticConstraint) -> &mut Self {
        self.quadratics.push(q);
        self
    }

    /// Largest violation over all constraint families at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for i in 0..self.n {
            v = v.max(self.lower[i] - x[i]).max(x[i] - self.upper[i]);
        }
        for (a, b) in &self.equalities {
            v = v.max((dot(a, x) - b).abs());
        }
        for (a, b) in &self.inequalities {
            v = v.max(dot(a, x) - b);
        }
        for q in &self.quadratics {
            v = v.max(quad_form(&q.quadratic, x) + dot(&q.linear, x) + q.constant);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    FeasibleSuboptimal,
    Infeasible,
}

#[derive(Debug, Clone, Copy)]
pub struct KernelSettings {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_newton_steps: usize,
}

impl Default for KernelSettings {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            opt_tol: 1e-6,
            max_newton_steps: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KernelSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Duality-gap bound `m / t` at the returned point.
    pub kkt_residual: f64,
    pub primal_residual: f64,
}

/// `f(x) <= 0` in barrier form.
#[derive(Debug, Clone)]
enum Ineq {
    Linear { a: SparseVec, b: f64 },
    Quadratic(QuadraticConstraint),
}

impl Ineq {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Ineq::Linear { a, b } => dot(a, x) - b,
            Ineq::Quadratic(q) => quad_form(&q.quadratic, x) + dot(&q.linear, x) + q.constant,
        }
    }

    fn gradient(&self, x: &[f64], out: &mut SparseVec) {
        out.clear();
        match self {
            Ineq::Linear { a, .. } => out.extend_from_slice(a),
            Ineq::Quadratic(q) => {
                out.extend_from_slice(&q.linear);
                for &(a, b, v) in &q.quadratic {
                    out.push((a, v * x[b]));
                }
            }
        }
    }

    fn add_curvature(&self, scale: f64, hess: &mut DMatrix<f64>) {
        if let Ineq::Quadratic(q) = self {
            for &(a, b, v) in &q.quadratic {
                hess[(a, b)] += scale * v;
            }
        }
    }

    /// Same constraint with `- s` appended, `s` at index `slack`.
    fn with_slack(&self, slack: usize) -> Ineq {
        match self {
            Ineq::Linear { a, b } => {
                let mut a = a.clone();
                a.push((slack, -1.0));
                Ineq::Linear { a, b: *b }
            }
            Ineq::Quadratic(q) => {
                let mut q = q.clone();
                q.linear.push((slack, -1.0));
                Ineq::Quadratic(q)
            }
        }
    }
}

/// `{ x0 + Z z }`, the affine set of the equality constraints.
struct Affine {
    origin: Vec<f64>,
    basis: Option<DMatrix<f64>>,
}

impl Affine {
    /// Returns `None` when the equalities are inconsistent.
    fn new(n: usize, equalities: &[(SparseVec, f64)], start: &[f64], tol: f64) -> Option<Affine> {
        if equalities.is_empty() {
            return Some(Affine {
                origin: start.to_vec(),
                basis: None,
            });
        }
        let p = equalities.len();
        let mut a = DMatrix::zeros(p, n);
        let mut b = DVector::zeros(p);
        for (r, (row, rhs)) in equalities.iter().enumerate() {
            let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            for &(c, v) in row {
                a[(r, c)] += v / norm;
            }
            b[r] = rhs / norm;
        }
        let eig = SymmetricEigen::new(a.transpose() * &a);
        let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let cutoff = lmax * 1e-12 * n as f64;
        let x = DVector::from_column_slice(start);
        let resid = &b - &a * &x;
        let proj = eig.eigenvectors.transpose() * (a.transpose() * resid);
        let mut coeff = DVector::zeros(n);
        let mut null_cols = Vec::new();
        for i in 0..n {
            if eig.eigenvalues[i] > cutoff {
                coeff[i] = proj[i] / eig.eigenvalues[i];
            } else {
                null_cols.push(i);
            }
        }
        let origin = x + &eig.eigenvectors * coeff;
        let err = (&a * &origin - &b).amax();
        if err > tol.max(1e-9) {
            return None;
        }
        let mut basis = DMatrix::zeros(n, null_cols.len());
        for (c, &i) in null_cols.iter().enumerate() {
            basis.set_column(c, &eig.eigenvectors.column(i));
        }
        Some(Affine {
            origin: origin.as_slice().to_vec(),
            basis: Some(basis),
        })
    }
}

struct BarrierRun {
    x: Vec<f64>,
    iterations: usize,
    t: f64,
    converged: bool,
}

struct Barrier<'a> {
    objective: &'a dyn SmoothConvex,
    ineqs: &'a [Ineq],
    basis: Option<&'a DMatrix<f64>>,
    n: usize,
}

impl Barrier<'_> {
    fn strictly_feasible(&self, x: &[f64]) -> bool {
        self.ineqs.iter().all(|c| c.value(x) < 0.0)
    }

    fn merit(&self, x: &[f64], t: f64) -> f64 {
        let mut v = t * self.objective.value(x);
        for c in self.ineqs {
            let f = c.value(x);
            if f >= 0.0 {
                return f64::INFINITY;
            }
            v -= (-f).ln();
        }
        v
    }

    /// Newton centering for weight `t`. Returns steps taken, or `None` when
    /// the step budget ran out.
    fn center(&self, x: &mut Vec<f64>, t: f64, budget: usize, exit: &dyn Fn(&[f64]) -> bool) -> Option<usize> {
        let n = self.n;
        let mut grad = vec![0.0; n];
        let mut sparse = SparseVec::new();
        for step in 0..budget {
            if exit(x) {
                return Some(step);
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut hess = DMatrix::zeros(n, n);
            self.objective.add_gradient(x, t, &mut grad);
            self.objective.add_hessian(x, t, &mut hess);
            for c in self.ineqs {
                let f = c.value(x);
                c.gradient(x, &mut sparse);
                let inv = -1.0 / f;
                for &(i, v) in &sparse {
                    grad[i] += inv * v;
                }
                for &(a, va) in &sparse {
                    for &(b, vb) in &sparse {
                        hess[(a, b)] += inv * inv * va * vb;
                    }
                }
                c.add_curvature(inv, &mut hess);
            }
            let g = DVector::from_column_slice(&grad);
            let dx = match self.basis {
                None => newton_direction(hess, &g)?,
                Some(z) => {
                    let hz = z.transpose() * hess * z;
                    let gz = z.transpose() * &g;
                    z * newton_direction(hz, &gz)?
                }
            };
            let decrement = -g.dot(&dx);
            if !(decrement.is_finite()) {
                return None;
            }
            if decrement <= 1e-10 {
                return Some(step);
            }
            let f0 = self.merit(x, t);
            let mut s = 1.0;

            let mut trial = vec![0.0; n];
            let mut gain = None;
            for _ in 0..80 {
                for i in 0..n {
                    trial[i] = x[i] + s * dx[i];
                }
                let f1 = self.merit(&trial, t);
                if f1.is_finite() && f1 <= f0 - 0.01 * s * decrement {
                    gain = Some(f0 - f1);
                    break;
                }
                s *= 0.5;
            }
            let Some(gain) = gain else {
                // no progress possible at working precision
                return Some(step);
            };
            std::mem::swap(x, &mut trial);
            // at large t the merit's rounding exceeds the decrement threshold
            if gain <= 16.0 * f64::EPSILON * f0.abs() {
                return Some(step + 1);
            }
        }
        None
    }

    fn run(
        &self,
        mut x: Vec<f64>,
        gap_tol: f64,
        budget: usize,
        stop_early: &dyn Fn(&[f64], f64) -> bool,
        exit: &dyn Fn(&[f64]) -> bool,
    ) -> BarrierRun {
        let m = self.ineqs.len().max(1) as f64;
        let mut t = 1.0;
        let mut iterations = 0;
        let mu = 20.0;
        loop {
            match self.center(&mut x, t, budget.saturating_sub(iterations), exit) {
                Some(steps) => iterations += steps + 1,
                None => {
                    return BarrierRun {
                        x,
                        iterations: budget,
                        t,
                        converged: false,
                    }
                }
            }
            if stop_early(&x, t) || m / t <= gap_tol {
                return BarrierRun {
                    x,
                    iterations,
                    t,
                    converged: true,
                };
            }
            t *= mu;
        }
    }
}

fn newton_direction(mut h: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    if h.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    let scale = h.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut shift = 0.0;
    for _ in 0..12 {
        if let Some(ch) = h.clone().cholesky() {
            return Some(-ch.solve(g));
        }
        let next = if shift == 0.0 { scale * 1e-14 } else { shift * 100.0 };
        for i in 0..h.nrows() {
            h[(i, i)] += next - shift;
        }
        shift = next;
    }
    None
}

struct LinearObjective {
    index: usize,
}

impl SmoothConvex for LinearObjective {
    fn value(&self, x: &[f64]) -> f64 {
        x[self.index]
    }
    fn add_gradient(&self, _x: &[f64], scale: f64, grad: &mut [f64]) {
        grad[self.index] += scale;
    }
    fn add_hessian(&self, _x: &[f64], _scale: f64, _hess: &mut DMatrix<f64>) {}
}

/// `|x - centre|^2 <= R^2` with `R` a thousand times the scale of the centre
/// and of every finite bound. Keeps the phase-I barrier bounded below when the
/// feasible set is unbounded; boxed problems never touch it.
fn trust_ball(centre: &[f64], constraints: &ConstraintSet) -> Ineq {
    let scale = centre
        .iter()
        .chain(&constraints.lower)
        .chain(&constraints.upper)
        .filter(|v| v.is_finite())
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let radius = 1e3 * scale;
    Ineq::Quadratic(QuadraticConstraint {
        quadratic: (0..centre.len()).map(|i| (i, i, 2.0)).collect(),
        linear: centre.iter().enumerate().map(|(i, c)| (i, -2.0 * c)).collect(),
        constant: centre.iter().map(|c| c * c).sum::<f64>() - radius * radius,
    })
}

fn infeasible(x: Vec<f64>, iterations: usize, violation: f64) -> KernelSolution {
    KernelSolution {
        x,
        objective: f64::NAN,
        status: SolveStatus::Infeasible,
        iterations,
        kkt_residual: f64::INFINITY,
        primal_residual: violation,
    }
}

/// Minimize `objective` over `constraints` starting from `start`.
///
/// `start` need not be feasible. The returned status is `Optimal` when the
/// duality-gap bound is below `opt_tol` and the point violates no constraint
/// by more than `feas_tol`; `FeasibleSuboptimal` when the Newton budget ran
/// out first; `Infeasible` when phase I certifies an empty interior.
pub fn convex_kernel_minimize(
    objective: &dyn SmoothConvex,
    constraints: &ConstraintSet,
    start: &[f64],
    settings: &KernelSettings,
) -> KernelSolution {
    let n = constraints.n;
    assert_eq!(start.len(), n, "start point dimension");

    let mut equalities = constraints.equalities.clone();
    let mut ineqs = Vec::new();
    for i in 0..n {
        let (lo, hi) = (constraints.lower[i], constraints.upper[i]);
        if lo > hi {
            return infeasible(start.to_vec(), 0, lo - hi);
        }
        if lo == hi {
            equalities.push((vec![(i, 1.0)], lo));
            continue;
        }
        if lo.is_finite() {
            ineqs.push(Ineq::Linear { a: vec![(i, -1.0)], b: -lo });
        }
        if hi.is_finite() {
            ineqs.push(Ineq::Linear { a: vec![(i, 1.0)], b: hi });
        }
    }
    ineqs.extend(
        constraints
            .inequalities
            .iter()
            .map(|(a, b)| Ineq::Linear { a: a.clone(), b: *b }),
    );
    ineqs.extend(constraints.quadratics.iter().cloned().map(Ineq::Quadratic));

    let Some(affine) = Affine::new(n, &equalities, start, settings.feas_tol) else {
        return infeasible(start.to_vec(), 0, constraints.max_violation(start));
    };
    let gap_tol = 0.5 * settings.opt_tol;
    let mut iterations = 0;

    let mut x = affine.origin.clone();
    let phase_two = Barrier {
        objective,
        ineqs: &ineqs,
        basis: affine.basis.as_ref(),
        n,
    };
    if !phase_two.strictly_feasible(&x) {
        // phase I: minimize s subject to f_i(x) <= s, s >= -1
        let worst = ineqs.iter().map(|c| c.value(&x)).fold(f64::NEG_INFINITY, f64::max);
        let mut y = x.clone();
        y.push(worst.max(0.0) + 1.0);
        let mut p1_ineqs: Vec<Ineq> = ineqs.iter().map(|c| c.with_slack(n)).collect();
        p1_ineqs.push(Ineq::Linear { a: vec![(n, -1.0)], b: 1.0 });
        p1_ineqs.push(trust_ball(&x, constraints));
        let p1_basis = affine.basis.as_ref().map(|z| {
            let mut ext = DMatrix::zeros(n + 1, z.ncols() + 1);
            ext.view_mut((0, 0), (n, z.ncols())).copy_from(z);
            ext[(n, z.ncols())] = 1.0;
            ext
        });
        let phase_one = Barrier {
            objective: &LinearObjective { index: n },
            ineqs: &p1_ineqs,
            basis: p1_basis.as_ref(),
            n: n + 1,
        };
        let m1 = p1_ineqs.len() as f64;
        // any iterate with s < 0 is strictly feasible and ends the phase
        let run = phase_one.run(
            y,
            1e-13,
            settings.max_newton_steps,
            &|y, t| y[n] < 0.0 || y[n] - m1 / t > 0.0,
            &|y| y[n] < 0.0,
        );
        iterations += run.iterations;
        x = run.x[..n].to_vec();
        let s = run.x[n];
        if !(s < 0.0 && phase_two.strictly_feasible(&x)) {
            let violation = constraints.max_violation(&x);
            return infeasible(x, iterations, violation);
        }
    }

    let run = phase_two.run(
        x,
        gap_tol,
        settings.max_newton_steps.saturating_sub(iterations),
        &|_, _| false,
        &|_| false,
    );
    iterations += run.iterations;
    let m = ineqs.len().max(1) as f64;
    let primal_residual = constraints.max_violation(&run.x).max(0.0);
    let kkt_residual = m / run.t;
    let status = if run.converged && kkt_residual <= settings.opt_tol && primal_residual <= settings.feas_tol {
        SolveStatus::Optimal
    } else {
        SolveStatus::FeasibleSuboptimal
    };
    KernelSolution {
        objective: objective.value(&run.x),
        x: run.x,
        status,
        iterations,
        kkt_residual,
        primal_residual,
    }
}
