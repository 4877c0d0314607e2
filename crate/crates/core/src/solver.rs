//! Inner constrained fit of DH parameters and joint angles for a fixed DoF.
//!
//! The design vector is laid out as all `a`, then all `alpha`, then all `d`,
//! then the joint angles location by location. Each restart runs an
//! augmented-Lagrangian outer loop whose subproblems are bound-constrained
//! Levenberg-Marquardt solves over the residual vector
//! `[pose residuals; sqrt(mu) * max(0, g + margin + lambda / mu)]`.
//! Jacobians come from forward differences of the same residual code that
//! defines the objective and the constraints.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{constraint_values, max_violation, push_configuration_constraints, Scene};
use crate::kinematics::{end_pose, push_residuals, split_norms, DhRow, DhTable, TaskSpec};

/// Allowed range for each kind of design variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundRanges {
    pub a: [f64; 2],
    pub alpha: [f64; 2],
    pub d: [f64; 2],
    pub theta: [f64; 2],
}

impl Default for BoundRanges {
    fn default() -> Self {
        Self { a: [0.0, 0.5], alpha: [-FRAC_PI_2, FRAC_PI_2], d: [0.0, 0.5], theta: [-PI, PI] }
    }
}

impl BoundRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [("a", self.a), ("alpha", self.alpha), ("d", self.d), ("theta", self.theta)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidArgument(format!("bad {name} bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Per-variable bounds for `n` joints and `locations` joint vectors.
    pub fn expand(&self, n: usize, locations: usize) -> Bounds {
        let mut lower = Vec::with_capacity((3 + locations) * n);
        let mut upper = Vec::with_capacity((3 + locations) * n);
        for [lo, hi] in [self.a, self.alpha, self.d] {
            lower.extend(std::iter::repeat_n(lo, n));
            upper.extend(std::iter::repeat_n(hi, n));
        }
        lower.extend(std::iter::repeat_n(self.theta[0], n * locations));
        upper.extend(std::iter::repeat_n(self.theta[1], n * locations));
        Bounds { lower, upper }
    }
}

/// Per-variable lower and upper limits in design-vector order.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    fn validate(&self, expected: usize) -> Result<()> {
        if self.lower.len() != expected {
            return Err(Error::DimensionMismatch { expected, actual: self.lower.len() });
        }
        if self.upper.len() != expected {
            return Err(Error::DimensionMismatch { expected, actual: self.upper.len() });
        }
        if let Some(i) = (0..expected).find(|&i| !(self.lower[i] <= self.upper[i])) {
            return Err(Error::InvalidArgument(format!("lower > upper at variable {i}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Levenberg-Marquardt iteration budget per restart.
    pub max_iterations: usize,
    /// Largest constraint value still counted as feasible.
    pub constraint_tolerance: f64,
    /// Inner solves stop once the squared pose residual drops below this.
    pub objective_tolerance: f64,
    /// Relative forward-difference step.
    pub fd_step: f64,
    pub restarts: usize,
    /// Carried separately in scenario files and bundles.
    #[serde(skip)]
    pub rng_seed: u64,
    /// Extra clearance the solver aims for beyond the scene margin, so that
    /// returned points sit strictly inside the feasible set.
    pub internal_margin: f64,
    /// Stop launching restart batches once an outcome is feasible with an
    /// objective at or below this value.
    pub stop_at: Option<f64>,
    /// Restarts evaluated together between early-stop checks.
    pub batch_size: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 3000,
            constraint_tolerance: 1e-6,
            objective_tolerance: 1e-14,
            fd_step: 1e-7,
            restarts: 8,
            rng_seed: 0,
            internal_margin: 1e-4,
            stop_at: None,
            batch_size: 4,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("constraint_tolerance", self.constraint_tolerance),
            ("objective_tolerance", self.objective_tolerance),
            ("fd_step", self.fd_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.restarts == 0 || self.batch_size == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidArgument("restarts, batch_size and max_iterations must be >= 1".into()));
        }
        if !(self.internal_margin >= 0.0) {
            return Err(Error::InvalidArgument("internal_margin must be >= 0".into()));
        }
        Ok(())
    }
}

/// Best point found by [`solve_inner`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub x_best: DhTable,
    #[serde(with = "crate::float_serde")]
    pub f_best: f64,
    #[serde(with = "crate::float_serde")]
    pub max_violation: f64,
    pub feasible: bool,
    pub iterations: usize,
    pub restart: usize,
}

/// Design vector -> table. See the module docs for the layout.
pub fn unpack(x: &[f64], n: usize, locations: usize) -> Result<DhTable> {
    let expected = (3 + locations) * n;
    if n == 0 || locations == 0 {
        return Err(Error::InvalidArgument("need n >= 1 and at least one location".into()));
    }
    if x.len() != expected {
        return Err(Error::DimensionMismatch { expected, actual: x.len() });
    }
    let rows = (0..n).map(|i| DhRow::new(x[i], x[n + i], x[2 * n + i])).collect();
    let theta = DMatrix::from_fn(n, locations, |i, j| x[3 * n + j * n + i]);
    DhTable::new(rows, theta)
}

/// Table -> design vector.
pub fn pack(table: &DhTable) -> Vec<f64> {
    let mut x = Vec::with_capacity(table.scalar_count());
    x.extend(table.rows().iter().map(|r| r.a));
    x.extend(table.rows().iter().map(|r| r.alpha));
    x.extend(table.rows().iter().map(|r| r.d));
    for j in 0..table.locations() {
        x.extend(table.theta().column(j).iter());
    }
    x
}

/// Forward-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], rel_step: f64) -> Vec<f64> {
    let f0 = f(x);
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = rel_step * x[i].abs().max(1.0);
            xp[i] = x[i] + h;
            let g = (f(&xp) - f0) / h;
            xp[i] = x[i];
            g
        })
        .collect()
}

/// The fixed-DoF problem: objective, constraints and bounds over the design
/// vector.
#[derive(Debug, Clone)]
pub struct InnerProblem<'a> {
    n: usize,
    task: &'a TaskSpec,
    scene: &'a Scene,
    bounds: Bounds,
    periodic: Vec<bool>,
}

/// Pieces of one location's evaluation.
struct LocationEval {
    pos: Vec<f64>,
    ori: Vec<f64>,
    g: Vec<f64>,
}

impl<'a> InnerProblem<'a> {
    pub fn new(n: usize, task: &'a TaskSpec, scene: &'a Scene, bounds: Bounds) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("DoF must be >= 1".into()));
        }
        if task.is_empty() {
            return Err(Error::InvalidArgument("task has no locations".into()));
        }
        bounds.validate((3 + task.len()) * n)?;
        let periodic = (0..bounds.len())
            .map(|i| i >= 3 * n && bounds.upper[i] - bounds.lower[i] >= TAU - 1e-12)
            .collect();
        Ok(Self { n, task, scene, bounds, periodic })
    }

    pub fn dimension(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn rows(&self, x: &[f64]) -> Vec<DhRow> {
        let n = self.n;
        (0..n).map(|i| DhRow::new(x[i], x[n + i], x[2 * n + i])).collect()
    }

    fn joints<'x>(&self, x: &'x [f64], j: usize) -> &'x [f64] {
        let start = 3 * self.n + j * self.n;
        &x[start..start + self.n]
    }

    fn eval_location(&self, rows: &[DhRow], x: &[f64], j: usize, prune: Option<f64>) -> LocationEval {
        let q = self.joints(x, j);
        let (mut pos, mut ori) = (Vec::with_capacity(3), Vec::new());
        push_residuals(&end_pose(rows, q), &self.task.locations[j], &mut pos, &mut ori);
        let mut g = Vec::with_capacity(self.scene.constraints_per_location(self.n));
        push_configuration_constraints(rows, q, self.scene, prune, &mut g);
        LocationEval { pos, ori, g }
    }

    /// Pose error `f` at `x`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let rows = self.rows(x);
        let (mut pos, mut ori) = (Vec::new(), Vec::new());
        for j in 0..self.task.len() {
            push_residuals(&end_pose(&rows, self.joints(x, j)), &self.task.locations[j], &mut pos, &mut ori);
        }
        split_norms(&pos, &ori)
    }

    /// Forward-difference gradient of the objective.
    pub fn objective_gradient(&self, x: &[f64], rel_step: f64) -> Vec<f64> {
        fd_gradient(|y| self.objective(y), x, rel_step)
    }

    /// Exact constraint values at `x`, location-major.
    pub fn constraints(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(constraint_values(&unpack(x, self.n, self.task.len())?, self.scene))
    }

    /// Moves `x` into the box; full-turn angle ranges wrap instead of clip.
    pub fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            let (lo, hi) = (self.bounds.lower[i], self.bounds.upper[i]);
            if self.periodic[i] {
                *v = lo + (*v - lo).rem_euclid(TAU);
                if *v > hi {
                    *v = hi;
                }
            } else {
                *v = v.clamp(lo, hi);
            }
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.dimension())
            .map(|i| {
                let (lo, hi) = (self.bounds.lower[i], self.bounds.upper[i]);
                if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            })
            .collect()
    }
}

/// Augmented-Lagrangian state shared by the residual assembly.
struct Penalty<'p> {
    lambda: &'p [f64],
    mu: f64,
    margin: f64,
}

impl Penalty<'_> {
    /// Distance cut-off beyond which a pair cannot contribute.
    fn prune_cutoff(&self, delta: f64) -> f64 {
        let lam_max = self.lambda.iter().copied().fold(0.0, f64::max);
        delta + self.margin + lam_max / self.mu + 0.05
    }
}

struct Workspace<'p, 'a> {
    problem: &'p InnerProblem<'a>,
    penalty: Penalty<'p>,
    prune: Option<f64>,
    fd_step: f64,
}

impl Workspace<'_, '_> {
    fn residual_len(&self) -> usize {
        let p = self.problem;
        let ori: usize = p.task.locations.iter().map(|l| l.orientation_weight.iter().filter(|w| **w != 0.0).count()).sum();
        3 * p.task.len() + ori + p.task.len() * p.scene.constraints_per_location(p.n)
    }

    fn evaluate(&self, x: &[f64]) -> Vec<LocationEval> {
        let rows = self.problem.rows(x);
        (0..self.problem.task.len()).map(|j| self.problem.eval_location(&rows, x, j, self.prune)).collect()
    }

    /// Forward-difference Jacobian. Joint angles only touch their own
    /// location, so those columns re-evaluate a single location.
    fn jacobian(&self, x: &[f64], base_evals: &[LocationEval], r0: &DVector<f64>) -> DMatrix<f64> {
        let p = self.problem;
        let m = x.len();
        let shared = 3 * p.n;
        let columns: Vec<DVector<f64>> = (0..m)
            .map(|i| {
                let mut xp = x.to_vec();
                let mut h = self.fd_step * x[i].abs().max(1.0);
                if !p.periodic[i] && x[i] + h > p.bounds.upper[i] {
                    h = -h;
                }
                xp[i] = x[i] + h;
                let mut r = DVector::zeros(r0.len());
                if i < shared {
                    self.assemble(&refs(&self.evaluate(&xp)), &mut r);
                } else {
                    let j = (i - shared) / p.n;
                    let rows = p.rows(&xp);
                    let fresh = p.eval_location(&rows, &xp, j, self.prune);
                    // Reuse untouched locations from the base point.
                    let evals: Vec<&LocationEval> =
                        base_evals.iter().enumerate().map(|(k, e)| if k == j { &fresh } else { e }).collect();
                    self.assemble(&evals, &mut r);
                }
                (r - r0) / h
            })
            .collect();
        DMatrix::from_columns(&columns)
    }

    fn assemble(&self, evals: &[&LocationEval], out: &mut DVector<f64>) {
        let mut k = 0;
        for e in evals {
            for v in e.pos.iter().chain(&e.ori) {
                out[k] = *v;
                k += 1;
            }
        }
        let sqrt_mu = self.penalty.mu.sqrt();
        let mut c = 0;
        for e in evals {
            for g in &e.g {
                let shifted = g + self.penalty.margin + self.penalty.lambda[c] / self.penalty.mu;
                out[k] = sqrt_mu * shifted.max(0.0);
                k += 1;
                c += 1;
            }
        }
    }
}

fn refs(evals: &[LocationEval]) -> Vec<&LocationEval> {
    evals.iter().collect()
}

struct LmResult {
    iterations: usize,
    failed: bool,
}

/// Bound-constrained Levenberg-Marquardt on the workspace residuals.
/// Variables pinned at a bound with the gradient pointing outward are frozen
/// for that step.
fn levenberg_marquardt(ws: &Workspace, x: &mut Vec<f64>, budget: usize, obj_tol: f64) -> LmResult {
    let p = ws.problem;
    let mut evals = ws.evaluate(x);
    let mut r = DVector::zeros(ws.residual_len());
    ws.assemble(&refs(&evals), &mut r);
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return LmResult { iterations: 0, failed: true };
    }
    let mut nu = 1e-3;
    let mut iterations = 0;
    let mut jac = ws.jacobian(x, &evals, &r);

    while iterations < budget {
        if cost <= obj_tol {
            break;
        }
        iterations += 1;
        let grad = jac.transpose() * &r;
        let free: Vec<usize> = (0..x.len())
            .filter(|&i| {
                if p.periodic[i] {
                    return true;
                }
                let at_lo = x[i] <= p.bounds.lower[i] && grad[i] > 0.0;
                let at_hi = x[i] >= p.bounds.upper[i] && grad[i] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();
        if free.is_empty() {
            break;
        }
        let jf = jac.select_columns(&free);
        let jtj = jf.transpose() * &jf;
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| grad[i]));

        let mut accepted = false;
        while nu < 1e12 {
            let mut a = jtj.clone();
            for k in 0..free.len() {
                a[(k, k)] += nu * jtj[(k, k)].max(1e-9);
            }
            let Some(chol) = a.cholesky() else {
                nu *= 4.0;
                continue;
            };
            let step = chol.solve(&(-&gf));
            let mut trial = x.clone();
            for (k, &i) in free.iter().enumerate() {
                trial[i] += step[k];
            }
            p.project(&mut trial);
            let trial_evals = ws.evaluate(&trial);
            let mut tr = DVector::zeros(r.len());
            ws.assemble(&refs(&trial_evals), &mut tr);
            let trial_cost = tr.norm_squared();
            if !trial_cost.is_finite() {
                return LmResult { iterations, failed: true };
            }
            if trial_cost < cost {
                let moved = trial.iter().zip(x.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let improvement = cost - trial_cost;
                *x = trial;
                evals = trial_evals;
                r = tr;
                cost = trial_cost;
                nu = (nu / 3.0).max(1e-12);
                accepted = true;
                if improvement <= 1e-14 * cost.max(1e-30) || moved <= 1e-13 {
                    return LmResult { iterations, failed: false };
                }
                break;
            }
            nu *= 4.0;
        }
        if !accepted {
            break;
        }
        jac = ws.jacobian(x, &evals, &r);
    }
    LmResult { iterations, failed: false }
}

struct RestartResult {
    x: Vec<f64>,
    f: f64,
    max_violation: f64,
    iterations: usize,
    failed: bool,
}

fn run_restart(problem: &InnerProblem, cfg: &SolverConfig, restart: usize) -> RestartResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(restart as u64);
    let mut x = problem.sample(&mut rng);

    let q = problem.task.len() * problem.scene.constraints_per_location(problem.n);
    let mut lambda = vec![0.0; q];
    let mut mu = 10.0;
    let mut used = 0;
    let mut prev_violation = f64::INFINITY;
    let mut failed = false;
    let pose_tol = cfg.objective_tolerance;

    for outer in 0..40 {
        if used >= cfg.max_iterations {
            break;
        }
        let penalty = Penalty { lambda: &lambda, mu, margin: cfg.internal_margin };
        let prune = Some(penalty.prune_cutoff(problem.scene.delta()));
        let ws = Workspace { problem, penalty, prune, fd_step: cfg.fd_step };
        let lm = levenberg_marquardt(&ws, &mut x, cfg.max_iterations - used, pose_tol);
        used += lm.iterations;
        if lm.failed {
            failed = true;
            break;
        }

        let g = problem.constraints(&x).unwrap_or_default();
        let shifted_violation = g.iter().map(|v| v + cfg.internal_margin).fold(0.0, f64::max);
        for (l, v) in lambda.iter_mut().zip(&g) {
            *l = (*l + mu * (v + cfg.internal_margin)).max(0.0);
        }
        let f = problem.objective(&x);
        debug!("restart {restart} outer {outer}: f={f:.3e} viol={shifted_violation:.3e} mu={mu:.1e}");
        if shifted_violation <= cfg.constraint_tolerance {
            break;
        } else if shifted_violation > 0.25 * prev_violation {
            mu = (mu * 10.0).min(1e10);
        }
        prev_violation = shifted_violation;
    }

    if failed {
        return RestartResult { x, f: f64::INFINITY, max_violation: f64::INFINITY, iterations: used, failed };
    }
    let f = problem.objective(&x);
    let g = problem.constraints(&x).unwrap_or_default();
    let mv = max_violation(&g);
    RestartResult { x, f, max_violation: mv, iterations: used, failed: !f.is_finite() }
}

fn better(a: (bool, f64, usize), b: (bool, f64, usize)) -> bool {
    // (feasible desc, f asc, restart asc)
    match (a.0, b.0) {
        (true, false) => true,
        (false, true) => false,
        _ => a.1 < b.1 || (a.1 == b.1 && a.2 < b.2),
    }
}

/// Multi-start constrained fit of an `n`-joint chain to `task` in `scene`.
pub fn solve_inner(n: usize, task: &TaskSpec, scene: &Scene, bounds: &Bounds, cfg: &SolverConfig) -> Result<SolveOutcome> {
    cfg.validate()?;
    let problem = InnerProblem::new(n, task, scene, bounds.clone())?;
    let feasible = |r: &RestartResult| !r.failed && r.max_violation <= cfg.constraint_tolerance;

    let mut results: Vec<(usize, RestartResult)> = Vec::with_capacity(cfg.restarts);
    let mut start = 0;
    while start < cfg.restarts {
        let end = (start + cfg.batch_size).min(cfg.restarts);
        let batch: Vec<(usize, RestartResult)> =
            (start..end).into_par_iter().map(|k| (k, run_restart(&problem, cfg, k))).collect();
        results.extend(batch);
        start = end;
        if let Some(target) = cfg.stop_at {
            if results.iter().any(|(_, r)| feasible(r) && r.f <= target) {
                break;
            }
        }
    }

    let mut best: Option<&(usize, RestartResult)> = None;
    for item in &results {
        let key = |(k, r): &(usize, RestartResult)| (feasible(r), if r.f.is_finite() { r.f } else { f64::INFINITY }, *k);
        if best.is_none_or(|b| better(key(item), key(b))) {
            best = Some(item);
        }
    }
    let (restart, r) = best.expect("at least one restart ran");
    let iterations = results.iter().map(|(_, r)| r.iterations).sum();
    debug!("n={n}: best restart {restart} f={:.3e} viol={:.3e}", r.f, r.max_violation);
    Ok(SolveOutcome {
        x_best: unpack(&r.x, n, task.len())?,
        f_best: r.f,
        max_violation: r.max_violation,
        feasible: feasible(r),
        iterations,
        restart: *restart,
    })
}
