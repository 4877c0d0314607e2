//! Joint-limited inverse kinematics and collision-free joint-space planning
//! between task locations.
//!
//! IK is damped least squares on a finite-difference Jacobian. Paths come
//! from a bidirectional RRT (RRT-Connect) followed by random shortcutting.
//! Edges are sampled at a fixed per-joint resolution and the gaps between
//! samples are covered by a bound on how far the arm can sweep.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{push_configuration_constraints, Scene};
use crate::kinematics::{end_pose, push_residuals, DhRow, DhTable, Pose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimits {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl JointLimits {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let limits = Self { lower, upper };
        limits.validate()?;
        Ok(limits)
    }

    /// Same range on every joint.
    pub fn uniform(n: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; n], vec![upper; n])
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::DimensionMismatch { expected: self.lower.len(), actual: self.upper.len() });
        }
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidArgument(format!("joint {i}: limits [{lo}, {hi}] are not an interval")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        q.len() == self.len() && q.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (v, (lo, hi)) in q.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*lo, *hi);
        }
    }

    fn check(&self, q: &[f64], what: &str) -> Result<()> {
        if q.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), actual: q.len() });
        }
        if !self.contains(q) {
            return Err(Error::PlannerPrecondition(format!("{what} {q:?} lies outside the joint limits")));
        }
        Ok(())
    }
}

/// Joint vectors from start to goal, consecutive entries at most
/// `max_step` apart on every joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointPath {
    pub waypoints: Vec<Vec<f64>>,
    /// rad
    pub max_step: f64,
}

impl JointPath {
    pub fn start(&self) -> &[f64] {
        &self.waypoints[0]
    }

    pub fn goal(&self) -> &[f64] {
        self.waypoints.last().expect("path has endpoints")
    }

    /// Summed Euclidean joint-space length.
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| distance(&w[0], &w[1])).sum()
    }

    /// Largest per-joint jump between consecutive waypoints.
    pub fn largest_step(&self) -> f64 {
        self.waypoints.windows(2).map(|w| max_abs_diff(&w[0], &w[1])).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IkConfig {
    /// Residual norm (m, plus weighted rad) accepted as converged.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Initial Levenberg damping; halves on success, grows on rejection.
    pub damping: f64,
    pub fd_step: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_iterations: 500, damping: 0.1, fd_step: 1e-7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub joints: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn ik_residual(rows: &[DhRow], q: &[f64], target: &Pose) -> DVector<f64> {
    let (mut pos, mut ori) = (Vec::with_capacity(3), Vec::with_capacity(3));
    push_residuals(&end_pose(rows, q), target, &mut pos, &mut ori);
    pos.extend(ori);
    DVector::from_vec(pos)
}

/// Damped least-squares IK from `seed`, clamping every iterate to `limits`.
pub fn ik_damped_least_squares(
    table: &DhTable,
    target: &Pose,
    seed: &[f64],
    limits: &JointLimits,
    cfg: &IkConfig,
) -> Result<IkSolution> {
    let rows = table.rows();
    let n = rows.len();
    if limits.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: limits.len() });
    }
    limits.check(seed, "seed")?;
    let mut q = seed.to_vec();
    let mut r = ik_residual(rows, &q, target);
    let mut lambda = cfg.damping;
    for iteration in 0..cfg.max_iterations {
        if r.norm() <= cfg.tolerance {
            return Ok(IkSolution { joints: q, residual: r.norm(), iterations: iteration });
        }
        let mut jac = DMatrix::zeros(r.len(), n);
        for k in 0..n {
            let h = cfg.fd_step * q[k].abs().max(1.0);
            let mut qh = q.clone();
            qh[k] += h;
            jac.set_column(k, &((ik_residual(rows, &qh, target) - &r) / h));
        }
        let jt = jac.transpose();
        let lhs = &jt * &jac + DMatrix::identity(n, n) * lambda;
        let Some(step) = lhs.cholesky().map(|c| c.solve(&(-(&jt * &r)))) else {
            lambda *= 10.0;
            continue;
        };
        let mut trial: Vec<f64> = q.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        limits.clamp(&mut trial);
        let r_trial = ik_residual(rows, &trial, target);
        if r_trial.norm() < r.norm() {
            q = trial;
            r = r_trial;
            lambda = (lambda * 0.5).max(1e-9);
        } else {
            lambda *= 4.0;
            if lambda > 1e9 {
                break;
            }
        }
    }
    if r.norm() <= cfg.tolerance {
        return Ok(IkSolution { joints: q, residual: r.norm(), iterations: cfg.max_iterations });
    }
    Err(Error::IkNoConvergence { residual: r.norm(), iterations: cfg.max_iterations })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Edge collision-check resolution and output waypoint spacing (rad per joint).
    pub max_step: f64,
    /// Largest per-joint move of one tree extension (rad).
    pub extend_step: f64,
    pub max_samples: usize,
    pub shortcut_attempts: usize,
    /// Carried separately in scenario files and bundles.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { max_step: 0.05, extend_step: 0.3, max_samples: 50_000, shortcut_attempts: 100, seed: 0 }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_step > 0.0 && self.extend_step > 0.0) {
            return Err(Error::InvalidArgument("planner steps must be positive".into()));
        }
        Ok(())
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + (y - x) * t).collect()
}

/// Interior points of the segment `a -> b` plus `b`, spaced at most `step`
/// per joint.
fn subdivide<'a>(a: &'a [f64], b: &'a [f64], step: f64) -> impl Iterator<Item = Vec<f64>> + 'a {
    let count = ((max_abs_diff(a, b) / step).ceil() as usize).max(1);
    (1..=count).map(move |k| if k == count { b.to_vec() } else { lerp(a, b, k as f64 / count as f64) })
}

/// Edges shorter than this (rad, per joint) are accepted on their endpoints
/// alone when the sweep bound cannot certify them.
pub const MIN_CERTIFIED_STEP: f64 = 1e-6;

/// Collision oracle for one arm in one scene.
pub struct CollisionChecker<'a> {
    rows: &'a [DhRow],
    scene: &'a Scene,
    /// Per joint, an upper bound on the distance from its axis to any point
    /// of the links it moves.
    reach: Vec<f64>,
    buffer: std::cell::RefCell<Vec<f64>>,
}

impl<'a> CollisionChecker<'a> {
    pub fn new(rows: &'a [DhRow], scene: &'a Scene) -> Self {
        // A point of link k lies within its length plus the half-diagonal of
        // the cross-section cube from the frame origin on the axis.
        let corner = scene.link_width() * 3f64.sqrt() / 2.0;
        let mut reach = vec![0.0; rows.len()];
        let mut tail = 0.0;
        for (i, row) in rows.iter().enumerate().rev() {
            tail += row.a.hypot(row.d);
            reach[i] = tail + corner;
        }
        Self { rows, scene, reach, buffer: Default::default() }
    }

    /// Largest constraint value at `q`; the configuration is free when
    /// this is `<= 0`.
    pub fn worst(&self, q: &[f64]) -> f64 {
        let mut buf = self.buffer.borrow_mut();
        buf.clear();
        // Pruning at delta keeps the sign exact.
        push_configuration_constraints(self.rows, q, self.scene, Some(self.scene.delta()), &mut buf);
        buf.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_free(&self, q: &[f64]) -> bool {
        self.worst(q) <= 0.0
    }

    /// Upper bound on how much any constraint value can change along the
    /// straight segment `a -> b`. No point of the arm travels further than
    /// `sum |dq_i| * reach_i`; link pairs can close from both sides.
    pub fn sweep_bound(&self, a: &[f64], b: &[f64]) -> f64 {
        2.0 * a.iter().zip(b).zip(&self.reach).map(|((x, y), r)| (x - y).abs() * r).sum::<f64>()
    }

    /// Whether the whole segment `a -> b` is free. Sub-steps of at most
    /// `step` per joint are evaluated; each piece is then certified with
    /// [`Self::sweep_bound`], bisecting where the clearance is too thin.
    pub fn edge_free(&self, a: &[f64], b: &[f64], step: f64) -> bool {
        let mut prev = a.to_vec();
        let mut c_prev = -self.worst(a);
        if c_prev < 0.0 {
            return false;
        }
        for q in subdivide(a, b, step) {
            let c = -self.worst(&q);
            if c < 0.0 || !self.certify(&prev, c_prev, &q, c) {
                return false;
            }
            prev = q;
            c_prev = c;
        }
        true
    }

    /// `ca`, `cb` are the (non-negative) clearances `-worst` at the ends.
    fn certify(&self, a: &[f64], ca: f64, b: &[f64], cb: f64) -> bool {
        // Clearance along the segment stays above (ca + cb - bound) / 2.
        if ca + cb >= self.sweep_bound(a, b) || max_abs_diff(a, b) <= MIN_CERTIFIED_STEP {
            return true;
        }
        let mid = lerp(a, b, 0.5);
        let cm = -self.worst(&mid);
        cm >= 0.0 && self.certify(a, ca, &mid, cm) && self.certify(&mid, cm, b, cb)
    }
}

struct Tree {
    nodes: Vec<Vec<f64>>,
    parent: Vec<usize>,
}

impl Tree {
    fn new(root: Vec<f64>) -> Self {
        Self { nodes: vec![root], parent: vec![0] }
    }

    fn nearest(&self, q: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, node) in self.nodes.iter().enumerate() {
            let d = distance(node, q);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    fn push(&mut self, q: Vec<f64>, parent: usize) -> usize {
        self.nodes.push(q);
        self.parent.push(parent);
        self.nodes.len() - 1
    }

    /// Root-to-node sequence.
    fn branch(&self, mut i: usize) -> Vec<Vec<f64>> {
        let mut out = vec![self.nodes[i].clone()];
        while i != 0 {
            i = self.parent[i];
            out.push(self.nodes[i].clone());
        }
        out.reverse();
        out
    }
}

enum Extend {
    Reached(usize),
    Advanced(usize),
    Trapped,
}

fn extend(tree: &mut Tree, target: &[f64], checker: &CollisionChecker, cfg: &PlannerConfig) -> Extend {
    let near = tree.nearest(target);
    let from = tree.nodes[near].clone();
    let gap = max_abs_diff(&from, target);
    let (to, reached) = if gap <= cfg.extend_step {
        (target.to_vec(), true)
    } else {
        (lerp(&from, target, cfg.extend_step / gap), false)
    };
    if !checker.edge_free(&from, &to, cfg.max_step) {
        return Extend::Trapped;
    }
    let id = tree.push(to, near);
    if reached {
        Extend::Reached(id)
    } else {
        Extend::Advanced(id)
    }
}

fn connect(tree: &mut Tree, target: &[f64], checker: &CollisionChecker, cfg: &PlannerConfig) -> Option<usize> {
    loop {
        match extend(tree, target, checker, cfg) {
            Extend::Reached(id) => return Some(id),
            Extend::Advanced(_) => continue,
            Extend::Trapped => return None,
        }
    }
}

fn shortcut(path: &mut Vec<Vec<f64>>, checker: &CollisionChecker, cfg: &PlannerConfig, rng: &mut ChaCha8Rng) {
    for _ in 0..cfg.shortcut_attempts {
        if path.len() < 3 {
            return;
        }
        let i = rng.random_range(0..path.len() - 2);
        let j = rng.random_range(i + 2..path.len());
        if checker.edge_free(&path[i], &path[j], cfg.max_step) {
            path.drain(i + 1..j);
        }
    }
}

fn densify(path: &[Vec<f64>], step: f64) -> Vec<Vec<f64>> {
    let mut out = vec![path[0].clone()];
    for w in path.windows(2) {
        out.extend(subdivide(&w[0], &w[1], step));
    }
    out
}

/// Collision-free joint path from `start` to `goal`.
pub fn plan_joint_path(
    table: &DhTable,
    scene: &Scene,
    start: &[f64],
    goal: &[f64],
    limits: &JointLimits,
    cfg: &PlannerConfig,
) -> Result<JointPath> {
    cfg.validate()?;
    let rows = table.rows();
    if limits.len() != rows.len() {
        return Err(Error::DimensionMismatch { expected: rows.len(), actual: limits.len() });
    }
    limits.check(start, "start")?;
    limits.check(goal, "goal")?;
    let checker = CollisionChecker::new(rows, scene);
    for (what, q) in [("start", start), ("goal", goal)] {
        let g = checker.worst(q);
        if g > 0.0 {
            return Err(Error::PlannerPrecondition(format!("{what} configuration collides (g = {g:.4})")));
        }
    }
    let finish = |raw: Vec<Vec<f64>>, rng: &mut ChaCha8Rng| {
        let mut raw = raw;
        shortcut(&mut raw, &checker, cfg, rng);
        JointPath { waypoints: densify(&raw, cfg.max_step), max_step: cfg.max_step }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    if checker.edge_free(start, goal, cfg.max_step) {
        return Ok(finish(vec![start.to_vec(), goal.to_vec()], &mut rng));
    }

    let mut a = Tree::new(start.to_vec());
    let mut b = Tree::new(goal.to_vec());
    let mut a_is_start = true;
    for _ in 0..cfg.max_samples {
        let sample: Vec<f64> = limits.lower.iter().zip(&limits.upper).map(|(lo, hi)| rng.random_range(*lo..=*hi)).collect();
        let new = match extend(&mut a, &sample, &checker, cfg) {
            Extend::Trapped => None,
            Extend::Reached(id) | Extend::Advanced(id) => Some(id),
        };
        if let Some(id) = new {
            let q = a.nodes[id].clone();
            if let Some(joined) = connect(&mut b, &q, &checker, cfg) {
                let (from_a, from_b) = (a.branch(id), b.branch(joined));
                let (head, tail) = if a_is_start { (from_a, from_b) } else { (from_b, from_a) };
                let mut raw = head;
                raw.extend(tail.into_iter().rev().skip(1));
                return Ok(finish(raw, &mut rng));
            }
        }
        std::mem::swap(&mut a, &mut b);
        a_is_start = !a_is_start;
    }
    Err(Error::NoPath(cfg.max_samples))
}

/// Worst constraint value along a path, checked at `resolution` per joint.
pub fn path_worst_violation(table: &DhTable, scene: &Scene, path: &JointPath, resolution: f64) -> f64 {
    let checker = CollisionChecker::new(table.rows(), scene);
    let mut worst = checker.worst(path.start());
    for w in path.waypoints.windows(2) {
        for q in subdivide(&w[0], &w[1], resolution) {
            worst = worst.max(checker.worst(&q));
        }
    }
    worst
}
