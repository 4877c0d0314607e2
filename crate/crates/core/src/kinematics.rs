//! Denavit-Hartenberg chains and the task-space pose error.
//!
//! Frames follow the standard DH convention: each row contributes
//! `Rz(theta) * Tz(d) * Tx(a) * Rx(alpha)`. Orientations are reported as
//! intrinsic Z-Y-X Euler angles `[yaw, pitch, roll]`, i.e.
//! `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label written next to every serialized orientation.
pub const EULER_ORDER: &str = "ZYX";

/// One joint's fixed kinematic parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhRow {
    /// Link length along x (m).
    pub a: f64,
    /// Twist about x (rad).
    pub alpha: f64,
    /// Offset along z (m).
    pub d: f64,
}

impl DhRow {
    pub fn new(a: f64, alpha: f64, d: f64) -> Self {
        Self { a, alpha, d }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.alpha.is_finite() && self.d.is_finite()
    }
}

/// Shared link geometry plus one joint vector per task-space location.
///
/// `theta[(i, j)]` is joint `i` at location `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DhTableRepr", into = "DhTableRepr")]
pub struct DhTable {
    rows: Vec<DhRow>,
    theta: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DhTableRepr {
    rows: Vec<DhRow>,
    /// Row-major: one inner list per joint, one entry per location.
    theta: Vec<Vec<f64>>,
}

impl TryFrom<DhTableRepr> for DhTable {
    type Error = Error;

    fn try_from(r: DhTableRepr) -> Result<Self> {
        let n = r.rows.len();
        let cols = r.theta.first().map_or(0, Vec::len);
        if r.theta.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: r.theta.len() });
        }
        if let Some(bad) = r.theta.iter().find(|row| row.len() != cols) {
            return Err(Error::DimensionMismatch { expected: cols, actual: bad.len() });
        }
        let theta = DMatrix::from_fn(n, cols, |i, j| r.theta[i][j]);
        DhTable::new(r.rows, theta)
    }
}

impl From<DhTable> for DhTableRepr {
    fn from(t: DhTable) -> Self {
        let theta = (0..t.dof()).map(|i| t.theta.row(i).iter().copied().collect()).collect();
        Self { rows: t.rows, theta }
    }
}

impl DhTable {
    pub fn new(rows: Vec<DhRow>, theta: DMatrix<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("a DH table needs at least one row".into()));
        }
        if theta.nrows() != rows.len() {
            return Err(Error::DimensionMismatch { expected: rows.len(), actual: theta.nrows() });
        }
        if theta.ncols() == 0 {
            return Err(Error::InvalidArgument("a DH table needs at least one joint vector".into()));
        }
        if !rows.iter().all(DhRow::is_finite) || !theta.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("DH table entries must be finite".into()));
        }
        Ok(Self { rows, theta })
    }

    /// Builds a table from one joint vector per location.
    pub fn from_joint_sets(rows: Vec<DhRow>, joint_sets: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = joint_sets.iter().find(|q| q.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, actual: bad.len() });
        }
        let theta = DMatrix::from_fn(n, joint_sets.len(), |i, j| joint_sets[j][i]);
        Self::new(rows, theta)
    }

    /// Number of joints.
    pub fn dof(&self) -> usize {
        self.rows.len()
    }

    /// Number of task-space locations.
    pub fn locations(&self) -> usize {
        self.theta.ncols()
    }

    pub fn rows(&self) -> &[DhRow] {
        &self.rows
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    /// Joint vector used at location `j`.
    pub fn joints(&self, j: usize) -> Result<Vec<f64>> {
        if j >= self.locations() {
            return Err(Error::IndexOutOfRange { index: j, len: self.locations() });
        }
        Ok(self.theta.column(j).iter().copied().collect())
    }

    /// Total number of design scalars, `(3 + N) * n`.
    pub fn scalar_count(&self) -> usize {
        (3 + self.locations()) * self.dof()
    }
}

/// Position plus Z-Y-X Euler orientation; `orientation_weight` masks which
/// angles take part in the error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: [f64; 3],
    pub orientation_weight: [f64; 3],
}

impl Pose {
    /// A position-only target.
    pub fn position(x: f64, y: f64, z: f64) -> Self {
        Self { position: Vector3::new(x, y, z), orientation: [0.0; 3], orientation_weight: [0.0; 3] }
    }

    pub fn from_transform(t: &Matrix4<f64>) -> Self {
        let rot: Matrix3<f64> = t.fixed_view::<3, 3>(0, 0).into_owned();
        Self {
            position: Vector3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)]),
            orientation: euler_zyx(&rot),
            orientation_weight: [1.0; 3],
        }
    }
}

/// Desired poses, one per task-space location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub locations: Vec<Pose>,
}

impl TaskSpec {
    pub fn new(locations: Vec<Pose>) -> Self {
        Self { locations }
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn uses_orientation(&self) -> bool {
        self.locations.iter().any(|p| p.orientation_weight.iter().any(|&w| w != 0.0))
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Intrinsic Z-Y-X angles `[yaw, pitch, roll]` of a rotation matrix.
pub fn euler_zyx(r: &Matrix3<f64>) -> [f64; 3] {
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    let pitch = (-r[(2, 0)]).atan2(r[(0, 0)].hypot(r[(1, 0)]));
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    [wrap_angle(yaw), wrap_angle(pitch), wrap_angle(roll)]
}

pub fn rotation_from_euler_zyx(e: [f64; 3]) -> Matrix3<f64> {
    let rz = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), e[0]);
    let ry = nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), e[1]);
    let rx = nalgebra::Rotation3::from_axis_angle(&Vector3::x_axis(), e[2]);
    (rz * ry * rx).into_inner()
}

/// Unchecked DH matrix; callers guarantee finite input.
pub(crate) fn dh_matrix(row: &DhRow, theta: f64) -> Matrix4<f64> {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = row.alpha.sin_cos();
    Matrix4::new(
        ct, -st * ca, st * sa, row.a * ct, //
        st, ct * ca, -ct * sa, row.a * st, //
        0.0, sa, ca, row.d, //
        0.0, 0.0, 0.0, 1.0,
    )
}

/// Homogeneous transform of a single DH row at joint angle `theta`.
pub fn dh_transform(row: &DhRow, theta: f64) -> Result<Matrix4<f64>> {
    if !row.is_finite() || !theta.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite DH input {row:?}, theta={theta}")));
    }
    Ok(dh_matrix(row, theta))
}

/// Base frame followed by the frame after each row; length `n + 1`.
pub(crate) fn chain_frames_unchecked(rows: &[DhRow], joints: &[f64]) -> Vec<Matrix4<f64>> {
    let mut frames = Vec::with_capacity(rows.len() + 1);
    let mut t = Matrix4::identity();
    frames.push(t);
    for (row, &q) in rows.iter().zip(joints) {
        t *= dh_matrix(row, q);
        frames.push(t);
    }
    frames
}

/// All frames of the chain at location `tsl_index`, base frame first.
pub fn chain_frames(table: &DhTable, tsl_index: usize) -> Result<Vec<Matrix4<f64>>> {
    let q = table.joints(tsl_index)?;
    Ok(chain_frames_unchecked(table.rows(), &q))
}

/// Frame origins of the chain at location `tsl_index`, base origin first.
pub fn frame_origins(table: &DhTable, tsl_index: usize) -> Result<Vec<Vector3<f64>>> {
    Ok(chain_frames(table, tsl_index)?
        .iter()
        .map(|t| Vector3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)]))
        .collect())
}

/// End-frame pose at location `tsl_index`.
pub fn forward_kinematics(table: &DhTable, tsl_index: usize) -> Result<Pose> {
    let frames = chain_frames(table, tsl_index)?;
    Ok(Pose::from_transform(frames.last().expect("chain has a base frame")))
}

pub(crate) fn end_pose(rows: &[DhRow], joints: &[f64]) -> Pose {
    let mut t = Matrix4::identity();
    for (row, &q) in rows.iter().zip(joints) {
        t *= dh_matrix(row, q);
    }
    Pose::from_transform(&t)
}

/// Per-location residual components: three position differences followed by
/// three weighted, wrapped orientation differences.
pub(crate) fn push_residuals(actual: &Pose, desired: &Pose, pos: &mut Vec<f64>, ori: &mut Vec<f64>) {
    for k in 0..3 {
        pos.push(desired.position[k] - actual.position[k]);
    }
    for k in 0..3 {
        let w = desired.orientation_weight[k];
        if w != 0.0 {
            ori.push(w.sqrt() * wrap_angle(desired.orientation[k] - actual.orientation[k]));
        }
    }
}

/// `|sqrt(P_err)| + |sqrt(O_err)|` summed over all locations.
pub fn pose_error(actual: &[Pose], desired: &TaskSpec) -> Result<f64> {
    if actual.len() != desired.len() {
        return Err(Error::DimensionMismatch { expected: desired.len(), actual: actual.len() });
    }
    let (mut pos, mut ori) = (Vec::new(), Vec::new());
    for (a, d) in actual.iter().zip(&desired.locations) {
        push_residuals(a, d, &mut pos, &mut ori);
    }
    Ok(split_norms(&pos, &ori))
}

pub(crate) fn split_norms(pos: &[f64], ori: &[f64]) -> f64 {
    let p: f64 = pos.iter().map(|v| v * v).sum();
    let o: f64 = ori.iter().map(|v| v * v).sum();
    p.sqrt().abs() + o.sqrt().abs()
}

/// Pose error of a whole table against a task.
pub fn table_error(table: &DhTable, task: &TaskSpec) -> Result<f64> {
    let poses = (0..table.locations()).map(|j| forward_kinematics(table, j)).collect::<Result<Vec<_>>>()?;
    pose_error(&poses, task)
}
