use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3};

use super::mesh::ConvexMesh;
use crate::error::Result;
use crate::kinematics::{DhRow, DhTable};

const ZERO_LENGTH: f64 = 1e-12;

/// Square-section box around the segment joining two consecutive frame
/// origins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSolid {
    pub center: Vector3<f64>,
    /// Columns are the box axes; the first runs along the link.
    pub axes: Matrix3<f64>,
    pub half_extents: Vector3<f64>,
}

impl LinkSolid {
    pub fn to_mesh(&self) -> ConvexMesh {
        ConvexMesh::cuboid(self.center, self.axes, self.half_extents)
    }
}

/// Solid of one DH row expressed in its joint frame, i.e. the parent frame
/// already rotated by the joint angle. The far end sits at `(a, 0, d)`.
///
/// Returns `(center, rotation, half_extents)` in that local frame.
pub(crate) fn local_link_box(row: &DhRow, width: f64) -> (Vector3<f64>, Matrix3<f64>, Vector3<f64>) {
    let half_w = width / 2.0;
    let length = row.a.hypot(row.d);
    if length <= ZERO_LENGTH {
        return (Vector3::zeros(), Matrix3::identity(), Vector3::repeat(half_w));
    }
    // Ry(pitch) maps the x axis onto (a, 0, d) / length.
    let pitch = (-row.d).atan2(row.a);
    let rot = Rotation3::from_axis_angle(&Vector3::y_axis(), pitch).into_inner();
    (Vector3::new(row.a / 2.0, 0.0, row.d / 2.0), rot, Vector3::new(length / 2.0, half_w, half_w))
}

pub(crate) fn link_solids_unchecked(rows: &[DhRow], joints: &[f64], width: f64) -> Vec<LinkSolid> {
    let mut solids = Vec::with_capacity(rows.len());
    let mut frame = Matrix4::<f64>::identity();
    for (row, &q) in rows.iter().zip(joints) {
        let (st, ct) = q.sin_cos();
        let mut joint_frame = frame;
        // frame * Rz(q)
        for r in 0..3 {
            let (x, y) = (frame[(r, 0)], frame[(r, 1)]);
            joint_frame[(r, 0)] = x * ct + y * st;
            joint_frame[(r, 1)] = -x * st + y * ct;
        }
        let (c_local, r_local, half) = local_link_box(row, width);
        let rot = joint_frame.fixed_view::<3, 3>(0, 0).into_owned();
        let origin = Vector3::new(joint_frame[(0, 3)], joint_frame[(1, 3)], joint_frame[(2, 3)]);
        solids.push(LinkSolid { center: origin + rot * c_local, axes: rot * r_local, half_extents: half });
        frame *= crate::kinematics::dh_matrix(row, q);
    }
    solids
}

/// One solid per joint at location `tsl_index`, base link first.
pub fn link_solids(table: &DhTable, tsl_index: usize, width: f64) -> Result<Vec<LinkSolid>> {
    let q = table.joints(tsl_index)?;
    Ok(link_solids_unchecked(table.rows(), &q, width))
}
