//! Link and obstacle solids, signed separation, and collision constraints.
//!
//! Every constraint value has the form `g = delta - D`; a configuration is
//! collision-free with margin when all `g <= 0`.

mod distance;
mod link;
mod mesh;

use nalgebra::Vector3;

pub use distance::{intersects, signed_distance};
pub use link::{link_solids, LinkSolid};
pub use mesh::ConvexMesh;

pub(crate) use link::{link_solids_unchecked, local_link_box};

use crate::error::{Error, Result};
use crate::kinematics::{DhRow, DhTable};

/// Cross-section side of link solids when none is configured (m).
pub const DEFAULT_LINK_WIDTH: f64 = 0.05;

/// Obstacles plus the collision margin and link cross-section.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    obstacles: Vec<ConvexMesh>,
    delta: f64,
    link_width: f64,
}

impl Scene {
    pub fn new(obstacles: Vec<ConvexMesh>, delta: f64, link_width: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("safety margin must be >= 0, got {delta}")));
        }
        if !(link_width > 0.0 && link_width.is_finite()) {
            return Err(Error::InvalidArgument(format!("link width must be > 0, got {link_width}")));
        }
        Ok(Self { obstacles, delta, link_width })
    }

    /// No obstacles, zero margin, default link width.
    pub fn empty() -> Self {
        Self { obstacles: Vec::new(), delta: 0.0, link_width: DEFAULT_LINK_WIDTH }
    }

    pub fn obstacles(&self) -> &[ConvexMesh] {
        &self.obstacles
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn link_width(&self) -> f64 {
        self.link_width
    }

    /// Number of constraint values produced for one joint vector of an
    /// `n`-joint chain.
    pub fn constraints_per_location(&self, n: usize) -> usize {
        let pairs = if n >= 2 { (n - 1) * (n - 2) / 2 } else { 0 };
        n * self.obstacles.len() + pairs
    }
}

fn aabb_gap(a: &ConvexMesh, b: &ConvexMesh) -> f64 {
    let (amin, amax) = a.aabb();
    let (bmin, bmax) = b.aabb();
    let gap: Vector3<f64> = (bmin - amax).sup(&(amin - bmax));
    gap.max()
}

/// Appends the constraint values of one joint vector: every link against
/// every obstacle (link-major), then every non-adjacent link pair `(i, k)`
/// with `k >= i + 2` in lexicographic order.
///
/// With `prune = Some(c)`, pairs whose bounding boxes are already more than
/// `c` apart skip the exact query and report `delta - (box gap)`. The box
/// gap never exceeds the true distance, so the reported value never
/// understates the violation.
pub(crate) fn push_configuration_constraints(
    rows: &[DhRow],
    joints: &[f64],
    scene: &Scene,
    prune: Option<f64>,
    out: &mut Vec<f64>,
) {
    let solids: Vec<ConvexMesh> =
        link_solids_unchecked(rows, joints, scene.link_width).iter().map(LinkSolid::to_mesh).collect();
    let dist = |a: &ConvexMesh, b: &ConvexMesh| match prune {
        Some(cut) => {
            let g = aabb_gap(a, b);
            if g > cut {
                g
            } else {
                signed_distance(a, b)
            }
        }
        None => signed_distance(a, b),
    };
    for link in &solids {
        for obstacle in &scene.obstacles {
            out.push(scene.delta - dist(link, obstacle));
        }
    }
    for i in 0..solids.len() {
        for k in (i + 2)..solids.len() {
            out.push(scene.delta - dist(&solids[i], &solids[k]));
        }
    }
}

/// Constraint values of a single joint vector.
pub fn configuration_constraints(rows: &[DhRow], joints: &[f64], scene: &Scene) -> Result<Vec<f64>> {
    if joints.len() != rows.len() {
        return Err(Error::DimensionMismatch { expected: rows.len(), actual: joints.len() });
    }
    let mut out = Vec::with_capacity(scene.constraints_per_location(rows.len()));
    push_configuration_constraints(rows, joints, scene, None, &mut out);
    Ok(out)
}

/// All constraint values of a table, location-major.
pub fn constraint_values(table: &DhTable, scene: &Scene) -> Vec<f64> {
    let mut out = Vec::with_capacity(table.locations() * scene.constraints_per_location(table.dof()));
    for j in 0..table.locations() {
        let q: Vec<f64> = table.theta().column(j).iter().copied().collect();
        push_configuration_constraints(table.rows(), &q, scene, None, &mut out);
    }
    out
}

/// Largest entry, or `-inf` for an empty set.
pub fn max_violation(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}
