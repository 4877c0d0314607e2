//! Signed separation between convex polyhedra.
//!
//! Separation and penetration come from two different routes:
//!
//! * a separating-axis sweep over face normals and edge-pair cross products,
//!   which for polyhedra visits every facet normal of the Minkowski
//!   difference. Its maximum gap is negative exactly when the solids overlap,
//!   and then equals minus the minimal translation distance;
//! * GJK on the Minkowski difference for the Euclidean distance of disjoint
//!   pairs, which the axis sweep only bounds from below.

use std::cmp::Ordering;

use nalgebra::Vector3;

use super::mesh::ConvexMesh;

const GJK_MAX_ITERATIONS: usize = 128;
const GJK_REL_TOL: f64 = 1e-13;
const AXIS_MIN_NORM: f64 = 1e-9;

/// Signed distance: positive gap when disjoint, zero when touching, minus the
/// penetration depth when overlapping. Symmetric in its arguments.
pub fn signed_distance(a: &ConvexMesh, b: &ConvexMesh) -> f64 {
    // Canonical argument order makes the result bit-for-bit symmetric.
    let (a, b) = if canonical_cmp(a, b) == Ordering::Greater { (b, a) } else { (a, b) };
    let gap = max_axis_gap(a, b);
    if gap <= 0.0 {
        gap
    } else {
        gjk_distance(a, b).max(gap)
    }
}

/// Overlap test only (no distance).
pub fn intersects(a: &ConvexMesh, b: &ConvexMesh) -> bool {
    max_axis_gap(a, b) <= 0.0
}

fn canonical_cmp(a: &ConvexMesh, b: &ConvexMesh) -> Ordering {
    let (va, vb) = (a.vertices(), b.vertices());
    va.len().cmp(&vb.len()).then_with(|| {
        for (p, q) in va.iter().zip(vb) {
            for k in 0..3 {
                match p[k].total_cmp(&q[k]) {
                    Ordering::Equal => {}
                    o => return o,
                }
            }
        }
        Ordering::Equal
    })
}

fn axis_gap(a: &ConvexMesh, b: &ConvexMesh, axis: &Vector3<f64>) -> f64 {
    let (amin, amax) = a.project(axis);
    let (bmin, bmax) = b.project(axis);
    (bmin - amax).max(amin - bmax)
}

/// Largest projected gap over all candidate separating axes.
pub(crate) fn max_axis_gap(a: &ConvexMesh, b: &ConvexMesh) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for n in a.face_directions().iter().chain(b.face_directions()) {
        best = best.max(axis_gap(a, b, n));
    }
    for ea in a.edge_directions() {
        for eb in b.edge_directions() {
            let c = ea.cross(eb);
            let norm = c.norm();
            if norm < AXIS_MIN_NORM {
                continue;
            }
            best = best.max(axis_gap(a, b, &(c / norm)));
        }
    }
    best
}

/// Euclidean distance between disjoint convex meshes via GJK. Returns zero
/// if the origin is found inside the Minkowski difference.
pub(crate) fn gjk_distance(a: &ConvexMesh, b: &ConvexMesh) -> f64 {
    // The starting point is itself a vertex of the Minkowski difference and
    // seeds the simplex, so the iterate norm never increases.
    let mut v = a.vertices()[0] - b.vertices()[0];
    let mut simplex: Vec<Vector3<f64>> = Vec::with_capacity(4);
    simplex.push(v);
    let mut best_sq = v.norm_squared();

    for _ in 0..GJK_MAX_ITERATIONS {
        let vv = v.norm_squared();
        if vv == 0.0 {
            return 0.0;
        }
        let w = a.support(&-v) - b.support(&v);
        if vv - v.dot(&w) <= GJK_REL_TOL * vv {
            break;
        }
        if simplex.contains(&w) {
            break;
        }
        simplex.push(w);
        let (closest, kept) = closest_on_simplex(&simplex);
        simplex = kept;
        if simplex.len() == 4 {
            return 0.0;
        }
        let cc = closest.norm_squared();
        if cc >= best_sq {
            // No progress; keep the previous iterate.
            break;
        }
        best_sq = cc;
        v = closest;
    }
    v.norm()
}

/// Point of the simplex hull closest to the origin, together with the
/// smallest sub-simplex that contains it.
fn closest_on_simplex(s: &[Vector3<f64>]) -> (Vector3<f64>, Vec<Vector3<f64>>) {
    match s.len() {
        1 => (s[0], s.to_vec()),
        2 => closest_on_segment(s[0], s[1]),
        3 => closest_on_triangle(s[0], s[1], s[2]),
        4 => closest_on_tetrahedron(s[0], s[1], s[2], s[3]),
        _ => unreachable!("simplex holds at most four points"),
    }
}

fn closest_on_segment(a: Vector3<f64>, b: Vector3<f64>) -> (Vector3<f64>, Vec<Vector3<f64>>) {
    let ab = b - a;
    let t = -a.dot(&ab);
    if t <= 0.0 {
        return (a, vec![a]);
    }
    let denom = ab.norm_squared();
    if t >= denom {
        return (b, vec![b]);
    }
    (a + ab * (t / denom), vec![a, b])
}

// Voronoi-region walk, origin as the query point.
fn closest_on_triangle(a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>) -> (Vector3<f64>, Vec<Vector3<f64>>) {
    let ab = b - a;
    let ac = c - a;
    let ap = -a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, vec![a]);
    }
    let bp = -b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, vec![b]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return (a + ab * t, vec![a, b]);
    }
    let cp = -c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, vec![c]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return (a + ac * t, vec![a, c]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * t, vec![b, c]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, vec![a, b, c])
}

fn closest_on_tetrahedron(
    a: Vector3<f64>,
    b: Vector3<f64>,
    c: Vector3<f64>,
    d: Vector3<f64>,
) -> (Vector3<f64>, Vec<Vector3<f64>>) {
    // Origin outside the face (p, q, r) as seen from the opposite vertex s?
    let outside = |p: Vector3<f64>, q: Vector3<f64>, r: Vector3<f64>, s: Vector3<f64>| {
        let n = (q - p).cross(&(r - p));
        let sign_origin = (-p).dot(&n);
        let sign_s = (s - p).dot(&n);
        sign_origin * sign_s < 0.0
    };
    let faces = [(a, b, c, d), (a, c, d, b), (a, d, b, c), (b, d, c, a)];
    let scale = [a, b, c, d].iter().map(|p| (p - a).norm()).fold(0.0, f64::max);
    let volume = (b - a).dot(&(c - a).cross(&(d - a)));
    // A flat tetrahedron cannot enclose the origin; search all faces.
    let flat = volume.abs() <= 1e-12 * scale * scale * scale;
    let mut best: Option<(Vector3<f64>, Vec<Vector3<f64>>)> = None;
    for (p, q, r, s) in faces {
        if flat || outside(p, q, r, s) {
            let cand = closest_on_triangle(p, q, r);
            if best.as_ref().is_none_or(|(bp, _)| cand.0.norm_squared() < bp.norm_squared()) {
                best = Some(cand);
            }
        }
    }
    best.unwrap_or_else(|| (Vector3::zeros(), vec![a, b, c, d]))
}
