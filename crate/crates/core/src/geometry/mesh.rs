use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

const PLANE_TOL: f64 = 1e-9;
const PARALLEL_TOL: f64 = 1e-9;

/// Closed convex polyhedron given as a triangle soup.
///
/// Besides the raw geometry the mesh caches the distinct face-normal and
/// edge directions (up to sign), which are the only axes a separating-axis
/// query between two polyhedra has to visit.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
    normals: Vec<Vector3<f64>>,
    edges: Vec<Vector3<f64>>,
    aabb_min: Vector3<f64>,
    aabb_max: Vector3<f64>,
}

impl ConvexMesh {
    /// Validates and builds a mesh. Triangles are re-oriented outward; the
    /// input must be watertight and convex.
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.len() < 4 || triangles.len() < 4 {
            return Err(Error::InvalidMesh(format!(
                "need at least 4 vertices and 4 triangles, got {} and {}",
                vertices.len(),
                triangles.len()
            )));
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh("non-finite vertex".into()));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::InvalidMesh(format!("triangle {t:?} references a missing vertex")));
        }

        let scale = vertices.iter().map(|v| v.amax()).fold(1.0_f64, f64::max);
        let centroid = vertices.iter().sum::<Vector3<f64>>() / vertices.len() as f64;

        let mut triangles = triangles;
        let mut tri_normals = Vec::with_capacity(triangles.len());
        for t in &mut triangles {
            let [p0, p1, p2] = t.map(|i| vertices[i]);
            let n = (p1 - p0).cross(&(p2 - p0));
            let area2 = n.norm();
            if area2 <= PLANE_TOL * scale * scale {
                return Err(Error::InvalidMesh(format!("degenerate triangle {t:?}")));
            }
            let mut n = n / area2;
            if n.dot(&(p0 - centroid)) < 0.0 {
                t.swap(1, 2);
                n = -n;
            }
            tri_normals.push(n);
        }

        // Watertight: every undirected edge belongs to exactly two triangles.
        let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (ti, t) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (i, j) = (t[k], t[(k + 1) % 3]);
                edge_faces.entry((i.min(j), i.max(j))).or_default().push(ti);
            }
        }
        if let Some((e, f)) = edge_faces.iter().find(|(_, f)| f.len() != 2) {
            return Err(Error::InvalidMesh(format!("edge {e:?} is shared by {} triangles, expected 2", f.len())));
        }

        for (t, n) in triangles.iter().zip(&tri_normals) {
            let p0 = vertices[t[0]];
            if n.dot(&(centroid - p0)) >= -PLANE_TOL * scale {
                return Err(Error::InvalidMesh("mesh encloses no volume".into()));
            }
            if let Some(v) = vertices.iter().find(|v| n.dot(&(*v - p0)) > PLANE_TOL * scale) {
                return Err(Error::InvalidMesh(format!("not convex: vertex {v:?} lies outside face {t:?}")));
            }
        }

        let mut normals = Vec::new();
        for n in &tri_normals {
            push_direction(&mut normals, *n);
        }
        let mut edges = Vec::new();
        let mut keys: Vec<_> = edge_faces.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let f = &edge_faces[&key];
            let (n0, n1) = (tri_normals[f[0]], tri_normals[f[1]]);
            // Diagonals splitting a planar face are not real edges.
            if n0.cross(&n1).norm() < PARALLEL_TOL && n0.dot(&n1) > 0.0 {
                continue;
            }
            push_direction(&mut edges, vertices[key.1] - vertices[key.0]);
        }

        let (aabb_min, aabb_max) = bounds_of(&vertices);
        Ok(Self { vertices, triangles, normals, edges, aabb_min, aabb_max })
    }

    /// Oriented box; `axes` columns are the box's local axes.
    pub fn cuboid(center: Vector3<f64>, axes: Matrix3<f64>, half_extents: Vector3<f64>) -> Self {
        let cols = [axes.column(0).into_owned(), axes.column(1).into_owned(), axes.column(2).into_owned()];
        let mut vertices = Vec::with_capacity(8);
        for i in 0..8 {
            let s = |bit: usize| if i & (1 << bit) != 0 { 1.0 } else { -1.0 };
            vertices.push(
                center + cols[0] * (s(0) * half_extents.x) + cols[1] * (s(1) * half_extents.y) + cols[2] * (s(2) * half_extents.z),
            );
        }
        // Outward-wound pairs of triangles for the -x,+x,-y,+y,-z,+z faces.
        let triangles = vec![
            [0, 4, 6],
            [0, 6, 2],
            [1, 3, 7],
            [1, 7, 5],
            [0, 1, 5],
            [0, 5, 4],
            [2, 6, 7],
            [2, 7, 3],
            [0, 2, 3],
            [0, 3, 1],
            [4, 5, 7],
            [4, 7, 6],
        ];
        let dirs: Vec<_> = cols.iter().map(|c| c.normalize()).collect();
        let (aabb_min, aabb_max) = bounds_of(&vertices);
        Self { vertices, triangles, normals: dirs.clone(), edges: dirs, aabb_min, aabb_max }
    }

    /// Axis-aligned box from its center and full side lengths.
    pub fn aabb_box(center: Vector3<f64>, size: Vector3<f64>) -> Self {
        Self::cuboid(center, Matrix3::identity(), size / 2.0)
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub(crate) fn face_directions(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub(crate) fn edge_directions(&self) -> &[Vector3<f64>] {
        &self.edges
    }

    pub fn aabb(&self) -> (Vector3<f64>, Vector3<f64>) {
        (self.aabb_min, self.aabb_max)
    }

    pub fn translated(&self, offset: &Vector3<f64>) -> Self {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v += offset;
        }
        out.aabb_min += offset;
        out.aabb_max += offset;
        out
    }

    /// Farthest vertex along `dir`.
    pub(crate) fn support(&self, dir: &Vector3<f64>) -> Vector3<f64> {
        let mut best = self.vertices[0];
        let mut best_dot = best.dot(dir);
        for v in &self.vertices[1..] {
            let d = v.dot(dir);
            if d > best_dot {
                best_dot = d;
                best = *v;
            }
        }
        best
    }

    pub(crate) fn project(&self, axis: &Vector3<f64>) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in &self.vertices {
            let d = v.dot(axis);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        (lo, hi)
    }
}

fn bounds_of(vertices: &[Vector3<f64>]) -> (Vector3<f64>, Vector3<f64>) {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for v in vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    (lo, hi)
}

fn push_direction(dirs: &mut Vec<Vector3<f64>>, d: Vector3<f64>) {
    let d = d.normalize();
    if !dirs.iter().any(|e| e.cross(&d).norm() < PARALLEL_TOL) {
        dirs.push(d);
    }
}
