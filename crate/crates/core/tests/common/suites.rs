//! Randomized property suites. Each entry runs `cases` proptest cases and
//! reports the first (shrunk) counterexample as an error string.

use std::f64::consts::{FRAC_PI_2, PI};

use modsynth::geometry::{constraint_values, signed_distance, ConvexMesh, Scene};
use modsynth::io::{export_urdf, parse_scenario, parse_urdf, ObstacleSpec, ScenarioFile, Seeds, TslSpec, UrdfOptions};
use modsynth::kinematics::{
    chain_frames, euler_zyx, forward_kinematics, pose_error, rotation_from_euler_zyx, table_error, wrap_angle, DhRow, DhTable,
    Pose, TaskSpec,
};
use modsynth::modlib::{
    compose, dh_to_units, enumerate_variant_combos, quantize_to_grid, quantize_twists, select_variant_combo, ComposeOptions,
    LinkCatalog, MappingRules, TwistMode, Variant, MAX_RUN, PIVOT_LIMIT_DEG,
};
use modsynth::planner::{
    ik_damped_least_squares, path_worst_violation, plan_joint_path, IkConfig, JointLimits, PlannerConfig,
};
use modsynth::solver::{pack, solve_inner, unpack, BoundRanges, InnerProblem, SolverConfig};
use modsynth::synthesis::{binary_search_dof, DofArray, ProbeResult, SearchMode};
use modsynth::Error;
use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};

use super::oracles::{self, Poly};

pub type Suite = (&'static str, fn(u32) -> Result<(), String>);

/// Every randomized suite, in reporting order.
pub const SUITES: &[Suite] = &[
    ("fk_composition", fk_composition),
    ("fk_matches_reference_and_orthonormal", fk_matches_reference_and_orthonormal),
    ("euler_round_trip", euler_round_trip),
    ("pose_error_identity_and_sign", pose_error_identity_and_sign),
    ("pose_error_permutation", pose_error_permutation),
    ("pose_error_wrap", pose_error_wrap),
    ("distance_symmetry", distance_symmetry),
    ("distance_translation", distance_translation),
    ("distance_brute_force", distance_brute_force),
    ("box_intersection_sign", box_intersection_sign),
    ("aabb_penetration_depth", aabb_penetration_depth),
    ("pack_unpack_bijection", pack_unpack_bijection),
    ("fd_gradient_vs_central", fd_gradient_vs_central),
    ("solve_contract", solve_contract),
    ("monotone_binary_search", monotone_binary_search),
    ("quantize_idempotent", quantize_idempotent),
    ("layout_requantize", layout_requantize),
    ("composition_invariants", composition_invariants),
    ("select_order_invariance", select_order_invariance),
    ("planner_paths", planner_paths),
    ("ik_within_limits", ik_within_limits),
    ("scenario_round_trip", scenario_round_trip),
    ("table_json_round_trip", table_json_round_trip),
    ("urdf_fk_round_trip", urdf_fk_round_trip),
];

pub fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config.clone(), TestRng::deterministic_rng(config.rng_algorithm));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn vec3(range: std::ops::Range<f64>) -> impl Strategy<Value = Vector3<f64>> {
    (range.clone(), range.clone(), range).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn rotation() -> impl Strategy<Value = Rotation3<f64>> {
    vec3(-PI..PI).prop_map(Rotation3::new)
}

fn dh_row() -> impl Strategy<Value = DhRow> {
    (-1.0..1.0f64, -PI..PI, -1.0..1.0f64).prop_map(|(a, alpha, d)| DhRow::new(a, alpha, d))
}

fn chain(max: usize) -> impl Strategy<Value = Vec<(DhRow, f64)>> {
    prop::collection::vec((dh_row(), -PI..PI), 1..=max)
}

fn single_table(chain: &[(DhRow, f64)]) -> DhTable {
    let rows = chain.iter().map(|c| c.0).collect();
    let q = chain.iter().map(|c| c.1).collect();
    DhTable::from_joint_sets(rows, &[q]).unwrap()
}

fn end_transform(chain: &[(DhRow, f64)]) -> Matrix4<f64> {
    *chain_frames(&single_table(chain), 0).unwrap().last().unwrap()
}

pub fn fk_composition(cases: u32) -> Result<(), String> {
    run(cases, (chain(8), chain(8)), |(head, tail)| {
        let whole: Vec<_> = head.iter().chain(&tail).copied().collect();
        let product = end_transform(&head) * end_transform(&tail);
        let err = (end_transform(&whole) - product).amax();
        prop_assert!(err < 1e-10, "composition error {err:e}");
        Ok(())
    })
}

pub fn fk_matches_reference_and_orthonormal(cases: u32) -> Result<(), String> {
    run(cases, chain(16), |c| {
        let frames = chain_frames(&single_table(&c), 0).unwrap();
        let mut expected = Matrix4::identity();
        for (k, (row, q)) in c.iter().enumerate() {
            expected *= oracles::dh_reference(row.a, row.alpha, row.d, *q);
            let err = (frames[k + 1] - expected).amax();
            prop_assert!(err < 1e-10, "frame {} differs by {err:e}", k + 1);
            let r = oracles::rotation_block(&frames[k + 1]);
            let ortho = (r.transpose() * r - Matrix3::identity()).norm();
            prop_assert!(ortho < 1e-9, "R^T R - I = {ortho:e}");
            prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
        Ok(())
    })
}

pub fn euler_round_trip(cases: u32) -> Result<(), String> {
    run(cases, rotation(), |rot| {
        let r = rot.into_inner();
        let e = euler_zyx(&r);
        // Yaw and roll are ill-conditioned at gimbal lock.
        prop_assume!(e[1].cos() > 1e-4);
        prop_assert!(e.iter().all(|v| *v > -PI && *v <= PI));
        let back = rotation_from_euler_zyx(e);
        prop_assert!((back - r).amax() < 1e-9);
        Ok(())
    })
}

fn pose() -> impl Strategy<Value = Pose> {
    (vec3(-2.0..2.0), [-PI..PI, -PI..PI, -PI..PI], [0.0..2.0f64, 0.0..2.0, 0.0..2.0]).prop_map(|(p, o, w)| Pose {
        position: p,
        orientation: o,
        orientation_weight: w,
    })
}

pub fn pose_error_identity_and_sign(cases: u32) -> Result<(), String> {
    run(cases, prop::collection::vec((pose(), pose()), 1..6), |pairs| {
        let (actual, desired): (Vec<Pose>, Vec<Pose>) = pairs.into_iter().unzip();
        let task = TaskSpec::new(desired.clone());
        prop_assert_eq!(pose_error(&desired, &task).unwrap(), 0.0);
        let e = pose_error(&actual, &task).unwrap();
        prop_assert!(e >= 0.0 && e.is_finite());
        Ok(())
    })
}

pub fn pose_error_permutation(cases: u32) -> Result<(), String> {
    let strategy = prop::collection::vec((pose(), pose()), 1..8)
        .prop_flat_map(|pairs| {
            let order: Vec<usize> = (0..pairs.len()).collect();
            (Just(pairs), Just(order).prop_shuffle())
        });
    run(cases, strategy, |(pairs, order)| {
        let (actual, desired): (Vec<Pose>, Vec<Pose>) = pairs.into_iter().unzip();
        let base = pose_error(&actual, &TaskSpec::new(desired.clone())).unwrap();
        let pa: Vec<Pose> = order.iter().map(|&i| actual[i]).collect();
        let pd: Vec<Pose> = order.iter().map(|&i| desired[i]).collect();
        let permuted = pose_error(&pa, &TaskSpec::new(pd)).unwrap();
        prop_assert!((base - permuted).abs() <= 1e-12 * base.max(1.0));
        Ok(())
    })
}

pub fn pose_error_wrap(cases: u32) -> Result<(), String> {
    run(cases, (pose(), pose(), [-3i32..=3, -3..=3, -3..=3]), |(actual, desired, turns)| {
        let mut shifted = desired;
        for (o, t) in shifted.orientation.iter_mut().zip(turns) {
            *o += 2.0 * PI * t as f64;
        }
        let a = pose_error(&[actual], &TaskSpec::new(vec![desired])).unwrap();
        let b = pose_error(&[actual], &TaskSpec::new(vec![shifted])).unwrap();
        // Only a residual sitting on +-pi may flip branch; both are equivalent.
        let near_branch = (0..3).any(|k| (wrap_angle(desired.orientation[k] - actual.orientation[k]).abs() - PI).abs() < 1e-6);
        prop_assume!(!near_branch);
        prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        Ok(())
    })
}

fn linear_map() -> impl Strategy<Value = Matrix3<f64>> {
    (rotation(), rotation(), vec3(0.1..0.8)).prop_map(|(r1, r2, s)| r1.into_inner() * Matrix3::from_diagonal(&s) * r2.into_inner())
}

fn tetra_points() -> impl Strategy<Value = [Vector3<f64>; 4]> {
    [vec3(-0.5..0.5), vec3(-0.5..0.5), vec3(-0.5..0.5), vec3(-0.5..0.5)].prop_filter("flat tetrahedron", |p| {
        let m = Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
        m.determinant().abs() > 5e-3 && [0, 1, 2, 3].iter().all(|&k| {
            let t: Vec<_> = (0..4).filter(|&i| i != k).map(|i| p[i]).collect();
            (t[1] - t[0]).cross(&(t[2] - t[0])).norm() > 1e-2
        })
    })
}

/// Random convex polytope: an affine image of a fixed shape, or a random
/// tetrahedron.
fn poly() -> impl Strategy<Value = Poly> {
    let shape = prop_oneof![
        Just(oracles::unit_cube()),
        Just(oracles::octahedron()),
        Just(oracles::prism()),
        tetra_points().prop_map(oracles::tetrahedron),
    ];
    (shape, linear_map(), vec3(-1.0..1.0)).prop_map(|(p, m, t)| p.mapped(&m, &t))
}

fn mesh(p: &Poly) -> ConvexMesh {
    ConvexMesh::new(p.verts.clone(), p.tris.clone()).expect("random polytope is a valid convex mesh")
}

pub fn distance_symmetry(cases: u32) -> Result<(), String> {
    run(cases, (poly(), poly()), |(a, b)| {
        let (ma, mb) = (mesh(&a), mesh(&b));
        let d = signed_distance(&ma, &mb);
        prop_assert!((d - signed_distance(&mb, &ma)).abs() < 1e-12);
        Ok(())
    })
}

pub fn distance_translation(cases: u32) -> Result<(), String> {
    run(cases, (poly(), poly(), vec3(-5.0..5.0)), |(a, b, t)| {
        let d = signed_distance(&mesh(&a), &mesh(&b));
        let moved = signed_distance(&mesh(&a.translated(&t)), &mesh(&b.translated(&t)));
        prop_assert!((d - moved).abs() < 1e-9, "{d} vs {moved}");
        Ok(())
    })
}

pub fn distance_brute_force(cases: u32) -> Result<(), String> {
    // Push the second solid out along a random direction so most pairs are
    // disjoint; overlapping ones are still checked for sign.
    let strategy = (poly(), poly(), vec3(-1.0..1.0), 0.0..2.0f64);
    run(cases, strategy, |(a, b, dir, dist)| {
        prop_assume!(dir.norm() > 1e-3);
        let b = b.translated(&(dir.normalize() * dist));
        let d = signed_distance(&mesh(&a), &mesh(&b));
        if oracles::polys_intersect(&a, &b) {
            prop_assert!(d <= 1e-12, "oracle overlap but D = {d}");
        } else {
            let expected = oracles::brute_force_distance(&a, &b);
            prop_assert!((d - expected).abs() <= 1e-9, "D = {d}, brute force = {expected}");
            prop_assert!(d > 0.0);
        }
        Ok(())
    })
}

fn oriented_box() -> impl Strategy<Value = Poly> {
    (vec3(0.05..0.6), rotation(), vec3(-0.8..0.8))
        .prop_map(|(half, rot, c)| oracles::unit_cube().mapped(&(rot.into_inner() * Matrix3::from_diagonal(&half)), &c))
}

pub fn box_intersection_sign(cases: u32) -> Result<(), String> {
    run(cases, (oriented_box(), oriented_box()), |(a, b)| {
        let d = signed_distance(&mesh(&a), &mesh(&b));
        if oracles::polys_intersect(&a, &b) {
            prop_assert!(d < 0.0, "overlapping boxes, D = {d}");
        } else {
            prop_assert!(d > 0.0, "disjoint boxes, D = {d}");
        }
        Ok(())
    })
}

pub fn aabb_penetration_depth(cases: u32) -> Result<(), String> {
    run(cases, (vec3(-0.5..0.5), vec3(0.02..0.8), vec3(-0.5..0.5), vec3(0.02..0.8)), |(ca, sa, cb, sb)| {
        let d = signed_distance(&ConvexMesh::aabb_box(ca, sa), &ConvexMesh::aabb_box(cb, sb));
        let expected = oracles::aabb_signed_distance((ca - sa / 2.0, ca + sa / 2.0), (cb - sb / 2.0, cb + sb / 2.0));
        prop_assert!((d - expected).abs() < 1e-12, "D = {d}, exact = {expected}");
        Ok(())
    })
}

pub fn pack_unpack_bijection(cases: u32) -> Result<(), String> {
    let strategy = (1usize..=8, 1usize..=5).prop_flat_map(|(n, m)| {
        (Just(n), Just(m), prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, (3 + m) * n))
    });
    run(cases, strategy, |(n, m, x)| {
        let t = unpack(&x, n, m).unwrap();
        prop_assert_eq!((t.dof(), t.locations()), (n, m));
        let back = pack(&t);
        prop_assert!(back.iter().zip(&x).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(unpack(&back, n, m).unwrap(), t);
        let short = unpack(&x[1..], n, m);
        prop_assert!(matches!(short, Err(Error::DimensionMismatch { .. })), "short vector accepted");
        Ok(())
    })
}

fn task(max_locations: usize) -> impl Strategy<Value = TaskSpec> {
    let tsl = (vec3(-0.6..0.6), [-PI..PI, -1.4..1.4, -PI..PI], any::<bool>()).prop_map(|(p, o, oriented)| Pose {
        position: p,
        orientation: o,
        orientation_weight: if oriented { [1.0; 3] } else { [0.0; 3] },
    });
    prop::collection::vec(tsl, 1..=max_locations).prop_map(TaskSpec::new)
}

/// Point inside the default bounds from unit-interval coordinates.
fn design_point(n: usize, m: usize, unit: &[f64]) -> Vec<f64> {
    let b = BoundRanges::default().expand(n, m);
    unit.iter().enumerate().map(|(i, u)| b.lower[i] + u * (b.upper[i] - b.lower[i])).collect()
}

fn unit_vector(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, len)
}

pub fn fd_gradient_vs_central(cases: u32) -> Result<(), String> {
    let strategy = (1usize..=4, task(3)).prop_flat_map(|(n, t)| {
        let m = t.len();
        (Just(n), Just(t), unit_vector((3 + m) * n))
    });
    run(cases, strategy, |(n, t, u)| {
        let m = t.len();
        let x = design_point(n, m, &u);
        let scene = Scene::empty();
        let problem = InnerProblem::new(n, &t, &scene, BoundRanges::default().expand(n, m)).unwrap();

        // Stay away from the kinks of the two square roots, the wrap
        // discontinuity and gimbal lock.
        let table = unpack(&x, n, m).unwrap();
        let (mut p_err, mut o_err) = (0.0, 0.0);
        for (j, want) in t.locations.iter().enumerate() {
            let got = forward_kinematics(&table, j).unwrap();
            p_err += (want.position - got.position).norm_squared();
            prop_assume!(got.orientation[1].cos() > 1e-2);
            for k in 0..3 {
                if want.orientation_weight[k] != 0.0 {
                    let r = wrap_angle(want.orientation[k] - got.orientation[k]);
                    prop_assume!(PI - r.abs() > 1e-3);
                    o_err += r * r;
                }
            }
        }
        prop_assume!(p_err.sqrt() > 1e-2 && (!t.uses_orientation() || o_err.sqrt() > 1e-2));

        let fd = problem.objective_gradient(&x, 1e-7);
        let cd = oracles::central_gradient(|y| problem.objective(y), &x, 1e-5);
        let diff: f64 = fd.iter().zip(&cd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let scale: f64 = cd.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(scale > 1e-3);
        prop_assert!(diff / scale < 1e-4, "relative gradient error {:e}", diff / scale);
        Ok(())
    })
}

pub fn solve_contract(cases: u32) -> Result<(), String> {
    let obstacle = prop::option::of((vec3(-0.4..0.4), vec3(0.05..0.3)));
    let strategy = (1usize..=3, task(2), obstacle, any::<u64>());
    run(cases, strategy, |(n, t, obstacle, seed)| {
        let obstacles = obstacle.map(|(c, s)| vec![ConvexMesh::aabb_box(c, s)]).unwrap_or_default();
        let scene = Scene::new(obstacles, 0.005, 0.05).unwrap();
        let bounds = BoundRanges::default().expand(n, t.len());
        let cfg = SolverConfig { max_iterations: 60, restarts: 2, batch_size: 2, rng_seed: seed, ..Default::default() };
        let a = solve_inner(n, &t, &scene, &bounds, &cfg).unwrap();
        let b = solve_inner(n, &t, &scene, &bounds, &cfg).unwrap();
        prop_assert_eq!(&a, &b);

        let x = pack(&a.x_best);
        for (i, v) in x.iter().enumerate() {
            prop_assert!(bounds.lower[i] - 1e-12 <= *v && *v <= bounds.upper[i] + 1e-12, "variable {i} = {v} out of bounds");
        }
        let worst = constraint_values(&a.x_best, &scene).into_iter().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(a.feasible, worst <= cfg.constraint_tolerance);
        prop_assert!((a.max_violation - worst).abs() <= 1e-12 || (a.max_violation == worst));
        let f = table_error(&a.x_best, &t).unwrap();
        prop_assert!((a.f_best - f).abs() <= 1e-12 * f.max(1.0));
        Ok(())
    })
}

pub fn monotone_binary_search(cases: u32) -> Result<(), String> {
    let strategy = prop::collection::btree_set(1usize..=64, 1..=16).prop_flat_map(|set| {
        let values: Vec<usize> = set.into_iter().collect();
        let k = values.len();
        (Just(values), 0..=k, prop::collection::vec((0.0..1e-3f64, 1.001e-3..1.0f64, any::<bool>()), 65))
    });
    run(cases, strategy, |(values, first_ok, draws)| {
        let dofs = DofArray::unbounded(values.clone()).unwrap();
        // Successful probes report an objective under the threshold and a
        // feasible flag; failing ones are over the threshold or infeasible.
        let answer = |n: usize| {
            let (low, high, flag) = draws[n];
            if values.iter().position(|&v| v == n).unwrap() >= first_ok {
                (low, true)
            } else if flag {
                (high, true)
            } else {
                (low, false)
            }
        };
        let result = binary_search_dof(&dofs, 1e-3, |n| {
            let (objective, feasible) = answer(n);
            Ok(ProbeResult { objective, feasible, outcome: n })
        })
        .unwrap();
        let expected = values.get(first_ok).copied();
        prop_assert_eq!(result.n_star, expected);
        prop_assert_eq!(result.best, expected);
        let bound = (values.len() as f64).log2().ceil() as usize + 1;
        prop_assert!(result.trace.len() <= bound, "{} probes for k = {}", result.trace.len(), values.len());
        for rec in &result.trace {
            let (objective, feasible) = answer(rec.dof);
            prop_assert_eq!(rec.objective.to_bits(), objective.to_bits());
            prop_assert_eq!(rec.feasible, feasible);
            prop_assert_eq!(rec.success, feasible && objective <= 1e-3);
        }
        Ok(())
    })
}

pub fn quantize_idempotent(cases: u32) -> Result<(), String> {
    let step = prop_oneof![Just(10.0), Just(30.0), 1e-3..100.0f64];
    run(cases, (-1000.0..1000.0f64, step), |(v, step)| {
        let q = quantize_to_grid(v, step);
        prop_assert_eq!(quantize_to_grid(q, step).to_bits(), q.to_bits());
        prop_assert!((v - q).abs() <= step / 2.0 + 1e-12 * v.abs().max(1.0));
        prop_assert!(((q / step).round() * step - q).abs() <= 1e-9 * q.abs().max(1.0));
        Ok(())
    })
}

/// Random arm within the twist units' range; about a third of the rows
/// have no link and about a third no twist.
fn modular_table(min: usize, max: usize) -> impl Strategy<Value = DhTable> {
    let row = (prop_oneof![Just(0.0), 0.01..0.5f64], prop_oneof![Just(0.0), -FRAC_PI_2..FRAC_PI_2], 0.0..0.5f64)
        .prop_map(|(a, alpha, d)| DhRow::new(a, alpha, d));
    prop::collection::vec(row, min..=max).prop_map(|rows| {
        let n = rows.len();
        DhTable::from_joint_sets(rows, &[vec![0.0; n]]).unwrap()
    })
}

pub fn layout_requantize(cases: u32) -> Result<(), String> {
    let catalog = prop::option::of((0.01..0.2f64).prop_map(|step| LinkCatalog { step }));
    run(cases, (modular_table(1, 8), catalog), |(table, catalog)| {
        let rules = MappingRules::default();
        let units = dh_to_units(&table, &rules).unwrap();
        prop_assert_eq!(&units, &dh_to_units(&table, &rules).unwrap());
        let (layouts, residual) = quantize_twists(&table, &units, catalog.as_ref()).unwrap();
        for (l, r) in layouts.iter().zip(&residual.twist) {
            let half = match l.twist_mode {
                TwistMode::Pivot => 5.0,
                TwistMode::Port => 15.0,
                TwistMode::None => 0.0,
            };
            prop_assert!(r.to_degrees() <= half + 1e-9, "twist residual {} deg", r.to_degrees());
            prop_assert!(l.pivot_twist_deg % 10 == 0 && l.pivot_twist_deg.abs() <= PIVOT_LIMIT_DEG);
            prop_assert!(l.port_twist_deg % 30 == 0);
        }
        // Feeding the realized values back changes nothing.
        let rows = table
            .rows()
            .iter()
            .zip(&layouts)
            .map(|(row, l)| DhRow::new(if l.unit_type.has_link() { l.link_length } else { row.a }, l.realized_twist(), row.d))
            .collect();
        let again = DhTable::from_joint_sets(rows, &[vec![0.0; table.dof()]]).unwrap();
        let units2 = dh_to_units(&again, &rules).unwrap();
        let (layouts2, residual2) = quantize_twists(&again, &units2, catalog.as_ref()).unwrap();
        for (a, b) in layouts.iter().zip(&layouts2) {
            prop_assert_eq!(a.unit_type, b.unit_type);
            prop_assert_eq!(a.pivot_twist_deg, b.pivot_twist_deg);
            prop_assert_eq!(a.port_twist_deg, b.port_twist_deg);
            prop_assert_eq!(a.link_length.to_bits(), b.link_length.to_bits());
        }
        prop_assert!(residual2.twist.iter().chain(&residual2.link).all(|r| *r <= 1e-12));
        Ok(())
    })
}

pub fn composition_invariants(cases: u32) -> Result<(), String> {
    run(cases, (modular_table(1, 8), 0.0..4.0f64), |(table, payload)| {
        let opts = ComposeOptions { payload, ..Default::default() };
        let (c, _) = compose(&table, &opts).unwrap();
        prop_assert!(c.validate().is_ok());
        let v = c.variants();
        prop_assert_eq!(v.len(), table.dof());
        prop_assert_eq!(v[0], Variant::H);
        prop_assert!(!v.windows(2).any(|w| w == [Variant::L, Variant::H]));
        let longest = v.chunk_by(|a, b| a == b).map(<[Variant]>::len).max().unwrap();
        prop_assert!(longest <= MAX_RUN);
        let units = dh_to_units(&table, &opts.rules).unwrap();
        prop_assert!(c.units.iter().zip(&units).all(|(u, (t, m))| u.layout.unit_type == *t && u.layout.twist_mode == *m));
        let within = c.units.iter().zip(&c.joint_torques).all(|(u, tau)| {
            let rating = if u.variant == Variant::H { opts.heavy.nominal_torque } else { opts.light.nominal_torque };
            *tau <= rating
        });
        prop_assert_eq!(c.torque_feasible, within);
        prop_assert!(c.joint_torques.iter().all(|t| *t >= 0.0));
        Ok(())
    })
}

pub fn select_order_invariance(cases: u32) -> Result<(), String> {
    let strategy = (modular_table(2, 8), 0.0..4.0f64).prop_flat_map(|(table, payload)| {
        let combos = enumerate_variant_combos(table.dof()).unwrap();
        (Just(table), Just(payload), Just(combos).prop_shuffle())
    });
    run(cases, strategy, |(table, payload, shuffled)| {
        let opts = ComposeOptions::default();
        let units = dh_to_units(&table, &opts.rules).unwrap();
        let (layouts, _) = quantize_twists(&table, &units, None).unwrap();
        let select = |combos: &[Vec<Variant>]| {
            select_variant_combo(&table, &layouts, combos, &opts.heavy, &opts.light, payload, &opts.torque).unwrap()
        };
        let ordered = enumerate_variant_combos(table.dof()).unwrap();
        prop_assert_eq!(select(&ordered), select(&shuffled));
        Ok(())
    })
}

/// Spatial 3-joint arm next to two blocks.
fn planner_fixture() -> (DhTable, Scene) {
    let rows = vec![DhRow::new(0.0, FRAC_PI_2, 0.2), DhRow::new(0.3, 0.0, 0.0), DhRow::new(0.25, 0.0, 0.0)];
    let table = DhTable::from_joint_sets(rows, &[vec![0.0; 3]]).unwrap();
    let blocks = vec![
        ConvexMesh::aabb_box(Vector3::new(0.35, 0.1, 0.25), Vector3::new(0.1, 0.1, 0.3)),
        ConvexMesh::aabb_box(Vector3::new(-0.1, 0.35, 0.4), Vector3::new(0.2, 0.08, 0.08)),
    ];
    (table, Scene::new(blocks, 0.005, 0.05).unwrap())
}

pub fn planner_paths(cases: u32) -> Result<(), String> {
    let (table, scene) = planner_fixture();
    let limits = JointLimits::uniform(3, -PI, PI).unwrap();
    let q = || prop::collection::vec(-PI..PI, 3);
    run(cases, (q(), q(), any::<u64>()), |(start, goal, seed)| {
        let free = |q: &[f64]| modsynth::geometry::configuration_constraints(table.rows(), q, &scene).unwrap().iter().all(|g| *g <= 0.0);
        prop_assume!(free(&start) && free(&goal));
        let cfg = PlannerConfig { seed, max_samples: 3000, ..Default::default() };
        let first = plan_joint_path(&table, &scene, &start, &goal, &limits, &cfg);
        let second = plan_joint_path(&table, &scene, &start, &goal, &limits, &cfg);
        match (first, second) {
            (Ok(path), Ok(again)) => {
                prop_assert_eq!(&path, &again);
                prop_assert_eq!(path.start(), &start[..]);
                prop_assert_eq!(path.goal(), &goal[..]);
                prop_assert!(path.largest_step() <= cfg.max_step + 1e-12);
                prop_assert!(path.waypoints.iter().all(|w| limits.contains(w)));
                let worst = path_worst_violation(&table, &scene, &path, 0.002);
                prop_assert!(worst <= 0.0, "path reaches g = {worst:e}");
            }
            (Err(Error::NoPath(_)), Err(Error::NoPath(_))) => {}
            (a, b) => prop_assert!(false, "inconsistent or unexpected results {a:?} / {b:?}"),
        }
        Ok(())
    })
}

pub fn ik_within_limits(cases: u32) -> Result<(), String> {
    let (table, _) = planner_fixture();
    let strategy = prop::collection::vec((-PI..0.0f64, 0.2..PI), 3).prop_flat_map(|bounds| {
        let inside = |b: &[(f64, f64)]| b.iter().map(|(lo, w)| *lo..=(*lo + w).min(PI)).collect::<Vec<_>>();
        (Just(bounds.clone()), inside(&bounds), inside(&bounds))
    });
    run(cases, strategy, |(bounds, target_q, seed)| {
        let lower: Vec<f64> = bounds.iter().map(|b| b.0).collect();
        let upper: Vec<f64> = bounds.iter().map(|(lo, w)| (lo + w).min(PI)).collect();
        let limits = JointLimits::new(lower, upper).unwrap();
        let posed = DhTable::from_joint_sets(table.rows().to_vec(), &[target_q]).unwrap();
        let target = forward_kinematics(&posed, 0).unwrap();
        let target = Pose::position(target.position.x, target.position.y, target.position.z);
        let cfg = IkConfig::default();
        match ik_damped_least_squares(&table, &target, &seed, &limits, &cfg) {
            Ok(s) => {
                prop_assert!(limits.contains(&s.joints));
                prop_assert!(s.residual <= cfg.tolerance);
            }
            Err(Error::IkNoConvergence { .. }) => {}
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
        Ok(())
    })
}

fn scenario() -> impl Strategy<Value = ScenarioFile> {
    let obstacle = (vec3(-1.0..1.0), vec3(0.01..0.5), prop::option::of([-PI..PI, -1.5..1.5, -PI..PI])).prop_map(
        |(c, s, r)| ObstacleSpec::Box { center: c.iter().copied().collect(), size: s.iter().copied().collect(), rotation: r.map(Vec::from) },
    );
    let tsl = (vec3(-1.0..1.0), prop::option::of(([-PI..PI, -1.5..1.5, -PI..PI], prop::option::of([0.0..2.0f64, 0.0..2.0, 0.0..2.0]))))
        .prop_map(|(p, o)| TslSpec {
            position: p.iter().copied().collect(),
            orientation: o.as_ref().map(|o| o.0.to_vec()),
            weights: o.and_then(|o| o.1.map(Vec::from)),
        });
    let dofs = prop::collection::btree_set(1usize..=8, 1..=8).prop_map(|s| DofArray::new(s.into_iter().collect()).unwrap());
    (
        prop::collection::vec(obstacle, 0..6),
        prop::collection::vec(tsl, 1..5),
        (0.0..0.05f64, 0.01..0.1f64, 1e-6..0.1f64),
        dofs,
        (any::<u64>(), any::<u64>(), any::<bool>()),
        (1usize..16, -PI..-0.1, 0.1..PI),
        prop::option::of("[a-z ]{0,20}"),
    )
        .prop_map(|(obstacles, tsls, (delta, width, threshold), dofs, (s1, s2, exhaustive), (restarts, lo, hi), description)| {
            let mut s = ScenarioFile::new(tsls);
            s.obstacles = obstacles;
            s.delta = delta;
            s.link_width = width;
            s.threshold = threshold;
            s.dof_array = dofs;
            s.seeds = Seeds { solver: s1, planner: s2 };
            s.search = if exhaustive { SearchMode::Exhaustive } else { SearchMode::Binary };
            s.solver.restarts = restarts;
            s.joint_range = [lo, hi];
            s.description = description;
            s
        })
}

pub fn scenario_round_trip(cases: u32) -> Result<(), String> {
    run(cases, scenario(), |s| {
        prop_assert!(s.validate().is_ok());
        let text = s.to_canonical_json();
        let back = parse_scenario(&text, "generated").unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.to_canonical_json(), text);
        Ok(())
    })
}

pub fn table_json_round_trip(cases: u32) -> Result<(), String> {
    let value = || prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO;
    let strategy = (1usize..=8, 1usize..=4).prop_flat_map(move |(n, m)| {
        (prop::collection::vec((value(), value(), value()), n), prop::collection::vec(prop::collection::vec(value(), n), m))
    });
    run(cases, strategy, |(rows, sets)| {
        let rows = rows.into_iter().map(|(a, alpha, d)| DhRow::new(a, alpha, d)).collect();
        let t = DhTable::from_joint_sets(rows, &sets).unwrap();
        let back: DhTable = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        prop_assert_eq!(pack(&back).iter().map(|v| v.to_bits()).collect::<Vec<_>>(), pack(&t).iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        Ok(())
    })
}

pub fn urdf_fk_round_trip(cases: u32) -> Result<(), String> {
    let strategy = modular_table(1, 8).prop_flat_map(|t| {
        let n = t.dof();
        (Just(t), prop::collection::vec(prop::collection::vec(-PI..PI, n), 5))
    });
    run(cases, strategy, |(table, configs)| {
        let (composition, _) = compose(&table, &ComposeOptions::default()).unwrap();
        let model = parse_urdf(&export_urdf(&table, &composition, &UrdfOptions::default()).unwrap()).unwrap();
        for q in configs {
            let posed = DhTable::from_joint_sets(table.rows().to_vec(), std::slice::from_ref(&q)).unwrap();
            let expected = chain_frames(&posed, 0).unwrap().last().copied().unwrap();
            let got = model.forward_kinematics(&q).unwrap();
            prop_assert!((got - expected).amax() < 1e-9, "URDF FK off by {:e}", (got - expected).amax());
        }
        Ok(())
    })
}

/// Monotone oracle over every array `[1..=k]` for `k <= 16` and every first
/// feasible index, including none.
pub fn exhaustive_monotone_simulation() -> Result<usize, String> {
    let mut runs = 0;
    for k in 1..=16usize {
        let dofs = DofArray::unbounded((1..=k).collect()).unwrap();
        for n0 in 1..=k + 1 {
            let result = binary_search_dof(&dofs, 1e-3, |n| {
                Ok(ProbeResult { objective: if n >= n0 { 0.0 } else { 1.0 }, feasible: true, outcome: () })
            })
            .map_err(|e| e.to_string())?;
            let expected = (n0 <= k).then_some(n0);
            if result.n_star != expected {
                return Err(format!("k={k}, n0={n0}: got {:?}", result.n_star));
            }
            let bound = (k as f64).log2().ceil() as usize + 1;
            if result.trace.len() > bound {
                return Err(format!("k={k}, n0={n0}: {} probes", result.trace.len()));
            }
            runs += 1;
        }
    }
    Ok(runs)
}
