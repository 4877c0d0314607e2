use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConvexMesh, Scene, DEFAULT_LINK_WIDTH};
use crate::kinematics::{rotation_from_euler_zyx, Pose, TaskSpec, EULER_ORDER};
use crate::modlib::ComposeOptions;
use crate::planner::{JointLimits, PlannerConfig};
use crate::solver::{BoundRanges, SolverConfig};
use crate::synthesis::{DofArray, SearchMode, SynthesisConfig, DEFAULT_THRESHOLD};

/// Obstacle as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleSpec {
    /// Cuboid; `rotation` is Z-Y-X Euler `[yaw, pitch, roll]` (rad).
    Box {
        center: Vec<f64>,
        size: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rotation: Option<Vec<f64>>,
    },
    /// Closed convex triangle mesh, outward winding.
    Mesh { vertices: Vec<Vec<f64>>, triangles: Vec<[usize; 3]> },
}

/// Task-space location; orientation terms are optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TslSpec {
    pub position: Vec<f64>,
    /// Z-Y-X Euler `[yaw, pitch, roll]` (rad).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<Vec<f64>>,
    /// Per-angle weights; default `[1, 1, 1]` when an orientation is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub solver: u64,
    pub planner: u64,
}

fn euler_order() -> String {
    EULER_ORDER.to_string()
}

fn default_delta() -> f64 {
    0.005
}

fn default_link_width() -> f64 {
    DEFAULT_LINK_WIDTH
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_joint_range() -> [f64; 2] {
    [-PI, PI]
}

/// Everything needed to run the pipeline on one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "euler_order")]
    pub euler_order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    pub tsls: Vec<TslSpec>,
    /// Collision safety margin (m).
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Side of the square link cross-section (m).
    #[serde(default = "default_link_width")]
    pub link_width: f64,
    #[serde(default)]
    pub bounds: BoundRanges,
    #[serde(default)]
    pub dof_array: DofArray,
    /// Acceptance threshold on the pose objective.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub search: SearchMode,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    /// Joint range used for IK, planning and URDF limits (rad).
    #[serde(default = "default_joint_range")]
    pub joint_range: [f64; 2],
    #[serde(default)]
    pub compose: ComposeOptions,
}

fn check_vec3(v: &[f64], what: &str, problems: &mut Vec<String>) -> bool {
    if v.len() != 3 {
        problems.push(format!("{what}: expected 3 values, got {}", v.len()));
        return false;
    }
    if v.iter().any(|x| !x.is_finite()) {
        problems.push(format!("{what}: values must be finite"));
        return false;
    }
    true
}

fn vec3(v: &[f64]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

impl ObstacleSpec {
    fn to_mesh(&self, what: &str, problems: &mut Vec<String>) -> Option<ConvexMesh> {
        match self {
            ObstacleSpec::Box { center, size, rotation } => {
                let mut ok = check_vec3(center, &format!("{what}.center"), problems);
                ok &= check_vec3(size, &format!("{what}.size"), problems);
                if ok && size.iter().any(|s| *s <= 0.0) {
                    problems.push(format!("{what}.size: side lengths must be > 0"));
                    ok = false;
                }
                let axes = match rotation {
                    Some(r) if check_vec3(r, &format!("{what}.rotation"), problems) => rotation_from_euler_zyx([r[0], r[1], r[2]]),
                    Some(_) => return None,
                    None => nalgebra::Matrix3::identity(),
                };
                ok.then(|| ConvexMesh::cuboid(vec3(center), axes, vec3(size) / 2.0))
            }
            ObstacleSpec::Mesh { vertices, triangles } => {
                let before = problems.len();
                for (i, v) in vertices.iter().enumerate() {
                    check_vec3(v, &format!("{what}.vertices[{i}]"), problems);
                }
                if problems.len() > before {
                    return None;
                }
                match ConvexMesh::new(vertices.iter().map(|v| vec3(v)).collect(), triangles.clone()) {
                    Ok(m) => Some(m),
                    Err(e) => {
                        problems.push(format!("{what}: {e}"));
                        None
                    }
                }
            }
        }
    }
}

impl TslSpec {
    fn to_pose(&self, what: &str, problems: &mut Vec<String>) -> Option<Pose> {
        let mut ok = check_vec3(&self.position, &format!("{what}.position"), problems);
        let mut pose = ok.then(|| Pose::position(self.position[0], self.position[1], self.position[2]));
        match (&self.orientation, &self.weights) {
            (None, Some(_)) => {
                problems.push(format!("{what}.weights given without an orientation"));
                ok = false;
            }
            (Some(o), w) => {
                ok &= check_vec3(o, &format!("{what}.orientation"), problems);
                let w = w.clone().unwrap_or_else(|| vec![1.0; 3]);
                if check_vec3(&w, &format!("{what}.weights"), problems) {
                    if w.iter().any(|x| *x < 0.0) {
                        problems.push(format!("{what}.weights must be >= 0"));
                        ok = false;
                    }
                } else {
                    ok = false;
                }
                if let (true, Some(p)) = (ok, pose.as_mut()) {
                    p.orientation = [o[0], o[1], o[2]];
                    p.orientation_weight = [w[0], w[1], w[2]];
                }
            }
            (None, None) => {}
        }
        if ok {
            pose
        } else {
            None
        }
    }
}

impl ScenarioFile {
    /// Minimal scenario with every optional field at its default.
    pub fn new(tsls: Vec<TslSpec>) -> Self {
        serde_json::from_value(serde_json::json!({ "tsls": tsls })).expect("defaults are valid")
    }

    /// Every violation found, or `Ok`.
    pub fn validate(&self) -> Result<()> {
        self.build().map(|_| ())
    }

    fn build(&self) -> Result<(Scene, TaskSpec)> {
        let mut problems = Vec::new();
        if self.euler_order != EULER_ORDER {
            problems.push(format!("euler_order must be {EULER_ORDER:?}, got {:?}", self.euler_order));
        }
        if self.tsls.is_empty() {
            problems.push("tsls: at least one location is required".into());
        }
        let meshes: Vec<_> =
            self.obstacles.iter().enumerate().filter_map(|(i, o)| o.to_mesh(&format!("obstacles[{i}]"), &mut problems)).collect();
        let poses: Vec<_> =
            self.tsls.iter().enumerate().filter_map(|(i, t)| t.to_pose(&format!("tsls[{i}]"), &mut problems)).collect();
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            problems.push(format!("delta must be >= 0, got {}", self.delta));
        }
        if !(self.link_width > 0.0 && self.link_width.is_finite()) {
            problems.push(format!("link_width must be > 0, got {}", self.link_width));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            problems.push(format!("threshold must be > 0, got {}", self.threshold));
        }
        if !(self.joint_range[0] < self.joint_range[1]) {
            problems.push(format!("joint_range {:?} is not an interval", self.joint_range));
        }
        let checks: [(&str, Result<()>); 5] = [
            ("bounds", self.bounds.validate()),
            ("solver", self.solver.validate()),
            ("planner", self.planner.validate()),
            ("compose.heavy", self.compose.heavy.validate()),
            ("compose.light", self.compose.light.validate()),
        ];
        for (what, r) in checks {
            if let Err(e) = r {
                problems.push(format!("{what}: {e}"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let scene = Scene::new(meshes, self.delta, self.link_width)?;
        Ok((scene, TaskSpec::new(poses)))
    }

    pub fn scene(&self) -> Result<Scene> {
        Ok(self.build()?.0)
    }

    pub fn task(&self) -> Result<TaskSpec> {
        Ok(self.build()?.1)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig { rng_seed: self.seeds.solver, ..self.solver.clone() }
    }

    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig { seed: self.seeds.planner, ..self.planner }
    }

    pub fn joint_limits(&self, n: usize) -> Result<JointLimits> {
        JointLimits::uniform(n, self.joint_range[0], self.joint_range[1])
    }

    pub fn synthesis_config(&self) -> Result<SynthesisConfig> {
        let (scene, task) = self.build()?;
        Ok(SynthesisConfig {
            threshold: self.threshold,
            dof_array: self.dof_array.clone(),
            mode: self.search,
            bounds: self.bounds,
            solver: self.solver_config(),
            scene,
            task,
        })
    }

    /// Pretty JSON with every default spelled out. Parsing this back yields
    /// an equal scenario, and serializing that yields the same text.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

fn parse_error(source: &str, e: &serde_json::Error) -> Error {
    Error::Parse(format!("{source}: line {}, column {}: {e}", e.line(), e.column()))
}

/// Parses and validates scenario text. `source` names the input in messages.
pub fn parse_scenario(text: &str, source: &str) -> Result<ScenarioFile> {
    let scenario: ScenarioFile = serde_json::from_str(text).map_err(|e| parse_error(source, &e))?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text, &path.display().to_string())
}

pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(text: &str, source: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| parse_error(source, &e))
}
