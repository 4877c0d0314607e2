//! Scenario files, result bundles, DH documents and URDF.
//!
//! All structured files are JSON. Lengths are meters and angles radians,
//! except composition twists, which are integer degrees on their grids.
//! Every file that carries Euler angles records `"euler_order": "ZYX"`.

mod scenario;
mod urdf;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use scenario::{load_scenario, parse_scenario, ObstacleSpec, ScenarioFile, Seeds, TslSpec};
pub use urdf::{export_urdf, parse_urdf, rows_from_urdf, UrdfBox, UrdfJoint, UrdfLink, UrdfModel, UrdfOptions};

use crate::error::{Error, Result};
use crate::kinematics::{DhRow, DhTable, EULER_ORDER};
use crate::modlib::{compose, ComposeOptions, Composition, TwistResidual};
use crate::planner::{plan_joint_path, JointPath, PlannerConfig};
use crate::synthesis::{run_search, SynthesisResult};

pub const TOOL_NAME: &str = "modsynth";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn euler_order() -> String {
    EULER_ORDER.to_string()
}

/// Where a bundle came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    /// SHA-256 of the canonical scenario JSON.
    pub config_hash: String,
    pub seeds: Seeds,
}

/// Path between two task locations (1-based indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathRecord {
    pub from: usize,
    pub to: usize,
    pub path: JointPath,
}

/// Full pipeline output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultBundle {
    #[serde(default = "euler_order")]
    pub euler_order: String,
    pub provenance: Provenance,
    pub scenario: ScenarioFile,
    pub synthesis: SynthesisResult,
    pub table: Option<DhTable>,
    pub composition: Option<Composition>,
    pub twist_residual: Option<TwistResidual>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paths: Vec<PathRecord>,
}

impl ResultBundle {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn solved(&self) -> bool {
        self.table.is_some()
    }

    /// Table, or [`Error::NoSolution`] for a bundle from a failed search.
    pub fn require_table(&self) -> Result<&DhTable> {
        self.table.as_ref().ok_or(Error::NoSolution)
    }
}

pub fn config_hash(scenario: &ScenarioFile) -> String {
    hex::encode(Sha256::digest(scenario.to_canonical_json().as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PipelineOptions {
    /// Plan between every consecutive pair of task locations.
    pub plan: bool,
}

/// Synthesis, composition and optional planning for one scenario.
///
/// A search that finds nothing still yields a bundle (with no table); the
/// caller decides how to report it.
pub fn run_pipeline(scenario: &ScenarioFile, opts: PipelineOptions) -> Result<ResultBundle> {
    let cfg = scenario.synthesis_config()?;
    let synthesis = run_search(&cfg)?;
    let table = synthesis.table().cloned();
    let (composition, twist_residual) = match &table {
        Some(t) => {
            let (c, r) = compose(t, &scenario.compose)?;
            (Some(c), Some(r))
        }
        None => (None, None),
    };
    let mut bundle = ResultBundle {
        euler_order: euler_order(),
        provenance: Provenance {
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            config_hash: config_hash(scenario),
            seeds: scenario.seeds,
        },
        scenario: scenario.clone(),
        synthesis,
        table,
        composition,
        twist_residual,
        paths: Vec::new(),
    };
    if opts.plan && bundle.solved() {
        for from in 1..scenario.tsls.len() {
            let path = plan_between(&bundle, from, from + 1, None)?;
            bundle.paths.push(PathRecord { from, to: from + 1, path });
        }
    }
    Ok(bundle)
}

/// Joint path between task locations `from` and `to` (1-based) of a solved
/// bundle. `seed` overrides the scenario's planner seed.
pub fn plan_between(bundle: &ResultBundle, from: usize, to: usize, seed: Option<u64>) -> Result<JointPath> {
    let table = bundle.require_table()?;
    let len = table.locations();
    for i in [from, to] {
        if i == 0 || i > len {
            return Err(Error::IndexOutOfRange { index: i, len });
        }
    }
    let scenario = &bundle.scenario;
    let cfg = PlannerConfig { seed: seed.unwrap_or(scenario.seeds.planner), ..scenario.planner };
    let limits = scenario.joint_limits(table.dof())?;
    let scene = scenario.scene()?;
    plan_joint_path(table, &scene, &table.joints(from - 1)?, &table.joints(to - 1)?, &limits, &cfg)
}

pub fn parse_bundle(text: &str, source: &str) -> Result<ResultBundle> {
    let bundle: ResultBundle = scenario::parse_json(text, source)?;
    bundle.scenario.validate()?;
    Ok(bundle)
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ResultBundle> {
    let path = path.as_ref();
    parse_bundle(&std::fs::read_to_string(path)?, &path.display().to_string())
}

/// DH rows (joint values optional) plus mapping options, as read by the
/// `compose` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhDocument {
    #[serde(default = "euler_order")]
    pub euler_order: String,
    pub rows: Vec<DhRow>,
    /// One list per joint, one entry per location.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub theta: Vec<Vec<f64>>,
    #[serde(default)]
    pub compose: ComposeOptions,
}

impl DhDocument {
    pub fn table(&self) -> Result<DhTable> {
        if self.euler_order != EULER_ORDER {
            return Err(Error::Validation(vec![format!("euler_order must be {EULER_ORDER:?}")]));
        }
        if self.rows.is_empty() {
            return Err(Error::Validation(vec!["rows: at least one row is required".into()]));
        }
        if self.theta.is_empty() {
            return DhTable::from_joint_sets(self.rows.clone(), &[vec![0.0; self.rows.len()]]);
        }
        let table: DhTable = serde_json::from_value(serde_json::json!({ "rows": self.rows, "theta": self.theta }))
            .map_err(|e| Error::Validation(vec![format!("theta: {e}")]))?;
        Ok(table)
    }
}

pub fn parse_dh_document(text: &str, source: &str) -> Result<DhDocument> {
    scenario::parse_json(text, source)
}
