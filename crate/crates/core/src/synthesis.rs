//! Outer search over candidate DoF values.
//!
//! The search walks a sorted candidate array with the classic
//! `lo = 0, hi = k - 1, mid = (lo + hi) / 2` binary search: a successful
//! probe (objective within threshold and collision-free) moves `hi` below
//! `mid`, a failed one moves `lo` above it. The smallest successful probe is
//! kept and returned.

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Scene;
use crate::kinematics::{DhTable, TaskSpec};
use crate::modlib::MAX_SERIAL_DOF;
use crate::solver::{solve_inner, BoundRanges, SolveOutcome, SolverConfig};

/// Default objective acceptance threshold.
pub const DEFAULT_THRESHOLD: f64 = 1e-3;

/// Strictly increasing candidate DoF values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct DofArray(Vec<usize>);

impl DofArray {
    pub fn new(values: Vec<usize>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("DoF array is empty".into()));
        }
        if values[0] == 0 {
            return Err(Error::InvalidArgument("DoF values must be >= 1".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!("DoF array {values:?} is not strictly increasing")));
        }
        if let Some(&max) = values.last().filter(|&&m| m > MAX_SERIAL_DOF) {
            return Err(Error::DofOutOfRange(max, 1, MAX_SERIAL_DOF));
        }
        Ok(Self(values))
    }

    /// Unchecked upper limit, for search simulations over longer arrays.
    pub fn unbounded(values: Vec<usize>) -> Result<Self> {
        if values.is_empty() || values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!("bad DoF array {values:?}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }
}

impl Default for DofArray {
    fn default() -> Self {
        Self((2..=8).collect())
    }
}

impl TryFrom<Vec<usize>> for DofArray {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DofArray> for Vec<usize> {
    fn from(a: DofArray) -> Self {
        a.0
    }
}

/// What a probe reports back to the search.
#[derive(Debug, Clone)]
pub struct ProbeResult<O> {
    pub objective: f64,
    pub feasible: bool,
    pub outcome: O,
}

/// One probe as recorded in the trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub dof: usize,
    #[serde(with = "crate::float_serde")]
    pub objective: f64,
    pub feasible: bool,
    pub success: bool,
}

/// Search result for an arbitrary probe payload.
#[derive(Debug, Clone)]
pub struct SearchResult<O> {
    /// Smallest successful DoF, if any.
    pub n_star: Option<usize>,
    pub best: Option<O>,
    pub trace: Vec<ProbeRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    #[default]
    Binary,
    /// Ascending sweep that stops at the first success.
    Exhaustive,
}

fn record<O>(dof: usize, r: &ProbeResult<O>, threshold: f64) -> (ProbeRecord, bool) {
    let success = r.feasible && r.objective <= threshold;
    (ProbeRecord { dof, objective: r.objective, feasible: r.feasible, success }, success)
}

/// Binary search over `dofs` using `probe` as the inner problem.
pub fn binary_search_dof<O, F>(dofs: &DofArray, threshold: f64, mut probe: F) -> Result<SearchResult<O>>
where
    F: FnMut(usize) -> Result<ProbeResult<O>>,
{
    let a = dofs.values();
    let mut trace = Vec::new();
    let mut best: Option<(usize, O)> = None;
    let (mut lo, mut hi) = (0_isize, a.len() as isize - 1);
    while lo <= hi {
        let mid = ((lo + hi) / 2) as usize;
        let n = a[mid];
        let result = probe(n)?;
        let (rec, success) = record(n, &result, threshold);
        info!("probe n={n}: f={:.3e} feasible={} -> {}", rec.objective, rec.feasible, if success { "ok" } else { "fail" });
        trace.push(rec);
        if success {
            if best.as_ref().is_none_or(|(m, _)| n < *m) {
                best = Some((n, result.outcome));
            }
            hi = mid as isize - 1;
        } else {
            lo = mid as isize + 1;
        }
    }
    let (n_star, best) = best.map_or((None, None), |(n, o)| (Some(n), Some(o)));
    Ok(SearchResult { n_star, best, trace })
}

/// Ascending sweep; stops at the first success.
pub fn exhaustive_search_dof<O, F>(dofs: &DofArray, threshold: f64, mut probe: F) -> Result<SearchResult<O>>
where
    F: FnMut(usize) -> Result<ProbeResult<O>>,
{
    let mut trace = Vec::new();
    for &n in dofs.values() {
        let result = probe(n)?;
        let (rec, success) = record(n, &result, threshold);
        trace.push(rec);
        if success {
            return Ok(SearchResult { n_star: Some(n), best: Some(result.outcome), trace });
        }
    }
    Ok(SearchResult { n_star: None, best: None, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    pub threshold: f64,
    pub dof_array: DofArray,
    pub mode: SearchMode,
    pub bounds: BoundRanges,
    pub solver: SolverConfig,
    pub scene: Scene,
    pub task: TaskSpec,
}

impl SynthesisConfig {
    pub fn new(task: TaskSpec, scene: Scene) -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            dof_array: DofArray::default(),
            mode: SearchMode::Binary,
            bounds: BoundRanges::default(),
            solver: SolverConfig::default(),
            scene,
            task,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::InvalidArgument(format!("threshold must be > 0, got {}", self.threshold)));
        }
        if self.task.is_empty() {
            return Err(Error::InvalidArgument("task has no locations".into()));
        }
        self.bounds.validate()?;
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub n_star: Option<usize>,
    pub outcome: Option<SolveOutcome>,
    pub trace: Vec<ProbeRecord>,
}

impl SynthesisResult {
    pub fn table(&self) -> Option<&DhTable> {
        self.outcome.as_ref().map(|o| &o.x_best)
    }
}

/// Runs the DoF search with the constrained fit as the probe. Returns a
/// result with `n_star = None` (and the full trace) when nothing succeeds.
pub fn run_search(cfg: &SynthesisConfig) -> Result<SynthesisResult> {
    cfg.validate()?;
    let solver = SolverConfig { stop_at: cfg.solver.stop_at.or(Some(cfg.threshold)), ..cfg.solver.clone() };
    let probe = |n: usize| {
        let bounds = cfg.bounds.expand(n, cfg.task.len());
        let outcome = solve_inner(n, &cfg.task, &cfg.scene, &bounds, &solver)?;
        Ok(ProbeResult { objective: outcome.f_best, feasible: outcome.feasible, outcome })
    };
    let search = match cfg.mode {
        SearchMode::Binary => binary_search_dof(&cfg.dof_array, cfg.threshold, probe)?,
        SearchMode::Exhaustive => exhaustive_search_dof(&cfg.dof_array, cfg.threshold, probe)?,
    };
    Ok(SynthesisResult { n_star: search.n_star, outcome: search.best, trace: search.trace })
}

/// Full synthesis; errors with [`Error::NoSolution`] when no DoF succeeds.
pub fn synthesize(cfg: &SynthesisConfig) -> Result<(SynthesisResult, DhTable)> {
    let result = run_search(cfg)?;
    match result.table().cloned() {
        Some(table) => Ok((result, table)),
        None => Err(Error::NoSolution),
    }
}
