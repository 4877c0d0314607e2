//! Modular joint library and the mapping from a DH table to a sequence of
//! modular units.
//!
//! Each joint becomes one unit `H^k` or `L^k`. The unit type `k` records the
//! input port used and whether a link module hangs off the output:
//!
//! | type | input port | link at output |
//! |------|------------|----------------|
//! | 1    | Ip1        | no             |
//! | 2    | Ip2        | no             |
//! | 3    | Ip1        | yes            |
//! | 4    | Ip2        | yes            |
//!
//! Twists on link-less joints are set on the pivot slot (10 degree grid,
//! +/-90 degrees); twists on joints carrying a link use the connection ports
//! (30 degree grid).

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::DhTable;

pub const GRAVITY: f64 = 9.81;
pub const PIVOT_STEP_DEG: i32 = 10;
pub const PIVOT_LIMIT_DEG: i32 = 90;
pub const PORT_STEP_DEG: i32 = 30;
/// Longest run of same-variant modules (carry capacity + 1).
pub const MAX_RUN: usize = 4;
/// Longest chain the library can assemble: a full heavy run then a full
/// light run.
pub const MAX_SERIAL_DOF: usize = 2 * MAX_RUN;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorSpec {
    pub name: String,
    /// kg
    pub mass: f64,
    pub no_load_speed_rpm: f64,
    /// N m
    pub nominal_torque: f64,
    /// N m
    pub max_torque: f64,
    /// How many modules of its own kind the actuator can carry.
    pub epsilon: u32,
}

impl ActuatorSpec {
    /// Heavy-variant actuator.
    pub fn ka75_plus() -> Self {
        Self {
            name: "KA-75+".into(),
            mass: 0.57,
            no_load_speed_rpm: 12.2,
            nominal_torque: 12.0,
            max_torque: 30.5,
            epsilon: 3,
        }
    }

    /// Light-variant actuator.
    pub fn ka58() -> Self {
        Self {
            name: "KA-58".into(),
            mass: 0.357,
            no_load_speed_rpm: 20.3,
            nominal_torque: 3.6,
            max_torque: 6.8,
            epsilon: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.mass, self.no_load_speed_rpm, self.nominal_torque, self.max_torque]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !ok || self.epsilon < 1 {
            return Err(Error::InvalidArgument(format!("actuator {} has non-positive ratings", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    H,
    L,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::H => "H",
            Variant::L => "L",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum UnitType {
    Ip1 = 1,
    Ip2 = 2,
    Ip1Link = 3,
    Ip2Link = 4,
}

impl UnitType {
    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn has_link(self) -> bool {
        matches!(self, UnitType::Ip1Link | UnitType::Ip2Link)
    }

    fn from_parts(second_port: bool, link: bool) -> Self {
        match (second_port, link) {
            (false, false) => UnitType::Ip1,
            (true, false) => UnitType::Ip2,
            (false, true) => UnitType::Ip1Link,
            (true, true) => UnitType::Ip2Link,
        }
    }
}

impl TryFrom<u8> for UnitType {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(UnitType::Ip1),
            2 => Ok(UnitType::Ip2),
            3 => Ok(UnitType::Ip1Link),
            4 => Ok(UnitType::Ip2Link),
            _ => Err(format!("unit type must be 1-4, got {v}")),
        }
    }
}

impl From<UnitType> for u8 {
    fn from(t: UnitType) -> u8 {
        t.number()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwistMode {
    None,
    Pivot,
    Port,
}

/// Knobs of the DH-to-unit rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingRules {
    /// Lengths (m) and twists (rad) at or below this count as zero.
    pub zero_tolerance: f64,
    /// A non-base joint enters through Ip2 when the preceding twist magnitude
    /// reaches this value (rad).
    pub ip2_twist_threshold: f64,
}

impl Default for MappingRules {
    fn default() -> Self {
        Self { zero_tolerance: 1e-6, ip2_twist_threshold: 45f64.to_radians() }
    }
}

/// Unit type and twist mechanism for every row, base first.
pub fn dh_to_units(table: &DhTable, rules: &MappingRules) -> Result<Vec<(UnitType, TwistMode)>> {
    let zero = |v: f64| v.abs() <= rules.zero_tolerance;
    let rows = table.rows();
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let link = !zero(row.a);
            let second_port = i > 0 && rows[i - 1].alpha.abs() >= rules.ip2_twist_threshold;
            let unit = UnitType::from_parts(second_port, link);
            let mode = match (link, zero(row.alpha)) {
                (_, true) => TwistMode::None,
                (false, false) => TwistMode::Pivot,
                (true, false) => TwistMode::Port,
            };
            if mode == TwistMode::Pivot && row.alpha.abs().to_degrees() > PIVOT_LIMIT_DEG as f64 + 1e-9 {
                return Err(Error::UnrepresentableTwist {
                    joint: i,
                    reason: format!("{:.2} deg exceeds the +/-90 deg pivot range", row.alpha.to_degrees()),
                });
            }
            Ok((unit, mode))
        })
        .collect()
}

/// Nearest multiple of `step`, ties toward zero.
pub fn quantize_to_grid(value: f64, step: f64) -> f64 {
    let q = (value / step).abs();
    let k = if q - q.floor() > 0.5 { q.ceil() } else { q.floor() };
    (k * step).copysign(value) + 0.0
}

fn quantize_deg(rad: f64, step_deg: i32) -> i32 {
    quantize_to_grid(rad.to_degrees(), step_deg as f64) as i32
}

/// Optional discrete link-length catalog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkCatalog {
    /// Grid spacing of available link lengths (m).
    pub step: f64,
}

/// Variant-independent part of a unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitLayout {
    #[serde(rename = "type")]
    pub unit_type: UnitType,
    pub twist_mode: TwistMode,
    pub pivot_twist_deg: i32,
    pub port_twist_deg: i32,
    /// Link module length (m), zero for types 1 and 2.
    pub link_length: f64,
    /// Offset along the joint axis (m) taken up by the unit stack.
    pub joint_offset: f64,
}

impl UnitLayout {
    /// Twist actually realized by the hardware (rad).
    pub fn realized_twist(&self) -> f64 {
        ((self.pivot_twist_deg + self.port_twist_deg) as f64).to_radians()
    }
}

/// Per-joint quantization error.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TwistResidual {
    /// |alpha - realized twist| (rad).
    pub twist: Vec<f64>,
    /// |a - realized link length| (m).
    pub link: Vec<f64>,
}

/// Snaps twists onto their mechanism's grid and link lengths onto the
/// catalog, if any.
pub fn quantize_twists(
    table: &DhTable,
    units: &[(UnitType, TwistMode)],
    catalog: Option<&LinkCatalog>,
) -> Result<(Vec<UnitLayout>, TwistResidual)> {
    if units.len() != table.dof() {
        return Err(Error::DimensionMismatch { expected: table.dof(), actual: units.len() });
    }
    let mut layouts = Vec::with_capacity(units.len());
    let mut residual = TwistResidual::default();
    for (row, &(unit_type, twist_mode)) in table.rows().iter().zip(units) {
        let (pivot, port) = match twist_mode {
            TwistMode::None => (0, 0),
            TwistMode::Pivot => (quantize_deg(row.alpha, PIVOT_STEP_DEG).clamp(-PIVOT_LIMIT_DEG, PIVOT_LIMIT_DEG), 0),
            TwistMode::Port => (0, quantize_deg(row.alpha, PORT_STEP_DEG)),
        };
        let link_length = if unit_type.has_link() {
            match catalog {
                Some(c) => quantize_to_grid(row.a, c.step).max(c.step),
                None => row.a,
            }
        } else {
            0.0
        };
        let layout =
            UnitLayout { unit_type, twist_mode, pivot_twist_deg: pivot, port_twist_deg: port, link_length, joint_offset: row.d };
        residual.twist.push((row.alpha - layout.realized_twist()).abs());
        residual.link.push((row.a - link_length).abs());
        layouts.push(layout);
    }
    Ok((layouts, residual))
}

fn check_domain(n: usize) -> Result<()> {
    if !(2..=MAX_SERIAL_DOF).contains(&n) {
        return Err(Error::DofOutOfRange(n, 2, MAX_SERIAL_DOF));
    }
    Ok(())
}

/// Number of heavy/light splits of an `n`-joint chain: `5 - |n - 4|`.
pub fn count_combinations(n: usize) -> Result<usize> {
    check_domain(n)?;
    Ok(5 - n.abs_diff(4))
}

/// All `H^h L^(n-h)` sequences with both runs within the limit, most heavy
/// modules first.
pub(crate) fn variant_sequences(n: usize, max_run: usize) -> Vec<Vec<Variant>> {
    let lo = n.saturating_sub(max_run);
    let hi = n.min(max_run);
    if lo > hi {
        return Vec::new();
    }
    (lo..=hi)
        .rev()
        .map(|h| std::iter::repeat_n(Variant::H, h).chain(std::iter::repeat_n(Variant::L, n - h)).collect())
        .collect()
}

pub fn enumerate_variant_combos(n: usize) -> Result<Vec<Vec<Variant>>> {
    check_domain(n)?;
    Ok(variant_sequences(n, MAX_RUN))
}

pub fn combo_label(combo: &[Variant]) -> String {
    combo.iter().map(Variant::to_string).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModuleUnit {
    pub variant: Variant,
    #[serde(flatten)]
    pub layout: UnitLayout,
}

/// Ordered modular units, base first, with the static torque check that
/// picked the variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub units: Vec<ModuleUnit>,
    /// Worst-posture gravity torque at each joint (N m).
    pub joint_torques: Vec<f64>,
    /// Every joint torque within its actuator's nominal rating.
    pub torque_feasible: bool,
}

impl Composition {
    /// e.g. `H1-L4-L4`.
    pub fn label(&self) -> String {
        self.units.iter().map(|u| format!("{}{}", u.variant, u.layout.unit_type.number())).collect::<Vec<_>>().join("-")
    }

    pub fn variants(&self) -> Vec<Variant> {
        self.units.iter().map(|u| u.variant).collect()
    }

    /// Assembly rules: heavy base entering through Ip1, no heavy module after
    /// a light one, bounded runs, and consistent per-unit hardware settings.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        match self.units.first() {
            None => problems.push("composition is empty".to_string()),
            Some(base) => {
                if base.variant != Variant::H {
                    problems.push("base unit must be heavy".into());
                }
                if !matches!(base.layout.unit_type, UnitType::Ip1 | UnitType::Ip1Link) {
                    problems.push("base unit must be type 1 or 3".into());
                }
            }
        }
        if self.units.windows(2).any(|w| w[0].variant == Variant::L && w[1].variant == Variant::H) {
            problems.push("heavy module after a light one".into());
        }
        for v in [Variant::H, Variant::L] {
            let count = self.units.iter().filter(|u| u.variant == v).count();
            if count > MAX_RUN {
                problems.push(format!("{count} {v} modules exceed the run limit {MAX_RUN}"));
            }
        }
        for (i, u) in self.units.iter().enumerate() {
            let l = &u.layout;
            if l.unit_type.has_link() != (l.link_length > 0.0) {
                problems.push(format!("unit {i}: link length {} inconsistent with type {}", l.link_length, l.unit_type.number()));
            }
            if l.pivot_twist_deg % PIVOT_STEP_DEG != 0 || l.pivot_twist_deg.abs() > PIVOT_LIMIT_DEG {
                problems.push(format!("unit {i}: pivot twist {} off grid", l.pivot_twist_deg));
            }
            if l.port_twist_deg % PORT_STEP_DEG != 0 {
                problems.push(format!("unit {i}: port twist {} off grid", l.port_twist_deg));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// Parameters of the static torque heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TorqueModel {
    /// Link-module mass per meter (kg/m).
    pub link_mass_per_meter: f64,
    pub gravity: f64,
}

impl Default for TorqueModel {
    fn default() -> Self {
        Self { link_mass_per_meter: 0.1 / 0.3, gravity: GRAVITY }
    }
}

/// Gravity torque at every joint with the whole distal chain stretched
/// horizontally.
pub fn worst_case_torques(
    table: &DhTable,
    layouts: &[UnitLayout],
    combo: &[Variant],
    heavy: &ActuatorSpec,
    light: &ActuatorSpec,
    payload: f64,
    model: &TorqueModel,
) -> Vec<f64> {
    let n = combo.len();
    let seg: Vec<f64> = table.rows().iter().map(|r| r.a.hypot(r.d)).collect();
    let act_mass = |v: Variant| if v == Variant::H { heavy.mass } else { light.mass };
    (0..n)
        .map(|i| {
            let mut moment = 0.0;
            let mut reach = 0.0;
            for k in i..n {
                let link_mass = model.link_mass_per_meter * layouts[k].link_length;
                moment += link_mass * (reach + seg[k] / 2.0);
                reach += seg[k];
                if k + 1 < n {
                    moment += act_mass(combo[k + 1]) * reach;
                }
            }
            moment += payload * reach;
            moment * model.gravity
        })
        .collect()
}

struct Candidate {
    combo: Vec<Variant>,
    torques: Vec<f64>,
    feasible: bool,
    margin: f64,
    mass: f64,
    light_count: usize,
}

fn tie_break(a: &Candidate, b: &Candidate) -> Ordering {
    b.light_count.cmp(&a.light_count).then_with(|| a.combo.cmp(&b.combo))
}

/// Picks the heavy/light split: the lightest combo whose joints all stay
/// within nominal torque, or the one with the largest torque margin
/// (flagged infeasible) when none qualifies. Combos that violate the
/// assembly rules are skipped.
#[allow(clippy::too_many_arguments)]
pub fn select_variant_combo(
    table: &DhTable,
    layouts: &[UnitLayout],
    combos: &[Vec<Variant>],
    heavy: &ActuatorSpec,
    light: &ActuatorSpec,
    payload: f64,
    model: &TorqueModel,
) -> Result<Composition> {
    if layouts.len() != table.dof() {
        return Err(Error::DimensionMismatch { expected: table.dof(), actual: layouts.len() });
    }
    let candidates: Vec<Candidate> = combos
        .iter()
        .filter(|c| c.len() == layouts.len() && c.first() == Some(&Variant::H))
        .filter(|c| !c.windows(2).any(|w| w[0] == Variant::L && w[1] == Variant::H))
        .map(|combo| {
            let torques = worst_case_torques(table, layouts, combo, heavy, light, payload, model);
            let rating = |v: Variant| if v == Variant::H { heavy.nominal_torque } else { light.nominal_torque };
            let margin = combo.iter().zip(&torques).map(|(v, t)| rating(*v) - t).fold(f64::INFINITY, f64::min);
            let links: f64 = layouts.iter().map(|l| model.link_mass_per_meter * l.link_length).sum();
            let mass = combo.iter().map(|v| if *v == Variant::H { heavy.mass } else { light.mass }).sum::<f64>() + links;
            Candidate {
                combo: combo.clone(),
                torques,
                feasible: margin >= 0.0,
                margin,
                mass,
                light_count: combo.iter().filter(|v| **v == Variant::L).count(),
            }
        })
        .collect();
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no combination satisfies the assembly rules".into()));
    }
    let chosen = if candidates.iter().any(|c| c.feasible) {
        candidates
            .iter()
            .filter(|c| c.feasible)
            .min_by(|a, b| a.mass.total_cmp(&b.mass).then_with(|| tie_break(a, b)))
    } else {
        candidates.iter().min_by(|a, b| b.margin.total_cmp(&a.margin).then_with(|| tie_break(a, b)))
    }
    .expect("non-empty candidate list");

    let units = chosen.combo.iter().zip(layouts).map(|(&variant, &layout)| ModuleUnit { variant, layout }).collect();
    Ok(Composition { units, joint_torques: chosen.torques.clone(), torque_feasible: chosen.feasible })
}

/// Inputs to [`compose`] beyond the DH table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComposeOptions {
    pub rules: MappingRules,
    pub catalog: Option<LinkCatalog>,
    pub heavy: ActuatorSpec,
    pub light: ActuatorSpec,
    /// kg at the end frame.
    pub payload: f64,
    pub torque: TorqueModel,
}

impl Default for ComposeOptions {
    fn default() -> Self {
        Self {
            rules: MappingRules::default(),
            catalog: None,
            heavy: ActuatorSpec::ka75_plus(),
            light: ActuatorSpec::ka58(),
            payload: 0.0,
            torque: TorqueModel::default(),
        }
    }
}

/// DH table -> unit types -> quantized layouts -> heavy/light selection.
pub fn compose(table: &DhTable, opts: &ComposeOptions) -> Result<(Composition, TwistResidual)> {
    let n = table.dof();
    if n > MAX_SERIAL_DOF {
        return Err(Error::DofOutOfRange(n, 1, MAX_SERIAL_DOF));
    }
    opts.heavy.validate()?;
    opts.light.validate()?;
    let units = dh_to_units(table, &opts.rules)?;
    let (layouts, residual) = quantize_twists(table, &units, opts.catalog.as_ref())?;
    let combos = variant_sequences(n, MAX_RUN);
    let composition = select_variant_combo(table, &layouts, &combos, &opts.heavy, &opts.light, opts.payload, &opts.torque)?;
    composition.validate()?;
    Ok((composition, residual))
}
