//! URDF export and a small reader for the subset the exporter writes.
//!
//! Joint `i` sits at the end frame of row `i - 1` evaluated at zero joint
//! angle (the first joint at the base origin) and turns about its local z
//! axis, so composing `origin * Rz(q)` along the chain reproduces the DH
//! product. A fixed `tool_joint` carries the last row's offset to the end
//! frame.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3};
use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{local_link_box, DEFAULT_LINK_WIDTH};
use crate::kinematics::{dh_matrix, euler_zyx, DhRow, DhTable};
use crate::modlib::{ActuatorSpec, Composition, TorqueModel, Variant};
use crate::planner::JointLimits;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrdfOptions {
    pub robot_name: String,
    pub link_width: f64,
    pub heavy: ActuatorSpec,
    pub light: ActuatorSpec,
    pub torque: TorqueModel,
    /// `None` uses `[-pi, pi]` on every joint.
    pub limits: Option<JointLimits>,
}

impl Default for UrdfOptions {
    fn default() -> Self {
        Self {
            robot_name: "modsynth_arm".into(),
            link_width: DEFAULT_LINK_WIDTH,
            heavy: ActuatorSpec::ka75_plus(),
            light: ActuatorSpec::ka58(),
            torque: TorqueModel::default(),
            limits: None,
        }
    }
}

fn fmt_vec(v: [f64; 3]) -> String {
    // `{:?}` on f64 prints the shortest text that reads back to the same bits.
    format!("{:?} {:?} {:?}", v[0] + 0.0, v[1] + 0.0, v[2] + 0.0)
}

fn origin_tag(translation: Vector3<f64>, rotation: &Matrix3<f64>) -> String {
    let [yaw, pitch, roll] = euler_zyx(rotation);
    format!(r#"<origin xyz="{}" rpy="{}"/>"#, fmt_vec(translation.into()), fmt_vec([roll, pitch, yaw]))
}

fn transform_origin_tag(t: &Matrix4<f64>) -> String {
    let r: Matrix3<f64> = t.fixed_view::<3, 3>(0, 0).into_owned();
    origin_tag(Vector3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)]), &r)
}

/// Solid-box inertia about the box center.
fn box_inertia(mass: f64, size: Vector3<f64>) -> [f64; 3] {
    let (x2, y2, z2) = (size.x * size.x, size.y * size.y, size.z * size.z);
    [mass * (y2 + z2) / 12.0, mass * (x2 + z2) / 12.0, mass * (x2 + y2) / 12.0]
}

/// URDF text for `table` realized by `composition`.
pub fn export_urdf(table: &DhTable, composition: &Composition, opts: &UrdfOptions) -> Result<String> {
    let rows = table.rows();
    let n = rows.len();
    if composition.units.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: composition.units.len() });
    }
    let limits = match &opts.limits {
        Some(l) if l.len() != n => return Err(Error::DimensionMismatch { expected: n, actual: l.len() }),
        Some(l) => l.clone(),
        None => JointLimits::uniform(n, -PI, PI)?,
    };
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0"?>"#);
    let _ = writeln!(out, r#"<robot name="{}">"#, opts.robot_name);
    let _ = writeln!(out, r#"  <link name="base_link"/>"#);
    for (i, (row, unit)) in rows.iter().zip(&composition.units).enumerate() {
        let actuator = match unit.variant {
            Variant::H => &opts.heavy,
            Variant::L => &opts.light,
        };
        let parent = if i == 0 { "base_link".to_string() } else { format!("link_{i}") };
        let origin = if i == 0 { Matrix4::identity() } else { dh_matrix(&rows[i - 1], 0.0) };
        let velocity = actuator.no_load_speed_rpm * 2.0 * PI / 60.0;
        let _ = writeln!(out, r#"  <joint name="joint_{}" type="revolute">"#, i + 1);
        let _ = writeln!(out, r#"    <parent link="{parent}"/>"#);
        let _ = writeln!(out, r#"    <child link="link_{}"/>"#, i + 1);
        let _ = writeln!(out, "    {}", transform_origin_tag(&origin));
        let _ = writeln!(out, r#"    <axis xyz="0 0 1"/>"#);
        let _ = writeln!(
            out,
            r#"    <limit lower="{:?}" upper="{:?}" effort="{:?}" velocity="{:?}"/>"#,
            limits.lower[i], limits.upper[i], actuator.max_torque, velocity
        );
        let _ = writeln!(out, "  </joint>");

        let (center, axes, half) = local_link_box(row, opts.link_width);
        let size = half * 2.0;
        let mass = actuator.mass + opts.torque.link_mass_per_meter * unit.layout.link_length;
        let [ixx, iyy, izz] = box_inertia(mass, size);
        let geometry = format!(r#"<geometry><box size="{}"/></geometry>"#, fmt_vec(size.into()));
        let pose = origin_tag(center, &axes);
        let _ = writeln!(out, r#"  <link name="link_{}">"#, i + 1);
        let _ = writeln!(out, "    <inertial>");
        let _ = writeln!(out, "      {pose}");
        let _ = writeln!(out, r#"      <mass value="{mass:?}"/>"#);
        let _ = writeln!(out, r#"      <inertia ixx="{ixx:?}" ixy="0" ixz="0" iyy="{iyy:?}" iyz="0" izz="{izz:?}"/>"#);
        let _ = writeln!(out, "    </inertial>");
        let _ = writeln!(out, "    <visual>{pose}{geometry}</visual>");
        let _ = writeln!(out, "    <collision>{pose}{geometry}</collision>");
        let _ = writeln!(out, "  </link>");
    }
    let _ = writeln!(out, r#"  <joint name="tool_joint" type="fixed">"#);
    let _ = writeln!(out, r#"    <parent link="link_{n}"/>"#);
    let _ = writeln!(out, r#"    <child link="tool0"/>"#);
    if let Some(last) = rows.last() {
        let _ = writeln!(out, "    {}", transform_origin_tag(&dh_matrix(last, 0.0)));
    }
    let _ = writeln!(out, "  </joint>");
    let _ = writeln!(out, r#"  <link name="tool0"/>"#);
    let _ = writeln!(out, "</robot>");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrdfJoint {
    pub name: String,
    pub kind: String,
    pub parent: String,
    pub child: String,
    pub xyz: [f64; 3],
    pub rpy: [f64; 3],
    pub axis: [f64; 3],
    pub limits: Option<[f64; 2]>,
}

impl UrdfJoint {
    pub fn origin(&self) -> Matrix4<f64> {
        let [r, p, y] = self.rpy;
        let rot = Rotation3::from_euler_angles(r, p, y);
        let mut t = rot.to_homogeneous();
        t[(0, 3)] = self.xyz[0];
        t[(1, 3)] = self.xyz[1];
        t[(2, 3)] = self.xyz[2];
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrdfBox {
    pub xyz: [f64; 3],
    pub rpy: [f64; 3],
    pub size: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UrdfLink {
    pub name: String,
    pub mass: Option<f64>,
    pub collision: Option<UrdfBox>,
}

/// Joints and links read back from URDF text.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UrdfModel {
    pub name: String,
    pub links: Vec<UrdfLink>,
    pub joints: Vec<UrdfJoint>,
}

fn parse_triple(s: &str, what: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = s
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{what}: {e}"))))
        .collect::<Result<_>>()?;
    v.try_into().map_err(|_| Error::Parse(format!("{what}: expected 3 numbers in {s:?}")))
}

fn attr(e: &quick_xml::events::BytesStart, key: &str) -> Result<Option<String>> {
    for a in e.attributes() {
        let a = a.map_err(|err| Error::Parse(err.to_string()))?;
        if a.key.as_ref() == key.as_bytes() {
            let v = a.unescape_value().map_err(|err| Error::Parse(err.to_string()))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

fn required(e: &quick_xml::events::BytesStart, key: &str) -> Result<String> {
    attr(e, key)?.ok_or_else(|| Error::Parse(format!("<{}> lacks {key}", String::from_utf8_lossy(e.name().as_ref()))))
}

#[derive(PartialEq)]
enum Section {
    None,
    Inertial,
    Visual,
    Collision,
}

/// Reads robot name, links (mass, collision box) and joints.
pub fn parse_urdf(text: &str) -> Result<UrdfModel> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut model = UrdfModel::default();
    let mut joint: Option<UrdfJoint> = None;
    let mut link: Option<UrdfLink> = None;
    let mut section = Section::None;
    let mut pending_origin = ([0.0; 3], [0.0; 3]);
    loop {
        let event = reader.read_event().map_err(|e| Error::Parse(format!("URDF at byte {}: {e}", reader.buffer_position())))?;
        let (e, closes) = match &event {
            Event::Start(e) => (e.clone(), false),
            Event::Empty(e) => (e.clone(), true),
            Event::End(end) => {
                match end.name().as_ref() {
                    b"joint" => model.joints.extend(joint.take()),
                    b"link" => model.links.extend(link.take()),
                    b"inertial" | b"visual" | b"collision" => section = Section::None,
                    _ => {}
                }
                continue;
            }
            Event::Eof => break,
            _ => continue,
        };
        match e.name().as_ref() {
            b"robot" => model.name = attr(&e, "name")?.unwrap_or_default(),
            b"joint" if joint.is_none() && link.is_none() => {
                let j = UrdfJoint {
                    name: required(&e, "name")?,
                    kind: required(&e, "type")?,
                    parent: String::new(),
                    child: String::new(),
                    xyz: [0.0; 3],
                    rpy: [0.0; 3],
                    axis: [1.0, 0.0, 0.0],
                    limits: None,
                };
                if closes {
                    model.joints.push(j);
                } else {
                    joint = Some(j);
                }
            }
            b"link" if joint.is_none() && link.is_none() => {
                let l = UrdfLink { name: required(&e, "name")?, ..Default::default() };
                if closes {
                    model.links.push(l);
                } else {
                    link = Some(l);
                }
            }
            b"parent" => {
                if let Some(j) = joint.as_mut() {
                    j.parent = required(&e, "link")?;
                }
            }
            b"child" => {
                if let Some(j) = joint.as_mut() {
                    j.child = required(&e, "link")?;
                }
            }
            b"axis" => {
                if let Some(j) = joint.as_mut() {
                    j.axis = parse_triple(&required(&e, "xyz")?, "axis")?;
                }
            }
            b"limit" => {
                if let Some(j) = joint.as_mut() {
                    let lo = attr(&e, "lower")?.map(|s| s.parse::<f64>()).transpose();
                    let hi = attr(&e, "upper")?.map(|s| s.parse::<f64>()).transpose();
                    if let (Ok(Some(lo)), Ok(Some(hi))) = (lo, hi) {
                        j.limits = Some([lo, hi]);
                    }
                }
            }
            b"origin" => {
                let xyz = attr(&e, "xyz")?.map(|s| parse_triple(&s, "origin xyz")).transpose()?.unwrap_or([0.0; 3]);
                let rpy = attr(&e, "rpy")?.map(|s| parse_triple(&s, "origin rpy")).transpose()?.unwrap_or([0.0; 3]);
                if let Some(j) = joint.as_mut() {
                    j.xyz = xyz;
                    j.rpy = rpy;
                } else {
                    pending_origin = (xyz, rpy);
                }
            }
            b"inertial" => section = Section::Inertial,
            b"visual" => {
                section = Section::Visual;
                pending_origin = ([0.0; 3], [0.0; 3]);
            }
            b"collision" => {
                section = Section::Collision;
                pending_origin = ([0.0; 3], [0.0; 3]);
            }
            b"mass" if section == Section::Inertial => {
                if let Some(l) = link.as_mut() {
                    l.mass = Some(required(&e, "value")?.parse().map_err(|err| Error::Parse(format!("mass: {err}")))?);
                }
            }
            b"box" if section == Section::Collision => {
                if let Some(l) = link.as_mut() {
                    let size = parse_triple(&required(&e, "size")?, "box size")?;
                    l.collision = Some(UrdfBox { xyz: pending_origin.0, rpy: pending_origin.1, size });
                }
            }
            _ => {}
        }
    }
    Ok(model)
}

impl UrdfModel {
    /// Joints from the root link outward, following the single chain.
    pub fn chain(&self) -> Result<Vec<&UrdfJoint>> {
        let roots: Vec<&UrdfLink> =
            self.links.iter().filter(|l| !self.joints.iter().any(|j| j.child == l.name)).collect();
        let [root] = roots.as_slice() else {
            return Err(Error::Parse(format!("expected one root link, found {}", roots.len())));
        };
        let mut chain = Vec::new();
        let mut at = root.name.as_str();
        while let Some(j) = self.joints.iter().find(|j| j.parent == at) {
            chain.push(j);
            at = &j.child;
            if chain.len() > self.joints.len() {
                return Err(Error::Parse("joint graph has a cycle".into()));
            }
        }
        Ok(chain)
    }

    /// Tip transform with `q` applied to the movable joints in chain order.
    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Matrix4<f64>> {
        let chain = self.chain()?;
        let movable = chain.iter().filter(|j| j.kind != "fixed").count();
        if movable != q.len() {
            return Err(Error::DimensionMismatch { expected: movable, actual: q.len() });
        }
        let mut t = Matrix4::identity();
        let mut k = 0;
        for j in chain {
            t *= j.origin();
            if j.kind != "fixed" {
                let axis = Unit::new_normalize(Vector3::from(j.axis));
                t *= Rotation3::from_axis_angle(&axis, q[k]).to_homogeneous();
                k += 1;
            }
        }
        Ok(t)
    }
}

/// DH rows back from the joint origins of an exported model (for diagnostics).
pub fn rows_from_urdf(model: &UrdfModel) -> Result<Vec<DhRow>> {
    let chain = model.chain()?;
    Ok(chain
        .iter()
        .skip(1)
        .map(|j| DhRow::new(j.xyz[0], j.rpy[0], j.xyz[2]))
        .collect())
}
