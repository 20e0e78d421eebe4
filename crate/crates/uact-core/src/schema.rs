//! Action-layout descriptors for source datasets.
//!
//! A schema tells the ingest stage how to read one dataset's raw action
//! vectors: which indices belong to which arm, how the rotation block is
//! represented, how the gripper channel is scaled, and whether actions are
//! absolute target poses or per-step deltas. Descriptors are serialized as
//! single-line JSON; a registry file is one descriptor per line keyed by
//! dataset. Exact field semantics are frozen in `docs/FORMATS.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::Arm;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("schema parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("schema for dataset '{dataset}': {message}")]
    Invalid { dataset: String, message: String },
    #[error("duplicate schema for dataset '{0}'")]
    DuplicateDataset(String),
}

fn invalid(dataset: &str, message: impl Into<String>) -> SchemaError {
    SchemaError::Invalid {
        dataset: dataset.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationRepr {
    EulerXyz,
    EulerZyx,
    EulerZyz,
    QuatWxyz,
    QuatXyzw,
    Rotmat9,
    AxisAngle,
    /// The source did not document its rotation convention. Parseable, but
    /// every episode of the dataset is rejected downstream.
    Unspecified,
}

impl RotationRepr {
    /// Number of raw dims in the rotation block, `None` when unknown.
    pub fn arity(self) -> Option<usize> {
        match self {
            RotationRepr::EulerXyz
            | RotationRepr::EulerZyx
            | RotationRepr::EulerZyz
            | RotationRepr::AxisAngle => Some(3),
            RotationRepr::QuatWxyz | RotationRepr::QuatXyzw => Some(4),
            RotationRepr::Rotmat9 => Some(9),
            RotationRepr::Unspecified => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    Absolute,
    Delta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceFrame {
    Eef,
    Base,
}

/// Role of one raw action dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DimRole {
    /// Translation component, axis 0..3 (x, y, z).
    Trans(usize),
    /// Rotation-block component, position 0..9 within the block.
    Rot(usize),
    Gripper,
}

impl fmt::Display for DimRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DimRole::Trans(0) => write!(f, "trans_x"),
            DimRole::Trans(1) => write!(f, "trans_y"),
            DimRole::Trans(2) => write!(f, "trans_z"),
            DimRole::Trans(i) => write!(f, "trans_{i}"),
            DimRole::Rot(i) => write!(f, "rot_{i}"),
            DimRole::Gripper => write!(f, "gripper"),
        }
    }
}

impl std::str::FromStr for DimRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "trans_x" => return Ok(DimRole::Trans(0)),
            "trans_y" => return Ok(DimRole::Trans(1)),
            "trans_z" => return Ok(DimRole::Trans(2)),
            "gripper" => return Ok(DimRole::Gripper),
            _ => {}
        }
        if let Some(idx) = s.strip_prefix("rot_") {
            if let Ok(i) = idx.parse::<usize>() {
                if i < 9 {
                    return Ok(DimRole::Rot(i));
                }
            }
        }
        Err(format!("unknown dim role '{s}'"))
    }
}

impl Serialize for DimRole {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DimRole {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimSpec {
    pub index: usize,
    pub arm: Arm,
    pub role: DimRole,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSchemaDescriptor {
    pub dataset: String,
    pub arms: Vec<Arm>,
    pub rotation_repr: RotationRepr,
    pub mode: ActionMode,
    pub frame: ReferenceFrame,
    /// Raw `[lo, hi]` rescaled to `[0, 1]` on ingest.
    pub gripper_range: [f64; 2],
    /// Total raw action vector length; indices beyond the mapped dims are
    /// ignored payload.
    pub raw_dim: usize,
    pub dims: Vec<DimSpec>,
}

impl ActionSchemaDescriptor {
    /// True when the rotation convention is undocumented; such datasets are
    /// rejected by the cleaning pipeline.
    pub fn is_ambiguous(&self) -> bool {
        self.rotation_repr == RotationRepr::Unspecified
    }

    /// Mapped dim indices of one arm's role, in role order.
    pub fn arm_dims(&self, arm: Arm) -> ArmDims {
        let mut out = ArmDims::default();
        for d in &self.dims {
            if d.arm != arm {
                continue;
            }
            match d.role {
                DimRole::Trans(i) if i < 3 => out.trans[i] = Some(d.index),
                DimRole::Rot(i) if i < 9 => out.rot[i] = Some(d.index),
                DimRole::Gripper => out.gripper = Some(d.index),
                _ => {}
            }
        }
        out
    }

    /// Number of rotation dims mapped for `arm`.
    pub fn rot_len(&self, arm: Arm) -> usize {
        self.dims
            .iter()
            .filter(|d| d.arm == arm && matches!(d.role, DimRole::Rot(_)))
            .count()
    }

    fn validate(&self) -> Result<(), SchemaError> {
        let ds = &self.dataset;
        if ds.is_empty() {
            return Err(invalid(ds, "empty dataset name"));
        }
        if self.arms.is_empty() || self.arms.len() > 2 {
            return Err(invalid(ds, "arms must name one or two arms"));
        }
        if self.arms.len() == 2 && self.arms[0] == self.arms[1] {
            return Err(invalid(ds, "duplicate arm declaration"));
        }
        let [lo, hi] = self.gripper_range;
        if !lo.is_finite() || !hi.is_finite() || lo == hi {
            return Err(invalid(ds, "gripper_range must be finite with lo != hi"));
        }
        let mut seen = BTreeSet::new();
        for d in &self.dims {
            if d.index >= self.raw_dim {
                return Err(invalid(
                    ds,
                    format!("dim index {} out of range (raw_dim {})", d.index, self.raw_dim),
                ));
            }
            if !seen.insert(d.index) {
                return Err(invalid(ds, format!("duplicate dim index {}", d.index)));
            }
            if !self.arms.contains(&d.arm) {
                return Err(invalid(ds, format!("dim {} maps undeclared arm", d.index)));
            }
        }
        for &arm in &self.arms {
            let dims = self.arm_dims(arm);
            for (i, t) in dims.trans.iter().enumerate() {
                if t.is_none() {
                    return Err(invalid(ds, format!("{arm:?} arm missing trans axis {i}")));
                }
            }
            if dims.gripper.is_none() {
                return Err(invalid(ds, format!("{arm:?} arm missing gripper dim")));
            }
            let rot_len = self.rot_len(arm);
            let contiguous = dims.rot[..rot_len.min(9)].iter().all(Option::is_some);
            if !contiguous {
                return Err(invalid(
                    ds,
                    format!("{arm:?} arm rotation block is not contiguous from rot_0"),
                ));
            }
            match self.rotation_repr.arity() {
                Some(expected) if rot_len != expected => {
                    return Err(invalid(
                        ds,
                        format!(
                            "rotation-arity-mismatch: {arm:?} arm maps {rot_len} rot dims, {:?} needs {expected}",
                            self.rotation_repr
                        ),
                    ));
                }
                None if rot_len == 0 => {
                    return Err(invalid(ds, format!("{arm:?} arm maps no rotation dims")));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Resolved per-arm dim indices.
#[derive(Clone, Copy, Debug, Default)]
pub struct ArmDims {
    pub trans: [Option<usize>; 3],
    pub rot: [Option<usize>; 9],
    pub gripper: Option<usize>,
}

impl ArmDims {
    pub fn trans_indices(&self) -> [usize; 3] {
        [
            self.trans[0].unwrap(),
            self.trans[1].unwrap(),
            self.trans[2].unwrap(),
        ]
    }
}

/// Parses and validates one descriptor document.
pub fn parse_schema(text: &str) -> Result<ActionSchemaDescriptor, SchemaError> {
    let d: ActionSchemaDescriptor = serde_json::from_str(text)?;
    d.validate()?;
    Ok(d)
}

/// Canonical single-line JSON rendering; `parse_schema(render_schema(d))`
/// reproduces `d` exactly.
pub fn render_schema(d: &ActionSchemaDescriptor) -> String {
    serde_json::to_string(d).expect("descriptor serialization cannot fail")
}

/// Parses a registry file (one descriptor per line, blank lines ignored)
/// into a dataset-keyed map.
pub fn parse_schema_registry(
    text: &str,
) -> Result<BTreeMap<String, ActionSchemaDescriptor>, SchemaError> {
    let mut out = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let d = parse_schema(line)?;
        if out.contains_key(&d.dataset) {
            return Err(SchemaError::DuplicateDataset(d.dataset));
        }
        out.insert(d.dataset.clone(), d);
    }
    Ok(out)
}

/// A standard single-arm absolute layout used by tests and the synthetic
/// generator: `[x, y, z, qw, qx, qy, qz, gripper]`.
pub fn single_arm_quat_schema(dataset: &str, gripper_hi: f64) -> ActionSchemaDescriptor {
    let dims = (0..3)
        .map(|i| DimSpec {
            index: i,
            arm: Arm::Right,
            role: DimRole::Trans(i),
        })
        .chain((0..4).map(|i| DimSpec {
            index: 3 + i,
            arm: Arm::Right,
            role: DimRole::Rot(i),
        }))
        .chain(std::iter::once(DimSpec {
            index: 7,
            arm: Arm::Right,
            role: DimRole::Gripper,
        }))
        .collect();
    ActionSchemaDescriptor {
        dataset: dataset.to_string(),
        arms: vec![Arm::Right],
        rotation_repr: RotationRepr::QuatWxyz,
        mode: ActionMode::Absolute,
        frame: ReferenceFrame::Eef,
        gripper_range: [0.0, gripper_hi],
        raw_dim: 8,
        dims,
    }
}
