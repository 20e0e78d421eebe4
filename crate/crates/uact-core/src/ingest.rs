//! Conversion of raw source documents into episode records.
//!
//! Raw corpora are line-delimited JSON (`docs/FORMATS.md`). Each line is
//! parsed, checked against its dataset's schema, and normalized: rotations
//! become scalar-first unit quaternions, grippers are rescaled to `[0, 1]`,
//! and metadata is carried through. Batch ingest fans out across worker
//! threads and aggregates an order-independent report.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Arm, ArmState, EpisodeRecord, FrameRecord, FrameState, Pose, SubtaskSpan,
};
use crate::rotation::{
    self, canonicalize_rotvec, euler_to_matrix, matrix_to_quat, rotvec_to_matrix, EulerConv, Mat3,
    Quat,
};
use crate::schema::{ActionMode, ActionSchemaDescriptor, RotationRepr};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unparseable document: {0}")]
    Parse(String),
    #[error("no schema registered for dataset '{0}'")]
    UnknownSchema(String),
    #[error("frame {frame}: action has {got} dims, schema declares {expected}")]
    DimMismatch {
        frame: usize,
        got: usize,
        expected: usize,
    },
    #[error("frame {frame}: non-finite value")]
    NonFinite { frame: usize },
    #[error("episode has no frames")]
    EmptyEpisode,
    #[error("fps/action_rate must be positive and finite")]
    NonpositiveRate,
    #[error("frame {frame}: delta-mode source is missing the explicit state")]
    MissingState { frame: usize },
    #[error("frame {frame}: {message}")]
    BadState { frame: usize, message: String },
}

impl IngestError {
    /// Stable reason code used in reports.
    pub fn reason_code(&self) -> &'static str {
        match self {
            IngestError::Parse(_) => "parse-error",
            IngestError::UnknownSchema(_) => "unknown-schema",
            IngestError::DimMismatch { .. } => "dim-mismatch",
            IngestError::NonFinite { .. } => "non-finite-value",
            IngestError::EmptyEpisode => "empty-episode",
            IngestError::NonpositiveRate => "nonpositive-rate",
            IngestError::MissingState { .. } => "missing-state",
            IngestError::BadState { .. } => "bad-state",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct RawArmState {
    pub pos: [f64; 3],
    pub quat: [f64; 4],
    pub gripper: f64,
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct RawState {
    #[serde(default)]
    pub left: Option<RawArmState>,
    #[serde(default)]
    pub right: Option<RawArmState>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct RawFrame {
    pub action: Vec<f64>,
    #[serde(default)]
    pub state: Option<RawState>,
    #[serde(default)]
    pub brightness: Option<f64>,
    #[serde(default)]
    pub sharpness: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct RawEpisode {
    pub id: String,
    pub dataset: String,
    pub embodiment: String,
    pub task: String,
    pub skill: String,
    pub instruction: String,
    pub fps: f64,
    pub action_rate: f64,
    #[serde(default)]
    pub subtasks: Vec<(usize, usize, String)>,
    #[serde(default = "default_true")]
    pub viewpoint_ok: bool,
    pub frames: Vec<RawFrame>,
}

fn default_true() -> bool {
    true
}

pub fn parse_raw_episode(line: &str) -> Result<RawEpisode, IngestError> {
    serde_json::from_str(line).map_err(|e| IngestError::Parse(e.to_string()))
}

/// Interprets one rotation block (layout per `repr`) as a rotation matrix.
pub fn rotation_block_to_matrix(repr: RotationRepr, vals: &[f64]) -> Result<Mat3, String> {
    match repr {
        RotationRepr::EulerXyz => {
            euler_to_matrix(EulerConv::Xyz, [vals[0], vals[1], vals[2]]).map_err(|e| e.to_string())
        }
        RotationRepr::EulerZyx => {
            euler_to_matrix(EulerConv::Zyx, [vals[0], vals[1], vals[2]]).map_err(|e| e.to_string())
        }
        RotationRepr::EulerZyz => {
            euler_to_matrix(EulerConv::Zyz, [vals[0], vals[1], vals[2]]).map_err(|e| e.to_string())
        }
        RotationRepr::QuatWxyz => {
            quat_from_any_norm([vals[0], vals[1], vals[2], vals[3]]).and_then(|q| {
                rotation::quat_to_matrix(&q).map_err(|e| e.to_string())
            })
        }
        RotationRepr::QuatXyzw => {
            quat_from_any_norm([vals[3], vals[0], vals[1], vals[2]]).and_then(|q| {
                rotation::quat_to_matrix(&q).map_err(|e| e.to_string())
            })
        }
        RotationRepr::Rotmat9 => {
            let m = [
                [vals[0], vals[1], vals[2]],
                [vals[3], vals[4], vals[5]],
                [vals[6], vals[7], vals[8]],
            ];
            // Round-trip through the quaternion to surface non-rotations.
            let q = matrix_to_quat(&m).map_err(|e| e.to_string())?;
            rotation::quat_to_matrix(&q).map_err(|e| e.to_string())
        }
        RotationRepr::AxisAngle => {
            let r = canonicalize_rotvec(&[vals[0], vals[1], vals[2]]).map_err(|e| e.to_string())?;
            rotvec_to_matrix(&r).map_err(|e| e.to_string())
        }
        RotationRepr::Unspecified => Ok(rotation::IDENTITY),
    }
}

/// Renormalizes a source quaternion whose norm may have drifted (f32
/// storage, lossy export). Norms below 1e-6 are unrecoverable.
fn quat_from_any_norm(q: [f64; 4]) -> Result<Quat, String> {
    if q.iter().any(|c| !c.is_finite()) {
        return Err("non-finite quaternion".to_string());
    }
    let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm < 1e-6 {
        return Err(format!("quaternion norm {norm} too small to normalize"));
    }
    Ok([q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm])
}

pub(crate) fn rescale_gripper(raw: f64, range: [f64; 2]) -> f64 {
    ((raw - range[0]) / (range[1] - range[0])).clamp(0.0, 1.0)
}

fn arm_state_from_action(
    raw: &[f64],
    schema: &ActionSchemaDescriptor,
    arm: Arm,
    frame: usize,
) -> Result<ArmState, IngestError> {
    let dims = schema.arm_dims(arm);
    let [tx, ty, tz] = dims.trans_indices();
    let pos = [raw[tx], raw[ty], raw[tz]];
    let rot_vals: Vec<f64> = dims
        .rot
        .iter()
        .flatten()
        .map(|&i| raw[i])
        .collect();
    let quat = if schema.rotation_repr == RotationRepr::Unspecified {
        // Placeholder orientation; the cleaning stage rejects the episode.
        [1.0, 0.0, 0.0, 0.0]
    } else {
        let m = rotation_block_to_matrix(schema.rotation_repr, &rot_vals)
            .map_err(|message| IngestError::BadState { frame, message })?;
        matrix_to_quat(&m).map_err(|e| IngestError::BadState {
            frame,
            message: e.to_string(),
        })?
    };
    let g = dims.gripper.expect("validated schema maps a gripper dim");
    Ok(ArmState {
        pose: Pose { pos, quat },
        gripper: rescale_gripper(raw[g], schema.gripper_range),
    })
}

fn arm_state_from_raw(
    s: &RawArmState,
    schema: &ActionSchemaDescriptor,
    frame: usize,
) -> Result<ArmState, IngestError> {
    if !s.pos.iter().all(|x| x.is_finite()) || !s.gripper.is_finite() {
        return Err(IngestError::NonFinite { frame });
    }
    let quat = quat_from_any_norm(s.quat)
        .map_err(|message| IngestError::BadState { frame, message })?;
    Ok(ArmState {
        pose: Pose { pos: s.pos, quat },
        gripper: rescale_gripper(s.gripper, schema.gripper_range),
    })
}

/// Converts one parsed raw episode into a normalized episode record.
pub fn ingest_episode(
    raw: &RawEpisode,
    schema: &ActionSchemaDescriptor,
) -> Result<EpisodeRecord, IngestError> {
    if raw.frames.is_empty() {
        return Err(IngestError::EmptyEpisode);
    }
    if !(raw.fps.is_finite() && raw.fps > 0.0)
        || !(raw.action_rate.is_finite() && raw.action_rate > 0.0)
    {
        return Err(IngestError::NonpositiveRate);
    }

    let mut frames = Vec::with_capacity(raw.frames.len());
    for (i, f) in raw.frames.iter().enumerate() {
        if f.action.len() != schema.raw_dim {
            return Err(IngestError::DimMismatch {
                frame: i,
                got: f.action.len(),
                expected: schema.raw_dim,
            });
        }
        if f.action.iter().any(|x| !x.is_finite()) {
            return Err(IngestError::NonFinite { frame: i });
        }

        let mut state = FrameState::default();
        for &arm in &schema.arms {
            let arm_state = match schema.mode {
                ActionMode::Absolute => arm_state_from_action(&f.action, schema, arm, i)?,
                ActionMode::Delta => {
                    let raw_state = f
                        .state
                        .as_ref()
                        .ok_or(IngestError::MissingState { frame: i })?;
                    let side = match arm {
                        Arm::Left => raw_state.left.as_ref(),
                        Arm::Right => raw_state.right.as_ref(),
                    };
                    let side = side.ok_or(IngestError::MissingState { frame: i })?;
                    arm_state_from_raw(side, schema, i)?
                }
            };
            match arm {
                Arm::Left => state.left = Some(arm_state),
                Arm::Right => state.right = Some(arm_state),
            }
        }

        frames.push(FrameRecord {
            state,
            raw_action: f.action.clone(),
            brightness: f.brightness,
            sharpness: f.sharpness,
        });
    }

    Ok(EpisodeRecord {
        id: raw.id.clone(),
        dataset: raw.dataset.clone(),
        embodiment: raw.embodiment.clone(),
        task: raw.task.clone(),
        skill: raw.skill.clone(),
        instruction: raw.instruction.clone(),
        fps: raw.fps,
        action_rate: raw.action_rate,
        subtasks: raw
            .subtasks
            .iter()
            .map(|(start, end, label)| SubtaskSpan {
                start: *start,
                end: *end,
                label: label.clone(),
            })
            .collect(),
        viewpoint_ok: raw.viewpoint_ok,
        frames,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IngestFailure {
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IngestReport {
    pub schema_version: u32,
    pub ok: usize,
    pub failed: usize,
    pub failures: Vec<IngestFailure>,
}

/// Ingests a whole line-delimited corpus. Episodes come back sorted by id;
/// per-line failures land in the report instead of aborting the batch.
/// Duplicate ids keep the first occurrence and fail the rest.
pub fn ingest_corpus(
    corpus_text: &str,
    schemas: &BTreeMap<String, ActionSchemaDescriptor>,
) -> (Vec<EpisodeRecord>, IngestReport) {
    let lines: Vec<(usize, &str)> = corpus_text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();

    let results: Vec<Result<EpisodeRecord, IngestFailure>> = lines
        .par_iter()
        .map(|(line_no, line)| {
            let raw = match parse_raw_episode(line) {
                Ok(raw) => raw,
                Err(e) => {
                    // Recover the id for the report when the document is
                    // valid JSON that merely fails the episode shape.
                    let id = serde_json::from_str::<serde_json::Value>(line)
                        .ok()
                        .and_then(|v| v.get("id").and_then(|x| x.as_str().map(String::from)))
                        .unwrap_or_else(|| format!("line-{}", line_no + 1));
                    return Err(IngestFailure {
                        id,
                        reason: e.reason_code().to_string(),
                    });
                }
            };
            let schema = match schemas.get(&raw.dataset) {
                Some(s) => s,
                None => {
                    return Err(IngestFailure {
                        id: raw.id.clone(),
                        reason: IngestError::UnknownSchema(raw.dataset.clone())
                            .reason_code()
                            .to_string(),
                    })
                }
            };
            ingest_episode(&raw, schema).map_err(|e| IngestFailure {
                id: raw.id.clone(),
                reason: e.reason_code().to_string(),
            })
        })
        .collect();

    let mut episodes = Vec::new();
    let mut failures = Vec::new();
    let mut seen = BTreeSet::new();
    for result in results {
        match result {
            Ok(e) => {
                if seen.insert(e.id.clone()) {
                    episodes.push(e);
                } else {
                    failures.push(IngestFailure {
                        id: e.id,
                        reason: "duplicate-id".to_string(),
                    });
                }
            }
            Err(f) => failures.push(f),
        }
    }
    episodes.sort_by(|a, b| a.id.cmp(&b.id));
    let report = IngestReport {
        schema_version: 1,
        ok: episodes.len(),
        failed: failures.len(),
        failures,
    };
    (episodes, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{single_arm_quat_schema, DimRole, DimSpec};

    fn raw_line(id: &str, dataset: &str, action: Vec<f64>, n_frames: usize) -> String {
        let frames: Vec<String> = (0..n_frames)
            .map(|_| {
                format!(
                    "{{\"action\":{},\"brightness\":0.5,\"sharpness\":20.0}}",
                    serde_json::to_string(&action).unwrap()
                )
            })
            .collect();
        format!(
            "{{\"id\":\"{id}\",\"dataset\":\"{dataset}\",\"embodiment\":\"bot_a\",\
             \"task\":\"pick_cup\",\"skill\":\"pick\",\"instruction\":\"pick up the cup\",\
             \"fps\":30.0,\"action_rate\":30.0,\"frames\":[{}]}}",
            frames.join(",")
        )
    }

    #[test]
    fn absolute_quat_episode_ingests_with_rescaled_gripper() {
        let schema = single_arm_quat_schema("synth", 255.0);
        let h = 2.0f64.sqrt() / 2.0;
        let action = vec![0.1, -0.2, 0.3, h, 0.0, 0.0, h, 127.5];
        let raw = parse_raw_episode(&raw_line("e1", "synth", action, 2)).unwrap();
        let e = ingest_episode(&raw, &schema).unwrap();
        assert_eq!(e.frames.len(), 2);
        let right = e.frames[0].state.right.unwrap();
        assert!(e.frames[0].state.left.is_none());
        assert_eq!(right.pose.pos, [0.1, -0.2, 0.3]);
        assert!((right.gripper - 0.5).abs() < 1e-12);
        let norm: f64 = right.pose.quat.iter().map(|c| c * c).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(e.frames[0].raw_action.len(), 8);
    }

    #[test]
    fn xyzw_quaternions_are_reordered_to_scalar_first() {
        let mut schema = single_arm_quat_schema("synth", 1.0);
        schema.rotation_repr = crate::schema::RotationRepr::QuatXyzw;
        let h = 2.0f64.sqrt() / 2.0;
        // Quarter turn about z, stored xyzw.
        let action = vec![0.0, 0.0, 0.0, 0.0, 0.0, h, h, 0.5];
        let raw = parse_raw_episode(&raw_line("e1", "synth", action, 1)).unwrap();
        let e = ingest_episode(&raw, &schema).unwrap();
        let q = e.frames[0].state.right.unwrap().pose.quat;
        assert!((q[0] - h).abs() < 1e-12, "scalar first: {q:?}");
        assert!((q[3] - h).abs() < 1e-12);
    }

    #[test]
    fn euler_rotations_become_unit_quaternions() {
        let mut schema = single_arm_quat_schema("synth", 1.0);
        schema.rotation_repr = crate::schema::RotationRepr::EulerZyx;
        schema.raw_dim = 7;
        schema.dims = vec![
            DimSpec { index: 0, arm: Arm::Right, role: DimRole::Trans(0) },
            DimSpec { index: 1, arm: Arm::Right, role: DimRole::Trans(1) },
            DimSpec { index: 2, arm: Arm::Right, role: DimRole::Trans(2) },
            DimSpec { index: 3, arm: Arm::Right, role: DimRole::Rot(0) },
            DimSpec { index: 4, arm: Arm::Right, role: DimRole::Rot(1) },
            DimSpec { index: 5, arm: Arm::Right, role: DimRole::Rot(2) },
            DimSpec { index: 6, arm: Arm::Right, role: DimRole::Gripper },
        ];
        let action = vec![0.0, 0.0, 0.0, 0.4, -0.2, 1.1, 1.0];
        let raw = parse_raw_episode(&raw_line("e1", "synth", action, 1)).unwrap();
        let e = ingest_episode(&raw, &schema).unwrap();
        let q = e.frames[0].state.right.unwrap().pose.quat;
        let m = rotation::quat_to_matrix(&q).unwrap();
        let expected = euler_to_matrix(EulerConv::Zyx, [0.4, -0.2, 1.1]).unwrap();
        assert!(rotation::frobenius_distance(&m, &expected) < 1e-12);
    }

    #[test]
    fn dim_mismatch_is_rejected() {
        let schema = single_arm_quat_schema("synth", 1.0);
        let action = vec![0.0; 7];
        let raw = parse_raw_episode(&raw_line("e1", "synth", action, 1)).unwrap();
        let err = ingest_episode(&raw, &schema).unwrap_err();
        assert_eq!(err.reason_code(), "dim-mismatch");
    }

    #[test]
    fn delta_mode_requires_explicit_state() {
        let mut schema = single_arm_quat_schema("synth", 1.0);
        schema.mode = ActionMode::Delta;
        schema.rotation_repr = RotationRepr::AxisAngle;
        schema.raw_dim = 7;
        schema.dims.retain(|d| !matches!(d.role, DimRole::Rot(3)));
        for d in schema.dims.iter_mut() {
            if d.role == DimRole::Gripper {
                d.index = 6;
            }
        }
        let action = vec![0.0; 7];
        let raw = parse_raw_episode(&raw_line("e1", "synth", action, 1)).unwrap();
        let err = ingest_episode(&raw, &schema).unwrap_err();
        assert_eq!(err.reason_code(), "missing-state");
    }

    #[test]
    fn corpus_ingest_reports_failures_and_sorts_episodes() {
        let schema = single_arm_quat_schema("synth", 1.0);
        let schemas = BTreeMap::from([("synth".to_string(), schema)]);
        let good = vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.5];
        let corpus = [
            raw_line("b", "synth", good.clone(), 2),
            raw_line("a", "synth", good.clone(), 2),
            raw_line("c", "nowhere", good.clone(), 2),
            "not json at all".to_string(),
            raw_line("a", "synth", good, 2),
        ]
        .join("\n");
        let (episodes, report) = ingest_corpus(&corpus, &schemas);
        assert_eq!(report.ok, 2);
        assert_eq!(report.failed, 3);
        assert_eq!(episodes[0].id, "a");
        assert_eq!(episodes[1].id, "b");
        let reasons: Vec<&str> = report.failures.iter().map(|f| f.reason.as_str()).collect();
        assert!(reasons.contains(&"unknown-schema"));
        assert!(reasons.contains(&"parse-error"));
        assert!(reasons.contains(&"duplicate-id"));
    }

    #[test]
    fn empty_corpus_yields_zero_count_report() {
        let (episodes, report) = ingest_corpus("", &BTreeMap::new());
        assert!(episodes.is_empty());
        assert_eq!(report.ok, 0);
        assert_eq!(report.failed, 0);
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let schema = single_arm_quat_schema("synth", 1.0);
        let good = vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.5];
        let mut raw = parse_raw_episode(&raw_line("e1", "synth", good, 2)).unwrap();
        raw.frames[1].action[2] = f64::NAN;
        let err = ingest_episode(&raw, &schema).unwrap_err();
        assert_eq!(err.reason_code(), "non-finite-value");
    }
}
