//! Domain types for demonstration episodes and their derived training
//! representation, plus structural validation and corpus manifests.
//!
//! The unified action layout is a fixed 14-vector
//! `[left dx,dy,dz, left rx,ry,rz, left grip, right dx,dy,dz, right rx,ry,rz, right grip]`:
//! translation deltas in the current end-effector frame (meters), canonical
//! rotation-vector deltas (radians, angle <= pi), and absolute gripper
//! targets in `[0, 1]`. Inactive-arm columns are zero and flagged through
//! the arm mask.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rotation::{Quat, Vec3};

/// Width of the unified action vector.
pub const ACTION_DIMS: usize = 14;
/// Per-arm block width within the unified layout.
pub const ARM_DIMS: usize = 7;
/// Offset of the right-arm block.
pub const RIGHT_OFFSET: usize = 7;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("duplicate episode id '{0}'")]
    DuplicateId(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Left,
    Right,
}

/// Absolute end-effector pose: position in meters plus a scalar-first unit
/// quaternion.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Pose {
    pub pos: Vec3,
    pub quat: Quat,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            pos: [0.0; 3],
            quat: [1.0, 0.0, 0.0, 0.0],
        }
    }
}

/// One arm's slice of a frame: pose plus normalized gripper value.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ArmState {
    pub pose: Pose,
    pub gripper: f64,
}

/// Per-arm states for one timestep. Absent arms are `None`.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct FrameState {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub left: Option<ArmState>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub right: Option<ArmState>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameRecord {
    pub state: FrameState,
    /// Verbatim source action vector, layout per the dataset's schema.
    pub raw_action: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub brightness: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sharpness: Option<f64>,
}

/// Half-open frame span `[start, end)` with a free-text label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub id: String,
    pub dataset: String,
    pub embodiment: String,
    pub task: String,
    pub skill: String,
    pub instruction: String,
    pub fps: f64,
    /// Rate at which actions were recorded; normally equal to `fps`.
    pub action_rate: f64,
    #[serde(default)]
    pub subtasks: Vec<SubtaskSpan>,
    #[serde(default = "default_true")]
    pub viewpoint_ok: bool,
    pub frames: Vec<FrameRecord>,
}

fn default_true() -> bool {
    true
}

impl EpisodeRecord {
    /// An episode is single-arm when its frames carry exactly one arm.
    pub fn is_single_arm(&self) -> bool {
        match self.frames.first() {
            Some(f) => f.state.left.is_some() != f.state.right.is_some(),
            None => false,
        }
    }
}

/// One unified delta action with its arm activity mask
/// `[left_active, right_active]`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct UnifiedAction {
    pub values: [f64; ACTION_DIMS],
    pub arm_mask: [bool; 2],
}

/// A fixed-horizon window of unified actions. Rows past `validity` are zero
/// padding; `state` is the 14-vector pose summary at the window's start
/// frame (per-arm position, orientation as a rotation vector, gripper).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActionChunk {
    pub episode_id: String,
    pub start_frame: u32,
    pub validity: u16,
    pub arm_mask: [bool; 2],
    pub rows: Vec<[f64; ACTION_DIMS]>,
    pub state: [f64; ACTION_DIMS],
}

/// One structural-invariant violation found by [`validate_episode`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, code: &str, detail: String) {
        self.violations.push(Violation {
            code: code.to_string(),
            detail,
        });
    }
}

fn check_arm_state(report: &mut ValidationReport, arm: &str, frame: usize, s: &ArmState) {
    if !s.pose.pos.iter().all(|x| x.is_finite()) {
        report.push("position-not-finite", format!("{arm} arm, frame {frame}"));
    }
    let norm = s.pose.quat.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
        report.push(
            "orientation-not-unit",
            format!("{arm} arm, frame {frame}, norm {norm}"),
        );
    }
    if !(0.0..=1.0).contains(&s.gripper) {
        report.push(
            "gripper-out-of-range",
            format!("{arm} arm, frame {frame}, value {}", s.gripper),
        );
    }
}

/// Checks every structural invariant of an episode record and reports the
/// violated codes. Purely structural: content-level filtering (black
/// frames, spikes, ...) lives in the cleaning pipeline.
pub fn validate_episode(e: &EpisodeRecord) -> ValidationReport {
    let mut report = ValidationReport::default();
    if e.id.is_empty() {
        report.push("empty-id", String::new());
    }
    if e.frames.is_empty() {
        report.push("empty-episode", String::new());
        return report;
    }
    if !(e.fps.is_finite() && e.fps > 0.0) {
        report.push("nonpositive-fps", format!("fps {}", e.fps));
    }
    if !(e.action_rate.is_finite() && e.action_rate > 0.0) {
        report.push("nonpositive-action-rate", format!("rate {}", e.action_rate));
    }

    let arms_of = |f: &FrameRecord| (f.state.left.is_some(), f.state.right.is_some());
    let first_arms = arms_of(&e.frames[0]);
    if first_arms == (false, false) {
        report.push("no-arm-state", "frame 0".to_string());
    }
    let raw_dim = e.frames[0].raw_action.len();
    for (i, f) in e.frames.iter().enumerate() {
        if arms_of(f) != first_arms {
            report.push("arm-presence-inconsistent", format!("frame {i}"));
        }
        if f.raw_action.len() != raw_dim {
            report.push(
                "raw-dim-inconsistent",
                format!("frame {i}: {} vs {}", f.raw_action.len(), raw_dim),
            );
        }
        if let Some(s) = &f.state.left {
            check_arm_state(&mut report, "left", i, s);
        }
        if let Some(s) = &f.state.right {
            check_arm_state(&mut report, "right", i, s);
        }
    }

    let mut spans: Vec<&SubtaskSpan> = e.subtasks.iter().collect();
    spans.sort_by_key(|s| (s.start, s.end));
    for s in &spans {
        if s.start >= s.end || s.end > e.frames.len() {
            report.push(
                "subtask-out-of-range",
                format!("[{}, {}) of {} frames", s.start, s.end, e.frames.len()),
            );
        }
    }
    for pair in spans.windows(2) {
        if pair[1].start < pair[0].end {
            report.push(
                "subtask-overlap",
                format!(
                    "[{}, {}) overlaps [{}, {})",
                    pair[0].start, pair[0].end, pair[1].start, pair[1].end
                ),
            );
        }
    }
    report
}

/// Compact per-episode header used by manifests and the sampler.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub id: String,
    pub dataset: String,
    pub embodiment: String,
    pub task: String,
    pub skill: String,
    pub frames: usize,
    pub single_arm: bool,
    /// Offset of the episode's line within the store file; filled by the
    /// writer, zero for in-memory manifests.
    pub byte_offset: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CorpusTotals {
    pub episodes: usize,
    pub frames: usize,
    pub per_dataset: BTreeMap<String, usize>,
    pub per_embodiment: BTreeMap<String, usize>,
    pub per_task: BTreeMap<String, usize>,
    pub per_skill: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub episodes: Vec<EpisodeHeader>,
    pub totals: CorpusTotals,
}

/// Builds the corpus manifest: one header per episode (sorted by id) plus
/// per-stratum totals. Duplicate ids are an error.
pub fn build_manifest(episodes: &[EpisodeRecord]) -> Result<CorpusManifest, ModelError> {
    let mut headers: Vec<EpisodeHeader> = episodes
        .iter()
        .map(|e| EpisodeHeader {
            id: e.id.clone(),
            dataset: e.dataset.clone(),
            embodiment: e.embodiment.clone(),
            task: e.task.clone(),
            skill: e.skill.clone(),
            frames: e.frames.len(),
            single_arm: e.is_single_arm(),
            byte_offset: 0,
        })
        .collect();
    headers.sort_by(|a, b| a.id.cmp(&b.id));
    for pair in headers.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(ModelError::DuplicateId(pair[0].id.clone()));
        }
    }
    let mut totals = CorpusTotals {
        episodes: headers.len(),
        ..CorpusTotals::default()
    };
    for h in &headers {
        totals.frames += h.frames;
        *totals.per_dataset.entry(h.dataset.clone()).or_default() += 1;
        *totals.per_embodiment.entry(h.embodiment.clone()).or_default() += 1;
        *totals.per_task.entry(h.task.clone()).or_default() += 1;
        *totals.per_skill.entry(h.skill.clone()).or_default() += 1;
    }
    Ok(CorpusManifest {
        schema_version: 1,
        episodes: headers,
        totals,
    })
}


#[cfg(test)]
mod tests {
    use super::test_support::simple_episode;
    use super::*;

    #[test]
    fn well_formed_episode_validates_clean() {
        let e = simple_episode("e1", 20);
        let report = validate_episode(&e);
        assert!(report.is_valid(), "unexpected violations: {report:?}");
    }

    #[test]
    fn non_unit_orientation_is_flagged() {
        let mut e = simple_episode("e1", 5);
        e.frames[2].state.right.as_mut().unwrap().pose.quat = [0.9, 0.0, 0.0, 0.0];
        let report = validate_episode(&e);
        assert!(report
            .violations
            .iter()
            .any(|v| v.code == "orientation-not-unit"));
    }

    #[test]
    fn overlapping_subtasks_are_flagged() {
        let mut e = simple_episode("e1", 20);
        e.subtasks = vec![
            SubtaskSpan {
                start: 0,
                end: 10,
                label: "reach".to_string(),
            },
            SubtaskSpan {
                start: 5,
                end: 15,
                label: "grasp".to_string(),
            },
        ];
        let report = validate_episode(&e);
        assert!(report.violations.iter().any(|v| v.code == "subtask-overlap"));
    }

    #[test]
    fn out_of_range_subtask_is_flagged() {
        let mut e = simple_episode("e1", 10);
        e.subtasks = vec![SubtaskSpan {
            start: 8,
            end: 50,
            label: "reach".to_string(),
        }];
        assert!(validate_episode(&e)
            .violations
            .iter()
            .any(|v| v.code == "subtask-out-of-range"));
    }

    #[test]
    fn manifest_counts_strata_and_sorts_by_id() {
        let mut a = simple_episode("b", 10);
        a.task = "wipe_table".to_string();
        a.skill = "wipe".to_string();
        let b = simple_episode("a", 15);
        let m = build_manifest(&[a, b]).unwrap();
        assert_eq!(m.episodes[0].id, "a");
        assert_eq!(m.totals.episodes, 2);
        assert_eq!(m.totals.frames, 25);
        assert_eq!(m.totals.per_task["pick_cup"], 1);
        assert_eq!(m.totals.per_task["wipe_table"], 1);
        assert_eq!(m.totals.per_skill["wipe"], 1);
    }

    #[test]
    fn manifest_rejects_duplicate_ids() {
        let a = simple_episode("same", 10);
        let b = simple_episode("same", 12);
        assert!(matches!(
            build_manifest(&[a, b]),
            Err(ModelError::DuplicateId(_))
        ));
    }

    #[test]
    fn empty_episode_reports_only_emptiness() {
        let mut e = simple_episode("e1", 1);
        e.frames.clear();
        let report = validate_episode(&e);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].code, "empty-episode");
    }
}
