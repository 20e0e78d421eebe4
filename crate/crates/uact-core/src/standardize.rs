//! Conversion of cleaned episodes into the unified training representation:
//! per-step delta actions in the current end-effector frame, dual-arm
//! padding, fixed-horizon chunking, and channel normalization.
//!
//! Absolute-pose sources turn consecutive states into deltas
//! (`dpos = R_t^T (p_{t+1} - p_t)`, rotation as the canonical rotation
//! vector of `R_t^T R_{t+1}`, gripper as the next absolute target); sources
//! that already record deltas pass through with representation conversion
//! only. Single-arm episodes occupy the right-arm slot of the 14-dim layout
//! regardless of their source arm label, with the left block zeroed and
//! masked off.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{rescale_gripper, rotation_block_to_matrix};
use crate::model::{
    ActionChunk, Arm, ArmState, EpisodeRecord, UnifiedAction, ACTION_DIMS, ARM_DIMS, RIGHT_OFFSET,
};
use crate::rotation::{
    canonicalize_rotvec, mat_transpose, mat_vec, matrix_to_rotvec, quat_to_matrix, quat_to_rotvec,
    relative_rotvec, RotationError,
};
use crate::schema::{ActionMode, ActionSchemaDescriptor, RotationRepr};

/// One arm's delta action: `[dx, dy, dz, rx, ry, rz, gripper]`.
pub type ArmAction = [f64; ARM_DIMS];

#[derive(Debug, Error)]
pub enum StandardizeError {
    #[error(transparent)]
    Rotation(#[from] RotationError),
    #[error("dataset's rotation convention is undocumented; episodes cannot be standardized")]
    AmbiguousSchema,
    #[error("frame {frame} is missing the state of a declared arm")]
    MissingArm { frame: usize },
    #[error("invalid chunk parameters: {0}")]
    BadChunkParams(String),
}

/// Delta between two consecutive states of one arm, expressed in the
/// earlier state's end-effector frame. Identical consecutive poses yield
/// exact zeros.
pub fn arm_delta(a: &ArmState, b: &ArmState) -> Result<ArmAction, RotationError> {
    let ra = quat_to_matrix(&a.pose.quat)?;
    let rb = quat_to_matrix(&b.pose.quat)?;
    let world = [
        b.pose.pos[0] - a.pose.pos[0],
        b.pose.pos[1] - a.pose.pos[1],
        b.pose.pos[2] - a.pose.pos[2],
    ];
    let dpos = mat_vec(&mat_transpose(&ra), &world);
    let rot = relative_rotvec(&ra, &rb)?;
    Ok([dpos[0], dpos[1], dpos[2], rot[0], rot[1], rot[2], b.gripper])
}

/// Places a single-arm action into the dual-arm layout. Single-arm sources
/// uniformly occupy the right slot whatever their source arm label, so the
/// label only documents provenance.
pub fn pad_to_dual(a: &ArmAction, _source_arm: Arm) -> UnifiedAction {
    let mut values = [0.0; ACTION_DIMS];
    values[RIGHT_OFFSET..RIGHT_OFFSET + ARM_DIMS].copy_from_slice(a);
    UnifiedAction {
        values,
        arm_mask: [false, true],
    }
}

fn dual_action(left: &ArmAction, right: &ArmAction) -> UnifiedAction {
    let mut values = [0.0; ACTION_DIMS];
    values[..ARM_DIMS].copy_from_slice(left);
    values[RIGHT_OFFSET..RIGHT_OFFSET + ARM_DIMS].copy_from_slice(right);
    UnifiedAction {
        values,
        arm_mask: [true, true],
    }
}

fn arm_state_of(e: &EpisodeRecord, frame: usize, arm: Arm) -> Result<&ArmState, StandardizeError> {
    let state = &e.frames[frame].state;
    let side = match arm {
        Arm::Left => state.left.as_ref(),
        Arm::Right => state.right.as_ref(),
    };
    side.ok_or(StandardizeError::MissingArm { frame })
}

/// Converts an absolute-pose episode into unified delta actions. An
/// episode with `n` frames yields `n - 1` actions; fewer than 2 frames
/// yield none.
pub fn absolute_to_delta(e: &EpisodeRecord) -> Result<Vec<UnifiedAction>, StandardizeError> {
    let arms = episode_arms(e)?;
    let mut out = Vec::with_capacity(e.frames.len().saturating_sub(1));
    for t in 0..e.frames.len().saturating_sub(1) {
        let action = match arms {
            EpisodeArms::Single(arm) => {
                let a = arm_state_of(e, t, arm)?;
                let b = arm_state_of(e, t + 1, arm)?;
                pad_to_dual(&arm_delta(a, b)?, arm)
            }
            EpisodeArms::Dual => {
                let left = arm_delta(arm_state_of(e, t, Arm::Left)?, arm_state_of(e, t + 1, Arm::Left)?)?;
                let right =
                    arm_delta(arm_state_of(e, t, Arm::Right)?, arm_state_of(e, t + 1, Arm::Right)?)?;
                dual_action(&left, &right)
            }
        };
        out.push(action);
    }
    Ok(out)
}

#[derive(Clone, Copy)]
enum EpisodeArms {
    Single(Arm),
    Dual,
}

fn episode_arms(e: &EpisodeRecord) -> Result<EpisodeArms, StandardizeError> {
    let first = e.frames.first().ok_or(StandardizeError::MissingArm { frame: 0 })?;
    Ok(match (first.state.left.is_some(), first.state.right.is_some()) {
        (true, true) => EpisodeArms::Dual,
        (true, false) => EpisodeArms::Single(Arm::Left),
        (false, true) => EpisodeArms::Single(Arm::Right),
        (false, false) => return Err(StandardizeError::MissingArm { frame: 0 }),
    })
}

fn raw_delta_arm_action(
    raw: &[f64],
    schema: &ActionSchemaDescriptor,
    arm: Arm,
) -> Result<ArmAction, StandardizeError> {
    let dims = schema.arm_dims(arm);
    let [tx, ty, tz] = dims.trans_indices();
    let rot_vals: Vec<f64> = dims.rot.iter().flatten().map(|&i| raw[i]).collect();
    let rot = match schema.rotation_repr {
        RotationRepr::Unspecified => return Err(StandardizeError::AmbiguousSchema),
        RotationRepr::AxisAngle => {
            canonicalize_rotvec(&[rot_vals[0], rot_vals[1], rot_vals[2]])?
        }
        repr => {
            let m = rotation_block_to_matrix(repr, &rot_vals)
                .map_err(|_| StandardizeError::AmbiguousSchema)?;
            matrix_to_rotvec(&m)?
        }
    };
    let g = rescale_gripper(raw[dims.gripper.expect("validated schema")], schema.gripper_range);
    Ok([raw[tx], raw[ty], raw[tz], rot[0], rot[1], rot[2], g])
}

/// Unified actions for one episode under its schema: delta computation for
/// absolute sources, representation conversion for delta sources (one
/// action per frame).
pub fn episode_to_unified(
    e: &EpisodeRecord,
    schema: &ActionSchemaDescriptor,
) -> Result<Vec<UnifiedAction>, StandardizeError> {
    if schema.is_ambiguous() {
        return Err(StandardizeError::AmbiguousSchema);
    }
    match schema.mode {
        ActionMode::Absolute => absolute_to_delta(e),
        ActionMode::Delta => {
            let mut out = Vec::with_capacity(e.frames.len());
            for f in &e.frames {
                let action = if schema.arms.len() == 2 {
                    let left = raw_delta_arm_action(&f.raw_action, schema, Arm::Left)?;
                    let right = raw_delta_arm_action(&f.raw_action, schema, Arm::Right)?;
                    dual_action(&left, &right)
                } else {
                    let arm = schema.arms[0];
                    pad_to_dual(&raw_delta_arm_action(&f.raw_action, schema, arm)?, arm)
                };
                out.push(action);
            }
            Ok(out)
        }
    }
}

fn arm_state_vector(s: Option<&ArmState>) -> Result<ArmAction, RotationError> {
    match s {
        Some(s) => {
            let r = quat_to_rotvec(&s.pose.quat)?;
            Ok([
                s.pose.pos[0],
                s.pose.pos[1],
                s.pose.pos[2],
                r[0],
                r[1],
                r[2],
                s.gripper,
            ])
        }
        None => Ok([0.0; ARM_DIMS]),
    }
}

/// 14-dim pose summary of one frame: per-arm position, orientation as a
/// rotation vector, gripper; absent arms are zero.
pub fn frame_state_vector(e: &EpisodeRecord, frame: usize) -> Result<[f64; ACTION_DIMS], StandardizeError> {
    let f = &e.frames[frame];
    let left = arm_state_vector(f.state.left.as_ref())?;
    let right = arm_state_vector(f.state.right.as_ref())?;
    let mut out = [0.0; ACTION_DIMS];
    out[..ARM_DIMS].copy_from_slice(&left);
    out[RIGHT_OFFSET..].copy_from_slice(&right);
    Ok(out)
}

/// Cuts an action sequence into fixed-horizon windows. Window starts step
/// by `stride` from 0; a final short window is zero-padded to `h` with its
/// valid length recorded. `states[i]` is the 14-dim state at action `i`'s
/// frame.
pub fn chunk_actions(
    episode_id: &str,
    actions: &[UnifiedAction],
    states: &[[f64; ACTION_DIMS]],
    h: usize,
    stride: usize,
) -> Result<Vec<ActionChunk>, StandardizeError> {
    if h == 0 || h > u16::MAX as usize {
        return Err(StandardizeError::BadChunkParams(format!("h = {h}")));
    }
    if stride == 0 {
        return Err(StandardizeError::BadChunkParams("stride = 0".to_string()));
    }
    if states.len() < actions.len() {
        return Err(StandardizeError::BadChunkParams(format!(
            "{} states for {} actions",
            states.len(),
            actions.len()
        )));
    }
    let mut chunks = Vec::new();
    let mut start = 0usize;
    while start < actions.len() {
        let end = (start + h).min(actions.len());
        let window = &actions[start..end];
        let mut rows = vec![[0.0; ACTION_DIMS]; h];
        for (row, action) in rows.iter_mut().zip(window) {
            *row = action.values;
        }
        chunks.push(ActionChunk {
            episode_id: episode_id.to_string(),
            start_frame: start as u32,
            validity: window.len() as u16,
            arm_mask: window[0].arm_mask,
            rows,
            state: states[start],
        });
        start += stride;
    }
    Ok(chunks)
}

/// Full standardization of one episode: unified actions, per-window states,
/// chunking.
pub fn standardize_episode(
    e: &EpisodeRecord,
    schema: &ActionSchemaDescriptor,
    h: usize,
    stride: usize,
) -> Result<Vec<ActionChunk>, StandardizeError> {
    let actions = episode_to_unified(e, schema)?;
    let states: Vec<[f64; ACTION_DIMS]> = (0..actions.len())
        .map(|i| frame_state_vector(e, i))
        .collect::<Result<_, _>>()?;
    chunk_actions(&e.id, &actions, &states, h, stride)
}

/// Per-channel normalization statistics, fitted over valid rows only.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormStats {
    pub schema_version: u32,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Clip bound in standard deviations.
    pub clip: f64,
}

/// Fits mean/std per channel over the valid rows of all chunks. Channels
/// with zero variance (inactive-arm columns, constant grippers) keep
/// `std == 0` and pass through normalization unchanged.
pub fn fit_norm(chunks: &[ActionChunk], clip: f64) -> NormStats {
    let mut n = 0.0f64;
    let mut mean = vec![0.0f64; ACTION_DIMS];
    for c in chunks {
        for row in c.rows.iter().take(c.validity as usize) {
            n += 1.0;
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
    }
    if n > 0.0 {
        for m in &mut mean {
            *m /= n;
        }
    }
    let mut var = vec![0.0f64; ACTION_DIMS];
    for c in chunks {
        for row in c.rows.iter().take(c.validity as usize) {
            for (s, (v, m)) in var.iter_mut().zip(row.iter().zip(&mean)) {
                let d = v - m;
                *s += d * d;
            }
        }
    }
    let std = var
        .into_iter()
        .map(|s| if n > 0.0 { (s / n).sqrt() } else { 0.0 })
        .collect();
    NormStats {
        schema_version: 1,
        mean,
        std,
        clip,
    }
}

/// Standardizes every row of a chunk in place and clips to the stat's
/// bound. Zero-variance channels pass through.
pub fn apply_norm(chunk: &mut ActionChunk, stats: &NormStats) {
    for row in &mut chunk.rows {
        for ((v, m), s) in row.iter_mut().zip(&stats.mean).zip(&stats.std) {
            if *s > 0.0 {
                *v = ((*v - m) / s).clamp(-stats.clip, stats.clip);
            }
        }
    }
}

/// Inverts [`apply_norm`]; exact (within roundoff) for unclipped values.
pub fn invert_norm(chunk: &mut ActionChunk, stats: &NormStats) {
    for row in &mut chunk.rows {
        for ((v, m), s) in row.iter_mut().zip(&stats.mean).zip(&stats.std) {
            if *s > 0.0 {
                *v = *v * s + m;
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::model::Pose;
    use crate::rng;
    use crate::rotation::{mat_mul, matrix_to_quat, rotvec_to_matrix, Mat3};

    /// A smooth random absolute-pose episode: small positional steps and
    /// small rotation increments composed frame to frame.
    pub fn smooth_episode(id: &str, n_frames: usize, seed: u64) -> EpisodeRecord {
        let mut e = crate::model::test_support::simple_episode(id, n_frames);
        let mut rot: Mat3 = crate::rotation::IDENTITY;
        let mut pos = [0.3, -0.1, 0.4];
        for (i, f) in e.frames.iter_mut().enumerate() {
            let c = i as u64 * 6;
            let dr = [
                0.03 * rng::normal_at(seed, 50, c),
                0.03 * rng::normal_at(seed, 50, c + 1),
                0.03 * rng::normal_at(seed, 50, c + 2),
            ];
            rot = mat_mul(&rot, &rotvec_to_matrix(&dr).unwrap());
            for (p, j) in pos.iter_mut().zip(0..3) {
                *p += 0.01 * rng::normal_at(seed, 51, c + j);
            }
            f.state.right = Some(ArmState {
                pose: Pose {
                    pos,
                    quat: matrix_to_quat(&rot).unwrap(),
                },
                gripper: (i as f64 / n_frames as f64).clamp(0.0, 1.0),
            });
        }
        e
    }

    /// Reconstructs absolute right-arm states by forward-composing deltas
    /// from the first state; the independent oracle for delta conversion.
    pub fn forward_compose(
        start: &ArmState,
        actions: &[UnifiedAction],
    ) -> Vec<(Mat3, [f64; 3], f64)> {
        let mut rot = crate::rotation::quat_to_matrix(&start.pose.quat).unwrap();
        let mut pos = start.pose.pos;
        let mut out = Vec::new();
        for a in actions {
            let v = &a.values;
            let dpos_world = crate::rotation::mat_vec(&rot, &[v[7], v[8], v[9]]);
            pos = [pos[0] + dpos_world[0], pos[1] + dpos_world[1], pos[2] + dpos_world[2]];
            rot = mat_mul(&rot, &rotvec_to_matrix(&[v[10], v[11], v[12]]).unwrap());
            out.push((rot, pos, v[13]));
        }
        out
    }
}
