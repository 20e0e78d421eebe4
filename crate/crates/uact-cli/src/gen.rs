//! Deterministic synthetic-corpus generator. Emits raw episode documents on
//! smooth end-effector trajectories plus a schema registry, and can inject
//! exactly `round(rate * n)` defective episodes — one defect each — recording
//! them in an injection manifest for oracle comparison downstream.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use uact_core::rng::{u64_at, unit_f64_at, STREAM_GEN_BASE};

use crate::{CliError, GenArgs};

/// RNG sub-streams of the generator.
const STREAM_START: u64 = STREAM_GEN_BASE + 1;
const STREAM_SHUFFLE: u64 = STREAM_GEN_BASE + 2;

/// Injectable defect kinds, cycled round-robin over the defective episodes.
/// Each maps to exactly one downstream rejection reason.
const DEFECT_KINDS: [&str; 7] = [
    "empty-instruction",
    "garbled",
    "black-frame",
    "blurred",
    "action-spike",
    "rate-mismatch",
    "ambiguous-action",
];

#[derive(Serialize)]
struct DefectManifest {
    schema_version: u32,
    episodes: usize,
    defective: usize,
    defects: BTreeMap<String, String>,
}

/// The two registry entries: a clean absolute-pose schema and a variant
/// whose rotation convention is undocumented (used for the
/// `ambiguous-action` defect).
fn schema_lines() -> String {
    let dims_for = |_repr: &str| {
        json!([
            {"index": 0, "arm": "right", "role": "trans_x"},
            {"index": 1, "arm": "right", "role": "trans_y"},
            {"index": 2, "arm": "right", "role": "trans_z"},
            {"index": 3, "arm": "right", "role": "rot_0"},
            {"index": 4, "arm": "right", "role": "rot_1"},
            {"index": 5, "arm": "right", "role": "rot_2"},
            {"index": 6, "arm": "right", "role": "rot_3"},
            {"index": 7, "arm": "right", "role": "gripper"}
        ])
    };
    let synth = json!({
        "dataset": "synth",
        "arms": ["right"],
        "rotation_repr": "quat_wxyz",
        "mode": "absolute",
        "frame": "eef",
        "gripper_range": [0.0, 100.0],
        "raw_dim": 8,
        "dims": dims_for("quat_wxyz"),
    });
    let ambig = json!({
        "dataset": "synth_ambig",
        "arms": ["right"],
        "rotation_repr": "unspecified",
        "mode": "delta",
        "frame": "eef",
        "gripper_range": [0.0, 100.0],
        "raw_dim": 8,
        "dims": dims_for("unspecified"),
    });
    format!("{synth}\n{ambig}\n")
}

/// Quaternion for a rotation of `angle` about the world z axis.
fn quat_z(angle: f64) -> [f64; 4] {
    [(angle / 2.0).cos(), 0.0, 0.0, (angle / 2.0).sin()]
}

struct EpisodeDraft {
    id: String,
    dataset: String,
    instruction: String,
    fps: f64,
    action_rate: f64,
    /// Per frame: position, z-angle, raw gripper, brightness, sharpness.
    frames: Vec<FrameDraft>,
    task: String,
    skill: String,
    embodiment: String,
    subtasks: Vec<(usize, usize, String)>,
}

struct FrameDraft {
    pos: [f64; 3],
    angle: f64,
    gripper_raw: f64,
    brightness: f64,
    sharpness: f64,
}

/// A clean episode: a smooth spiral of small steps, well inside every
/// cleaning threshold.
fn base_episode(seed: u64, i: usize) -> EpisodeDraft {
    let n = 40 + (i % 8);
    let sx = 0.2 + 0.4 * unit_f64_at(seed, STREAM_START, (i as u64) * 4);
    let sy = -0.2 + 0.4 * unit_f64_at(seed, STREAM_START, (i as u64) * 4 + 1);
    let sz = 0.1 + 0.3 * unit_f64_at(seed, STREAM_START, (i as u64) * 4 + 2);
    let heading = std::f64::consts::TAU * unit_f64_at(seed, STREAM_START, (i as u64) * 4 + 3);

    let frames = (0..n)
        .map(|k| {
            let t = k as f64;
            let dir = heading + 0.04 * t;
            FrameDraft {
                pos: [
                    sx + 0.008 * t * dir.cos(),
                    sy + 0.008 * t * dir.sin(),
                    sz + 0.002 * t,
                ],
                angle: 0.01 * t,
                gripper_raw: 20.0 + 60.0 * t / n as f64,
                brightness: 0.45 + 0.1 * ((0.3 * t).sin() * 0.5 + 0.5) * 0.5,
                sharpness: 15.0 + 10.0 * ((0.2 * t).cos() * 0.5 + 0.5),
            }
        })
        .collect();

    EpisodeDraft {
        id: format!("ep_{i:06}"),
        dataset: "synth".to_string(),
        instruction: "pick up the red cup and place it on the plate".to_string(),
        fps: 30.0,
        action_rate: 30.0,
        frames,
        task: format!("task_{}", i % 5),
        skill: format!("skill_{}", i % 3),
        embodiment: if i % 2 == 0 { "bot_a" } else { "bot_b" }.to_string(),
        subtasks: vec![(0, n / 2, "reach".to_string()), (n / 2, n, "grasp".to_string())],
    }
}

/// Applies one defect in place. Every mutation targets exactly one cleaning
/// filter and leaves everything upstream of it intact.
fn inject_defect(e: &mut EpisodeDraft, kind: &str) {
    match kind {
        "empty-instruction" => e.instruction = String::new(),
        "garbled" => e.instruction = "zzzzzzzzzzzzzzzzzz!!!".to_string(),
        "black-frame" => {
            let mid = e.frames.len() / 2;
            e.frames[mid].brightness = 0.001;
        }
        "blurred" => {
            // 2 of every 5 frames out of focus: above the 20 % budget.
            for (k, f) in e.frames.iter_mut().enumerate() {
                if k % 5 < 2 {
                    f.sharpness = 0.5;
                }
            }
        }
        "action-spike" => {
            let mid = e.frames.len() / 2;
            e.frames[mid].pos[0] += 0.5;
        }
        "rate-mismatch" => e.action_rate = e.fps * 1.5,
        "ambiguous-action" => e.dataset = "synth_ambig".to_string(),
        other => unreachable!("unknown defect kind {other}"),
    }
}

/// Renders a draft as one raw corpus line. Absolute-mode episodes carry the
/// pose in the action vector; the delta-mode (ambiguous) variant carries
/// small increments plus explicit per-frame states.
fn render_episode(e: &EpisodeDraft) -> String {
    let delta_mode = e.dataset == "synth_ambig";
    let frames: Vec<serde_json::Value> = e
        .frames
        .iter()
        .map(|f| {
            let q = quat_z(f.angle);
            let action: Vec<f64> = if delta_mode {
                // Small per-step increments; the rotation block is payload
                // whose convention the schema leaves undocumented.
                vec![0.005, 0.003, 0.001, 0.0, 0.0, 0.0, 0.0, f.gripper_raw]
            } else {
                vec![f.pos[0], f.pos[1], f.pos[2], q[0], q[1], q[2], q[3], f.gripper_raw]
            };
            let mut frame = json!({
                "action": action,
                "brightness": f.brightness,
                "sharpness": f.sharpness,
            });
            if delta_mode {
                frame["state"] = json!({
                    "right": {"pos": f.pos, "quat": q, "gripper": f.gripper_raw}
                });
            }
            frame
        })
        .collect();

    let subtasks: Vec<serde_json::Value> = e
        .subtasks
        .iter()
        .map(|(s, t, label)| json!([s, t, label]))
        .collect();

    json!({
        "id": e.id,
        "dataset": e.dataset,
        "embodiment": e.embodiment,
        "task": e.task,
        "skill": e.skill,
        "instruction": e.instruction,
        "fps": e.fps,
        "action_rate": e.action_rate,
        "subtasks": subtasks,
        "viewpoint_ok": true,
        "frames": frames,
    })
    .to_string()
}

/// Seeded Fisher–Yates shuffle of `0..n`; the first `m` indices become the
/// defective episodes.
fn defective_indices(seed: u64, n: usize, m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for k in (1..n).rev() {
        let j = (u64_at(seed, STREAM_SHUFFLE, k as u64) % (k as u64 + 1)) as usize;
        idx.swap(k, j);
    }
    idx.truncate(m);
    idx
}

pub fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    let seed = crate::commands::require(args.seed, None, "--seed")?;
    if !(0.0..=1.0).contains(&args.defect_rate) || !args.defect_rate.is_finite() {
        return Err(CliError::Validation(format!(
            "--defect-rate must be within [0, 1], got {}",
            args.defect_rate
        )));
    }
    let n = args.episodes;
    let defective = (args.defect_rate * n as f64).round() as usize;
    let out_dir = PathBuf::from(&args.out_dir);
    crate::commands::ensure_out_dir(&out_dir)?;

    let chosen = defective_indices(seed, n, defective);
    let mut defect_of: BTreeMap<usize, &str> = BTreeMap::new();
    for (k, &i) in chosen.iter().enumerate() {
        defect_of.insert(i, DEFECT_KINDS[k % DEFECT_KINDS.len()]);
    }

    let mut corpus = String::new();
    let mut defects: BTreeMap<String, String> = BTreeMap::new();
    for i in 0..n {
        let mut e = base_episode(seed, i);
        if let Some(kind) = defect_of.get(&i) {
            inject_defect(&mut e, kind);
            defects.insert(e.id.clone(), kind.to_string());
        }
        corpus.push_str(&render_episode(&e));
        corpus.push('\n');
    }

    write_file(&out_dir.join("corpus.jsonl"), corpus.as_bytes())?;
    write_file(&out_dir.join("schemas.jsonl"), schema_lines().as_bytes())?;
    let manifest = DefectManifest {
        schema_version: 1,
        episodes: n,
        defective,
        defects,
    };
    let mut manifest_text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Validation(format!("cannot serialize defect manifest: {e}")))?;
    manifest_text.push('\n');
    write_file(&out_dir.join("defects.json"), manifest_text.as_bytes())?;

    println!(
        "gen: {} episodes ({} defective) -> {}",
        n,
        defective,
        out_dir.display()
    );
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("cannot write '{}': {e}", path.display())))
}
