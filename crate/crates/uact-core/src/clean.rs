//! Corpus cleaning: staged filters with deterministic first-reject-wins
//! semantics.
//!
//! Filters run per episode in a fixed order: instruction text, subtask
//! alignment, visual statistics, action plausibility. The first filter that
//! rejects decides the episode's reason code; refinements (translated
//! instructions, patched subtask spans) compose across filters and the
//! episode is kept in its refined form. Re-running the pipeline on its own
//! output changes nothing.
//!
//! Language detection and translation are injectable hooks. The defaults
//! treat every instruction as English and translate by identity, so the
//! pipeline is fully deterministic without external models.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{ArmState, EpisodeRecord, SubtaskSpan};
use crate::rotation::{self, mat_mul, mat_transpose, rotation_angle};
use crate::schema::{ActionMode, ActionSchemaDescriptor, RotationRepr};

/// Thresholds for every filter. Fields have individual serde defaults so a
/// partial JSON config overrides only what it names.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanConfig {
    /// Keep episodes with at least this many frames.
    pub min_frames: usize,
    /// Keep episodes with at most this many frames.
    pub max_frames: usize,
    /// Largest plausible per-step translation (meters).
    pub max_translation_step: f64,
    /// Largest plausible per-step rotation (radians).
    pub max_rotation_step: f64,
    /// Frames darker than this mean luminance count as black.
    pub black_brightness_max: f64,
    /// Frames with a focus measure below this count as blurred.
    pub blur_sharpness_min: f64,
    /// Reject when more than this fraction of measured frames is blurred.
    pub blur_frame_fraction: f64,
    /// Allowed relative gap between action_rate and fps.
    pub rate_mismatch_tol: f64,
    /// Minimum fraction of printable/alphanumeric characters in the
    /// instruction.
    pub min_ascii_ratio: f64,
    /// Longest allowed run of one repeated character in the instruction.
    pub max_repeat_run: usize,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            min_frames: 10,
            max_frames: 10_000,
            max_translation_step: 0.10,
            max_rotation_step: 0.5,
            black_brightness_max: 0.02,
            blur_sharpness_min: 1.0,
            blur_frame_fraction: 0.2,
            rate_mismatch_tol: 0.15,
            min_ascii_ratio: 0.85,
            max_repeat_run: 8,
        }
    }
}

pub trait LanguageClassifier: Sync {
    fn is_english(&self, text: &str) -> bool;
}

pub trait Translator: Sync {
    fn translate(&self, text: &str) -> String;
}

/// Default classifier: treats every instruction as English, so the
/// translation path never fires unless a real model is plugged in.
pub struct AcceptAllEnglish;

impl LanguageClassifier for AcceptAllEnglish {
    fn is_english(&self, _text: &str) -> bool {
        true
    }
}

/// Identity translation stub.
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, text: &str) -> String {
        text.to_string()
    }
}

/// Simple character-class heuristic useful in tests: text dominated by
/// non-ASCII letters is classified as non-English.
pub struct NonAsciiHeuristic;

impl LanguageClassifier for NonAsciiHeuristic {
    fn is_english(&self, text: &str) -> bool {
        let letters: Vec<char> = text.chars().filter(|c| c.is_alphabetic()).collect();
        if letters.is_empty() {
            return true;
        }
        let non_ascii = letters.iter().filter(|c| !c.is_ascii()).count();
        (non_ascii as f64) < 0.5 * letters.len() as f64
    }
}

pub struct Hooks<'a> {
    pub language: &'a dyn LanguageClassifier,
    pub translator: &'a dyn Translator,
}

impl Default for Hooks<'static> {
    fn default() -> Self {
        Hooks {
            language: &AcceptAllEnglish,
            translator: &IdentityTranslator,
        }
    }
}

/// Outcome of one filter. `Refine` means the episode was patched in place
/// and stays in the corpus, carrying the named flags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FilterVerdict {
    Keep,
    Refine(Vec<String>),
    Reject(String),
}

fn acceptable_char(c: char) -> bool {
    c.is_ascii_graphic() || c.is_whitespace() || c.is_alphanumeric()
}

fn longest_repeat_run(text: &str) -> usize {
    let mut longest = 0usize;
    let mut run = 0usize;
    let mut prev: Option<char> = None;
    for c in text.chars() {
        run = if prev == Some(c) { run + 1 } else { 1 };
        longest = longest.max(run);
        prev = Some(c);
    }
    longest
}

/// Instruction filter: rejects empty or garbled text, routes non-English
/// instructions through the translation hook.
pub fn filter_instruction(
    e: &mut EpisodeRecord,
    cfg: &CleanConfig,
    hooks: &Hooks<'_>,
) -> FilterVerdict {
    let text = e.instruction.trim();
    if text.is_empty() {
        return FilterVerdict::Reject("empty-instruction".to_string());
    }
    let total = text.chars().count();
    let ok = text.chars().filter(|&c| acceptable_char(c)).count();
    if (ok as f64) < cfg.min_ascii_ratio * total as f64 {
        return FilterVerdict::Reject("garbled".to_string());
    }
    if longest_repeat_run(text) > cfg.max_repeat_run {
        return FilterVerdict::Reject("garbled".to_string());
    }
    if !hooks.language.is_english(text) {
        e.instruction = hooks.translator.translate(text);
        return FilterVerdict::Refine(vec!["needs-translation".to_string()]);
    }
    FilterVerdict::Keep
}

/// Subtask-alignment filter: clips spans to the frame range, truncates the
/// earlier of two overlapping spans at the later's start, drops spans that
/// become empty. Episodes whose spans are entirely out of range are
/// rejected; patched episodes are kept with a refinement flag.
pub fn align_subtasks(e: &mut EpisodeRecord) -> FilterVerdict {
    if e.subtasks.is_empty() {
        return FilterVerdict::Keep;
    }
    let n = e.frames.len();
    let mut spans: Vec<SubtaskSpan> = e
        .subtasks
        .iter()
        .map(|s| SubtaskSpan {
            start: s.start.min(n),
            end: s.end.min(n),
            label: s.label.clone(),
        })
        .filter(|s| s.start < s.end)
        .collect();
    if spans.is_empty() {
        return FilterVerdict::Reject("misaligned-subtasks".to_string());
    }
    spans.sort_by_key(|s| (s.start, s.end));
    for i in 0..spans.len().saturating_sub(1) {
        if spans[i].end > spans[i + 1].start {
            spans[i].end = spans[i + 1].start;
        }
    }
    spans.retain(|s| s.start < s.end);
    if spans.is_empty() {
        return FilterVerdict::Reject("misaligned-subtasks".to_string());
    }
    if spans == e.subtasks {
        FilterVerdict::Keep
    } else {
        e.subtasks = spans;
        FilterVerdict::Refine(vec!["subtasks-patched".to_string()])
    }
}

/// Visual filter: honors the upstream viewpoint flag, rejects episodes
/// containing black frames or too many blurred frames, and flags episodes
/// with incomplete statistics. Checks run over the frames that carry the
/// relevant statistic.
pub fn filter_visual(e: &EpisodeRecord, cfg: &CleanConfig) -> FilterVerdict {
    if !e.viewpoint_ok {
        return FilterVerdict::Reject("ineffective-viewpoint".to_string());
    }
    if e
        .frames
        .iter()
        .any(|f| f.brightness.map(|b| b < cfg.black_brightness_max) == Some(true))
    {
        return FilterVerdict::Reject("black-frame".to_string());
    }
    let measured: Vec<f64> = e.frames.iter().filter_map(|f| f.sharpness).collect();
    if !measured.is_empty() {
        let blurred = measured
            .iter()
            .filter(|&&s| s < cfg.blur_sharpness_min)
            .count();
        if blurred as f64 > cfg.blur_frame_fraction * measured.len() as f64 {
            return FilterVerdict::Reject("blurred".to_string());
        }
    }
    let missing = e
        .frames
        .iter()
        .any(|f| f.brightness.is_none() || f.sharpness.is_none());
    if missing {
        return FilterVerdict::Refine(vec!["no-visual-stats".to_string()]);
    }
    FilterVerdict::Keep
}

fn step_magnitudes(a: &ArmState, b: &ArmState) -> (f64, f64) {
    let dp = [
        b.pose.pos[0] - a.pose.pos[0],
        b.pose.pos[1] - a.pose.pos[1],
        b.pose.pos[2] - a.pose.pos[2],
    ];
    let trans = (dp[0] * dp[0] + dp[1] * dp[1] + dp[2] * dp[2]).sqrt();
    let rot = match (
        rotation::quat_to_matrix(&a.pose.quat),
        rotation::quat_to_matrix(&b.pose.quat),
    ) {
        (Ok(ra), Ok(rb)) => rotation_angle(&mat_mul(&mat_transpose(&ra), &rb)).unwrap_or(0.0),
        _ => 0.0,
    };
    (trans, rot)
}

/// Per-step rotation magnitude of a raw delta-mode rotation block, when the
/// representation permits computing one.
fn raw_rotation_angle(repr: RotationRepr, vals: &[f64]) -> Option<f64> {
    match repr {
        RotationRepr::Unspecified => None,
        _ => crate::ingest::rotation_block_to_matrix(repr, vals)
            .ok()
            .and_then(|m| rotation_angle(&m).ok()),
    }
}

/// Action filter: length bounds, per-step motion spikes, action-rate
/// consistency, and rejection of datasets with an undocumented rotation
/// convention.
pub fn filter_actions(
    e: &EpisodeRecord,
    schema: &ActionSchemaDescriptor,
    cfg: &CleanConfig,
) -> FilterVerdict {
    if e.frames.len() < cfg.min_frames || e.frames.len() > cfg.max_frames {
        return FilterVerdict::Reject("abnormal-length".to_string());
    }

    let spike = match schema.mode {
        ActionMode::Absolute => e.frames.windows(2).any(|w| {
            let pairs = [
                (w[0].state.left.as_ref(), w[1].state.left.as_ref()),
                (w[0].state.right.as_ref(), w[1].state.right.as_ref()),
            ];
            pairs.iter().any(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => {
                    let (trans, rot) = step_magnitudes(a, b);
                    trans > cfg.max_translation_step || rot > cfg.max_rotation_step
                }
                _ => false,
            })
        }),
        ActionMode::Delta => e.frames.iter().any(|f| {
            schema.arms.iter().any(|&arm| {
                let dims = schema.arm_dims(arm);
                let [tx, ty, tz] = dims.trans_indices();
                let (dx, dy, dz) = (f.raw_action[tx], f.raw_action[ty], f.raw_action[tz]);
                let trans = (dx * dx + dy * dy + dz * dz).sqrt();
                if trans > cfg.max_translation_step {
                    return true;
                }
                let rot_vals: Vec<f64> =
                    dims.rot.iter().flatten().map(|&i| f.raw_action[i]).collect();
                matches!(
                    raw_rotation_angle(schema.rotation_repr, &rot_vals),
                    Some(angle) if angle > cfg.max_rotation_step
                )
            })
        }),
    };
    if spike {
        return FilterVerdict::Reject("action-spike".to_string());
    }

    if (e.action_rate / e.fps - 1.0).abs() > cfg.rate_mismatch_tol {
        return FilterVerdict::Reject("rate-mismatch".to_string());
    }
    if schema.is_ambiguous() {
        return FilterVerdict::Reject("ambiguous-action".to_string());
    }
    FilterVerdict::Keep
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CleanReport {
    pub schema_version: u32,
    pub input: usize,
    pub kept: usize,
    pub rejected: usize,
    /// Episodes kept after at least one refinement.
    pub refined: usize,
    /// Hard rejections over input; refinements do not count.
    pub discard_fraction: f64,
    pub reasons: BTreeMap<String, usize>,
}

enum Outcome {
    Kept(Box<EpisodeRecord>, Vec<String>),
    Rejected(String),
}

fn clean_one(
    e: &EpisodeRecord,
    schemas: &BTreeMap<String, ActionSchemaDescriptor>,
    cfg: &CleanConfig,
    hooks: &Hooks<'_>,
) -> Outcome {
    let schema = match schemas.get(&e.dataset) {
        Some(s) => s,
        None => return Outcome::Rejected("unknown-schema".to_string()),
    };
    let mut patched = e.clone();
    let mut flags = Vec::new();
    let stages = [
        filter_instruction(&mut patched, cfg, hooks),
        align_subtasks(&mut patched),
        filter_visual(&patched, cfg),
        filter_actions(&patched, schema, cfg),
    ];
    for verdict in stages {
        match verdict {
            FilterVerdict::Keep => {}
            FilterVerdict::Refine(mut f) => flags.append(&mut f),
            FilterVerdict::Reject(reason) => return Outcome::Rejected(reason),
        }
    }
    Outcome::Kept(Box::new(patched), flags)
}

/// Runs all filters over a corpus. Kept episodes come back in input order
/// (possibly refined); the report histogram counts one reason per rejected
/// episode, decided by the first rejecting filter.
pub fn run_pipeline(
    episodes: &[EpisodeRecord],
    schemas: &BTreeMap<String, ActionSchemaDescriptor>,
    cfg: &CleanConfig,
    hooks: &Hooks<'_>,
) -> (Vec<EpisodeRecord>, CleanReport) {
    let outcomes: Vec<Outcome> = episodes
        .par_iter()
        .map(|e| clean_one(e, schemas, cfg, hooks))
        .collect();

    let mut kept = Vec::new();
    let mut refined = 0usize;
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    for outcome in outcomes {
        match outcome {
            Outcome::Kept(e, flags) => {
                if !flags.is_empty() {
                    refined += 1;
                }
                kept.push(*e);
            }
            Outcome::Rejected(reason) => {
                *reasons.entry(reason).or_default() += 1;
            }
        }
    }
    let rejected = episodes.len() - kept.len();
    let report = CleanReport {
        schema_version: 1,
        input: episodes.len(),
        kept: kept.len(),
        rejected,
        refined,
        discard_fraction: if episodes.is_empty() {
            0.0
        } else {
            rejected as f64 / episodes.len() as f64
        },
        reasons,
    };
    (kept, report)
}
