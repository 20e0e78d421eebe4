//! Subcommand implementations. Each command reads its inputs, forwards to
//! the library, and writes versioned JSON outputs; all randomness flows
//! through explicit seeds so reruns are bitwise identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use uact_core::aml::{self, Activation, AmlModel, ChunkExample, Paradigm, TrainConfig, TrainItem};
use uact_core::clean::{self, CleanConfig};
use uact_core::ingest;
use uact_core::model::{build_manifest, CorpusManifest, EpisodeRecord, ACTION_DIMS};
use uact_core::sampler::{self, SamplingPlan, StrataIndex};
use uact_core::schema::{parse_schema_registry, ActionSchemaDescriptor};
use uact_core::shard;
use uact_core::standardize;

use crate::config::PipelineConfig;
use crate::{
    AmlSampleArgs, AmlTrainArgs, AnalyzeArgs, CleanArgs, CliError, GradcheckArgs, IngestArgs,
    SampleArgs, StandardizeArgs,
};

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

/// Reads an input file; a missing or unreadable input is a validation error
/// naming the path.
fn read_input(path: &str) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read input '{path}': {e}")))
}

/// Writes an output file; failures here are I/O errors (exit 2).
fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("cannot write '{}': {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(format!("cannot serialize '{}': {e}", path.display())))?;
    text.push('\n');
    write_output(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &str) -> Result<T, CliError> {
    let text = read_input(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("invalid JSON in '{path}': {e}")))
}

/// flag > config > required: the value must come from somewhere.
pub fn require<T>(flag: Option<T>, cfg: Option<T>, what: &str) -> Result<T, CliError> {
    flag.or(cfg)
        .ok_or_else(|| CliError::Validation(format!("missing {what}: pass the flag or set it in the config file")))
}

/// Creates the output directory if absent; a failure is an I/O error.
pub fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create output dir '{}': {e}", dir.display())))
}

fn load_schemas(path: &str) -> Result<BTreeMap<String, ActionSchemaDescriptor>, CliError> {
    let text = read_input(path)?;
    Ok(parse_schema_registry(&text)?)
}

/// Parses an episode store: one JSON episode record per non-empty line.
fn load_episode_store(path: &str) -> Result<Vec<EpisodeRecord>, CliError> {
    let text = read_input(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: EpisodeRecord = serde_json::from_str(line).map_err(|err| {
            CliError::Validation(format!("invalid episode record at {path}:{}: {err}", i + 1))
        })?;
        out.push(e);
    }
    Ok(out)
}

/// Writes the episode store sorted by id and the corpus manifest whose
/// `byte_offset` fields point at each episode's line.
fn write_episode_store(out_dir: &Path, episodes: &mut [EpisodeRecord]) -> Result<CorpusManifest, CliError> {
    episodes.sort_by(|a, b| a.id.cmp(&b.id));
    let mut manifest = build_manifest(episodes)?;
    let mut store = Vec::new();
    for (e, header) in episodes.iter().zip(manifest.episodes.iter_mut()) {
        debug_assert_eq!(e.id, header.id);
        header.byte_offset = store.len() as u64;
        let line = serde_json::to_string(e)
            .map_err(|err| CliError::Validation(format!("cannot serialize episode '{}': {err}", e.id)))?;
        store.extend_from_slice(line.as_bytes());
        store.push(b'\n');
    }
    write_output(&out_dir.join("episodes.jsonl"), &store)?;
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

pub fn cmd_ingest(args: IngestArgs) -> Result<(), CliError> {
    let cfg = PipelineConfig::load_opt(args.config.as_deref())?;
    let raw = require(args.raw, cfg.paths.raw.clone(), "--raw")?;
    let schemas_path = require(args.schemas, cfg.paths.schemas.clone(), "--schemas")?;
    let out_dir = PathBuf::from(require(args.out_dir, cfg.paths.out_dir.clone(), "--out-dir")?);

    ensure_out_dir(&out_dir)?;
    let schemas = load_schemas(&schemas_path)?;
    let corpus_text = read_input(&raw)?;
    let (mut episodes, report) = ingest::ingest_corpus(&corpus_text, &schemas);

    write_episode_store(&out_dir, &mut episodes)?;
    write_json(&out_dir.join("ingest_report.json"), &report)?;

    println!(
        "ingest: {} ok, {} failed -> {}",
        report.ok,
        report.failed,
        out_dir.display()
    );
    if report.ok == 0 {
        return Err(CliError::Validation(format!(
            "no episode ingested successfully ({} failed); see {}",
            report.failed,
            out_dir.join("ingest_report.json").display()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// clean
// ---------------------------------------------------------------------------

fn effective_clean_config(args: &CleanArgs, cfg: &PipelineConfig) -> CleanConfig {
    let mut c = cfg.clean.clone().unwrap_or_default();
    if let Some(v) = args.min_frames {
        c.min_frames = v;
    }
    if let Some(v) = args.max_frames {
        c.max_frames = v;
    }
    if let Some(v) = args.max_translation_step {
        c.max_translation_step = v;
    }
    if let Some(v) = args.max_rotation_step {
        c.max_rotation_step = v;
    }
    if let Some(v) = args.black_brightness_max {
        c.black_brightness_max = v;
    }
    if let Some(v) = args.blur_sharpness_min {
        c.blur_sharpness_min = v;
    }
    if let Some(v) = args.blur_frame_fraction {
        c.blur_frame_fraction = v;
    }
    if let Some(v) = args.rate_mismatch_tol {
        c.rate_mismatch_tol = v;
    }
    if let Some(v) = args.min_ascii_ratio {
        c.min_ascii_ratio = v;
    }
    if let Some(v) = args.max_repeat_run {
        c.max_repeat_run = v;
    }
    c
}

pub fn cmd_clean(args: CleanArgs) -> Result<(), CliError> {
    let cfg = PipelineConfig::load_opt(args.config.as_deref())?;
    let episodes_path = require(args.episodes.clone(), cfg.paths.episodes.clone(), "--episodes")?;
    let schemas_path = require(args.schemas.clone(), cfg.paths.schemas.clone(), "--schemas")?;
    let out_dir = PathBuf::from(require(args.out_dir.clone(), cfg.paths.out_dir.clone(), "--out-dir")?);
    let clean_cfg = effective_clean_config(&args, &cfg);

    ensure_out_dir(&out_dir)?;
    let schemas = load_schemas(&schemas_path)?;
    let episodes = load_episode_store(&episodes_path)?;
    let hooks = clean::Hooks::default();
    let (mut kept, report) = clean::run_pipeline(&episodes, &schemas, &clean_cfg, &hooks);

    write_episode_store(&out_dir, &mut kept)?;
    write_json(&out_dir.join("clean_report.json"), &report)?;

    println!(
        "clean: {} in, {} kept, {} rejected ({} refined) -> {}",
        report.input,
        report.kept,
        report.rejected,
        report.refined,
        out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// standardize
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct StandardizeReport {
    schema_version: u32,
    episodes: usize,
    chunks: usize,
    h: usize,
    stride: usize,
    dims: usize,
}

pub fn cmd_standardize(args: StandardizeArgs) -> Result<(), CliError> {
    let cfg = PipelineConfig::load_opt(args.config.as_deref())?;
    let episodes_path = require(args.episodes, cfg.paths.episodes.clone(), "--episodes")?;
    let schemas_path = require(args.schemas, cfg.paths.schemas.clone(), "--schemas")?;
    let out_dir = PathBuf::from(require(args.out_dir, cfg.paths.out_dir.clone(), "--out-dir")?);
    let h = args.h.or(cfg.chunk.h).unwrap_or(16);
    let stride = args.stride.or(cfg.chunk.stride).unwrap_or(h);
    let clip = args.clip.or(cfg.chunk.clip).unwrap_or(10.0);

    ensure_out_dir(&out_dir)?;
    let schemas = load_schemas(&schemas_path)?;
    let mut episodes = load_episode_store(&episodes_path)?;
    episodes.sort_by(|a, b| a.id.cmp(&b.id));

    let mut chunks = Vec::new();
    for e in &episodes {
        let schema = schemas.get(&e.dataset).ok_or_else(|| {
            CliError::Validation(format!(
                "episode '{}' references unknown dataset schema '{}'",
                e.id, e.dataset
            ))
        })?;
        chunks.extend(standardize::standardize_episode(e, schema, h, stride)?);
    }

    let stats = standardize::fit_norm(&chunks, clip);
    let shard_path = out_dir.join("chunks.uact");
    shard::write_shard(&shard_path, &chunks, h)?;
    write_json(&out_dir.join("norm_stats.json"), &stats)?;
    write_json(
        &out_dir.join("standardize_report.json"),
        &StandardizeReport {
            schema_version: 1,
            episodes: episodes.len(),
            chunks: chunks.len(),
            h,
            stride,
            dims: ACTION_DIMS,
        },
    )?;

    println!(
        "standardize: {} episodes -> {} chunks (h={h}, stride={stride}) -> {}",
        episodes.len(),
        chunks.len(),
        shard_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

pub fn cmd_sample(args: SampleArgs) -> Result<(), CliError> {
    let cfg = PipelineConfig::load_opt(args.config.as_deref())?;
    let manifest_path = require(args.manifest, cfg.paths.manifest.clone(), "--manifest")?;
    let strategy = require(args.strategy, cfg.sampling.strategy, "--strategy")?;
    let seed = require(args.seed, cfg.sampling.seed, "--seed")?;
    let draws = args.draws.or(cfg.sampling.draws).unwrap_or(0);
    let budget = args
        .single_arm_budget
        .or(cfg.sampling.single_arm_budget)
        .unwrap_or(0.5);

    let manifest: CorpusManifest = read_json(&manifest_path)?;
    let index = StrataIndex::from_headers(&manifest.episodes);
    let plan = sampler::make_plan(&index, strategy, budget, seed, draws)?;
    write_json(Path::new(&args.out), &plan)?;

    println!(
        "sample: strategy {} over {} episodes, {} draws -> {}",
        strategy.name(),
        manifest.episodes.len(),
        plan.draws.len(),
        args.out
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct DistributionView {
    gini: f64,
    lorenz: Vec<(f64, f64)>,
    rank_probability: Vec<(usize, f64)>,
}

#[derive(Serialize)]
struct MetricsReport {
    schema_version: u32,
    trajectory: DistributionView,
    skill: DistributionView,
    coverage: Vec<usize>,
}

fn distribution_view(p: &BTreeMap<String, f64>) -> Result<DistributionView, CliError> {
    Ok(DistributionView {
        gini: sampler::gini(p)?,
        lorenz: sampler::lorenz_points(p)?,
        rank_probability: sampler::rank_probability(p)?,
    })
}

pub fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let plan: SamplingPlan = read_json(&args.plan)?;
    let manifest: CorpusManifest = read_json(&args.manifest)?;

    let skill_of: BTreeMap<String, String> = manifest
        .episodes
        .iter()
        .map(|h| (h.id.clone(), h.skill.clone()))
        .collect();
    let skill_mass = sampler::aggregate_by(&plan.probabilities, |id| {
        skill_of.get(id).map(|s| s.as_str())
    });

    let report = MetricsReport {
        schema_version: 1,
        trajectory: distribution_view(&plan.probabilities)?,
        skill: distribution_view(&skill_mass)?,
        coverage: sampler::coverage_at(&plan.draws, &skill_of),
    };
    write_json(Path::new(&args.out), &report)?;

    println!(
        "analyze: trajectory gini {:.4}, skill gini {:.4} -> {}",
        report.trajectory.gini, report.skill.gini, args.out
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// aml-train
// ---------------------------------------------------------------------------

fn parse_paradigm(s: &str) -> Result<Paradigm, CliError> {
    match s.replace('_', "-").as_str() {
        "a-pred" | "action" | "action-prediction" => Ok(Paradigm::ActionPrediction),
        "v-pred" | "velocity" | "velocity-prediction" => Ok(Paradigm::VelocityPrediction),
        other => Err(CliError::Validation(format!(
            "unknown paradigm '{other}' (expected a-pred or v-pred)"
        ))),
    }
}

fn parse_activation(s: &str) -> Result<Activation, CliError> {
    match s {
        "tanh" => Ok(Activation::Tanh),
        "relu" => Ok(Activation::Relu),
        other => Err(CliError::Validation(format!(
            "unknown activation '{other}' (expected tanh or relu)"
        ))),
    }
}

fn parse_hidden(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|w| {
            w.trim()
                .parse::<usize>()
                .map_err(|e| CliError::Validation(format!("invalid hidden width '{w}': {e}")))
        })
        .collect()
}

pub fn cmd_aml_train(args: AmlTrainArgs) -> Result<(), CliError> {
    let cfg = PipelineConfig::load_opt(args.config.as_deref())?;
    let shard_path = require(args.shard, cfg.paths.shard.clone(), "--shard")?;
    let out = PathBuf::from(require(args.out, cfg.paths.model.clone(), "--out")?);
    let seed = require(args.seed, cfg.train.seed, "--seed")?;

    let defaults = TrainConfig::default();
    let train_cfg = TrainConfig {
        learning_rate: args
            .learning_rate
            .or(cfg.train.learning_rate)
            .unwrap_or(defaults.learning_rate),
        batch_size: args
            .batch_size
            .or(cfg.train.batch_size)
            .unwrap_or(defaults.batch_size),
        steps: args.steps.or(cfg.train.steps).unwrap_or(defaults.steps),
        tau_max: args.tau_max.or(cfg.train.tau_max).unwrap_or(defaults.tau_max),
        tau_distribution: cfg
            .train
            .tau_distribution
            .unwrap_or(defaults.tau_distribution),
        seed,
    };
    let hidden = match (&args.hidden, &cfg.train.hidden) {
        (Some(s), _) => parse_hidden(s)?,
        (None, Some(v)) => v.clone(),
        (None, None) => vec![64, 64],
    };
    let embed_dim = args.embed_dim.or(cfg.train.embed_dim).unwrap_or(8);
    let paradigm = parse_paradigm(
        args.paradigm
            .or(cfg.train.paradigm.clone())
            .as_deref()
            .unwrap_or("a-pred"),
    )?;
    let activation = parse_activation(
        args.activation
            .or(cfg.train.activation.clone())
            .as_deref()
            .unwrap_or("tanh"),
    )?;

    let (h, mut chunks) = shard::read_shard(Path::new(&shard_path))?;
    if let Some(ns_path) = &args.norm_stats {
        let stats: standardize::NormStats = read_json(ns_path)?;
        for c in &mut chunks {
            standardize::apply_norm(c, &stats);
        }
    }
    let data: Vec<ChunkExample> = chunks
        .iter()
        .map(|c| ChunkExample {
            a: c.rows.iter().flatten().copied().collect(),
            ctx: 0,
            state: c.state.to_vec(),
        })
        .collect();

    let mut model = AmlModel::new(
        paradigm,
        activation,
        h as usize,
        ACTION_DIMS,
        ACTION_DIMS,
        1,
        embed_dim,
        &hidden,
        train_cfg.tau_max,
        seed,
    )?;
    let trace = aml::train(&mut model, &data, &train_cfg)?;
    aml::save_checkpoint(&out, &model)?;
    aml::save_trace(&out, &trace)?;

    let last = trace.entries.last();
    println!(
        "aml-train: {} chunks, {} steps, final loss {} -> {}",
        data.len(),
        train_cfg.steps,
        last.map(|e| format!("{:.6}", e.loss)).unwrap_or_else(|| "n/a".into()),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// aml-sample
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SamplesReport {
    schema_version: u32,
    steps: usize,
    seed: u64,
    context: usize,
    samples: Vec<Vec<f64>>,
}

pub fn cmd_aml_sample(args: AmlSampleArgs) -> Result<(), CliError> {
    let seed = require(args.seed, None, "--seed")?;
    let model = aml::load_checkpoint(Path::new(&args.model))?;

    let state: Vec<f64> = match &args.state {
        Some(s) => s
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| CliError::Validation(format!("invalid state value '{v}': {e}")))
            })
            .collect::<Result<_, _>>()?,
        None => vec![0.0; model.state_dim],
    };

    let mut samples = Vec::with_capacity(args.draws);
    for i in 0..args.draws {
        let s = aml::euler_sample(&model, args.context, &state, args.steps, seed, i as u64)?;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Numerical(format!(
                "sample {i} contains non-finite values"
            )));
        }
        samples.push(s);
    }

    write_json(
        Path::new(&args.out),
        &SamplesReport {
            schema_version: 1,
            steps: args.steps,
            seed,
            context: args.context,
            samples,
        },
    )?;

    println!(
        "aml-sample: {} chunks at {} steps -> {}",
        args.draws, args.steps, args.out
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

/// Builds the fixed probe: a three-weight-layer model (two hidden layers
/// plus the output map) and a four-item batch spanning the flow-time range.
fn gradcheck_fixture(paradigm: Paradigm, seed: u64) -> Result<(AmlModel, Vec<TrainItem>), CliError> {
    const H: usize = 2;
    const D: usize = 3;
    const STATE: usize = 2;
    const CONTEXTS: usize = 3;
    let model = AmlModel::new(
        paradigm,
        Activation::Tanh,
        H,
        D,
        STATE,
        CONTEXTS,
        4,
        &[8, 6],
        0.999,
        seed,
    )?;

    let taus = [0.05, 0.35, 0.65, 0.95];
    let mut batch = Vec::new();
    for (i, &tau) in taus.iter().enumerate() {
        let a: Vec<f64> = (0..H * D)
            .map(|j| {
                uact_core::rng::normal_at(seed, uact_core::rng::STREAM_GEN_BASE + 7, (i * H * D + j) as u64 * 2)
            })
            .collect();
        let state: Vec<f64> = (0..STATE)
            .map(|j| {
                uact_core::rng::normal_at(seed, uact_core::rng::STREAM_GEN_BASE + 8, (i * STATE + j) as u64 * 2)
            })
            .collect();
        let sample = aml::make_flow_sample(&a, tau, 0.999, seed, (100 + i) as u64)?;
        batch.push(TrainItem {
            sample,
            ctx: i % CONTEXTS,
            state,
        });
    }
    Ok((model, batch))
}

pub fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    let seed = require(args.seed, None, "--seed")?;
    let paradigm = parse_paradigm(&args.paradigm)?;
    let (model, batch) = gradcheck_fixture(paradigm, seed)?;
    let report = aml::gradcheck(&model, &batch, args.tolerance)?;

    #[derive(Serialize)]
    struct GradcheckOut<'a> {
        schema_version: u32,
        #[serde(flatten)]
        report: &'a aml::GradCheckReport,
    }
    write_json(
        Path::new(&args.out),
        &GradcheckOut {
            schema_version: 1,
            report: &report,
        },
    )?;

    println!(
        "gradcheck: {} params, max relative error {:.3e} (tolerance {:.1e}) -> {}",
        report.params_checked, report.max_rel_err, report.tolerance, args.out
    );
    if !report.ok {
        return Err(CliError::Numerical(format!(
            "gradient check failed: parameter {} off by {:.3e} (tolerance {:.1e})",
            report.worst_param, report.max_rel_err, report.tolerance
        )));
    }
    Ok(())
}
