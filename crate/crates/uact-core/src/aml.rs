//! Flow-matching engine over action chunks, built around clean-action
//! prediction: the network outputs the denoised chunk `Â` and the velocity
//! is reconstructed as `v̂ = (Â − A^τ)/(1 − τ)`.
//!
//! The noisy sample is the straight-line interpolation
//! `A^τ = τ·A + (1 − τ)·ε` with standard normal `ε`, so the ground-truth
//! velocity `(A − A^τ)/(1 − τ)` equals `A − ε` identically in τ. Training
//! minimizes the velocity-space MSE, which per sample equals the
//! action-space error reweighted by `w(τ) = 1/(1 − τ)²` — both sides are
//! exposed for verification. A velocity-prediction variant (the network
//! emits `v̂` directly) shares the training loop and sampler for
//! paradigm comparisons.
//!
//! The backbone is a from-scratch MLP with analytic gradients (checked
//! against central finite differences), conditioned on the noisy chunk,
//! the flow time `τ`, a learned context embedding, and the robot state.
//! Inference integrates `dA/dτ = v̂` with Euler steps on a uniform τ grid;
//! a predictor that nails `Â` makes every step follow the straight line
//! from noise to target, so even a single step is exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"AMLM";
pub const CHECKPOINT_VERSION: u16 = 1;
/// Default flow-time clamp; the velocity weight diverges at τ = 1.
pub const DEFAULT_TAU_MAX: f64 = 0.999;
/// Default denoising step count for inference.
pub const DEFAULT_STEPS: usize = 4;

#[derive(Debug, Error)]
pub enum AmlError {
    #[error("tau {0} outside [0, tau_max]")]
    TauOutOfRange(f64),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("context id {ctx} out of range (model has {n} contexts)")]
    BadContext { ctx: usize, n: usize },
    #[error("invalid model or train config: {0}")]
    BadConfig(String),
    #[error("training diverged (non-finite loss) at step {step}")]
    Diverged { step: usize },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("checkpoint I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u16),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

/// What the network's output layer means.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    /// Output is the clean-action estimate `Â`; velocity is reconstructed.
    ActionPrediction,
    /// Output is the velocity estimate `v̂` directly.
    VelocityPrediction,
}

/// One interpolation point of the noising process.
#[derive(Clone, Debug)]
pub struct FlowSample {
    pub a: Vec<f64>,
    pub eps: Vec<f64>,
    pub tau: f64,
    pub a_tau: Vec<f64>,
}

/// Interpolates a clean chunk toward counter-seeded standard normal noise:
/// `a_tau = tau·a + (1 − tau)·eps`. `noise_index` namespaces the noise so
/// distinct samples of one run never share counters.
pub fn make_flow_sample(
    a: &[f64],
    tau: f64,
    tau_max: f64,
    seed: u64,
    noise_index: u64,
) -> Result<FlowSample, AmlError> {
    if !(0.0..=tau_max).contains(&tau) {
        return Err(AmlError::TauOutOfRange(tau));
    }
    let base = noise_index * a.len() as u64;
    let eps: Vec<f64> = (0..a.len())
        .map(|j| rng::normal_at(seed, rng::STREAM_FLOW_NOISE, base + j as u64))
        .collect();
    let a_tau: Vec<f64> = a
        .iter()
        .zip(&eps)
        .map(|(av, ev)| tau * av + (1.0 - tau) * ev)
        .collect();
    Ok(FlowSample {
        a: a.to_vec(),
        eps,
        tau,
        a_tau,
    })
}

/// Ground-truth velocity `(a − a_tau)/(1 − tau)`; algebraically equal to
/// `a − eps` for every τ.
pub fn velocity_target(s: &FlowSample) -> Vec<f64> {
    let inv = 1.0 / (1.0 - s.tau);
    s.a
        .iter()
        .zip(&s.a_tau)
        .map(|(a, at)| (a - at) * inv)
        .collect()
}

#[derive(Clone, Debug)]
pub struct Layer {
    /// Row-major `rows x cols` weight matrix.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

/// MLP over `[a_tau, tau, context embedding, state]` producing an H×D
/// output interpreted per the paradigm.
#[derive(Clone, Debug)]
pub struct AmlModel {
    pub paradigm: Paradigm,
    pub activation: Activation,
    pub h: usize,
    pub d: usize,
    pub state_dim: usize,
    pub n_contexts: usize,
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    pub tau_max: f64,
    /// Row-major `n_contexts x embed_dim` embedding table.
    pub embed: Vec<f64>,
    pub layers: Vec<Layer>,
}

impl AmlModel {
    /// Fresh model with `1/sqrt(fan_in)`-scaled normal weights, zero
    /// biases, and a small-scale embedding, all drawn from the
    /// weight-init stream of `seed`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        paradigm: Paradigm,
        activation: Activation,
        h: usize,
        d: usize,
        state_dim: usize,
        n_contexts: usize,
        embed_dim: usize,
        hidden: &[usize],
        tau_max: f64,
        seed: u64,
    ) -> Result<Self, AmlError> {
        if h == 0 || d == 0 {
            return Err(AmlError::BadConfig("chunk dimensions must be positive".into()));
        }
        if n_contexts == 0 {
            return Err(AmlError::BadConfig("at least one context id is required".into()));
        }
        if hidden.iter().any(|&w| w == 0) {
            return Err(AmlError::BadConfig("hidden widths must be positive".into()));
        }
        if !(tau_max > 0.0 && tau_max < 1.0) {
            return Err(AmlError::BadConfig(format!("tau_max {tau_max} outside (0, 1)")));
        }
        let mut counter = 0u64;
        let mut draw = |scale: f64| {
            let v = scale * rng::normal_at(seed, rng::STREAM_WEIGHT_INIT, counter);
            counter += 1;
            v
        };
        let embed: Vec<f64> = (0..n_contexts * embed_dim).map(|_| draw(0.1)).collect();
        let input_dim = h * d + 1 + embed_dim + state_dim;
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input_dim);
        widths.extend_from_slice(hidden);
        widths.push(h * d);
        let layers = widths
            .windows(2)
            .map(|pair| {
                let (cols, rows) = (pair[0], pair[1]);
                let scale = 1.0 / (cols as f64).sqrt();
                Layer {
                    w: (0..rows * cols).map(|_| draw(scale)).collect(),
                    b: vec![0.0; rows],
                    rows,
                    cols,
                }
            })
            .collect();
        Ok(AmlModel {
            paradigm,
            activation,
            h,
            d,
            state_dim,
            n_contexts,
            embed_dim,
            hidden: hidden.to_vec(),
            tau_max,
            embed,
            layers,
        })
    }

    pub fn action_len(&self) -> usize {
        self.h * self.d
    }

    pub fn input_dim(&self) -> usize {
        self.action_len() + 1 + self.embed_dim + self.state_dim
    }

    pub fn param_count(&self) -> usize {
        self.embed.len()
            + self
                .layers
                .iter()
                .map(|l| l.w.len() + l.b.len())
                .sum::<usize>()
    }

    fn check_io(&self, a_tau: &[f64], ctx: usize, state: &[f64]) -> Result<(), AmlError> {
        if a_tau.len() != self.action_len() {
            return Err(AmlError::DimMismatch(format!(
                "chunk of {} values, model expects {}",
                a_tau.len(),
                self.action_len()
            )));
        }
        if state.len() != self.state_dim {
            return Err(AmlError::DimMismatch(format!(
                "state of {} values, model expects {}",
                state.len(),
                self.state_dim
            )));
        }
        if ctx >= self.n_contexts {
            return Err(AmlError::BadContext {
                ctx,
                n: self.n_contexts,
            });
        }
        Ok(())
    }
}

fn activate(kind: Activation, x: f64) -> f64 {
    match kind {
        Activation::Tanh => x.tanh(),
        Activation::Relu => x.max(0.0),
    }
}

fn activate_grad(kind: Activation, pre: f64) -> f64 {
    match kind {
        Activation::Tanh => {
            let t = pre.tanh();
            1.0 - t * t
        }
        Activation::Relu => {
            if pre > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

struct ForwardCache {
    input: Vec<f64>,
    /// Pre-activations per layer; the last layer is linear.
    pre: Vec<Vec<f64>>,
    /// Post-activations per layer.
    post: Vec<Vec<f64>>,
}

fn forward(m: &AmlModel, a_tau: &[f64], tau: f64, ctx: usize, state: &[f64]) -> ForwardCache {
    let mut input = Vec::with_capacity(m.input_dim());
    input.extend_from_slice(a_tau);
    input.push(tau);
    input.extend_from_slice(&m.embed[ctx * m.embed_dim..(ctx + 1) * m.embed_dim]);
    input.extend_from_slice(state);
    let mut pre = Vec::with_capacity(m.layers.len());
    let mut post = Vec::with_capacity(m.layers.len());
    let mut x = input.clone();
    for (li, layer) in m.layers.iter().enumerate() {
        let mut z = layer.b.clone();
        for r in 0..layer.rows {
            let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
            let mut acc = 0.0;
            for (wv, xv) in row.iter().zip(&x) {
                acc += wv * xv;
            }
            z[r] += acc;
        }
        let last = li + 1 == m.layers.len();
        let a: Vec<f64> = if last {
            z.clone()
        } else {
            z.iter().map(|&v| activate(m.activation, v)).collect()
        };
        pre.push(z);
        post.push(a.clone());
        x = a;
    }
    ForwardCache { input, pre, post }
}

/// Clean-action and velocity estimates for one noisy chunk.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub a_hat: Vec<f64>,
    pub v_hat: Vec<f64>,
}

/// Runs the network and reconstructs both surfaces from its output under
/// the model's paradigm.
pub fn predict(
    m: &AmlModel,
    a_tau: &[f64],
    tau: f64,
    ctx: usize,
    state: &[f64],
) -> Result<Prediction, AmlError> {
    m.check_io(a_tau, ctx, state)?;
    if !(0.0..1.0).contains(&tau) {
        return Err(AmlError::TauOutOfRange(tau));
    }
    let cache = forward(m, a_tau, tau, ctx, state);
    let out = cache.post.last().expect("at least one layer");
    Ok(reconstruct(m.paradigm, out, a_tau, tau))
}

fn reconstruct(paradigm: Paradigm, out: &[f64], a_tau: &[f64], tau: f64) -> Prediction {
    match paradigm {
        Paradigm::ActionPrediction => {
            let inv = 1.0 / (1.0 - tau);
            let v_hat = out
                .iter()
                .zip(a_tau)
                .map(|(o, at)| (o - at) * inv)
                .collect();
            Prediction {
                a_hat: out.to_vec(),
                v_hat,
            }
        }
        Paradigm::VelocityPrediction => {
            let a_hat = out
                .iter()
                .zip(a_tau)
                .map(|(o, at)| at + (1.0 - tau) * o)
                .collect();
            Prediction {
                a_hat,
                v_hat: out.to_vec(),
            }
        }
    }
}

/// One training example: a flow sample plus its conditioning.
#[derive(Clone, Debug)]
pub struct TrainItem {
    pub sample: FlowSample,
    pub ctx: usize,
    pub state: Vec<f64>,
}

/// Per-sample loss decomposition: the velocity-space error, the raw
/// action-space error, and the τ weight tying them together
/// (`v_loss == weight · a_loss` up to rounding).
#[derive(Clone, Copy, Debug)]
pub struct SampleLosses {
    pub v_loss: f64,
    pub a_loss: f64,
    pub weight: f64,
}

/// Computes both error surfaces for one item without touching gradients.
pub fn sample_losses(m: &AmlModel, item: &TrainItem) -> Result<SampleLosses, AmlError> {
    let p = predict(m, &item.sample.a_tau, item.sample.tau, item.ctx, &item.state)?;
    let v = velocity_target(&item.sample);
    let v_loss: f64 = p
        .v_hat
        .iter()
        .zip(&v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let a_loss: f64 = p
        .a_hat
        .iter()
        .zip(&item.sample.a)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let one = 1.0 - item.sample.tau;
    Ok(SampleLosses {
        v_loss,
        a_loss,
        weight: 1.0 / (one * one),
    })
}

/// Parameter gradients, laid out exactly like the model's parameters.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub embed: Vec<f64>,
    /// Per layer: (dW row-major, db).
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    fn zeros(m: &AmlModel) -> Self {
        Gradients {
            embed: vec![0.0; m.embed.len()],
            layers: m
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
        }
    }
}

/// Batch loss (mean over items of the squared velocity-error Frobenius
/// norm) with analytic gradients; also returns the unweighted action-space
/// MSE for logging.
pub fn loss_and_grads(
    m: &AmlModel,
    batch: &[TrainItem],
) -> Result<(f64, f64, Gradients), AmlError> {
    if batch.is_empty() {
        return Err(AmlError::EmptyDataset);
    }
    let mut grads = Gradients::zeros(m);
    let mut loss = 0.0;
    let mut a_mse = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for item in batch {
        let s = &item.sample;
        m.check_io(&s.a_tau, item.ctx, &item.state)?;
        if !(0.0..1.0).contains(&s.tau) {
            return Err(AmlError::TauOutOfRange(s.tau));
        }
        let cache = forward(m, &s.a_tau, s.tau, item.ctx, &item.state);
        let out = cache.post.last().expect("layers");
        let pred = reconstruct(m.paradigm, out, &s.a_tau, s.tau);
        let v = velocity_target(s);
        let v_loss: f64 = pred
            .v_hat
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let a_loss: f64 = pred
            .a_hat
            .iter()
            .zip(&s.a)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        loss += v_loss * scale;
        a_mse += a_loss * scale;
        // d(loss)/d(out): both paradigms reduce to a residual times a
        // τ-dependent factor applied to the raw output.
        let dout: Vec<f64> = match m.paradigm {
            Paradigm::ActionPrediction => {
                let w = 1.0 / ((1.0 - s.tau) * (1.0 - s.tau));
                out.iter()
                    .zip(&s.a)
                    .map(|(o, a)| 2.0 * w * (o - a) * scale)
                    .collect()
            }
            Paradigm::VelocityPrediction => out
                .iter()
                .zip(&v)
                .map(|(o, t)| 2.0 * (o - t) * scale)
                .collect(),
        };
        backward(m, &cache, &dout, item.ctx, &mut grads);
    }
    Ok((loss, a_mse, grads))
}

fn backward(m: &AmlModel, cache: &ForwardCache, dout: &[f64], ctx: usize, grads: &mut Gradients) {
    let mut delta = dout.to_vec();
    for li in (0..m.layers.len()).rev() {
        let layer = &m.layers[li];
        let below: &[f64] = if li == 0 {
            &cache.input
        } else {
            &cache.post[li - 1]
        };
        let (dw, db) = &mut grads.layers[li];
        for r in 0..layer.rows {
            db[r] += delta[r];
            let row = &mut dw[r * layer.cols..(r + 1) * layer.cols];
            for (slot, x) in row.iter_mut().zip(below) {
                *slot += delta[r] * x;
            }
        }
        let mut dbelow = vec![0.0; layer.cols];
        for r in 0..layer.rows {
            let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
            for (slot, wv) in dbelow.iter_mut().zip(row) {
                *slot += delta[r] * wv;
            }
        }
        if li > 0 {
            for (slot, pre) in dbelow.iter_mut().zip(&cache.pre[li - 1]) {
                *slot *= activate_grad(m.activation, *pre);
            }
            delta = dbelow;
        } else {
            // Only the embedding segment of the input is learned.
            let start = m.action_len() + 1;
            let seg = &dbelow[start..start + m.embed_dim];
            let row = &mut grads.embed[ctx * m.embed_dim..(ctx + 1) * m.embed_dim];
            for (slot, g) in row.iter_mut().zip(seg) {
                *slot += g;
            }
        }
    }
}

fn apply_step(m: &mut AmlModel, grads: &Gradients, lr: f64) {
    if lr == 0.0 {
        return;
    }
    for (p, g) in m.embed.iter_mut().zip(&grads.embed) {
        *p -= lr * g;
    }
    for (layer, (dw, db)) in m.layers.iter_mut().zip(&grads.layers) {
        for (p, g) in layer.w.iter_mut().zip(dw) {
            *p -= lr * g;
        }
        for (p, g) in layer.b.iter_mut().zip(db) {
            *p -= lr * g;
        }
    }
}

/// Flow-time distribution for training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TauDistribution {
    Uniform,
    /// Beta(alpha, beta) with integer shapes, realized as the alpha-th
    /// smallest of `alpha + beta - 1` uniforms.
    Beta { alpha: u32, beta: u32 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub tau_max: f64,
    pub tau_distribution: TauDistribution,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.02,
            batch_size: 64,
            steps: 2000,
            tau_max: DEFAULT_TAU_MAX,
            tau_distribution: TauDistribution::Uniform,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), AmlError> {
        if self.batch_size == 0 || self.steps == 0 {
            return Err(AmlError::BadConfig("batch size and steps must be positive".into()));
        }
        if !(self.tau_max > 0.0 && self.tau_max < 1.0) {
            return Err(AmlError::BadConfig(format!("tau_max {} outside (0, 1)", self.tau_max)));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(AmlError::BadConfig(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if let TauDistribution::Beta { alpha, beta } = self.tau_distribution {
            if alpha == 0 || beta == 0 {
                return Err(AmlError::BadConfig("beta shapes must be at least 1".into()));
            }
        }
        Ok(())
    }
}

fn draw_tau(dist: TauDistribution, tau_max: f64, seed: u64, index: u64) -> f64 {
    match dist {
        TauDistribution::Uniform => tau_max * rng::unit_f64_at(seed, rng::STREAM_TAU, index),
        TauDistribution::Beta { alpha, beta } => {
            // Order statistic: the alpha-th smallest of alpha+beta-1
            // uniforms is Beta(alpha, beta)-distributed.
            let n = (alpha + beta - 1) as u64;
            let base = index * n;
            let mut us: Vec<f64> = (0..n)
                .map(|k| rng::unit_f64_at(seed, rng::STREAM_TAU, base + k))
                .collect();
            us.sort_by(|a, b| a.partial_cmp(b).expect("finite uniforms"));
            tau_max * us[(alpha - 1) as usize]
        }
    }
}

/// One training chunk: flattened H×D action values plus conditioning.
#[derive(Clone, Debug)]
pub struct ChunkExample {
    pub a: Vec<f64>,
    pub ctx: usize,
    pub state: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub loss: f64,
    pub v_mse: f64,
    pub a_mse: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainTrace {
    pub schema_version: u32,
    pub entries: Vec<TraceEntry>,
}

/// Plain fixed-step gradient descent on the velocity-space loss. Batch
/// assembly is keyed by `(seed, step, slot)` counters, so the run is
/// bitwise deterministic. A non-finite loss aborts with its step index.
pub fn train(
    m: &mut AmlModel,
    data: &[ChunkExample],
    cfg: &TrainConfig,
) -> Result<TrainTrace, AmlError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(AmlError::EmptyDataset);
    }
    for (i, ex) in data.iter().enumerate() {
        if ex.a.len() != m.action_len() || ex.state.len() != m.state_dim {
            return Err(AmlError::DimMismatch(format!(
                "training chunk {i} has {} action and {} state values; model expects {} and {}",
                ex.a.len(),
                ex.state.len(),
                m.action_len(),
                m.state_dim
            )));
        }
        if ex.ctx >= m.n_contexts {
            return Err(AmlError::BadContext {
                ctx: ex.ctx,
                n: m.n_contexts,
            });
        }
    }
    m.tau_max = cfg.tau_max;
    let mut entries = Vec::with_capacity(cfg.steps);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for step in 0..cfg.steps {
        batch.clear();
        for slot in 0..cfg.batch_size {
            let idx = (step * cfg.batch_size + slot) as u64;
            let pick =
                (rng::u64_at(cfg.seed, rng::STREAM_BATCH, idx) % data.len() as u64) as usize;
            let tau = draw_tau(cfg.tau_distribution, cfg.tau_max, cfg.seed, idx);
            let sample = make_flow_sample(&data[pick].a, tau, cfg.tau_max, cfg.seed, idx)?;
            batch.push(TrainItem {
                sample,
                ctx: data[pick].ctx,
                state: data[pick].state.clone(),
            });
        }
        let (loss, a_mse, grads) = loss_and_grads(m, &batch)?;
        if !loss.is_finite() {
            return Err(AmlError::Diverged { step });
        }
        apply_step(m, &grads, cfg.learning_rate);
        entries.push(TraceEntry {
            step,
            loss,
            v_mse: loss,
            a_mse,
        });
    }
    Ok(TrainTrace {
        schema_version: 1,
        entries,
    })
}

/// Euler integration of `dA/dτ = v̂` from explicit starting noise over a
/// uniform τ grid (`Δτ = 1/steps`), returning every intermediate state
/// (`steps + 1` entries, the last being the sample). τ is clamped at the
/// model's `tau_max` inside the velocity formula.
pub fn euler_trajectory(
    m: &AmlModel,
    ctx: usize,
    state: &[f64],
    steps: usize,
    a0: &[f64],
) -> Result<Vec<Vec<f64>>, AmlError> {
    if steps == 0 {
        return Err(AmlError::BadConfig("at least one denoising step is required".into()));
    }
    m.check_io(a0, ctx, state)?;
    let dt = 1.0 / steps as f64;
    let mut a = a0.to_vec();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(a.clone());
    for k in 0..steps {
        let tau = (k as f64 * dt).min(m.tau_max);
        let p = predict(m, &a, tau, ctx, state)?;
        for (av, vv) in a.iter_mut().zip(&p.v_hat) {
            *av += dt * vv;
        }
        states.push(a.clone());
    }
    Ok(states)
}

/// Draws starting noise from the sampling stream (namespaced by
/// `sample_index`) and integrates to a final action chunk.
pub fn euler_sample(
    m: &AmlModel,
    ctx: usize,
    state: &[f64],
    steps: usize,
    seed: u64,
    sample_index: u64,
) -> Result<Vec<f64>, AmlError> {
    let base = sample_index * m.action_len() as u64;
    let a0: Vec<f64> = (0..m.action_len())
        .map(|j| rng::normal_at(seed, rng::STREAM_SAMPLE_NOISE, base + j as u64))
        .collect();
    Ok(euler_trajectory(m, ctx, state, steps, &a0)?
        .pop()
        .expect("trajectory is non-empty"))
}

// --- flat parameter views (finite-difference checking, tests) ---

pub fn param_get(m: &AmlModel, i: usize) -> f64 {
    let mut i = i;
    if i < m.embed.len() {
        return m.embed[i];
    }
    i -= m.embed.len();
    for l in &m.layers {
        if i < l.w.len() {
            return l.w[i];
        }
        i -= l.w.len();
        if i < l.b.len() {
            return l.b[i];
        }
        i -= l.b.len();
    }
    panic!("parameter index out of range");
}

pub fn param_add(m: &mut AmlModel, i: usize, delta: f64) {
    let mut i = i;
    if i < m.embed.len() {
        m.embed[i] += delta;
        return;
    }
    i -= m.embed.len();
    for l in &mut m.layers {
        if i < l.w.len() {
            l.w[i] += delta;
            return;
        }
        i -= l.w.len();
        if i < l.b.len() {
            l.b[i] += delta;
            return;
        }
        i -= l.b.len();
    }
    panic!("parameter index out of range");
}

pub fn grad_get(g: &Gradients, i: usize) -> f64 {
    let mut i = i;
    if i < g.embed.len() {
        return g.embed[i];
    }
    i -= g.embed.len();
    for (dw, db) in &g.layers {
        if i < dw.len() {
            return dw[i];
        }
        i -= dw.len();
        if i < db.len() {
            return db[i];
        }
        i -= db.len();
    }
    panic!("gradient index out of range");
}

/// Result of comparing analytic gradients against central finite
/// differences over a fixed batch.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub params_checked: usize,
    pub max_rel_err: f64,
    pub worst_param: usize,
    pub tolerance: f64,
    pub ok: bool,
}

/// Central-difference gradient check (step 1e-5) of every parameter
/// against the analytic backward pass; relative error uses
/// `max(|analytic| + |numeric|, 1e-8)` as the denominator.
pub fn gradcheck(m: &AmlModel, batch: &[TrainItem], tolerance: f64) -> Result<GradCheckReport, AmlError> {
    const STEP: f64 = 1e-5;
    let (_, _, grads) = loss_and_grads(m, batch)?;
    let mut probe = m.clone();
    let mut max_rel = 0.0f64;
    let mut worst = 0usize;
    let n = m.param_count();
    for i in 0..n {
        param_add(&mut probe, i, STEP);
        let (up, _, _) = loss_and_grads(&probe, batch)?;
        param_add(&mut probe, i, -2.0 * STEP);
        let (down, _, _) = loss_and_grads(&probe, batch)?;
        param_add(&mut probe, i, STEP);
        let numeric = (up - down) / (2.0 * STEP);
        let analytic = grad_get(&grads, i);
        let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
        if rel > max_rel {
            max_rel = rel;
            worst = i;
        }
    }
    Ok(GradCheckReport {
        params_checked: n,
        max_rel_err: max_rel,
        worst_param: worst,
        tolerance,
        ok: max_rel < tolerance,
    })
}

// --- checkpoint I/O ---

fn paradigm_byte(p: Paradigm) -> u8 {
    match p {
        Paradigm::ActionPrediction => 0,
        Paradigm::VelocityPrediction => 1,
    }
}

fn activation_byte(a: Activation) -> u8 {
    match a {
        Activation::Tanh => 0,
        Activation::Relu => 1,
    }
}

/// Serializes a model to checkpoint bytes (little-endian, f64 parameters).
pub fn encode_checkpoint(m: &AmlModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(paradigm_byte(m.paradigm));
    out.push(activation_byte(m.activation));
    for v in [
        m.h as u32,
        m.d as u32,
        m.state_dim as u32,
        m.n_contexts as u32,
        m.embed_dim as u32,
        m.hidden.len() as u32,
        0u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for w in &m.hidden {
        out.extend_from_slice(&(*w as u32).to_le_bytes());
    }
    out.extend_from_slice(&m.tau_max.to_le_bytes());
    for v in &m.embed {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for l in &m.layers {
        for v in &l.w {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &l.b {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AmlError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| AmlError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, AmlError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, AmlError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, AmlError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses checkpoint bytes back into a model.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<AmlModel, AmlError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(AmlError::BadMagic);
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(AmlError::BadVersion(version));
    }
    let paradigm = match r.take(1)?[0] {
        0 => Paradigm::ActionPrediction,
        1 => Paradigm::VelocityPrediction,
        other => return Err(AmlError::Corrupt(format!("paradigm byte {other}"))),
    };
    let activation = match r.take(1)?[0] {
        0 => Activation::Tanh,
        1 => Activation::Relu,
        other => return Err(AmlError::Corrupt(format!("activation byte {other}"))),
    };
    let h = r.u32()? as usize;
    let d = r.u32()? as usize;
    let state_dim = r.u32()? as usize;
    let n_contexts = r.u32()? as usize;
    let embed_dim = r.u32()? as usize;
    let hidden_count = r.u32()? as usize;
    let reserved = r.u32()?;
    if reserved != 0 {
        return Err(AmlError::Corrupt(format!("reserved field {reserved}")));
    }
    if h == 0 || d == 0 || n_contexts == 0 {
        return Err(AmlError::Corrupt("zero model dimensions".to_string()));
    }
    let mut hidden = Vec::with_capacity(hidden_count);
    for _ in 0..hidden_count {
        let w = r.u32()? as usize;
        if w == 0 {
            return Err(AmlError::Corrupt("zero hidden width".to_string()));
        }
        hidden.push(w);
    }
    let tau_max = r.f64()?;
    if !(tau_max > 0.0 && tau_max < 1.0) {
        return Err(AmlError::Corrupt(format!("tau_max {tau_max}")));
    }
    let mut embed = Vec::with_capacity(n_contexts * embed_dim);
    for _ in 0..n_contexts * embed_dim {
        embed.push(r.f64()?);
    }
    let input_dim = h * d + 1 + embed_dim + state_dim;
    let mut widths = vec![input_dim];
    widths.extend_from_slice(&hidden);
    widths.push(h * d);
    let mut layers = Vec::with_capacity(widths.len() - 1);
    for pair in widths.windows(2) {
        let (cols, rows) = (pair[0], pair[1]);
        let mut w = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            w.push(r.f64()?);
        }
        let mut b = Vec::with_capacity(rows);
        for _ in 0..rows {
            b.push(r.f64()?);
        }
        layers.push(Layer { w, b, rows, cols });
    }
    if r.pos != bytes.len() {
        return Err(AmlError::Corrupt(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let m = AmlModel {
        paradigm,
        activation,
        h,
        d,
        state_dim,
        n_contexts,
        embed_dim,
        hidden,
        tau_max,
        embed,
        layers,
    };
    if m.embed.iter().any(|v| !v.is_finite())
        || m.layers
            .iter()
            .any(|l| l.w.iter().chain(&l.b).any(|v| !v.is_finite()))
    {
        return Err(AmlError::Corrupt("non-finite parameters".to_string()));
    }
    Ok(m)
}

pub fn save_checkpoint(path: &Path, m: &AmlModel) -> Result<(), AmlError> {
    fs::write(path, encode_checkpoint(m))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<AmlModel, AmlError> {
    decode_checkpoint(&fs::read(path)?)
}

/// Writes the training-trace sidecar next to a checkpoint.
pub fn save_trace(checkpoint: &Path, trace: &TrainTrace) -> Result<(), AmlError> {
    let mut name = checkpoint
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(".trace.json");
    let path = checkpoint.with_file_name(name);
    fs::write(path, serde_json::to_vec(trace).expect("trace serializes"))?;
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn flow_sample_interpolates_between_noise_and_action() {
        let a = vec![2.0, -1.0, 0.5];
        let s0 = make_flow_sample(&a, 0.0, DEFAULT_TAU_MAX, 1, 0).unwrap();
        assert_eq!(s0.a_tau, s0.eps, "tau = 0 sits at pure noise");
        let s = make_flow_sample(&a, 0.5, DEFAULT_TAU_MAX, 1, 0).unwrap();
        for ((at, av), ev) in s.a_tau.iter().zip(&a).zip(&s.eps) {
            assert!((at - (0.5 * av + 0.5 * ev)).abs() < 1e-15);
        }
    }

    #[test]
    fn flow_sample_with_matching_noise_is_a_fixed_point() {
        let a = vec![1.0, 2.0];
        let probe = make_flow_sample(&a, 0.3, DEFAULT_TAU_MAX, 9, 4).unwrap();
        // Rebuild with A set to the drawn noise: interpolation collapses.
        let s = make_flow_sample(&probe.eps, DEFAULT_TAU_MAX, DEFAULT_TAU_MAX, 9, 4).unwrap();
        for (at, av) in s.a_tau.iter().zip(&probe.eps) {
            assert!((at - av).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_tau_is_rejected() {
        let a = vec![0.0];
        assert!(matches!(
            make_flow_sample(&a, -0.1, DEFAULT_TAU_MAX, 1, 0),
            Err(AmlError::TauOutOfRange(_))
        ));
        assert!(matches!(
            make_flow_sample(&a, 0.9995, DEFAULT_TAU_MAX, 1, 0),
            Err(AmlError::TauOutOfRange(_))
        ));
    }

    #[test]
    fn velocity_target_equals_action_minus_noise_for_every_tau() {
        let a: Vec<f64> = (0..12).map(|i| rng::normal_at(3, 23, i)).collect();
        for k in 0..=20 {
            let tau = DEFAULT_TAU_MAX * k as f64 / 20.0;
            let s = make_flow_sample(&a, tau, DEFAULT_TAU_MAX, 3, k).unwrap();
            let v = velocity_target(&s);
            for ((vv, av), ev) in v.iter().zip(&s.a).zip(&s.eps) {
                assert!(
                    (vv - (av - ev)).abs() < 1e-12,
                    "tau {tau}: {} vs {}",
                    vv,
                    av - ev
                );
            }
        }
    }

    #[test]
    fn prediction_rearranges_back_to_the_raw_output() {
        let m = small_model(Paradigm::ActionPrediction, 5);
        let item = random_item(&m, 5, 0, 0.4);
        let p = predict(&m, &item.sample.a_tau, 0.4, item.ctx, &item.state).unwrap();
        for ((vh, at), ah) in p.v_hat.iter().zip(&item.sample.a_tau).zip(&p.a_hat) {
            assert!((vh * (1.0 - 0.4) + at - ah).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weight_model_predicts_its_bias() {
        let m = small_model(Paradigm::ActionPrediction, 6);
        let target = vec![0.25; 6];
        let m = crate::toy::constant_model(m, &target);
        let item = random_item(&m, 6, 1, 0.3);
        let p = predict(&m, &item.sample.a_tau, 0.3, 0, &item.state).unwrap();
        assert_eq!(p.a_hat, target);
        for ((vh, at), t) in p.v_hat.iter().zip(&item.sample.a_tau).zip(&target) {
            assert!((vh - (t - at) / 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn per_sample_velocity_loss_is_the_weighted_action_loss() {
        let m = small_model(Paradigm::ActionPrediction, 7);
        for i in 0..200u64 {
            let tau = DEFAULT_TAU_MAX * rng::unit_f64_at(7, 24, i);
            let item = random_item(&m, 7, i, tau);
            let l = sample_losses(&m, &item).unwrap();
            let weighted = l.weight * l.a_loss;
            let rel = (l.v_loss - weighted).abs() / l.v_loss.max(1e-30);
            assert!(rel < 1e-10, "sample {i}: rel {rel}");
        }
    }

    #[test]
    fn scalar_loss_example_at_half_tau() {
        // Output off by 0.1 at tau = 0.5: velocity loss is 0.04.
        let m = AmlModel::new(
            Paradigm::ActionPrediction,
            Activation::Tanh,
            1,
            1,
            0,
            1,
            0,
            &[],
            DEFAULT_TAU_MAX,
            0,
        )
        .unwrap();
        let a = vec![0.7];
        let m = crate::toy::constant_model(m, &[0.8]);
        let sample = make_flow_sample(&a, 0.5, DEFAULT_TAU_MAX, 1, 0).unwrap();
        let item = TrainItem {
            sample,
            ctx: 0,
            state: vec![],
        };
        let l = sample_losses(&m, &item).unwrap();
        assert!((l.a_loss - 0.01).abs() < 1e-12);
        assert!((l.v_loss - 0.04).abs() < 1e-12);
        assert!((l.weight - 4.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_has_zero_loss_and_gradients() {
        let m = small_model(Paradigm::ActionPrediction, 8);
        let a: Vec<f64> = (0..6).map(|i| 0.1 * i as f64).collect();
        let m = crate::toy::constant_model(m, &a);
        let sample = make_flow_sample(&a, 0.5, DEFAULT_TAU_MAX, 2, 0).unwrap();
        let item = TrainItem {
            sample,
            ctx: 0,
            state: vec![0.0, 0.0],
        };
        let (loss, a_mse, grads) = loss_and_grads(&m, &[item]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(a_mse, 0.0);
        for i in 0..m.param_count() {
            assert_eq!(grad_get(&grads, i), 0.0);
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences_apred() {
        let m = small_model(Paradigm::ActionPrediction, 11);
        let batch: Vec<TrainItem> = (0..4)
            .map(|i| random_item(&m, 11, i, 0.1 + 0.2 * i as f64))
            .collect();
        let report = gradcheck(&m, &batch, 1e-5).unwrap();
        assert!(
            report.ok,
            "worst parameter {} at rel err {}",
            report.worst_param, report.max_rel_err
        );
    }

    #[test]
    fn analytic_gradients_match_finite_differences_vpred() {
        let m = small_model(Paradigm::VelocityPrediction, 12);
        let batch: Vec<TrainItem> = (0..4)
            .map(|i| random_item(&m, 12, i, 0.15 + 0.2 * i as f64))
            .collect();
        let report = gradcheck(&m, &batch, 1e-5).unwrap();
        assert!(
            report.ok,
            "worst parameter {} at rel err {}",
            report.worst_param, report.max_rel_err
        );
    }

    #[test]
    fn relu_gradients_also_check_out() {
        let mut m = small_model(Paradigm::ActionPrediction, 13);
        m.activation = Activation::Relu;
        let batch: Vec<TrainItem> = (0..4).map(|i| random_item(&m, 13, i, 0.3)).collect();
        let report = gradcheck(&m, &batch, 1e-4).unwrap();
        assert!(report.ok, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn oracle_model_samples_exactly_in_one_step() {
        let m = small_model(Paradigm::ActionPrediction, 14);
        let target = vec![0.3, -0.2, 0.9, 0.0, 0.4, -0.5];
        let m = crate::toy::constant_model(m, &target);
        for steps in [1usize, 2, 4, 10] {
            let out = euler_sample(&m, 0, &[0.0, 0.0], steps, 77, steps as u64).unwrap();
            for (o, t) in out.iter().zip(&target) {
                assert!(
                    (o - t).abs() < 1e-9,
                    "steps {steps}: {o} vs {t}"
                );
            }
        }
    }

    #[test]
    fn oracle_intermediates_lie_on_the_straight_line() {
        let m = small_model(Paradigm::ActionPrediction, 15);
        let target = vec![1.0, 0.5, -0.25, 2.0, 0.0, -1.0];
        let m = crate::toy::constant_model(m, &target);
        let a0 = vec![0.4, -1.2, 0.9, 0.1, -0.3, 0.7];
        let states = euler_trajectory(&m, 0, &[0.0, 0.0], 4, &a0).unwrap();
        assert_eq!(states.len(), 5);
        for (k, st) in states.iter().enumerate() {
            let tau = k as f64 / 4.0;
            for ((s, a), t) in st.iter().zip(&a0).zip(&target) {
                let line = tau * t + (1.0 - tau) * a;
                assert!((s - line).abs() < 1e-12, "step {k} off the line");
            }
        }
    }

    #[test]
    fn vpred_oracle_reaches_the_target_in_one_step() {
        let m = small_model(Paradigm::VelocityPrediction, 16);
        let target = vec![0.2, 0.4, -0.6, 0.8, -1.0, 1.2];
        // Reproduce the noise euler_sample will draw for sample_index 3.
        let base = 3 * m.action_len() as u64;
        let a0: Vec<f64> = (0..m.action_len())
            .map(|j| rng::normal_at(55, rng::STREAM_SAMPLE_NOISE, base + j as u64))
            .collect();
        let bias: Vec<f64> = target.iter().zip(&a0).map(|(t, a)| t - a).collect();
        let m = crate::toy::constant_model(m, &bias);
        let out = euler_sample(&m, 0, &[0.0, 0.0], 1, 55, 3).unwrap();
        for (o, t) in out.iter().zip(&target) {
            assert!((o - t).abs() < 1e-12);
        }
    }

    #[test]
    fn training_memorizes_a_single_point() {
        let mut m = AmlModel::new(
            Paradigm::ActionPrediction,
            Activation::Tanh,
            1,
            2,
            0,
            1,
            0,
            &[32, 32],
            DEFAULT_TAU_MAX,
            3,
        )
        .unwrap();
        let data = vec![ChunkExample {
            a: vec![0.6, -0.8],
            ctx: 0,
            state: vec![],
        }];
        // The velocity weight 1/(1-tau)^2 reaches 25 at tau_max = 0.8;
        // the learning rate sits under the fixed-step stability bound for
        // that worst case.
        let cfg = TrainConfig {
            learning_rate: 0.02,
            batch_size: 128,
            steps: 6000,
            tau_max: 0.8,
            seed: 4,
            ..TrainConfig::default()
        };
        let trace = train(&mut m, &data, &cfg).unwrap();
        assert_eq!(trace.entries.len(), 6000);
        let tail: f64 = trace.entries[5950..]
            .iter()
            .map(|e| e.a_mse)
            .sum::<f64>()
            / 50.0;
        assert!(tail < 1e-4, "memorization stalled at action mse {tail}");
        assert!(trace.entries[0].loss > trace.entries.last().unwrap().loss);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_bitwise_unchanged() {
        let m = small_model(Paradigm::ActionPrediction, 17);
        let before = encode_checkpoint(&m);
        let data = crate::toy::circle_points(8, 1);
        // The circle dataset is stateless/contextless; adapt dims.
        let mut m2 = AmlModel::new(
            Paradigm::ActionPrediction,
            Activation::Tanh,
            1,
            2,
            0,
            1,
            0,
            &[8],
            DEFAULT_TAU_MAX,
            17,
        )
        .unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 4,
            steps: 10,
            seed: 1,
            ..TrainConfig::default()
        };
        let snapshot = encode_checkpoint(&m2);
        train(&mut m2, &data, &cfg).unwrap();
        assert_eq!(encode_checkpoint(&m2), snapshot);
        // The unrelated model was never trained; its bytes also stand.
        assert_eq!(encode_checkpoint(&m), before);
    }

    #[test]
    fn same_seed_gives_identical_traces_and_parameters() {
        let data = crate::toy::circle_points(32, 2);
        let build = || {
            AmlModel::new(
                Paradigm::ActionPrediction,
                Activation::Tanh,
                1,
                2,
                0,
                1,
                0,
                &[16],
                DEFAULT_TAU_MAX,
                9,
            )
            .unwrap()
        };
        let cfg = TrainConfig {
            learning_rate: 0.002,
            batch_size: 8,
            steps: 120,
            tau_max: 0.9,
            seed: 31,
            ..TrainConfig::default()
        };
        let mut m1 = build();
        let t1 = train(&mut m1, &data, &cfg).unwrap();
        let mut m2 = build();
        let t2 = train(&mut m2, &data, &cfg).unwrap();
        assert_eq!(encode_checkpoint(&m1), encode_checkpoint(&m2));
        for (a, b) in t1.entries.iter().zip(&t2.entries) {
            assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        }
        let s1 = euler_sample(&m1, 0, &[], 4, 5, 0).unwrap();
        let s2 = euler_sample(&m2, 0, &[], 4, 5, 0).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&s1), bits(&s2));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut m = small_model(Paradigm::ActionPrediction, 18);
        let cfg = TrainConfig::default();
        assert!(matches!(train(&mut m, &[], &cfg), Err(AmlError::EmptyDataset)));
    }

    #[test]
    fn divergence_reports_the_step() {
        let mut m = AmlModel::new(
            Paradigm::ActionPrediction,
            Activation::Tanh,
            1,
            2,
            0,
            1,
            0,
            &[8],
            DEFAULT_TAU_MAX,
            21,
        )
        .unwrap();
        let data = crate::toy::circle_points(8, 3);
        let cfg = TrainConfig {
            learning_rate: 1e12,
            batch_size: 8,
            steps: 200,
            seed: 2,
            ..TrainConfig::default()
        };
        match train(&mut m, &data, &cfg) {
            Err(AmlError::Diverged { step }) => assert!(step < 200),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn beta_tau_draws_match_the_order_statistic_distribution() {
        // Beta(2, 1) has CDF x^2 on [0,1]: mean 2/3.
        let n = 20_000u64;
        let mut acc = 0.0;
        for i in 0..n {
            acc += draw_tau(TauDistribution::Beta { alpha: 2, beta: 1 }, 1.0, 123, i);
        }
        let mean = acc / n as f64;
        assert!((mean - 2.0 / 3.0).abs() < 0.01, "mean {mean}");
        // Beta(1, 1) is uniform: mean 1/2.
        let mut acc = 0.0;
        for i in 0..n {
            acc += draw_tau(TauDistribution::Beta { alpha: 1, beta: 1 }, 1.0, 124, i);
        }
        let mean = acc / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn tau_draws_respect_the_clamp() {
        for i in 0..5000u64 {
            let t = draw_tau(TauDistribution::Uniform, 0.999, 7, i);
            assert!((0.0..=0.999).contains(&t));
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let mut m = small_model(Paradigm::VelocityPrediction, 19);
        m.activation = Activation::Relu;
        m.tau_max = 0.995;
        let bytes = encode_checkpoint(&m);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(encode_checkpoint(&back), bytes);
        assert_eq!(back.paradigm, Paradigm::VelocityPrediction);
        assert_eq!(back.activation, Activation::Relu);
        assert_eq!(back.hidden, m.hidden);
        assert_eq!(back.tau_max, 0.995);
        assert_eq!(back.embed, m.embed);
    }

    #[test]
    fn checkpoint_corruption_is_detected() {
        let m = small_model(Paradigm::ActionPrediction, 20);
        let bytes = encode_checkpoint(&m);
        // magic
        let mut bad = bytes.clone();
        bad[0] = b'Z';
        assert!(matches!(decode_checkpoint(&bad), Err(AmlError::BadMagic)));
        // version
        let mut bad = bytes.clone();
        bad[4..6].copy_from_slice(&9u16.to_le_bytes());
        assert!(matches!(decode_checkpoint(&bad), Err(AmlError::BadVersion(9))));
        // truncation
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 3]),
            Err(AmlError::Corrupt(_))
        ));
        // trailing garbage
        let mut bad = bytes.clone();
        bad.push(1);
        assert!(matches!(decode_checkpoint(&bad), Err(AmlError::Corrupt(_))));
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let m = small_model(Paradigm::ActionPrediction, 22);
        let item = random_item(&m, 22, 0, 0.2);
        assert!(matches!(
            predict(&m, &item.sample.a_tau[..3], 0.2, 0, &item.state),
            Err(AmlError::DimMismatch(_))
        ));
        assert!(matches!(
            predict(&m, &item.sample.a_tau, 0.2, 99, &item.state),
            Err(AmlError::BadContext { .. })
        ));
        assert!(matches!(
            predict(&m, &item.sample.a_tau, 0.2, 0, &[0.0]),
            Err(AmlError::DimMismatch(_))
        ));
    }

    #[test]
    fn context_embeddings_separate_conditioned_targets() {
        // Two contexts memorize two different points through the same
        // network; the embedding is the only distinguishing input.
        let mut m = AmlModel::new(
            Paradigm::ActionPrediction,
            Activation::Tanh,
            1,
            2,
            0,
            2,
            4,
            &[32, 32],
            DEFAULT_TAU_MAX,
            23,
        )
        .unwrap();
        let data = vec![
            ChunkExample {
                a: vec![1.0, 0.0],
                ctx: 0,
                state: vec![],
            },
            ChunkExample {
                a: vec![-1.0, 0.0],
                ctx: 1,
                state: vec![],
            },
        ];
        let cfg = TrainConfig {
            learning_rate: 0.01,
            batch_size: 64,
            steps: 2500,
            tau_max: 0.9,
            seed: 6,
            ..TrainConfig::default()
        };
        train(&mut m, &data, &cfg).unwrap();
        let s0 = euler_sample(&m, 0, &[], 4, 8, 0).unwrap();
        let s1 = euler_sample(&m, 1, &[], 4, 8, 1).unwrap();
        assert!((s0[0] - 1.0).abs() < 0.15, "ctx 0 sampled {s0:?}");
        assert!((s1[0] + 1.0).abs() < 0.15, "ctx 1 sampled {s1:?}");
    }
}
