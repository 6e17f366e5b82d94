//! Joint optimization of coding patterns and reconstruction weights.
//!
//! A step draws `batch` samples from an epoch permutation, resamples
//! sensor noise per sample, runs capture and reconstruction on a fresh
//! tape per sample and averages gradients in fixed sample order. Every
//! random draw is keyed by `(seed, step, slot)`, so a resumed run replays
//! the uninterrupted one bit for bit.

use crate::lf::{CodedImage, LightField5D};
use crate::net::{Model, ModelConfig};
use crate::patterns::{export, temperature, ExportedPatterns, ExposureMode};
use crate::scene::Dataset;
use crate::{rng, Error, Result};
use dynlf_autodiff::{Graph, Tensor};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

/// Mean squared difference over every element.
pub fn mse_loss(predicted: &LightField5D, truth: &LightField5D) -> Result<f64> {
    if predicted.dims() != truth.dims() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", predicted.dims(), truth.dims())));
    }
    let s: f64 = predicted.data().iter().zip(truth.data()).map(|(&a, &b)| ((a - b) as f64).powi(2)).sum();
    Ok(s / predicted.data().len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Step size for the coding-pattern parameters; `None` uses `lr`.
    pub pattern_lr: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, pattern_lr: None }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.pattern_lr.is_none_or(|lr| lr >= 0.0)
            && self.eps > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.beta1 > 0.0
            && self.beta2 > 0.0;
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// First and second moments per parameter, plus the number of updates taken.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn for_model(model: &Model) -> Self {
        let sizes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        Self {
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// Name prefix shared by every coding-pattern parameter.
pub const PATTERN_PREFIX: &str = "pattern.";

/// One bias-corrected Adam update of every trainable parameter. `grads[i]`
/// is `None` for parameters without a gradient. All arithmetic is f64.
pub fn adam_step(model: &mut Model, grads: &[Option<Vec<f32>>], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    let mut params = model.params_mut();
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gradients, {} moment sets for {} parameters",
            grads.len(),
            state.m.len(),
            params.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if let Some(g) = g {
            if g.len() != p.len() {
                return Err(Error::DimensionMismatch(format!("gradient of {} has {} values", p.name, g.len())));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { param: p.name.clone(), step: state.step });
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let zero;
        let g = match &grads[i] {
            Some(g) if p.trainable => g,
            _ => {
                zero = vec![0.0; p.len()];
                if !p.trainable {
                    continue;
                }
                &zero
            }
        };
        let lr = if p.name.starts_with(PATTERN_PREFIX) { cfg.pattern_lr.unwrap_or(cfg.lr) } else { cfg.lr };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for k in 0..p.len() {
            let gk = g[k] as f64;
            let mk = cfg.beta1 * m[k] as f64 + (1.0 - cfg.beta1) * gk;
            let vk = cfg.beta2 * v[k] as f64 + (1.0 - cfg.beta2) * gk * gk;
            m[k] = mk as f32;
            v[k] = vk as f32;
            let update = lr * (mk / bc1) / ((vk / bc2).sqrt() + cfg.eps);
            p.value[k] = (p.value[k] as f64 - update) as f32;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch: usize,
    pub steps: u64,
    pub seed: u64,
    /// Forward form of the exposure code during training.
    pub mode: ExposureMode,
    /// Anneal the sigmoid temperature from 1 to 10.
    pub anneal: bool,
    /// Recompute the first sample of every `audit_every`-th batch in f64
    /// (0 disables).
    pub audit_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch: 8,
            steps: 500,
            seed: 0,
            mode: ExposureMode::Relaxed,
            anneal: true,
            audit_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn tau(&self, step: u64) -> f32 {
        if self.anneal {
            temperature(step, self.steps)
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub loss: f32,
    pub binary_gap: f32,
}

pub fn loss_csv(rows: &[LogRow]) -> String {
    let mut s = String::from("step,loss,binary_gap\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.step, r.loss, r.binary_gap);
    }
    s
}

/// Dataset indices used at `step`: consecutive slots of the concatenation
/// of per-epoch permutations.
pub fn batch_indices(seed: u64, step: u64, batch: usize, n: usize) -> Vec<usize> {
    let mut cached: Option<(u64, Vec<usize>)> = None;
    (0..batch as u64)
        .map(|i| {
            let slot = step * batch as u64 + i;
            let (epoch, pos) = (slot / n as u64, (slot % n as u64) as usize);
            if cached.as_ref().map(|c| c.0) != Some(epoch) {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng::stream(seed, "shuffle", &[epoch]));
                cached = Some((epoch, perm));
            }
            cached.as_ref().unwrap().1[pos]
        })
        .collect()
}

/// Sensor noise for slot `i` of `step`, in image layout.
pub fn training_noise(seed: u64, step: u64, i: usize, n_x: usize, n_y: usize, sigma: f32) -> Option<CodedImage> {
    if sigma == 0.0 {
        return None;
    }
    let mut r = rng::stream(seed, "noise", &[step, i as u64]);
    let normal = Normal::new(0.0f32, sigma).expect("finite sigma");
    Some(CodedImage { n_x, n_y, data: (0..n_x * n_y).map(|_| normal.sample(&mut r)).collect() })
}

/// Loss and per-parameter gradients of one sample.
pub fn sample_gradients(
    model: &Model,
    lf: &LightField5D,
    region: usize,
    noise: Option<&CodedImage>,
    mode: ExposureMode,
    tau: f32,
) -> Result<(f32, Vec<Option<Vec<f32>>>)> {
    let mut g = Graph::<f32>::new();
    let vars = model.param_vars(&mut g);
    let out = model.forward_graph(&mut g, &vars, lf, region, noise, mode, tau)?;
    let truth = g.constant(Tensor::new(g.shape(out).to_vec(), lf.data().to_vec())?);
    let loss = g.mse(out, truth)?;
    g.backward(loss)?;
    let grads = vars.iter().map(|&v| g.take_grad(v).map(Tensor::into_data)).collect();
    Ok((g.value(loss).item(), grads))
}

/// f64 loss of one sample, for audits.
pub fn sample_loss_f64(
    model: &Model,
    lf: &LightField5D,
    region: usize,
    noise: Option<&CodedImage>,
    mode: ExposureMode,
    tau: f32,
) -> Result<f64> {
    let mut g = Graph::<f64>::new();
    let vars = model.param_vars(&mut g);
    let out = model.forward_graph(&mut g, &vars, lf, region, noise, mode, tau)?;
    let truth = g.constant(Tensor::new(g.shape(out).to_vec(), lf.data().iter().map(|&v| v as f64).collect())?);
    let loss = g.mse(out, truth)?;
    Ok(g.value(loss).item())
}

/// Model, optimizer state and the log of every step taken so far.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub adam: AdamState,
    pub log: Vec<LogRow>,
}

impl TrainState {
    pub fn new(model: Model) -> Self {
        let adam = AdamState::for_model(&model);
        Self { model, adam, log: Vec::new() }
    }

    pub fn export_patterns(&self) -> ExportedPatterns {
        export(&self.model.patterns)
    }
}

/// Runs steps `state.adam.step .. until` (capped at `cfg.steps`).
/// `on_step` sees the state after each update.
pub fn train_until(
    state: &mut TrainState,
    data: &Dataset,
    cfg: &TrainConfig,
    until: u64,
    mut on_step: impl FnMut(&TrainState) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training dataset is empty".into()));
    }
    let d = state.model.cfg.dims;
    let sigma = state.model.cfg.noise_sigma;
    let regions = state.model.recnets.len();
    let until = until.min(cfg.steps);
    while state.adam.step < until {
        let step = state.adam.step;
        let tau = cfg.tau(step);
        let idx = batch_indices(cfg.seed, step, cfg.batch, data.len());
        let model = &state.model;
        let results: Vec<Result<(f32, Vec<Option<Vec<f32>>>)>> = idx
            .par_iter()
            .enumerate()
            .map(|(i, &s)| {
                let lf = data.sample(s)?;
                let noise = training_noise(cfg.seed, step, i, d.n_x, d.n_y, sigma);
                let region = (step as usize * cfg.batch + i) % regions;
                sample_gradients(model, &lf, region, noise.as_ref(), cfg.mode, tau)
            })
            .collect();
        let mut loss_sum = 0.0f64;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; model.params().len()];
        for (i, r) in results.into_iter().enumerate() {
            let (loss, g) = r?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step, manifest_line: data.entries[idx[i]].line() });
            }
            loss_sum += loss as f64;
            for (acc, gi) in grads.iter_mut().zip(g) {
                if let Some(gi) = gi {
                    let a = acc.get_or_insert_with(|| vec![0.0; gi.len()]);
                    for (x, y) in a.iter_mut().zip(gi) {
                        *x += y as f64;
                    }
                }
            }
        }
        let inv = 1.0 / cfg.batch as f64;
        let grads: Vec<Option<Vec<f32>>> =
            grads.into_iter().map(|g| g.map(|g| g.into_iter().map(|x| (x * inv) as f32).collect())).collect();
        let loss = (loss_sum * inv) as f32;
        if cfg.audit_every > 0 && step % cfg.audit_every == 0 {
            let lf = data.sample(idx[0])?;
            let noise = training_noise(cfg.seed, step, 0, d.n_x, d.n_y, sigma);
            let hi = sample_loss_f64(&state.model, &lf, 0, noise.as_ref(), cfg.mode, tau)?;
            log::debug!("audit step {step}: f64 loss of first sample {hi:.6e}");
        }
        let binary_gap = state.model.patterns.binary_gap(tau);
        adam_step(&mut state.model, &grads, &mut state.adam, &cfg.adam)?;
        state.log.push(LogRow { step, loss, binary_gap });
        log::info!("step {step} loss {loss:.6e} gap {binary_gap:.3e} tau {tau:.3}");
        on_step(state)?;
    }
    Ok(())
}

pub fn train(state: &mut TrainState, data: &Dataset, cfg: &TrainConfig) -> Result<()> {
    train_until(state, data, cfg, cfg.steps, |_| Ok(()))
}

// ---------------------------------------------------------------- checkpoint

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LFCK";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn config_hash(cfg: &ModelConfig) -> [u8; 32] {
    Sha256::digest(cfg.fingerprint().as_bytes()).into()
}

/// Checkpoint bytes (little-endian):
/// `LFCK`, `u16` version, 32-byte config hash, `u64` step, `u64` seed,
/// `u32` block count, then per parameter: `u32` name length, name,
/// `u32` rank, `u32` dims, `f32` values, `f32` first moments, `f32` second moments.
pub fn encode_checkpoint(state: &TrainState, seed: u64) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&config_hash(&state.model.cfg));
    out.extend_from_slice(&state.adam.step.to_le_bytes());
    out.extend_from_slice(&seed.to_le_bytes());
    let params = state.model.params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (i, p) in params.iter().enumerate() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
        for &d in &p.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for buf in [&p.value, &state.adam.m[i], &state.adam.v[i]] {
            for v in buf.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated { expected: self.pos + n, found: self.bytes.len() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self.take(4 * n)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

/// Restores a checkpoint written for a model built from `cfg`. Returns the
/// state (with an empty log) and the stored seed.
pub fn decode_checkpoint(bytes: &[u8], cfg: &ModelConfig) -> Result<(TrainState, u64)> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic { expected: CHECKPOINT_MAGIC, found: magic });
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let hash: [u8; 32] = r.take(32)?.try_into().unwrap();
    if hash != config_hash(cfg) {
        return Err(Error::CheckpointMismatch(format!("config hash differs from {}", cfg.fingerprint())));
    }
    let step = r.u64()?;
    let seed = r.u64()?;
    let mut model = Model::new(cfg.clone(), seed)?;
    let mut adam = AdamState::for_model(&model);
    adam.step = step;
    let count = r.u32()? as usize;
    let mut params = model.params_mut();
    if count != params.len() {
        return Err(Error::CheckpointMismatch(format!("{count} blocks, model has {}", params.len())));
    }
    for (i, p) in params.iter_mut().enumerate() {
        let n = r.u32()? as usize;
        let name = String::from_utf8_lossy(r.take(n)?).into_owned();
        let rank = r.u32()? as usize;
        let shape: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
        if name != p.name || shape != p.shape {
            return Err(Error::CheckpointMismatch(format!("block {name} {shape:?} vs {} {:?}", p.name, p.shape)));
        }
        let len = p.len();
        p.value = r.f32s(len)?;
        adam.m[i] = r.f32s(len)?;
        adam.v[i] = r.f32s(len)?;
    }
    drop(params);
    if r.pos != bytes.len() {
        return Err(Error::DimensionMismatch(format!("{} trailing bytes in checkpoint", bytes.len() - r.pos)));
    }
    Ok((TrainState { model, adam, log: Vec::new() }, seed))
}

pub fn save_checkpoint(path: &Path, state: &TrainState, seed: u64) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, encode_checkpoint(state, seed))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, cfg: &ModelConfig) -> Result<(TrainState, u64)> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode_checkpoint(&bytes, cfg)
}
