//! Plain-text run configuration.
//!
//! One `key = value` per line, `#` starts a comment. Keys are dotted
//! (`train.steps`); a `[train]` header prefixes the keys below it.
//! Unknown keys are rejected. [`RunConfig::to_text`] writes every key, and
//! parsing that text gives back an equal value.

use crate::lf::Dims;
use crate::net::{ModelConfig, RecInit, RecNetConfig};
use crate::patterns::{ExposureMode, Variant};
use crate::scene::{motion_grid, Dataset, SourceSpec};
use crate::train::{AdamConfig, TrainConfig};
use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecNetSize {
    Toy,
    Full,
}

impl FromStr for RecNetSize {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Self::Toy),
            "full" => Ok(Self::Full),
            _ => Err(Error::InvalidArgument(format!("recnet size {s:?} is neither toy nor full"))),
        }
    }
}

impl RecNetSize {
    fn name(self) -> &'static str {
        match self {
            Self::Toy => "toy",
            Self::Full => "full",
        }
    }
}

/// Synthetic training or evaluation scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub sources: usize,
    pub source_size: usize,
    pub d_max: f32,
    pub stride: usize,
    pub scales: Vec<f32>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub crop: usize,
    /// Held-out scenes for ablations and trained-model scoring.
    pub data: DataConfig,
    pub sweep_alpha_x: Vec<f32>,
    pub sweep_d: Vec<f32>,
    /// Side of the nine-point PSF scene. At 44 the points sit at nine
    /// distinct 8×8 tile phases.
    pub psf_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathsConfig {
    pub out: PathBuf,
    /// Checkpoint read by `eval`, `simulate` and `sweep`; empty means none.
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub dims: Dims,
    pub variant: Variant,
    pub recnet: RecNetSize,
    pub init: RecInit,
    pub noise_sigma: f32,
    pub region_timing: bool,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    /// The desk-scale setup behind the `toy-train` benchmark.
    fn default() -> Self {
        let seed = 7;
        Self {
            seed,
            dims: Dims::new(3, 3, 32, 32, 2).expect("valid"),
            variant: Variant::APlusP,
            recnet: RecNetSize::Toy,
            init: RecInit::Identity,
            noise_sigma: 0.005,
            region_timing: false,
            train: TrainConfig {
                seed,
                adam: AdamConfig::default(),
                mode: ExposureMode::StraightThrough,
                ..TrainConfig::default()
            },
            data: DataConfig { sources: 8, source_size: 36, d_max: 1.0, stride: 32, scales: vec![1.0], seed: 1 },
            eval: EvalConfig {
                crop: crate::eval::DEFAULT_CROP,
                data: DataConfig { sources: 4, source_size: 36, d_max: 1.0, stride: 32, scales: vec![1.0], seed: 1001 },
                sweep_alpha_x: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
                sweep_d: vec![0.0, 0.5, 1.0, 1.5, 2.0],
                psf_size: 44,
            },
            paths: PathsConfig { out: PathBuf::from("out"), checkpoint: PathBuf::new() },
        }
    }
}

fn parse_list(v: &str) -> std::result::Result<Vec<f32>, String> {
    v.split(',').map(|s| s.trim().parse::<f32>().map_err(|e| format!("{s:?}: {e}"))).collect()
}

fn fmt_list(v: &[f32]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("{v:?} is not a boolean")),
    }
}

fn num<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("{v:?}: {e}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config { line: line_no, msg: format!("expected key = value, got {line:?}") });
            };
            let key = if section.is_empty() { k.trim().to_string() } else { format!("{section}.{}", k.trim()) };
            cfg.set(&key, v.trim()).map_err(|e| match e {
                SetError::Unknown => Error::UnknownConfigKey(key.clone()),
                SetError::Bad(msg) => Error::Config { line: line_no, msg: format!("{key}: {msg}") },
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key = value` assignment.
    pub fn set_override(&mut self, key: &str, value: &str) -> Result<()> {
        self.set(key, value).map_err(|e| match e {
            SetError::Unknown => Error::UnknownConfigKey(key.to_string()),
            SetError::Bad(msg) => Error::Config { line: 0, msg: format!("{key}: {msg}") },
        })
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), SetError> {
        let bad = SetError::Bad;
        match key {
            "seed" => {
                self.seed = num(v).map_err(bad)?;
                self.train.seed = self.seed;
            }
            "dims.n_u" => self.dims.n_u = num(v).map_err(bad)?,
            "dims.n_v" => self.dims.n_v = num(v).map_err(bad)?,
            "dims.n_x" => self.dims.n_x = num(v).map_err(bad)?,
            "dims.n_y" => self.dims.n_y = num(v).map_err(bad)?,
            "dims.n_t" => self.dims.n_t = num(v).map_err(bad)?,
            "model.variant" => self.variant = v.parse().map_err(|e: Error| bad(e.to_string()))?,
            "model.recnet" => self.recnet = v.parse().map_err(|e: Error| bad(e.to_string()))?,
            "model.init" => {
                self.init = match v {
                    "he" => RecInit::He,
                    "identity" => RecInit::Identity,
                    _ => return Err(bad(format!("{v:?} is neither he nor identity"))),
                }
            }
            "model.noise_sigma" => self.noise_sigma = num(v).map_err(bad)?,
            "model.region_timing" => self.region_timing = parse_bool(v).map_err(bad)?,
            "train.steps" => self.train.steps = num(v).map_err(bad)?,
            "train.batch" => self.train.batch = num(v).map_err(bad)?,
            "train.seed" => self.train.seed = num(v).map_err(bad)?,
            "train.lr" => self.train.adam.lr = num(v).map_err(bad)?,
            "train.pattern_lr" => {
                self.train.adam.pattern_lr = if v == "same" { None } else { Some(num(v).map_err(bad)?) }
            }
            "train.beta1" => self.train.adam.beta1 = num(v).map_err(bad)?,
            "train.beta2" => self.train.adam.beta2 = num(v).map_err(bad)?,
            "train.eps" => self.train.adam.eps = num(v).map_err(bad)?,
            "train.mode" => self.train.mode = v.parse().map_err(|e: Error| bad(e.to_string()))?,
            "train.anneal" => self.train.anneal = parse_bool(v).map_err(bad)?,
            "train.audit_every" => self.train.audit_every = num(v).map_err(bad)?,
            "eval.crop" => self.eval.crop = num(v).map_err(bad)?,
            "eval.sweep_alpha_x" => self.eval.sweep_alpha_x = parse_list(v).map_err(bad)?,
            "eval.sweep_d" => self.eval.sweep_d = parse_list(v).map_err(bad)?,
            "eval.psf_size" => self.eval.psf_size = num(v).map_err(bad)?,
            "paths.out" => self.paths.out = PathBuf::from(v),
            "paths.checkpoint" => self.paths.checkpoint = PathBuf::from(v),
            _ => {
                let (data, rest) = if let Some(rest) = key.strip_prefix("data.") {
                    (&mut self.data, rest)
                } else if let Some(rest) = key.strip_prefix("eval.data.") {
                    (&mut self.eval.data, rest)
                } else {
                    return Err(SetError::Unknown);
                };
                match rest {
                    "sources" => data.sources = num(v).map_err(bad)?,
                    "source_size" => data.source_size = num(v).map_err(bad)?,
                    "d_max" => data.d_max = num(v).map_err(bad)?,
                    "stride" => data.stride = num(v).map_err(bad)?,
                    "scales" => data.scales = parse_list(v).map_err(bad)?,
                    "seed" => data.seed = num(v).map_err(bad)?,
                    _ => return Err(SetError::Unknown),
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.train.validate()?;
        if self.data.scales.is_empty() || self.eval.data.scales.is_empty() {
            return Err(Error::InvalidArgument("scale lists must not be empty".into()));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        let mut recnet = match self.recnet {
            RecNetSize::Toy => RecNetConfig::toy(self.dims),
            RecNetSize::Full => RecNetConfig::full(self.dims),
        };
        recnet.init = self.init;
        ModelConfig {
            dims: self.dims,
            variant: self.variant,
            recnet,
            noise_sigma: self.noise_sigma,
            region_timing: self.region_timing,
        }
    }

    /// Dataset with motion augmentation over the 5×5 velocity grid.
    pub fn dataset(&self, data: &DataConfig) -> Result<Dataset> {
        let spec = SourceSpec {
            count: data.sources,
            size: data.source_size,
            n_u: self.dims.n_u,
            n_v: self.dims.n_v,
            d_max: data.d_max,
            seed: data.seed,
        };
        if self.dims.n_x != self.dims.n_y {
            return Err(Error::InvalidArgument("training patches are square: n_x must equal n_y".into()));
        }
        Dataset::build(spec.generate()?, self.dims.n_x, data.stride, &data.scales, &motion_grid(), self.dims.n_t)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("seed", self.seed.to_string());
        let d = self.dims;
        kv("dims.n_u", d.n_u.to_string());
        kv("dims.n_v", d.n_v.to_string());
        kv("dims.n_x", d.n_x.to_string());
        kv("dims.n_y", d.n_y.to_string());
        kv("dims.n_t", d.n_t.to_string());
        kv("model.variant", self.variant.name().to_string());
        kv("model.recnet", self.recnet.name().to_string());
        kv("model.init", if self.init == RecInit::He { "he" } else { "identity" }.to_string());
        kv("model.noise_sigma", self.noise_sigma.to_string());
        kv("model.region_timing", self.region_timing.to_string());
        let t = &self.train;
        kv("train.steps", t.steps.to_string());
        kv("train.batch", t.batch.to_string());
        kv("train.seed", t.seed.to_string());
        kv("train.lr", t.adam.lr.to_string());
        kv("train.pattern_lr", t.adam.pattern_lr.map_or("same".to_string(), |x| x.to_string()));
        kv("train.beta1", t.adam.beta1.to_string());
        kv("train.beta2", t.adam.beta2.to_string());
        kv("train.eps", t.adam.eps.to_string());
        kv("train.mode", t.mode.to_string());
        kv("train.anneal", t.anneal.to_string());
        kv("train.audit_every", t.audit_every.to_string());
        for (prefix, data) in [("data", &self.data), ("eval.data", &self.eval.data)] {
            kv(&format!("{prefix}.sources"), data.sources.to_string());
            kv(&format!("{prefix}.source_size"), data.source_size.to_string());
            kv(&format!("{prefix}.d_max"), data.d_max.to_string());
            kv(&format!("{prefix}.stride"), data.stride.to_string());
            kv(&format!("{prefix}.scales"), fmt_list(&data.scales));
            kv(&format!("{prefix}.seed"), data.seed.to_string());
        }
        kv("eval.crop", self.eval.crop.to_string());
        kv("eval.sweep_alpha_x", fmt_list(&self.eval.sweep_alpha_x));
        kv("eval.sweep_d", fmt_list(&self.eval.sweep_d));
        kv("eval.psf_size", self.eval.psf_size.to_string());
        kv("paths.out", self.paths.out.display().to_string());
        kv("paths.checkpoint", self.paths.checkpoint.display().to_string());
        s
    }

    /// Writes `config.resolved` into `dir`.
    pub fn echo(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.resolved"), self.to_text())?;
        Ok(())
    }
}

enum SetError {
    Unknown,
    Bad(String),
}
