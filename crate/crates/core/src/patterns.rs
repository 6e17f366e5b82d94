//! Trainable coding-pattern parameters and their hardware realizations.

use crate::forward::{AperturePattern, ExposurePattern, ExposureTile, Free5DMask};
use crate::lf::{Dims, TILE};
use crate::{io, rng, Error, Result};
use rand::Rng;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

/// Which coding planes are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    APlusP,
    AOnly,
    POnly,
    Ordinary,
    Free5D,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::APlusP, Variant::AOnly, Variant::POnly, Variant::Ordinary, Variant::Free5D];

    pub fn name(self) -> &'static str {
        match self {
            Variant::APlusP => "A+P",
            Variant::AOnly => "A-only",
            Variant::POnly => "P-only",
            Variant::Ordinary => "Ordinary",
            Variant::Free5D => "Free5D",
        }
    }

    pub fn codes_aperture(self) -> bool {
        matches!(self, Variant::APlusP | Variant::AOnly)
    }

    pub fn codes_exposure(self) -> bool {
        matches!(self, Variant::APlusP | Variant::POnly)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a+p" | "ap" => Ok(Variant::APlusP),
            "a-only" | "a" => Ok(Variant::AOnly),
            "p-only" | "p" => Ok(Variant::POnly),
            "ordinary" => Ok(Variant::Ordinary),
            "free5d" => Ok(Variant::Free5D),
            _ => Err(Error::UnknownVariant(s.to_string())),
        }
    }
}

/// How the exposure logits become a pattern in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExposureMode {
    /// `σ_τ(ρ)·σ_τ(γ)` forward and backward.
    Relaxed,
    /// Binary forward, relaxed backward.
    StraightThrough,
    /// Binary forward, no gradient.
    Binary,
}

impl FromStr for ExposureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relaxed" => Ok(Self::Relaxed),
            "straight-through" | "st" => Ok(Self::StraightThrough),
            "binary" => Ok(Self::Binary),
            _ => Err(Error::InvalidArgument(format!("unknown exposure mode {s:?}"))),
        }
    }
}

impl fmt::Display for ExposureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Relaxed => "relaxed",
            Self::StraightThrough => "straight-through",
            Self::Binary => "binary",
        })
    }
}

/// Temperature `τ = 10^(k/5)` during the `k`-th fifth of training, so it
/// climbs from 1 and reaches 10 at the final step.
pub fn temperature(step: u64, total: u64) -> f32 {
    if total == 0 {
        return 1.0;
    }
    let k = (5 * step.min(total) / total) as f32;
    10f32.powf(k / 5.0)
}

/// A named trainable or frozen tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<f32>, trainable: bool) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        Self { name: name.into(), shape, value, trainable }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Pattern parameters of one variant.
///
/// * `aperture` `[n_t, n_v·n_u]`: transmittance, realized by clamping to [0, 1].
/// * `rows`, `cols` `[n_t, 8]`: exposure logits.
/// * `mask` `[n_t·n_v·n_u, 64]`: Free5D mask, clamped to [0, 1].
///
/// A frozen aperture holds the constant 1; a frozen exposure is applied as
/// `p ≡ 1` regardless of mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternParams {
    pub variant: Variant,
    pub n_t: usize,
    pub n_v: usize,
    pub n_u: usize,
    pub aperture: Param,
    pub rows: Param,
    pub cols: Param,
    pub mask: Option<Param>,
}

impl PatternParams {
    pub fn exposure_is_constant(&self) -> bool {
        !self.variant.codes_exposure()
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = vec![&self.aperture, &self.rows, &self.cols];
        v.extend(self.mask.as_ref());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.aperture, &mut self.rows, &mut self.cols];
        v.extend(self.mask.as_mut());
        v
    }

    pub fn realize_aperture(&self) -> AperturePattern {
        realize_aperture(&self.aperture.value, self.n_t, self.n_v, self.n_u)
    }

    pub fn exposure_logits(&self) -> ExposurePattern {
        ExposurePattern { n_t: self.n_t, rows: self.rows.value.clone(), cols: self.cols.value.clone() }
    }

    pub fn realize_exposure(&self, mode: ExposureMode, tau: f32) -> ExposureTile {
        if self.exposure_is_constant() {
            return ExposureTile::ones(self.n_t);
        }
        realize_exposure(&self.exposure_logits(), mode, tau)
    }

    pub fn realize_mask(&self) -> Option<Free5DMask> {
        self.mask.as_ref().map(|m| {
            let values = m.value.iter().map(|v| v.clamp(0.0, 1.0)).collect();
            Free5DMask::new(self.n_t, self.n_v, self.n_u, values).expect("mask shape fixed at construction")
        })
    }

    /// Mean of the deployed per-ray weight `a·p` over time, views and tile.
    pub fn mean_throughput(&self) -> f64 {
        if let Some(mask) = self.realize_mask() {
            return mask.values().iter().map(|&v| v as f64).sum::<f64>() / mask.values().len() as f64;
        }
        let a = self.realize_aperture();
        let p = self.realize_exposure(ExposureMode::Binary, 1.0);
        let vu = self.n_v * self.n_u;
        let mut total = 0.0;
        for t in 0..self.n_t {
            let a_t: f64 = a.values()[t * vu..(t + 1) * vu].iter().map(|&v| v as f64).sum();
            let p_t: f64 = p.values()[t * 64..(t + 1) * 64].iter().map(|&v| v as f64).sum();
            total += a_t * p_t;
        }
        total / (self.n_t * vu * 64) as f64
    }

    /// Max deviation between the relaxed and binary exposure tiles.
    pub fn binary_gap(&self, tau: f32) -> f32 {
        if self.exposure_is_constant() || self.mask.is_some() {
            0.0
        } else {
            train_binary_gap(&self.exposure_logits(), tau)
        }
    }
}

pub fn realize_aperture(w: &[f32], n_t: usize, n_v: usize, n_u: usize) -> AperturePattern {
    let values = w.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    AperturePattern::new(n_t, n_v, n_u, values).expect("clamped values are in range")
}

/// Straight-through mode realizes the binary pattern: its forward value.
pub fn realize_exposure(logits: &ExposurePattern, mode: ExposureMode, tau: f32) -> ExposureTile {
    match mode {
        ExposureMode::Relaxed => logits.realize_relaxed(tau),
        ExposureMode::StraightThrough | ExposureMode::Binary => logits.realize(),
    }
}

pub fn train_binary_gap(logits: &ExposurePattern, tau: f32) -> f32 {
    let relaxed = logits.realize_relaxed(tau);
    let binary = logits.realize();
    relaxed.values().iter().zip(binary.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max)
}

/// Parameter set for `variant` with the documented initialization drawn
/// from the `init` stream of `seed`.
pub fn make_variant(variant: Variant, dims: Dims, seed: u64) -> PatternParams {
    let (n_t, vu) = (dims.n_t, dims.views());
    let mut rng = rng::stream(seed, "init", &[0]);
    let mut aperture: Vec<f32> = (0..n_t * vu).map(|_| rng.random_range(0.3..0.7)).collect();
    let mut rows: Vec<f32> = (0..n_t * TILE).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut cols: Vec<f32> = (0..n_t * TILE).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut mask = None;
    if variant == Variant::Free5D {
        let a = realize_aperture(&aperture, n_t, dims.n_v, dims.n_u);
        let p = ExposurePattern { n_t, rows: rows.clone(), cols: cols.clone() }.realize();
        let m = Free5DMask::factorized(&a, &p).expect("matching time units");
        mask = Some(Param::new("pattern.mask", vec![n_t * vu, TILE * TILE], m.values().to_vec(), true));
    }
    if !variant.codes_aperture() {
        aperture.fill(1.0);
    }
    if !variant.codes_exposure() {
        rows.fill(1.0);
        cols.fill(1.0);
    }
    let a_train = variant.codes_aperture();
    let p_train = variant.codes_exposure();
    PatternParams {
        variant,
        n_t,
        n_v: dims.n_v,
        n_u: dims.n_u,
        aperture: Param::new("pattern.aperture", vec![n_t, vu], aperture, a_train),
        rows: Param::new("pattern.rows", vec![n_t, TILE], rows, p_train),
        cols: Param::new("pattern.cols", vec![n_t, TILE], cols, p_train),
        mask,
    }
}

/// Hardware-ready patterns of a trained parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportedPatterns {
    pub variant: Variant,
    pub aperture: AperturePattern,
    pub exposure: ExposureTile,
    pub mask: Option<Free5DMask>,
}

pub fn export(params: &PatternParams) -> ExportedPatterns {
    ExportedPatterns {
        variant: params.variant,
        aperture: params.realize_aperture(),
        exposure: params.realize_exposure(ExposureMode::Binary, 1.0),
        mask: params.realize_mask(),
    }
}

impl ExportedPatterns {
    /// `kind,t,index0,index1,value` rows for the aperture `(v, u)` and
    /// exposure `(j, i)` tables.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,t,index0,index1,value\n");
        let a = &self.aperture;
        for t in 0..a.n_t {
            for v in 0..a.n_v {
                for u in 0..a.n_u {
                    let _ = writeln!(s, "aperture,{t},{v},{u},{}", a.get(t, v, u));
                }
            }
        }
        for t in 0..self.exposure.n_t {
            for j in 0..TILE {
                for i in 0..TILE {
                    let _ = writeln!(s, "exposure,{t},{j},{i},{}", self.exposure.get(t, j, i));
                }
            }
        }
        s
    }

    /// Per time unit: `aperture_t{t}.pgm` (`n_u × n_v`, upscaled ×8) and
    /// `exposure_t{t}.pgm` (8×8 tile, upscaled ×8), plus `patterns.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        const UP: usize = 8;
        let a = &self.aperture;
        for t in 0..a.n_t {
            let (w, h) = (a.n_u * UP, a.n_v * UP);
            let data: Vec<f32> = (0..w * h).map(|k| a.get(t, (k / w) / UP, (k % w) / UP)).collect();
            io::write_pgm(&dir.join(format!("aperture_t{t}.pgm")), w, h, &data)?;
            let side = TILE * UP;
            let data: Vec<f32> =
                (0..side * side).map(|k| self.exposure.get(t, (k / side) / UP, (k % side) / UP)).collect();
            io::write_pgm(&dir.join(format!("exposure_t{t}.pgm")), side, side, &data)?;
        }
        std::fs::write(dir.join("patterns.csv"), self.to_csv())?;
        Ok(())
    }
}
