//! Scoring: PSNR reports, PSF atlases, working-range sweeps and ablation
//! tables.

use crate::forward::{coded_capture, free5d_capture, normalize_capture};
use crate::io::{write_image_pgm, write_pgm};
use crate::lf::{CodedImage, Dims, LightField5D};
use crate::net::Model;
use crate::patterns::{ExportedPatterns, ExposureMode};
use crate::scene::{make_psf_scene, synth_plane, Boundary, MotionDisparity, Texture};
use crate::{Error, Result};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::Path;

/// Border excluded from every PSNR evaluation unless overridden.
pub const DEFAULT_CROP: usize = 8;

/// `10·log10(1/MSE)` with peak 1. Identical inputs give `+∞`.
pub fn psnr(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch(format!("psnr of {} vs {} samples", a.len(), b.len())));
    }
    let se: f64 = a.iter().zip(b).map(|(&x, &y)| ((x - y) as f64).powi(2)).sum();
    Ok(mse_to_psnr(se / a.len() as f64))
}

fn mse_to_psnr(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Mean of the finite entries and the number of `+∞` entries skipped.
/// All-infinite input has mean `+∞`.
pub fn finite_mean(values: &[f64]) -> (f64, usize) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let skipped = values.len() - finite.len();
    if finite.is_empty() {
        (f64::INFINITY, skipped)
    } else {
        (finite.iter().sum::<f64>() / finite.len() as f64, skipped)
    }
}

/// Per-frame, per-view PSNR of a reconstructed sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PsnrReport {
    /// `frames × views`, views in `(v, u)` order.
    pub per_view: Vec<Vec<f64>>,
    pub per_frame: Vec<f64>,
    pub mean: f64,
    /// Entries at `+∞` left out of the means.
    pub infinite: usize,
}

impl PsnrReport {
    pub fn from_matrix(per_view: Vec<Vec<f64>>) -> Self {
        let per_frame = per_view.iter().map(|row| finite_mean(row).0).collect();
        let all: Vec<f64> = per_view.iter().flatten().copied().collect();
        let (mean, infinite) = finite_mean(&all);
        Self { per_view, per_frame, mean, infinite }
    }

    pub fn frames(&self) -> usize {
        self.per_view.len()
    }

    pub fn views(&self) -> usize {
        self.per_view.first().map_or(0, Vec::len)
    }

    /// `frame,mean,view0,view1,...`; `+∞` is written as `inf`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,mean");
        for i in 0..self.views() {
            write!(s, ",view{i}").unwrap();
        }
        s.push('\n');
        for (f, row) in self.per_view.iter().enumerate() {
            write!(s, "{f},{}", fmt_db(self.per_frame[f])).unwrap();
            for &v in row {
                write!(s, ",{}", fmt_db(v)).unwrap();
            }
            s.push('\n');
        }
        writeln!(s, "# mean {} over finite entries, {} infinite", fmt_db(self.mean), self.infinite).unwrap();
        s
    }
}

pub fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

/// PSNR of every `(t, v, u)` view of `recon` against `truth` on the
/// interior left after removing `crop` pixels on each side.
pub fn view_psnr(recon: &LightField5D, truth: &LightField5D, crop: usize) -> Result<Vec<Vec<f64>>> {
    let d = truth.dims();
    if recon.dims() != d {
        return Err(Error::DimensionMismatch(format!("recon {:?} vs truth {:?}", recon.dims(), d)));
    }
    if 2 * crop >= d.n_x || 2 * crop >= d.n_y {
        return Err(Error::InvalidArgument(format!("crop {crop} leaves nothing of {}x{}", d.n_x, d.n_y)));
    }
    let interior = |lf: &LightField5D, t, v, u| -> Vec<f32> {
        let view = lf.view(t, v, u);
        (crop..d.n_y - crop).flat_map(|y| view[y * d.n_x + crop..y * d.n_x + d.n_x - crop].to_vec()).collect()
    };
    let mut out = Vec::with_capacity(d.n_t);
    for t in 0..d.n_t {
        let mut row = Vec::with_capacity(d.views());
        for v in 0..d.n_v {
            for u in 0..d.n_u {
                row.push(psnr(&interior(recon, t, v, u), &interior(truth, t, v, u))?);
            }
        }
        out.push(row);
    }
    Ok(out)
}

/// Anything mapping a ground-truth field to its reconstruction from a
/// simulated capture.
pub trait Reconstructor: Sync {
    fn dims(&self) -> Dims;
    fn reconstruct(&self, lf: &LightField5D) -> Result<LightField5D>;
}

/// Returns the ground truth unchanged.
pub struct OracleReconstructor(pub Dims);

impl Reconstructor for OracleReconstructor {
    fn dims(&self) -> Dims {
        self.0
    }
    fn reconstruct(&self, lf: &LightField5D) -> Result<LightField5D> {
        Ok(lf.clone())
    }
}

/// Always outputs zeros.
pub struct ZeroReconstructor(pub Dims);

impl Reconstructor for ZeroReconstructor {
    fn dims(&self) -> Dims {
        self.0
    }
    fn reconstruct(&self, lf: &LightField5D) -> Result<LightField5D> {
        Ok(LightField5D::zeros(lf.dims()))
    }
}

/// A trained model run noise-free with the given pattern realization.
pub struct ModelReconstructor<'a> {
    pub model: &'a Model,
    pub mode: ExposureMode,
    pub tau: f32,
}

impl<'a> ModelReconstructor<'a> {
    /// Deployment path: binarized exposure patterns.
    pub fn deployed(model: &'a Model) -> Self {
        Self { model, mode: ExposureMode::Binary, tau: 1.0 }
    }
}

impl Reconstructor for ModelReconstructor<'_> {
    fn dims(&self) -> Dims {
        self.model.cfg.dims
    }
    fn reconstruct(&self, lf: &LightField5D) -> Result<LightField5D> {
        self.model.infer(lf, self.mode, self.tau)
    }
}

/// Scores a sequence of `T` frames window by window (`n_t` frames each).
pub fn eval_sequence(rec: &dyn Reconstructor, seq: &LightField5D, crop: usize) -> Result<PsnrReport> {
    let n_t = rec.dims().n_t;
    let total = seq.dims().n_t;
    if total == 0 || total % n_t != 0 {
        return Err(Error::NotDivisible { what: "sequence frames", value: total, by: n_t });
    }
    let windows: Result<Vec<Vec<Vec<f64>>>> = (0..total / n_t)
        .into_par_iter()
        .map(|w| {
            let truth = seq.time_window(w * n_t, n_t)?;
            view_psnr(&rec.reconstruct(&truth)?, &truth, crop)
        })
        .collect();
    Ok(PsnrReport::from_matrix(windows?.into_iter().flatten().collect()))
}

/// Normalized capture of `lf` through exported (deployable) patterns.
pub fn capture_exported(patterns: &ExportedPatterns, lf: &LightField5D) -> Result<CodedImage> {
    let raw = match &patterns.mask {
        Some(m) => free5d_capture(lf, m)?,
        None => coded_capture(lf, &patterns.aperture, &patterns.exposure)?,
    };
    Ok(normalize_capture(&raw, lf.dims()))
}

/// One atlas cell: the nine-point scene captured at one motion/disparity.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfStamp {
    pub md: MotionDisparity,
    /// Un-normalized capture.
    pub raw: CodedImage,
    /// `raw` divided by its maximum.
    pub corrected: CodedImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsfAtlas {
    pub dims: Dims,
    pub stamps: Vec<PsfStamp>,
}

/// Motion/disparity pairs `(α_x, d)` laid out as four quadrants.
pub fn psf_grid() -> Vec<MotionDisparity> {
    [(0.0, 0.0), (2.0, 0.0), (0.0, 2.0), (2.0, 2.0)]
        .into_iter()
        .map(|(ax, d)| MotionDisparity { alpha_x: ax, alpha_y: 0.0, d })
        .collect()
}

/// Captures the nine-point scene for every entry of `mds`.
pub fn psf_atlas(patterns: &ExportedPatterns, dims: Dims, mds: &[MotionDisparity]) -> Result<PsfAtlas> {
    let stamps = mds
        .iter()
        .map(|&md| {
            let lf = make_psf_scene(md, dims)?;
            let raw = match &patterns.mask {
                Some(m) => free5d_capture(&lf, m)?,
                None => coded_capture(&lf, &patterns.aperture, &patterns.exposure)?,
            };
            let peak = raw.data.iter().copied().fold(0.0f32, f32::max);
            let corrected = if peak > 0.0 { raw.scaled(1.0 / peak) } else { raw.clone() };
            Ok(PsfStamp { md, raw, corrected })
        })
        .collect::<Result<_>>()?;
    Ok(PsfAtlas { dims, stamps })
}

impl PsfAtlas {
    /// Corrected stamps tiled left to right, `cols` per row, one pixel gap.
    pub fn mosaic(&self, cols: usize) -> CodedImage {
        let (w, h) = (self.dims.n_x, self.dims.n_y);
        let cols = cols.max(1);
        let rows = self.stamps.len().div_ceil(cols);
        let (mw, mh) = (cols * (w + 1) - 1, rows.max(1) * (h + 1) - 1);
        let mut out = CodedImage::zeros(mw, mh);
        for (i, s) in self.stamps.iter().enumerate() {
            let (oy, ox) = ((i / cols) * (h + 1), (i % cols) * (w + 1));
            for y in 0..h {
                for x in 0..w {
                    out.data[(oy + y) * mw + ox + x] = s.corrected.get(y, x);
                }
            }
        }
        out
    }

    /// Largest zero-mean NCC over pairs of stamps with distinct `(α_x, d)`.
    pub fn max_cross_correlation(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (i, a) in self.stamps.iter().enumerate() {
            for b in &self.stamps[i + 1..] {
                if (a.md.alpha_x, a.md.d) != (b.md.alpha_x, b.md.d) {
                    worst = worst.max(ncc(&a.corrected.data, &b.corrected.data));
                }
            }
        }
        worst
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let m = self.mosaic(2);
        write_pgm(dir.join("psf_atlas.pgm"), m.n_x, m.n_y, &m.data)?;
        let mut csv = String::from("index,alpha_x,alpha_y,d,peak\n");
        for (i, s) in self.stamps.iter().enumerate() {
            write_image_pgm(dir.join(format!("psf_{i}.pgm")), &s.corrected, 1.0)?;
            let peak = s.raw.data.iter().copied().fold(0.0f32, f32::max);
            writeln!(csv, "{i},{},{},{},{peak}", s.md.alpha_x, s.md.alpha_y, s.md.d).unwrap();
        }
        writeln!(csv, "# max ncc {:.6}", self.max_cross_correlation()).unwrap();
        std::fs::write(dir.join("psf_atlas.csv"), csv)?;
        Ok(())
    }
}

/// Zero-mean normalized cross-correlation. Two constant inputs give 1.
pub fn ncc(a: &[f32], b: &[f32]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mb = b.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64 - ma, y as f64 - mb);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 && bb == 0.0 {
        1.0
    } else if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa * bb).sqrt()
    }
}

/// Mean PSNR over an `α_x × d` grid of plane scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub alpha_x: Vec<f32>,
    pub d: Vec<f32>,
    /// `cells[i][j]` is the score at `(alpha_x[i], d[j])`.
    pub cells: Vec<Vec<f64>>,
}

fn strictly_increasing(axis: &[f32]) -> bool {
    !axis.is_empty() && axis.windows(2).all(|w| w[0] < w[1])
}

impl SweepGrid {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha_x");
        for d in &self.d {
            write!(s, ",d={d}").unwrap();
        }
        s.push('\n');
        for (i, a) in self.alpha_x.iter().enumerate() {
            write!(s, "{a}").unwrap();
            for &c in &self.cells[i] {
                write!(s, ",{}", fmt_db(c)).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn get(&self, alpha_x: f32, d: f32) -> Option<f64> {
        let i = self.alpha_x.iter().position(|&a| a == alpha_x)?;
        let j = self.d.iter().position(|&v| v == d)?;
        Some(self.cells[i][j])
    }
}

/// Reconstructs `synth_plane(texture, (α_x, 0, d))` for every grid cell.
/// The texture must cover the field plus the largest shift from `origin`.
pub fn working_range_sweep(
    rec: &dyn Reconstructor,
    alpha_x: &[f32],
    d: &[f32],
    texture: &Texture,
    origin: (usize, usize),
    crop: usize,
) -> Result<SweepGrid> {
    if !strictly_increasing(alpha_x) || !strictly_increasing(d) {
        return Err(Error::InvalidArgument(format!("sweep axes must be strictly increasing: {alpha_x:?}, {d:?}")));
    }
    let dims = rec.dims();
    let cells: Vec<(usize, usize)> = (0..alpha_x.len()).flat_map(|i| (0..d.len()).map(move |j| (i, j))).collect();
    let scores: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            let md = MotionDisparity::new(alpha_x[i], 0.0, d[j])?;
            let lf = synth_plane(texture, md, dims, origin, Boundary::Strict).map_err(|e| match e {
                Error::TextureTooSmall(m) => Error::InsufficientMargin(m),
                other => other,
            })?;
            Ok(finite_mean(&view_psnr(&rec.reconstruct(&lf)?, &lf, crop)?.concat()).0)
        })
        .collect::<Result<_>>()?;
    let cells = scores.chunks(d.len()).map(<[f64]>::to_vec).collect();
    Ok(SweepGrid { alpha_x: alpha_x.to_vec(), d: d.to_vec(), cells })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub name: String,
    pub report: PsnrReport,
}

/// Rows sorted by mean PSNR, best first; ties keep input order.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn mean_of(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.name == name).map(|r| r.report.mean)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("rank,variant,mean_psnr,infinite\n");
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(s, "{},{},{},{}", i + 1, r.name, fmt_db(r.report.mean), r.report.infinite).unwrap();
        }
        s
    }

    /// `frame,<variant>...` with per-frame means.
    pub fn per_frame_csv(&self) -> String {
        let mut s = String::from("frame");
        for r in &self.rows {
            write!(s, ",{}", r.name).unwrap();
        }
        s.push('\n');
        let frames = self.rows.first().map_or(0, |r| r.report.frames());
        for f in 0..frames {
            write!(s, "{f}").unwrap();
            for r in &self.rows {
                write!(s, ",{}", fmt_db(r.report.per_frame[f])).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| rank | variant | mean PSNR (dB) |\n|---|---|---|\n");
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(s, "| {} | {} | {} |", i + 1, r.name, fmt_db(r.report.mean)).unwrap();
        }
        s
    }
}

/// Scores every reconstructor on the same scenes; each scene is one
/// `n_t`-frame window and contributes `n_t` frames to the curves.
pub fn ablation_compare(entries: &[(String, &dyn Reconstructor)], scenes: &[LightField5D], crop: usize) -> Result<AblationTable> {
    let Some((_, first)) = entries.first() else {
        return Ok(AblationTable { rows: Vec::new() });
    };
    let dims = first.dims();
    if let Some((name, r)) = entries.iter().find(|(_, r)| r.dims() != dims) {
        return Err(Error::DimensionMismatch(format!("{name} evaluates {:?}, others {dims:?}", r.dims())));
    }
    if let Some(s) = scenes.iter().find(|s| s.dims() != dims) {
        return Err(Error::DimensionMismatch(format!("scene {:?} vs reconstructors {dims:?}", s.dims())));
    }
    let mut rows = entries
        .iter()
        .map(|(name, rec)| {
            let matrices = scenes
                .par_iter()
                .map(|s| view_psnr(&rec.reconstruct(s)?, s, crop))
                .collect::<Result<Vec<_>>>()?;
            Ok(AblationRow { name: name.clone(), report: PsnrReport::from_matrix(matrices.into_iter().flatten().collect()) })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.report.mean.total_cmp(&a.report.mean));
    Ok(AblationTable { rows })
}

/// `|recon − truth|·3` for view `(t, v, u)`.
pub fn difference_map(recon: &LightField5D, truth: &LightField5D, t: usize, v: usize, u: usize) -> Result<CodedImage> {
    let d = truth.dims();
    if recon.dims() != d {
        return Err(Error::DimensionMismatch(format!("recon {:?} vs truth {:?}", recon.dims(), d)));
    }
    let data = recon.view(t, v, u).iter().zip(truth.view(t, v, u)).map(|(a, b)| 3.0 * (a - b).abs()).collect();
    CodedImage::new(d.n_x, d.n_y, data)
}
