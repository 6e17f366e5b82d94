//! Synthetic dynamic light fields of a textured fronto-parallel plane.
//!
//! A plane with texture `G`, disparity `d` and in-plane velocity
//! `(α_x, α_y)` produces
//! `L[t, v, u, y, x] = G(x - d·u - α_x·t, y - d·v - α_y·t)`
//! with `u` and `v` measured from the central view.

use crate::lf::{Dims, LightField5D};
use crate::{rng, Error, Result};
use rand::Rng;
use std::fmt::Write as _;

/// Grayscale texture `G[y, x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    pub width: usize,
    pub height: usize,
    data: Vec<f32>,
}

impl Texture {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} texture needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("texture contains non-finite values".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn constant(width: usize, height: usize, value: f32) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    /// Zero texture with unit impulses at the given `(x, y)` positions.
    pub fn impulses(width: usize, height: usize, points: &[(usize, usize)]) -> Result<Self> {
        let mut t = Self::constant(width, height, 0.0);
        for &(x, y) in points {
            if x >= width || y >= height {
                return Err(Error::IndexOutOfRange(format!("impulse ({x}, {y}) outside {width}x{height}")));
            }
            t.data[y * width + x] = 1.0;
        }
        Ok(t)
    }

    /// Occluding random discs with power-law radii over a mid-gray
    /// background. Scale-invariant edge statistics similar to natural photos.
    pub fn dead_leaves(width: usize, height: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, "texture", &[width as u64, height as u64]);
        let mut data = vec![0.5f32; width * height];
        let (r_min, r_max) = (1.5f64, (width.min(height) as f64 / 4.0).max(2.0));
        let discs = (width * height) / 6 + 8;
        for _ in 0..discs {
            // inverse-CDF for density ∝ r^-3 on [r_min, r_max]
            let q: f64 = rng.random();
            let inv = 1.0 / (r_min * r_min) - q * (1.0 / (r_min * r_min) - 1.0 / (r_max * r_max));
            let r = 1.0 / inv.sqrt();
            let cx = rng.random_range(-r..width as f64 + r);
            let cy = rng.random_range(-r..height as f64 + r);
            let value: f32 = rng.random_range(0.05..0.95);
            let (x0, x1) = ((cx - r).floor().max(0.0) as usize, ((cx + r).ceil() as usize).min(width));
            let (y0, y1) = ((cy - r).floor().max(0.0) as usize, ((cy + r).ceil() as usize).min(height));
            for y in y0..y1 {
                for x in x0..x1 {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    if dx * dx + dy * dy <= r * r {
                        data[y * width + x] = value;
                    }
                }
            }
        }
        Self { width, height, data }
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    fn texel(&self, x: i64, y: i64) -> Option<f32> {
        (x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height)
            .then(|| self.data[y as usize * self.width + x as usize])
    }
}

/// Plane motion (pixels per time unit) and disparity (pixels per view step).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotionDisparity {
    pub alpha_x: f32,
    pub alpha_y: f32,
    pub d: f32,
}

impl MotionDisparity {
    pub fn new(alpha_x: f32, alpha_y: f32, d: f32) -> Result<Self> {
        if ![alpha_x, alpha_y, d].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("motion and disparity must be finite".into()));
        }
        Ok(Self { alpha_x, alpha_y, d })
    }

    /// Largest absolute sample offset from the unshifted position.
    pub fn max_shift(&self, dims: Dims) -> f32 {
        let du = self.d.abs() * (dims.n_u / 2).max(dims.n_v / 2) as f32;
        du + self.alpha_x.abs().max(self.alpha_y.abs()) * (dims.n_t - 1) as f32
    }
}

/// How samples outside the texture are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Any needed texel outside the texture is an error.
    #[default]
    Strict,
    /// Missing texels read as zero.
    ZeroPad,
}

/// Bilinear sample of `tex` at `(sx, sy)`. Texels with zero weight are not
/// touched, so integral positions never need a neighbour.
fn bilinear(tex: &Texture, sx: f64, sy: f64, boundary: Boundary) -> Option<f32> {
    let (x0, y0) = (sx.floor(), sy.floor());
    let (fx, fy) = (sx - x0, sy - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let mut acc = 0.0f64;
    for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            let w = wx * wy;
            if w == 0.0 {
                continue;
            }
            match (tex.texel(x0 + dx, y0 + dy), boundary) {
                (Some(g), _) => acc += w * g as f64,
                (None, Boundary::ZeroPad) => {}
                (None, Boundary::Strict) => return None,
            }
        }
    }
    Some(acc as f32)
}

/// Light field of a textured plane. Image pixel `(x, y)` of the central
/// view at `t = 0` samples texel `(origin.0 + x, origin.1 + y)`.
pub fn synth_plane(
    tex: &Texture,
    md: MotionDisparity,
    dims: Dims,
    origin: (usize, usize),
    boundary: Boundary,
) -> Result<LightField5D> {
    dims.validate()?;
    let mut data = Vec::with_capacity(dims.len());
    for t in 0..dims.n_t {
        for v in 0..dims.n_v {
            for u in 0..dims.n_u {
                let sx0 = origin.0 as f64 - md.d as f64 * dims.centered_u(u) as f64 - md.alpha_x as f64 * t as f64;
                let sy0 = origin.1 as f64 - md.d as f64 * dims.centered_v(v) as f64 - md.alpha_y as f64 * t as f64;
                for y in 0..dims.n_y {
                    for x in 0..dims.n_x {
                        let value = bilinear(tex, sx0 + x as f64, sy0 + y as f64, boundary).ok_or_else(|| {
                            Error::TextureTooSmall(format!(
                                "{}x{} texture cannot cover {dims:?} with {md:?} at origin {origin:?}",
                                tex.width, tex.height
                            ))
                        })?;
                        data.push(value);
                    }
                }
            }
        }
    }
    LightField5D::new(dims, data)
}

/// Image-space positions of the nine probe points: a 3×3 grid at the
/// sixths of the frame.
pub fn psf_points(dims: Dims) -> Vec<(usize, usize)> {
    let mut pts = Vec::with_capacity(9);
    for ky in 0..3 {
        for kx in 0..3 {
            pts.push(((2 * kx + 1) * dims.n_x / 6, (2 * ky + 1) * dims.n_y / 6));
        }
    }
    pts
}

/// Plane scene whose texture is a set of unit impulses at image positions
/// `points` (central view, `t = 0`).
pub fn make_point_scene(md: MotionDisparity, dims: Dims, points: &[(usize, usize)]) -> Result<LightField5D> {
    let m = md.max_shift(dims).ceil() as usize + 1;
    let shifted: Vec<_> = points.iter().map(|&(x, y)| (x + m, y + m)).collect();
    let tex = Texture::impulses(dims.n_x + 2 * m, dims.n_y + 2 * m, &shifted)?;
    synth_plane(&tex, md, dims, (m, m), Boundary::Strict)
}

/// Nine-point probe scene used for PSF inspection.
pub fn make_psf_scene(md: MotionDisparity, dims: Dims) -> Result<LightField5D> {
    if dims.n_x < 6 || dims.n_y < 6 {
        return Err(Error::InvalidDims(format!("{dims:?} too small for a 3x3 point grid")));
    }
    make_point_scene(md, dims, &psf_points(dims))
}

/// Static (single time unit) light field of a plane at disparity `d`.
pub fn static_source(tex: &Texture, d: f32, dims: Dims, origin: (usize, usize)) -> Result<LightField5D> {
    synth_plane(tex, MotionDisparity { alpha_x: 0.0, alpha_y: 0.0, d }, dims.with_time(1), origin, Boundary::Strict)
}

/// Translates a static light field linearly over time.
///
/// The output omits `margin` pixels on every side of the source:
/// `out[t, v, u, y, x] = src[v, u, y + margin - α_y·t, x + margin - α_x·t]`.
pub fn augment_motion(src: &LightField5D, alpha: (f32, f32), n_t: usize, margin: usize) -> Result<LightField5D> {
    let sd = src.dims();
    if sd.n_t != 1 {
        return Err(Error::InvalidArgument(format!("motion source must be static, has n_t = {}", sd.n_t)));
    }
    if n_t == 0 {
        return Err(Error::InvalidDims("n_t must be >= 1".into()));
    }
    let need = (n_t as f32 - 1.0) * alpha.0.abs().max(alpha.1.abs());
    let frac = alpha.0.fract() != 0.0 || alpha.1.fract() != 0.0;
    let need = need.ceil() as usize + usize::from(frac);
    if margin < need || sd.n_x <= 2 * margin || sd.n_y <= 2 * margin {
        return Err(Error::InsufficientMargin(format!(
            "margin {margin} on {}x{} source, motion {alpha:?} over {n_t} units needs {need}",
            sd.n_x, sd.n_y
        )));
    }
    let out = Dims { n_x: sd.n_x - 2 * margin, n_y: sd.n_y - 2 * margin, n_t, ..sd };
    let mut data = Vec::with_capacity(out.len());
    for t in 0..n_t {
        for v in 0..sd.n_v {
            for u in 0..sd.n_u {
                let view = src.view(0, v, u);
                let tex = Texture { width: sd.n_x, height: sd.n_y, data: view.to_vec() };
                let sx0 = margin as f64 - alpha.0 as f64 * t as f64;
                let sy0 = margin as f64 - alpha.1 as f64 * t as f64;
                for y in 0..out.n_y {
                    for x in 0..out.n_x {
                        let value = bilinear(&tex, sx0 + x as f64, sy0 + y as f64, Boundary::Strict)
                            .ok_or_else(|| Error::InsufficientMargin(format!("motion {alpha:?} leaves the source")))?;
                        data.push(value);
                    }
                }
            }
        }
    }
    LightField5D::new(out, data)
}

/// The 5×5 grid of integral velocities `{-2, ..., 2}²`, `α_y` outer.
pub fn motion_grid() -> Vec<(f32, f32)> {
    let axis = [-2.0f32, -1.0, 0.0, 1.0, 2.0];
    axis.iter().flat_map(|&ay| axis.iter().map(move |&ax| (ax, ay))).collect()
}

/// One spatial crop of a static source at one intensity scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchSpec {
    pub source_id: usize,
    /// Top-left corner of the patch proper (margin excluded) in source pixels.
    pub x: usize,
    pub y: usize,
    pub scale: f32,
}

/// Enumerates patches row-major per source, scales innermost. Every patch
/// keeps `margin` source pixels of context on each side.
pub fn extract_patches(
    sources: &[LightField5D],
    patch: usize,
    stride: usize,
    margin: usize,
    scales: &[f32],
) -> Result<Vec<PatchSpec>> {
    if stride == 0 || patch == 0 {
        return Err(Error::InvalidArgument("patch size and stride must be >= 1".into()));
    }
    if let Some(s) = scales.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
        return Err(Error::InvalidArgument(format!("intensity scale {s} outside (0, 1]")));
    }
    let mut out = Vec::new();
    for (id, src) in sources.iter().enumerate() {
        let d = src.dims();
        if patch + 2 * margin > d.n_x || patch + 2 * margin > d.n_y {
            return Err(Error::InvalidArgument(format!(
                "patch {patch} with margin {margin} larger than {}x{} source {id}",
                d.n_x, d.n_y
            )));
        }
        for y in (margin..=d.n_y - margin - patch).step_by(stride) {
            for x in (margin..=d.n_x - margin - patch).step_by(stride) {
                for &scale in scales {
                    out.push(PatchSpec { source_id: id, x, y, scale });
                }
            }
        }
    }
    Ok(out)
}

/// Crop of `spec` including its margin, intensity-scaled and clamped to [0, 1].
pub fn crop_patch(src: &LightField5D, spec: &PatchSpec, patch: usize, margin: usize) -> LightField5D {
    let d = src.dims();
    let size = patch + 2 * margin;
    let (x0, y0) = (spec.x - margin, spec.y - margin);
    LightField5D::from_fn(Dims { n_x: size, n_y: size, ..d }, |t, v, u, y, x| {
        (src.get(t, v, u, y0 + y, x0 + x) * spec.scale).clamp(0.0, 1.0)
    })
}

/// One training sample: a patch, its scale and a motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifestEntry {
    pub source_id: usize,
    pub patch_x: usize,
    pub patch_y: usize,
    pub scale: f32,
    pub alpha_x: f32,
    pub alpha_y: f32,
}

impl ManifestEntry {
    pub fn line(&self) -> String {
        format!(
            "{}, {}, {}, {}, {}, {}",
            self.source_id, self.patch_x, self.patch_y, self.scale, self.alpha_x, self.alpha_y
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::InvalidArgument(format!("bad manifest line {line:?}"));
        if f.len() != 6 {
            return Err(bad());
        }
        Ok(Self {
            source_id: f[0].parse().map_err(|_| bad())?,
            patch_x: f[1].parse().map_err(|_| bad())?,
            patch_y: f[2].parse().map_err(|_| bad())?,
            scale: f[3].parse().map_err(|_| bad())?,
            alpha_x: f[4].parse().map_err(|_| bad())?,
            alpha_y: f[5].parse().map_err(|_| bad())?,
        })
    }
}

/// Procedural static sources: one dead-leaves plane per source, each at
/// its own disparity drawn uniformly from `[-d_max, d_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub count: usize,
    /// Square side of every static source in pixels.
    pub size: usize,
    pub n_u: usize,
    pub n_v: usize,
    pub d_max: f32,
    pub seed: u64,
}

impl SourceSpec {
    pub fn disparity(&self, i: usize) -> f32 {
        if self.d_max == 0.0 {
            return 0.0;
        }
        rng::stream(self.seed, "disparity", &[i as u64]).random_range(-self.d_max..=self.d_max)
    }

    pub fn generate(&self) -> Result<Vec<LightField5D>> {
        let dims = Dims::new(self.n_u, self.n_v, self.size, self.size, 1)?;
        (0..self.count)
            .map(|i| {
                let d = self.disparity(i);
                let m = MotionDisparity { d, ..Default::default() }.max_shift(dims).ceil() as usize + 1;
                let side = self.size + 2 * m;
                let tex = Texture::dead_leaves(side, side, rng::stream_seed(self.seed, "source", &[i as u64]));
                static_source(&tex, d, dims, (m, m))
            })
            .collect()
    }
}

/// Index-addressable dataset of motion-augmented patches. Samples are
/// synthesized on demand.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub sources: Vec<LightField5D>,
    pub patch: usize,
    pub margin: usize,
    pub n_t: usize,
    pub entries: Vec<ManifestEntry>,
}

impl Dataset {
    /// Cartesian product patches × scales × motions, motions innermost.
    pub fn build(
        sources: Vec<LightField5D>,
        patch: usize,
        stride: usize,
        scales: &[f32],
        motions: &[(f32, f32)],
        n_t: usize,
    ) -> Result<Self> {
        let max_alpha = motions.iter().fold(0.0f32, |m, a| m.max(a.0.abs()).max(a.1.abs()));
        let margin = ((n_t.saturating_sub(1)) as f32 * max_alpha).ceil() as usize;
        let patches = extract_patches(&sources, patch, stride, margin, scales)?;
        let entries = patches
            .iter()
            .flat_map(|p| {
                motions.iter().map(move |&(ax, ay)| ManifestEntry {
                    source_id: p.source_id,
                    patch_x: p.x,
                    patch_y: p.y,
                    scale: p.scale,
                    alpha_x: ax,
                    alpha_y: ay,
                })
            })
            .collect();
        Ok(Self { sources, patch, margin, n_t, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Keeps only the listed entries, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self { entries: indices.iter().map(|&i| self.entries[i]).collect(), ..self.clone() }
    }

    pub fn sample(&self, i: usize) -> Result<LightField5D> {
        let e = self
            .entries
            .get(i)
            .ok_or_else(|| Error::IndexOutOfRange(format!("sample {i} of {}", self.entries.len())))?;
        let src = self
            .sources
            .get(e.source_id)
            .ok_or_else(|| Error::IndexOutOfRange(format!("source {}", e.source_id)))?;
        let spec = PatchSpec { source_id: e.source_id, x: e.patch_x, y: e.patch_y, scale: e.scale };
        let crop = crop_patch(src, &spec, self.patch, self.margin);
        augment_motion(&crop, (e.alpha_x, e.alpha_y), self.n_t, self.margin)
    }

    pub fn manifest(&self) -> String {
        let mut s = String::from("# source_id, patch_x, patch_y, scale, alpha_x, alpha_y\n");
        for e in &self.entries {
            let _ = writeln!(s, "{}", e.line());
        }
        s
    }
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(ManifestEntry::parse)
        .collect()
}
