//! Measurement models mapping a dynamic light field to one sensor image.
//!
//! * ordinary camera: `I = Σ_{t,v,u} L`
//! * coded camera: `I = Σ_t p(t) · Σ_{v,u} a(u, v, t) · L`
//! * free-form mask: `I = Σ_{t,v,u} m(y mod 8, x mod 8, u, v, t) · L`
//!
//! All captures accumulate one per-time partial sum over views and then
//! add it into the image, in the same order. Uniform or factorized
//! patterns therefore reproduce the simpler models bit for bit.

use crate::lf::{CodedImage, Dims, LightField5D, TILE};
use crate::{rng, Error, Result};
use rand_distr::{Distribution, Normal};

const TILE_AREA: usize = TILE * TILE;

/// Aperture transmittance `a[t, v, u] ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AperturePattern {
    pub n_t: usize,
    pub n_v: usize,
    pub n_u: usize,
    values: Vec<f32>,
}

impl AperturePattern {
    pub fn new(n_t: usize, n_v: usize, n_u: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != n_t * n_v * n_u {
            return Err(Error::DimensionMismatch(format!(
                "aperture {n_t}x{n_v}x{n_u} needs {} values, got {}",
                n_t * n_v * n_u,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("aperture transmittance {v} outside [0, 1]")));
        }
        Ok(Self { n_t, n_v, n_u, values })
    }

    pub fn uniform(dims: Dims, value: f32) -> Self {
        Self::new(dims.n_t, dims.n_v, dims.n_u, vec![value; dims.rays_per_pixel()]).expect("uniform aperture")
    }

    /// Open only viewpoint `(u, v)` at every time unit.
    pub fn pinhole(dims: Dims, u: usize, v: usize) -> Self {
        let mut a = Self::uniform(dims, 0.0);
        for t in 0..dims.n_t {
            a.values[(t * dims.n_v + v) * dims.n_u + u] = 1.0;
        }
        a
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, t: usize, v: usize, u: usize) -> f32 {
        self.values[(t * self.n_v + v) * self.n_u + u]
    }

    fn check(&self, d: Dims) -> Result<()> {
        if (self.n_t, self.n_v, self.n_u) != (d.n_t, d.n_v, d.n_u) {
            return Err(Error::DimensionMismatch(format!(
                "aperture is {}x{}x{} (t, v, u), light field {d:?}",
                self.n_t, self.n_v, self.n_u
            )));
        }
        Ok(())
    }
}

/// Separable exposure code given by row and column control logits.
///
/// The realized pattern is `p[t, y, x] = [rows[t, y mod 8] > 0] · [cols[t, x mod 8] > 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposurePattern {
    pub n_t: usize,
    /// `[t, j]` row logits.
    pub rows: Vec<f32>,
    /// `[t, i]` column logits.
    pub cols: Vec<f32>,
}

impl ExposurePattern {
    pub fn new(n_t: usize, rows: Vec<f32>, cols: Vec<f32>) -> Result<Self> {
        if rows.len() != n_t * TILE || cols.len() != n_t * TILE {
            return Err(Error::DimensionMismatch(format!(
                "exposure logits need {} rows and cols, got {} and {}",
                n_t * TILE,
                rows.len(),
                cols.len()
            )));
        }
        Ok(Self { n_t, rows, cols })
    }

    /// Every pixel open at every time unit.
    pub fn all_open(n_t: usize) -> Self {
        Self { n_t, rows: vec![1.0; n_t * TILE], cols: vec![1.0; n_t * TILE] }
    }

    /// Binary realization.
    pub fn realize(&self) -> ExposureTile {
        let mut values = Vec::with_capacity(self.n_t * TILE_AREA);
        for t in 0..self.n_t {
            for j in 0..TILE {
                for i in 0..TILE {
                    let on = self.rows[t * TILE + j] > 0.0 && self.cols[t * TILE + i] > 0.0;
                    values.push(if on { 1.0 } else { 0.0 });
                }
            }
        }
        ExposureTile { n_t: self.n_t, values }
    }

    /// Sigmoid-product relaxation `σ(τ·rows) · σ(τ·cols)` used during training.
    pub fn realize_relaxed(&self, tau: f32) -> ExposureTile {
        let s = |z: f32| 1.0 / (1.0 + (-tau * z).exp());
        let mut values = Vec::with_capacity(self.n_t * TILE_AREA);
        for t in 0..self.n_t {
            for j in 0..TILE {
                for i in 0..TILE {
                    values.push(s(self.rows[t * TILE + j]) * s(self.cols[t * TILE + i]));
                }
            }
        }
        ExposureTile { n_t: self.n_t, values }
    }
}

/// One 8×8 period of an exposure code, `[t, j, i]`, applied as
/// `p[t, y, x] = tile[t, y mod 8, x mod 8]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureTile {
    pub n_t: usize,
    values: Vec<f32>,
}

impl ExposureTile {
    pub fn new(n_t: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != n_t * TILE_AREA {
            return Err(Error::DimensionMismatch(format!(
                "exposure tile needs {} values, got {}",
                n_t * TILE_AREA,
                values.len()
            )));
        }
        Ok(Self { n_t, values })
    }

    pub fn ones(n_t: usize) -> Self {
        Self { n_t, values: vec![1.0; n_t * TILE_AREA] }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, t: usize, j: usize, i: usize) -> f32 {
        self.values[(t * TILE + j) * TILE + i]
    }

    #[inline]
    pub fn at_pixel(&self, t: usize, y: usize, x: usize) -> f32 {
        self.get(t, y % TILE, x % TILE)
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// True when every time slice equals the outer product of its 0/1 row
    /// and column indicators (rank ≤ 1 over {0, 1}).
    pub fn is_row_column_separable(&self) -> bool {
        if !self.is_binary() {
            return false;
        }
        (0..self.n_t).all(|t| {
            let row_on: Vec<bool> = (0..TILE).map(|j| (0..TILE).any(|i| self.get(t, j, i) == 1.0)).collect();
            let col_on: Vec<bool> = (0..TILE).map(|i| (0..TILE).any(|j| self.get(t, j, i) == 1.0)).collect();
            (0..TILE).all(|j| (0..TILE).all(|i| (self.get(t, j, i) == 1.0) == (row_on[j] && col_on[i])))
        })
    }

    fn check(&self, n_t: usize) -> Result<()> {
        if self.n_t != n_t {
            return Err(Error::DimensionMismatch(format!("exposure has {} time units, expected {n_t}", self.n_t)));
        }
        Ok(())
    }
}

/// Free-form mask `m[t, v, u, j, i] ∈ [0, 1]`, periodic over 8×8 pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Free5DMask {
    pub n_t: usize,
    pub n_v: usize,
    pub n_u: usize,
    values: Vec<f32>,
}

impl Free5DMask {
    pub fn new(n_t: usize, n_v: usize, n_u: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != n_t * n_v * n_u * TILE_AREA {
            return Err(Error::DimensionMismatch(format!(
                "free-form mask needs {} values, got {}",
                n_t * n_v * n_u * TILE_AREA,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("mask value {v} outside [0, 1]")));
        }
        Ok(Self { n_t, n_v, n_u, values })
    }

    /// `m[t, v, u, j, i] = a[t, v, u] · p[t, j, i]`.
    pub fn factorized(a: &AperturePattern, p: &ExposureTile) -> Result<Self> {
        p.check(a.n_t)?;
        let mut values = Vec::with_capacity(a.values.len() * TILE_AREA);
        for t in 0..a.n_t {
            for vu in 0..a.n_v * a.n_u {
                let av = a.values[t * a.n_v * a.n_u + vu];
                values.extend(p.values[t * TILE_AREA..(t + 1) * TILE_AREA].iter().map(|&pv| av * pv));
            }
        }
        Ok(Self { n_t: a.n_t, n_v: a.n_v, n_u: a.n_u, values })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, t: usize, v: usize, u: usize, j: usize, i: usize) -> f32 {
        self.values[(((t * self.n_v + v) * self.n_u + u) * TILE + j) * TILE + i]
    }
}

/// Staggered exposure of horizontal sensor bands.
///
/// Band `k` starts exposing `offsets[k]` time units after band 0, so while
/// exposing local time unit `s` it sees coding pattern `(s + offsets[k]) mod n_t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionTiming {
    pub offsets: Vec<usize>,
}

impl RegionTiming {
    pub const REGIONS: usize = 4;

    /// Cyclic shifts `π_k(t) = (t + k) mod n_t`.
    pub fn staggered() -> Self {
        Self { offsets: (0..Self::REGIONS).collect() }
    }

    pub fn identity() -> Self {
        Self { offsets: vec![0; Self::REGIONS] }
    }

    pub fn regions(&self) -> usize {
        self.offsets.len()
    }

    /// Pattern index used by region `k` at local time `s`.
    pub fn pattern_index(&self, k: usize, s: usize, n_t: usize) -> usize {
        (s + self.offsets[k]) % n_t
    }

    /// Frame order that makes pattern `t'` meet the frame region `k` actually
    /// exposes under it: `order[t'] = π_k⁻¹(t')`.
    pub fn input_order(&self, k: usize, n_t: usize) -> Vec<usize> {
        let o = self.offsets[k] % n_t;
        (0..n_t).map(|tp| (tp + n_t - o) % n_t).collect()
    }

    /// Time units a capture needs from the light field.
    pub fn time_extent(&self, n_t: usize) -> usize {
        n_t + self.offsets.iter().copied().max().unwrap_or(0)
    }

    pub fn rows_of(&self, k: usize, n_y: usize) -> std::ops::Range<usize> {
        let h = n_y / self.regions();
        k * h..(k + 1) * h
    }
}

/// Aperture-coded spatio-temporal tensor `J[t, y, x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatioTemporal {
    pub n_t: usize,
    pub n_y: usize,
    pub n_x: usize,
    pub data: Vec<f32>,
}

impl SpatioTemporal {
    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.n_x * self.n_y;
        &self.data[t * n..(t + 1) * n]
    }
}

#[inline]
fn accumulate_views(partial: &mut [f32], lf: &LightField5D, t: usize, weight: impl Fn(usize, usize) -> f32) {
    let d = lf.dims();
    for v in 0..d.n_v {
        for u in 0..d.n_u {
            let w = weight(v, u);
            for (acc, &l) in partial.iter_mut().zip(lf.view(t, v, u)) {
                *acc += w * l;
            }
        }
    }
}

pub fn ordinary_capture(lf: &LightField5D) -> CodedImage {
    let d = lf.dims();
    let mut img = CodedImage::zeros(d.n_x, d.n_y);
    let mut partial = vec![0.0f32; d.pixels()];
    for t in 0..d.n_t {
        partial.fill(0.0);
        for v in 0..d.n_v {
            for u in 0..d.n_u {
                for (acc, &l) in partial.iter_mut().zip(lf.view(t, v, u)) {
                    *acc += l;
                }
            }
        }
        for (i, p) in img.data.iter_mut().zip(&partial) {
            *i += p;
        }
    }
    img
}

pub fn aperture_code(lf: &LightField5D, a: &AperturePattern) -> Result<SpatioTemporal> {
    let d = lf.dims();
    a.check(d)?;
    let n = d.pixels();
    let mut data = vec![0.0f32; d.n_t * n];
    for t in 0..d.n_t {
        accumulate_views(&mut data[t * n..(t + 1) * n], lf, t, |v, u| a.get(t, v, u));
    }
    Ok(SpatioTemporal { n_t: d.n_t, n_y: d.n_y, n_x: d.n_x, data })
}

pub fn exposure_code(j: &SpatioTemporal, p: &ExposureTile) -> Result<CodedImage> {
    p.check(j.n_t)?;
    let mut img = CodedImage::zeros(j.n_x, j.n_y);
    for t in 0..j.n_t {
        let frame = j.frame(t);
        for y in 0..j.n_y {
            for x in 0..j.n_x {
                img.data[y * j.n_x + x] += p.at_pixel(t, y, x) * frame[y * j.n_x + x];
            }
        }
    }
    Ok(img)
}

/// Fused aperture + exposure capture; equals
/// `exposure_code(aperture_code(lf, a), p)` exactly.
pub fn coded_capture(lf: &LightField5D, a: &AperturePattern, p: &ExposureTile) -> Result<CodedImage> {
    let d = lf.dims();
    a.check(d)?;
    p.check(d.n_t)?;
    let mut img = CodedImage::zeros(d.n_x, d.n_y);
    let mut partial = vec![0.0f32; d.pixels()];
    for t in 0..d.n_t {
        partial.fill(0.0);
        accumulate_views(&mut partial, lf, t, |v, u| a.get(t, v, u));
        add_exposed(&mut img, &partial, p, t, 0..d.n_y);
    }
    Ok(img)
}

fn add_exposed(img: &mut CodedImage, partial: &[f32], p: &ExposureTile, t: usize, rows: std::ops::Range<usize>) {
    let n_x = img.n_x;
    for y in rows {
        let prow = &p.values[(t * TILE + y % TILE) * TILE..(t * TILE + y % TILE + 1) * TILE];
        let out = &mut img.data[y * n_x..(y + 1) * n_x];
        let src = &partial[y * n_x..(y + 1) * n_x];
        for (x, (o, &s)) in out.iter_mut().zip(src).enumerate() {
            *o += prow[x % TILE] * s;
        }
    }
}

pub fn free5d_capture(lf: &LightField5D, m: &Free5DMask) -> Result<CodedImage> {
    let d = lf.dims();
    if (m.n_t, m.n_v, m.n_u) != (d.n_t, d.n_v, d.n_u) {
        return Err(Error::DimensionMismatch(format!(
            "mask is {}x{}x{} (t, v, u), light field {d:?}",
            m.n_t, m.n_v, m.n_u
        )));
    }
    let mut img = CodedImage::zeros(d.n_x, d.n_y);
    let mut partial = vec![0.0f32; d.pixels()];
    for t in 0..d.n_t {
        partial.fill(0.0);
        for v in 0..d.n_v {
            for u in 0..d.n_u {
                let view = lf.view(t, v, u);
                for y in 0..d.n_y {
                    let mrow = &m.values[(((t * d.n_v + v) * d.n_u + u) * TILE + y % TILE) * TILE..][..TILE];
                    let acc = &mut partial[y * d.n_x..(y + 1) * d.n_x];
                    for (x, (a, &l)) in acc.iter_mut().zip(&view[y * d.n_x..(y + 1) * d.n_x]).enumerate() {
                        *a += mrow[x % TILE] * l;
                    }
                }
            }
        }
        for (i, p) in img.data.iter_mut().zip(&partial) {
            *i += p;
        }
    }
    Ok(img)
}

/// Divides by the largest achievable uncoded pixel value `n_u·n_v·n_t`.
pub fn normalize_capture(img: &CodedImage, dims: Dims) -> CodedImage {
    img.scaled(1.0 / dims.rays_per_pixel() as f32)
}

/// Adds i.i.d. Gaussian noise with standard deviation `sigma · scale`.
pub fn add_sensor_noise(img: &CodedImage, sigma: f32, scale: f32, seed: u64) -> Result<CodedImage> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = rng::stream(seed, "noise", &[]);
    let normal = Normal::new(0.0f32, sigma * scale).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let data = img.data.iter().map(|&v| v + normal.sample(&mut rng)).collect();
    Ok(CodedImage { n_x: img.n_x, n_y: img.n_y, data })
}

/// Coded capture on a sensor whose horizontal bands expose staggered time
/// windows. `lf` must span `rt.time_extent(a.n_t)` time units; the patterns
/// define the exposure length.
pub fn capture_with_region_timing(
    lf: &LightField5D,
    a: &AperturePattern,
    p: &ExposureTile,
    rt: &RegionTiming,
) -> Result<CodedImage> {
    let d = lf.dims();
    let n_t = a.n_t;
    a.check(d.with_time(n_t))?;
    p.check(n_t)?;
    if rt.regions() == 0 || d.n_y % rt.regions() != 0 {
        return Err(Error::NotDivisible { what: "n_y", value: d.n_y, by: rt.regions().max(1) });
    }
    let need = rt.time_extent(n_t);
    if d.n_t < need {
        return Err(Error::InsufficientTemporalExtent { have: d.n_t, need });
    }
    let mut img = CodedImage::zeros(d.n_x, d.n_y);
    let mut partial = vec![0.0f32; d.pixels()];
    for k in 0..rt.regions() {
        let rows = rt.rows_of(k, d.n_y);
        // pattern order keeps the summation identical to `coded_capture`
        for pt in 0..n_t {
            let s = (pt + n_t - rt.offsets[k] % n_t) % n_t;
            debug_assert_eq!(rt.pattern_index(k, s, n_t), pt);
            partial.fill(0.0);
            accumulate_views(&mut partial, lf, rt.offsets[k] + s, |v, u| a.get(pt, v, u));
            add_exposed(&mut img, &partial, p, pt, rows.clone());
        }
    }
    Ok(img)
}

/// Input seen by region `k`: its exposure window, reordered so that time
/// unit `t'` is the frame coded with pattern `t'`.
pub fn region_input(lf: &LightField5D, rt: &RegionTiming, k: usize, n_t: usize) -> Result<LightField5D> {
    lf.time_window(rt.offsets[k], n_t)?.reorder_time(&rt.input_order(k, n_t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dims(n_u: usize, n_v: usize, n_x: usize, n_y: usize, n_t: usize) -> Dims {
        Dims::new(n_u, n_v, n_x, n_y, n_t).unwrap()
    }

    fn random_lf(d: Dims, rng: &mut ChaCha8Rng) -> LightField5D {
        LightField5D::from_fn(d, |_, _, _, _, _| rng.random())
    }

    fn random_aperture(d: Dims, rng: &mut ChaCha8Rng) -> AperturePattern {
        AperturePattern::new(d.n_t, d.n_v, d.n_u, (0..d.rays_per_pixel()).map(|_| rng.random()).collect()).unwrap()
    }

    fn random_exposure(n_t: usize, rng: &mut ChaCha8Rng) -> ExposurePattern {
        ExposurePattern::new(
            n_t,
            (0..n_t * 8).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..n_t * 8).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn close(a: &[f32], b: &[f64], rel: f64) {
        assert_eq!(a.len(), b.len());
        for (&x, &y) in a.iter().zip(b) {
            assert!((x as f64 - y).abs() <= rel * y.abs().max(1e-12), "{x} vs {y}");
        }
    }

    #[test]
    fn ordinary_all_ones_is_ray_count() {
        let lf = LightField5D::filled(dims(5, 5, 8, 8, 4), 1.0);
        assert!(ordinary_capture(&lf).data.iter().all(|&v| v == 100.0));
    }

    #[test]
    fn ordinary_single_ray_is_that_view() {
        let d = dims(3, 3, 8, 8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lf = LightField5D::from_fn(d, |t, v, u, _, _| if (t, v, u) == (0, 0, 0) { rng.random() } else { 0.0 });
        assert_eq!(ordinary_capture(&lf).data, lf.view(0, 0, 0));
    }

    #[test]
    fn aperture_code_cases() {
        let d = dims(5, 5, 8, 8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lf = random_lf(d, &mut rng);
        let j = aperture_code(&lf, &AperturePattern::pinhole(d, 2, 2)).unwrap();
        for t in 0..2 {
            assert_eq!(j.frame(t), lf.view(t, 2, 2));
        }
        let a = random_aperture(d, &mut rng);
        let j = aperture_code(&lf, &a).unwrap();
        let mut oracle = vec![0.0f64; 2 * 64];
        for t in 0..2 {
            for v in 0..5 {
                for u in 0..5 {
                    for px in 0..64 {
                        oracle[t * 64 + px] += a.get(t, v, u) as f64 * lf.view(t, v, u)[px] as f64;
                    }
                }
            }
        }
        close(&j.data, &oracle, 1e-5);
        let wrong = AperturePattern::uniform(dims(3, 3, 8, 8, 2), 1.0);
        assert!(aperture_code(&lf, &wrong).is_err());
    }

    #[test]
    fn exposure_code_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let j = SpatioTemporal { n_t: 2, n_y: 8, n_x: 16, data: (0..256).map(|_| rng.random()).collect() };
        let all = exposure_code(&j, &ExposureTile::ones(2)).unwrap();
        for px in 0..128 {
            assert_eq!(all.data[px], j.frame(0)[px] + j.frame(1)[px]);
        }
        // columns 0..4 open at t=0, columns 4..8 at t=1: one active unit per pixel
        let mut cols = vec![-1.0; 16];
        for i in 0..4 {
            cols[i] = 1.0;
            cols[8 + 4 + i] = 1.0;
        }
        let p = ExposurePattern::new(2, vec![1.0; 16], cols).unwrap().realize();
        let img = exposure_code(&j, &p).unwrap();
        for y in 0..8 {
            for x in 0..16 {
                let t = if x % 8 < 4 { 0 } else { 1 };
                assert_eq!(img.get(y, x), j.frame(t)[y * 16 + x]);
            }
        }
        assert!(exposure_code(&j, &ExposureTile::ones(3)).is_err());
    }

    #[test]
    fn coded_capture_small_cases() {
        let d = dims(5, 5, 8, 8, 4);
        let lf = LightField5D::filled(d, 1.0);
        let img = coded_capture(&lf, &AperturePattern::uniform(d, 0.5), &ExposureTile::ones(4)).unwrap();
        assert!(img.data.iter().all(|&v| v == 50.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lf = random_lf(d, &mut rng);
        let uni = coded_capture(&lf, &AperturePattern::uniform(d, 1.0), &ExposureTile::ones(4)).unwrap();
        assert_eq!(uni, ordinary_capture(&lf));
    }

    #[test]
    fn coded_capture_matches_quintuple_loop_and_composition() {
        let d = dims(2, 2, 8, 8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lf = random_lf(d, &mut rng);
        let a = random_aperture(d, &mut rng);
        let p = random_exposure(2, &mut rng).realize();
        let img = coded_capture(&lf, &a, &p).unwrap();
        let mut oracle = vec![0.0f64; 64];
        for t in 0..2 {
            for v in 0..2 {
                for u in 0..2 {
                    for y in 0..8 {
                        for x in 0..8 {
                            oracle[y * 8 + x] +=
                                a.get(t, v, u) as f64 * p.at_pixel(t, y, x) as f64 * lf.get(t, v, u, y, x) as f64;
                        }
                    }
                }
            }
        }
        close(&img.data, &oracle, 1e-5);
        let composed = exposure_code(&aperture_code(&lf, &a).unwrap(), &p).unwrap();
        assert_eq!(img, composed);
    }

    #[test]
    fn free5d_generalizes_coded_capture() {
        let d = dims(3, 3, 16, 8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lf = random_lf(d, &mut rng);
        let ones = Free5DMask::new(2, 3, 3, vec![1.0; 2 * 9 * 64]).unwrap();
        assert_eq!(free5d_capture(&lf, &ones).unwrap(), ordinary_capture(&lf));
        let a = random_aperture(d, &mut rng);
        let p = random_exposure(2, &mut rng).realize();
        let m = Free5DMask::factorized(&a, &p).unwrap();
        assert_eq!(free5d_capture(&lf, &m).unwrap(), coded_capture(&lf, &a, &p).unwrap());
        let m = Free5DMask::new(2, 3, 3, (0..2 * 9 * 64).map(|_| rng.random()).collect()).unwrap();
        let img = free5d_capture(&lf, &m).unwrap();
        let mut oracle = vec![0.0f64; 128];
        for t in 0..2 {
            for v in 0..3 {
                for u in 0..3 {
                    for y in 0..8 {
                        for x in 0..16 {
                            oracle[y * 16 + x] += m.get(t, v, u, y % 8, x % 8) as f64 * lf.get(t, v, u, y, x) as f64;
                        }
                    }
                }
            }
        }
        close(&img.data, &oracle, 1e-5);
    }

    #[test]
    fn noise_properties() {
        let img = CodedImage { n_x: 1000, n_y: 1000, data: vec![0.3; 1_000_000] };
        assert_eq!(add_sensor_noise(&img, 0.0, 1.0, 9).unwrap(), img);
        let a = add_sensor_noise(&img, 0.005, 1.0, 9).unwrap();
        let b = add_sensor_noise(&img, 0.005, 1.0, 9).unwrap();
        assert_eq!(a, b);
        let diffs: Vec<f64> = a.data.iter().zip(&img.data).map(|(o, i)| (o - i) as f64).collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() <= 3.0 * 0.005 / 1000.0, "mean {mean}");
        assert!((std - 0.005).abs() <= 0.01 * 0.005, "std {std}");
        let scaled = add_sensor_noise(&img, 0.005, 100.0, 9).unwrap();
        let std100 = (scaled.data.iter().map(|v| ((v - 0.3) as f64).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std100 - 0.5).abs() <= 0.005);
        assert!(add_sensor_noise(&img, -0.1, 1.0, 0).is_err());
    }

    #[test]
    fn region_timing_permutations_are_bijections() {
        let rt = RegionTiming::staggered();
        for n_t in [2, 4] {
            for k in 0..4 {
                let mut seen = vec![false; n_t];
                for s in 0..n_t {
                    seen[rt.pattern_index(k, s, n_t)] = true;
                }
                assert!(seen.into_iter().all(|b| b));
                let order = rt.input_order(k, n_t);
                for (tp, &s) in order.iter().enumerate() {
                    assert_eq!(rt.pattern_index(k, s, n_t), tp);
                }
            }
        }
    }

    #[test]
    fn region_timing_static_and_identity_cases() {
        let d = dims(3, 3, 16, 32, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_aperture(d, &mut rng);
        let p = random_exposure(4, &mut rng).realize();
        // static scene over 7 time units
        let frame = random_lf(d.with_time(1), &mut rng);
        let stat = LightField5D::concat_time(&vec![frame; 7]).unwrap();
        let window = stat.time_window(0, 4).unwrap();
        let plain = coded_capture(&window, &a, &p).unwrap();
        let staggered = capture_with_region_timing(&stat, &a, &p, &RegionTiming::staggered()).unwrap();
        close(&staggered.data, &plain.data.iter().map(|&v| v as f64).collect::<Vec<_>>(), 1e-6);
        // identity timing on a dynamic scene
        let dynamic = random_lf(d.with_time(7), &mut rng);
        let id = capture_with_region_timing(&dynamic, &a, &p, &RegionTiming::identity()).unwrap();
        assert_eq!(id, coded_capture(&dynamic.time_window(0, 4).unwrap(), &a, &p).unwrap());
        // too short
        assert!(matches!(
            capture_with_region_timing(&window, &a, &p, &RegionTiming::staggered()),
            Err(Error::InsufficientTemporalExtent { have: 4, need: 7 })
        ));
    }

    #[test]
    fn region_timing_matches_per_region_permuted_capture() {
        let d = dims(3, 3, 8, 32, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_aperture(d, &mut rng);
        let p = random_exposure(4, &mut rng).realize();
        // moving bright point
        let lf = LightField5D::from_fn(d.with_time(7), |t, _, u, y, x| if x == (t + u) % 8 && y % 5 == 1 { 1.0 } else { 0.05 });
        let rt = RegionTiming::staggered();
        let img = capture_with_region_timing(&lf, &a, &p, &rt).unwrap();
        for k in 0..4 {
            let oracle = coded_capture(&region_input(&lf, &rt, k, 4).unwrap(), &a, &p).unwrap();
            let rows = rt.rows_of(k, 32);
            assert_eq!(img.rows(rows.start, rows.end), oracle.rows(rows.start, rows.end));
        }
    }

    #[test]
    fn linearity_and_monotonicity() {
        let d = dims(3, 3, 8, 8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (l1, l2) = (random_lf(d, &mut rng), random_lf(d, &mut rng));
        let a = random_aperture(d, &mut rng);
        let p = random_exposure(2, &mut rng).realize();
        let (alpha, beta) = (0.7f32, 1.9f32);
        let mix = LightField5D::new(d, l1.data().iter().zip(l2.data()).map(|(x, y)| alpha * x + beta * y).collect()).unwrap();
        let i1 = coded_capture(&l1, &a, &p).unwrap();
        let i2 = coded_capture(&l2, &a, &p).unwrap();
        let im = coded_capture(&mix, &a, &p).unwrap();
        let want: Vec<f64> = i1.data.iter().zip(&i2.data).map(|(x, y)| (alpha * x) as f64 + (beta * y) as f64).collect();
        close(&im.data, &want, 1e-5);
        let mut bigger = a.values().to_vec();
        bigger[4] = (bigger[4] + 0.3).min(1.0);
        let a2 = AperturePattern::new(2, 3, 3, bigger).unwrap();
        let i3 = coded_capture(&l1, &a2, &p).unwrap();
        assert!(i3.data.iter().zip(&i1.data).all(|(n, o)| n >= o));
    }
}
