//! Core signal types and their index conventions.
//!
//! A dynamic light field is stored as one flat `f32` buffer indexed
//! `(t, v, u, y, x)` with `x` fastest, so the block for a fixed `t` is a
//! contiguous stack of views.

use crate::{Error, Result};

/// Period of the exposure code and block size of the packed image.
pub const TILE: usize = 8;

/// Sizes of the five light-field axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n_u: usize,
    pub n_v: usize,
    pub n_x: usize,
    pub n_y: usize,
    pub n_t: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self { n_u: 5, n_v: 5, n_x: 64, n_y: 64, n_t: 4 }
    }
}

impl Dims {
    pub fn new(n_u: usize, n_v: usize, n_x: usize, n_y: usize, n_t: usize) -> Result<Self> {
        let d = Self { n_u, n_v, n_x, n_y, n_t };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.n_u, self.n_v, self.n_x, self.n_y, self.n_t].contains(&0) {
            return Err(Error::InvalidDims(format!("all counts must be >= 1, got {self:?}")));
        }
        Ok(())
    }

    /// Checks the 8×8 periodicity requirement of the exposure code.
    pub fn require_tileable(&self) -> Result<()> {
        if self.n_x % TILE != 0 {
            return Err(Error::NotDivisible { what: "n_x", value: self.n_x, by: TILE });
        }
        if self.n_y % TILE != 0 {
            return Err(Error::NotDivisible { what: "n_y", value: self.n_y, by: TILE });
        }
        Ok(())
    }

    pub fn views(&self) -> usize {
        self.n_u * self.n_v
    }

    pub fn pixels(&self) -> usize {
        self.n_x * self.n_y
    }

    /// Number of (t, v, u) rays summed into each pixel.
    pub fn rays_per_pixel(&self) -> usize {
        self.n_t * self.n_v * self.n_u
    }

    pub fn len(&self) -> usize {
        self.rays_per_pixel() * self.pixels()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn offset(&self, t: usize, v: usize, u: usize, y: usize, x: usize) -> usize {
        x + self.n_x * (y + self.n_y * (u + self.n_u * (v + self.n_v * t)))
    }

    /// Flat channel index of `(u, v, t)` when views and time units are
    /// unfolded into channels. Same order as the light-field buffer.
    #[inline]
    pub fn channel(&self, u: usize, v: usize, t: usize) -> usize {
        u + self.n_u * (v + self.n_v * t)
    }

    /// Inverse of [`Dims::channel`]: returns `(u, v, t)`.
    #[inline]
    pub fn unchannel(&self, c: usize) -> (usize, usize, usize) {
        (c % self.n_u, (c / self.n_u) % self.n_v, c / (self.n_u * self.n_v))
    }

    /// Same geometry with a different number of time units.
    pub fn with_time(&self, n_t: usize) -> Self {
        Self { n_t, ..*self }
    }

    /// Centered viewpoint coordinate `u - ⌊n_u/2⌋`.
    pub fn centered_u(&self, u: usize) -> f32 {
        u as f32 - (self.n_u / 2) as f32
    }

    pub fn centered_v(&self, v: usize) -> f32 {
        v as f32 - (self.n_v / 2) as f32
    }
}

/// Five-dimensional intensity volume `L[t, v, u, y, x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LightField5D {
    dims: Dims,
    data: Vec<f32>,
}

impl LightField5D {
    pub fn new(dims: Dims, data: Vec<f32>) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{dims:?} needs {} values, got {}",
                dims.len(),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite light-field value at offset {i}")));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: Dims, value: f32) -> Self {
        Self { dims, data: vec![value; dims.len()] }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for t in 0..dims.n_t {
            for v in 0..dims.n_v {
                for u in 0..dims.n_u {
                    for y in 0..dims.n_y {
                        for x in 0..dims.n_x {
                            data.push(f(t, v, u, y, x));
                        }
                    }
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, t: usize, v: usize, u: usize, y: usize, x: usize) -> f32 {
        self.data[self.dims.offset(t, v, u, y, x)]
    }

    /// One view `[y, x]` at time `t`.
    pub fn view(&self, t: usize, v: usize, u: usize) -> &[f32] {
        let o = self.dims.offset(t, v, u, 0, 0);
        &self.data[o..o + self.dims.pixels()]
    }

    /// All views of time unit `t`, `[v, u, y, x]`.
    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.dims.views() * self.dims.pixels();
        &self.data[t * n..(t + 1) * n]
    }

    /// Time units `start..start + n_t` as a new field.
    pub fn time_window(&self, start: usize, n_t: usize) -> Result<Self> {
        if start + n_t > self.dims.n_t || n_t == 0 {
            return Err(Error::InsufficientTemporalExtent { have: self.dims.n_t, need: start + n_t });
        }
        let n = self.dims.views() * self.dims.pixels();
        Ok(Self { dims: self.dims.with_time(n_t), data: self.data[start * n..(start + n_t) * n].to_vec() })
    }

    /// Reorders time units: frame `t` of the result is frame `order[t]` of `self`.
    pub fn reorder_time(&self, order: &[usize]) -> Result<Self> {
        let n = self.dims.views() * self.dims.pixels();
        let mut data = Vec::with_capacity(order.len() * n);
        for &src in order {
            if src >= self.dims.n_t {
                return Err(Error::IndexOutOfRange(format!("time {src} >= {}", self.dims.n_t)));
            }
            data.extend_from_slice(&self.data[src * n..(src + 1) * n]);
        }
        Ok(Self { dims: self.dims.with_time(order.len()), data })
    }

    /// Concatenates fields along time. Geometry must agree.
    pub fn concat_time(parts: &[LightField5D]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::InvalidArgument("no fields to concatenate".into()))?;
        let base = first.dims;
        let mut data = Vec::new();
        let mut n_t = 0;
        for p in parts {
            if p.dims.with_time(base.n_t) != base {
                return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", p.dims, base)));
            }
            n_t += p.dims.n_t;
            data.extend_from_slice(&p.data);
        }
        Ok(Self { dims: base.with_time(n_t), data })
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self { dims: self.dims, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Number of values outside `[0, 1]`.
    pub fn out_of_range_count(&self) -> usize {
        self.data.iter().filter(|v| !(0.0..=1.0).contains(*v)).count()
    }

    /// Horizontal epipolar-plane image `EPI[u, x] = L[t, v, u, y, x]`.
    pub fn extract_epi(&self, y: usize, v: usize, t: usize) -> Result<Epi> {
        let d = self.dims;
        if y >= d.n_y || v >= d.n_v || t >= d.n_t {
            return Err(Error::IndexOutOfRange(format!("(y={y}, v={v}, t={t}) outside {d:?}")));
        }
        let mut data = Vec::with_capacity(d.n_u * d.n_x);
        for u in 0..d.n_u {
            let o = d.offset(t, v, u, y, 0);
            data.extend_from_slice(&self.data[o..o + d.n_x]);
        }
        Ok(Epi { n_u: d.n_u, n_x: d.n_x, data })
    }
}

/// An `[u, x]` slice of a light field.
#[derive(Debug, Clone, PartialEq)]
pub struct Epi {
    pub n_u: usize,
    pub n_x: usize,
    pub data: Vec<f32>,
}

impl Epi {
    pub fn get(&self, u: usize, x: usize) -> f32 {
        self.data[u * self.n_x + x]
    }
}

/// Single-channel 2-D image `I[y, x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedImage {
    pub n_x: usize,
    pub n_y: usize,
    pub data: Vec<f32>,
}

impl CodedImage {
    pub fn new(n_x: usize, n_y: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n_x * n_y {
            return Err(Error::DimensionMismatch(format!("{n_x}x{n_y} image needs {} values, got {}", n_x * n_y, data.len())));
        }
        Ok(Self { n_x, n_y, data })
    }

    pub fn zeros(n_x: usize, n_y: usize) -> Self {
        Self { n_x, n_y, data: vec![0.0; n_x * n_y] }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.n_x + x]
    }

    pub fn scaled(&self, s: f32) -> Self {
        Self { n_x: self.n_x, n_y: self.n_y, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// Rows `y0..y1` as a new image.
    pub fn rows(&self, y0: usize, y1: usize) -> Self {
        Self { n_x: self.n_x, n_y: y1 - y0, data: self.data[y0 * self.n_x..y1 * self.n_x].to_vec() }
    }
}

/// Coded image rearranged into 64 channels, `[c, y', x']` with
/// `c = 8·(y mod 8) + (x mod 8)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedImage {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl PackedImage {
    pub const CHANNELS: usize = TILE * TILE;

    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != Self::CHANNELS * rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "packed {}x{rows}x{cols} needs {} values, got {}",
                Self::CHANNELS,
                Self::CHANNELS * rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.rows + y) * self.cols + x]
    }
}

pub fn pack_space_to_depth(img: &CodedImage) -> Result<PackedImage> {
    if img.n_x % TILE != 0 {
        return Err(Error::NotDivisible { what: "n_x", value: img.n_x, by: TILE });
    }
    if img.n_y % TILE != 0 {
        return Err(Error::NotDivisible { what: "n_y", value: img.n_y, by: TILE });
    }
    let (rows, cols) = (img.n_y / TILE, img.n_x / TILE);
    let mut data = vec![0.0; img.data.len()];
    for y in 0..img.n_y {
        for x in 0..img.n_x {
            let c = TILE * (y % TILE) + x % TILE;
            data[(c * rows + y / TILE) * cols + x / TILE] = img.data[y * img.n_x + x];
        }
    }
    Ok(PackedImage { rows, cols, data })
}

pub fn unpack_depth_to_space(p: &PackedImage) -> Result<CodedImage> {
    PackedImage::new(p.rows, p.cols, p.data.clone())?;
    let (n_y, n_x) = (p.rows * TILE, p.cols * TILE);
    let mut data = vec![0.0; n_x * n_y];
    for c in 0..PackedImage::CHANNELS {
        for yy in 0..p.rows {
            for xx in 0..p.cols {
                let y = TILE * yy + c / TILE;
                let x = TILE * xx + c % TILE;
                data[y * n_x + x] = p.get(c, yy, xx);
            }
        }
    }
    Ok(CodedImage { n_x, n_y, data })
}
