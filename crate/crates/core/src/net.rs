//! Differentiable capture (AcqNet) and reconstruction (RecNet) graphs.
//!
//! Parameters live in [`Model`] as flat `f32` buffers. Each forward pass
//! lifts them onto a fresh [`Graph`] of any [`Scalar`] type, so the same
//! builder serves single-precision training and double-precision audits.

use crate::forward::RegionTiming;
use crate::lf::{pack_space_to_depth, CodedImage, Dims, LightField5D, PackedImage, TILE};
use crate::patterns::{make_variant, ExposureMode, Param, PatternParams, Variant};
use crate::{rng, Error, Result};
use dynlf_autodiff::{Graph, Scalar, Tensor, Var};
use rand_distr::{Distribution, Normal};

/// Reconstruction network layout.
///
/// Head convolutions run at packed resolution and end at `n_t·64`
/// channels. After an 8× pixel shuffle the body maps `n_t` channels to
/// `body_mid` and then to `n_u·n_v·n_t`. The refinement block of
/// `refine` layers is wrapped by a residual connection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecNetConfig {
    pub head: Vec<usize>,
    pub body_mid: usize,
    pub refine: usize,
    /// Hidden width inside the refinement block.
    pub refine_width: usize,
    /// Kernel size of the body and refinement convolutions.
    pub kernel: usize,
    /// Kernel size of the head convolutions at packed resolution.
    pub head_kernel: usize,
    pub init: RecInit,
}

/// Starting weights of a RecNet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecInit {
    /// He-normal weights.
    He,
    /// Centre-tap channel copies so the untrained network passes the
    /// normalized capture through to every output, plus He-normal noise
    /// scaled by [`IDENTITY_NOISE`]. The last refinement layer holds noise
    /// only, so the residual block starts near zero.
    #[default]
    Identity,
}

/// Noise scale of [`RecInit::Identity`] relative to the He deviation.
pub const IDENTITY_NOISE: f32 = 0.0001;

impl RecNetConfig {
    /// Full-size layout: five head layers ramping to 256 channels at
    /// `n_t = 4`, and 19 refinement layers at the output width.
    pub fn full(dims: Dims) -> Self {
        let n_out = dims.rays_per_pixel();
        let mut head = vec![96, 128, 160, 208];
        head.push(dims.n_t * TILE * TILE);
        Self { head, body_mid: n_out, refine: 19, refine_width: n_out, kernel: 3, head_kernel: 3, init: RecInit::Identity }
    }

    /// Desk-scale layout used by the benchmarks.
    pub fn toy(dims: Dims) -> Self {
        let mut head = vec![80, 96, 112, 128];
        head.push(dims.n_t * TILE * TILE);
        Self { head, body_mid: 32, refine: 4, refine_width: 32, kernel: 3, head_kernel: 3, init: RecInit::Identity }
    }

    pub fn validate(&self, dims: Dims) -> Result<()> {
        let want = dims.n_t * TILE * TILE;
        if self.head.last() != Some(&want) {
            return Err(Error::InvalidArgument(format!("last head width must be n_t*64 = {want}, got {:?}", self.head)));
        }
        if self.kernel % 2 == 0 || self.head_kernel % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel sizes must be odd, got {} and {}",
                self.kernel, self.head_kernel
            )));
        }
        if self.body_mid == 0 || self.head.contains(&0) || (self.refine > 1 && self.refine_width == 0) {
            return Err(Error::InvalidArgument("layer widths must be >= 1".into()));
        }
        Ok(())
    }

    /// `(c_in, c_out, kernel)` per convolution in forward order.
    pub fn layer_shapes(&self, dims: Dims) -> Vec<(usize, usize, usize)> {
        let n_out = dims.rays_per_pixel();
        let mut shapes = Vec::new();
        let mut c = TILE * TILE;
        for &w in &self.head {
            shapes.push((c, w, self.head_kernel));
            c = w;
        }
        shapes.push((dims.n_t, self.body_mid, self.kernel));
        shapes.push((self.body_mid, n_out, self.kernel));
        for i in 0..self.refine {
            let c_in = if i == 0 { n_out } else { self.refine_width };
            let c_out = if i + 1 == self.refine { n_out } else { self.refine_width };
            shapes.push((c_in, c_out, self.kernel));
        }
        shapes
    }
}

/// Everything needed to build a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub dims: Dims,
    pub variant: Variant,
    pub recnet: RecNetConfig,
    /// Noise standard deviation in normalized pixel units.
    pub noise_sigma: f32,
    pub region_timing: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.dims.require_tileable()?;
        self.recnet.validate(self.dims)?;
        if self.region_timing && self.dims.n_y % (RegionTiming::REGIONS * TILE) != 0 {
            return Err(Error::NotDivisible { what: "n_y", value: self.dims.n_y, by: RegionTiming::REGIONS * TILE });
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise sigma {} must be >= 0", self.noise_sigma)));
        }
        Ok(())
    }

    pub fn regions(&self) -> usize {
        if self.region_timing {
            RegionTiming::REGIONS
        } else {
            1
        }
    }

    pub fn timing(&self) -> RegionTiming {
        if self.region_timing {
            RegionTiming::staggered()
        } else {
            RegionTiming { offsets: vec![0] }
        }
    }

    /// Stable text form used for hashing and checkpoint pinning.
    pub fn fingerprint(&self) -> String {
        let d = self.dims;
        format!(
            "dims={},{},{},{},{};variant={};head={:?};body_mid={};refine={};refine_width={};kernel={};head_kernel={};region_timing={}",
            d.n_u,
            d.n_v,
            d.n_x,
            d.n_y,
            d.n_t,
            self.variant,
            self.recnet.head,
            self.recnet.body_mid,
            self.recnet.refine,
            self.recnet.refine_width,
            self.recnet.kernel,
            self.recnet.head_kernel,
            self.region_timing
        )
    }
}

/// Weights of one reconstruction network: `[w, b]` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RecNet {
    pub layers: Vec<(Param, Param)>,
}

impl RecNet {
    /// Weights per `cfg.init`, zero biases. `gain` scales the identity
    /// path so that a capture with mean throughput `1/gain` maps to unit
    /// brightness.
    pub fn init(cfg: &RecNetConfig, dims: Dims, prefix: &str, seed: u64, gain: f32) -> Self {
        let mut rng = rng::stream(seed, "init", &[1]);
        let heads = cfg.head.len();
        let n_layers = heads + 2 + cfg.refine;
        let layers = cfg
            .layer_shapes(dims)
            .into_iter()
            .enumerate()
            .map(|(i, (c_in, c_out, k))| {
                let he = (2.0 / (c_in * k * k) as f64).sqrt() as f32;
                let std = match cfg.init {
                    RecInit::He => he,
                    RecInit::Identity => he * IDENTITY_NOISE,
                };
                let normal = Normal::new(0.0f32, std).expect("positive std");
                let mut w: Vec<f32> = (0..c_out * c_in * k * k).map(|_| normal.sample(&mut rng)).collect();
                if cfg.init == RecInit::Identity {
                    let centre = (k / 2) * k + k / 2;
                    let mut tap = |o: usize, j: usize, v: f32| w[(o * c_in + j) * k * k + centre] += v;
                    if i < heads {
                        // channel o carries packed channel o mod 64 throughout the head
                        for o in 0..c_out {
                            let j = o % (TILE * TILE);
                            if j < c_in {
                                tap(o, j, 1.0);
                            }
                        }
                    } else if i == heads + 1 {
                        for o in 0..c_out {
                            for j in 0..c_in {
                                tap(o, j, gain / c_in as f32);
                            }
                        }
                    } else if i + 1 < n_layers {
                        for o in 0..c_out {
                            tap(o, o % c_in, 1.0);
                        }
                    }
                }
                (
                    Param::new(format!("{prefix}.conv{i}.w"), vec![c_out, c_in, k, k], w, true),
                    Param::new(format!("{prefix}.conv{i}.b"), vec![c_out], vec![0.0; c_out], true),
                )
            })
            .collect();
        Self { layers }
    }

    fn renamed(&self, prefix: &str) -> Self {
        let fix = |p: &Param| {
            let tail = p.name.split_once('.').map(|(_, t)| t).unwrap_or(&p.name);
            Param { name: format!("{prefix}.{tail}"), ..p.clone() }
        };
        Self { layers: self.layers.iter().map(|(w, b)| (fix(w), fix(b))).collect() }
    }
}

/// Pattern parameters plus one RecNet per sensor region.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub patterns: PatternParams,
    pub recnets: Vec<RecNet>,
}

impl Model {
    /// All region networks start from the same weights.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let patterns = make_variant(cfg.variant, cfg.dims, seed);
        let throughput = patterns.mean_throughput();
        let gain = if throughput > 0.0 { (1.0 / throughput) as f32 } else { 1.0 };
        let base = RecNet::init(&cfg.recnet, cfg.dims, "rec0", seed, gain);
        let recnets = (0..cfg.regions()).map(|k| base.renamed(&format!("rec{k}"))).collect();
        Ok(Self { cfg, patterns, recnets })
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = self.patterns.params();
        for r in &self.recnets {
            for (w, b) in &r.layers {
                v.push(w);
                v.push(b);
            }
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.patterns.params_mut();
        for r in &mut self.recnets {
            for (w, b) in &mut r.layers {
                v.push(w);
                v.push(b);
            }
        }
        v
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn pattern_slots(&self) -> usize {
        self.patterns.params().len()
    }

    /// Index into [`Model::params`] of layer `l`'s weight in region `k`.
    pub fn layer_index(&self, k: usize, l: usize) -> usize {
        self.pattern_slots() + 2 * (k * self.recnets[0].layers.len() + l)
    }

    /// One graph leaf per parameter, trainable ones as `param`.
    pub fn param_vars<T: Scalar>(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.params()
            .into_iter()
            .map(|p| {
                let t = Tensor::new(p.shape.clone(), p.value.iter().map(|&v| T::from_f64(v as f64)).collect())
                    .expect("param shape matches data");
                if p.trainable {
                    g.param(t)
                } else {
                    g.constant(t)
                }
            })
            .collect()
    }

    /// Normalized, noised packed measurement `[64, n_y/8, n_x/8]` of `lf`.
    /// `noise` is in image layout and already scaled.
    pub fn acq_graph<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        lf: &LightField5D,
        noise: Option<&CodedImage>,
        mode: ExposureMode,
        tau: f32,
    ) -> Result<Var> {
        let d = self.cfg.dims;
        if lf.dims() != d {
            return Err(Error::DimensionMismatch(format!("input {:?} vs model {d:?}", lf.dims())));
        }
        let (n_t, vu, hw) = (d.n_t, d.views(), d.pixels());
        let (h8, w8) = (d.n_y / TILE, d.n_x / TILE);
        let s8 = h8 * w8;
        let cast = |data: &[f32]| data.iter().map(|&v| T::from_f64(v as f64)).collect::<Vec<T>>();
        let coded = if self.patterns.mask.is_some() {
            let x = g.constant(Tensor::new(vec![n_t * vu, d.n_y, d.n_x], cast(lf.data()))?);
            let x = g.space_to_depth(x, TILE)?;
            let x = g.reshape(x, &[n_t * vu, TILE * TILE, s8])?;
            let x = g.swap_leading(x)?;
            let m = g.clamp(vars[3], T::zero(), T::one());
            let m = g.swap_leading(m)?;
            g.grouped_contract(m, x)?
        } else {
            let x = g.constant(Tensor::new(vec![n_t, vu, hw], cast(lf.data()))?);
            let a = g.clamp(vars[0], T::zero(), T::one());
            let j = g.grouped_contract(a, x)?;
            let j = g.reshape(j, &[n_t, d.n_y, d.n_x])?;
            let j = g.space_to_depth(j, TILE)?;
            let j = g.reshape(j, &[n_t, TILE * TILE, s8])?;
            let j = g.swap_leading(j)?;
            let tile = if self.patterns.exposure_is_constant() {
                g.constant(Tensor::full(&[n_t, TILE, TILE], T::one()))
            } else {
                match mode {
                    ExposureMode::Relaxed => g.separable_pattern(vars[1], vars[2], T::from_f64(tau as f64), false)?,
                    ExposureMode::StraightThrough => {
                        g.separable_pattern(vars[1], vars[2], T::from_f64(tau as f64), true)?
                    }
                    ExposureMode::Binary => {
                        let t = self.patterns.realize_exposure(ExposureMode::Binary, tau);
                        g.constant(Tensor::new(vec![n_t, TILE, TILE], cast(t.values()))?)
                    }
                }
            };
            let p = g.reshape(tile, &[n_t, TILE * TILE])?;
            let p = g.swap_leading(p)?;
            g.grouped_contract(p, j)?
        };
        let coded = g.reshape(coded, &[TILE * TILE, h8, w8])?;
        let norm = g.scale(coded, T::from_f64(1.0 / d.rays_per_pixel() as f64));
        Ok(match noise {
            Some(n) => {
                let packed = pack_space_to_depth(n)?;
                let nv = g.constant(Tensor::new(vec![TILE * TILE, h8, w8], cast(&packed.data))?);
                g.add(norm, nv)?
            }
            None => norm,
        })
    }

    /// Reconstruction `[n_t·n_v·n_u, n_y, n_x]` by the RecNet of `region`.
    pub fn rec_graph<T: Scalar>(&self, g: &mut Graph<T>, vars: &[Var], packed: Var, region: usize) -> Result<Var> {
        let cfg = &self.cfg.recnet;
        let layer = |g: &mut Graph<T>, x: Var, l: usize, relu: bool| -> Result<Var> {
            let i = self.layer_index(region, l);
            let y = g.conv2d(x, vars[i], Some(vars[i + 1]))?;
            Ok(if relu { g.relu(y) } else { y })
        };
        let mut x = packed;
        let mut l = 0;
        for _ in &cfg.head {
            x = layer(g, x, l, true)?;
            l += 1;
        }
        x = g.pixel_shuffle(x, TILE)?;
        x = layer(g, x, l, true)?;
        x = layer(g, x, l + 1, cfg.refine > 0)?;
        l += 2;
        if cfg.refine == 0 {
            return Ok(x);
        }
        let body = x;
        for i in 0..cfg.refine {
            x = layer(g, x, l + i, i + 1 < cfg.refine)?;
        }
        Ok(g.add(body, x)?)
    }

    /// Region `k`'s view of `lf` (time order permuted to its pattern order),
    /// captured and reconstructed. The output is in `lf`'s own time order.
    pub fn forward_graph<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        lf: &LightField5D,
        region: usize,
        noise: Option<&CodedImage>,
        mode: ExposureMode,
        tau: f32,
    ) -> Result<Var> {
        let input = self.region_view(lf, region)?;
        let packed = self.acq_graph(g, vars, &input, noise, mode, tau)?;
        self.rec_graph(g, vars, packed, region)
    }

    fn region_view(&self, lf: &LightField5D, region: usize) -> Result<LightField5D> {
        if region >= self.recnets.len() {
            return Err(Error::IndexOutOfRange(format!("region {region} of {}", self.recnets.len())));
        }
        if region == 0 && self.cfg.timing().offsets[0] == 0 {
            return Ok(lf.clone());
        }
        let rt = self.cfg.timing();
        let order = rt.input_order(region, lf.dims().n_t);
        lf.reorder_time(&order)
    }

    /// Noise-free capture and reconstruction of `lf`. With region timing,
    /// each horizontal band comes from its own region network.
    pub fn infer(&self, lf: &LightField5D, mode: ExposureMode, tau: f32) -> Result<LightField5D> {
        let d = self.cfg.dims;
        if lf.dims() != d {
            return Err(Error::DimensionMismatch(format!("field {:?} vs model {:?}", lf.dims(), d)));
        }
        let mut outs = Vec::with_capacity(self.recnets.len());
        for k in 0..self.recnets.len() {
            let packed = self.acquire(&self.region_view(lf, k)?, None, mode, tau)?;
            outs.push(self.reconstruct(&packed, k)?);
        }
        if outs.len() == 1 {
            return Ok(outs.pop().expect("one region"));
        }
        let rt = self.cfg.timing();
        let band = |y: usize| (0..outs.len()).find(|&k| rt.rows_of(k, d.n_y).contains(&y)).expect("bands cover n_y");
        Ok(LightField5D::from_fn(d, |t, v, u, y, x| outs[band(y)].get(t, v, u, y, x)))
    }

    /// Value-level capture matching [`Model::acq_graph`].
    pub fn acquire(&self, lf: &LightField5D, noise: Option<&CodedImage>, mode: ExposureMode, tau: f32) -> Result<PackedImage> {
        let mut g = Graph::<f32>::new();
        let vars = self.param_vars_frozen(&mut g);
        let out = self.acq_graph(&mut g, &vars, lf, noise, mode, tau)?;
        let d = self.cfg.dims;
        PackedImage::new(d.n_y / TILE, d.n_x / TILE, g.value(out).data().to_vec())
    }

    /// Value-level reconstruction of a packed measurement.
    pub fn reconstruct(&self, packed: &PackedImage, region: usize) -> Result<LightField5D> {
        let d = self.cfg.dims;
        if (packed.rows, packed.cols) != (d.n_y / TILE, d.n_x / TILE) {
            return Err(Error::DimensionMismatch(format!(
                "packed {}x{} vs expected {}x{}",
                packed.rows,
                packed.cols,
                d.n_y / TILE,
                d.n_x / TILE
            )));
        }
        if region >= self.recnets.len() {
            return Err(Error::IndexOutOfRange(format!("region {region} of {}", self.recnets.len())));
        }
        let mut g = Graph::<f32>::new();
        let vars = self.param_vars_frozen(&mut g);
        let x = g.constant(Tensor::new(vec![TILE * TILE, packed.rows, packed.cols], packed.data.clone())?);
        let out = self.rec_graph(&mut g, &vars, x, region)?;
        LightField5D::new(d, g.value(out).data().to_vec())
    }

    fn param_vars_frozen(&self, g: &mut Graph<f32>) -> Vec<Var> {
        self.params()
            .into_iter()
            .map(|p| g.constant(Tensor::new(p.shape.clone(), p.value.clone()).expect("param shape")))
            .collect()
    }
}
