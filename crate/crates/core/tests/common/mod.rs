//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use dynlf_autodiff::{grad_check, AdError, GradCheckConfig, GradCheckReport, Tensor};
use dynlf_core::lf::{Dims, LightField5D};
use dynlf_core::net::{Model, ModelConfig, RecInit, RecNetConfig};
use dynlf_core::patterns::{ExposureMode, Variant};
use dynlf_core::train::training_noise;

pub fn small_model(variant: Variant, seed: u64) -> Model {
    let dims = Dims::new(2, 2, 16, 16, 2).unwrap();
    let recnet = RecNetConfig { head: vec![8, 128], body_mid: 2, refine: 2, refine_width: 2, kernel: 3, head_kernel: 3, init: RecInit::He };
    let cfg = ModelConfig { dims, variant, recnet, noise_sigma: 0.005, region_timing: false };
    let mut m = Model::new(cfg, seed).unwrap();
    // zero biases put dead units exactly on a kink; move off it
    let mut k = seed;
    for p in m.params_mut() {
        if p.name.ends_with(".b") {
            for v in &mut p.value {
                k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                *v = ((k >> 40) as f32 / (1u64 << 24) as f32 - 0.5) * 0.2;
            }
        }
    }
    m
}

pub fn scene(d: Dims) -> LightField5D {
    LightField5D::from_fn(d, |t, v, u, y, x| 0.5 + 0.4 * ((0.3 * x as f32 + 0.2 * y as f32 + u as f32 - v as f32 + 0.7 * t as f32).sin()))
}

/// Checks every parameter tensor of `model` at `coords` random coordinates.
pub fn audit(model: &Model, mode: ExposureMode, coords: usize, seed: u64) -> Vec<(String, GradCheckReport)> {
    let lf = scene(model.cfg.dims);
    let noise = training_noise(seed, 0, 0, lf.dims().n_x, lf.dims().n_y, model.cfg.noise_sigma);
    let params = model.params();
    let mut out = Vec::new();
    for (idx, p) in params.iter().enumerate() {
        if !p.trainable {
            continue;
        }
        let input = Tensor::new(p.shape.clone(), p.value.iter().map(|&v| v as f64).collect()).unwrap();
        let build = |g: &mut dynlf_autodiff::Graph<f64>, vs: &[dynlf_autodiff::Var]| {
            let mut vars = model.param_vars(g);
            vars[idx] = vs[0];
            let wrap = |e: dynlf_core::Error| AdError::InvalidArgument { op: "model", reason: e.to_string() };
            let y = model.forward_graph(g, &vars, &lf, 0, noise.as_ref(), mode, 2.0).map_err(wrap)?;
            let truth = g.constant(Tensor::new(g.shape(y).to_vec(), lf.data().iter().map(|&v| v as f64).collect())?);
            g.mse(y, truth)
        };
        let cfg = GradCheckConfig { coords_per_input: Some(coords), seed: seed + idx as u64, ..Default::default() };
        out.push((p.name.clone(), grad_check(build, &[input], &cfg).unwrap()));
    }
    out
}

/// Probes every trainable tensor across fresh model instances until each
/// has at least `want` kink-free probes.
pub fn audit_until(variant: Variant, want: usize) -> Vec<(String, GradCheckReport)> {
    let mut acc: Vec<(String, Vec<GradCheckReport>)> = Vec::new();
    for seed in 0..150u64 {
        let model = small_model(variant, seed);
        for (name, r) in audit(&model, ExposureMode::Relaxed, 8, seed) {
            match acc.iter_mut().find(|(n, _)| *n == name) {
                Some((_, v)) => v.push(r),
                None => acc.push((name, vec![r])),
            }
        }
        if acc.iter().all(|(_, v)| v.iter().map(|r| r.nonzero).sum::<usize>() >= want) {
            break;
        }
    }
    acc.into_iter().map(|(n, v)| (n, GradCheckReport::combine(v))).collect()
}

