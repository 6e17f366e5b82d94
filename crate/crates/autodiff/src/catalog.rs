//! One finite-difference case per differentiable operator on [`Graph`].
//!
//! Each case draws fresh inputs per probe point from a seeded generator, so
//! the catalog is reproducible and cheap enough to run inside test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{grad_check, AdError, GradCheckConfig, GradCheckReport, Graph, Tensor, Var};

type Inputs = fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>;
type Build = fn(&mut Graph<f64>, &[Var]) -> Result<Var, AdError>;

#[derive(Clone, Copy)]
pub struct OpCase {
    pub name: &'static str,
    pub inputs: Inputs,
    pub build: Build,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Magnitudes in [0.05, 1) with random sign, so ±eps never straddles zero.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.05..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

fn sym(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    uniform(rng, shape, -1.0, 1.0)
}

/// Every operator with a backward rule. Affine and rearranging operators
/// feed a product so their gradient is not a constant.
pub fn operator_catalog() -> Vec<OpCase> {
    vec![
        OpCase { name: "add", inputs: |r| vec![sym(r, &[2, 3]), sym(r, &[2, 3])], build: |g, v| g.add(v[0], v[1]) },
        OpCase { name: "mul", inputs: |r| vec![sym(r, &[4]), sym(r, &[4])], build: |g, v| g.mul(v[0], v[1]) },
        OpCase {
            name: "scale",
            inputs: |r| vec![sym(r, &[5])],
            build: |g, v| {
                let s = g.scale(v[0], -1.7);
                g.mul(s, v[0])
            },
        },
        OpCase {
            name: "sum",
            inputs: |r| vec![sym(r, &[2, 2])],
            build: |g, v| {
                let s = g.sum(v[0]);
                g.mul(s, s)
            },
        },
        OpCase {
            name: "reshape",
            inputs: |r| vec![sym(r, &[2, 3]), sym(r, &[3, 2])],
            build: |g, v| {
                let a = g.reshape(v[0], &[3, 2])?;
                g.mul(a, v[1])
            },
        },
        OpCase {
            name: "swap_leading",
            inputs: |r| vec![sym(r, &[2, 3, 2]), sym(r, &[3, 2, 2])],
            build: |g, v| {
                let a = g.swap_leading(v[0])?;
                g.mul(a, v[1])
            },
        },
        OpCase {
            name: "grouped_contract",
            inputs: |r| vec![sym(r, &[2, 3]), sym(r, &[2, 3, 2, 2])],
            build: |g, v| g.grouped_contract(v[0], v[1]),
        },
        OpCase {
            name: "conv2d",
            inputs: |r| vec![sym(r, &[2, 4, 5]), sym(r, &[3, 2, 3, 3]), sym(r, &[3])],
            build: |g, v| g.conv2d(v[0], v[1], Some(v[2])),
        },
        OpCase {
            name: "conv2d_k1",
            inputs: |r| vec![sym(r, &[3, 2, 2]), sym(r, &[2, 3, 1, 1])],
            build: |g, v| g.conv2d(v[0], v[1], None),
        },
        OpCase {
            name: "conv2d_k5",
            inputs: |r| vec![sym(r, &[1, 6, 6]), sym(r, &[2, 1, 5, 5])],
            build: |g, v| g.conv2d(v[0], v[1], None),
        },
        OpCase {
            name: "relu",
            inputs: |r| vec![off_zero(r, &[12])],
            build: |g, v| {
                let a = g.relu(v[0]);
                g.mul(a, a)
            },
        },
        OpCase {
            name: "leaky_relu",
            inputs: |r| vec![off_zero(r, &[12])],
            build: |g, v| {
                let a = g.leaky_relu(v[0], 0.1);
                g.mul(a, a)
            },
        },
        OpCase {
            name: "clamp",
            inputs: |r| vec![uniform(r, &[10], -0.5, 1.5)],
            build: |g, v| {
                let a = g.clamp(v[0], 0.0, 1.0);
                g.mul(a, a)
            },
        },
        OpCase { name: "sigmoid", inputs: |r| vec![uniform(r, &[6], -3.0, 3.0)], build: |g, v| Ok(g.sigmoid(v[0], 1.0)) },
        OpCase {
            name: "sigmoid_steep",
            inputs: |r| vec![uniform(r, &[6], -0.5, 0.5)],
            build: |g, v| Ok(g.sigmoid(v[0], 10.0)),
        },
        OpCase {
            name: "separable_pattern",
            inputs: |r| vec![uniform(r, &[2, 8], -2.0, 2.0), uniform(r, &[2, 8], -2.0, 2.0)],
            build: |g, v| g.separable_pattern(v[0], v[1], 1.0, false),
        },
        OpCase {
            name: "pixel_shuffle",
            inputs: |r| vec![sym(r, &[8, 2, 3]), sym(r, &[2, 4, 6])],
            build: |g, v| {
                let a = g.pixel_shuffle(v[0], 2)?;
                g.mul(a, v[1])
            },
        },
        OpCase {
            name: "space_to_depth",
            inputs: |r| vec![sym(r, &[2, 4, 6]), sym(r, &[8, 2, 3])],
            build: |g, v| {
                let a = g.space_to_depth(v[0], 2)?;
                g.mul(a, v[1])
            },
        },
        OpCase {
            name: "concat",
            inputs: |r| vec![sym(r, &[1, 2, 2]), sym(r, &[2, 2, 2]), sym(r, &[3, 2, 2])],
            build: |g, v| {
                let a = g.concat(&[v[0], v[1]])?;
                g.mul(a, v[2])
            },
        },
        OpCase { name: "mse", inputs: |r| vec![sym(r, &[3, 2]), sym(r, &[3, 2])], build: |g, v| g.mse(v[0], v[1]) },
    ]
}

/// Checks `case` at `points` independent random inputs. Each point probes
/// every coordinate of every input.
pub fn check_case(case: &OpCase, points: u64) -> Result<GradCheckReport, AdError> {
    let mut reports = Vec::with_capacity(points as usize);
    for p in 0..points {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + p);
        let inputs = (case.inputs)(&mut rng);
        reports.push(grad_check(case.build, &inputs, &GradCheckConfig { seed: p, ..Default::default() })?);
    }
    Ok(GradCheckReport::combine(reports))
}
