use dynlf_autodiff::{grad_check, AdError, GradCheckConfig, GradCheckReport, Graph, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POINTS: u64 = 20;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Values bounded away from zero so ReLU-type kinks are not straddled.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.05..1.0);
        if rng.random_bool(0.5) { m } else { -m }
    })
}

fn check_points<F, G>(name: &str, make_inputs: G, build: F) -> GradCheckReport
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, AdError> + Copy,
    G: Fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>,
{
    let reports: Vec<_> = (0..POINTS)
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + p);
            let inputs = make_inputs(&mut rng);
            let cfg = GradCheckConfig { seed: p, ..Default::default() };
            grad_check(build, &inputs, &cfg).unwrap()
        })
        .collect();
    let r = GradCheckReport::combine(reports);
    assert!(r.passed, "{name}: {:?}", r.worst);
    assert!(r.checked > 0, "{name}: every probe rejected");
    r
}

#[test]
fn add_mul_scale_sum() {
    check_points(
        "add",
        |r| vec![rand_tensor(r, &[2, 3], -1.0, 1.0), rand_tensor(r, &[2, 3], -1.0, 1.0)],
        |g, v| g.add(v[0], v[1]),
    );
    check_points(
        "mul",
        |r| vec![rand_tensor(r, &[4], -1.0, 1.0), rand_tensor(r, &[4], -1.0, 1.0)],
        |g, v| g.mul(v[0], v[1]),
    );
    check_points("scale", |r| vec![rand_tensor(r, &[5], -1.0, 1.0)], |g, v| Ok(g.scale(v[0], -1.7)));
    check_points("sum", |r| vec![rand_tensor(r, &[2, 2], -1.0, 1.0)], |g, v| Ok(g.sum(v[0])));
}

#[test]
fn linear_ops_are_exact_to_rounding() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = rand_tensor(&mut rng, &[3, 4], -1.0, 1.0);
    let r = check_points(
        "grouped_contract (linear in x)",
        |r| vec![rand_tensor(r, &[3, 4, 5], -1.0, 1.0)],
        |g, v| {
            let wv = g.constant(w.clone());
            let y = g.grouped_contract(wv, v[0])?;
            Ok(g.scale(y, 0.5))
        },
    );
    assert!(r.max_rel_error < 1e-8, "{}", r.max_rel_error);
}

#[test]
fn grouped_contract_both_arguments() {
    check_points(
        "grouped_contract",
        |r| vec![rand_tensor(r, &[2, 3], -1.0, 1.0), rand_tensor(r, &[2, 3, 2, 2], -1.0, 1.0)],
        |g, v| g.grouped_contract(v[0], v[1]),
    );
}

#[test]
fn conv2d_gradients() {
    check_points(
        "conv2d",
        |r| {
            vec![
                rand_tensor(r, &[2, 4, 5], -1.0, 1.0),
                rand_tensor(r, &[3, 2, 3, 3], -1.0, 1.0),
                rand_tensor(r, &[3], -1.0, 1.0),
            ]
        },
        |g, v| g.conv2d(v[0], v[1], Some(v[2])),
    );
    check_points(
        "conv2d k=1",
        |r| vec![rand_tensor(r, &[3, 2, 2], -1.0, 1.0), rand_tensor(r, &[2, 3, 1, 1], -1.0, 1.0)],
        |g, v| g.conv2d(v[0], v[1], None),
    );
    check_points(
        "conv2d k=5",
        |r| vec![rand_tensor(r, &[1, 6, 6], -1.0, 1.0), rand_tensor(r, &[2, 1, 5, 5], -1.0, 1.0)],
        |g, v| g.conv2d(v[0], v[1], None),
    );
}

#[test]
fn activations() {
    let r = check_points("relu", |r| vec![away_from_zero(r, &[12])], |g, v| Ok(g.relu(v[0])));
    assert_eq!(r.rejected, 0);
    check_points("leaky_relu", |r| vec![away_from_zero(r, &[12])], |g, v| Ok(g.leaky_relu(v[0], 0.1)));
    check_points("sigmoid", |r| vec![rand_tensor(r, &[6], -3.0, 3.0)], |g, v| Ok(g.sigmoid(v[0], 1.0)));
    check_points("sigmoid steep", |r| vec![rand_tensor(r, &[6], -0.5, 0.5)], |g, v| Ok(g.sigmoid(v[0], 10.0)));
}

#[test]
fn clamp_interior_points_pass_and_boundaries_are_filtered() {
    let r = check_points("clamp", |r| vec![rand_tensor(r, &[10], 0.01, 0.99)], |g, v| Ok(g.clamp(v[0], 0.0, 1.0)));
    assert_eq!(r.rejected, 0);
    // inputs sitting within eps of a boundary are rejected, not failed
    let inputs = vec![Tensor::new(vec![3], vec![1.0 - 1e-4, 0.5, 1e-4]).unwrap()];
    let rep = grad_check(|g, v| Ok(g.clamp(v[0], 0.0, 1.0)), &inputs, &GradCheckConfig::default()).unwrap();
    assert!(rep.passed);
    assert_eq!(rep.rejected, 2);
    assert_eq!(rep.checked, 1);
}

#[test]
fn separable_pattern_relaxed_and_straight_through() {
    check_points(
        "separable_pattern",
        |r| vec![rand_tensor(r, &[2, 8], -2.0, 2.0), rand_tensor(r, &[2, 8], -2.0, 2.0)],
        |g, v| g.separable_pattern(v[0], v[1], 1.0, false),
    );
    // Straight-through: the backward rule of the hard pattern equals the
    // relaxed gradient.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows = rand_tensor(&mut rng, &[2, 8], -2.0, 2.0);
    let cols = rand_tensor(&mut rng, &[2, 8], -2.0, 2.0);
    let cot = rand_tensor(&mut rng, &[2, 8, 8], -1.0, 1.0);
    let grads = |hard: bool| {
        let mut g = Graph::new();
        let r = g.param(rows.clone());
        let c = g.param(cols.clone());
        let p = g.separable_pattern(r, c, 2.0, hard).unwrap();
        let k = g.constant(cot.clone());
        let m = g.mul(p, k).unwrap();
        let l = g.sum(m);
        g.backward(l).unwrap();
        (g.grad(r).unwrap().clone(), g.grad(c).unwrap().clone(), g.value(p).clone())
    };
    let (rs, cs, soft) = grads(false);
    let (rh, ch, hard) = grads(true);
    assert_eq!(rs, rh);
    assert_eq!(cs, ch);
    assert!(hard.data().iter().all(|&v| v == 0.0 || v == 1.0));
    assert!(soft.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn rearrangements_and_concat() {
    check_points("pixel_shuffle", |r| vec![rand_tensor(r, &[8, 2, 3], -1.0, 1.0)], |g, v| g.pixel_shuffle(v[0], 2));
    check_points("space_to_depth", |r| vec![rand_tensor(r, &[2, 4, 6], -1.0, 1.0)], |g, v| g.space_to_depth(v[0], 2));
    check_points("swap_leading", |r| vec![rand_tensor(r, &[2, 3, 2], -1.0, 1.0)], |g, v| g.swap_leading(v[0]));
    check_points("reshape", |r| vec![rand_tensor(r, &[2, 3], -1.0, 1.0)], |g, v| g.reshape(v[0], &[3, 2]));
    check_points(
        "concat",
        |r| vec![rand_tensor(r, &[1, 2, 2], -1.0, 1.0), rand_tensor(r, &[2, 2, 2], -1.0, 1.0)],
        |g, v| g.concat(&[v[0], v[1]]),
    );
    check_points(
        "mse",
        |r| vec![rand_tensor(r, &[3, 2], -1.0, 1.0), rand_tensor(r, &[3, 2], -1.0, 1.0)],
        |g, v| g.mse(v[0], v[1]),
    );
}

#[test]
fn small_network_composition() {
    // conv -> relu -> pixel shuffle -> conv -> mse, checked end to end
    let reports: Vec<_> = (0..POINTS)
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(77 + p);
            let inputs = vec![
                rand_tensor(&mut rng, &[4, 2, 2], 0.0, 1.0),
                rand_tensor(&mut rng, &[8, 4, 3, 3], -0.5, 0.5),
                rand_tensor(&mut rng, &[8], -0.1, 0.1),
                rand_tensor(&mut rng, &[1, 2, 3, 3], -0.5, 0.5),
            ];
            let target = rand_tensor(&mut rng, &[1, 4, 4], 0.0, 1.0);
            let build = |g: &mut Graph<f64>, v: &[Var]| {
                let h = g.conv2d(v[0], v[1], Some(v[2]))?;
                let h = g.relu(h);
                let h = g.pixel_shuffle(h, 2)?;
                let o = g.conv2d(h, v[3], None)?;
                let t = g.constant(target.clone());
                g.mse(o, t)
            };
            grad_check(build, &inputs, &GradCheckConfig { seed: p, ..Default::default() }).unwrap()
        })
        .collect();
    let r = GradCheckReport::combine(reports);
    assert!(r.passed, "{:?}", r.worst);
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::from_fn(&[3, 8, 8], |_| rng.random_range(0.0..1.0)));
        let w = g.param(Tensor::from_fn(&[4, 3, 3, 3], |_| rng.random_range(-0.3..0.3)));
        let y = g.conv2d(x, w, None).unwrap();
        let y = g.relu(y);
        let t = g.constant(Tensor::zeros(&[4, 8, 8]));
        let l = g.mse(y, t).unwrap();
        g.backward(l).unwrap();
        (g.value(l).item().to_bits(), g.grad(w).unwrap().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn space_to_depth_undoes_pixel_shuffle(c in 1usize..3, h in 1usize..4, w in 1usize..4, r in 1usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_tensor(&mut rng, &[c * r * r, h, w], -1.0, 1.0);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let s = g.pixel_shuffle(xv, r).unwrap();
        prop_assert_eq!(g.shape(s), &[c, h * r, w * r]);
        let back = g.space_to_depth(s, r).unwrap();
        prop_assert_eq!(g.value(back), &x);
    }
}
