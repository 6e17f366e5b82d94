//! Central finite-difference audits of analytic gradients.

use crate::{AdError, Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub eps: f64,
    pub tolerance: f64,
    /// Gradients smaller than this in magnitude are compared absolutely.
    pub abs_floor: f64,
    /// Coordinates checked per input tensor; `None` checks all of them.
    pub coords_per_input: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { eps: 1e-3, tolerance: 1e-4, abs_floor: 1e-6, coords_per_input: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub input: usize,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates skipped because a ±eps step crossed a kink.
    pub rejected: usize,
    /// Checked coordinates whose analytic or numeric gradient exceeds the floor.
    pub nonzero: usize,
    pub max_rel_error: f64,
    pub worst: Option<ProbeResult>,
    pub passed: bool,
}

impl GradCheckReport {
    fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        self.rejected += other.rejected;
        self.nonzero += other.nonzero;
        if other.max_rel_error > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
            if other.worst.is_some() {
                self.worst = other.worst;
            }
        }
        self.passed = self.passed && other.passed;
    }

    /// Combines reports from several probe points.
    pub fn combine(reports: impl IntoIterator<Item = GradCheckReport>) -> GradCheckReport {
        let mut acc = GradCheckReport { passed: true, ..Default::default() };
        for r in reports {
            acc.merge(r);
        }
        acc
    }
}

pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences.
///
/// `build` receives one trainable leaf per entry of `inputs` and returns
/// the node to differentiate. Non-scalar outputs are contracted with a
/// fixed random cotangent so every output element participates.
pub fn grad_check<F>(build: F, inputs: &[Tensor<f64>], cfg: &GradCheckConfig) -> Result<GradCheckReport, AdError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, AdError>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cotangent: Option<Tensor<f64>> = None;

    let evaluate = |point: &[Tensor<f64>], cot: &mut Option<Tensor<f64>>, rng: &mut ChaCha8Rng| {
        let mut g = Graph::new();
        let vars: Vec<Var> = point.iter().map(|t| g.param(t.clone())).collect();
        let mut out = build(&mut g, &vars)?;
        if g.value(out).len() != 1 {
            let shape = g.shape(out).to_vec();
            let r = cot
                .get_or_insert_with(|| Tensor::from_fn(&shape, |_| rng.random_range(-1.0..1.0)))
                .clone();
            let rv = g.constant(r);
            let prod = g.mul(out, rv)?;
            out = g.sum(prod);
        }
        Ok::<_, AdError>((g, vars, out))
    };

    let (mut g, vars, out) = evaluate(inputs, &mut cotangent, &mut rng)?;
    g.backward(out)?;
    let base_sig = g.kink_signature();
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let mut report = GradCheckReport { passed: true, ..Default::default() };
    for (idx, input) in inputs.iter().enumerate() {
        let coords: Vec<usize> = match cfg.coords_per_input {
            Some(n) if n < input.len() => (0..n).map(|_| rng.random_range(0..input.len())).collect(),
            _ => (0..input.len()).collect(),
        };
        for coord in coords {
            let mut shifted = inputs.to_vec();
            let orig = input.data()[coord];
            shifted[idx].data_mut()[coord] = orig + cfg.eps;
            let (gp, _, op) = evaluate(&shifted, &mut cotangent, &mut rng)?;
            shifted[idx].data_mut()[coord] = orig - cfg.eps;
            let (gm, _, om) = evaluate(&shifted, &mut cotangent, &mut rng)?;
            if gp.kink_signature() != base_sig || gm.kink_signature() != base_sig {
                report.rejected += 1;
                continue;
            }
            let numeric = (gp.value(op).item() - gm.value(om).item()) / (2.0 * cfg.eps);
            let a = analytic[idx].data()[coord];
            let e = rel_error(a, numeric, cfg.abs_floor);
            report.checked += 1;
            if a.abs().max(numeric.abs()) > cfg.abs_floor {
                report.nonzero += 1;
            }
            if e > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(e);
                report.worst = Some(ProbeResult { input: idx, coord, analytic: a, numeric, rel_error: e });
            }
            if e > cfg.tolerance {
                report.passed = false;
            }
        }
    }
    Ok(report)
}
