//! Central-difference verification of backpropagated gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::ModelGraph;
use crate::loss::Loss;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Number of parameters to compare (all of them if the model is smaller).
    pub samples: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-3,
            samples: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamError {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters skipped because a ±eps nudge flipped a relu or changed a
    /// pool winner, where a finite difference straddles a kink.
    pub skipped: usize,
    pub worst: Option<ParamError>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn loss_at(
    model: &mut ModelGraph<f64>,
    input: &Tensor<f64>,
    target: &Tensor<f64>,
    loss: Loss,
) -> Result<(f64, u64)> {
    let out = model.forward(input.clone())?;
    let (l, _) = loss.evaluate(&out, target)?;
    Ok((l, model.branch_signature()))
}

/// Compares backpropagated gradients of `loss(model(input), target)` with
/// central differences on randomly chosen parameters.
///
/// Parameters are restored bit-exactly afterwards; gradient buffers hold the
/// analytic gradient of this input.
pub fn grad_check(
    model: &mut ModelGraph<f64>,
    input: &Tensor<f64>,
    target: &Tensor<f64>,
    loss: Loss,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    model.zero_grad();
    let out = model.forward(input.clone())?;
    let base_sig = model.branch_signature();
    let (_, g) = loss.evaluate(&out, target)?;
    model.backward(g)?;

    // shuffled per tensor, then interleaved so small tensors get sampled too
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut per_tensor: Vec<Vec<usize>> = model
        .params()
        .iter()
        .map(|p| {
            let mut idx: Vec<usize> = (0..p.len()).collect();
            idx.shuffle(&mut rng);
            idx
        })
        .collect();
    let analytic_at = |model: &ModelGraph<f64>, ti: usize, i: usize| {
        model.params()[ti].grad().map_or(0.0, |g| g[i])
    };
    let mut order = Vec::new();
    let longest = per_tensor.iter().map(Vec::len).max().unwrap_or(0);
    for round in 0..longest {
        for (ti, idx) in per_tensor.iter_mut().enumerate() {
            if let Some(&i) = idx.get(round) {
                order.push((ti, i));
            }
        }
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
        worst: None,
    };
    for (ti, i) in order {
        if report.checked >= cfg.samples {
            break;
        }
        let analytic = analytic_at(model, ti, i);
        let orig = model.params()[ti].data()[i];
        model.params_mut()[ti].data_mut()[i] = orig + cfg.eps;
        let (plus, sig_plus) = loss_at(model, input, target, loss)?;
        model.params_mut()[ti].data_mut()[i] = orig - cfg.eps;
        let (minus, sig_minus) = loss_at(model, input, target, loss)?;
        model.params_mut()[ti].data_mut()[i] = orig;
        if sig_plus != base_sig || sig_minus != base_sig {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * cfg.eps);
        let rel = relative_error(analytic, numeric);
        report.checked += 1;
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = Some(ParamError {
                tensor: ti,
                index: i,
                analytic,
                numeric,
                rel_error: rel,
            });
        }
    }
    Ok(report)
}
