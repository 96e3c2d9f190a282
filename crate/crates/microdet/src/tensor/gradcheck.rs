//! Central-finite-difference gradient verification.

use super::{Tape, Tensor};
use crate::{Error, Result, Rng};

/// Result of a gradient check: the worst coordinate and its relative error.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// (input index, flat coordinate) of the worst disagreement.
    pub worst: (usize, usize),
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

/// Checks the analytic gradient of a scalar-valued closure against central
/// finite differences, for every coordinate of every input.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-12)`. The closure must be
/// deterministic; it is re-evaluated `2 * numel` times per input.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], eps: f64) -> Result<GradCheck>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    for t in inputs {
        t.zero_grad();
    }
    let analytic: Vec<Vec<f64>> = {
        let tape = Tape::new();
        for t in inputs {
            tape.watch(t);
        }
        let y = f(inputs)?;
        if y.numel() != 1 {
            return Err(Error::NonScalarLoss { numel: y.numel() });
        }
        if !y.item().is_finite() {
            return Err(Error::NonFinite {
                context: "grad_check forward value".into(),
            });
        }
        y.backward()?;
        inputs
            .iter()
            .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
            .collect()
        // tape dropped here: finite-difference evaluations below run untracked
    };

    let mut check = GradCheck {
        max_rel_err: 0.0,
        worst: (0, 0),
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
    };
    for (ti, t) in inputs.iter().enumerate() {
        for i in 0..t.numel() {
            let orig = t.with_data(|d| d[i]);
            t.update_data(|d| d[i] = orig + eps);
            let y_plus = f(inputs)?.item();
            t.update_data(|d| d[i] = orig - eps);
            let y_minus = f(inputs)?.item();
            t.update_data(|d| d[i] = orig);
            if !y_plus.is_finite() || !y_minus.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("grad_check probe at input {ti}, coord {i}"),
                });
            }
            let numeric = (y_plus - y_minus) / (2.0 * eps);
            let a = analytic[ti][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            if rel > check.max_rel_err {
                check.max_rel_err = rel;
                check.worst = (ti, i);
                check.analytic_at_worst = a;
                check.numeric_at_worst = numeric;
            }
        }
    }
    Ok(check)
}

/// [`grad_check`] over uniformly drawn inputs in [-1, 1).
pub fn grad_check_seeded<F>(f: F, shapes: &[&[usize]], eps: f64, seed: u64) -> Result<GradCheck>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let mut rng = Rng::new(seed);
    let inputs: Vec<Tensor<f64>> = shapes
        .iter()
        .map(|s| {
            let t = Tensor::rand_uniform(s, -1.0, 1.0, &mut rng);
            Tensor::var(s, t.to_vec()).expect("shape/data agree")
        })
        .collect();
    grad_check(f, &inputs, eps)
}
