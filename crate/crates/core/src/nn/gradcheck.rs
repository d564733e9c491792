use super::{Module, ParamMut};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Relative error with a `1e-6` floor on the scale so that near-zero
/// gradients are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central differences of `f` at `x`.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let plus = f(&probe);
            probe[i] = x[i] - h;
            let minus = f(&probe);
            probe[i] = x[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Compares analytic parameter gradients against central differences.
///
/// `loss(model, with_grad)` must return the scalar loss and, when `with_grad`
/// is set, accumulate its gradient into the model. Any randomness inside
/// `loss` (dropout masks, latent noise) has to be reseeded on every call.
/// Returns the maximum relative error over all parameters.
pub fn grad_check<M: Module>(model: &mut M, mut loss: impl FnMut(&mut M, bool) -> f64) -> f64 {
    model.zero_grad();
    loss(model, true);
    let mut analytic = Vec::new();
    model.visit_params(&mut |p: ParamMut<'_>| analytic.push(p.grad.to_vec()));

    let mut worst: f64 = 0.0;
    let n_tensors = analytic.len();
    for t in 0..n_tensors {
        for i in 0..analytic[t].len() {
            let original = read_param(model, t, i);
            write_param(model, t, i, original + FD_STEP);
            let plus = loss(model, false);
            write_param(model, t, i, original - FD_STEP);
            let minus = loss(model, false);
            write_param(model, t, i, original);
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic[t][i], numeric));
        }
    }
    worst
}

fn read_param(model: &mut dyn Module, tensor: usize, idx: usize) -> f64 {
    let mut k = 0;
    let mut out = 0.0;
    model.visit_params(&mut |p: ParamMut<'_>| {
        if k == tensor {
            out = p.value[idx];
        }
        k += 1;
    });
    out
}

fn write_param(model: &mut dyn Module, tensor: usize, idx: usize, v: f64) {
    let mut k = 0;
    model.visit_params(&mut |p: ParamMut<'_>| {
        if k == tensor {
            p.value[idx] = v;
        }
        k += 1;
    });
}
